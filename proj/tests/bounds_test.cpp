#include <gtest/gtest.h>

#include <vector>

#include "catebounds/bounds.hpp"
#include "catebounds/philox.hpp"

using namespace catebounds;

namespace {

NuisancePoint random_point(RandomStream& rs, int num_envs, int num_treat) {
    double lo = rs.uniform(-3.0, 1.0);
    double hi = lo + rs.uniform(0.5, 4.0);
    Interval support(lo, hi);
    Eigen::MatrixXd pi(num_envs, num_treat), mu(num_envs, num_treat);
    for (int e = 0; e < num_envs; ++e) {
        double sum = 0.0;
        for (int a = 0; a < num_treat; ++a) {
            pi(e, a) = rs.uniform(1e-3, 1.0);
            sum += pi(e, a);
        }
        for (int a = 0; a < num_treat; ++a) {
            pi(e, a) /= sum;
            mu(e, a) = rs.uniform(lo, hi);
        }
    }
    return NuisancePoint(std::move(pi), std::move(mu), support);
}

}  // namespace

TEST(ManskiResponseBounds, FullOverlapCollapses) {
    ResponseBounds rb = manski_response_bounds(1.0, 0.7, Interval(0, 1));
    EXPECT_DOUBLE_EQ(rb.lo, 0.7);
    EXPECT_DOUBLE_EQ(rb.hi, 0.7);
}

TEST(ManskiResponseBounds, NoInformationGivesSupport) {
    ResponseBounds rb = manski_response_bounds(0.0, 123.0, Interval(0, 1));
    EXPECT_DOUBLE_EQ(rb.lo, 0.0);
    EXPECT_DOUBLE_EQ(rb.hi, 1.0);
}

TEST(ManskiResponseBounds, DirectEvaluation) {
    ResponseBounds rb = manski_response_bounds(0.8, 1.0, Interval(0, 2));
    EXPECT_NEAR(rb.lo, 0.8, 1e-12);
    EXPECT_NEAR(rb.hi, 1.2, 1e-12);
    EXPECT_NEAR(rb.width(), 0.2 * 2.0, 1e-12);
}

TEST(ManskiResponseBounds, RejectsBadPropensity) {
    EXPECT_THROW(manski_response_bounds(1.5, 0.0, Interval(0, 1)), DomainError);
    EXPECT_THROW(manski_response_bounds(-0.1, 0.0, Interval(0, 1)), DomainError);
}

TEST(ManskiCateUpper, BinaryWidthIsSupportWidth) {
    Interval s(0, 1);
    double up = manski_cate_upper(0.5, 1.0, 0.5, 0.0, s);
    // lower bound = same expression with endpoints swapped
    double lo = 0.5 * 1.0 + 0.5 * s.lo - 0.5 * 0.0 - 0.5 * s.hi;
    EXPECT_DOUBLE_EQ(up, 1.0);
    EXPECT_DOUBLE_EQ(lo, 0.0);
    EXPECT_DOUBLE_EQ(up - lo, s.width());
}

TEST(ManskiCateUpper, DirectEvaluation) {
    EXPECT_DOUBLE_EQ(manski_cate_upper(1.0, 1.0, 0.0, 0.5, Interval(0, 1)), 1.0);
    EXPECT_NEAR(manski_cate_upper(0.9, 1.0, 0.9, 0.0, Interval(0, 2)), 1.1, 1e-12);
}

TEST(PairwiseBound, DirectEvaluationAndCertificate) {
    Eigen::MatrixXd pi(2, 2), mu(2, 2);
    pi << 0.9, 0.1,   // env 0: pi_0 = 0.9 (control leg)
          0.1, 0.9;   // env 1: pi_1 = 0.9 (treated leg)
    mu << 0.0, 0.5,
          0.5, 1.0;
    NuisancePoint p(pi, mu, Interval(0, 1));
    BoundPair b = pairwise_bound(p, 1, 0);
    EXPECT_NEAR(b.lower, 0.8, 1e-12);
    EXPECT_NEAR(b.upper, 1.0, 1e-12);
    EXPECT_NEAR(b.width(), tightness_certificate(0.9, 0.9, p.support), 1e-12);
}

TEST(PairwiseBound, HalfPropensitiesGiveSupportWidth) {
    Eigen::MatrixXd pi(2, 2), mu(2, 2);
    pi << 0.5, 0.5, 0.5, 0.5;
    mu << 0.3, 0.9, 0.2, 0.6;
    NuisancePoint p(pi, mu, Interval(0, 1));
    EXPECT_NEAR(pairwise_bound(p, 1, 0).width(), 1.0, 1e-12);
}

TEST(PairwiseBound, SameEnvReducesToManski) {
    RandomStream rs(21);
    for (int rep = 0; rep < 100; ++rep) {
        NuisancePoint p = random_point(rs, 3, 2);
        for (int e = 0; e < 3; ++e) {
            BoundPair b = pairwise_bound(p, e, e);
            double manski = manski_cate_upper(p.pi(e, 1), p.mu(e, 1), p.pi(e, 0), p.mu(e, 0),
                                              p.support);
            EXPECT_NEAR(b.upper, manski, 1e-10);
        }
    }
}

TEST(TightnessCertificate, BoundaryCases) {
    EXPECT_DOUBLE_EQ(tightness_certificate(0.4, 0.6, Interval(0, 1)), 1.0);
    EXPECT_DOUBLE_EQ(tightness_certificate(1.0, 1.0, Interval(0, 1)), 0.0);
    EXPECT_NEAR(tightness_certificate(0.9, 0.9, Interval(0, 2)), 0.4, 1e-12);
}

TEST(Combine, MinMaxOverPairs) {
    std::vector<BoundPair> pairs = {
        {0, 0, 0.0, 1.0}, {0, 1, 0.2, 0.6}, {1, 0, -0.5, 0.9}, {1, 1, 0.1, 0.8}};
    BoundMatrix m = combine(pairs, 2);
    EXPECT_DOUBLE_EQ(m.combined_upper, 0.6);
    EXPECT_DOUBLE_EQ(m.combined_lower, 0.2);
    EXPECT_EQ(m.argmin_pair, (std::pair<int, int>{0, 1}));
    EXPECT_EQ(m.argmax_pair, (std::pair<int, int>{0, 1}));
    EXPECT_FALSE(m.crossed);
}

TEST(Combine, SingleEnvironmentDegenerate) {
    std::vector<BoundPair> pairs = {{0, 0, -0.3, 0.7}};
    BoundMatrix m = combine(pairs, 1);
    EXPECT_DOUBLE_EQ(m.combined_upper, 0.7);
    EXPECT_DOUBLE_EQ(m.combined_lower, -0.3);
}

TEST(Combine, MissingPairFails) {
    std::vector<BoundPair> pairs = {{0, 0, 0.0, 1.0}, {0, 1, 0.2, 0.6}, {1, 0, -0.5, 0.9}};
    EXPECT_THROW(combine(pairs, 2), ValidationError);
}

TEST(Combine, CrossedIsFlaggedNotClamped) {
    std::vector<BoundPair> pairs = {
        {0, 0, 0.9, 1.0}, {0, 1, 0.2, 0.3}, {1, 0, 0.0, 2.0}, {1, 1, 0.1, 0.8}};
    BoundMatrix m = combine(pairs, 2);
    EXPECT_TRUE(m.crossed);
    EXPECT_DOUBLE_EQ(m.combined_lower, 0.9);
    EXPECT_DOUBLE_EQ(m.combined_upper, 0.3);
}

TEST(Combine, TiesBreakLexicographically) {
    std::vector<BoundPair> pairs = {
        {0, 0, 0.0, 0.5}, {0, 1, 0.0, 0.5}, {1, 0, 0.0, 0.5}, {1, 1, 0.0, 0.5}};
    BoundMatrix m = combine(pairs, 2);
    EXPECT_EQ(m.argmin_pair, (std::pair<int, int>{0, 0}));
    EXPECT_EQ(m.argmax_pair, (std::pair<int, int>{0, 0}));
}

TEST(NuisancePoint, ClampsResponseSurfacesWithFlag) {
    Eigen::MatrixXd pi(1, 2), mu(1, 2);
    pi << 0.5, 0.5;
    mu << -0.5, 1.5;
    NuisancePoint p(pi, mu, Interval(0, 1));
    EXPECT_TRUE(p.mu_clamped);
    EXPECT_DOUBLE_EQ(p.mu(0, 0), 0.0);
    EXPECT_DOUBLE_EQ(p.mu(0, 1), 1.0);
}

TEST(NuisancePoint, RejectsNonSimplexRows) {
    Eigen::MatrixXd pi(1, 2), mu(1, 2);
    pi << 0.5, 0.6;
    mu << 0.2, 0.8;
    EXPECT_THROW(NuisancePoint(pi, mu, Interval(0, 1)), ValidationError);
}

TEST(ScopedCombine, RestrictsToWithinAndCross) {
    std::vector<BoundPair> pairs = {
        {0, 0, 0.0, 1.0}, {0, 1, 0.2, 0.6}, {1, 0, -0.5, 0.9}, {1, 1, 0.1, 0.8}};
    BoundMatrix m = combine(pairs, 2);
    ScopedBounds within = combine_scoped(m, PairScope::within);
    EXPECT_DOUBLE_EQ(within.upper, 0.8);
    EXPECT_DOUBLE_EQ(within.lower, 0.1);
    ScopedBounds cross = combine_scoped(m, PairScope::cross);
    EXPECT_DOUBLE_EQ(cross.upper, 0.6);
    EXPECT_DOUBLE_EQ(cross.lower, 0.2);
    ScopedBounds all = combine_scoped(m, PairScope::all);
    EXPECT_DOUBLE_EQ(all.upper, m.combined_upper);
    EXPECT_DOUBLE_EQ(all.lower, m.combined_lower);
}

// Property suite over random valid nuisance points: certificate identity,
// single-environment reduction, extremal combination, swap/transpose negation,
// and monotonicity of the width in the propensities.
TEST(BoundAlgebraProperties, RandomNuisancePoints) {
    RandomStream rs(2024);
    const int reps = 10000;
    for (int rep = 0; rep < reps; ++rep) {
        const int envs = 1 + static_cast<int>(rs.below(3));
        const int treats = 2 + static_cast<int>(rs.below(3));
        NuisancePoint p = random_point(rs, envs, treats);
        const int a1 = static_cast<int>(rs.below(treats));
        int a2 = static_cast<int>(rs.below(treats));
        const int e = static_cast<int>(rs.below(envs));
        const int j = static_cast<int>(rs.below(envs));

        BoundPair b = pairwise_bound(p, e, j, a1, a2);
        // width equals the certificate exactly
        double cert = tightness_certificate(p.pi(e, a1), p.pi(j, a2), p.support);
        ASSERT_NEAR(b.width(), cert, 1e-10 * std::max(1.0, std::abs(cert)));
        ASSERT_GE(b.upper, b.lower);

        // swap/transpose negation: upper(e,j,a1,a2) == -lower(j,e,a2,a1)
        BoundPair t = pairwise_bound(p, j, e, a2, a1);
        ASSERT_NEAR(b.upper, -t.lower, 1e-10);
        ASSERT_NEAR(b.lower, -t.upper, 1e-10);

        // e == j reduces to the single-environment bound
        BoundPair same = pairwise_bound(p, e, e, a1, a2);
        ASSERT_NEAR(same.upper,
                    manski_cate_upper(p.pi(e, a1), p.mu(e, a1), p.pi(e, a2), p.mu(e, a2), p.support),
                    1e-10);

        // combined bounds are extremal over pairs
        BoundMatrix m = bound_matrix_from(p, a1, a2);
        for (const BoundPair& q : m.pairs) {
            ASSERT_LE(m.combined_upper, q.upper + 1e-12);
            ASSERT_GE(m.combined_lower, q.lower - 1e-12);
            ASSERT_LE(m.combined_width(), q.width() + 1e-12);
        }

        // raising pi(e, a1) with mu fixed never widens the pair bound
        Eigen::MatrixXd pi2 = p.pi;
        double bump = rs.uniform(0.0, 1.0 - pi2(e, a1));
        double scale = (pi2.row(e).sum() - pi2(e, a1) - bump) /
                       std::max(1e-300, pi2.row(e).sum() - pi2(e, a1));
        for (int a = 0; a < treats; ++a)
            pi2(e, a) = (a == a1) ? pi2(e, a1) + bump : pi2(e, a) * scale;
        NuisancePoint p2(pi2, p.mu, p.support);
        ASSERT_LE(pairwise_bound(p2, e, j, a1, a2).width(), b.width() + 1e-9);
        (void)a2;
    }
}
