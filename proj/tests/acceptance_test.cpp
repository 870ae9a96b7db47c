// End-to-end acceptance suite. Each test prints one PASS/FAIL line; the
// expensive benchmark run is shared by the criteria that consume it.

#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include "catebounds/eval.hpp"
#include "catebounds/pipeline.hpp"

using namespace catebounds;
namespace fs = std::filesystem;

namespace {

struct CriterionGuard {
    int id;
    std::string title;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    ~CriterionGuard() {
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const bool ok = !::testing::Test::HasFailure();
        std::printf("[ACCEPTANCE] criterion %d (%s): %s (%.1f s)\n", id, title.c_str(),
                    ok ? "PASS" : "FAIL", secs);
        std::fflush(stdout);
    }
};

struct WindowAccumulator {
    double sum = 0.0, sumsq = 0.0;
    long n = 0;
    void add(double v) {
        sum += v;
        sumsq += v * v;
        ++n;
    }
    double mean() const { return sum / n; }
    double se() const {
        double var = (sumsq - sum * sum / n) / (n - 1.0);
        return std::sqrt(std::max(0.0, var) / n);
    }
};

// Environment model corrupted to a constant; everything else exact.
struct ConstantDelta : NuisanceProvider {
    const NuisanceProvider& base;
    explicit ConstantDelta(const NuisanceProvider& b) : base(b) {}
    int num_envs() const override { return base.num_envs(); }
    double mu(int e, int a, const Eigen::VectorXd& x, int f) const override {
        return base.mu(e, a, x, f);
    }
    double pi(int e, int a, const Eigen::VectorXd& x, int f) const override {
        return base.pi(e, a, x, f);
    }
    Eigen::VectorXd delta(const Eigen::VectorXd&, int) const override {
        Eigen::VectorXd d(2);
        d << 0.5, 0.5;
        return d;
    }
    double transformed_response(Side s, Leg l, int e, const Eigen::VectorXd& x,
                                int f) const override {
        return base.transformed_response(s, l, e, x, f);
    }
};

// Transformed responses corrupted to zero; environment model exact.
struct ZeroResponses : NuisanceProvider {
    const NuisanceProvider& base;
    explicit ZeroResponses(const NuisanceProvider& b) : base(b) {}
    int num_envs() const override { return base.num_envs(); }
    double mu(int e, int a, const Eigen::VectorXd& x, int f) const override {
        return base.mu(e, a, x, f);
    }
    double pi(int e, int a, const Eigen::VectorXd& x, int f) const override {
        return base.pi(e, a, x, f);
    }
    Eigen::VectorXd delta(const Eigen::VectorXd& x, int f) const override {
        return base.delta(x, f);
    }
    double transformed_response(Side, Leg, int, const Eigen::VectorXd&, int) const override {
        return 0.0;
    }
};

// Shared benchmark run for criteria 3-5.
struct BenchmarkRun {
    RunConfig cfg;
    ReproduceResult result;
};

const BenchmarkRun& benchmark() {
    static const BenchmarkRun run = [] {
        BenchmarkRun r;
        r.cfg.out_dir = (fs::temp_directory_path() / "catebounds_acceptance" / "full").string();
        fs::remove_all(r.cfg.out_dir);
        r.result = cmd_reproduce(r.cfg);
        return r;
    }();
    return run;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

// Conditional Monte-Carlo means of every pseudo-outcome match the
// window-averaged quadrature-oracle pair bounds within 3 standard errors, for
// both sides, at five covariate points; the misspecified inverse-weighted
// learner fails somewhere (negative control).
TEST(Acceptance, Criterion1PseudoOutcomeIdentities) {
    CriterionGuard guard{1, "pseudo-outcome identity suite"};

    DgpConfig dcfg;
    dcfg.n = 1000000;
    dcfg.seed = 20240;
    const Interval support(-3.0, 4.0);
    const double h = 0.05;
    const std::vector<double> grid = {-0.8, -0.4, 0.0, 0.4, 0.8};
    const int e = 1, j = 0;

    Dataset data = sample_synthetic(dcfg);
    OracleNuisanceProvider oracle(dcfg, support);
    ConstantDelta bad_delta(oracle);
    ZeroResponses zero_r(oracle);

    // window membership per grid point
    std::vector<std::vector<int>> windows(grid.size());
    for (int i = 0; i < data.size(); ++i) {
        const double x = data.covariates()(i, 0);
        for (std::size_t g = 0; g < grid.size(); ++g)
            if (std::abs(x - grid[g]) < h) windows[g].push_back(i);
    }

    auto pair_bound = [&](double t, Side side) {
        OracleNuisances nu = oracle_nuisances(dcfg, t);
        BoundPair p = pairwise_bound(NuisancePoint(nu.pi, nu.mu, support), e, j);
        return side == Side::upper ? p.upper : p.lower;
    };
    auto wb_bound = [&](double t, int env, Side side) {
        OracleNuisances nu = oracle_nuisances(dcfg, t);
        BoundPair p = pairwise_bound(NuisancePoint(nu.pi, nu.mu, support), env, env);
        return side == Side::upper ? p.upper : p.lower;
    };
    auto delta_of = [&](double t, int env) { return oracle_nuisances(dcfg, t).delta(env); };

    int ipw_bad_failures = 0;
    for (std::size_t g = 0; g < grid.size(); ++g) {
        const double x0 = grid[g];
        for (Side side : {Side::upper, Side::lower}) {
            // window-averaged targets (X is uniform inside the window)
            const double cb_target =
                simpson(x0 - h, x0 + h, [&](double t) { return pair_bound(t, side); }, 41) /
                (2 * h);

            WindowAccumulator ra, ipw, dr_bad_delta, dr_zero_r, ipw_bad;
            WindowAccumulator wb_acc[2];
            for (int i : windows[g]) {
                ra.add(cb_ra_pseudo(data, i, oracle, e, j, side, support));
                ipw.add(cb_ipw_pseudo(data, i, oracle, e, j, side, support));
                dr_bad_delta.add(cb_dr_pseudo(data, i, bad_delta, e, j, side, support));
                dr_zero_r.add(cb_dr_pseudo(data, i, zero_r, e, j, side, support));
                ipw_bad.add(cb_ipw_pseudo(data, i, bad_delta, e, j, side, support));
                for (int env = 0; env < 2; ++env) {
                    auto v = wb_pseudo(data, i, env, side, support);
                    if (v) wb_acc[env].add(*v);
                }
            }

            EXPECT_NEAR(ra.mean(), cb_target, 3.0 * ra.se())
                << "regression-adjusted, " << to_string(side) << " at x=" << x0;
            EXPECT_NEAR(ipw.mean(), cb_target, 3.0 * ipw.se())
                << "inverse-weighted, " << to_string(side) << " at x=" << x0;
            EXPECT_NEAR(dr_bad_delta.mean(), cb_target, 3.0 * dr_bad_delta.se())
                << "doubly robust with corrupted environment model, " << to_string(side)
                << " at x=" << x0;
            EXPECT_NEAR(dr_zero_r.mean(), cb_target, 3.0 * dr_zero_r.se())
                << "doubly robust with corrupted responses, " << to_string(side)
                << " at x=" << x0;
            if (std::abs(ipw_bad.mean() - cb_target) > 3.0 * ipw_bad.se()) ++ipw_bad_failures;

            for (int env = 0; env < 2; ++env) {
                const double num = simpson(
                    x0 - h, x0 + h,
                    [&](double t) { return delta_of(t, env) * wb_bound(t, env, side); }, 41);
                const double den =
                    simpson(x0 - h, x0 + h, [&](double t) { return delta_of(t, env); }, 41);
                EXPECT_NEAR(wb_acc[env].mean(), num / den, 3.0 * wb_acc[env].se())
                    << "within-bound env " << env << ", " << to_string(side) << " at x=" << x0;
            }
        }
    }
    // misspecified inverse weighting must be visibly inconsistent somewhere
    EXPECT_GE(ipw_bad_failures, 1) << "negative control did not trip";
    EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - guard.start)
                  .count(),
              120.0);
}

// Oracle bounds contain the oracle effect and every pair width equals the
// certificate, across a dense grid and both generator variants.
TEST(Acceptance, Criterion2OracleValidityAndTightness) {
    CriterionGuard guard{2, "oracle validity and tightness"};
    const Interval support(-4.0, 5.0);
    for (DgpVariant variant : {DgpVariant::dataset1, DgpVariant::dataset2}) {
        DgpConfig cfg;
        cfg.variant = variant;
        OracleTable table = oracle_table(cfg, linspace(-1.0, 1.0, 181), support);
        for (std::size_t i = 0; i < table.grid.size(); ++i) {
            const OracleNuisances& nu = table.rows[i];
            const BoundMatrix& bm = table.bounds[i];
            ASSERT_LE(bm.combined_lower, nu.tau + 1e-8);
            ASSERT_GE(bm.combined_upper, nu.tau - 1e-8);
            for (int e = 0; e < 2; ++e)
                for (int j = 0; j < 2; ++j)
                    ASSERT_NEAR(bm.pair(e, j).width(),
                                tightness_certificate(nu.pi(e, 1), nu.pi(j, 0), support), 1e-8);
        }
    }
    EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - guard.start)
                  .count(),
              5.0);
}

// Full benchmark: every method on both datasets stays within its reference
// band and beats the constant [s1, s2] estimator.
TEST(Acceptance, Criterion3BenchmarkBands) {
    CriterionGuard guard{3, "benchmark reproduction bands"};
    const BenchmarkRun& run = benchmark();
    ASSERT_EQ(run.result.cells.size(), 14u);
    for (const ComparisonCell& c : run.result.cells) {
        EXPECT_LE(c.rmse_pooled, c.band) << c.method << " on " << c.dataset;
        EXPECT_LT(c.rmse_pooled, c.vacuous_rmse)
            << c.method << " on " << c.dataset << " does not beat the vacuous baseline";
    }
    EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - guard.start)
                  .count(),
              1200.0);
}

// Cross-environment structure: combined bounds are tighter at the covariate
// border than at the center, and the tightest bounds at the border come from
// cross-environment pairs.
TEST(Acceptance, Criterion4BorderTightening) {
    CriterionGuard guard{4, "border tightening and cross-pair provenance"};
    const BenchmarkRun& run = benchmark();
    for (DgpVariant variant : {DgpVariant::dataset1, DgpVariant::dataset2}) {
        RunConfig sub = run.cfg;
        sub.source.variant = variant;
        sub.out_dir = (fs::path(run.cfg.out_dir) / to_string(variant)).string();
        ExportTable t = build_export_table(sub, "cb-dr");

        double border_width = 0.0, center_width = 0.0;
        double oracle_border = 0.0, oracle_center = 0.0;
        int border_n = 0, center_n = 0, border_cross = 0;
        for (std::size_t i = 0; i < t.grid.size(); ++i) {
            const double x = t.grid[i];
            const double est_w = t.est_comb_upper[i].mean - t.est_comb_lower[i].mean;
            const double orc_w = t.oracle_comb_upper[i].mean - t.oracle_comb_lower[i].mean;
            if (std::abs(x) >= 0.7) {
                border_width += est_w;
                oracle_border += orc_w;
                ++border_n;
                if (t.est_tight_is_cross(i)) ++border_cross;
            } else if (std::abs(x) <= 0.2) {
                center_width += est_w;
                oracle_center += orc_w;
                ++center_n;
            }
        }
        border_width /= border_n;
        center_width /= center_n;
        oracle_border /= border_n;
        oracle_center /= center_n;
        EXPECT_LT(border_width, center_width) << to_string(variant);
        EXPECT_LT(oracle_border, oracle_center) << to_string(variant);
        EXPECT_GE(static_cast<double>(border_cross) / border_n, 0.9) << to_string(variant);
    }
}

// Estimated combined bounds from the two-stage methods cover the oracle
// effect on nearly all test points, with almost no crossings.
TEST(Acceptance, Criterion5CoverageAndCrossing) {
    CriterionGuard guard{5, "coverage and crossing rates"};
    const BenchmarkRun& run = benchmark();
    for (const SummaryRow& row : run.result.summary) {
        if (row.method == "wb-naive" || row.method == "cb-naive") continue;  // plug-in rows
        EXPECT_GE(row.all_scope.mean.coverage, 0.95)
            << row.method << " on " << row.dataset;
        EXPECT_LE(row.all_scope.mean.crossing_rate, 0.02)
            << row.method << " on " << row.dataset;
    }
}

// The smoke benchmark is bit-reproducible: identical configs give
// byte-identical summary CSVs in independent output directories.
TEST(Acceptance, Criterion6QuickReproduceDeterminism) {
    CriterionGuard guard{6, "smoke reproduce determinism"};
    const fs::path base = fs::temp_directory_path() / "catebounds_acceptance";
    RunConfig a, b;
    a.quick = b.quick = true;
    a.out_dir = (base / "quick_a").string();
    b.out_dir = (base / "quick_b").string();
    fs::remove_all(a.out_dir);
    fs::remove_all(b.out_dir);
    ReproduceResult ra = cmd_reproduce(a);
    ReproduceResult rb = cmd_reproduce(b);
    EXPECT_EQ(ra.config_hash, rb.config_hash);
    const std::string sa = slurp(fs::path(a.out_dir) / "summary.csv");
    const std::string sb = slurp(fs::path(b.out_dir) / "summary.csv");
    ASSERT_FALSE(sa.empty());
    EXPECT_EQ(sa, sb);
    EXPECT_EQ(slurp(fs::path(a.out_dir) / "comparison.csv"),
              slurp(fs::path(b.out_dir) / "comparison.csv"));
}

// Algebraic property suite over random valid nuisance points.
TEST(Acceptance, Criterion7BoundAlgebraProperties) {
    CriterionGuard guard{7, "bound-algebra property suite"};
    RandomStream rs(777);
    for (int rep = 0; rep < 10000; ++rep) {
        const int envs = 1 + static_cast<int>(rs.below(3));
        const int treats = 2 + static_cast<int>(rs.below(2));
        double lo = rs.uniform(-2.0, 1.0);
        Interval support(lo, lo + rs.uniform(0.5, 3.0));
        Eigen::MatrixXd pi(envs, treats), mu(envs, treats);
        for (int e = 0; e < envs; ++e) {
            double sum = 0.0;
            for (int a = 0; a < treats; ++a) {
                pi(e, a) = rs.uniform(1e-3, 1.0);
                sum += pi(e, a);
            }
            for (int a = 0; a < treats; ++a) {
                pi(e, a) /= sum;
                mu(e, a) = rs.uniform(support.lo, support.hi);
            }
        }
        NuisancePoint p(pi, mu, support);
        const int a1 = static_cast<int>(rs.below(treats));
        const int a2 = static_cast<int>(rs.below(treats));
        const int e = static_cast<int>(rs.below(envs));
        const int j = static_cast<int>(rs.below(envs));

        BoundPair b = pairwise_bound(p, e, j, a1, a2);
        ASSERT_NEAR(b.width(), tightness_certificate(p.pi(e, a1), p.pi(j, a2), support), 1e-10);

        BoundPair same = pairwise_bound(p, e, e, a1, a2);
        ASSERT_NEAR(same.upper,
                    manski_cate_upper(p.pi(e, a1), p.mu(e, a1), p.pi(e, a2), p.mu(e, a2),
                                      support),
                    1e-10);

        BoundPair t = pairwise_bound(p, j, e, a2, a1);
        ASSERT_NEAR(b.upper, -t.lower, 1e-10);
        ASSERT_NEAR(b.lower, -t.upper, 1e-10);

        BoundMatrix m = bound_matrix_from(p, a1, a2);
        for (const BoundPair& q : m.pairs) {
            ASSERT_LE(m.combined_upper, q.upper + 1e-12);
            ASSERT_GE(m.combined_lower, q.lower - 1e-12);
        }
    }
    EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - guard.start)
                  .count(),
              5.0);
}
