#pragma once

// Population-level bound algebra for treatment effects across environments:
// support-based response bounds, pairwise cross-environment bounds, their
// min/max combination, and the width certificate. Everything here is a pure
// function of propensities, response surfaces, and the outcome support.

#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "catebounds/common.hpp"
#include "catebounds/interval.hpp"

namespace catebounds {

// Nuisance values at a single covariate point. pi rows (one per environment)
// are distributions over the treatment set; mu entries are clamped to the
// support on construction, with a flag recording whether clamping occurred.
struct NuisancePoint {
    Eigen::MatrixXd pi;  // env x treatment
    Eigen::MatrixXd mu;  // env x treatment
    Interval support;
    bool mu_clamped = false;

    NuisancePoint(Eigen::MatrixXd pi_, Eigen::MatrixXd mu_, Interval support_)
        : pi(std::move(pi_)), mu(std::move(mu_)), support(support_) {
        if (pi.rows() != mu.rows() || pi.cols() != mu.cols())
            throw ValidationError("pi and mu must have matching shapes");
        if (pi.rows() < 1 || pi.cols() < 2)
            throw ValidationError("need >= 1 environment and >= 2 treatments");
        for (int e = 0; e < pi.rows(); ++e) {
            double row_sum = 0.0;
            for (int a = 0; a < pi.cols(); ++a) {
                double p = pi(e, a);
                if (!is_finite(p) || p < -1e-12 || p > 1.0 + 1e-12)
                    throw DomainError("propensity out of [0,1] at env " + std::to_string(e) +
                                      ", treatment " + std::to_string(a));
                row_sum += p;
            }
            if (std::abs(row_sum - 1.0) > 1e-8)
                throw ValidationError("propensity row for env " + std::to_string(e) +
                                      " sums to " + std::to_string(row_sum) + ", expected 1");
        }
        for (int e = 0; e < mu.rows(); ++e) {
            for (int a = 0; a < mu.cols(); ++a) {
                if (!is_finite(mu(e, a)))
                    throw DomainError("non-finite response surface at env " + std::to_string(e));
                if (!support.contains(mu(e, a))) {
                    mu(e, a) = support.clamp(mu(e, a));
                    mu_clamped = true;
                }
            }
        }
    }

    int num_envs() const { return static_cast<int>(pi.rows()); }
    int num_treatments() const { return static_cast<int>(pi.cols()); }
};

// Envelope of a response surface; collapses to a point under full overlap
// (pi == 1), so this is not an outcome-support Interval.
struct ResponseBounds {
    double lo = 0.0;
    double hi = 0.0;
    double width() const { return hi - lo; }
};

// [pi*mu + (1-pi)*s1, pi*mu + (1-pi)*s2]: the support-based envelope of an
// oracle response surface observed with propensity pi.
inline ResponseBounds manski_response_bounds(double pi_a, double mu_a, const Interval& support) {
    if (!is_finite(pi_a) || pi_a < 0.0 || pi_a > 1.0)
        throw DomainError("propensity must lie in [0,1], got " + std::to_string(pi_a));
    if (!is_finite(mu_a)) throw DomainError("response surface value must be finite");
    const double base = pi_a * mu_a;
    const double slack = 1.0 - pi_a;
    return ResponseBounds{base + slack * support.lo, base + slack * support.hi};
}

// Single-environment upper bound on the effect of a1 versus a2.
inline double manski_cate_upper(double pi_a1, double mu_a1, double pi_a2, double mu_a2,
                                const Interval& support) {
    for (double p : {pi_a1, pi_a2})
        if (!is_finite(p) || p < 0.0 || p > 1.0)
            throw DomainError("propensity must lie in [0,1], got " + std::to_string(p));
    return pi_a1 * mu_a1 + (1.0 - pi_a1) * support.hi - pi_a2 * mu_a2 -
           (1.0 - pi_a2) * support.lo;
}

// Certified width of the (e, j) pair bound: (s2 - s1) * (2 - pi^e_a1 - pi^j_a2).
inline double tightness_certificate(double pi_e_a1, double pi_j_a2, const Interval& support) {
    for (double p : {pi_e_a1, pi_j_a2})
        if (!is_finite(p) || p < 0.0 || p > 1.0)
            throw DomainError("propensity must lie in [0,1], got " + std::to_string(p));
    return support.width() * (2.0 - pi_e_a1 - pi_j_a2);
}

struct BoundPair {
    int e = 0;
    int j = 0;
    double lower = 0.0;
    double upper = 0.0;

    double width() const { return upper - lower; }
};

// Bound on tau_{a1,a2}(x) combining environment e for treatment a1 with
// environment j for treatment a2.
inline BoundPair pairwise_bound(const NuisancePoint& point, int e, int j, int a1 = 1, int a2 = 0) {
    if (e < 0 || e >= point.num_envs() || j < 0 || j >= point.num_envs())
        throw DomainError("environment index out of range");
    if (a1 < 0 || a1 >= point.num_treatments() || a2 < 0 || a2 >= point.num_treatments())
        throw DomainError("treatment index out of range");
    const double pe = point.pi(e, a1), me = point.mu(e, a1);
    const double pj = point.pi(j, a2), mj = point.mu(j, a2);
    const Interval& s = point.support;
    BoundPair out;
    out.e = e;
    out.j = j;
    out.upper = pe * me + (1.0 - pe) * s.hi - pj * mj - (1.0 - pj) * s.lo;
    out.lower = pe * me + (1.0 - pe) * s.lo - pj * mj - (1.0 - pj) * s.hi;
    return out;
}

struct BoundMatrix {
    int num_envs = 0;
    std::vector<BoundPair> pairs;  // row-major over (e, j)
    double combined_upper = 0.0;
    double combined_lower = 0.0;
    std::pair<int, int> argmin_pair{0, 0};  // attains combined_upper
    std::pair<int, int> argmax_pair{0, 0};  // attains combined_lower
    bool crossed = false;                   // combined_lower > combined_upper

    const BoundPair& pair(int e, int j) const { return pairs[e * num_envs + j]; }
    double combined_width() const { return combined_upper - combined_lower; }
};

// min/max combination over all (k+1)^2 pairs; ties broken by lexicographic
// (e, j). Crossed combinations (possible only with inconsistent estimated
// nuisances) are flagged, never clamped.
inline BoundMatrix combine(const std::vector<BoundPair>& pairs, int num_envs) {
    if (num_envs < 1) throw ValidationError("combine requires >= 1 environment");
    const int expected = num_envs * num_envs;
    if (static_cast<int>(pairs.size()) != expected)
        throw ValidationError("combine expects " + std::to_string(expected) + " pairs, got " +
                              std::to_string(pairs.size()));
    BoundMatrix m;
    m.num_envs = num_envs;
    m.pairs.resize(expected);
    std::vector<bool> seen(expected, false);
    for (const BoundPair& p : pairs) {
        if (p.e < 0 || p.e >= num_envs || p.j < 0 || p.j >= num_envs)
            throw ValidationError("pair (" + std::to_string(p.e) + "," + std::to_string(p.j) +
                                  ") out of range");
        const int slot = p.e * num_envs + p.j;
        if (seen[slot])
            throw ValidationError("duplicate pair (" + std::to_string(p.e) + "," +
                                  std::to_string(p.j) + ")");
        seen[slot] = true;
        m.pairs[slot] = p;
    }
    bool first = true;
    for (int e = 0; e < num_envs; ++e) {
        for (int j = 0; j < num_envs; ++j) {
            const BoundPair& p = m.pair(e, j);
            if (first || p.upper < m.combined_upper) {
                m.combined_upper = p.upper;
                m.argmin_pair = {e, j};
            }
            if (first || p.lower > m.combined_lower) {
                m.combined_lower = p.lower;
                m.argmax_pair = {e, j};
            }
            first = false;
        }
    }
    m.crossed = m.combined_lower > m.combined_upper;
    return m;
}

// All pairs of a nuisance point, combined.
inline BoundMatrix bound_matrix_from(const NuisancePoint& point, int a1 = 1, int a2 = 0) {
    std::vector<BoundPair> pairs;
    pairs.reserve(point.num_envs() * point.num_envs());
    for (int e = 0; e < point.num_envs(); ++e)
        for (int j = 0; j < point.num_envs(); ++j) pairs.push_back(pairwise_bound(point, e, j, a1, a2));
    return combine(pairs, point.num_envs());
}

// Restriction of the combination to within-environment (e == j) or
// cross-environment (e != j) pairs.
enum class PairScope { all, within, cross };

inline std::string to_string(PairScope s) {
    switch (s) {
        case PairScope::all: return "all";
        case PairScope::within: return "within";
        case PairScope::cross: return "cross";
    }
    return "?";
}

struct ScopedBounds {
    double upper = 0.0;
    double lower = 0.0;
    std::pair<int, int> argmin_pair{0, 0};
    std::pair<int, int> argmax_pair{0, 0};
    bool crossed = false;

    double width() const { return upper - lower; }
};

inline bool pair_in_scope(int e, int j, PairScope scope) {
    switch (scope) {
        case PairScope::all: return true;
        case PairScope::within: return e == j;
        case PairScope::cross: return e != j;
    }
    return false;
}

inline ScopedBounds combine_scoped(const BoundMatrix& m, PairScope scope) {
    if (scope == PairScope::cross && m.num_envs < 2)
        throw ValidationError("cross-environment scope requires >= 2 environments");
    ScopedBounds out;
    bool first = true;
    for (int e = 0; e < m.num_envs; ++e) {
        for (int j = 0; j < m.num_envs; ++j) {
            if (!pair_in_scope(e, j, scope)) continue;
            const BoundPair& p = m.pair(e, j);
            if (first || p.upper < out.upper) {
                out.upper = p.upper;
                out.argmin_pair = {e, j};
            }
            if (first || p.lower > out.lower) {
                out.lower = p.lower;
                out.argmax_pair = {e, j};
            }
            first = false;
        }
    }
    out.crossed = out.lower > out.upper;
    return out;
}

}  // namespace catebounds
