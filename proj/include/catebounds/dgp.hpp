#pragma once

// Synthetic data-generating processes with exact oracle nuisances. The two
// variants share one outcome mechanism and differ only in the environment
// probability. An unobserved confounder U enters both treatment assignment
// and outcome; every oracle quantity marginalizes U by fixed-order composite
// Simpson quadrature, so oracles are deterministic and library-free.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "catebounds/bounds.hpp"
#include "catebounds/common.hpp"
#include "catebounds/dataset.hpp"
#include "catebounds/interval.hpp"
#include "catebounds/philox.hpp"
#include "catebounds/provider.hpp"
#include "catebounds/quadrature.hpp"

namespace catebounds {

enum class DgpVariant { dataset1, dataset2 };

inline std::string to_string(DgpVariant v) {
    return v == DgpVariant::dataset1 ? "dataset1" : "dataset2";
}

struct DgpConfig {
    DgpVariant variant = DgpVariant::dataset1;
    int n = 10000;
    std::uint64_t seed = 0;
    double noise_scale = 0.3;
    double treatment_logit_slope = 2.5;

    void validate() const {
        if (n < 1) throw ValidationError("sample count must be >= 1");
        if (!(noise_scale > 0.0)) throw ValidationError("noise scale must be positive");
        if (!is_finite(treatment_logit_slope))
            throw ValidationError("treatment logit slope must be finite");
    }
};

inline double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

namespace dgp {

// Outcome baseline shared by both variants.
inline double baseline(double x) {
    return (std::sin(12.0 * x) + x) / 3.0 + std::cos(2.0 * x) / 60.0;
}

inline double cate(double x) { return x / 3.0; }

// P(E=1 | X=x).
inline double env_prob(DgpVariant variant, double x) {
    return variant == DgpVariant::dataset1 ? sigmoid(x) : 0.15 * std::sin(5.0 * x) + 0.5;
}

// P(A=1 | X=x, U=u, E=e): environment 0 mirrors environment 1.
inline double treat_prob(const DgpConfig& cfg, double x, double u, int env) {
    const double p1 = sigmoid(cfg.treatment_logit_slope * x + u);
    return env == 1 ? p1 : 1.0 - p1;
}

}  // namespace dgp

// Draws n i.i.d. samples. Each sample uses its own counter-based stream keyed
// by (seed, index), so generation is order-independent and bit-reproducible.
// The confounder U is used internally and never emitted.
inline Dataset sample_synthetic(const DgpConfig& cfg) {
    cfg.validate();
    std::vector<Sample> samples;
    samples.reserve(cfg.n);
    for (int i = 0; i < cfg.n; ++i) {
        RandomStream rs(cfg.seed, static_cast<std::uint64_t>(i));
        Sample s;
        const double x = rs.uniform(-1.0, 1.0);
        const double u = rs.uniform01();
        s.env = rs.bernoulli(dgp::env_prob(cfg.variant, x)) ? 1 : 0;
        s.treatment = rs.bernoulli(dgp::treat_prob(cfg, x, u, s.env)) ? 1 : 0;
        const double eps = rs.laplace();
        s.outcome = dgp::cate(x) * s.treatment + dgp::baseline(x) + u + cfg.noise_scale * eps;
        s.covariates = {x};
        samples.push_back(std::move(s));
    }
    return Dataset::from_samples(samples, {"0", "1"});
}

// Exact nuisance values at one covariate point.
struct OracleNuisances {
    double x = 0.0;
    Eigen::MatrixXd pi;        // env x treatment
    Eigen::MatrixXd mu;        // env x treatment
    Eigen::VectorXd delta;     // over envs
    double tau = 0.0;
    Eigen::VectorXd mu_tilde;  // over treatments
};

inline OracleNuisances oracle_nuisances(const DgpConfig& cfg, double x) {
    cfg.validate();
    if (!(x >= -1.0 && x <= 1.0))
        throw DomainError("covariate " + std::to_string(x) + " outside [-1, 1]");

    OracleNuisances out;
    out.x = x;
    out.pi.resize(2, 2);
    out.mu.resize(2, 2);
    out.delta.resize(2);
    out.mu_tilde.resize(2);

    const double f = dgp::baseline(x);
    out.tau = dgp::cate(x);
    out.mu_tilde(0) = f + 0.5;            // E[U] = 1/2, noise has mean 0
    out.mu_tilde(1) = f + out.tau + 0.5;

    const double d1 = dgp::env_prob(cfg.variant, x);
    out.delta << 1.0 - d1, d1;

    for (int e = 0; e < 2; ++e) {
        for (int a = 0; a < 2; ++a) {
            auto weight = [&](double u) {
                const double p1 = dgp::treat_prob(cfg, x, u, e);
                return a == 1 ? p1 : 1.0 - p1;
            };
            const double mass = simpson(0.0, 1.0, weight);
            const double moment = simpson(0.0, 1.0, [&](double u) { return u * weight(u); });
            if (mass < 1e-12)
                throw DomainError("vanishing treatment mass for env " + std::to_string(e) +
                                  ", treatment " + std::to_string(a));
            out.pi(e, a) = mass;
            out.mu(e, a) = out.tau * a + f + moment / mass;
        }
    }

    for (int e = 0; e < 2; ++e)
        if (std::abs(out.pi.row(e).sum() - 1.0) > 1e-10)
            throw DomainError("oracle propensity row does not sum to 1");
    if (std::abs(out.delta.sum() - 1.0) > 1e-10)
        throw DomainError("oracle environment distribution does not sum to 1");
    return out;
}

// Closed form of the transformed response E[Ytil | X=x, E=env] for a leg of a
// pair: first leg pi1*mu1 + pi0*fill, second leg pi0*mu0 + pi1*fill.
inline double oracle_transformed_response(const OracleNuisances& nu, Side side, Leg leg, int env,
                                          const Interval& support) {
    const double fill = leg_fill(support, side, leg);
    if (leg == Leg::first) return nu.pi(env, 1) * nu.mu(env, 1) + nu.pi(env, 0) * fill;
    return nu.pi(env, 0) * nu.mu(env, 0) + nu.pi(env, 1) * fill;
}

struct OracleTable {
    DgpConfig config;
    Interval support{0.0, 1.0};
    std::vector<double> grid;
    std::vector<OracleNuisances> rows;
    std::vector<BoundMatrix> bounds;

    int find(double x, double tol = 1e-9) const {
        auto it = std::lower_bound(grid.begin(), grid.end(), x - tol);
        if (it == grid.end() || std::abs(*it - x) > tol)
            throw ValidationError("covariate " + std::to_string(x) + " not on the oracle grid");
        return static_cast<int>(it - grid.begin());
    }
};

inline OracleTable oracle_table(const DgpConfig& cfg, const std::vector<double>& grid,
                                const Interval& support) {
    if (grid.empty()) throw ValidationError("oracle grid must be non-empty");
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (!(grid[i] > grid[i - 1]))
            throw ValidationError("oracle grid must be strictly increasing");
    OracleTable table;
    table.config = cfg;
    table.support = support;
    table.grid = grid;
    table.rows.reserve(grid.size());
    table.bounds.reserve(grid.size());
    for (double x : grid) {
        OracleNuisances nu = oracle_nuisances(cfg, x);
        NuisancePoint point(nu.pi, nu.mu, support);
        BoundMatrix bm = bound_matrix_from(point);
        if (!(bm.combined_lower <= nu.tau + 1e-8 && nu.tau <= bm.combined_upper + 1e-8))
            throw DomainError("oracle bounds fail to contain the oracle effect at x = " +
                              std::to_string(x) + "; support too narrow?");
        table.rows.push_back(std::move(nu));
        table.bounds.push_back(std::move(bm));
    }
    return table;
}

inline std::vector<double> linspace(double lo, double hi, int n) {
    if (n < 2) throw ValidationError("linspace needs >= 2 points");
    std::vector<double> out(n);
    for (int i = 0; i < n; ++i) out[i] = lo + (hi - lo) * i / (n - 1);
    return out;
}

// One row per grid point: covariate, nuisances, pairwise and combined bounds.
inline void write_oracle_csv(const OracleTable& table, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write oracle CSV: " + path);
    const int k = 2;
    out << "x,tau,mu_tilde_0,mu_tilde_1";
    for (int e = 0; e < k; ++e) out << ",delta_" << e;
    for (int e = 0; e < k; ++e)
        for (int a = 0; a < 2; ++a) out << ",pi_" << e << "_" << a << ",mu_" << e << "_" << a;
    for (int e = 0; e < k; ++e)
        for (int j = 0; j < k; ++j) out << ",b_lo_" << e << j << ",b_up_" << e << j;
    out << ",comb_lo,comb_up,arg_lo_e,arg_lo_j,arg_up_e,arg_up_j\n";
    auto fmt = [](double v) { return detail::format_double(v); };
    for (std::size_t i = 0; i < table.grid.size(); ++i) {
        const OracleNuisances& nu = table.rows[i];
        const BoundMatrix& bm = table.bounds[i];
        out << fmt(nu.x) << "," << fmt(nu.tau) << "," << fmt(nu.mu_tilde(0)) << ","
            << fmt(nu.mu_tilde(1));
        for (int e = 0; e < k; ++e) out << "," << fmt(nu.delta(e));
        for (int e = 0; e < k; ++e)
            for (int a = 0; a < 2; ++a) out << "," << fmt(nu.pi(e, a)) << "," << fmt(nu.mu(e, a));
        for (int e = 0; e < k; ++e)
            for (int j = 0; j < k; ++j)
                out << "," << fmt(bm.pair(e, j).lower) << "," << fmt(bm.pair(e, j).upper);
        out << "," << fmt(bm.combined_lower) << "," << fmt(bm.combined_upper) << ","
            << bm.argmax_pair.first << "," << bm.argmax_pair.second << "," << bm.argmin_pair.first
            << "," << bm.argmin_pair.second << "\n";
    }
}

// Oracle-backed provider for injecting exact nuisances into the learner
// machinery. Covariates must be one-dimensional. The most recent point is
// cached since callers typically issue several queries per sample.
class OracleNuisanceProvider : public NuisanceProvider {
public:
    OracleNuisanceProvider(DgpConfig cfg, Interval support, double clip_eps = 0.01)
        : cfg_(cfg), support_(support), clip_eps_(clip_eps) {}

    int num_envs() const override { return 2; }

    double mu(int env, int a, const Eigen::VectorXd& x, int /*fold*/ = -1) const override {
        return row(x).mu(env, a);
    }

    double pi(int env, int a, const Eigen::VectorXd& x, int /*fold*/ = -1) const override {
        return row(x).pi(env, a);
    }

    Eigen::VectorXd delta(const Eigen::VectorXd& x, int /*fold*/ = -1) const override {
        Eigen::VectorXd d = row(x).delta;
        for (int e = 0; e < d.size(); ++e)
            d(e) = std::min(1.0 - clip_eps_, std::max(clip_eps_, d(e)));
        return d;
    }

    double transformed_response(Side side, Leg leg, int env, const Eigen::VectorXd& x,
                                int /*fold*/ = -1) const override {
        return oracle_transformed_response(row(x), side, leg, env, support_);
    }

    const Interval& support() const { return support_; }

private:
    const OracleNuisances& row(const Eigen::VectorXd& x) const {
        if (x.size() != 1) throw DomainError("oracle nuisances require one-dimensional covariates");
        if (!cached_ || cached_x_ != x(0)) {
            cache_ = oracle_nuisances(cfg_, x(0));
            cached_x_ = x(0);
            cached_ = true;
        }
        return cache_;
    }

    DgpConfig cfg_;
    Interval support_;
    double clip_eps_;
    mutable OracleNuisances cache_;
    mutable double cached_x_ = 0.0;
    mutable bool cached_ = false;
};

}  // namespace catebounds
