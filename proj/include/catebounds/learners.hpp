#pragma once

// Meta-learners that map covariates to treatment-effect bounds. The plug-in
// learner evaluates the bound formulas on fitted nuisances; the two-stage
// learners regress constructed pseudo-outcomes on covariates, one model per
// (side, environment pair). Within-environment pairs always use the
// within-bound pseudo-outcome; cross pairs come in PI / RA / IPW / DR
// variants. Lower bounds reuse the upper-bound machinery with the support
// endpoints interchanged.

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "catebounds/bounds.hpp"
#include "catebounds/common.hpp"
#include "catebounds/dataset.hpp"
#include "catebounds/models.hpp"
#include "catebounds/nuisance.hpp"
#include "catebounds/provider.hpp"

namespace catebounds {

enum class Method { naive_plugin, cb_pi, cb_ra, cb_ipw, cb_dr };

inline std::string to_string(Method m) {
    switch (m) {
        case Method::naive_plugin: return "naive-plugin";
        case Method::cb_pi: return "cb-pi";
        case Method::cb_ra: return "cb-ra";
        case Method::cb_ipw: return "cb-ipw";
        case Method::cb_dr: return "cb-dr";
    }
    return "?";
}

inline Method method_from_string(const std::string& s) {
    if (s == "naive-plugin") return Method::naive_plugin;
    if (s == "cb-pi") return Method::cb_pi;
    if (s == "cb-ra") return Method::cb_ra;
    if (s == "cb-ipw") return Method::cb_ipw;
    if (s == "cb-dr") return Method::cb_dr;
    throw ValidationError("unknown method '" + s + "'");
}

// ---------------------------------------------------------------------------
// Pseudo-outcomes (binary treatment)

// Within-bound pseudo-outcome. Defined on rows of environment e only; the
// second stage conditions on E = e, so other rows are excluded, not zeroed.
inline double wb_pseudo_value(int a, double y, Side side, const Interval& support) {
    if (side == Side::upper) return a == 1 ? y - support.lo : support.hi - y;
    return a == 1 ? y - support.hi : support.lo - y;
}

inline std::optional<double> wb_pseudo(const Dataset& data, int row, int e, Side side,
                                       const Interval& support) {
    if (data.env(row) != e) return std::nullopt;
    return wb_pseudo_value(data.treatment(row), data.outcome(row), side, support);
}

// Transformed outcome for the ordered cross pair (e, j): observed outcome on
// the leg's factual branch, support endpoint on the counterfactual branch,
// zero outside both environments.
inline double transformed_outcome_value(int env, int a, double y, int e, int j, Side side,
                                        const Interval& support) {
    if (e == j)
        throw ValidationError("transformed outcome needs a cross pair; within pairs use the "
                              "within-bound pseudo-outcome");
    if (env == e) return a == 1 ? y : leg_fill(support, side, Leg::first);
    if (env == j) return a == 0 ? y : leg_fill(support, side, Leg::second);
    return 0.0;
}

inline double transformed_outcome(const Dataset& data, int row, int e, int j, Side side,
                                  const Interval& support) {
    return transformed_outcome_value(data.env(row), data.treatment(row), data.outcome(row), e, j,
                                     side, support);
}

// Plug-in cross bound: difference of the transformed-response legs.
inline double cb_pi_bound(const NuisanceProvider& nuis, int e, int j, Side side,
                          const Eigen::VectorXd& x, int fold = -1) {
    return nuis.transformed_response(side, Leg::first, e, x, fold) -
           nuis.transformed_response(side, Leg::second, j, x, fold);
}

// Regression-adjusted pseudo-outcome; defined for every row via its three
// indicator branches.
inline double cb_ra_pseudo(const Dataset& data, int row, const NuisanceProvider& nuis, int e,
                           int j, Side side, const Interval& support, int fold = -1) {
    const Eigen::VectorXd x = data.covariate_row(row);
    const int env = data.env(row);
    const double ytil = transformed_outcome(data, row, e, j, side, support);
    if (env == e) return ytil - nuis.transformed_response(side, Leg::second, j, x, fold);
    if (env == j) return nuis.transformed_response(side, Leg::first, e, x, fold) - ytil;
    return cb_pi_bound(nuis, e, j, side, x, fold);
}

// Inverse-probability-weighted pseudo-outcome with the clipped environment
// model in the denominators.
inline double cb_ipw_pseudo(const Dataset& data, int row, const NuisanceProvider& nuis, int e,
                            int j, Side side, const Interval& support, int fold = -1) {
    const int env = data.env(row);
    if (env != e && env != j) return 0.0;
    const Eigen::VectorXd x = data.covariate_row(row);
    const double ytil = transformed_outcome(data, row, e, j, side, support);
    const Eigen::VectorXd d = nuis.delta(x, fold);
    return env == e ? ytil / d(e) : -ytil / d(j);
}

// Doubly robust pseudo-outcome: IPW term plus regression corrections.
inline double cb_dr_pseudo(const Dataset& data, int row, const NuisanceProvider& nuis, int e,
                           int j, Side side, const Interval& support, int fold = -1) {
    const Eigen::VectorXd x = data.covariate_row(row);
    const int env = data.env(row);
    const double re = nuis.transformed_response(side, Leg::first, e, x, fold);
    const double rj = nuis.transformed_response(side, Leg::second, j, x, fold);
    const Eigen::VectorXd d = nuis.delta(x, fold);
    double value = (1.0 - (env == e ? 1.0 / d(e) : 0.0)) * re -
                   (1.0 - (env == j ? 1.0 / d(j) : 0.0)) * rj;
    if (env == e || env == j) {
        const double ytil = transformed_outcome(data, row, e, j, side, support);
        value += env == e ? ytil / d(e) : -ytil / d(j);
    }
    return value;
}

// Plug-in bound matrix from nuisances at one covariate point.
inline BoundMatrix naive_bound_matrix(const NuisanceProvider& nuis, const Eigen::VectorXd& x,
                                      const Interval& support, int fold = -1) {
    const int k = nuis.num_envs();
    Eigen::MatrixXd pi(k, 2), mu(k, 2);
    for (int e = 0; e < k; ++e) {
        for (int a = 0; a < 2; ++a) {
            pi(e, a) = nuis.pi(e, a, x, fold);
            mu(e, a) = nuis.mu(e, a, x, fold);
        }
    }
    return bound_matrix_from(NuisancePoint(std::move(pi), std::move(mu), support));
}

// ---------------------------------------------------------------------------
// Fitted bound estimator

class BoundEstimator {
public:
    Method method() const { return method_; }
    const Interval& support() const { return support_; }
    int num_envs() const { return num_envs_; }
    int covariate_dim() const { return dim_; }
    const NuisanceSet& nuisances() const { return *nuis_; }
    const FitConfig& nuisance_config() const { return nuis_cfg_; }
    const FitConfig& stage2_config() const { return stage2_cfg_; }

    BoundMatrix predict(const Eigen::VectorXd& x) const {
        if (x.size() != dim_)
            throw DomainError("estimator expects covariate dimension " + std::to_string(dim_) +
                              ", got " + std::to_string(x.size()));
        if (method_ == Method::naive_plugin) return naive_bound_matrix(*nuis_, x, support_);
        std::vector<BoundPair> pairs;
        pairs.reserve(num_envs_ * num_envs_);
        for (int e = 0; e < num_envs_; ++e) {
            for (int j = 0; j < num_envs_; ++j) {
                BoundPair p;
                p.e = e;
                p.j = j;
                p.upper = pair_value(Side::upper, e, j, x);
                p.lower = pair_value(Side::lower, e, j, x);
                pairs.push_back(p);
            }
        }
        return combine(pairs, num_envs_);
    }

    json to_json() const {
        json j;
        j["method"] = to_string(method_);
        j["support"] = {{"lo", support_.lo}, {"hi", support_.hi}};
        j["num_envs"] = num_envs_;
        j["dim"] = dim_;
        j["nuisance_config"] = nuis_cfg_.to_json();
        j["stage2_config"] = stage2_cfg_.to_json();
        j["nuisances"] = nuis_->to_json();
        json models = json::array();
        for (const auto& m : stage2_) models.push_back(m ? m->to_json() : json(nullptr));
        j["stage2"] = std::move(models);
        return j;
    }

    static BoundEstimator from_json(const json& j) {
        BoundEstimator est;
        est.method_ = method_from_string(j.at("method").get<std::string>());
        est.support_ = Interval(j.at("support").at("lo").get<double>(),
                                j.at("support").at("hi").get<double>());
        est.num_envs_ = j.at("num_envs").get<int>();
        est.dim_ = j.at("dim").get<int>();
        est.nuis_cfg_ = FitConfig::from_json(j.at("nuisance_config"));
        est.stage2_cfg_ = FitConfig::from_json(j.at("stage2_config"));
        est.nuis_ = std::make_shared<NuisanceSet>(NuisanceSet::from_json(j.at("nuisances")));
        for (const auto& m : j.at("stage2"))
            est.stage2_.push_back(m.is_null() ? nullptr : regressor_from_json(m));
        return est;
    }

    friend BoundEstimator fit(const Dataset&, Method, const FitConfig&, const FitConfig&,
                              const Interval&);

private:
    double pair_value(Side side, int e, int j, const Eigen::VectorXd& x) const {
        if (e != j && method_ == Method::cb_pi) return cb_pi_bound(*nuis_, e, j, side, x);
        const RegressionModel* model = stage2_at(side, e, j);
        if (!model)
            throw ValidationError("no fitted model for pair (" + std::to_string(e) + "," +
                                  std::to_string(j) + ")");
        return model->predict(x);
    }

    const RegressionModel* stage2_at(Side side, int e, int j) const {
        return stage2_[(detail::side_index(side) * num_envs_ + e) * num_envs_ + j].get();
    }

    Method method_ = Method::naive_plugin;
    Interval support_{0.0, 1.0};
    int num_envs_ = 0;
    int dim_ = 0;
    FitConfig nuis_cfg_;
    FitConfig stage2_cfg_;
    std::shared_ptr<NuisanceSet> nuis_;
    std::vector<std::unique_ptr<RegressionModel>> stage2_;  // [(side*k + e)*k + j]
};

namespace detail {

inline constexpr std::uint64_t kTagStage2 = 6;

}  // namespace detail

// Stage 1 fits the nuisances the method needs; stage 2 regresses the
// method's pseudo-outcomes per (side, pair). Within pairs regress on the
// pair's environment only; cross pairs regress over all rows (their
// pseudo-outcomes are defined everywhere). The plug-in methods skip stage 2
// where their formula already is the estimator.
inline BoundEstimator fit(const Dataset& train, Method method, const FitConfig& nuis_cfg,
                          const FitConfig& stage2_cfg, const Interval& support) {
    nuis_cfg.validate();
    stage2_cfg.validate();
    if (train.num_envs() < 2)
        throw ValidationError("bound estimation needs >= 2 environments (no cross pairs with " +
                              std::to_string(train.num_envs()) + ")");
    if (!train.binary_treatment())
        throw ValidationError("bound estimation is implemented for binary treatments");

    BoundEstimator est;
    est.method_ = method;
    est.support_ = support;
    est.num_envs_ = train.num_envs();
    est.dim_ = train.covariate_dim();
    est.nuis_cfg_ = nuis_cfg;
    est.stage2_cfg_ = stage2_cfg;
    est.nuis_ = std::make_shared<NuisanceSet>(NuisanceSet::create(train, nuis_cfg, support));
    NuisanceSet& nuis = *est.nuis_;

    switch (method) {
        case Method::naive_plugin:
            nuis.fit_response_surfaces(train, nuis_cfg);
            nuis.fit_propensities(train, nuis_cfg);
            break;
        case Method::cb_pi:
        case Method::cb_ra:
            nuis.fit_all_transformed_responses(train, nuis_cfg);
            break;
        case Method::cb_ipw:
            nuis.fit_environment_model(train, nuis_cfg);
            break;
        case Method::cb_dr:
            nuis.fit_all_transformed_responses(train, nuis_cfg);
            nuis.fit_environment_model(train, nuis_cfg);
            break;
    }

    const int k = est.num_envs_;
    est.stage2_.resize(2 * k * k);
    if (method == Method::naive_plugin) return est;

    for (Side side : {Side::upper, Side::lower}) {
        for (int e = 0; e < k; ++e) {
            for (int j = 0; j < k; ++j) {
                if (e != j && method == Method::cb_pi) continue;
                const std::uint64_t seed =
                    derive_seed(stage2_cfg.seed, detail::kTagStage2,
                                static_cast<std::uint64_t>(detail::side_index(side)),
                                static_cast<std::uint64_t>(e * 256 + j));
                std::vector<int> rows;
                std::vector<double> targets;
                try {
                    if (e == j) {
                        for (int i = 0; i < train.size(); ++i) {
                            auto value = wb_pseudo(train, i, e, side, support);
                            if (!value) continue;
                            rows.push_back(i);
                            targets.push_back(*value);
                        }
                    } else {
                        rows.resize(train.size());
                        std::iota(rows.begin(), rows.end(), 0);
                        targets.resize(train.size());
                        for (int i = 0; i < train.size(); ++i) {
                            const int fold = nuis.fold_of(i);
                            switch (method) {
                                case Method::cb_ra:
                                    targets[i] =
                                        cb_ra_pseudo(train, i, nuis, e, j, side, support, fold);
                                    break;
                                case Method::cb_ipw:
                                    targets[i] =
                                        cb_ipw_pseudo(train, i, nuis, e, j, side, support, fold);
                                    break;
                                case Method::cb_dr:
                                    targets[i] =
                                        cb_dr_pseudo(train, i, nuis, e, j, side, support, fold);
                                    break;
                                default: throw ValidationError("unreachable");
                            }
                        }
                    }
                    Eigen::MatrixXd x(rows.size(), train.covariate_dim());
                    Eigen::VectorXd t(rows.size());
                    for (std::size_t i = 0; i < rows.size(); ++i) {
                        x.row(i) = train.covariates().row(rows[i]);
                        t(i) = targets[i];
                    }
                    est.stage2_[(detail::side_index(side) * k + e) * k + j] =
                        fit_regressor(x, t, stage2_cfg, seed);
                } catch (const std::exception& err) {
                    throw ValidationError("stage-2 fit failed for " + to_string(side) +
                                          " bound, pair (" + std::to_string(e) + "," +
                                          std::to_string(j) + "): " + err.what());
                }
            }
        }
    }
    return est;
}

}  // namespace catebounds
