#pragma once

// First-stage nuisance estimation over a multi-environment dataset: response
// surfaces per (environment, treatment), propensities per environment, the
// environment model, and transformed-response legs. Supports K-fold
// cross-fitting: a sample's nuisance predictions are always produced by the
// models of the fold NOT containing it (K = 1 disables splitting).

#include <array>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "catebounds/common.hpp"
#include "catebounds/dataset.hpp"
#include "catebounds/models.hpp"
#include "catebounds/philox.hpp"
#include "catebounds/provider.hpp"

namespace catebounds {

namespace detail {

inline constexpr std::uint64_t kTagMu = 1, kTagPi = 2, kTagDelta = 3, kTagR = 4,
                               kTagFolds = 5;

inline int side_index(Side s) { return s == Side::upper ? 0 : 1; }
inline int leg_index(Leg l) { return l == Leg::first ? 0 : 1; }

}  // namespace detail

class NuisanceSet : public NuisanceProvider {
public:
    // Assigns cross-fitting folds; components are fitted on demand.
    static NuisanceSet create(const Dataset& train, const FitConfig& cfg, Interval support) {
        cfg.validate();
        const int k = cfg.cross_fit_folds;
        if (k > 1 && k > train.size() / 10)
            throw ValidationError("cross_fit_folds = " + std::to_string(k) +
                                  " too large for n = " + std::to_string(train.size()));
        NuisanceSet set;
        set.num_envs_ = train.num_envs();
        set.treatment_values_ = train.treatment_values();
        set.folds_ = k;
        set.clip_eps_ = cfg.clip_eps;
        set.support_ = support;
        set.fold_of_.assign(train.size(), 0);
        if (k > 1) {
            std::vector<int> order(train.size());
            std::iota(order.begin(), order.end(), 0);
            RandomStream rs(derive_seed(cfg.seed, detail::kTagFolds), 0);
            rs.shuffle(order);
            for (std::size_t i = 0; i < order.size(); ++i)
                set.fold_of_[order[i]] = static_cast<int>(i % k);
        }
        set.mu_.resize(k);
        set.pi_.resize(k);
        set.delta_.resize(k);
        set.r_.resize(k);
        for (int f = 0; f < k; ++f) {
            set.mu_[f].resize(set.num_envs_ * set.num_treatments());
            set.pi_[f].resize(set.num_envs_);
            set.r_[f].resize(2 * 2 * set.num_envs_);
        }
        return set;
    }

    int num_envs() const override { return num_envs_; }
    int num_treatments() const { return static_cast<int>(treatment_values_.size()); }
    int folds() const { return folds_; }
    int fold_of(int row) const { return fold_of_.at(row); }
    double clip_eps() const { return clip_eps_; }
    const Interval& support() const { return support_; }

    // ------------------------------------------------------------------
    // Fitting

    // One regression per (environment, treatment) cell, fit on that cell's
    // rows and clamped to the outcome support.
    void fit_response_surfaces(const Dataset& train, const FitConfig& cfg) {
        check_same_data(train);
        for (int f = 0; f < folds_; ++f) {
            for (int e = 0; e < num_envs_; ++e) {
                for (int ai = 0; ai < num_treatments(); ++ai) {
                    const int a = treatment_values_[ai];
                    auto rows = rows_for_fold(train, f, [&](int i) {
                        return train.env(i) == e && train.treatment(i) == a;
                    });
                    if (static_cast<int>(rows.size()) < cfg.min_cell_rows)
                        throw ValidationError(
                            "cell (env=" + std::to_string(e) + ", a=" + std::to_string(a) +
                            ") has " + std::to_string(rows.size()) + " rows, need >= " +
                            std::to_string(cfg.min_cell_rows) +
                            "; overlap looks severely violated");
                    auto [x, y] = gather(train, rows);
                    auto inner = fit_regressor(x, y, cfg,
                                               derive_seed(cfg.seed, detail::kTagMu,
                                                           static_cast<std::uint64_t>(f),
                                                           static_cast<std::uint64_t>(e * 8 + ai)));
                    mu_[f][e * num_treatments() + ai] =
                        std::make_unique<ClampedRegressor>(std::move(inner), support_);
                }
            }
        }
    }

    // One treatment classifier per environment.
    void fit_propensities(const Dataset& train, const FitConfig& cfg) {
        check_same_data(train);
        for (int f = 0; f < folds_; ++f) {
            for (int e = 0; e < num_envs_; ++e) {
                auto rows = rows_for_fold(train, f, [&](int i) { return train.env(i) == e; });
                if (static_cast<int>(rows.size()) < cfg.min_cell_rows)
                    throw ValidationError("environment " + std::to_string(e) + " has " +
                                          std::to_string(rows.size()) + " rows, need >= " +
                                          std::to_string(cfg.min_cell_rows));
                Eigen::MatrixXd x(rows.size(), train.covariate_dim());
                Eigen::VectorXi labels(rows.size());
                for (std::size_t i = 0; i < rows.size(); ++i) {
                    x.row(i) = train.covariates().row(rows[i]);
                    labels(i) = treatment_index(train.treatment(rows[i]));
                }
                pi_[f][e] = fit_classifier(x, labels, num_treatments(), cfg,
                                           derive_seed(cfg.seed, detail::kTagPi,
                                                       static_cast<std::uint64_t>(f),
                                                       static_cast<std::uint64_t>(e)));
            }
        }
    }

    // Environment membership classifier over all rows.
    void fit_environment_model(const Dataset& train, const FitConfig& cfg) {
        check_same_data(train);
        if (num_envs_ < 2)
            throw ValidationError("environment model needs >= 2 environments");
        for (int f = 0; f < folds_; ++f) {
            auto rows = rows_for_fold(train, f, [](int) { return true; });
            Eigen::MatrixXd x(rows.size(), train.covariate_dim());
            Eigen::VectorXi labels(rows.size());
            for (std::size_t i = 0; i < rows.size(); ++i) {
                x.row(i) = train.covariates().row(rows[i]);
                labels(i) = train.env(rows[i]);
            }
            delta_[f] = fit_classifier(x, labels, num_envs_, cfg,
                                       derive_seed(cfg.seed, detail::kTagDelta,
                                                   static_cast<std::uint64_t>(f), 0));
        }
    }

    // Transformed-response legs for the ordered pair (e, j) on one side. The
    // leg model depends only on (side, leg role, environment), so legs shared
    // across pairs are fitted once.
    void fit_transformed_responses(const Dataset& train, int e, int j, Side side,
                                   const FitConfig& cfg) {
        if (e == j)
            throw ValidationError("transformed responses are defined for cross pairs (e != j)");
        ensure_leg(train, cfg, side, Leg::first, e);
        ensure_leg(train, cfg, side, Leg::second, j);
    }

    void fit_all_transformed_responses(const Dataset& train, const FitConfig& cfg) {
        for (Side side : {Side::upper, Side::lower})
            for (int e = 0; e < num_envs_; ++e)
                for (Leg leg : {Leg::first, Leg::second}) ensure_leg(train, cfg, side, leg, e);
    }

    // ------------------------------------------------------------------
    // Provider interface. fold == -1 averages across folds (predict time);
    // fold == f routes to the models trained without fold f.

    double mu(int env, int a, const Eigen::VectorXd& x, int fold = -1) const override {
        const int ai = treatment_index(a);
        return query_regression(
            [&](int f) -> const RegressionModel* {
                return mu_[f][env * num_treatments() + ai].get();
            },
            x, fold, "response surface (env=" + std::to_string(env) + ", a=" + std::to_string(a) +
                        ")");
    }

    double pi(int env, int a, const Eigen::VectorXd& x, int fold = -1) const override {
        const int ai = treatment_index(a);
        check_env(env);
        auto value = [&](int f) {
            const ProbabilityModel* model = pi_[f][env].get();
            if (!model)
                throw ValidationError("propensity model for env " + std::to_string(env) +
                                      " was never fitted");
            return model->predict_proba(x)(ai);
        };
        return average_over_folds(value, fold);
    }

    Eigen::VectorXd delta(const Eigen::VectorXd& x, int fold = -1) const override {
        auto value_vec = [&](int f) {
            const ProbabilityModel* model = delta_[f].get();
            if (!model) throw ValidationError("environment model was never fitted");
            return model->predict_proba(x);
        };
        Eigen::VectorXd out;
        if (fold >= 0) {
            check_fold(fold);
            out = value_vec(fold);
        } else {
            out = value_vec(0);
            for (int f = 1; f < folds_; ++f) out += value_vec(f);
            out /= folds_;
        }
        clip_simplex(out, clip_eps_);
        return out;
    }

    double transformed_response(Side side, Leg leg, int env, const Eigen::VectorXd& x,
                                int fold = -1) const override {
        check_env(env);
        return query_regression(
            [&](int f) -> const RegressionModel* { return r_model(f, side, leg, env); }, x, fold,
            "transformed response (" + to_string(side) + ", leg " +
                std::to_string(detail::leg_index(leg)) + ", env " + std::to_string(env) + ")");
    }

    bool has_mu() const { return mu_[0][0] != nullptr; }
    bool has_pi() const { return pi_[0][0] != nullptr; }
    bool has_delta() const { return delta_[0] != nullptr; }
    bool has_r(Side side) const { return r_model(0, side, Leg::first, 0) != nullptr; }

    // ------------------------------------------------------------------
    // Serialization (models needed at predict time; fold routing of training
    // rows is not persisted)

    json to_json() const {
        json j;
        j["num_envs"] = num_envs_;
        j["treatment_values"] = treatment_values_;
        j["folds"] = folds_;
        j["clip_eps"] = clip_eps_;
        j["support"] = {{"lo", support_.lo}, {"hi", support_.hi}};
        auto dump_reg = [](const std::vector<std::unique_ptr<RegressionModel>>& models) {
            json arr = json::array();
            for (const auto& m : models) arr.push_back(m ? m->to_json() : json(nullptr));
            return arr;
        };
        json jmu = json::array(), jpi = json::array(), jdelta = json::array(),
             jr = json::array();
        for (int f = 0; f < folds_; ++f) {
            jmu.push_back(dump_reg(mu_[f]));
            json pis = json::array();
            for (const auto& m : pi_[f]) pis.push_back(m ? m->to_json() : json(nullptr));
            jpi.push_back(std::move(pis));
            jdelta.push_back(delta_[f] ? delta_[f]->to_json() : json(nullptr));
            jr.push_back(dump_reg(r_[f]));
        }
        j["mu"] = std::move(jmu);
        j["pi"] = std::move(jpi);
        j["delta"] = std::move(jdelta);
        j["r"] = std::move(jr);
        return j;
    }

    static NuisanceSet from_json(const json& j) {
        NuisanceSet set;
        set.num_envs_ = j.at("num_envs").get<int>();
        set.treatment_values_ = j.at("treatment_values").get<std::vector<int>>();
        set.folds_ = j.at("folds").get<int>();
        set.clip_eps_ = j.at("clip_eps").get<double>();
        set.support_ = Interval(j.at("support").at("lo").get<double>(),
                                j.at("support").at("hi").get<double>());
        set.mu_.resize(set.folds_);
        set.pi_.resize(set.folds_);
        set.delta_.resize(set.folds_);
        set.r_.resize(set.folds_);
        for (int f = 0; f < set.folds_; ++f) {
            for (const auto& m : j.at("mu")[f])
                set.mu_[f].push_back(m.is_null() ? nullptr : regressor_from_json(m));
            for (const auto& m : j.at("pi")[f])
                set.pi_[f].push_back(m.is_null() ? nullptr : classifier_from_json(m));
            set.delta_[f] =
                j.at("delta")[f].is_null() ? nullptr : classifier_from_json(j.at("delta")[f]);
            for (const auto& m : j.at("r")[f])
                set.r_[f].push_back(m.is_null() ? nullptr : regressor_from_json(m));
        }
        return set;
    }

private:
    int treatment_index(int a) const {
        auto it = std::find(treatment_values_.begin(), treatment_values_.end(), a);
        if (it == treatment_values_.end())
            throw DomainError("treatment " + std::to_string(a) + " not in the declared set");
        return static_cast<int>(it - treatment_values_.begin());
    }

    void check_env(int env) const {
        if (env < 0 || env >= num_envs_)
            throw DomainError("environment index " + std::to_string(env) + " out of range");
    }

    void check_fold(int fold) const {
        if (fold < 0 || fold >= folds_)
            throw DomainError("fold index " + std::to_string(fold) + " out of range");
    }

    void check_same_data(const Dataset& train) const {
        if (static_cast<int>(fold_of_.size()) != train.size())
            throw ValidationError("dataset no longer matches the fold assignment");
    }

    template <typename Pred>
    std::vector<int> rows_for_fold(const Dataset& train, int fold, Pred&& include) const {
        std::vector<int> rows;
        for (int i = 0; i < train.size(); ++i) {
            if (folds_ > 1 && fold_of_[i] == fold) continue;  // hold out this fold
            if (include(i)) rows.push_back(i);
        }
        return rows;
    }

    static std::pair<Eigen::MatrixXd, Eigen::VectorXd> gather(const Dataset& train,
                                                              const std::vector<int>& rows) {
        Eigen::MatrixXd x(rows.size(), train.covariate_dim());
        Eigen::VectorXd y(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            x.row(i) = train.covariates().row(rows[i]);
            y(i) = train.outcome(rows[i]);
        }
        return {std::move(x), std::move(y)};
    }

    const RegressionModel* r_model(int f, Side side, Leg leg, int env) const {
        return r_[f][(detail::side_index(side) * 2 + detail::leg_index(leg)) * num_envs_ + env]
            .get();
    }

    void ensure_leg(const Dataset& train, const FitConfig& cfg, Side side, Leg leg, int env) {
        check_same_data(train);
        check_env(env);
        const int slot = (detail::side_index(side) * 2 + detail::leg_index(leg)) * num_envs_ + env;
        if (r_[0][slot]) return;
        const double fill = leg_fill(support_, side, leg);
        for (int f = 0; f < folds_; ++f) {
            auto rows = rows_for_fold(train, f, [&](int i) { return train.env(i) == env; });
            if (static_cast<int>(rows.size()) < cfg.min_cell_rows)
                throw ValidationError("environment " + std::to_string(env) + " has " +
                                      std::to_string(rows.size()) + " rows, need >= " +
                                      std::to_string(cfg.min_cell_rows));
            Eigen::MatrixXd x(rows.size(), train.covariate_dim());
            Eigen::VectorXd t(rows.size());
            for (std::size_t i = 0; i < rows.size(); ++i) {
                x.row(i) = train.covariates().row(rows[i]);
                const int a = train.treatment(rows[i]);
                const double y = train.outcome(rows[i]);
                t(i) = leg == Leg::first ? (a == 1 ? y : fill) : (a == 0 ? y : fill);
            }
            r_[f][slot] = fit_regressor(
                x, t, cfg,
                derive_seed(cfg.seed, detail::kTagR, static_cast<std::uint64_t>(f),
                            static_cast<std::uint64_t>(slot)));
        }
    }

    template <typename Getter>
    double query_regression(Getter&& model_at, const Eigen::VectorXd& x, int fold,
                            const std::string& what) const {
        auto value = [&](int f) {
            const RegressionModel* model = model_at(f);
            if (!model) throw ValidationError(what + " was never fitted");
            return model->predict(x);
        };
        return average_over_folds(value, fold);
    }

    template <typename F>
    double average_over_folds(F&& value, int fold) const {
        if (fold >= 0) {
            check_fold(fold);
            return value(fold);
        }
        double sum = 0.0;
        for (int f = 0; f < folds_; ++f) sum += value(f);
        return sum / folds_;
    }

    int num_envs_ = 0;
    std::vector<int> treatment_values_{0, 1};
    int folds_ = 1;
    double clip_eps_ = 0.01;
    Interval support_{0.0, 1.0};
    std::vector<int> fold_of_;
    std::vector<std::vector<std::unique_ptr<RegressionModel>>> mu_;  // [fold][env*T + a]
    std::vector<std::vector<std::unique_ptr<ProbabilityModel>>> pi_;  // [fold][env]
    std::vector<std::unique_ptr<ProbabilityModel>> delta_;            // [fold]
    std::vector<std::vector<std::unique_ptr<RegressionModel>>> r_;  // [fold][(side,leg)*k + env]
};

// K-fold cross-fitted nuisance set with every component fitted.
inline NuisanceSet cross_fit(const Dataset& train, const FitConfig& cfg, Interval support) {
    NuisanceSet set = NuisanceSet::create(train, cfg, support);
    set.fit_response_surfaces(train, cfg);
    set.fit_propensities(train, cfg);
    set.fit_environment_model(train, cfg);
    set.fit_all_transformed_responses(train, cfg);
    return set;
}

}  // namespace catebounds
