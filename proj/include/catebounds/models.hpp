#pragma once

// Model-agnostic first-stage learning: a uniform train/predict contract for
// regression and probability models plus three built-in families.
//
//   ridge-fourier  ridge regression / multinomial logistic on random Fourier
//                  features (with raw inputs and an intercept appended), the
//                  closed-form or convex default
//   mlp            small feed-forward network, tanh hidden layers, Adam,
//                  early stopping on a held-out slice
//   knn            k-nearest-neighbour averaging, k = ceil(n^0.4) by default
//
// All fits are deterministic functions of (data, config, seed).

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "catebounds/common.hpp"
#include "catebounds/interval.hpp"
#include "catebounds/philox.hpp"

namespace catebounds {

using json = nlohmann::json;

enum class ModelFamily { ridge_fourier, mlp, knn };

inline std::string to_string(ModelFamily f) {
    switch (f) {
        case ModelFamily::ridge_fourier: return "ridge-fourier";
        case ModelFamily::mlp: return "mlp";
        case ModelFamily::knn: return "knn";
    }
    return "?";
}

inline ModelFamily model_family_from_string(const std::string& s) {
    if (s == "ridge-fourier") return ModelFamily::ridge_fourier;
    if (s == "mlp") return ModelFamily::mlp;
    if (s == "knn") return ModelFamily::knn;
    throw ValidationError("unknown model family '" + s + "'");
}

struct FitConfig {
    ModelFamily family = ModelFamily::ridge_fourier;
    std::uint64_t seed = 0;
    int cross_fit_folds = 1;

    // ridge-fourier
    int rff_features = 200;
    double bandwidth_scale = 1.0;   // multiplies the median-heuristic lengthscale
    double ridge_lambda = 1e-3;     // per-sample ridge strength
    double logistic_lambda = 1e-4;  // per-sample penalty for classifiers

    // mlp
    int mlp_hidden = 100;
    int mlp_layers = 2;
    double mlp_learning_rate = 1e-3;
    int mlp_max_epochs = 200;
    int mlp_batch = 128;
    int mlp_patience = 15;
    double mlp_val_frac = 0.1;

    // knn (0 selects ceil(n^0.4))
    int knn_k = 0;

    double clip_eps = 0.01;
    int min_cell_rows = 20;

    void validate() const {
        if (cross_fit_folds < 1) throw ValidationError("cross_fit_folds must be >= 1");
        if (rff_features < 1) throw ValidationError("rff_features must be >= 1");
        if (!(bandwidth_scale > 0)) throw ValidationError("bandwidth_scale must be positive");
        if (ridge_lambda < 0 || logistic_lambda < 0)
            throw ValidationError("penalties must be non-negative");
        if (mlp_hidden < 1 || mlp_layers < 1 || mlp_batch < 1 || mlp_max_epochs < 1)
            throw ValidationError("invalid mlp architecture");
        if (!(mlp_val_frac > 0 && mlp_val_frac < 0.5))
            throw ValidationError("mlp_val_frac must lie in (0, 0.5)");
        if (knn_k < 0) throw ValidationError("knn_k must be >= 0");
        if (!(clip_eps > 0 && clip_eps < 0.5))
            throw ValidationError("clip_eps must lie in (0, 0.5)");
        if (min_cell_rows < 1) throw ValidationError("min_cell_rows must be >= 1");
    }

    json to_json() const {
        return json{{"family", to_string(family)},
                    {"seed", seed},
                    {"cross_fit_folds", cross_fit_folds},
                    {"rff_features", rff_features},
                    {"bandwidth_scale", bandwidth_scale},
                    {"ridge_lambda", ridge_lambda},
                    {"logistic_lambda", logistic_lambda},
                    {"mlp_hidden", mlp_hidden},
                    {"mlp_layers", mlp_layers},
                    {"mlp_learning_rate", mlp_learning_rate},
                    {"mlp_max_epochs", mlp_max_epochs},
                    {"mlp_batch", mlp_batch},
                    {"mlp_patience", mlp_patience},
                    {"mlp_val_frac", mlp_val_frac},
                    {"knn_k", knn_k},
                    {"clip_eps", clip_eps},
                    {"min_cell_rows", min_cell_rows}};
    }

    static FitConfig from_json(const json& j) {
        FitConfig cfg;
        cfg.family = model_family_from_string(j.value("family", "ridge-fourier"));
        cfg.seed = j.value("seed", std::uint64_t{0});
        cfg.cross_fit_folds = j.value("cross_fit_folds", 1);
        cfg.rff_features = j.value("rff_features", 200);
        cfg.bandwidth_scale = j.value("bandwidth_scale", 1.0);
        cfg.ridge_lambda = j.value("ridge_lambda", 1e-3);
        cfg.logistic_lambda = j.value("logistic_lambda", 1e-4);
        cfg.mlp_hidden = j.value("mlp_hidden", 100);
        cfg.mlp_layers = j.value("mlp_layers", 2);
        cfg.mlp_learning_rate = j.value("mlp_learning_rate", 1e-3);
        cfg.mlp_max_epochs = j.value("mlp_max_epochs", 200);
        cfg.mlp_batch = j.value("mlp_batch", 128);
        cfg.mlp_patience = j.value("mlp_patience", 15);
        cfg.mlp_val_frac = j.value("mlp_val_frac", 0.1);
        cfg.knn_k = j.value("knn_k", 0);
        cfg.clip_eps = j.value("clip_eps", 0.01);
        cfg.min_cell_rows = j.value("min_cell_rows", 20);
        cfg.validate();
        return cfg;
    }
};

// ---------------------------------------------------------------------------
// json <-> Eigen helpers

namespace detail {

inline json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (int i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (int c = 0; c < m.cols(); ++c) row.push_back(m(i, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Eigen::MatrixXd matrix_from_json(const json& j) {
    const int rows = static_cast<int>(j.size());
    if (rows == 0) return Eigen::MatrixXd();
    const int cols = static_cast<int>(j[0].size());
    Eigen::MatrixXd m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int c = 0; c < cols; ++c) m(i, c) = j[i][c].get<double>();
    return m;
}

inline json vector_to_json(const Eigen::VectorXd& v) {
    json out = json::array();
    for (int i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

inline Eigen::VectorXd vector_from_json(const json& j) {
    Eigen::VectorXd v(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) v(i) = j[i].get<double>();
    return v;
}

}  // namespace detail

// Clamp a probability vector into [eps, 1-eps]^m while keeping it on the
// simplex. Interior points pass through unchanged; binary outputs get the
// exact complement clamp.
inline void clip_simplex(Eigen::VectorXd& p, double eps) {
    const int m = static_cast<int>(p.size());
    if (m == 2) {
        double p1 = std::min(1.0 - eps, std::max(eps, p(1)));
        p(1) = p1;
        p(0) = 1.0 - p1;
        return;
    }
    for (int it = 0; it < m + 1; ++it) {
        bool changed = false;
        double low_mass = 0.0, free_mass = 0.0;
        for (int i = 0; i < m; ++i) {
            if (p(i) < eps) {
                low_mass += eps;
                changed = changed || p(i) != eps;
            } else {
                free_mass += p(i);
            }
        }
        if (!changed && std::abs(p.sum() - 1.0) < 1e-12 && p.maxCoeff() <= 1.0 - eps + 1e-12)
            break;
        double scale = free_mass > 0 ? (1.0 - low_mass) / free_mass : 0.0;
        for (int i = 0; i < m; ++i) p(i) = p(i) < eps ? eps : p(i) * scale;
        double hi_cap = 1.0 - eps;
        if (p.maxCoeff() > hi_cap) {
            int arg = 0;
            p.maxCoeff(&arg);
            double excess = p(arg) - hi_cap;
            p(arg) = hi_cap;
            for (int i = 0; i < m; ++i)
                if (i != arg) p(i) += excess / (m - 1);
        }
    }
}

// ---------------------------------------------------------------------------
// Contracts

struct RegressionModel {
    virtual ~RegressionModel() = default;
    virtual double predict(const Eigen::VectorXd& x) const = 0;
    virtual json to_json() const = 0;

    Eigen::VectorXd predict_many(const Eigen::MatrixXd& x) const {
        Eigen::VectorXd out(x.rows());
        for (int i = 0; i < x.rows(); ++i) out(i) = predict(x.row(i).transpose());
        return out;
    }
};

struct ProbabilityModel {
    virtual ~ProbabilityModel() = default;
    virtual Eigen::VectorXd predict_proba(const Eigen::VectorXd& x) const = 0;
    virtual int num_classes() const = 0;
    virtual json to_json() const = 0;
};

// ---------------------------------------------------------------------------
// Random Fourier feature map: [1, x, sqrt(2/D) cos(Wx + b)]

class RffFeatureMap {
public:
    RffFeatureMap() = default;

    static RffFeatureMap make(const Eigen::MatrixXd& x, int features, std::uint64_t seed,
                              double bandwidth_scale) {
        RffFeatureMap map;
        map.lengthscale_ = median_heuristic(x, seed) * bandwidth_scale;
        RandomStream rs(seed, 0x52464620ULL);  // "RFF "
        map.w_.resize(features, x.cols());
        map.b_.resize(features);
        for (int i = 0; i < features; ++i) {
            for (int d = 0; d < x.cols(); ++d) map.w_(i, d) = rs.normal() / map.lengthscale_;
            map.b_(i) = rs.uniform(0.0, 2.0 * std::numbers::pi);
        }
        return map;
    }

    int dim() const { return 1 + static_cast<int>(w_.cols()) + static_cast<int>(w_.rows()); }
    int input_dim() const { return static_cast<int>(w_.cols()); }
    double lengthscale() const { return lengthscale_; }

    Eigen::VectorXd transform(const Eigen::VectorXd& x) const {
        if (x.size() != w_.cols())
            throw DomainError("feature map expects dimension " + std::to_string(w_.cols()) +
                              ", got " + std::to_string(x.size()));
        Eigen::VectorXd phi(dim());
        phi(0) = 1.0;
        phi.segment(1, x.size()) = x;
        const double scale = std::sqrt(2.0 / static_cast<double>(w_.rows()));
        phi.tail(w_.rows()) = ((w_ * x + b_).array().cos() * scale).matrix();
        return phi;
    }

    Eigen::MatrixXd transform_many(const Eigen::MatrixXd& x) const {
        Eigen::MatrixXd phi(x.rows(), dim());
        phi.col(0).setOnes();
        phi.middleCols(1, x.cols()) = x;
        const double scale = std::sqrt(2.0 / static_cast<double>(w_.rows()));
        phi.rightCols(w_.rows()) =
            (((x * w_.transpose()).rowwise() + b_.transpose()).array().cos() * scale).matrix();
        return phi;
    }

    json to_json() const {
        return json{{"lengthscale", lengthscale_},
                    {"w", detail::matrix_to_json(w_)},
                    {"b", detail::vector_to_json(b_)}};
    }

    static RffFeatureMap from_json(const json& j) {
        RffFeatureMap map;
        map.lengthscale_ = j.at("lengthscale").get<double>();
        map.w_ = detail::matrix_from_json(j.at("w"));
        map.b_ = detail::vector_from_json(j.at("b"));
        return map;
    }

private:
    // Median pairwise distance over a deterministic subsample of <= 256 rows.
    static double median_heuristic(const Eigen::MatrixXd& x, std::uint64_t seed) {
        const int n = static_cast<int>(x.rows());
        std::vector<int> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        RandomStream rs(seed, 0x4D454449ULL);  // "MEDI"
        rs.shuffle(idx);
        const int m = std::min(n, 256);
        std::vector<double> dists;
        dists.reserve(m * (m - 1) / 2);
        for (int i = 0; i < m; ++i)
            for (int j = i + 1; j < m; ++j) {
                double d = (x.row(idx[i]) - x.row(idx[j])).norm();
                if (d > 0) dists.push_back(d);
            }
        if (dists.empty()) return 1.0;
        std::nth_element(dists.begin(), dists.begin() + dists.size() / 2, dists.end());
        return dists[dists.size() / 2];
    }

    double lengthscale_ = 1.0;
    Eigen::MatrixXd w_;
    Eigen::VectorXd b_;
};

// ---------------------------------------------------------------------------
// ridge-fourier regression

class RidgeFourierRegressor : public RegressionModel {
public:
    static std::unique_ptr<RidgeFourierRegressor> fit(const Eigen::MatrixXd& x,
                                                      const Eigen::VectorXd& y,
                                                      const FitConfig& cfg, std::uint64_t seed) {
        auto model = std::make_unique<RidgeFourierRegressor>();
        model->map_ = RffFeatureMap::make(x, cfg.rff_features, seed, cfg.bandwidth_scale);
        Eigen::MatrixXd phi = model->map_.transform_many(x);
        const int d = static_cast<int>(phi.cols());
        Eigen::MatrixXd gram = phi.transpose() * phi;
        const double lambda = cfg.ridge_lambda * static_cast<double>(x.rows());
        for (int i = 1; i < d; ++i) gram(i, i) += lambda;  // intercept unpenalized
        model->weights_ = gram.ldlt().solve(phi.transpose() * y);
        return model;
    }

    double predict(const Eigen::VectorXd& x) const override {
        return map_.transform(x).dot(weights_);
    }

    json to_json() const override {
        return json{{"type", "ridge-fourier-regressor"},
                    {"map", map_.to_json()},
                    {"weights", detail::vector_to_json(weights_)}};
    }

    static std::unique_ptr<RidgeFourierRegressor> from_json(const json& j) {
        auto model = std::make_unique<RidgeFourierRegressor>();
        model->map_ = RffFeatureMap::from_json(j.at("map"));
        model->weights_ = detail::vector_from_json(j.at("weights"));
        return model;
    }

private:
    RffFeatureMap map_;
    Eigen::VectorXd weights_;
};

// ---------------------------------------------------------------------------
// ridge-fourier multinomial logistic classification

class RidgeFourierClassifier : public ProbabilityModel {
public:
    static std::unique_ptr<RidgeFourierClassifier> fit(const Eigen::MatrixXd& x,
                                                       const Eigen::VectorXi& labels,
                                                       int num_classes, const FitConfig& cfg,
                                                       std::uint64_t seed) {
        if (num_classes < 2) throw ValidationError("classification needs >= 2 classes");
        auto model = std::make_unique<RidgeFourierClassifier>();
        model->num_classes_ = num_classes;
        model->clip_eps_ = cfg.clip_eps;
        model->map_ = RffFeatureMap::make(x, cfg.rff_features, seed, cfg.bandwidth_scale);

        const Eigen::MatrixXd phi = model->map_.transform_many(x);
        const int n = static_cast<int>(phi.rows());
        const int d = static_cast<int>(phi.cols());
        const int kfree = num_classes - 1;  // last class is the reference
        const double lambda = cfg.logistic_lambda * static_cast<double>(n);

        Eigen::MatrixXd onehot = Eigen::MatrixXd::Zero(n, kfree);
        for (int i = 0; i < n; ++i) {
            if (labels(i) < 0 || labels(i) >= num_classes)
                throw ValidationError("label out of range");
            if (labels(i) < kfree) onehot(i, labels(i)) = 1.0;
        }

        Eigen::MatrixXd w = Eigen::MatrixXd::Zero(d, kfree);
        auto probs_of = [&](const Eigen::MatrixXd& weights) {
            Eigen::MatrixXd logits = phi * weights;  // n x kfree, reference logit 0
            Eigen::MatrixXd p(n, kfree);
            for (int i = 0; i < n; ++i) {
                double mx = std::max(0.0, logits.row(i).maxCoeff());
                double denom = std::exp(-mx);
                for (int c = 0; c < kfree; ++c) denom += std::exp(logits(i, c) - mx);
                for (int c = 0; c < kfree; ++c) p(i, c) = std::exp(logits(i, c) - mx) / denom;
            }
            return p;
        };
        auto loss_of = [&](const Eigen::MatrixXd& weights) {
            Eigen::MatrixXd logits = phi * weights;
            double loss = 0.0;
            for (int i = 0; i < n; ++i) {
                double mx = std::max(0.0, logits.row(i).maxCoeff());
                double denom = std::exp(-mx);
                for (int c = 0; c < kfree; ++c) denom += std::exp(logits(i, c) - mx);
                double ll = labels(i) < kfree ? logits(i, labels(i)) : 0.0;
                loss -= ll - mx - std::log(denom);
            }
            for (int c = 0; c < kfree; ++c)
                loss += 0.5 * lambda * weights.col(c).tail(d - 1).squaredNorm();
            return loss;
        };

        // Damped Newton on the flattened parameter block.
        double loss = loss_of(w);
        for (int iter = 0; iter < 60; ++iter) {
            Eigen::MatrixXd p = probs_of(w);
            Eigen::VectorXd grad(d * kfree);
            for (int c = 0; c < kfree; ++c) {
                Eigen::VectorXd g = phi.transpose() * (p.col(c) - onehot.col(c));
                g.tail(d - 1) += lambda * w.col(c).tail(d - 1);
                grad.segment(c * d, d) = g;
            }
            Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(d * kfree, d * kfree);
            for (int c = 0; c < kfree; ++c) {
                for (int c2 = c; c2 < kfree; ++c2) {
                    Eigen::ArrayXd wgt;
                    if (c == c2)
                        wgt = p.col(c).array() * (1.0 - p.col(c).array());
                    else
                        wgt = -p.col(c).array() * p.col(c2).array();
                    Eigen::MatrixXd block =
                        phi.transpose() * (phi.array().colwise() * wgt).matrix();
                    hess.block(c * d, c2 * d, d, d) = block;
                    if (c2 != c) hess.block(c2 * d, c * d, d, d) = block.transpose();
                }
                for (int i = 1; i < d; ++i) hess(c * d + i, c * d + i) += lambda;
                hess(c * d, c * d) += 1e-10;  // keep the unpenalized intercept solvable
            }
            Eigen::VectorXd step = hess.ldlt().solve(grad);
            double t = 1.0;
            Eigen::MatrixXd w_new;
            double loss_new = std::numeric_limits<double>::infinity();
            for (int back = 0; back < 40; ++back) {
                w_new = w;
                for (int c = 0; c < kfree; ++c) w_new.col(c) -= t * step.segment(c * d, d);
                loss_new = loss_of(w_new);
                if (loss_new <= loss + 1e-12) break;
                t *= 0.5;
            }
            double move = t * step.cwiseAbs().maxCoeff();
            w = w_new;
            bool improved = loss - loss_new > 1e-10 * (1.0 + std::abs(loss));
            loss = loss_new;
            if (move < 1e-9 || !improved) break;
        }
        model->weights_ = w;
        return model;
    }

    Eigen::VectorXd predict_proba(const Eigen::VectorXd& x) const override {
        Eigen::VectorXd phi = map_.transform(x);
        const int kfree = num_classes_ - 1;
        Eigen::VectorXd logits(num_classes_);
        logits.head(kfree) = weights_.transpose() * phi;
        logits(kfree) = 0.0;
        double mx = logits.maxCoeff();
        Eigen::VectorXd p = (logits.array() - mx).exp();
        p /= p.sum();
        clip_simplex(p, clip_eps_);
        return p;
    }

    int num_classes() const override { return num_classes_; }

    json to_json() const override {
        return json{{"type", "ridge-fourier-classifier"},
                    {"num_classes", num_classes_},
                    {"clip_eps", clip_eps_},
                    {"map", map_.to_json()},
                    {"weights", detail::matrix_to_json(weights_)}};
    }

    static std::unique_ptr<RidgeFourierClassifier> from_json(const json& j) {
        auto model = std::make_unique<RidgeFourierClassifier>();
        model->num_classes_ = j.at("num_classes").get<int>();
        model->clip_eps_ = j.at("clip_eps").get<double>();
        model->map_ = RffFeatureMap::from_json(j.at("map"));
        model->weights_ = detail::matrix_from_json(j.at("weights"));
        return model;
    }

private:
    int num_classes_ = 2;
    double clip_eps_ = 0.01;
    RffFeatureMap map_;
    Eigen::MatrixXd weights_;  // d x (num_classes - 1)
};

// ---------------------------------------------------------------------------
// feed-forward network

namespace detail {

// Dense tanh network with a linear head, trained by Adam with early stopping
// on a deterministic held-out slice.
class MlpCore {
public:
    void init(int input_dim, int hidden, int layers, int out_dim, std::uint64_t seed) {
        RandomStream rs(seed, 0x4D4C5020ULL);  // "MLP "
        dims_.clear();
        dims_.push_back(input_dim);
        for (int l = 0; l < layers; ++l) dims_.push_back(hidden);
        dims_.push_back(out_dim);
        w_.clear();
        b_.clear();
        for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
            double bound = std::sqrt(6.0 / (dims_[l] + dims_[l + 1]));
            Eigen::MatrixXd w(dims_[l + 1], dims_[l]);
            for (int i = 0; i < w.rows(); ++i)
                for (int c = 0; c < w.cols(); ++c) w(i, c) = rs.uniform(-bound, bound);
            w_.push_back(std::move(w));
            b_.push_back(Eigen::VectorXd::Zero(dims_[l + 1]));
        }
    }

    Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const {  // rows = samples
        Eigen::MatrixXd h = x;
        for (std::size_t l = 0; l < w_.size(); ++l) {
            h = (h * w_[l].transpose()).rowwise() + b_[l].transpose();
            if (l + 1 < w_.size()) h = h.array().tanh().matrix();
        }
        return h;
    }

    // classification=false: squared error on targets (n x out)
    // classification=true : softmax cross-entropy, targets one-hot
    void train(const Eigen::MatrixXd& x, const Eigen::MatrixXd& targets, bool classification,
               double lr, int max_epochs, int batch_size, int patience, double val_frac,
               std::uint64_t seed, std::vector<double>* loss_history) {
        const int n = static_cast<int>(x.rows());
        std::vector<int> order(n);
        std::iota(order.begin(), order.end(), 0);
        RandomStream perm(seed, 0x56414C20ULL);  // "VAL "
        perm.shuffle(order);
        const int n_val = std::max(1, static_cast<int>(std::floor(n * val_frac)));
        const int n_tr = n - n_val;
        if (n_tr < 1) throw ValidationError("not enough rows to train the network");

        Eigen::MatrixXd xtr(n_tr, x.cols()), xval(n_val, x.cols());
        Eigen::MatrixXd ttr(n_tr, targets.cols()), tval(n_val, targets.cols());
        for (int i = 0; i < n_tr; ++i) {
            xtr.row(i) = x.row(order[i]);
            ttr.row(i) = targets.row(order[i]);
        }
        for (int i = 0; i < n_val; ++i) {
            xval.row(i) = x.row(order[n_tr + i]);
            tval.row(i) = targets.row(order[n_tr + i]);
        }

        std::vector<Eigen::MatrixXd> mw(w_.size()), vw(w_.size());
        std::vector<Eigen::VectorXd> mb(b_.size()), vb(b_.size());
        for (std::size_t l = 0; l < w_.size(); ++l) {
            mw[l] = Eigen::MatrixXd::Zero(w_[l].rows(), w_[l].cols());
            vw[l] = mw[l];
            mb[l] = Eigen::VectorXd::Zero(b_[l].size());
            vb[l] = mb[l];
        }
        const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
        long step = 0;

        double best_val = std::numeric_limits<double>::infinity();
        std::vector<Eigen::MatrixXd> best_w = w_;
        std::vector<Eigen::VectorXd> best_b = b_;
        int stall = 0;

        RandomStream shuffler(seed, 0x53485546ULL);  // "SHUF"
        std::vector<int> batch_order(n_tr);
        std::iota(batch_order.begin(), batch_order.end(), 0);

        for (int epoch = 0; epoch < max_epochs; ++epoch) {
            shuffler.shuffle(batch_order);
            for (int start = 0; start < n_tr; start += batch_size) {
                const int m = std::min(batch_size, n_tr - start);
                Eigen::MatrixXd xb(m, x.cols()), tb(m, targets.cols());
                for (int i = 0; i < m; ++i) {
                    xb.row(i) = xtr.row(batch_order[start + i]);
                    tb.row(i) = ttr.row(batch_order[start + i]);
                }
                // forward with stored activations
                std::vector<Eigen::MatrixXd> acts;
                acts.push_back(xb);
                for (std::size_t l = 0; l < w_.size(); ++l) {
                    Eigen::MatrixXd z =
                        (acts.back() * w_[l].transpose()).rowwise() + b_[l].transpose();
                    if (l + 1 < w_.size()) z = z.array().tanh().matrix();
                    acts.push_back(std::move(z));
                }
                Eigen::MatrixXd delta;  // gradient wrt pre-head output
                if (classification) {
                    Eigen::MatrixXd p = softmax_rows(acts.back());
                    delta = (p - tb) / static_cast<double>(m);
                } else {
                    delta = 2.0 * (acts.back() - tb) / static_cast<double>(m);
                }
                ++step;
                for (int l = static_cast<int>(w_.size()) - 1; l >= 0; --l) {
                    Eigen::MatrixXd gw = delta.transpose() * acts[l];
                    Eigen::VectorXd gb = delta.colwise().sum().transpose();
                    if (l > 0) {
                        Eigen::MatrixXd back = delta * w_[l];
                        delta = (back.array() * (1.0 - acts[l].array().square())).matrix();
                    }
                    adam_update(w_[l], mw[l], vw[l], gw, lr, beta1, beta2, eps, step);
                    adam_update_vec(b_[l], mb[l], vb[l], gb, lr, beta1, beta2, eps, step);
                }
            }
            if (loss_history)
                loss_history->push_back(loss_on(xtr, ttr, classification));
            double val = loss_on(xval, tval, classification);
            if (val < best_val - 1e-12) {
                best_val = val;
                best_w = w_;
                best_b = b_;
                stall = 0;
            } else if (++stall >= patience) {
                break;
            }
        }
        w_ = best_w;
        b_ = best_b;
    }

    double loss_on(const Eigen::MatrixXd& x, const Eigen::MatrixXd& targets,
                   bool classification) const {
        Eigen::MatrixXd out = forward(x);
        if (!classification) return (out - targets).squaredNorm() / out.rows();
        Eigen::MatrixXd p = softmax_rows(out);
        double loss = 0.0;
        for (int i = 0; i < p.rows(); ++i)
            for (int c = 0; c < p.cols(); ++c)
                if (targets(i, c) > 0.5) loss -= std::log(std::max(1e-300, p(i, c)));
        return loss / p.rows();
    }

    json to_json() const {
        json jw = json::array(), jb = json::array();
        for (const auto& w : w_) jw.push_back(matrix_to_json(w));
        for (const auto& b : b_) jb.push_back(vector_to_json(b));
        return json{{"w", jw}, {"b", jb}};
    }

    static MlpCore from_json(const json& j) {
        MlpCore core;
        for (const auto& w : j.at("w")) core.w_.push_back(matrix_from_json(w));
        for (const auto& b : j.at("b")) core.b_.push_back(vector_from_json(b));
        return core;
    }

private:
    static Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
        Eigen::MatrixXd p(logits.rows(), logits.cols());
        for (int i = 0; i < logits.rows(); ++i) {
            double mx = logits.row(i).maxCoeff();
            Eigen::ArrayXd e = (logits.row(i).array() - mx).exp();
            p.row(i) = (e / e.sum()).matrix();
        }
        return p;
    }

    static void adam_update(Eigen::MatrixXd& w, Eigen::MatrixXd& m, Eigen::MatrixXd& v,
                            const Eigen::MatrixXd& g, double lr, double b1, double b2, double eps,
                            long t) {
        m = b1 * m + (1 - b1) * g;
        v = b2 * v + (1 - b2) * g.array().square().matrix();
        double c1 = 1.0 - std::pow(b1, t), c2 = 1.0 - std::pow(b2, t);
        w.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
    }

    static void adam_update_vec(Eigen::VectorXd& w, Eigen::VectorXd& m, Eigen::VectorXd& v,
                                const Eigen::VectorXd& g, double lr, double b1, double b2,
                                double eps, long t) {
        m = b1 * m + (1 - b1) * g;
        v = b2 * v + (1 - b2) * g.array().square().matrix();
        double c1 = 1.0 - std::pow(b1, t), c2 = 1.0 - std::pow(b2, t);
        w.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
    }

    std::vector<int> dims_;
    std::vector<Eigen::MatrixXd> w_;
    std::vector<Eigen::VectorXd> b_;
};

struct Standardizer {
    Eigen::VectorXd mean;
    Eigen::VectorXd scale;

    static Standardizer fit(const Eigen::MatrixXd& x) {
        Standardizer s;
        s.mean = x.colwise().mean();
        s.scale.resize(x.cols());
        for (int c = 0; c < x.cols(); ++c) {
            double var = (x.col(c).array() - s.mean(c)).square().mean();
            s.scale(c) = var > 1e-300 ? std::sqrt(var) : 1.0;
        }
        return s;
    }

    Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const {
        return ((x.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array())
            .matrix();
    }

    Eigen::VectorXd apply(const Eigen::VectorXd& x) const {
        return ((x - mean).array() / scale.array()).matrix();
    }

    json to_json() const {
        return json{{"mean", vector_to_json(mean)}, {"scale", vector_to_json(scale)}};
    }

    static Standardizer from_json(const json& j) {
        Standardizer s;
        s.mean = vector_from_json(j.at("mean"));
        s.scale = vector_from_json(j.at("scale"));
        return s;
    }
};

}  // namespace detail

class MlpRegressor : public RegressionModel {
public:
    static std::unique_ptr<MlpRegressor> fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                             const FitConfig& cfg, std::uint64_t seed) {
        auto model = std::make_unique<MlpRegressor>();
        model->std_ = detail::Standardizer::fit(x);
        Eigen::MatrixXd xs = model->std_.apply(x);
        model->core_.init(static_cast<int>(x.cols()), cfg.mlp_hidden, cfg.mlp_layers, 1, seed);
        model->core_.train(xs, y, false, cfg.mlp_learning_rate, cfg.mlp_max_epochs, cfg.mlp_batch,
                           cfg.mlp_patience, cfg.mlp_val_frac, seed, &model->loss_history_);
        return model;
    }

    double predict(const Eigen::VectorXd& x) const override {
        Eigen::MatrixXd row = std_.apply(x).transpose();
        return core_.forward(row)(0, 0);
    }

    const std::vector<double>& train_loss_history() const { return loss_history_; }

    json to_json() const override {
        return json{{"type", "mlp-regressor"},
                    {"std", std_.to_json()},
                    {"core", core_.to_json()}};
    }

    static std::unique_ptr<MlpRegressor> from_json(const json& j) {
        auto model = std::make_unique<MlpRegressor>();
        model->std_ = detail::Standardizer::from_json(j.at("std"));
        model->core_ = detail::MlpCore::from_json(j.at("core"));
        return model;
    }

private:
    detail::Standardizer std_;
    detail::MlpCore core_;
    std::vector<double> loss_history_;
};

class MlpClassifier : public ProbabilityModel {
public:
    static std::unique_ptr<MlpClassifier> fit(const Eigen::MatrixXd& x,
                                              const Eigen::VectorXi& labels, int num_classes,
                                              const FitConfig& cfg, std::uint64_t seed) {
        if (num_classes < 2) throw ValidationError("classification needs >= 2 classes");
        auto model = std::make_unique<MlpClassifier>();
        model->num_classes_ = num_classes;
        model->clip_eps_ = cfg.clip_eps;
        model->std_ = detail::Standardizer::fit(x);
        Eigen::MatrixXd xs = model->std_.apply(x);
        Eigen::MatrixXd onehot = Eigen::MatrixXd::Zero(x.rows(), num_classes);
        for (int i = 0; i < x.rows(); ++i) {
            if (labels(i) < 0 || labels(i) >= num_classes)
                throw ValidationError("label out of range");
            onehot(i, labels(i)) = 1.0;
        }
        model->core_.init(static_cast<int>(x.cols()), cfg.mlp_hidden, cfg.mlp_layers, num_classes,
                          seed);
        model->core_.train(xs, onehot, true, cfg.mlp_learning_rate, cfg.mlp_max_epochs,
                           cfg.mlp_batch, cfg.mlp_patience, cfg.mlp_val_frac, seed, nullptr);
        return model;
    }

    Eigen::VectorXd predict_proba(const Eigen::VectorXd& x) const override {
        Eigen::MatrixXd row = std_.apply(x).transpose();
        Eigen::VectorXd logits = core_.forward(row).row(0).transpose();
        double mx = logits.maxCoeff();
        Eigen::VectorXd p = (logits.array() - mx).exp();
        p /= p.sum();
        clip_simplex(p, clip_eps_);
        return p;
    }

    int num_classes() const override { return num_classes_; }

    json to_json() const override {
        return json{{"type", "mlp-classifier"},
                    {"num_classes", num_classes_},
                    {"clip_eps", clip_eps_},
                    {"std", std_.to_json()},
                    {"core", core_.to_json()}};
    }

    static std::unique_ptr<MlpClassifier> from_json(const json& j) {
        auto model = std::make_unique<MlpClassifier>();
        model->num_classes_ = j.at("num_classes").get<int>();
        model->clip_eps_ = j.at("clip_eps").get<double>();
        model->std_ = detail::Standardizer::from_json(j.at("std"));
        model->core_ = detail::MlpCore::from_json(j.at("core"));
        return model;
    }

private:
    int num_classes_ = 2;
    double clip_eps_ = 0.01;
    detail::Standardizer std_;
    detail::MlpCore core_;
};

// ---------------------------------------------------------------------------
// k-nearest neighbours

namespace detail {

// Indices of the k nearest training rows, ties broken by row index.
inline std::vector<int> knn_indices(const Eigen::MatrixXd& train, const Eigen::VectorXd& x,
                                    int k) {
    const int n = static_cast<int>(train.rows());
    std::vector<std::pair<double, int>> dist(n);
    for (int i = 0; i < n; ++i)
        dist[i] = {(train.row(i).transpose() - x).squaredNorm(), i};
    const int kk = std::min(k, n);
    std::nth_element(dist.begin(), dist.begin() + (kk - 1), dist.end());
    std::sort(dist.begin(), dist.begin() + kk);
    std::vector<int> out(kk);
    for (int i = 0; i < kk; ++i) out[i] = dist[i].second;
    return out;
}

inline int default_k(int n, int configured) {
    if (configured > 0) return configured;
    return static_cast<int>(std::ceil(std::pow(static_cast<double>(n), 0.4)));
}

}  // namespace detail

class KnnRegressor : public RegressionModel {
public:
    static std::unique_ptr<KnnRegressor> fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                             const FitConfig& cfg, std::uint64_t /*seed*/) {
        auto model = std::make_unique<KnnRegressor>();
        model->x_ = x;
        model->y_ = y;
        model->k_ = detail::default_k(static_cast<int>(x.rows()), cfg.knn_k);
        return model;
    }

    double predict(const Eigen::VectorXd& x) const override {
        auto idx = detail::knn_indices(x_, x, k_);
        double sum = 0.0;
        for (int i : idx) sum += y_(i);
        return sum / idx.size();
    }

    json to_json() const override {
        return json{{"type", "knn-regressor"},
                    {"k", k_},
                    {"x", detail::matrix_to_json(x_)},
                    {"y", detail::vector_to_json(y_)}};
    }

    static std::unique_ptr<KnnRegressor> from_json(const json& j) {
        auto model = std::make_unique<KnnRegressor>();
        model->k_ = j.at("k").get<int>();
        model->x_ = detail::matrix_from_json(j.at("x"));
        model->y_ = detail::vector_from_json(j.at("y"));
        return model;
    }

private:
    Eigen::MatrixXd x_;
    Eigen::VectorXd y_;
    int k_ = 1;
};

class KnnClassifier : public ProbabilityModel {
public:
    static std::unique_ptr<KnnClassifier> fit(const Eigen::MatrixXd& x,
                                              const Eigen::VectorXi& labels, int num_classes,
                                              const FitConfig& cfg, std::uint64_t /*seed*/) {
        auto model = std::make_unique<KnnClassifier>();
        model->x_ = x;
        model->labels_ = labels;
        model->num_classes_ = num_classes;
        model->clip_eps_ = cfg.clip_eps;
        model->k_ = detail::default_k(static_cast<int>(x.rows()), cfg.knn_k);
        return model;
    }

    Eigen::VectorXd predict_proba(const Eigen::VectorXd& x) const override {
        auto idx = detail::knn_indices(x_, x, k_);
        Eigen::VectorXd p = Eigen::VectorXd::Zero(num_classes_);
        for (int i : idx) p(labels_(i)) += 1.0;
        p /= idx.size();
        clip_simplex(p, clip_eps_);
        return p;
    }

    int num_classes() const override { return num_classes_; }

    json to_json() const override {
        json jl = json::array();
        for (int i = 0; i < labels_.size(); ++i) jl.push_back(labels_(i));
        return json{{"type", "knn-classifier"},
                    {"k", k_},
                    {"num_classes", num_classes_},
                    {"clip_eps", clip_eps_},
                    {"x", detail::matrix_to_json(x_)},
                    {"labels", jl}};
    }

    static std::unique_ptr<KnnClassifier> from_json(const json& j) {
        auto model = std::make_unique<KnnClassifier>();
        model->k_ = j.at("k").get<int>();
        model->num_classes_ = j.at("num_classes").get<int>();
        model->clip_eps_ = j.at("clip_eps").get<double>();
        model->x_ = detail::matrix_from_json(j.at("x"));
        const auto& jl = j.at("labels");
        model->labels_.resize(jl.size());
        for (std::size_t i = 0; i < jl.size(); ++i) model->labels_(i) = jl[i].get<int>();
        return model;
    }

private:
    Eigen::MatrixXd x_;
    Eigen::VectorXi labels_;
    int num_classes_ = 2;
    int k_ = 1;
    double clip_eps_ = 0.01;
};

// ---------------------------------------------------------------------------
// Wrappers and factories

// Clamps regression output to an interval (estimated response surfaces must
// stay inside the outcome support).
class ClampedRegressor : public RegressionModel {
public:
    ClampedRegressor(std::unique_ptr<RegressionModel> inner, Interval bounds)
        : inner_(std::move(inner)), bounds_(bounds) {}

    double predict(const Eigen::VectorXd& x) const override {
        return bounds_.clamp(inner_->predict(x));
    }

    json to_json() const override {
        return json{{"type", "clamped"},
                    {"lo", bounds_.lo},
                    {"hi", bounds_.hi},
                    {"inner", inner_->to_json()}};
    }

    static std::unique_ptr<ClampedRegressor> from_json(const json& j);

private:
    std::unique_ptr<RegressionModel> inner_;
    Interval bounds_;
};

inline std::unique_ptr<RegressionModel> fit_regressor(const Eigen::MatrixXd& x,
                                                      const Eigen::VectorXd& y,
                                                      const FitConfig& cfg, std::uint64_t seed) {
    if (x.rows() != y.size() || x.rows() == 0)
        throw ValidationError("regression needs matching non-empty inputs and targets");
    switch (cfg.family) {
        case ModelFamily::ridge_fourier: return RidgeFourierRegressor::fit(x, y, cfg, seed);
        case ModelFamily::mlp: return MlpRegressor::fit(x, y, cfg, seed);
        case ModelFamily::knn: return KnnRegressor::fit(x, y, cfg, seed);
    }
    throw ValidationError("unknown model family");
}

inline std::unique_ptr<ProbabilityModel> fit_classifier(const Eigen::MatrixXd& x,
                                                        const Eigen::VectorXi& labels,
                                                        int num_classes, const FitConfig& cfg,
                                                        std::uint64_t seed) {
    if (x.rows() != labels.size() || x.rows() == 0)
        throw ValidationError("classification needs matching non-empty inputs and labels");
    switch (cfg.family) {
        case ModelFamily::ridge_fourier:
            return RidgeFourierClassifier::fit(x, labels, num_classes, cfg, seed);
        case ModelFamily::mlp: return MlpClassifier::fit(x, labels, num_classes, cfg, seed);
        case ModelFamily::knn: return KnnClassifier::fit(x, labels, num_classes, cfg, seed);
    }
    throw ValidationError("unknown model family");
}

inline std::unique_ptr<RegressionModel> regressor_from_json(const json& j) {
    const std::string type = j.at("type").get<std::string>();
    if (type == "ridge-fourier-regressor") return RidgeFourierRegressor::from_json(j);
    if (type == "mlp-regressor") return MlpRegressor::from_json(j);
    if (type == "knn-regressor") return KnnRegressor::from_json(j);
    if (type == "clamped") return ClampedRegressor::from_json(j);
    throw ParseError("unknown regressor type '" + type + "'");
}

inline std::unique_ptr<ProbabilityModel> classifier_from_json(const json& j) {
    const std::string type = j.at("type").get<std::string>();
    if (type == "ridge-fourier-classifier") return RidgeFourierClassifier::from_json(j);
    if (type == "mlp-classifier") return MlpClassifier::from_json(j);
    if (type == "knn-classifier") return KnnClassifier::from_json(j);
    throw ParseError("unknown classifier type '" + type + "'");
}

inline std::unique_ptr<ClampedRegressor> ClampedRegressor::from_json(const json& j) {
    return std::make_unique<ClampedRegressor>(regressor_from_json(j.at("inner")),
                                              Interval(j.at("lo").get<double>(),
                                                       j.at("hi").get<double>()));
}

}  // namespace catebounds
