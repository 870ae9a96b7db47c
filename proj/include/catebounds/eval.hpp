#pragma once

// Scoring of fitted bound estimators against exact oracle tables (synthetic
// data) and descriptive summaries for data without ground truth. RMSE is
// computed against the combined oracle bounds within a pair scope (all /
// within-environment / cross-environment); per-pair RMSE is kept as a
// diagnostic. Multi-seed runs aggregate to mean and sample standard
// deviation.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "catebounds/bounds.hpp"
#include "catebounds/common.hpp"
#include "catebounds/dataset.hpp"
#include "catebounds/dgp.hpp"
#include "catebounds/learners.hpp"

namespace catebounds {

struct Metrics {
    double rmse_upper = 0.0;
    double rmse_lower = 0.0;
    double rmse_pooled = 0.0;
    double rmse_pooled_normalized = 0.0;  // divided by the support width
    double coverage = 0.0;
    double mean_width = 0.0;
    double width_q10 = 0.0;
    double width_q50 = 0.0;
    double width_q90 = 0.0;
    double crossing_rate = 0.0;
    std::vector<double> per_pair_rmse;  // pooled, row-major over (e, j)

    std::vector<double> flat() const {
        std::vector<double> v{rmse_upper,  rmse_lower, rmse_pooled, rmse_pooled_normalized,
                              coverage,    mean_width, width_q10,   width_q50,
                              width_q90,   crossing_rate};
        v.insert(v.end(), per_pair_rmse.begin(), per_pair_rmse.end());
        return v;
    }

    static Metrics unflat(const std::vector<double>& v, std::size_t pairs) {
        Metrics m;
        m.rmse_upper = v[0];
        m.rmse_lower = v[1];
        m.rmse_pooled = v[2];
        m.rmse_pooled_normalized = v[3];
        m.coverage = v[4];
        m.mean_width = v[5];
        m.width_q10 = v[6];
        m.width_q50 = v[7];
        m.width_q90 = v[8];
        m.crossing_rate = v[9];
        m.per_pair_rmse.assign(v.begin() + 10, v.begin() + 10 + pairs);
        return m;
    }

    json to_json() const {
        return json{{"rmse_upper", rmse_upper},
                    {"rmse_lower", rmse_lower},
                    {"rmse_pooled", rmse_pooled},
                    {"rmse_pooled_normalized", rmse_pooled_normalized},
                    {"coverage", coverage},
                    {"mean_width", mean_width},
                    {"width_q10", width_q10},
                    {"width_q50", width_q50},
                    {"width_q90", width_q90},
                    {"crossing_rate", crossing_rate},
                    {"per_pair_rmse", per_pair_rmse}};
    }

    static Metrics from_json(const json& j) {
        Metrics m;
        m.rmse_upper = j.at("rmse_upper").get<double>();
        m.rmse_lower = j.at("rmse_lower").get<double>();
        m.rmse_pooled = j.at("rmse_pooled").get<double>();
        m.rmse_pooled_normalized = j.at("rmse_pooled_normalized").get<double>();
        m.coverage = j.at("coverage").get<double>();
        m.mean_width = j.at("mean_width").get<double>();
        m.width_q10 = j.at("width_q10").get<double>();
        m.width_q50 = j.at("width_q50").get<double>();
        m.width_q90 = j.at("width_q90").get<double>();
        m.crossing_rate = j.at("crossing_rate").get<double>();
        m.per_pair_rmse = j.at("per_pair_rmse").get<std::vector<double>>();
        return m;
    }
};

struct EvalReport {
    std::string config_hash;
    PairScope scope = PairScope::all;
    int n_points = 0;
    int n_seeds = 1;
    Metrics mean;
    Metrics stddev;  // zero for single-seed reports

    json to_json() const {
        return json{{"config_hash", config_hash}, {"scope", to_string(scope)},
                    {"n_points", n_points},       {"n_seeds", n_seeds},
                    {"mean", mean.to_json()},     {"stddev", stddev.to_json()}};
    }

    static EvalReport from_json(const json& j) {
        EvalReport r;
        r.config_hash = j.at("config_hash").get<std::string>();
        const std::string s = j.at("scope").get<std::string>();
        r.scope = s == "all" ? PairScope::all
                             : (s == "within" ? PairScope::within : PairScope::cross);
        r.n_points = j.at("n_points").get<int>();
        r.n_seeds = j.at("n_seeds").get<int>();
        r.mean = Metrics::from_json(j.at("mean"));
        r.stddev = Metrics::from_json(j.at("stddev"));
        return r;
    }
};

namespace detail {

inline double quantile_of(std::vector<double> v, double p) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    return quantile_sorted(v, p);
}

}  // namespace detail

// Scores predictions produced by `predict` at each test covariate against the
// oracle; the estimator-agnostic core shared by fitted and constant bounds.
template <typename PredictFn>
EvalReport score_with(PredictFn&& predict, const OracleTable& oracle,
                      const std::vector<double>& test_xs, PairScope scope,
                      const std::string& config_hash) {
    if (test_xs.empty()) throw ValidationError("no test covariates to score");
    EvalReport report;
    report.config_hash = config_hash;
    report.scope = scope;
    report.n_points = static_cast<int>(test_xs.size());

    const int k = 2;
    double se_upper = 0.0, se_lower = 0.0, covered = 0.0, crossed = 0.0, width_sum = 0.0;
    std::vector<double> widths;
    std::vector<double> pair_se(k * k, 0.0);
    widths.reserve(test_xs.size());

    for (double x : test_xs) {
        const int row = oracle.find(x);
        const BoundMatrix& truth = oracle.bounds[row];
        const double tau = oracle.rows[row].tau;
        BoundMatrix est = predict(x);
        if (est.num_envs != truth.num_envs)
            throw ValidationError("environment count mismatch between estimator and oracle");
        ScopedBounds est_scoped = combine_scoped(est, scope);
        ScopedBounds truth_scoped = combine_scoped(truth, scope);
        se_upper += (est_scoped.upper - truth_scoped.upper) * (est_scoped.upper - truth_scoped.upper);
        se_lower += (est_scoped.lower - truth_scoped.lower) * (est_scoped.lower - truth_scoped.lower);
        covered += (est_scoped.lower <= tau && tau <= est_scoped.upper) ? 1.0 : 0.0;
        crossed += est_scoped.crossed ? 1.0 : 0.0;
        const double w = est_scoped.width();
        widths.push_back(w);
        width_sum += w;
        for (int e = 0; e < k; ++e)
            for (int j = 0; j < k; ++j) {
                double du = est.pair(e, j).upper - truth.pair(e, j).upper;
                double dl = est.pair(e, j).lower - truth.pair(e, j).lower;
                pair_se[e * k + j] += 0.5 * (du * du + dl * dl);
            }
    }

    const double n = static_cast<double>(test_xs.size());
    Metrics& m = report.mean;
    m.rmse_upper = std::sqrt(se_upper / n);
    m.rmse_lower = std::sqrt(se_lower / n);
    m.rmse_pooled = std::sqrt(0.5 * (se_upper + se_lower) / n);
    m.rmse_pooled_normalized = m.rmse_pooled / oracle.support.width();
    m.coverage = covered / n;
    m.crossing_rate = crossed / n;
    m.mean_width = width_sum / n;
    m.width_q10 = detail::quantile_of(widths, 0.10);
    m.width_q50 = detail::quantile_of(widths, 0.50);
    m.width_q90 = detail::quantile_of(widths, 0.90);
    m.per_pair_rmse.resize(k * k);
    for (int i = 0; i < k * k; ++i) m.per_pair_rmse[i] = std::sqrt(pair_se[i] / n);
    report.stddev.per_pair_rmse.assign(k * k, 0.0);
    return report;
}

inline EvalReport score(const BoundEstimator& est, const OracleTable& oracle,
                        const std::vector<double>& test_xs, PairScope scope,
                        const std::string& config_hash = "") {
    if (est.covariate_dim() != 1)
        throw ValidationError("oracle scoring needs one-dimensional covariates");
    return score_with(
        [&](double x) {
            Eigen::VectorXd v(1);
            v << x;
            return est.predict(v);
        },
        oracle, test_xs, scope, config_hash);
}

// The constant [s1, s2] estimator: the uninformative reference every method
// must beat.
inline EvalReport score_vacuous(const OracleTable& oracle, const std::vector<double>& test_xs,
                                PairScope scope, const std::string& config_hash = "") {
    const Interval& s = oracle.support;
    return score_with(
        [&](double) {
            std::vector<BoundPair> pairs;
            for (int e = 0; e < 2; ++e)
                for (int j = 0; j < 2; ++j) pairs.push_back({e, j, s.lo, s.hi});
            return combine(pairs, 2);
        },
        oracle, test_xs, scope, config_hash);
}

// Per-metric mean and sample standard deviation over runs with identical
// configuration hash and scope.
inline EvalReport aggregate(const std::vector<EvalReport>& reports) {
    if (reports.empty()) throw ValidationError("nothing to aggregate");
    const std::string& hash = reports.front().config_hash;
    const PairScope scope = reports.front().scope;
    for (const EvalReport& r : reports) {
        if (r.config_hash != hash)
            throw ValidationError("refusing to aggregate mixed configuration hashes ('" + hash +
                                  "' vs '" + r.config_hash + "')");
        if (r.scope != scope) throw ValidationError("refusing to aggregate mixed scopes");
    }
    const std::size_t pairs = reports.front().mean.per_pair_rmse.size();
    const std::size_t dim = reports.front().mean.flat().size();
    std::vector<double> sum(dim, 0.0), sumsq(dim, 0.0);
    int points = 0;
    for (const EvalReport& r : reports) {
        std::vector<double> v = r.mean.flat();
        if (v.size() != dim) throw ValidationError("mismatched metric dimensions");
        for (std::size_t i = 0; i < dim; ++i) {
            sum[i] += v[i];
            sumsq[i] += v[i] * v[i];
        }
        points += r.n_points;
    }
    const double n = static_cast<double>(reports.size());
    std::vector<double> mean(dim), sd(dim, 0.0);
    for (std::size_t i = 0; i < dim; ++i) {
        mean[i] = sum[i] / n;
        if (reports.size() > 1) {
            double var = (sumsq[i] - n * mean[i] * mean[i]) / (n - 1.0);
            sd[i] = std::sqrt(std::max(0.0, var));
        }
    }
    EvalReport out;
    out.config_hash = hash;
    out.scope = scope;
    out.n_points = points;
    out.n_seeds = static_cast<int>(reports.size());
    out.mean = Metrics::unflat(mean, pairs);
    out.stddev = Metrics::unflat(sd, pairs);
    return out;
}

// ---------------------------------------------------------------------------
// Descriptive summary for data without an oracle

struct RealBinSummary {
    double bin_lo = 0.0;
    double bin_hi = 0.0;
    double bin_center = 0.0;
    int count = 0;
    // indexed row-major over (e, j)
    std::vector<double> pair_upper_mean, pair_upper_std;
    std::vector<double> pair_lower_mean, pair_lower_std;
    double combined_upper_mean = 0.0, combined_upper_std = 0.0;
    double combined_lower_mean = 0.0, combined_lower_std = 0.0;
    std::pair<int, int> modal_tightest_upper{0, 0};
    std::pair<int, int> modal_tightest_lower{0, 0};
    double tightest_cross_fraction = 0.0;  // both argmin and argmax are cross pairs
    int crossed_count = 0;
};

// Bounds of `est` evaluated on `data`, binned by one covariate.
inline std::vector<RealBinSummary> describe_real(const BoundEstimator& est, const Dataset& data,
                                                 int feature_index, int num_bins) {
    if (feature_index < 0 || feature_index >= data.covariate_dim())
        throw ValidationError("unknown covariate index " + std::to_string(feature_index));
    if (num_bins < 1) throw ValidationError("need >= 1 bin");
    const Eigen::VectorXd feature = data.covariates().col(feature_index);
    const double lo = feature.minCoeff(), hi = feature.maxCoeff();
    const double width = hi > lo ? (hi - lo) / num_bins : 1.0;

    const int k = est.num_envs();
    std::vector<std::vector<BoundMatrix>> per_bin(num_bins);
    for (int i = 0; i < data.size(); ++i) {
        int b = hi > lo ? std::min(num_bins - 1, static_cast<int>((feature(i) - lo) / width))
                        : 0;
        per_bin[b].push_back(est.predict(data.covariate_row(i)));
    }

    auto mean_std = [](const std::vector<double>& v) {
        double m = 0.0;
        for (double t : v) m += t;
        m /= v.size();
        double ss = 0.0;
        for (double t : v) ss += (t - m) * (t - m);
        return std::pair<double, double>{m, v.size() > 1 ? std::sqrt(ss / (v.size() - 1)) : 0.0};
    };

    std::vector<RealBinSummary> out;
    for (int b = 0; b < num_bins; ++b) {
        if (per_bin[b].empty()) continue;
        RealBinSummary s;
        s.bin_lo = lo + b * width;
        s.bin_hi = lo + (b + 1) * width;
        s.bin_center = 0.5 * (s.bin_lo + s.bin_hi);
        s.count = static_cast<int>(per_bin[b].size());
        std::map<std::pair<int, int>, int> up_votes, lo_votes;
        int cross_both = 0;
        std::vector<double> comb_up, comb_lo;
        for (const BoundMatrix& bm : per_bin[b]) {
            comb_up.push_back(bm.combined_upper);
            comb_lo.push_back(bm.combined_lower);
            up_votes[bm.argmin_pair]++;
            lo_votes[bm.argmax_pair]++;
            if (bm.argmin_pair.first != bm.argmin_pair.second &&
                bm.argmax_pair.first != bm.argmax_pair.second)
                cross_both++;
            if (bm.crossed) s.crossed_count++;
        }
        for (int e = 0; e < k; ++e) {
            for (int j = 0; j < k; ++j) {
                std::vector<double> ups, los;
                for (const BoundMatrix& bm : per_bin[b]) {
                    ups.push_back(bm.pair(e, j).upper);
                    los.push_back(bm.pair(e, j).lower);
                }
                auto [mu_u, sd_u] = mean_std(ups);
                auto [mu_l, sd_l] = mean_std(los);
                s.pair_upper_mean.push_back(mu_u);
                s.pair_upper_std.push_back(sd_u);
                s.pair_lower_mean.push_back(mu_l);
                s.pair_lower_std.push_back(sd_l);
            }
        }
        auto [cu, cus] = mean_std(comb_up);
        auto [cl, cls] = mean_std(comb_lo);
        s.combined_upper_mean = cu;
        s.combined_upper_std = cus;
        s.combined_lower_mean = cl;
        s.combined_lower_std = cls;
        auto modal = [](const std::map<std::pair<int, int>, int>& votes) {
            std::pair<int, int> best{0, 0};
            int best_count = -1;
            for (const auto& [pair, count] : votes)
                if (count > best_count) {
                    best = pair;
                    best_count = count;
                }
            return best;
        };
        s.modal_tightest_upper = modal(up_votes);
        s.modal_tightest_lower = modal(lo_votes);
        s.tightest_cross_fraction = static_cast<double>(cross_both) / s.count;
        out.push_back(std::move(s));
    }
    return out;
}

inline void write_describe_csv(const std::vector<RealBinSummary>& rows, int num_envs,
                               const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write summary CSV: " + path);
    out << "bin_lo,bin_hi,bin_center,count";
    for (int e = 0; e < num_envs; ++e)
        for (int j = 0; j < num_envs; ++j)
            out << ",up_" << e << j << "_mean,up_" << e << j << "_std,lo_" << e << j
                << "_mean,lo_" << e << j << "_std";
    out << ",comb_up_mean,comb_up_std,comb_lo_mean,comb_lo_std,tight_up_e,tight_up_j,"
           "tight_lo_e,tight_lo_j,tight_cross_frac,crossed\n";
    auto fmt = [](double v) { return detail::format_double(v); };
    for (const RealBinSummary& s : rows) {
        out << fmt(s.bin_lo) << "," << fmt(s.bin_hi) << "," << fmt(s.bin_center) << ","
            << s.count;
        for (std::size_t i = 0; i < s.pair_upper_mean.size(); ++i)
            out << "," << fmt(s.pair_upper_mean[i]) << "," << fmt(s.pair_upper_std[i]) << ","
                << fmt(s.pair_lower_mean[i]) << "," << fmt(s.pair_lower_std[i]);
        out << "," << fmt(s.combined_upper_mean) << "," << fmt(s.combined_upper_std) << ","
            << fmt(s.combined_lower_mean) << "," << fmt(s.combined_lower_std) << ","
            << s.modal_tightest_upper.first << "," << s.modal_tightest_upper.second << ","
            << s.modal_tightest_lower.first << "," << s.modal_tightest_lower.second << ","
            << fmt(s.tightest_cross_fraction) << "," << s.crossed_count << "\n";
    }
}

}  // namespace catebounds
