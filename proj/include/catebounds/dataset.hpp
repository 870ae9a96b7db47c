#pragma once

// Multi-environment observational data: loading, validation, splitting, and
// the outcome-support interval. Datasets are immutable after construction.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "catebounds/common.hpp"
#include "catebounds/interval.hpp"
#include "catebounds/philox.hpp"

namespace catebounds {

struct Sample {
    int env = 0;
    std::vector<double> covariates;
    int treatment = 0;
    double outcome = 0.0;
};

class Dataset {
public:
    Dataset(Eigen::MatrixXd x, Eigen::VectorXi env, Eigen::VectorXi treatment, Eigen::VectorXd y,
            std::vector<std::string> env_labels, std::vector<int> treatment_values = {0, 1},
            std::optional<Interval> support = std::nullopt, bool require_all_envs = true)
        : x_(std::move(x)),
          env_(std::move(env)),
          treatment_(std::move(treatment)),
          y_(std::move(y)),
          env_labels_(std::move(env_labels)),
          treatment_values_(std::move(treatment_values)) {
        validate(require_all_envs);
        support_ = support ? *support : empirical_minmax();
    }

    static Dataset from_samples(const std::vector<Sample>& samples,
                                std::vector<std::string> env_labels = {},
                                std::vector<int> treatment_values = {0, 1},
                                std::optional<Interval> support = std::nullopt) {
        if (samples.empty()) throw ValidationError("dataset must contain at least one sample");
        const int n = static_cast<int>(samples.size());
        const int p = static_cast<int>(samples.front().covariates.size());
        Eigen::MatrixXd x(n, p);
        Eigen::VectorXi env(n), treatment(n);
        Eigen::VectorXd y(n);
        int max_env = 0;
        for (int i = 0; i < n; ++i) {
            const Sample& s = samples[i];
            if (static_cast<int>(s.covariates.size()) != p)
                throw ValidationError("sample " + std::to_string(i) +
                                      " has inconsistent covariate dimension");
            for (int d = 0; d < p; ++d) x(i, d) = s.covariates[d];
            env(i) = s.env;
            treatment(i) = s.treatment;
            y(i) = s.outcome;
            max_env = std::max(max_env, s.env);
        }
        if (env_labels.empty()) {
            for (int e = 0; e <= max_env; ++e) env_labels.push_back(std::to_string(e));
        }
        return Dataset(std::move(x), std::move(env), std::move(treatment), std::move(y),
                       std::move(env_labels), std::move(treatment_values), support);
    }

    int size() const { return static_cast<int>(y_.size()); }
    int num_envs() const { return static_cast<int>(env_labels_.size()); }
    int covariate_dim() const { return static_cast<int>(x_.cols()); }
    const Eigen::MatrixXd& covariates() const { return x_; }
    const Eigen::VectorXi& envs() const { return env_; }
    const Eigen::VectorXi& treatments() const { return treatment_; }
    const Eigen::VectorXd& outcomes() const { return y_; }
    const std::vector<std::string>& env_labels() const { return env_labels_; }
    const std::vector<int>& treatment_values() const { return treatment_values_; }
    const Interval& support() const { return support_; }

    int env(int i) const { return env_(i); }
    int treatment(int i) const { return treatment_(i); }
    double outcome(int i) const { return y_(i); }
    Eigen::VectorXd covariate_row(int i) const { return x_.row(i).transpose(); }

    bool binary_treatment() const { return treatment_values_ == std::vector<int>{0, 1}; }

    int count_env(int e) const { return (env_.array() == e).count(); }
    int count_cell(int e, int a) const {
        return ((env_.array() == e) && (treatment_.array() == a)).count();
    }

    Dataset with_support(const Interval& iv) const {
        Dataset copy(*this);
        copy.support_ = iv;
        return copy;
    }

    Dataset subset(const std::vector<int>& idx, bool require_all_envs = true) const {
        const int m = static_cast<int>(idx.size());
        if (m == 0) throw ValidationError("subset must be non-empty");
        Eigen::MatrixXd x(m, covariate_dim());
        Eigen::VectorXi env(m), treatment(m);
        Eigen::VectorXd y(m);
        for (int i = 0; i < m; ++i) {
            x.row(i) = x_.row(idx[i]);
            env(i) = env_(idx[i]);
            treatment(i) = treatment_(idx[i]);
            y(i) = y_(idx[i]);
        }
        return Dataset(std::move(x), std::move(env), std::move(treatment), std::move(y),
                       env_labels_, treatment_values_, support_, require_all_envs);
    }

    Interval empirical_minmax() const {
        double lo = y_.minCoeff(), hi = y_.maxCoeff();
        if (!(lo < hi))
            throw ValidationError("degenerate outcome range: all outcomes equal " +
                                  std::to_string(lo) + "; declare an explicit support");
        return Interval(lo, hi);
    }

private:
    void validate(bool require_all_envs) const {
        const int n = size();
        if (n == 0) throw ValidationError("dataset must contain at least one sample");
        if (covariate_dim() < 1) throw ValidationError("covariate dimension must be >= 1");
        if (num_envs() < 1) throw ValidationError("at least one environment label required");
        std::vector<int> env_counts(num_envs(), 0);
        for (int i = 0; i < n; ++i) {
            if (env_(i) < 0 || env_(i) >= num_envs())
                throw ValidationError("sample " + std::to_string(i) + " has environment index " +
                                      std::to_string(env_(i)) + " outside {0.." +
                                      std::to_string(num_envs() - 1) + "}");
            env_counts[env_(i)]++;
            if (std::find(treatment_values_.begin(), treatment_values_.end(), treatment_(i)) ==
                treatment_values_.end())
                throw ValidationError("sample " + std::to_string(i) + " has treatment " +
                                      std::to_string(treatment_(i)) +
                                      " outside the declared treatment set");
            if (!is_finite(y_(i)))
                throw ValidationError("sample " + std::to_string(i) + " has non-finite outcome");
            for (int d = 0; d < covariate_dim(); ++d)
                if (!is_finite(x_(i, d)))
                    throw ValidationError("sample " + std::to_string(i) +
                                          " has non-finite covariate");
        }
        if (require_all_envs) {
            for (int e = 0; e < num_envs(); ++e)
                if (env_counts[e] == 0)
                    throw ValidationError("environment " + std::to_string(e) + " (" +
                                          env_labels_[e] + ") has no samples");
        }
    }

    Eigen::MatrixXd x_;
    Eigen::VectorXi env_;
    Eigen::VectorXi treatment_;
    Eigen::VectorXd y_;
    std::vector<std::string> env_labels_;
    std::vector<int> treatment_values_;
    Interval support_;
};

// ---------------------------------------------------------------------------
// Outcome support inference

enum class SupportMode { empirical_minmax, explicit_interval, quantile };

struct SupportSpec {
    SupportMode mode = SupportMode::empirical_minmax;
    double alpha = 0.0;        // quantile mode
    double lo = 0.0, hi = 1.0; // explicit mode
};

namespace detail {

// Type-7 (linear interpolation) quantile of a sorted vector.
inline double quantile_sorted(const std::vector<double>& sorted, double p) {
    const double pos = p * (static_cast<double>(sorted.size()) - 1.0);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = static_cast<std::size_t>(std::ceil(pos));
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

}  // namespace detail

inline Interval infer_support(const Dataset& data, const SupportSpec& spec) {
    if (data.size() == 0) throw ValidationError("cannot infer support of an empty dataset");
    switch (spec.mode) {
        case SupportMode::empirical_minmax:
            return data.empirical_minmax();
        case SupportMode::explicit_interval: {
            Interval iv(spec.lo, spec.hi);
            double ymin = data.outcomes().minCoeff(), ymax = data.outcomes().maxCoeff();
            if (ymin < iv.lo || ymax > iv.hi)
                throw ValidationError("explicit support [" + std::to_string(iv.lo) + ", " +
                                      std::to_string(iv.hi) + "] excludes observed outcomes in [" +
                                      std::to_string(ymin) + ", " + std::to_string(ymax) + "]");
            return iv;
        }
        case SupportMode::quantile: {
            if (!(spec.alpha > 0.0 && spec.alpha < 0.5))
                throw ValidationError("quantile support requires alpha in (0, 0.5)");
            std::vector<double> ys(data.outcomes().data(), data.outcomes().data() + data.size());
            std::sort(ys.begin(), ys.end());
            double lo = detail::quantile_sorted(ys, spec.alpha);
            double hi = detail::quantile_sorted(ys, 1.0 - spec.alpha);
            if (!(lo < hi)) throw ValidationError("quantile support is degenerate");
            return Interval(lo, hi);
        }
    }
    throw ValidationError("unknown support mode");
}

// ---------------------------------------------------------------------------
// Train/val/test splitting

struct SplitSpec {
    double train_frac = 0.7;
    double val_frac = 0.1;
    double test_frac = 0.2;
    std::uint64_t seed = 0;

    void validate() const {
        for (double f : {train_frac, val_frac, test_frac})
            if (!(f > 0.0 && f < 1.0))
                throw ValidationError("split fractions must lie in (0, 1)");
        if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9)
            throw ValidationError("split fractions must sum to 1");
    }
};

struct SplitResult {
    Dataset train;
    Dataset val;
    Dataset test;
};

namespace detail {

inline constexpr std::uint64_t kSplitStream = 0x53504C49ULL;  // "SPLI"

// Restore environment coverage in `part` by swapping with a donor partition,
// keeping all partition sizes fixed. Returns false when no swap exists.
inline bool repair_env(std::vector<std::vector<int>>& parts, const Eigen::VectorXi& envs,
                       std::size_t part_idx, int missing_env) {
    for (std::size_t donor = 0; donor < parts.size(); ++donor) {
        if (donor == part_idx) continue;
        int donor_count = 0;
        for (int idx : parts[donor]) donor_count += (envs(idx) == missing_env);
        if (donor_count < 2) continue;  // donor must keep coverage itself
        // Donor sample of the missing env.
        auto donor_it = std::find_if(parts[donor].begin(), parts[donor].end(),
                                     [&](int idx) { return envs(idx) == missing_env; });
        // Swap target: a sample in `part` whose env stays covered after removal.
        std::map<int, int> part_counts;
        for (int idx : parts[part_idx]) part_counts[envs(idx)]++;
        auto target_it = std::find_if(parts[part_idx].begin(), parts[part_idx].end(),
                                      [&](int idx) { return part_counts[envs(idx)] >= 2; });
        if (target_it == parts[part_idx].end()) continue;
        std::swap(*donor_it, *target_it);
        return true;
    }
    return false;
}

}  // namespace detail

// Deterministic disjoint covering partition. Sizes are floor(n * frac) for val
// and test with the remainder assigned to train. When an environment with at
// least 3 samples would vanish from a partition, samples are swapped (sizes
// preserved) to restore coverage; otherwise a warning is emitted.
inline SplitResult split(const Dataset& data, const SplitSpec& spec) {
    spec.validate();
    const int n = data.size();
    if (n < 10) throw ValidationError("dataset too small to split: n=" + std::to_string(n));

    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    RandomStream rng(spec.seed, detail::kSplitStream);
    rng.shuffle(idx);

    const int n_val = static_cast<int>(std::floor(n * spec.val_frac));
    const int n_test = static_cast<int>(std::floor(n * spec.test_frac));
    const int n_train = n - n_val - n_test;

    std::vector<std::vector<int>> parts(3);
    parts[0].assign(idx.begin(), idx.begin() + n_train);
    parts[1].assign(idx.begin() + n_train, idx.begin() + n_train + n_val);
    parts[2].assign(idx.begin() + n_train + n_val, idx.end());

    const Eigen::VectorXi& envs = data.envs();
    std::vector<int> total_counts(data.num_envs(), 0);
    for (int i = 0; i < n; ++i) total_counts[envs(i)]++;

    for (std::size_t part = 0; part < parts.size(); ++part) {
        for (int e = 0; e < data.num_envs(); ++e) {
            bool present = std::any_of(parts[part].begin(), parts[part].end(),
                                       [&](int i) { return envs(i) == e; });
            if (present) continue;
            if (total_counts[e] >= 3 && detail::repair_env(parts, envs, part, e)) continue;
            warn("environment " + std::to_string(e) + " missing from partition " +
                 std::to_string(part) + " (only " + std::to_string(total_counts[e]) +
                 " samples in total)");
        }
    }

    return SplitResult{data.subset(parts[0], false), data.subset(parts[1], false),
                       data.subset(parts[2], false)};
}

// ---------------------------------------------------------------------------
// CSV I/O

struct CsvSchema {
    std::string env_col = "env";
    std::string treatment_col = "a";
    std::string outcome_col = "y";
    std::vector<std::string> covariate_cols = {"x"};
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
        std::size_t start = 0;
        while (start < cell.size() && cell[start] == ' ') ++start;
        cells.push_back(cell.substr(start));
    }
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

inline double parse_number(const std::string& cell, int line_no, const std::string& col) {
    const char* begin = cell.data();
    const char* end = begin + cell.size();
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end)
        throw ParseError("line " + std::to_string(line_no) + ", column '" + col +
                         "': cannot parse '" + cell + "' as a number");
    if (!std::isfinite(value))
        throw ParseError("line " + std::to_string(line_no) + ", column '" + col +
                         "': non-finite value '" + cell + "'");
    return value;
}

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

// Loads a header-row CSV. Environment labels are re-indexed to dense integers
// {0..k} in first-appearance order; the label map is kept on the Dataset.
inline Dataset load_csv(const std::string& path, const CsvSchema& schema,
                        std::vector<int> treatment_values = {0, 1}) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open CSV file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path + ": empty file");
    const auto header = detail::split_csv_line(line);

    auto find_col = [&](const std::string& name) {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end())
            throw ValidationError(path + ": schema column '" + name + "' not found in header");
        return static_cast<int>(it - header.begin());
    };
    const int env_idx = find_col(schema.env_col);
    const int treat_idx = find_col(schema.treatment_col);
    const int outcome_idx = find_col(schema.outcome_col);
    if (schema.covariate_cols.empty())
        throw ValidationError("schema must name at least one covariate column");
    std::vector<int> cov_idx;
    for (const auto& c : schema.covariate_cols) cov_idx.push_back(find_col(c));

    std::vector<Sample> samples;
    std::vector<std::string> env_labels;
    std::map<std::string, int> env_map;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != header.size())
            throw ParseError("line " + std::to_string(line_no) + ": expected " +
                             std::to_string(header.size()) + " cells, got " +
                             std::to_string(cells.size()));
        Sample s;
        const std::string& env_label = cells[env_idx];
        auto it = env_map.find(env_label);
        if (it == env_map.end()) {
            it = env_map.emplace(env_label, static_cast<int>(env_labels.size())).first;
            env_labels.push_back(env_label);
        }
        s.env = it->second;
        double a = detail::parse_number(cells[treat_idx], line_no, schema.treatment_col);
        if (a != std::floor(a))
            throw ParseError("line " + std::to_string(line_no) + ": treatment '" +
                             cells[treat_idx] + "' is not an integer");
        s.treatment = static_cast<int>(a);
        if (std::find(treatment_values.begin(), treatment_values.end(), s.treatment) ==
            treatment_values.end())
            throw ValidationError("line " + std::to_string(line_no) + ": treatment " +
                                  std::to_string(s.treatment) +
                                  " outside the declared treatment set");
        s.outcome = detail::parse_number(cells[outcome_idx], line_no, schema.outcome_col);
        for (int ci : cov_idx)
            s.covariates.push_back(detail::parse_number(cells[ci], line_no, header[ci]));
        samples.push_back(std::move(s));
    }
    if (samples.empty()) throw ValidationError(path + ": no data rows");
    return Dataset::from_samples(samples, env_labels, std::move(treatment_values));
}

inline void write_csv(const Dataset& data, const std::string& path,
                      const CsvSchema& schema = {}) {
    if (static_cast<int>(schema.covariate_cols.size()) != data.covariate_dim()) {
        CsvSchema fixed = schema;
        fixed.covariate_cols.clear();
        for (int d = 0; d < data.covariate_dim(); ++d)
            fixed.covariate_cols.push_back(data.covariate_dim() == 1 ? "x"
                                                                     : "x" + std::to_string(d + 1));
        write_csv(data, path, fixed);
        return;
    }
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write CSV file: " + path);
    out << schema.env_col;
    for (const auto& c : schema.covariate_cols) out << "," << c;
    out << "," << schema.treatment_col << "," << schema.outcome_col << "\n";
    for (int i = 0; i < data.size(); ++i) {
        out << data.env_labels()[data.env(i)];
        for (int d = 0; d < data.covariate_dim(); ++d)
            out << "," << detail::format_double(data.covariates()(i, d));
        out << "," << data.treatment(i) << "," << detail::format_double(data.outcome(i)) << "\n";
    }
}

}  // namespace catebounds
