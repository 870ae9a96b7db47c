#pragma once

// Configuration-driven experiment pipeline behind the command-line front end:
// simulate synthetic datasets with oracle tables, fit bound estimators, score
// them, export plot-ready curves, and reproduce the full synthetic benchmark
// grid against its reference values. Every command is a pure function of
// (configuration, input files); re-running overwrites outputs identically.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "catebounds/common.hpp"
#include "catebounds/dataset.hpp"
#include "catebounds/dgp.hpp"
#include "catebounds/eval.hpp"
#include "catebounds/learners.hpp"

namespace catebounds {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Run configuration

struct DataSource {
    bool synthetic = true;
    DgpVariant variant = DgpVariant::dataset1;
    std::string csv_path;
    CsvSchema schema;

    static DataSource parse(const std::string& text) {
        DataSource src;
        if (text == "dataset1") {
            src.variant = DgpVariant::dataset1;
        } else if (text == "dataset2") {
            src.variant = DgpVariant::dataset2;
        } else if (text.rfind("csv:", 0) == 0) {
            src.synthetic = false;
            src.csv_path = text.substr(4);
            if (src.csv_path.empty()) throw ValidationError("csv: source needs a path");
        } else {
            throw ValidationError("unknown dataset source '" + text +
                                  "' (expected dataset1, dataset2, or csv:PATH)");
        }
        return src;
    }

    std::string name() const { return synthetic ? to_string(variant) : "csv"; }

    json to_json() const {
        json j{{"kind", synthetic ? name() : "csv:" + csv_path}};
        if (!synthetic) {
            j["schema"] = {{"env", schema.env_col},
                           {"treatment", schema.treatment_col},
                           {"outcome", schema.outcome_col},
                           {"covariates", schema.covariate_cols}};
        }
        return j;
    }
};

// A benchmark row: the estimator it is fitted with and the pair scope its
// headline RMSE is computed over.
struct MethodRow {
    std::string name;
    Method core = Method::naive_plugin;
    PairScope scope = PairScope::all;
};

inline const std::vector<MethodRow>& benchmark_rows() {
    static const std::vector<MethodRow> rows = {
        {"wb-naive", Method::naive_plugin, PairScope::within},
        {"wb", Method::cb_pi, PairScope::within},
        {"cb-naive", Method::naive_plugin, PairScope::cross},
        {"cb-pi", Method::cb_pi, PairScope::cross},
        {"cb-ra", Method::cb_ra, PairScope::cross},
        {"cb-ipw", Method::cb_ipw, PairScope::cross},
        {"cb-dr", Method::cb_dr, PairScope::cross},
    };
    return rows;
}

inline MethodRow method_row(const std::string& name) {
    for (const MethodRow& row : benchmark_rows())
        if (row.name == name) return row;
    throw ValidationError("unknown method '" + name + "' (expected one of: wb-naive, wb, "
                          "cb-naive, cb-pi, cb-ra, cb-ipw, cb-dr)");
}

struct RunConfig {
    DataSource source;
    int n = 10000;
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    SplitSpec split{0.7, 0.1, 0.2, 0};  // per-seed stream derived from the run seed
    SupportSpec support;
    FitConfig nuisance;
    FitConfig stage2;
    std::vector<std::string> methods = {"wb-naive", "wb",    "cb-naive", "cb-pi",
                                        "cb-ra",    "cb-ipw", "cb-dr"};
    int grid_n = 181;
    std::string out_dir = "out";
    bool quick = false;
    std::string describe_feature;  // real-data mode: covariate column to bin by
    int describe_bins = 10;

    void validate() const {
        if (!source.synthetic && source.csv_path.empty())
            throw ValidationError("csv source needs a path");
        if (n < 10) throw ValidationError("n must be >= 10");
        if (seeds.empty()) throw ValidationError("at least one seed required");
        if (methods.empty()) throw ValidationError("at least one method required");
        for (const std::string& m : methods) method_row(m);
        split.validate();
        nuisance.validate();
        stage2.validate();
        if (grid_n < 2) throw ValidationError("grid resolution must be >= 2");
        if (out_dir.empty()) throw ValidationError("output directory required");
    }

    // Location-independent canonical form: the hash identifies what is
    // computed, not where it is written.
    json canonical_json() const {
        json j;
        j["source"] = source.to_json();
        j["n"] = n;
        j["seeds"] = seeds;
        j["split"] = {{"train", split.train_frac}, {"val", split.val_frac},
                      {"test", split.test_frac}};
        j["support"] = {{"mode", support.mode == SupportMode::empirical_minmax ? "minmax"
                                 : support.mode == SupportMode::quantile       ? "quantile"
                                                                               : "explicit"},
                        {"alpha", support.alpha},
                        {"lo", support.lo},
                        {"hi", support.hi}};
        j["nuisance"] = nuisance.to_json();
        j["stage2"] = stage2.to_json();
        j["methods"] = methods;
        j["grid_n"] = grid_n;
        j["quick"] = quick;
        return j;
    }

    std::string config_hash() const {
        // grid resolution shapes presentation outputs only, never estimators
        json j = canonical_json();
        j.erase("grid_n");
        const std::string text = j.dump();
        std::uint64_t h = 1469598103934665603ULL;
        for (unsigned char c : text) {
            h ^= c;
            h *= 1099511628211ULL;
        }
        char buf[17];
        std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
        return buf;
    }
};

// ---------------------------------------------------------------------------
// Benchmark reference values: mean and std of the pooled RMSE per method and
// synthetic dataset over 5 runs, used to derive acceptance bands.

struct ReferenceCell {
    double mean = 0.0;
    double std = 0.0;
};

inline ReferenceCell reference_cell(const std::string& method, DgpVariant variant) {
    static const std::map<std::string, std::pair<ReferenceCell, ReferenceCell>> table = {
        {"wb-naive", {{0.073, 0.031}, {0.075, 0.045}}},
        {"wb", {{0.142, 0.069}, {0.130, 0.077}}},
        {"cb-naive", {{0.148, 0.098}, {0.156, 0.105}}},
        {"cb-pi", {{0.125, 0.059}, {0.127, 0.063}}},
        {"cb-ra", {{0.179, 0.089}, {0.119, 0.037}}},
        {"cb-ipw", {{0.117, 0.057}, {0.165, 0.072}}},
        {"cb-dr", {{0.132, 0.061}, {0.111, 0.069}}},
    };
    auto it = table.find(method);
    if (it == table.end()) throw ValidationError("no reference value for method " + method);
    return variant == DgpVariant::dataset1 ? it->second.first : it->second.second;
}

inline double acceptance_band(const ReferenceCell& ref, bool quick) {
    return (ref.mean + 2.0 * ref.std) * 1.5 * (quick ? 2.0 : 1.0);
}

// ---------------------------------------------------------------------------
// Paths and small IO helpers

namespace paths {

inline fs::path seed_dir(const RunConfig& cfg, std::uint64_t seed) {
    return fs::path(cfg.out_dir) / ("seed" + std::to_string(seed));
}
inline fs::path data_csv(const RunConfig& cfg, std::uint64_t seed, const std::string& part) {
    return seed_dir(cfg, seed) / "data" / (part + ".csv");
}
inline fs::path meta_json(const RunConfig& cfg, std::uint64_t seed) {
    return seed_dir(cfg, seed) / "data" / "meta.json";
}
inline fs::path oracle_csv(const RunConfig& cfg, std::uint64_t seed) {
    return seed_dir(cfg, seed) / "oracle_grid.csv";
}
inline fs::path model_json(const RunConfig& cfg, std::uint64_t seed, const std::string& row) {
    return seed_dir(cfg, seed) / "models" / (row + ".json");
}
inline fs::path report_json(const RunConfig& cfg, std::uint64_t seed, const std::string& row) {
    return seed_dir(cfg, seed) / "reports" / (row + ".json");
}
inline fs::path aggregate_json(const RunConfig& cfg, const std::string& row) {
    return fs::path(cfg.out_dir) / "reports" / (row + "_aggregate.json");
}
inline fs::path export_csv(const RunConfig& cfg, const std::string& core, bool tightest) {
    return fs::path(cfg.out_dir) / "export" /
           (core + (tightest ? "_tightest.csv" : ".csv"));
}
inline fs::path summary_csv(const RunConfig& cfg) { return fs::path(cfg.out_dir) / "summary.csv"; }
inline fs::path manifest_json(const RunConfig& cfg) {
    return fs::path(cfg.out_dir) / "manifest.json";
}

}  // namespace paths

namespace detail {

inline void write_text(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write " + path.string());
    out << text;
}

inline json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot read " + path.string());
    json j;
    in >> j;
    return j;
}

inline std::uint64_t run_seed(std::uint64_t seed, std::uint64_t tag) {
    return derive_seed(seed, 0x52554E00ULL + tag);  // "RUN" + tag
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Dataset materialization shared by the commands

struct SeedData {
    Dataset train;
    Dataset val;
    Dataset test;
    Interval support{0.0, 1.0};
    std::optional<DgpConfig> dgp;  // absent for CSV sources
};

inline SeedData materialize(const RunConfig& cfg, std::uint64_t seed) {
    Dataset raw = [&] {
        if (cfg.source.synthetic) {
            DgpConfig dcfg;
            dcfg.variant = cfg.source.variant;
            dcfg.n = cfg.n;
            dcfg.seed = seed;
            return sample_synthetic(dcfg);
        }
        return load_csv(cfg.source.csv_path, cfg.source.schema);
    }();
    SplitSpec split_spec = cfg.split;
    split_spec.seed = detail::run_seed(seed, 1);
    SplitResult parts = split(raw, split_spec);
    Interval support = infer_support(parts.train, cfg.support);
    SeedData out{parts.train.with_support(support), parts.val.with_support(support),
                 parts.test.with_support(support), support, std::nullopt};
    if (cfg.source.synthetic) {
        DgpConfig dcfg;
        dcfg.variant = cfg.source.variant;
        dcfg.n = cfg.n;
        dcfg.seed = seed;
        out.dgp = dcfg;
    }
    return out;
}

inline void write_manifest(const RunConfig& cfg) {
    json manifest;
    manifest["config"] = cfg.canonical_json();
    manifest["config_hash"] = cfg.config_hash();
    manifest["out_dir"] = cfg.out_dir;
    detail::write_text(paths::manifest_json(cfg), manifest.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// simulate: write train/val/test CSVs, metadata sidecars, and the oracle CSV

inline void cmd_simulate(const RunConfig& cfg) {
    cfg.validate();
    if (!cfg.source.synthetic)
        throw ValidationError("simulate requires a synthetic dataset source");
    write_manifest(cfg);
    for (std::uint64_t seed : cfg.seeds) {
        SeedData data = materialize(cfg, seed);
        fs::create_directories(paths::seed_dir(cfg, seed) / "data");
        write_csv(data.train, paths::data_csv(cfg, seed, "train").string());
        write_csv(data.val, paths::data_csv(cfg, seed, "val").string());
        write_csv(data.test, paths::data_csv(cfg, seed, "test").string());
        json meta;
        meta["config_hash"] = cfg.config_hash();
        meta["env_labels"] = data.train.env_labels();
        meta["support"] = {{"lo", data.support.lo}, {"hi", data.support.hi}};
        meta["split"] = {{"train", cfg.split.train_frac},
                         {"val", cfg.split.val_frac},
                         {"test", cfg.split.test_frac},
                         {"seed", detail::run_seed(seed, 1)}};
        meta["dgp"] = {{"variant", to_string(data.dgp->variant)},
                       {"n", data.dgp->n},
                       {"seed", data.dgp->seed},
                       {"noise_scale", data.dgp->noise_scale},
                       {"treatment_logit_slope", data.dgp->treatment_logit_slope}};
        detail::write_text(paths::meta_json(cfg, seed), meta.dump(2) + "\n");
        OracleTable table =
            oracle_table(*data.dgp, linspace(-1.0, 1.0, cfg.grid_n), data.support);
        write_oracle_csv(table, paths::oracle_csv(cfg, seed).string());
        std::cout << "simulate seed " << seed << ": train/val/test = " << data.train.size()
                  << "/" << data.val.size() << "/" << data.test.size() << ", support = ["
                  << data.support.lo << ", " << data.support.hi << "]\n";
    }
}

// ---------------------------------------------------------------------------
// fit: one serialized estimator per (method row, seed); identical cores are
// fitted once and written under every row name that uses them

inline void cmd_fit(const RunConfig& cfg) {
    cfg.validate();
    write_manifest(cfg);
    for (std::uint64_t seed : cfg.seeds) {
        SeedData data = materialize(cfg, seed);
        std::map<Method, json> core_cache;
        std::string log;
        for (const std::string& name : cfg.methods) {
            MethodRow row = method_row(name);
            auto it = core_cache.find(row.core);
            if (it == core_cache.end()) {
                auto t0 = std::chrono::steady_clock::now();
                FitConfig nuis_cfg = cfg.nuisance;
                FitConfig stage2_cfg = cfg.stage2;
                nuis_cfg.seed = derive_seed(seed, 0xF17, static_cast<std::uint64_t>(row.core));
                stage2_cfg.seed = nuis_cfg.seed;
                BoundEstimator est = fit(data.train, row.core, nuis_cfg, stage2_cfg, data.support);
                auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                              std::chrono::steady_clock::now() - t0)
                              .count();
                log += to_string(row.core) + ": " + std::to_string(ms) + " ms\n";
                it = core_cache.emplace(row.core, est.to_json()).first;
            }
            json artifact;
            artifact["row"] = name;
            artifact["core"] = to_string(row.core);
            artifact["seed"] = seed;
            artifact["config_hash"] = cfg.config_hash();
            artifact["estimator"] = it->second;
            detail::write_text(paths::model_json(cfg, seed, name), artifact.dump() + "\n");
        }
        detail::write_text(paths::seed_dir(cfg, seed) / "logs" / "fit.log", log);
        std::cout << "fit seed " << seed << ": " << cfg.methods.size() << " artifacts\n";
    }
}

inline BoundEstimator load_estimator(const RunConfig& cfg, std::uint64_t seed,
                                     const std::string& row, std::string* core = nullptr) {
    const fs::path path = paths::model_json(cfg, seed, row);
    if (!fs::exists(path)) {
        std::string expected;
        for (std::uint64_t s : cfg.seeds)
            for (const std::string& m : cfg.methods)
                expected += "\n  " + paths::model_json(cfg, s, m).string();
        throw ValidationError("missing estimator artifact " + path.string() +
                              "; expected artifacts:" + expected);
    }
    json artifact = detail::read_json(path);
    if (artifact.at("config_hash").get<std::string>() != cfg.config_hash())
        throw ValidationError("artifact " + path.string() + " has config hash " +
                              artifact.at("config_hash").get<std::string>() +
                              ", expected " + cfg.config_hash());
    if (core) *core = artifact.at("core").get<std::string>();
    return BoundEstimator::from_json(artifact.at("estimator"));
}

// ---------------------------------------------------------------------------
// evaluate: per-seed reports, aggregated reports, and a one-row-per-method
// summary CSV

struct SummaryRow {
    std::string method;
    std::string dataset;
    PairScope scope = PairScope::all;
    EvalReport scoped;     // aggregated over seeds
    EvalReport all_scope;  // aggregated over seeds
    double vacuous_rmse = 0.0;
};

inline std::vector<double> test_covariates(const Dataset& test) {
    std::vector<double> xs(test.size());
    for (int i = 0; i < test.size(); ++i) xs[i] = test.covariates()(i, 0);
    return xs;
}

inline std::vector<double> sorted_unique(std::vector<double> xs) {
    std::sort(xs.begin(), xs.end());
    xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
    return xs;
}

inline void write_summary_csv(const std::vector<SummaryRow>& rows, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write " + path.string());
    out << "method,dataset,scope,n_seeds,rmse_pooled_mean,rmse_pooled_std,rmse_upper_mean,"
           "rmse_upper_std,rmse_lower_mean,rmse_lower_std,rmse_pooled_norm_mean,"
           "coverage_all_mean,crossing_all_mean,mean_width_all_mean,vacuous_rmse_pooled,"
           "config_hash\n";
    auto fmt = [](double v) { return detail::format_double(v); };
    for (const SummaryRow& r : rows) {
        out << r.method << "," << r.dataset << "," << to_string(r.scope) << ","
            << r.scoped.n_seeds << "," << fmt(r.scoped.mean.rmse_pooled) << ","
            << fmt(r.scoped.stddev.rmse_pooled) << "," << fmt(r.scoped.mean.rmse_upper) << ","
            << fmt(r.scoped.stddev.rmse_upper) << "," << fmt(r.scoped.mean.rmse_lower) << ","
            << fmt(r.scoped.stddev.rmse_lower) << ","
            << fmt(r.scoped.mean.rmse_pooled_normalized) << ","
            << fmt(r.all_scope.mean.coverage) << "," << fmt(r.all_scope.mean.crossing_rate)
            << "," << fmt(r.all_scope.mean.mean_width) << "," << fmt(r.vacuous_rmse) << ","
            << r.scoped.config_hash << "\n";
    }
}

inline std::vector<SummaryRow> cmd_evaluate(const RunConfig& cfg) {
    cfg.validate();
    if (!cfg.source.synthetic) {
        // no oracle: descriptive summaries only
        for (std::uint64_t seed : cfg.seeds) {
            SeedData data = materialize(cfg, seed);
            int feature = 0;
            if (!cfg.describe_feature.empty()) {
                const auto& cols = cfg.source.schema.covariate_cols;
                auto it = std::find(cols.begin(), cols.end(), cfg.describe_feature);
                if (it == cols.end())
                    throw ValidationError("unknown covariate column '" + cfg.describe_feature +
                                          "'");
                feature = static_cast<int>(it - cols.begin());
            }
            for (const std::string& name : cfg.methods) {
                BoundEstimator est = load_estimator(cfg, seed, name);
                auto bins = describe_real(est, data.test, feature, cfg.describe_bins);
                fs::path path = paths::seed_dir(cfg, seed) / "describe" / (name + ".csv");
                fs::create_directories(path.parent_path());
                write_describe_csv(bins, est.num_envs(), path.string());
            }
            std::cout << "evaluate seed " << seed << ": descriptive summaries (no oracle)\n";
        }
        return {};
    }

    std::map<std::string, std::vector<EvalReport>> scoped_reports, all_reports;
    std::map<std::string, std::vector<double>> vacuous_rmse;
    for (std::uint64_t seed : cfg.seeds) {
        SeedData data = materialize(cfg, seed);
        std::vector<double> xs = test_covariates(data.test);
        OracleTable oracle = oracle_table(*data.dgp, sorted_unique(xs), data.support);
        for (const std::string& name : cfg.methods) {
            MethodRow row = method_row(name);
            BoundEstimator est = load_estimator(cfg, seed, name);
            EvalReport scoped = score(est, oracle, xs, row.scope, cfg.config_hash());
            EvalReport all = score(est, oracle, xs, PairScope::all, cfg.config_hash());
            EvalReport vac = score_vacuous(oracle, xs, row.scope, cfg.config_hash());
            json report{{"row", name},
                        {"seed", seed},
                        {"scoped", scoped.to_json()},
                        {"all", all.to_json()},
                        {"vacuous_scoped_rmse", vac.mean.rmse_pooled}};
            detail::write_text(paths::report_json(cfg, seed, name), report.dump(2) + "\n");
            scoped_reports[name].push_back(std::move(scoped));
            all_reports[name].push_back(std::move(all));
            vacuous_rmse[name].push_back(vac.mean.rmse_pooled);
        }
        std::cout << "evaluate seed " << seed << ": " << cfg.methods.size() << " reports\n";
    }

    std::vector<SummaryRow> rows;
    for (const std::string& name : cfg.methods) {
        SummaryRow row;
        row.method = name;
        row.dataset = cfg.source.name();
        row.scope = method_row(name).scope;
        row.scoped = aggregate(scoped_reports[name]);
        row.all_scope = aggregate(all_reports[name]);
        double vac = 0.0;
        for (double v : vacuous_rmse[name]) vac += v;
        row.vacuous_rmse = vac / vacuous_rmse[name].size();
        detail::write_text(paths::aggregate_json(cfg, name),
                           json{{"row", name},
                                {"scoped", row.scoped.to_json()},
                                {"all", row.all_scope.to_json()},
                                {"vacuous_scoped_rmse", row.vacuous_rmse}}
                                   .dump(2) +
                               "\n");
        rows.push_back(std::move(row));
    }
    write_summary_csv(rows, paths::summary_csv(cfg));
    return rows;
}

// ---------------------------------------------------------------------------
// export: per-core curves over the covariate grid with across-seed mean/std,
// oracle curves, and tightest-pair provenance

struct CurveStat {
    double mean = 0.0;
    double std = 0.0;
};

inline CurveStat stat_of_values(const std::vector<double>& v) {
    CurveStat s;
    for (double t : v) s.mean += t;
    s.mean /= v.size();
    double ss = 0.0;
    for (double t : v) ss += (t - s.mean) * (t - s.mean);
    s.std = v.size() > 1 ? std::sqrt(ss / (v.size() - 1)) : 0.0;
    return s;
}

// Grid curves for one core method, used by both the CSV writer and the
// acceptance checks.
struct ExportTable {
    std::vector<double> grid;
    std::vector<double> tau;
    // [pair slot][grid point]
    std::vector<std::vector<CurveStat>> oracle_upper, oracle_lower;
    std::vector<std::vector<CurveStat>> est_upper, est_lower;
    std::vector<CurveStat> oracle_comb_upper, oracle_comb_lower;
    std::vector<CurveStat> est_comb_upper, est_comb_lower;
    std::vector<std::pair<int, int>> oracle_tight_upper, oracle_tight_lower;
    std::vector<std::pair<int, int>> est_tight_upper, est_tight_lower;
    std::vector<double> est_crossed_frac;
    int num_envs = 2;

    bool est_tight_is_cross(std::size_t g) const {
        return est_tight_upper[g].first != est_tight_upper[g].second &&
               est_tight_lower[g].first != est_tight_lower[g].second;
    }
};

inline ExportTable build_export_table(const RunConfig& cfg, const std::string& core_name) {
    if (!cfg.source.synthetic)
        throw ValidationError("export requires a synthetic dataset source");
    // any configured row using this core identifies the artifact files
    std::string row_name;
    for (const std::string& name : cfg.methods)
        if (to_string(method_row(name).core) == core_name) {
            row_name = name;
            break;
        }
    if (row_name.empty())
        throw ValidationError("no configured method uses core '" + core_name + "'");

    ExportTable t;
    t.grid = linspace(-1.0, 1.0, cfg.grid_n);
    const int k = 2;
    const int slots = k * k;
    const std::size_t g = t.grid.size();
    std::vector<std::vector<std::vector<double>>> o_up(slots), o_lo(slots), e_up(slots),
        e_lo(slots);
    for (int s = 0; s < slots; ++s) {
        o_up[s].resize(g);
        o_lo[s].resize(g);
        e_up[s].resize(g);
        e_lo[s].resize(g);
    }
    std::vector<std::vector<double>> oc_up(g), oc_lo(g), ec_up(g), ec_lo(g), crossed(g);
    t.tau.resize(g);

    for (std::uint64_t seed : cfg.seeds) {
        SeedData data = materialize(cfg, seed);
        BoundEstimator est = load_estimator(cfg, seed, row_name);
        OracleTable oracle = oracle_table(*data.dgp, t.grid, data.support);
        for (std::size_t i = 0; i < g; ++i) {
            Eigen::VectorXd x(1);
            x << t.grid[i];
            BoundMatrix bm = est.predict(x);
            const BoundMatrix& ob = oracle.bounds[i];
            t.tau[i] = oracle.rows[i].tau;
            for (int e = 0; e < k; ++e) {
                for (int j = 0; j < k; ++j) {
                    o_up[e * k + j][i].push_back(ob.pair(e, j).upper);
                    o_lo[e * k + j][i].push_back(ob.pair(e, j).lower);
                    e_up[e * k + j][i].push_back(bm.pair(e, j).upper);
                    e_lo[e * k + j][i].push_back(bm.pair(e, j).lower);
                }
            }
            oc_up[i].push_back(ob.combined_upper);
            oc_lo[i].push_back(ob.combined_lower);
            ec_up[i].push_back(bm.combined_upper);
            ec_lo[i].push_back(bm.combined_lower);
            crossed[i].push_back(bm.crossed ? 1.0 : 0.0);
        }
    }

    t.oracle_upper.resize(slots);
    t.oracle_lower.resize(slots);
    t.est_upper.resize(slots);
    t.est_lower.resize(slots);
    for (int s = 0; s < slots; ++s) {
        for (std::size_t i = 0; i < g; ++i) {
            t.oracle_upper[s].push_back(stat_of_values(o_up[s][i]));
            t.oracle_lower[s].push_back(stat_of_values(o_lo[s][i]));
            t.est_upper[s].push_back(stat_of_values(e_up[s][i]));
            t.est_lower[s].push_back(stat_of_values(e_lo[s][i]));
        }
    }
    for (std::size_t i = 0; i < g; ++i) {
        t.oracle_comb_upper.push_back(stat_of_values(oc_up[i]));
        t.oracle_comb_lower.push_back(stat_of_values(oc_lo[i]));
        t.est_comb_upper.push_back(stat_of_values(ec_up[i]));
        t.est_comb_lower.push_back(stat_of_values(ec_lo[i]));
        t.est_crossed_frac.push_back(stat_of_values(crossed[i]).mean);
        // provenance from the across-seed mean curves
        auto argext = [&](const std::vector<std::vector<CurveStat>>& curves, bool min) {
            std::pair<int, int> best{0, 0};
            double best_val = min ? std::numeric_limits<double>::infinity()
                                  : -std::numeric_limits<double>::infinity();
            for (int e = 0; e < k; ++e)
                for (int j = 0; j < k; ++j) {
                    double v = curves[e * k + j][i].mean;
                    if ((min && v < best_val) || (!min && v > best_val)) {
                        best_val = v;
                        best = {e, j};
                    }
                }
            return best;
        };
        t.oracle_tight_upper.push_back(argext(t.oracle_upper, true));
        t.oracle_tight_lower.push_back(argext(t.oracle_lower, false));
        t.est_tight_upper.push_back(argext(t.est_upper, true));
        t.est_tight_lower.push_back(argext(t.est_lower, false));
    }
    return t;
}

inline void write_export_csv(const ExportTable& t, const fs::path& path, bool tightest_only) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write " + path.string());
    const int k = t.num_envs;
    auto fmt = [](double v) { return detail::format_double(v); };
    if (!tightest_only) {
        out << "x,tau";
        for (int e = 0; e < k; ++e)
            for (int j = 0; j < k; ++j)
                out << ",o_up_" << e << j << "_mean,o_up_" << e << j << "_std,o_lo_" << e << j
                    << "_mean,o_lo_" << e << j << "_std";
        out << ",o_comb_up_mean,o_comb_up_std,o_comb_lo_mean,o_comb_lo_std";
        for (int e = 0; e < k; ++e)
            for (int j = 0; j < k; ++j)
                out << ",e_up_" << e << j << "_mean,e_up_" << e << j << "_std,e_lo_" << e << j
                    << "_mean,e_lo_" << e << j << "_std";
        out << ",e_comb_up_mean,e_comb_up_std,e_comb_lo_mean,e_comb_lo_std"
            << ",o_tight_up_e,o_tight_up_j,o_tight_lo_e,o_tight_lo_j"
            << ",e_tight_up_e,e_tight_up_j,e_tight_lo_e,e_tight_lo_j,e_crossed_frac\n";
        for (std::size_t i = 0; i < t.grid.size(); ++i) {
            out << fmt(t.grid[i]) << "," << fmt(t.tau[i]);
            for (int s = 0; s < k * k; ++s)
                out << "," << fmt(t.oracle_upper[s][i].mean) << ","
                    << fmt(t.oracle_upper[s][i].std) << "," << fmt(t.oracle_lower[s][i].mean)
                    << "," << fmt(t.oracle_lower[s][i].std);
            out << "," << fmt(t.oracle_comb_upper[i].mean) << ","
                << fmt(t.oracle_comb_upper[i].std) << "," << fmt(t.oracle_comb_lower[i].mean)
                << "," << fmt(t.oracle_comb_lower[i].std);
            for (int s = 0; s < k * k; ++s)
                out << "," << fmt(t.est_upper[s][i].mean) << "," << fmt(t.est_upper[s][i].std)
                    << "," << fmt(t.est_lower[s][i].mean) << "," << fmt(t.est_lower[s][i].std);
            out << "," << fmt(t.est_comb_upper[i].mean) << "," << fmt(t.est_comb_upper[i].std)
                << "," << fmt(t.est_comb_lower[i].mean) << "," << fmt(t.est_comb_lower[i].std)
                << "," << t.oracle_tight_upper[i].first << "," << t.oracle_tight_upper[i].second
                << "," << t.oracle_tight_lower[i].first << "," << t.oracle_tight_lower[i].second
                << "," << t.est_tight_upper[i].first << "," << t.est_tight_upper[i].second << ","
                << t.est_tight_lower[i].first << "," << t.est_tight_lower[i].second << ","
                << fmt(t.est_crossed_frac[i]) << "\n";
        }
        return;
    }
    out << "x,tau,o_comb_up_mean,o_comb_lo_mean,e_comb_up_mean,e_comb_up_std,e_comb_lo_mean,"
           "e_comb_lo_std,e_tight_up_e,e_tight_up_j,e_tight_lo_e,e_tight_lo_j\n";
    for (std::size_t i = 0; i < t.grid.size(); ++i) {
        out << fmt(t.grid[i]) << "," << fmt(t.tau[i]) << "," << fmt(t.oracle_comb_upper[i].mean)
            << "," << fmt(t.oracle_comb_lower[i].mean) << "," << fmt(t.est_comb_upper[i].mean)
            << "," << fmt(t.est_comb_upper[i].std) << "," << fmt(t.est_comb_lower[i].mean) << ","
            << fmt(t.est_comb_lower[i].std) << "," << t.est_tight_upper[i].first << ","
            << t.est_tight_upper[i].second << "," << t.est_tight_lower[i].first << ","
            << t.est_tight_lower[i].second << "\n";
    }
}

inline std::vector<std::string> unique_cores(const RunConfig& cfg) {
    std::vector<std::string> cores;
    for (const std::string& name : cfg.methods) {
        std::string core = to_string(method_row(name).core);
        if (std::find(cores.begin(), cores.end(), core) == cores.end()) cores.push_back(core);
    }
    return cores;
}

inline void cmd_export(const RunConfig& cfg, bool tightest_only = false) {
    cfg.validate();
    for (const std::string& core : unique_cores(cfg)) {
        ExportTable t = build_export_table(cfg, core);
        write_export_csv(t, paths::export_csv(cfg, core, false), false);
        if (tightest_only) write_export_csv(t, paths::export_csv(cfg, core, true), true);
        std::cout << "export " << core << ": " << t.grid.size() << " grid points\n";
    }
}

// ---------------------------------------------------------------------------
// reproduce: simulate + fit + evaluate + export for both synthetic datasets,
// then compare pooled RMSEs against the embedded reference bands

struct ComparisonCell {
    std::string method;
    std::string dataset;
    double rmse_pooled = 0.0;
    double ref_mean = 0.0;
    double ref_std = 0.0;
    double band = 0.0;
    double vacuous_rmse = 0.0;
    bool beats_vacuous = false;
    bool within_band = false;

    bool pass() const { return beats_vacuous && within_band; }
};

struct ReproduceResult {
    std::vector<ComparisonCell> cells;
    std::vector<SummaryRow> summary;
    std::string config_hash;

    bool all_pass() const {
        for (const ComparisonCell& c : cells)
            if (!c.pass()) return false;
        return true;
    }
};

inline void write_comparison_csv(const std::vector<ComparisonCell>& cells, const fs::path& path,
                                 const std::string& label) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write " + path.string());
    out << "method,dataset,rmse_pooled,ref_mean,ref_std,band,vacuous_rmse,beats_vacuous,"
           "within_band,pass,label\n";
    auto fmt = [](double v) { return detail::format_double(v); };
    for (const ComparisonCell& c : cells) {
        out << c.method << "," << c.dataset << "," << fmt(c.rmse_pooled) << "," << fmt(c.ref_mean)
            << "," << fmt(c.ref_std) << "," << fmt(c.band) << "," << fmt(c.vacuous_rmse) << ","
            << (c.beats_vacuous ? 1 : 0) << "," << (c.within_band ? 1 : 0) << ","
            << (c.pass() ? 1 : 0) << "," << label << "\n";
    }
}

inline ReproduceResult cmd_reproduce(RunConfig cfg) {
    if (cfg.quick) {
        cfg.n = 2000;
        cfg.seeds = {1, 2};
    }
    cfg.validate();
    ReproduceResult result;
    std::vector<SummaryRow> merged;
    std::vector<ComparisonCell> cells;
    const std::string label = cfg.quick ? "smoke" : "full";

    for (DgpVariant variant : {DgpVariant::dataset1, DgpVariant::dataset2}) {
        RunConfig sub = cfg;
        sub.source = DataSource{};
        sub.source.variant = variant;
        sub.out_dir = (fs::path(cfg.out_dir) / to_string(variant)).string();
        cmd_simulate(sub);
        cmd_fit(sub);
        std::vector<SummaryRow> rows = cmd_evaluate(sub);
        cmd_export(sub, true);
        for (const SummaryRow& row : rows) {
            ComparisonCell cell;
            cell.method = row.method;
            cell.dataset = row.dataset;
            cell.rmse_pooled = row.scoped.mean.rmse_pooled;
            ReferenceCell ref = reference_cell(row.method, variant);
            cell.ref_mean = ref.mean;
            cell.ref_std = ref.std;
            cell.band = acceptance_band(ref, cfg.quick);
            cell.vacuous_rmse = row.vacuous_rmse;
            cell.beats_vacuous = cell.rmse_pooled < cell.vacuous_rmse;
            cell.within_band = cell.rmse_pooled <= cell.band;
            cells.push_back(cell);
            merged.push_back(row);
        }
    }

    write_summary_csv(merged, paths::summary_csv(cfg));
    write_comparison_csv(cells, fs::path(cfg.out_dir) / "comparison.csv", label);
    write_manifest(cfg);

    std::cout << "\n" << label << " benchmark comparison (config " << cfg.config_hash()
              << "):\n";
    for (const ComparisonCell& c : cells) {
        std::printf("  %-9s %-9s rmse %.4f  band <= %.4f  vacuous %.4f  [%s]\n",
                    c.method.c_str(), c.dataset.c_str(), c.rmse_pooled, c.band, c.vacuous_rmse,
                    c.pass() ? "PASS" : "FAIL");
    }
    result.cells = std::move(cells);
    result.summary = std::move(merged);
    result.config_hash = cfg.config_hash();
    return result;
}

}  // namespace catebounds
