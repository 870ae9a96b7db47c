// Command-line front end: simulate synthetic data with oracle tables, fit
// bound estimators, evaluate them, export plot-ready curves, and reproduce
// the synthetic benchmark grid.

#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "catebounds/pipeline.hpp"

using namespace catebounds;

namespace {

SupportSpec parse_support(const std::string& text) {
    SupportSpec spec;
    if (text == "minmax") {
        spec.mode = SupportMode::empirical_minmax;
        return spec;
    }
    if (text.rfind("quantile:", 0) == 0) {
        spec.mode = SupportMode::quantile;
        spec.alpha = std::stod(text.substr(9));
        return spec;
    }
    if (text.rfind("explicit:", 0) == 0) {
        spec.mode = SupportMode::explicit_interval;
        const std::string rest = text.substr(9);
        auto comma = rest.find(',');
        if (comma == std::string::npos)
            throw ValidationError("explicit support needs 'explicit:lo,hi'");
        spec.lo = std::stod(rest.substr(0, comma));
        spec.hi = std::stod(rest.substr(comma + 1));
        return spec;
    }
    throw ValidationError("unknown support mode '" + text +
                          "' (expected minmax, quantile:ALPHA, or explicit:LO,HI)");
}

void apply_config_file(RunConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot read config file " + path);
    json j;
    in >> j;
    if (j.contains("dataset")) cfg.source = DataSource::parse(j["dataset"].get<std::string>());
    if (j.contains("schema")) {
        const json& s = j["schema"];
        cfg.source.schema.env_col = s.value("env", cfg.source.schema.env_col);
        cfg.source.schema.treatment_col = s.value("treatment", cfg.source.schema.treatment_col);
        cfg.source.schema.outcome_col = s.value("outcome", cfg.source.schema.outcome_col);
        if (s.contains("covariates"))
            cfg.source.schema.covariate_cols = s["covariates"].get<std::vector<std::string>>();
    }
    if (j.contains("n")) cfg.n = j["n"].get<int>();
    if (j.contains("seeds")) cfg.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    if (j.contains("split")) {
        cfg.split.train_frac = j["split"].value("train", cfg.split.train_frac);
        cfg.split.val_frac = j["split"].value("val", cfg.split.val_frac);
        cfg.split.test_frac = j["split"].value("test", cfg.split.test_frac);
    }
    if (j.contains("support")) cfg.support = parse_support(j["support"].get<std::string>());
    if (j.contains("nuisance")) cfg.nuisance = FitConfig::from_json(j["nuisance"]);
    if (j.contains("stage2")) cfg.stage2 = FitConfig::from_json(j["stage2"]);
    if (j.contains("methods")) cfg.methods = j["methods"].get<std::vector<std::string>>();
    if (j.contains("grid_n")) cfg.grid_n = j["grid_n"].get<int>();
    if (j.contains("out")) cfg.out_dir = j["out"].get<std::string>();
    if (j.contains("quick")) cfg.quick = j["quick"].get<bool>();
    if (j.contains("describe_feature"))
        cfg.describe_feature = j["describe_feature"].get<std::string>();
    if (j.contains("describe_bins")) cfg.describe_bins = j["describe_bins"].get<int>();
}

struct CliFlags {
    std::string config_file;
    std::string dataset;
    std::string support;
    std::string family;
    std::string stage2_family;
    std::vector<std::string> methods;
    std::vector<std::uint64_t> seeds;
    std::vector<std::string> covariate_cols;
    std::string env_col, treatment_col, outcome_col;
    std::string describe_feature;
    int describe_bins = 0;
    int n = 0;
    int grid = 0;
    int folds = 0;
    std::string out;
    bool quick = false;
    bool tightest_only = false;
};

void add_common(CLI::App* cmd, CliFlags& flags) {
    cmd->add_option("--config", flags.config_file, "JSON config file; flags override its values");
    cmd->add_option("--dataset", flags.dataset, "dataset1 | dataset2 | csv:PATH");
    cmd->add_option("-n,--samples", flags.n, "synthetic sample count");
    cmd->add_option("--seeds", flags.seeds, "run seeds")->delimiter(',');
    cmd->add_option("--methods", flags.methods,
                    "wb-naive, wb, cb-naive, cb-pi, cb-ra, cb-ipw, cb-dr")
        ->delimiter(',');
    cmd->add_option("--support", flags.support, "minmax | quantile:ALPHA | explicit:LO,HI");
    cmd->add_option("--family", flags.family, "ridge-fourier | mlp | knn (stage 1)");
    cmd->add_option("--stage2-family", flags.stage2_family, "stage-2 model family");
    cmd->add_option("--folds", flags.folds, "cross-fitting folds (1 = off)");
    cmd->add_option("--grid", flags.grid, "export/oracle grid resolution");
    cmd->add_option("--out", flags.out, "output directory");
    cmd->add_option("--env-col", flags.env_col, "CSV environment column");
    cmd->add_option("--treatment-col", flags.treatment_col, "CSV treatment column");
    cmd->add_option("--outcome-col", flags.outcome_col, "CSV outcome column");
    cmd->add_option("--covariate-cols", flags.covariate_cols, "CSV covariate columns")
        ->delimiter(',');
    cmd->add_option("--describe-feature", flags.describe_feature,
                    "covariate to bin by in real-data summaries");
    cmd->add_option("--describe-bins", flags.describe_bins, "bins for real-data summaries");
}

RunConfig build_config(const CliFlags& flags) {
    RunConfig cfg;
    if (!flags.config_file.empty()) apply_config_file(cfg, flags.config_file);
    if (!flags.dataset.empty()) cfg.source = DataSource::parse(flags.dataset);
    if (flags.n > 0) cfg.n = flags.n;
    if (!flags.seeds.empty()) cfg.seeds = flags.seeds;
    if (!flags.methods.empty()) cfg.methods = flags.methods;
    if (!flags.support.empty()) cfg.support = parse_support(flags.support);
    if (!flags.family.empty()) {
        cfg.nuisance.family = model_family_from_string(flags.family);
        cfg.stage2.family = cfg.nuisance.family;
    }
    if (!flags.stage2_family.empty())
        cfg.stage2.family = model_family_from_string(flags.stage2_family);
    if (flags.folds > 0) cfg.nuisance.cross_fit_folds = flags.folds;
    if (flags.grid > 0) cfg.grid_n = flags.grid;
    if (!flags.out.empty()) cfg.out_dir = flags.out;
    if (!flags.env_col.empty()) cfg.source.schema.env_col = flags.env_col;
    if (!flags.treatment_col.empty()) cfg.source.schema.treatment_col = flags.treatment_col;
    if (!flags.outcome_col.empty()) cfg.source.schema.outcome_col = flags.outcome_col;
    if (!flags.covariate_cols.empty()) cfg.source.schema.covariate_cols = flags.covariate_cols;
    if (!flags.describe_feature.empty()) cfg.describe_feature = flags.describe_feature;
    if (flags.describe_bins > 0) cfg.describe_bins = flags.describe_bins;
    cfg.quick = flags.quick;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Partial-identification bounds for conditional treatment effects across "
                 "environments"};
    app.require_subcommand(1);

    CliFlags flags;
    CLI::App* simulate = app.add_subcommand(
        "simulate", "Sample synthetic datasets and write train/val/test CSVs plus oracle tables");
    CLI::App* fit_cmd =
        app.add_subcommand("fit", "Fit bound estimators, one artifact per (method, seed)");
    CLI::App* evaluate = app.add_subcommand(
        "evaluate", "Score fitted estimators against the oracle (or summarize real data)");
    CLI::App* export_cmd =
        app.add_subcommand("export", "Write plot-ready bound curves over the covariate grid");
    CLI::App* reproduce = app.add_subcommand(
        "reproduce", "Run the full synthetic benchmark grid and compare to reference values");
    for (CLI::App* cmd : {simulate, fit_cmd, evaluate, export_cmd, reproduce})
        add_common(cmd, flags);
    export_cmd->add_flag("--tightest-only", flags.tightest_only,
                         "also write CSVs restricted to the tightest pair per point");
    reproduce->add_flag("--quick", flags.quick, "smoke-scale run (n=2000, 2 seeds, wider bands)");

    CLI11_PARSE(app, argc, argv);

    try {
        RunConfig cfg = build_config(flags);
        if (simulate->parsed()) {
            cmd_simulate(cfg);
        } else if (fit_cmd->parsed()) {
            cmd_fit(cfg);
        } else if (evaluate->parsed()) {
            cmd_evaluate(cfg);
        } else if (export_cmd->parsed()) {
            cmd_export(cfg, flags.tightest_only);
        } else if (reproduce->parsed()) {
            cmd_reproduce(cfg);
        }
        return 0;
    } catch (const ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 1;
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return 1;
    } catch (const DomainError& e) {
        std::cerr << "domain error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
