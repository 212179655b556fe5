#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "experiments.hpp"

#ifndef FRAUDKIT_VERSION
#define FRAUDKIT_VERSION "0.0.0"
#endif

namespace fraudkit {

inline constexpr const char* kOutputEnv = "FRAUDKIT_OUTPUT_DIR";
inline constexpr const char* kDefaultOutput = "fraudkit-out";

namespace cli_detail {

struct Options {
    std::string out;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> jobs;
    int verbose = 0;
    std::string schema;
    std::string label = "Class";
    std::string config;
    std::string data;
    std::string model;
};

/// --out, else the config value, else the environment, else the built-in default.
inline std::string output_dir(const Options& o, const std::string& from_config = "") {
    if (!o.out.empty()) return o.out;
    if (!from_config.empty()) return from_config;
    if (const char* env = std::getenv(kOutputEnv); env && *env) return env;
    return kDefaultOutput;
}

/// Loads a CSV with a schema file if given; otherwise every column except
/// `label` is numeric.
inline Dataset load_data(const std::string& path, const std::string& schema, const std::string& label) {
    require(std::filesystem::exists(path), "data file '" + path + "' does not exist");
    if (!schema.empty()) return load_with_schema(path, schema);
    const auto header = read_csv_header(path);
    std::vector<std::string> features;
    bool found = false;
    for (const auto& h : header) {
        if (h == label)
            found = true;
        else
            features.push_back(h);
    }
    require(found, "label column '" + label + "' not in header of '" + path + "' (use --label or --schema)");
    auto cols = numeric_schema(features, label);
    // Keep header order.
    std::vector<ColumnSchema> ordered;
    for (const auto& h : header)
        for (const auto& c : cols)
            if (c.name == h) ordered.push_back(c);
    return load_csv(path, ordered);
}

inline void write_text(const std::string& path, const std::string& text) {
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) {
        std::error_code ec;
        std::filesystem::create_directories(parent, ec);
        require(!ec, "cannot create directory '" + parent.string() + "'");
    }
    std::ofstream out(path);
    require(static_cast<bool>(out), "cannot write '" + path + "'");
    out << text;
}

inline Config load_config(const Options& o) {
    Config cfg = Config::load(o.config);
    for (const auto& s : o.overrides) cfg.apply_override(s);
    if (o.seed) cfg.set("experiment", "seed", std::to_string(*o.seed));
    if (o.jobs) cfg.set("experiment", "jobs", std::to_string(*o.jobs));
    return cfg;
}

inline std::string fixed(double v, int digits = 4) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

inline std::string metric_cell(const std::optional<double>& v) { return v ? fixed(*v) : "undef"; }

inline void print_record(const RunRecord& r, std::ostream& out) {
    out << "experiment " << r.experiment << " (" << r.kind << "), plan " << r.plan_hash << ", seed " << r.seed << "\n";
    char line[512];
    std::snprintf(line, sizeof line, "%-12s %-8s %-10s %7s %-10s %8s %9s %8s %8s  %s\n", "dataset", "model", "sampler", "ratio",
                  "partition", "accuracy", "precision", "recall", "f1", "status");
    out << line;
    for (const auto& c : r.cells) {
        if (c.results.empty()) {
            std::snprintf(line, sizeof line, "%-12s %-8s %-10s %7s %-10s %8s %9s %8s %8s  %s\n", c.dataset.c_str(),
                          c.model.c_str(), c.sampler.c_str(), detail::shortest(c.ratio).c_str(), "-", "-", "-", "-", "-",
                          c.status.c_str());
            out << line;
        }
        for (const auto& p : c.results) {
            std::snprintf(line, sizeof line, "%-12s %-8s %-10s %7s %-10s %8s %9s %8s %8s  %s\n", c.dataset.c_str(),
                          c.model.c_str(), c.sampler.c_str(), detail::shortest(c.ratio).c_str(), p.partition.c_str(),
                          fixed(p.metrics.accuracy).c_str(), metric_cell(p.metrics.precision).c_str(),
                          metric_cell(p.metrics.recall).c_str(), metric_cell(p.metrics.f1).c_str(), c.status.c_str());
            out << line;
        }
    }
}

inline int cmd_profile(const Options& o, std::ostream& out) {
    const Dataset ds = load_data(o.data, o.schema, o.label);
    const DatasetProfile p = profile(ds);
    const std::string path = output_dir(o) + "/profile.json";
    write_text(path, to_json(p).dump(2) + "\n");
    out << o.data << ": " << p.n_rows << " rows, " << ds.n_features() << " features, " << ds.n_pos() << " positive ("
        << fixed(100.0 * static_cast<double>(ds.n_pos()) / static_cast<double>(std::max<std::size_t>(ds.n_rows(), 1)), 3)
        << "%)\n"
        << "wrote " << path << "\n";
    return 0;
}

inline int cmd_explore(const Options& o, std::ostream& out) {
    const Dataset ds = load_data(o.data, o.schema, o.label);
    const Correlation c = correlation_matrix(ds, true);
    const std::string dir = output_dir(o);
    std::filesystem::create_directories(dir);
    write_correlation_csv(c, dir + "/correlation.csv");
    write_text(dir + "/correlation.svg", svg::correlation_heatmap(c, "Correlation: " + std::filesystem::path(o.data).filename().string()));
    out << "correlation over " << c.names.size() << " columns\n";
    if (!c.constant_columns.empty()) out << "constant columns (correlation 0): " << detail::join(c.constant_columns) << "\n";
    out << "wrote " << dir << "/correlation.csv\nwrote " << dir << "/correlation.svg\n";
    return 0;
}

/// Spec file: [synthetic] n_rows, n_features, fraud_fraction, separation, seed, output.
inline int cmd_gen_synth(const Options& o, std::ostream& out) {
    Config cfg = Config::load(o.config);
    for (const auto& s : o.overrides) cfg.apply_override(s);
    if (o.seed) cfg.set("synthetic", "seed", std::to_string(*o.seed));
    SyntheticSpec s;
    s.n_rows = cfg.get_size("synthetic", "n_rows", s.n_rows);
    s.n_features = cfg.get_size("synthetic", "n_features", s.n_features);
    s.fraud_fraction = cfg.get_double("synthetic", "fraud_fraction", s.fraud_fraction);
    s.separation = cfg.get_double("synthetic", "separation", s.separation);
    s.seed = cfg.get_u64("synthetic", "seed", 0);
    const std::string file = cfg.get("synthetic", "output", "synthetic.csv");
    const auto unused = cfg.unused_keys();
    require(unused.empty(), "unknown spec keys: " + detail::join(unused));
    const Dataset ds = gen_synthetic(s);
    const std::string dir = output_dir(o);
    std::filesystem::create_directories(dir);
    write_csv(ds, dir + "/" + file);
    Config echo;
    echo.set("synthetic", "n_rows", std::to_string(s.n_rows));
    echo.set("synthetic", "n_features", std::to_string(s.n_features));
    echo.set("synthetic", "fraud_fraction", detail::shortest(s.fraud_fraction));
    echo.set("synthetic", "separation", detail::shortest(s.separation));
    echo.set("synthetic", "seed", std::to_string(s.seed));
    echo.set("synthetic", "output", file);
    write_text(dir + "/resolved.cfg", echo.dump());
    out << "generated " << ds.n_rows() << " rows (" << ds.n_pos() << " positive), " << ds.n_features() << " features\n"
        << "wrote " << dir << "/" << file << "\n";
    return 0;
}

inline int cmd_experiment(const Options& o, std::optional<ExperimentKind> force, bool single, std::ostream& out,
                          std::ostream& err) {
    Config cfg = load_config(o);
    ExperimentPlan plan = plan_from_config(cfg);
    if (force) plan.kind = *force;
    plan.output_dir = output_dir(o, plan.output_dir);
    if (single) {
        require(plan.datasets.size() == 1 && plan.models.size() == 1 && plan.samplers.size() == 1,
                "train needs exactly one dataset, one model kind and one sampler");
        plan.kind = ExperimentKind::run;
        plan.save_models = true;
    }
    validate_plan(plan);
    const std::string resolved = plan_to_config(plan).dump();
    write_text(plan.output_dir + "/resolved.cfg", resolved);
    if (o.verbose) err << "resolved configuration:\n" << resolved;
    const RunRecord rec = run_experiment(plan);
    const auto files = emit_report(rec, plan.output_dir, {ReportFormat::json, ReportFormat::csv, ReportFormat::svg}, plan.csv_timings);
    print_record(rec, out);
    for (const auto& f : files) out << "wrote " << f << "\n";
    if (single && !rec.cells.front().model_file.empty()) out << "model " << plan.output_dir << "/" << rec.cells.front().model_file << "\n";
    bool any_failed = false;
    for (const auto& c : rec.cells)
        if (c.status.rfind("failed", 0) == 0) {
            any_failed = true;
            err << "cell " << c.dataset << "/" << c.model << "/" << c.sampler << " " << c.status << "\n";
        }
    return single && any_failed ? 2 : 0;
}

inline int cmd_evaluate(const Options& o, std::ostream& out) {
    LoadedModel lm = load_model(o.model);
    Dataset ds = load_data(o.data, o.schema, o.label);
    if (lm.scaler) {
        require(lm.scaler->mean.size() == ds.n_features(), "data has " + std::to_string(ds.n_features()) +
                                                               " features but the model's scaler expects " +
                                                               std::to_string(lm.scaler->mean.size()));
        ds = apply_scaler(ds, *lm.scaler);
    }
    const ConfusionMatrix cm = confusion(ds.labels, lm.model->classify(ds.features, lm.threshold));
    const MetricReport m = metrics(cm);
    nlohmann::json j = {{"model", o.model},
                        {"data", o.data},
                        {"kind", to_string(lm.model->kind())},
                        {"threshold", lm.threshold},
                        {"confusion", {{"tp", cm.tp}, {"tn", cm.tn}, {"fp", cm.fp}, {"fn", cm.fn}}},
                        {"metrics", to_json(m)}};
    const std::string path = output_dir(o) + "/evaluation.json";
    write_text(path, j.dump(2) + "\n");
    out << "rows " << cm.total() << "  tp " << cm.tp << "  tn " << cm.tn << "  fp " << cm.fp << "  fn " << cm.fn << "\n"
        << "accuracy " << fixed(m.accuracy) << "  precision " << metric_cell(m.precision) << "  recall "
        << metric_cell(m.recall) << "  f1 " << metric_cell(m.f1) << "\n"
        << "wrote " << path << "\n";
    return 0;
}

}  // namespace cli_detail

/// Entry point. Exit codes: 0 success, 1 usage or validation error, 2 runtime failure.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    using cli_detail::Options;
    Options o;
    CLI::App app{"fraudkit: credit card fraud detection experiments", "fraudkit"};
    app.set_version_flag("--version", std::string(FRAUDKIT_VERSION));
    app.require_subcommand(1);
    app.fallthrough();
    app.add_option("-o,--out", o.out, std::string("output directory (default: $") + kOutputEnv + " or " + kDefaultOutput + ")");
    app.add_option("--set", o.overrides, "override a config value: section.key=value (repeatable)");
    app.add_option("--seed", o.seed, "global seed; every stage seed is derived from it");
    app.add_option("--jobs", o.jobs, "maximum number of grid cells run in parallel")->check(CLI::PositiveNumber);
    app.add_flag("-v,--verbose", o.verbose, "echo the resolved configuration to stderr");

    auto data_cmd = [&](const char* name, const char* help) {
        auto* c = app.add_subcommand(name, help);
        c->add_option("data", o.data, "CSV file")->required();
        c->add_option("--schema", o.schema, "schema file");
        c->add_option("--label", o.label, "label column when no schema is given (default Class)");
        return c;
    };
    auto* profile_cmd = data_cmd("profile", "write the dataset profile (profile.json)");
    auto* explore_cmd = data_cmd("explore", "write the correlation matrix (correlation.csv, correlation.svg)");
    auto* gen_cmd = app.add_subcommand("gen-synth", "generate a synthetic dataset from a spec file");
    gen_cmd->add_option("spec", o.config, "spec file")->required();
    auto* train_cmd = app.add_subcommand("train", "train and evaluate a single model; saves the model file");
    train_cmd->add_option("config", o.config, "plan file with one dataset, model and sampler")->required();
    auto* eval_cmd = app.add_subcommand("evaluate", "evaluate a saved model on a CSV file");
    eval_cmd->add_option("model", o.model, "model file")->required();
    eval_cmd->add_option("data", o.data, "CSV file")->required();
    eval_cmd->add_option("--schema", o.schema, "schema file");
    eval_cmd->add_option("--label", o.label, "label column when no schema is given (default Class)");
    auto* sweep_cmd = app.add_subcommand("sweep-imbalance", "train across majority:minority ratios (random under-sampling)");
    sweep_cmd->add_option("config", o.config, "plan file")->required();
    auto* compare_cmd = app.add_subcommand("compare-sampling", "train with each configured sampler");
    compare_cmd->add_option("config", o.config, "plan file")->required();
    auto* run_cmd = app.add_subcommand("run", "run the plan's full grid");
    run_cmd->add_option("plan", o.config, "plan file")->required();

    if (args.empty()) {
        out << app.help();
        return 1;
    }
    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        app.parse(rev);
    } catch (const CLI::Success& e) {
        app.exit(e, out, err);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        out << app.help();
        return 1;
    }

    try {
        if (*profile_cmd) return cli_detail::cmd_profile(o, out);
        if (*explore_cmd) return cli_detail::cmd_explore(o, out);
        if (*gen_cmd) return cli_detail::cmd_gen_synth(o, out);
        if (*train_cmd) return cli_detail::cmd_experiment(o, std::nullopt, true, out, err);
        if (*eval_cmd) return cli_detail::cmd_evaluate(o, out);
        if (*sweep_cmd) return cli_detail::cmd_experiment(o, ExperimentKind::sweep_imbalance, false, out, err);
        if (*compare_cmd) return cli_detail::cmd_experiment(o, ExperimentKind::compare_sampling, false, out, err);
        if (*run_cmd) return cli_detail::cmd_experiment(o, std::nullopt, false, out, err);
    } catch (const InvalidArgument& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const nlohmann::json::exception& e) {
        err << "error: malformed JSON input: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "runtime failure: " << e.what() << "\n";
        return 2;
    }
    out << app.help();
    return 1;
}

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    return run_cli(std::vector<std::string>(argv + 1, argv + argc), out, err);
}

}  // namespace fraudkit
