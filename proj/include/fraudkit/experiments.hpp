#pragma once

#include <atomic>
#include <charconv>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "config.hpp"
#include "ingest.hpp"
#include "metrics.hpp"
#include "models.hpp"
#include "preprocess.hpp"
#include "resample.hpp"
#include "svg.hpp"
#include "synthetic.hpp"

namespace fraudkit {

// ---------------------------------------------------------------------------
// Plan

struct DataSource {
    enum class Kind { file, synthetic };
    std::string name = "data";
    Kind kind = Kind::synthetic;
    std::string path;
    std::string schema;
    std::vector<std::string> drop;  // uninformative columns removed after loading
    std::size_t subsample = 0;      // 0: use every row; otherwise fraction-preserving subsample
    SyntheticSpec synthetic;

    friend bool operator==(const DataSource&, const DataSource&) = default;
};

struct PreprocessOptions {
    bool standardize = true;
    bool stratified = false;
    double test_frac = 0.035;
    double val_frac = 0.2;

    friend bool operator==(const PreprocessOptions&, const PreprocessOptions&) = default;
};

enum class ExperimentKind { run, sweep_imbalance, compare_sampling };

inline std::string to_string(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::run: return "run";
        case ExperimentKind::sweep_imbalance: return "sweep-imbalance";
        case ExperimentKind::compare_sampling: return "compare-sampling";
    }
    return "?";
}

inline ExperimentKind parse_experiment_kind(const std::string& s) {
    if (s == "run") return ExperimentKind::run;
    if (s == "sweep-imbalance") return ExperimentKind::sweep_imbalance;
    if (s == "compare-sampling") return ExperimentKind::compare_sampling;
    throw InvalidArgument("unknown experiment kind '" + s + "'");
}

inline std::vector<double> default_ratio_grid() { return {1, 2, 5, 10, 25, 50, 100}; }

inline std::vector<SamplerConfig> default_sampler_grid() {
    return {{SamplerMethod::none, 1, 0, 1.0, 0},
            {SamplerMethod::rus, 1, 0, 1.0, 0},
            {SamplerMethod::nearmiss, 1, 0, 1.0, 0},
            {SamplerMethod::smote, 1, 0, 1.0, 0}};
}

struct ExperimentPlan {
    std::string name = "experiment";
    ExperimentKind kind = ExperimentKind::run;
    std::vector<DataSource> datasets;
    PreprocessOptions preprocess;
    std::vector<SamplerConfig> samplers = {SamplerConfig{}};
    std::vector<ModelSpec> models;
    std::vector<double> ratios = default_ratio_grid();
    std::uint64_t seed = 0;
    std::string output_dir;
    std::size_t jobs = 1;
    bool csv_timings = false;
    bool save_models = true;

    friend bool operator==(const ExperimentPlan&, const ExperimentPlan&) = default;
};

/// Throws InvalidArgument describing the first problem found.
inline void validate_plan(const ExperimentPlan& plan) {
    require(!plan.datasets.empty(), "plan has no datasets");
    require(!plan.models.empty(), "plan has no models");
    std::set<std::string> names;
    for (const auto& d : plan.datasets) {
        require(names.insert(d.name).second, "duplicate dataset name '" + d.name + "'");
        if (d.kind == DataSource::Kind::file) {
            require(std::filesystem::exists(d.path), "data file '" + d.path + "' does not exist");
            require(std::filesystem::exists(d.schema), "schema file '" + d.schema + "' does not exist");
        } else {
            const auto& s = d.synthetic;
            require(s.n_rows >= 3 && s.n_features >= 1, "synthetic dataset '" + d.name + "' needs n_rows >= 3, n_features >= 1");
            require(s.fraud_fraction > 0 && s.fraud_fraction < 1, "synthetic fraud_fraction must be in (0,1)");
            require(s.separation >= 0, "synthetic separation must be >= 0");
        }
    }
    require(plan.preprocess.test_frac > 0 && plan.preprocess.test_frac < 1, "test_frac must be in (0,1)");
    require(plan.preprocess.val_frac > 0 && plan.preprocess.val_frac < 1, "val_frac must be in (0,1)");
    require(plan.jobs >= 1, "jobs must be >= 1");
    switch (plan.kind) {
        case ExperimentKind::sweep_imbalance:
            require(!plan.ratios.empty(), "imbalance sweep needs a non-empty ratio grid");
            for (std::size_t i = 0; i < plan.ratios.size(); ++i) {
                require(plan.ratios[i] >= 1.0, "imbalance ratios must be >= 1");
                require(i == 0 || plan.ratios[i] > plan.ratios[i - 1], "imbalance ratios must be strictly ascending");
            }
            break;
        case ExperimentKind::run:
        case ExperimentKind::compare_sampling:
            require(!plan.samplers.empty(), "plan has no samplers");
            for (const auto& s : plan.samplers) {
                require(s.ratio > 0, "sampler ratio must be positive");
                if (s.method == SamplerMethod::rus || s.method == SamplerMethod::nearmiss)
                    require(s.ratio >= 1.0, "under-sampling ratio (majority/minority) must be >= 1");
                if (s.method == SamplerMethod::smote) require(s.ratio <= 1.0, "SMOTE ratio (minority/majority) must be in (0,1]");
                if (s.method == SamplerMethod::nearmiss)
                    require(s.nearmiss_version >= 1 && s.nearmiss_version <= 3, "NearMiss version must be 1, 2 or 3");
            }
            break;
    }
}

namespace detail {

/// Shortest decimal text that parses back to the same double.
inline std::string shortest(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

inline std::string join(const std::vector<std::string>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + v[i];
    return out;
}

inline std::string join(const std::vector<double>& v) {
    std::vector<std::string> s;
    for (double d : v) s.push_back(shortest(d));
    return join(s);
}

}  // namespace detail

/// Reads a plan from config sections. Dataset sections are named "data" or
/// "data.<name>". Synthetic datasets without an explicit seed get one derived
/// from the experiment seed and their name.
inline ExperimentPlan plan_from_config(const Config& cfg) {
    ExperimentPlan p;
    p.name = cfg.get("experiment", "name", "experiment");
    p.kind = parse_experiment_kind(cfg.get("experiment", "kind", "run"));
    p.seed = cfg.get_u64("experiment", "seed", 0);
    p.output_dir = cfg.get("experiment", "output", "");
    p.jobs = cfg.get_size("experiment", "jobs", 1);
    p.csv_timings = cfg.get_bool("experiment", "csv_timings", false);
    p.save_models = cfg.get_bool("experiment", "save_models", true);
    p.ratios = cfg.get_double_list("experiment", "ratios", default_ratio_grid());

    // Dataset sections in sorted order ("data" first, then "data.<name>").
    std::vector<std::string> data_sections;
    for (const auto& s : {std::string("data")})
        if (cfg.has_section(s)) data_sections.push_back(s);
    {
        const std::string dump = cfg.dump();
        std::istringstream in(dump);
        std::string line;
        while (std::getline(in, line))
            if (line.rfind("[data.", 0) == 0) data_sections.push_back(line.substr(1, line.size() - 2));
    }
    for (const auto& sec : data_sections) {
        DataSource d;
        d.name = sec == "data" ? cfg.get(sec, "name", "data") : sec.substr(5);
        const std::string source = cfg.get(sec, "source", "synthetic");
        if (source == "file") {
            d.kind = DataSource::Kind::file;
            d.path = cfg.get(sec, "path");
            d.schema = cfg.get(sec, "schema");
            d.drop = cfg.get_list(sec, "drop", {});
            d.subsample = cfg.get_size(sec, "subsample", 0);
        } else if (source == "synthetic") {
            d.kind = DataSource::Kind::synthetic;
            d.synthetic.n_rows = cfg.get_size(sec, "n_rows", 1000);
            d.synthetic.n_features = cfg.get_size(sec, "n_features", 10);
            d.synthetic.fraud_fraction = cfg.get_double(sec, "fraud_fraction", 0.01);
            d.synthetic.separation = cfg.get_double(sec, "separation", 2.0);
            d.synthetic.seed = cfg.get_u64(sec, "seed", derive_seed(p.seed, "data:" + d.name));
        } else {
            throw InvalidArgument("[" + sec + "] source must be 'file' or 'synthetic', got '" + source + "'");
        }
        p.datasets.push_back(std::move(d));
    }

    p.preprocess.standardize = cfg.get_bool("preprocess", "standardize", true);
    p.preprocess.stratified = cfg.get_bool("preprocess", "stratified", false);
    p.preprocess.test_frac = cfg.get_double("preprocess", "test_frac", 0.035);
    p.preprocess.val_frac = cfg.get_double("preprocess", "val_frac", 0.2);

    {
        const auto methods = cfg.get_list("samplers", "methods", {"none"});
        const auto versions = cfg.get_list("samplers", "nearmiss_versions", {"1"});
        const double under = cfg.get_double("samplers", "under_ratio", 1.0);
        const double over = cfg.get_double("samplers", "smote_ratio", 1.0);
        const std::size_t nk = cfg.get_size("samplers", "nearmiss_k", 3);
        const std::size_t sk = cfg.get_size("samplers", "smote_k", 5);
        p.samplers.clear();
        for (const auto& m : methods) {
            SamplerConfig s;
            s.method = parse_sampler_method(m);
            switch (s.method) {
                case SamplerMethod::none: s.ratio = 1.0; break;
                case SamplerMethod::rus: s.ratio = under; break;
                case SamplerMethod::smote:
                    s.ratio = over;
                    s.k_neighbors = sk;
                    break;
                case SamplerMethod::nearmiss:
                    s.ratio = under;
                    s.k_neighbors = nk;
                    for (const auto& v : versions) {
                        s.nearmiss_version = std::stoi(v);
                        p.samplers.push_back(s);
                    }
                    continue;
            }
            p.samplers.push_back(s);
        }
    }

    {
        ModelSpec base;
        base.epochs = cfg.get_size("models", "epochs", base.epochs);
        base.batch = cfg.get_size("models", "batch", base.batch);
        base.patience = cfg.get_size("models", "patience", base.patience);
        base.lr = cfg.get_double("models", "lr", base.lr);
        base.logreg_lr = cfg.get_double("models", "logreg_lr", base.logreg_lr);
        base.lstm_hidden = cfg.get_size("models", "lstm_hidden", base.lstm_hidden);
        base.lstm_inner = nn::parse_activation(cfg.get("models", "lstm_inner", "relu"));
        const std::string grid = cfg.get("models", "grid", "5x6");
        {
            const auto x = grid.find('x');
            require(x != std::string::npos, "[models] grid must look like HxW");
            base.grid_h = std::stoul(grid.substr(0, x));
            base.grid_w = std::stoul(grid.substr(x + 1));
        }
        base.max_depth = cfg.get_size("models", "max_depth", base.max_depth);
        base.min_leaf = cfg.get_size("models", "min_leaf", base.min_leaf);
        base.n_trees = cfg.get_size("models", "n_trees", base.n_trees);
        base.max_features = cfg.get_size("models", "max_features", base.max_features);
        base.bootstrap = cfg.get_bool("models", "bootstrap", base.bootstrap);
        base.threshold = cfg.get_double("models", "threshold", base.threshold);
        for (const auto& k : cfg.get_list("models", "kinds", {"logreg"})) {
            ModelSpec m = base;
            m.kind = parse_model_kind(k);
            p.models.push_back(m);
        }
    }
    const auto unused = cfg.unused_keys();
    require(unused.empty(), "unknown plan keys: " + detail::join(unused));
    return p;
}

/// Fully resolved config for a plan. plan_from_config(plan_to_config(p)) == p for
/// plans whose models share hyperparameters (the config form has one [models] block).
inline Config plan_to_config(const ExperimentPlan& p) {
    Config c;
    c.set("experiment", "name", p.name);
    c.set("experiment", "kind", to_string(p.kind));
    c.set("experiment", "seed", std::to_string(p.seed));
    if (!p.output_dir.empty()) c.set("experiment", "output", p.output_dir);
    c.set("experiment", "jobs", std::to_string(p.jobs));
    c.set("experiment", "csv_timings", p.csv_timings ? "true" : "false");
    c.set("experiment", "save_models", p.save_models ? "true" : "false");
    c.set("experiment", "ratios", detail::join(p.ratios));
    for (const auto& d : p.datasets) {
        const std::string sec = "data." + d.name;
        if (d.kind == DataSource::Kind::file) {
            c.set(sec, "source", "file");
            c.set(sec, "path", d.path);
            c.set(sec, "schema", d.schema);
            if (!d.drop.empty()) c.set(sec, "drop", detail::join(d.drop));
            if (d.subsample) c.set(sec, "subsample", std::to_string(d.subsample));
        } else {
            c.set(sec, "source", "synthetic");
            c.set(sec, "n_rows", std::to_string(d.synthetic.n_rows));
            c.set(sec, "n_features", std::to_string(d.synthetic.n_features));
            c.set(sec, "fraud_fraction", detail::shortest(d.synthetic.fraud_fraction));
            c.set(sec, "separation", detail::shortest(d.synthetic.separation));
            c.set(sec, "seed", std::to_string(d.synthetic.seed));
        }
    }
    c.set("preprocess", "standardize", p.preprocess.standardize ? "true" : "false");
    c.set("preprocess", "stratified", p.preprocess.stratified ? "true" : "false");
    c.set("preprocess", "test_frac", detail::shortest(p.preprocess.test_frac));
    c.set("preprocess", "val_frac", detail::shortest(p.preprocess.val_frac));

    std::vector<std::string> methods, versions;
    double under = 1.0, over = 1.0;
    std::size_t nk = 3, sk = 5;
    for (const auto& s : p.samplers) {
        if (s.method == SamplerMethod::nearmiss) {
            versions.push_back(std::to_string(s.nearmiss_version));
            if (std::find(methods.begin(), methods.end(), "nearmiss") == methods.end()) methods.push_back("nearmiss");
            under = s.ratio;
            nk = s.k();
        } else {
            methods.push_back(to_string(s.method));
            if (s.method == SamplerMethod::rus) under = s.ratio;
            if (s.method == SamplerMethod::smote) {
                over = s.ratio;
                sk = s.k();
            }
        }
    }
    c.set("samplers", "methods", detail::join(methods));
    c.set("samplers", "nearmiss_versions", versions.empty() ? "1" : detail::join(versions));
    c.set("samplers", "under_ratio", detail::shortest(under));
    c.set("samplers", "smote_ratio", detail::shortest(over));
    c.set("samplers", "nearmiss_k", std::to_string(nk));
    c.set("samplers", "smote_k", std::to_string(sk));

    std::vector<std::string> kinds;
    for (const auto& m : p.models) kinds.push_back(to_string(m.kind));
    const ModelSpec m = p.models.empty() ? ModelSpec{} : p.models.front();
    c.set("models", "kinds", detail::join(kinds));
    c.set("models", "epochs", std::to_string(m.epochs));
    c.set("models", "batch", std::to_string(m.batch));
    c.set("models", "patience", std::to_string(m.patience));
    c.set("models", "lr", detail::shortest(m.lr));
    c.set("models", "logreg_lr", detail::shortest(m.logreg_lr));
    c.set("models", "lstm_hidden", std::to_string(m.lstm_hidden));
    c.set("models", "lstm_inner", nn::to_string(m.lstm_inner));
    c.set("models", "grid", std::to_string(m.grid_h) + "x" + std::to_string(m.grid_w));
    c.set("models", "max_depth", std::to_string(m.max_depth));
    c.set("models", "min_leaf", std::to_string(m.min_leaf));
    c.set("models", "n_trees", std::to_string(m.n_trees));
    c.set("models", "max_features", std::to_string(m.max_features));
    c.set("models", "bootstrap", m.bootstrap ? "true" : "false");
    c.set("models", "threshold", detail::shortest(m.threshold));
    return c;
}

/// Hash of everything that affects numeric results (output location and job
/// count excluded).
inline std::string plan_hash(ExperimentPlan p) {
    p.output_dir.clear();
    p.jobs = 1;
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(plan_to_config(p).dump())));
    return buf;
}

// ---------------------------------------------------------------------------
// Data preparation

inline Dataset load_source(const DataSource& d, std::uint64_t seed) {
    Dataset ds;
    if (d.kind == DataSource::Kind::synthetic) {
        ds = gen_synthetic(d.synthetic);
    } else {
        ds = load_with_schema(d.path, d.schema);
        for (const auto& col : d.drop) ds = drop_uninformative(ds, col);
        if (d.subsample && d.subsample < ds.n_rows()) ds = subsample(ds, d.subsample, true, derive_seed(seed, "subsample:" + d.name));
    }
    ds.name = d.name;
    return ds;
}

/// Callback invoked with every dataset that reaches a fitting stage
/// ("scaler" or "sampler"); used to audit that only training rows get there.
using Probe = std::function<void(std::string_view stage, const Dataset&)>;

struct Partitions {
    Dataset train;
    Dataset validation;
    Dataset test;
    SplitIndices split;
    std::optional<ScalerParams> scaler;
};

/// Splits, then fits the scaler on the training partition only and applies it
/// to all three partitions.
inline Partitions prepare(const Dataset& ds, const PreprocessOptions& opt, std::uint64_t split_seed, const Probe& probe = {}) {
    Partitions p;
    p.split = split(ds, opt.test_frac, opt.val_frac, split_seed, opt.stratified);
    p.train = ds.select_rows(p.split.train);
    p.validation = ds.select_rows(p.split.validation);
    p.test = ds.select_rows(p.split.test);
    if (opt.standardize) {
        if (probe) probe("scaler", p.train);
        p.scaler = fit_scaler(p.train);
        p.train = apply_scaler(p.train, *p.scaler);
        p.validation = apply_scaler(p.validation, *p.scaler);
        p.test = apply_scaler(p.test, *p.scaler);
    }
    return p;
}

// ---------------------------------------------------------------------------
// Cells and records

struct PartitionResult {
    std::string partition;  // "validation" or "test"
    ConfusionMatrix confusion;
    MetricReport metrics;

    friend bool operator==(const PartitionResult&, const PartitionResult&) = default;
};

struct CellResult {
    std::string dataset;
    std::string model;
    std::string sampler;
    double ratio = 1.0;
    std::string status = "ok";  // "ok", "skipped: <reason>", "failed: <reason>"
    std::size_t train_rows = 0;
    std::size_t train_pos = 0;
    std::size_t epochs = 0;
    double seconds = 0.0;
    std::string model_file;
    std::vector<PartitionResult> results;

    bool skipped() const { return status.rfind("skipped", 0) == 0; }
    const PartitionResult* find(const std::string& partition) const {
        for (const auto& r : results)
            if (r.partition == partition) return &r;
        return nullptr;
    }

    friend bool operator==(const CellResult&, const CellResult&) = default;
};

struct RunRecord {
    std::string experiment;
    std::string kind;
    std::string plan_hash;
    std::uint64_t seed = 0;
    std::vector<CellResult> cells;

    friend bool operator==(const RunRecord&, const RunRecord&) = default;
};

inline std::string cell_key(const std::string& dataset, const ModelSpec& m, const SamplerConfig& s) {
    return dataset + "_" + to_string(m.kind) + "_" + s.label() + "_" + detail::shortest(s.ratio);
}

/// Seed for one grid cell; the cell's sampler and model seeds derive from it.
inline std::uint64_t cell_seed(std::uint64_t plan_seed, const std::string& key) { return derive_seed(plan_seed, "cell:" + key); }

inline PartitionResult evaluate(const Model& m, const Dataset& part, const std::string& name, double threshold) {
    PartitionResult r;
    r.partition = name;
    r.confusion = confusion(part.labels, m.classify(part.features, threshold));
    r.metrics = metrics(r.confusion);
    return r;
}

/// Resamples the training partition, trains, and evaluates on validation and
/// test. Precondition failures become "skipped", numeric failures "failed".
inline CellResult run_cell(const Partitions& parts, const std::string& dataset, const ModelSpec& model,
                           SamplerConfig sampler, std::uint64_t seed, const Probe& probe = {},
                           const std::string& models_dir = "") {
    CellResult c;
    c.dataset = dataset;
    c.model = to_string(model.kind);
    c.sampler = sampler.label();
    c.ratio = sampler.ratio;
    const auto t0 = std::chrono::steady_clock::now();
    if (auto why = inapplicable_reason(model, parts.train.n_features())) {
        c.status = "skipped: " + *why;
        return c;
    }
    for (const auto* part : {&parts.validation, &parts.test})
        if (part->n_rows() == 0) {
            c.status = "skipped: empty evaluation partition";
            return c;
        }
    Dataset train;
    try {
        sampler.seed = derive_seed(seed, "sampler");
        if (probe && sampler.method != SamplerMethod::none) probe("sampler", parts.train);
        train = resample(parts.train, sampler);
    } catch (const InvalidArgument& e) {
        c.status = std::string("skipped: ") + e.what();
        return c;
    }
    c.train_rows = train.n_rows();
    c.train_pos = train.n_pos();
    try {
        auto m = train_model(model, train, &parts.validation, derive_seed(seed, "model"));
        if (auto* nm = dynamic_cast<const NetworkModel*>(m.get())) c.epochs = nm->history().epochs.size();
        c.results.push_back(evaluate(*m, parts.validation, "validation", model.threshold));
        c.results.push_back(evaluate(*m, parts.test, "test", model.threshold));
        if (!models_dir.empty()) {
            std::filesystem::create_directories(models_dir);
            c.model_file = "models/" + cell_key(dataset, model, sampler) + ".model";
            save_model(models_dir + "/" + cell_key(dataset, model, sampler) + ".model", *m, parts.scaler, model.threshold);
        }
    } catch (const InvalidArgument& e) {
        c.status = std::string("skipped: ") + e.what();
        c.results.clear();
        return c;
    } catch (const NumericError& e) {
        c.status = std::string("failed: ") + e.what();
        c.results.clear();
    }
    c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return c;
}

namespace detail {

struct CellJob {
    std::size_t dataset;
    ModelSpec model;
    SamplerConfig sampler;
};

/// Runs cells on up to `jobs` threads; results are stored by job index so the
/// record does not depend on scheduling.
inline std::vector<CellResult> run_jobs(const ExperimentPlan& plan, const std::vector<Partitions>& parts,
                                        const std::vector<CellJob>& jobs, const Probe& probe) {
    std::vector<CellResult> out(jobs.size());
    const std::string models_dir =
        plan.save_models && !plan.output_dir.empty() ? plan.output_dir + "/models" : std::string();
    std::atomic<std::size_t> next{0};
    std::mutex probe_mu;
    Probe safe_probe;
    if (probe)
        safe_probe = [&](std::string_view stage, const Dataset& d) {
            std::lock_guard lk(probe_mu);
            probe(stage, d);
        };
    auto worker = [&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) {
            const auto& j = jobs[i];
            const std::string& dname = plan.datasets[j.dataset].name;
            out[i] = run_cell(parts[j.dataset], dname, j.model, j.sampler,
                              cell_seed(plan.seed, cell_key(dname, j.model, j.sampler)), safe_probe, models_dir);
        }
    };
    const std::size_t n_threads = std::min<std::size_t>(std::max<std::size_t>(plan.jobs, 1), std::max<std::size_t>(jobs.size(), 1));
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    return out;
}

inline std::vector<Partitions> prepare_all(const ExperimentPlan& plan, const Probe& probe) {
    std::vector<Partitions> parts;
    for (const auto& d : plan.datasets) {
        const Dataset ds = load_source(d, plan.seed);
        parts.push_back(prepare(ds, plan.preprocess, derive_seed(plan.seed, "split:" + d.name), probe));
    }
    return parts;
}

inline RunRecord new_record(const ExperimentPlan& plan) {
    RunRecord r;
    r.experiment = plan.name;
    r.kind = to_string(plan.kind);
    r.plan_hash = plan_hash(plan);
    r.seed = plan.seed;
    return r;
}

}  // namespace detail

/// Imbalance sweep: for each ratio, random under-sampling of the training
/// partition to majority:minority = ratio, then train and evaluate.
inline RunRecord sweep_imbalance(const ExperimentPlan& plan, const Probe& probe = {}) {
    ExperimentPlan p = plan;
    p.kind = ExperimentKind::sweep_imbalance;
    validate_plan(p);
    const auto parts = detail::prepare_all(p, probe);
    for (std::size_t d = 0; d < parts.size(); ++d) {
        const double max_ratio = p.ratios.back();
        const auto& tr = parts[d].train;
        require(tr.n_pos() > 0, "dataset '" + p.datasets[d].name + "' has no positives in its training partition");
        require(round_count(max_ratio * static_cast<double>(tr.n_pos())) <= tr.n_neg(),
                "ratio " + detail::shortest(max_ratio) + " unreachable on dataset '" + p.datasets[d].name + "' (" +
                    std::to_string(tr.n_neg()) + " majority vs " + std::to_string(tr.n_pos()) + " minority rows)");
    }
    std::vector<detail::CellJob> jobs;
    for (std::size_t d = 0; d < p.datasets.size(); ++d)
        for (const auto& m : p.models)
            for (double r : p.ratios) jobs.push_back({d, m, SamplerConfig{SamplerMethod::rus, 1, 0, r, 0}});
    RunRecord rec = detail::new_record(p);
    rec.cells = detail::run_jobs(p, parts, jobs, probe);
    return rec;
}

/// Sampler comparison: every configured sampler against every model, evaluated
/// on validation and test partitions.
inline RunRecord compare_sampling(const ExperimentPlan& plan, const Probe& probe = {}) {
    ExperimentPlan p = plan;
    p.kind = ExperimentKind::compare_sampling;
    validate_plan(p);
    const auto parts = detail::prepare_all(p, probe);
    std::vector<detail::CellJob> jobs;
    for (std::size_t d = 0; d < p.datasets.size(); ++d)
        for (const auto& m : p.models)
            for (const auto& s : p.samplers) jobs.push_back({d, m, s});
    RunRecord rec = detail::new_record(p);
    rec.cells = detail::run_jobs(p, parts, jobs, probe);
    return rec;
}

/// Full grid: dataset x sampler x model. Inapplicable cells are recorded as skipped.
inline RunRecord run_experiment(const ExperimentPlan& plan, const Probe& probe = {}) {
    switch (plan.kind) {
        case ExperimentKind::sweep_imbalance: return sweep_imbalance(plan, probe);
        case ExperimentKind::compare_sampling: return compare_sampling(plan, probe);
        case ExperimentKind::run: break;
    }
    validate_plan(plan);
    const auto parts = detail::prepare_all(plan, probe);
    std::vector<detail::CellJob> jobs;
    for (std::size_t d = 0; d < plan.datasets.size(); ++d)
        for (const auto& s : plan.samplers)
            for (const auto& m : plan.models) jobs.push_back({d, m, s});
    RunRecord rec = detail::new_record(plan);
    rec.cells = detail::run_jobs(plan, parts, jobs, probe);
    return rec;
}

// ---------------------------------------------------------------------------
// Reports

inline nlohmann::json to_json(const RunRecord& r) {
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& c : r.cells) {
        nlohmann::json res = nlohmann::json::array();
        for (const auto& p : c.results)
            res.push_back({{"partition", p.partition},
                           {"confusion", {{"tp", p.confusion.tp}, {"tn", p.confusion.tn}, {"fp", p.confusion.fp}, {"fn", p.confusion.fn}}},
                           {"metrics", to_json(p.metrics)}});
        cells.push_back({{"dataset", c.dataset},
                         {"model", c.model},
                         {"sampler", c.sampler},
                         {"ratio", c.ratio},
                         {"status", c.status},
                         {"train_rows", c.train_rows},
                         {"train_pos", c.train_pos},
                         {"epochs", c.epochs},
                         {"seconds", c.seconds},
                         {"model_file", c.model_file},
                         {"results", res}});
    }
    return {{"experiment", r.experiment}, {"kind", r.kind}, {"plan_hash", r.plan_hash}, {"seed", r.seed}, {"cells", cells}};
}

inline RunRecord record_from_json(const nlohmann::json& j) {
    RunRecord r;
    r.experiment = j.at("experiment").get<std::string>();
    r.kind = j.at("kind").get<std::string>();
    r.plan_hash = j.at("plan_hash").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& jc : j.at("cells")) {
        CellResult c;
        c.dataset = jc.at("dataset").get<std::string>();
        c.model = jc.at("model").get<std::string>();
        c.sampler = jc.at("sampler").get<std::string>();
        c.ratio = jc.at("ratio").get<double>();
        c.status = jc.at("status").get<std::string>();
        c.train_rows = jc.at("train_rows").get<std::size_t>();
        c.train_pos = jc.at("train_pos").get<std::size_t>();
        c.epochs = jc.at("epochs").get<std::size_t>();
        c.seconds = jc.at("seconds").get<double>();
        c.model_file = jc.at("model_file").get<std::string>();
        for (const auto& jr : jc.at("results")) {
            PartitionResult p;
            p.partition = jr.at("partition").get<std::string>();
            const auto& cm = jr.at("confusion");
            p.confusion = {cm.at("tp").get<std::size_t>(), cm.at("tn").get<std::size_t>(), cm.at("fp").get<std::size_t>(),
                           cm.at("fn").get<std::size_t>()};
            p.metrics = metric_report_from_json(jr.at("metrics"));
            c.results.push_back(std::move(p));
        }
        r.cells.push_back(std::move(c));
    }
    return r;
}

/// One row per (non-skipped cell, evaluated partition). Failed cells get one row
/// with empty partition and metric fields. `seconds` is empty unless `timings`.
inline std::string cells_csv(const RunRecord& r, bool timings) {
    std::string out = "dataset,model,sampler,ratio,partition,accuracy,precision,recall,f1,status,seconds\n";
    for (const auto& c : r.cells) {
        if (c.skipped()) continue;
        const std::string secs = timings ? detail::shortest(c.seconds) : "";
        const std::string head = detail::csv_escape(c.dataset) + "," + c.model + "," + c.sampler + "," + detail::shortest(c.ratio) + ",";
        if (c.results.empty()) {
            out += head + ",,,,," + detail::csv_escape(c.status) + "," + secs + "\n";
            continue;
        }
        for (const auto& p : c.results) {
            auto fmt = [](const std::optional<double>& v) { return v ? detail::shortest(*v) : std::string("undef"); };
            out += head + p.partition + "," + detail::shortest(p.metrics.accuracy) + "," + fmt(p.metrics.precision) + "," +
                   fmt(p.metrics.recall) + "," + fmt(p.metrics.f1) + "," + detail::csv_escape(c.status) + "," + secs + "\n";
        }
    }
    return out;
}

/// Grouped bars: one group per metric, one bar per (non-skipped cell, partition) row.
inline std::string record_chart(const RunRecord& r) {
    const std::vector<std::string> groups = {"accuracy", "precision", "recall", "f1"};
    std::vector<svg::Series> series;
    for (const auto& c : r.cells) {
        if (c.skipped()) continue;
        for (const auto& p : c.results) {
            svg::Series s;
            s.label = c.dataset + " / " + c.model + " / " + c.sampler + " / " + detail::shortest(c.ratio) + " / " + p.partition;
            s.values = {p.metrics.accuracy, p.metrics.precision, p.metrics.recall, p.metrics.f1};
            series.push_back(std::move(s));
        }
    }
    return svg::grouped_bar_chart(r.experiment + " (" + r.kind + ")", groups, series);
}

enum class ReportFormat { json, csv, svg };

/// Writes record.json, cells.csv and charts/<experiment>.svg (as requested) into `dir`.
inline std::vector<std::string> emit_report(const RunRecord& r, const std::string& dir,
                                            const std::set<ReportFormat>& formats = {ReportFormat::json, ReportFormat::csv,
                                                                                     ReportFormat::svg},
                                            bool csv_timings = false) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    require(!ec && std::filesystem::is_directory(dir), "cannot create output directory '" + dir + "'");
    std::vector<std::string> written;
    auto write = [&](const std::string& path, const std::string& text) {
        std::ofstream out(path);
        if (!out) throw std::runtime_error("cannot write '" + path + "'");
        out << text;
        if (!out) throw std::runtime_error("failed writing '" + path + "'");
        written.push_back(path);
    };
    if (formats.count(ReportFormat::json)) write(dir + "/record.json", to_json(r).dump(2) + "\n");
    if (formats.count(ReportFormat::csv)) write(dir + "/cells.csv", cells_csv(r, csv_timings));
    if (formats.count(ReportFormat::svg)) {
        std::filesystem::create_directories(dir + "/charts", ec);
        write(dir + "/charts/" + r.experiment + ".svg", record_chart(r));
    }
    return written;
}

}  // namespace fraudkit
