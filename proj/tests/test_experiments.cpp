#include <gtest/gtest.h>

#include <set>

#include "fraudkit/experiments.hpp"
#include "support.hpp"

using namespace fraudkit;

namespace {

DataSource synth(const std::string& name, std::size_t n, std::size_t d, double fraud, double sep, std::uint64_t seed) {
    DataSource s;
    s.name = name;
    s.kind = DataSource::Kind::synthetic;
    s.synthetic = {n, d, fraud, sep, seed};
    return s;
}

ModelSpec quick(ModelKind kind) {
    ModelSpec m;
    m.kind = kind;
    m.epochs = 3;
    m.batch = 64;
    m.n_trees = 4;
    m.lstm_hidden = 6;
    return m;
}

ExperimentPlan small_plan() {
    ExperimentPlan p;
    p.name = "unit";
    p.seed = 17;
    p.datasets = {synth("wide", 1200, 30, 0.1, 2.5, 3), synth("narrow", 1200, 11, 0.1, 2.5, 4)};
    p.samplers = {SamplerConfig{}, SamplerConfig{SamplerMethod::rus, 1, 0, 2.0, 0},
                  SamplerConfig{SamplerMethod::smote, 1, 0, 0.5, 0}};
    p.models = {quick(ModelKind::logreg), quick(ModelKind::dtree), quick(ModelKind::cnn2d)};
    p.save_models = false;
    return p;
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST(Experiments, FittingStagesOnlySeeTrainingRows) {
    const ExperimentPlan plan = small_plan();
    std::map<std::string, std::set<std::size_t>> seen;
    std::mutex mu;
    const auto rec = run_experiment(plan, [&](std::string_view stage, const Dataset& d) {
        std::lock_guard lk(mu);
        auto& s = seen[std::string(stage) + ":" + std::to_string(d.n_features())];
        s.insert(d.row_ids.begin(), d.row_ids.end());
    });
    for (const auto& d : plan.datasets) {
        const Dataset ds = load_source(d, plan.seed);
        const auto sp = split(ds, 0.035, 0.2, derive_seed(plan.seed, "split:" + d.name), false);
        std::set<std::size_t> train;
        for (auto r : sp.train) train.insert(ds.row_ids[r]);
        for (const std::string stage : {"scaler", "sampler"}) {
            const auto& s = seen[stage + ":" + std::to_string(ds.n_features())];
            ASSERT_FALSE(s.empty()) << stage;
            EXPECT_EQ(s, train) << stage << " on " << d.name;
        }
    }
}

TEST(Experiments, SkipsInapplicableCells) {
    const auto rec = run_experiment(small_plan());
    ASSERT_EQ(rec.cells.size(), 2u * 3u * 3u);
    std::size_t skipped = 0;
    for (const auto& c : rec.cells) {
        if (c.skipped()) {
            ++skipped;
            EXPECT_EQ(c.dataset, "narrow");
            EXPECT_EQ(c.model, "cnn2d");
            EXPECT_EQ(c.status, "skipped: not reshapeable to 5x6 (11 features)");
            EXPECT_TRUE(c.results.empty());
        } else {
            EXPECT_EQ(c.status, "ok") << c.dataset << c.model << c.sampler;
            ASSERT_EQ(c.results.size(), 2u);
            EXPECT_EQ(c.results[0].partition, "validation");
            EXPECT_EQ(c.results[1].partition, "test");
        }
    }
    EXPECT_EQ(skipped, 3u);
    // One CSV row per (evaluated cell, partition) plus the header.
    EXPECT_EQ(count_lines(cells_csv(rec, false)), 1 + 2 * (18 - 3));
}

TEST(Experiments, DeterministicAcrossRunsAndThreads) {
    ExperimentPlan p = small_plan();
    const auto a = run_experiment(p);
    p.jobs = 3;
    const auto b = run_experiment(p);
    EXPECT_EQ(cells_csv(a, false), cells_csv(b, false));
    p.seed = 18;
    EXPECT_NE(cells_csv(a, false), cells_csv(run_experiment(p), false));
}

TEST(Experiments, NoneCellEqualsDirectPipeline) {
    ExperimentPlan p = small_plan();
    p.datasets.resize(1);
    p.samplers = {SamplerConfig{}};
    p.models = {quick(ModelKind::logreg)};
    const auto rec = run_experiment(p);
    ASSERT_EQ(rec.cells.size(), 1u);

    const Dataset ds = gen_synthetic(p.datasets[0].synthetic);
    const auto sp = split(ds, 0.035, 0.2, derive_seed(p.seed, "split:wide"), false);
    const auto sc = fit_scaler(ds.select_rows(sp.train));
    const Dataset train = apply_scaler(ds.select_rows(sp.train), sc);
    const Dataset val = apply_scaler(ds.select_rows(sp.validation), sc);
    const Dataset test = apply_scaler(ds.select_rows(sp.test), sc);
    const auto seed = derive_seed(p.seed, "cell:wide_logreg_none_1");
    const auto m = train_model(p.models[0], train, &val, derive_seed(seed, "model"));
    EXPECT_EQ(rec.cells[0].results[1].confusion, confusion(test.labels, m->classify(test.features)));
    EXPECT_EQ(rec.cells[0].results[0].confusion, confusion(val.labels, m->classify(val.features)));
}

TEST(Experiments, CompareSamplingCoversAllNearMissVersions) {
    ExperimentPlan p = small_plan();
    p.datasets.resize(1);
    p.models = {quick(ModelKind::logreg)};
    p.samplers = {SamplerConfig{},
                  {SamplerMethod::rus, 1, 0, 1.0, 0},
                  {SamplerMethod::nearmiss, 1, 0, 1.0, 0},
                  {SamplerMethod::nearmiss, 2, 0, 1.0, 0},
                  {SamplerMethod::nearmiss, 3, 0, 1.0, 0},
                  {SamplerMethod::smote, 1, 0, 1.0, 0}};
    const auto rec = compare_sampling(p);
    ASSERT_EQ(rec.cells.size(), 6u);
    std::vector<std::string> labels;
    for (const auto& c : rec.cells) {
        labels.push_back(c.sampler);
        EXPECT_EQ(c.status, "ok") << c.sampler;
        for (const auto& r : c.results) EXPECT_GE(r.metrics.accuracy, 0.0);
    }
    EXPECT_EQ(labels, (std::vector<std::string>{"none", "rus", "nearmiss1", "nearmiss2", "nearmiss3", "smote"}));
    EXPECT_EQ(rec.cells[1].train_pos * 2, rec.cells[1].train_rows);
    EXPECT_EQ(rec.cells[5].train_pos * 2, rec.cells[5].train_rows);
}

TEST(Experiments, SweepRatiosAndUnreachableRatio) {
    ExperimentPlan p = small_plan();
    p.datasets = {synth("s", 2000, 4, 0.05, 2.0, 1)};
    p.models = {quick(ModelKind::logreg)};
    p.ratios = {1, 5, 10};
    const auto rec = sweep_imbalance(p);
    ASSERT_EQ(rec.cells.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(rec.cells[i].sampler, "rus");
        EXPECT_EQ(rec.cells[i].ratio, p.ratios[i]);
        EXPECT_EQ(rec.cells[i].train_rows, rec.cells[i].train_pos * (1 + static_cast<std::size_t>(p.ratios[i])));
    }
    p.ratios = {1, 100};
    try {
        sweep_imbalance(p);
        FAIL() << "expected an unreachable-ratio error";
    } catch (const InvalidArgument& e) {
        EXPECT_NE(std::string(e.what()).find("ratio 100 unreachable"), std::string::npos) << e.what();
    }
    p.ratios = {5, 1};
    EXPECT_THROW(sweep_imbalance(p), InvalidArgument);
}

TEST(Experiments, SamplerFailureBecomesSkippedCell) {
    ExperimentPlan p = small_plan();
    p.datasets = {synth("tiny", 200, 3, 0.02, 2.0, 2)};
    p.models = {quick(ModelKind::logreg)};
    p.samplers = {SamplerConfig{SamplerMethod::nearmiss, 1, 50, 1.0, 0}};
    const auto rec = run_experiment(p);
    ASSERT_EQ(rec.cells.size(), 1u);
    EXPECT_TRUE(rec.cells[0].skipped());
    EXPECT_NE(rec.cells[0].status.find("NearMiss needs at least k=50"), std::string::npos);
}

TEST(Reports, JsonRoundTripAndChart) {
    const auto rec = run_experiment(small_plan());
    EXPECT_EQ(record_from_json(nlohmann::json::parse(to_json(rec).dump())), rec);
    const std::string svg = record_chart(rec);
    std::size_t bars = 0;
    for (std::size_t at = svg.find("class=\"bar"); at != std::string::npos; at = svg.find("class=\"bar", at + 1))
        ++bars;
    EXPECT_EQ(bars, 4u * 2u * 15u);
}

TEST(Reports, EmitWritesLayout) {
    testsupport::TempDir dir("emit");
    ExperimentPlan p = small_plan();
    p.datasets.resize(1);
    p.models = {quick(ModelKind::dtree)};
    p.save_models = true;
    p.output_dir = dir.str();
    const auto rec = run_experiment(p);
    emit_report(rec, dir.str());
    for (const char* f : {"record.json", "cells.csv", "charts/unit.svg", "models/wide_dtree_none_1.model",
                          "models/wide_dtree_smote_0.5.model"})
        EXPECT_TRUE(std::filesystem::exists(dir.file(f))) << f;
    const std::string csv = testsupport::read_file(dir.file("cells.csv"));
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "dataset,model,sampler,ratio,partition,accuracy,precision,recall,f1,status,seconds");
    // Saved model reproduces the cell's test confusion.
    const auto lm = load_model(dir.file("models/wide_dtree_none_1.model"));
    const Dataset raw = load_source(p.datasets[0], p.seed);
    const Dataset test = raw.select_rows(split(raw, 0.035, 0.2, derive_seed(p.seed, "split:wide"), false).test);
    EXPECT_EQ(confusion(test.labels, lm.model->classify(apply_scaler(test, *lm.scaler).features, lm.threshold)),
              rec.cells[0].results[1].confusion);
}

TEST(Plans, ConfigRoundTripAndHash) {
    ExperimentPlan p = small_plan();
    p.ratios = {1, 3, 7.5};
    p.samplers.push_back({SamplerMethod::nearmiss, 2, 0, 1.0, 0});
    for (auto& m : p.models) m.epochs = 7;
    const ExperimentPlan back = plan_from_config(Config::parse(plan_to_config(p).dump()));
    EXPECT_EQ(plan_to_config(back).dump(), plan_to_config(p).dump());
    EXPECT_EQ(plan_hash(back), plan_hash(p));
    ExperimentPlan q = p;
    q.output_dir = "elsewhere";
    q.jobs = 4;
    EXPECT_EQ(plan_hash(q), plan_hash(p));
    q.seed = 1;
    EXPECT_NE(plan_hash(q), plan_hash(p));
}

TEST(Plans, UnknownKeysAndBadValuesRejected) {
    EXPECT_THROW(plan_from_config(Config::parse("[models]\nkinds = logreg\ntypo = 1\n")), InvalidArgument);
    EXPECT_THROW(plan_from_config(Config::parse("[models]\nkinds = svm\n")), InvalidArgument);
    EXPECT_THROW(plan_from_config(Config::parse("[experiment]\nkind = nope\n")), InvalidArgument);
    ExperimentPlan p = small_plan();
    p.ratios = {0.5};
    p.kind = ExperimentKind::sweep_imbalance;
    EXPECT_THROW(validate_plan(p), InvalidArgument);
}
