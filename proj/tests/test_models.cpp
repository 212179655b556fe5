#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "fraudkit/models.hpp"
#include "fraudkit/synthetic.hpp"
#include "support.hpp"

using namespace fraudkit;

namespace {

Dataset grid_ds(const std::vector<std::vector<double>>& rows, const std::vector<int>& y) {
    Matrix X(rows.size(), rows.front().size());
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t j = 0; j < rows[r].size(); ++j) X(r, j) = rows[r][j];
    return make_dataset(X, y);
}

double gini_of(double pos, double n) {
    if (n == 0) return 0;
    const double p = pos / n;
    return 2 * p * (1 - p);
}

// Weighted child impurity of the best single axis-aligned split, by brute force
// over every (feature, observed value) threshold.
double best_stump_impurity(const Dataset& ds) {
    double best = std::numeric_limits<double>::infinity();
    const double n = static_cast<double>(ds.n_rows());
    for (std::size_t f = 0; f < ds.n_features(); ++f)
        for (std::size_t t = 0; t < ds.n_rows(); ++t) {
            const double thr = ds.features(t, f);
            double nl = 0, pl = 0, nr = 0, pr = 0;
            for (std::size_t r = 0; r < ds.n_rows(); ++r) {
                if (ds.features(r, f) <= thr) {
                    nl += 1;
                    pl += ds.labels[r];
                } else {
                    nr += 1;
                    pr += ds.labels[r];
                }
            }
            if (nl == 0 || nr == 0) continue;
            best = std::min(best, (nl * gini_of(pl, nl) + nr * gini_of(pr, nr)) / n);
        }
    return best;
}

double leaf_impurity(const Tree& t, const Dataset& ds) {
    // Group rows by the leaf they reach.
    std::map<std::size_t, std::pair<double, double>> leaves;
    for (std::size_t r = 0; r < ds.n_rows(); ++r) {
        std::size_t i = 0;
        while (t.nodes[i].feature >= 0)
            i = static_cast<std::size_t>(ds.features(r, static_cast<std::size_t>(t.nodes[i].feature)) <= t.nodes[i].threshold
                                             ? t.nodes[i].left
                                             : t.nodes[i].right);
        leaves[i].first += 1;
        leaves[i].second += ds.labels[r];
    }
    double s = 0;
    for (auto& [id, c] : leaves) s += c.first * gini_of(c.second, c.first);
    return s / static_cast<double>(ds.n_rows());
}

ModelSpec fast_spec(ModelKind kind) {
    ModelSpec s;
    s.kind = kind;
    s.epochs = 3;
    s.batch = 32;
    s.n_trees = 5;
    s.lstm_hidden = 8;
    return s;
}

}  // namespace

// --- network architectures ---------------------------------------------------------

TEST(Architectures, ParameterCounts) {
    // conv 3x3x1x64 + 64, conv 3x3x64x32 + 32, dense 64 + 1
    EXPECT_EQ(build_cnn2d(30).parameter_count(), 640u + 18464u + 65u);
    EXPECT_EQ(build_cnn2d(30).parameter_count(), 19169u);
    for (std::size_t f : {1u, 7u, 30u}) {
        EXPECT_EQ(build_cnn1d(f).parameter_count(), (64 * f + 64) + (64 * 64 + 64) + (64 * 100 + 100) + (100 + 1)) << f;
        for (std::size_t h : {1u, 5u, 50u})
            EXPECT_EQ(build_lstm(f, h).parameter_count(), 4 * (h * (h + f) + h) + h + 1) << f << " " << h;
        EXPECT_EQ(build_logreg(f).parameter_count(), f + 1);
    }
}

TEST(Architectures, ZeroWeightsZeroInputGiveHalf) {
    const std::vector<double> zero(30, 0.0);
    for (const auto& net : {build_cnn2d(30), build_cnn1d(30), build_lstm(30), build_logreg(30)})
        EXPECT_EQ(net.predict_one(zero), 0.5);
}

TEST(Architectures, ApplicabilityAndCustomGrid) {
    ModelSpec s;
    s.kind = ModelKind::cnn2d;
    EXPECT_EQ(*inapplicable_reason(s, 11), "not reshapeable to 5x6 (11 features)");
    EXPECT_FALSE(inapplicable_reason(s, 30));
    s.grid_h = 5;
    s.grid_w = 5;
    EXPECT_FALSE(inapplicable_reason(s, 25));
    EXPECT_EQ(build_network(s, 25).shape_trace()[2], (nn::Shape{3, 3, 64}));
    EXPECT_EQ(build_network(s, 25).output_shape(), (nn::Shape{1}));
    s.grid_h = 3;
    s.grid_w = 4;
    EXPECT_EQ(*inapplicable_reason(s, 12), "grid 3x4 smaller than 5x5");
    s.kind = ModelKind::lstm;
    EXPECT_FALSE(inapplicable_reason(s, 11));
    EXPECT_THROW(parse_model_kind("svm"), InvalidArgument);
}

// --- logistic regression -----------------------------------------------------------

TEST(Logreg, LearnsSeparableData) {
    const Dataset ds = gen_synthetic({500, 3, 0.5, 6.0, 2});
    const auto m = train_logreg(ds, 0.05, 30, 1);
    const auto r = metrics(confusion(ds.labels, m->classify(ds.features)));
    EXPECT_GE(*r.f1, 0.98);
}

TEST(Logreg, SingleClassPredictsThatClass) {
    Dataset ds = gen_synthetic({100, 2, 0.5, 1.0, 3});
    std::fill(ds.labels.begin(), ds.labels.end(), 0);
    const auto m = train_logreg(ds, 0.1, 50, 1);
    for (double p : m->predict(ds.features)) EXPECT_LT(p, 0.5);
}

// --- trees ---------------------------------------------------------------------------

TEST(Tree, PureDataIsASingleLeaf) {
    const Dataset ds = grid_ds({{1}, {2}, {3}}, {1, 1, 1});
    const Tree t = train_dtree(ds, 5, 1);
    EXPECT_EQ(t.nodes.size(), 1u);
    EXPECT_EQ(t.nodes[0].prob, 1.0);
}

TEST(Tree, SeparatesXor) {
    const Dataset ds = grid_ds({{0, 0}, {0, 1}, {1, 0}, {1, 1}}, {0, 1, 1, 0});
    const Tree t = train_dtree(ds, 2, 1);
    for (std::size_t r = 0; r < 4; ++r) EXPECT_EQ(t.predict_one(ds.features.row(r)), static_cast<double>(ds.labels[r]));
    EXPECT_EQ(t.depth(), 2u);
    EXPECT_EQ(train_dtree(ds, 1, 1).depth(), 1u);
}

TEST(Tree, DepthOneMatchesBruteForceStump) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        Rng rng(seed);
        const std::size_t n = 5 + uniform_index(rng, 20), d = 1 + uniform_index(rng, 3);
        std::vector<std::vector<double>> rows(n, std::vector<double>(d));
        std::vector<int> y(n);
        for (std::size_t r = 0; r < n; ++r) {
            for (auto& v : rows[r]) v = static_cast<double>(uniform_index(rng, 6));
            y[r] = uniform01(rng) < 0.4;
        }
        y[0] = 1;
        y[1] = 0;
        const Dataset ds = grid_ds(rows, y);
        const Tree t = train_dtree(ds, 1, 1);
        const double oracle = best_stump_impurity(ds);
        if (std::isinf(oracle)) {
            EXPECT_EQ(t.nodes.size(), 1u);
            continue;
        }
        ASSERT_EQ(t.depth(), 1u) << seed;
        ASSERT_NEAR(leaf_impurity(t, ds), oracle, 1e-12) << seed;
    }
}

TEST(Tree, MinLeafRespected) {
    const Dataset ds = gen_synthetic({200, 3, 0.3, 1.0, 4});
    const Tree t = train_dtree(ds, 20, 10);
    for (const auto& n : t.nodes)
        if (n.feature < 0) EXPECT_GE(n.samples, 10u);
    EXPECT_THROW(train_dtree(ds, 3, 0), InvalidArgument);
}

TEST(Forest, DegenerateForestEqualsTree) {
    const Dataset ds = gen_synthetic({300, 4, 0.3, 1.5, 5});
    const auto trees = train_forest(ds, {1, 6, 2, 4, false, 9});
    ASSERT_EQ(trees.size(), 1u);
    EXPECT_EQ(trees[0], train_dtree(ds, 6, 2));
}

TEST(Forest, AveragesTreeProbabilities) {
    const Dataset ds = gen_synthetic({300, 4, 0.3, 1.5, 6});
    ModelSpec s = fast_spec(ModelKind::forest);
    const auto m = train_model(s, ds, nullptr, 3);
    const auto& fm = dynamic_cast<const ForestModel&>(*m);
    ASSERT_EQ(fm.trees().size(), 5u);
    const auto p = m->predict(ds.features);
    for (std::size_t r = 0; r < 10; ++r) {
        double s2 = 0;
        for (const auto& t : fm.trees()) s2 += t.predict_one(ds.features.row(r));
        EXPECT_DOUBLE_EQ(p[r], s2 / 5);
    }
}

// --- uniform interface ------------------------------------------------------------------

TEST(Models, EveryKindTrainsDeterministically) {
    const Dataset ds = gen_synthetic({200, 30, 0.3, 3.0, 7});
    for (auto kind : {ModelKind::cnn2d, ModelKind::cnn1d, ModelKind::lstm, ModelKind::logreg, ModelKind::dtree,
                      ModelKind::forest}) {
        const ModelSpec s = fast_spec(kind);
        const auto a = train_model(s, ds, &ds, 5), b = train_model(s, ds, &ds, 5);
        EXPECT_EQ(a->kind(), kind);
        EXPECT_EQ(a->predict(ds.features), b->predict(ds.features)) << to_string(kind);
        EXPECT_THROW(a->predict(Matrix(1, 29)), InvalidArgument);
    }
}

TEST(Models, InapplicableKindThrows) {
    const Dataset ds = gen_synthetic({50, 11, 0.3, 3.0, 7});
    EXPECT_THROW(train_model(fast_spec(ModelKind::cnn2d), ds, nullptr, 1), InvalidArgument);
}

TEST(Models, ThresholdBoundaryAndClamp) {
    Tree leaf;
    leaf.nodes.push_back({-1, 0.0, -1, -1, 0.5, 4});
    const ForestModel m(ModelKind::dtree, {leaf}, 2);
    const Matrix X(3, 2);
    EXPECT_EQ(m.classify(X, 0.5), (std::vector<int>{1, 1, 1}));
    EXPECT_EQ(m.classify(X, 0.5000001), (std::vector<int>{0, 0, 0}));
    EXPECT_EQ(m.classify(X, 7.0), (std::vector<int>{0, 0, 0}));
    EXPECT_EQ(m.classify(X, -3.0), (std::vector<int>{1, 1, 1}));
}

TEST(Models, FileRoundTripPreservesPredictions) {
    testsupport::TempDir dir("models");
    const Dataset ds = gen_synthetic({120, 30, 0.3, 3.0, 8});
    ScalerParams sc{std::vector<double>(30, 1.0), std::vector<double>(30, 2.0)};
    for (auto kind : {ModelKind::cnn2d, ModelKind::cnn1d, ModelKind::lstm, ModelKind::logreg, ModelKind::dtree,
                      ModelKind::forest}) {
        const auto m = train_model(fast_spec(kind), ds, nullptr, 2);
        const std::string path = dir.file(to_string(kind) + ".model");
        save_model(path, *m, sc, 0.3);
        const auto back = load_model(path);
        EXPECT_EQ(back.model->kind(), kind);
        EXPECT_EQ(back.threshold, 0.3);
        ASSERT_TRUE(back.scaler);
        EXPECT_EQ(back.scaler->std, sc.std);
        EXPECT_EQ(back.model->predict(ds.features), m->predict(ds.features)) << to_string(kind);
    }
    testsupport::write_file(dir.file("bad.model"), "{not json");
    EXPECT_THROW(load_model(dir.file("bad.model")), InvalidArgument);
    EXPECT_THROW(load_model(dir.file("missing.model")), InvalidArgument);
}
