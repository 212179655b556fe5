#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ingest.hpp"
#include "nn/network.hpp"
#include "preprocess.hpp"

namespace fraudkit {

enum class ModelKind { cnn2d, cnn1d, lstm, logreg, dtree, forest };

inline std::string to_string(ModelKind k) {
    switch (k) {
        case ModelKind::cnn2d: return "cnn2d";
        case ModelKind::cnn1d: return "cnn1d";
        case ModelKind::lstm: return "lstm";
        case ModelKind::logreg: return "logreg";
        case ModelKind::dtree: return "dtree";
        case ModelKind::forest: return "forest";
    }
    return "?";
}

inline ModelKind parse_model_kind(const std::string& s) {
    for (auto k : {ModelKind::cnn2d, ModelKind::cnn1d, ModelKind::lstm, ModelKind::logreg, ModelKind::dtree,
                   ModelKind::forest})
        if (to_string(k) == s) return k;
    throw InvalidArgument("unknown model kind '" + s + "'");
}

inline bool is_network_kind(ModelKind k) {
    return k == ModelKind::cnn2d || k == ModelKind::cnn1d || k == ModelKind::lstm || k == ModelKind::logreg;
}

/// Model choice plus every hyperparameter the trainers read.
struct ModelSpec {
    ModelKind kind = ModelKind::logreg;
    std::size_t input_features = 0;

    // cnn2d feature grid (row-major fill in dataset column order)
    std::size_t grid_h = 5;
    std::size_t grid_w = 6;

    // lstm
    std::size_t lstm_hidden = 50;
    nn::Activation lstm_inner = nn::Activation::relu;

    // network training; logreg uses its own learning rate
    std::size_t epochs = 100;
    std::size_t batch = 256;
    std::size_t patience = 5;
    double lr = 0.001;
    double logreg_lr = 0.01;

    // trees
    std::size_t max_depth = 10;
    std::size_t min_leaf = 1;
    std::size_t n_trees = 50;
    std::size_t max_features = 0;  // 0: floor(sqrt(n_features)) for forests, all for a single tree
    bool bootstrap = true;

    double threshold = 0.5;

    friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

/// Reason a model cannot be built for `n_features`, or nullopt when it can.
inline std::optional<std::string> inapplicable_reason(const ModelSpec& spec, std::size_t n_features) {
    if (n_features == 0) return "no features";
    if (spec.kind == ModelKind::cnn2d && spec.grid_h * spec.grid_w != n_features)
        return "not reshapeable to " + std::to_string(spec.grid_h) + "x" + std::to_string(spec.grid_w) + " (" +
               std::to_string(n_features) + " features)";
    // Two valid 3x3 convolutions need at least a 5x5 grid.
    if (spec.kind == ModelKind::cnn2d && (spec.grid_h < 5 || spec.grid_w < 5))
        return "grid " + std::to_string(spec.grid_h) + "x" + std::to_string(spec.grid_w) + " smaller than 5x5";
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Network builders

/// reshape(h,w,1) -> conv2d(64, 3x3) relu -> conv2d(32, 3x3) relu -> flatten -> dense(1) sigmoid
inline nn::Network build_cnn2d(std::size_t input_features = 30, std::size_t grid_h = 5, std::size_t grid_w = 6) {
    require(grid_h * grid_w == input_features, "cnn2d: " + std::to_string(input_features) + " features not reshapeable to " +
                                                   std::to_string(grid_h) + "x" + std::to_string(grid_w));
    using nn::LayerSpec;
    nn::Network net({input_features});
    net.add(LayerSpec::reshape({grid_h, grid_w, 1}))
        .add(LayerSpec::conv2d(64, 3, nn::Init::he_uniform))
        .add(LayerSpec::activation(nn::Activation::relu))
        .add(LayerSpec::conv2d(32, 3, nn::Init::he_uniform))
        .add(LayerSpec::activation(nn::Activation::relu))
        .add(LayerSpec::flatten())
        .add(LayerSpec::dense(1))
        .add(LayerSpec::activation(nn::Activation::sigmoid));
    return net;
}

/// Each row is a length-1 sequence with one channel per feature:
/// conv1d(64,k=1) relu -> conv1d(64,k=1) relu -> dropout(0.5) -> maxpool1d(1) -> flatten
/// -> dense(100) relu -> dense(1) sigmoid
inline nn::Network build_cnn1d(std::size_t input_features) {
    require(input_features >= 1, "cnn1d needs at least one feature");
    using nn::LayerSpec;
    nn::Network net({input_features});
    net.add(LayerSpec::reshape({1, input_features}))
        .add(LayerSpec::conv1d(64, 1, nn::Init::he_uniform))
        .add(LayerSpec::activation(nn::Activation::relu))
        .add(LayerSpec::conv1d(64, 1, nn::Init::he_uniform))
        .add(LayerSpec::activation(nn::Activation::relu))
        .add(LayerSpec::dropout(0.5))
        .add(LayerSpec::maxpool1d(1))
        .add(LayerSpec::flatten())
        .add(LayerSpec::dense(100, nn::Init::he_uniform))
        .add(LayerSpec::activation(nn::Activation::relu))
        .add(LayerSpec::dense(1))
        .add(LayerSpec::activation(nn::Activation::sigmoid));
    return net;
}

/// Length-1 sequence -> lstm(hidden, phi) -> dense(1) sigmoid.
inline nn::Network build_lstm(std::size_t input_features, std::size_t hidden = 50,
                              nn::Activation inner = nn::Activation::relu) {
    require(input_features >= 1, "lstm needs at least one feature");
    using nn::LayerSpec;
    nn::Network net({input_features});
    net.add(LayerSpec::reshape({1, input_features}))
        .add(LayerSpec::lstm(hidden, inner))
        .add(LayerSpec::dense(1))
        .add(LayerSpec::activation(nn::Activation::sigmoid));
    return net;
}

/// Logistic regression as a dense(1) + sigmoid network.
inline nn::Network build_logreg(std::size_t input_features) {
    require(input_features >= 1, "logreg needs at least one feature");
    nn::Network net({input_features});
    net.add(nn::LayerSpec::dense(1)).add(nn::LayerSpec::activation(nn::Activation::sigmoid));
    return net;
}

inline nn::Network build_network(const ModelSpec& spec, std::size_t n_features) {
    switch (spec.kind) {
        case ModelKind::cnn2d: return build_cnn2d(n_features, spec.grid_h, spec.grid_w);
        case ModelKind::cnn1d: return build_cnn1d(n_features);
        case ModelKind::lstm: return build_lstm(n_features, spec.lstm_hidden, spec.lstm_inner);
        case ModelKind::logreg: return build_logreg(n_features);
        default: throw InvalidArgument(to_string(spec.kind) + " is not a network model");
    }
}

// ---------------------------------------------------------------------------
// Decision trees

/// Flat tree storage. A node with feature < 0 is a leaf; otherwise rows with
/// x[feature] <= threshold go left.
struct TreeNode {
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double prob = 0.0;  // positive fraction of the training rows that reached the node
    std::size_t samples = 0;

    friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct Tree {
    std::vector<TreeNode> nodes;

    double predict_one(std::span<const double> x) const {
        std::size_t i = 0;
        while (nodes[i].feature >= 0)
            i = static_cast<std::size_t>(x[static_cast<std::size_t>(nodes[i].feature)] <= nodes[i].threshold ? nodes[i].left
                                                                                                            : nodes[i].right);
        return nodes[i].prob;
    }

    std::size_t depth(std::size_t i = 0) const {
        if (nodes[i].feature < 0) return 0;
        return 1 + std::max(depth(static_cast<std::size_t>(nodes[i].left)), depth(static_cast<std::size_t>(nodes[i].right)));
    }

    friend bool operator==(const Tree&, const Tree&) = default;
};

struct TreeOptions {
    std::size_t max_depth = 10;
    std::size_t min_leaf = 1;
    std::size_t max_features = 0;  // 0: all features
    std::uint64_t seed = 0;        // feature subsets
};

namespace detail {

inline double gini(std::size_t pos, std::size_t n) {
    if (n == 0) return 0.0;
    const double p = static_cast<double>(pos) / static_cast<double>(n);
    return 1.0 - p * p - (1.0 - p) * (1.0 - p);
}

class CartBuilder {
public:
    CartBuilder(const Matrix& X, std::span<const int> y, const TreeOptions& opt) : X_(X), y_(y), opt_(opt), rng_(opt.seed) {}

    Tree build(std::vector<std::size_t> rows) {
        tree_.nodes.clear();
        grow(std::move(rows), 0);
        return std::move(tree_);
    }

private:
    struct Split {
        int feature = -1;
        double threshold = 0.0;
        double gain = -1.0;
    };

    int grow(std::vector<std::size_t> rows, std::size_t depth) {
        const int id = static_cast<int>(tree_.nodes.size());
        tree_.nodes.emplace_back();
        std::size_t pos = 0;
        for (std::size_t r : rows) pos += static_cast<std::size_t>(y_[r]);
        tree_.nodes[id].samples = rows.size();
        tree_.nodes[id].prob = static_cast<double>(pos) / static_cast<double>(rows.size());
        if (depth >= opt_.max_depth || pos == 0 || pos == rows.size() || rows.size() < 2 * opt_.min_leaf) return id;
        const Split s = best_split(rows, pos);
        if (s.feature < 0) return id;
        std::vector<std::size_t> left, right;
        for (std::size_t r : rows) (X_(r, static_cast<std::size_t>(s.feature)) <= s.threshold ? left : right).push_back(r);
        rows.clear();
        rows.shrink_to_fit();
        const int l = grow(std::move(left), depth + 1);
        const int r = grow(std::move(right), depth + 1);
        tree_.nodes[id].feature = s.feature;
        tree_.nodes[id].threshold = s.threshold;
        tree_.nodes[id].left = l;
        tree_.nodes[id].right = r;
        return id;
    }

    std::vector<std::size_t> candidate_features() {
        const std::size_t d = X_.cols;
        if (opt_.max_features == 0 || opt_.max_features >= d) return iota_indices(d);
        auto f = permutation(d, rng_);
        f.resize(opt_.max_features);
        std::sort(f.begin(), f.end());
        return f;
    }

    /// Best Gini gain over midpoints of sorted distinct values. Ties keep the
    /// earlier candidate: lower feature index, then lower threshold.
    Split best_split(const std::vector<std::size_t>& rows, std::size_t pos) {
        const std::size_t n = rows.size();
        const double parent = gini(pos, n);
        Split best;
        std::vector<std::pair<double, int>> vals(n);
        for (std::size_t f : candidate_features()) {
            for (std::size_t i = 0; i < n; ++i) vals[i] = {X_(rows[i], f), y_[rows[i]]};
            std::sort(vals.begin(), vals.end());
            std::size_t lpos = 0;
            for (std::size_t i = 0; i + 1 < n; ++i) {
                lpos += static_cast<std::size_t>(vals[i].second);
                if (vals[i].first == vals[i + 1].first) continue;
                const std::size_t nl = i + 1, nr = n - nl;
                if (nl < opt_.min_leaf || nr < opt_.min_leaf) continue;
                const double child = (static_cast<double>(nl) * gini(lpos, nl) + static_cast<double>(nr) * gini(pos - lpos, nr)) /
                                     static_cast<double>(n);
                const double gain = parent - child;
                if (gain > best.gain + 1e-12) {
                    best.gain = gain;
                    best.feature = static_cast<int>(f);
                    best.threshold = 0.5 * (vals[i].first + vals[i + 1].first);
                }
            }
        }
        return best;
    }

    const Matrix& X_;
    std::span<const int> y_;
    TreeOptions opt_;
    Rng rng_;
    Tree tree_;
};

}  // namespace detail

/// Greedy binary CART on Gini impurity. Impure nodes are split while depth and
/// min_leaf allow, even at zero gain (so XOR-like data can be separated).
inline Tree train_dtree(const Dataset& train, const TreeOptions& opt) {
    require(train.n_rows() >= 1, "cannot train a tree on an empty dataset");
    require(opt.min_leaf >= 1, "min_leaf must be >= 1");
    require(train.n_rows() >= opt.min_leaf, "fewer rows than min_leaf");
    detail::CartBuilder b(train.features, train.labels, opt);
    return b.build(iota_indices(train.n_rows()));
}

inline Tree train_dtree(const Dataset& train, std::size_t max_depth, std::size_t min_leaf) {
    return train_dtree(train, TreeOptions{max_depth, min_leaf, 0, 0});
}

struct ForestOptions {
    std::size_t n_trees = 50;
    std::size_t max_depth = 10;
    std::size_t min_leaf = 1;
    std::size_t max_features = 0;  // 0: floor(sqrt(n_features)), at least 1
    bool bootstrap = true;
    std::uint64_t seed = 0;
};

/// Bagged CART trees; each tree gets a bootstrap sample and per-split random
/// feature subsets, both seeded from (seed, tree index).
inline std::vector<Tree> train_forest(const Dataset& train, const ForestOptions& opt) {
    require(opt.n_trees >= 1, "forest needs at least one tree");
    require(train.n_rows() >= 1, "cannot train a forest on an empty dataset");
    const std::size_t d = train.n_features();
    const std::size_t mf = opt.max_features ? std::min(opt.max_features, d)
                                            : std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(d))));
    std::vector<Tree> trees;
    for (std::size_t t = 0; t < opt.n_trees; ++t) {
        const std::uint64_t tseed = derive_seed(opt.seed, "tree" + std::to_string(t));
        std::vector<std::size_t> rows;
        if (opt.bootstrap) {
            Rng rng(tseed);
            rows.resize(train.n_rows());
            for (auto& r : rows) r = uniform_index(rng, train.n_rows());
        } else {
            rows = iota_indices(train.n_rows());
        }
        detail::CartBuilder b(train.features, train.labels, TreeOptions{opt.max_depth, opt.min_leaf, mf, splitmix64(tseed)});
        trees.push_back(b.build(std::move(rows)));
    }
    return trees;
}

inline nlohmann::json to_json(const Tree& t, std::size_t i = 0) {
    const auto& n = t.nodes[i];
    if (n.feature < 0) return {{"prob", n.prob}, {"samples", n.samples}};
    return {{"feature", n.feature},
            {"threshold", n.threshold},
            {"prob", n.prob},
            {"samples", n.samples},
            {"left", to_json(t, static_cast<std::size_t>(n.left))},
            {"right", to_json(t, static_cast<std::size_t>(n.right))}};
}

namespace detail {
inline int tree_from_json(const nlohmann::json& j, Tree& t) {
    const int id = static_cast<int>(t.nodes.size());
    t.nodes.emplace_back();
    t.nodes[id].prob = j.at("prob").get<double>();
    t.nodes[id].samples = j.at("samples").get<std::size_t>();
    if (j.contains("feature")) {
        const int l = tree_from_json(j.at("left"), t);
        const int r = tree_from_json(j.at("right"), t);
        t.nodes[id].feature = j.at("feature").get<int>();
        t.nodes[id].threshold = j.at("threshold").get<double>();
        t.nodes[id].left = l;
        t.nodes[id].right = r;
    }
    return id;
}
}  // namespace detail

inline Tree tree_from_json(const nlohmann::json& j) {
    Tree t;
    detail::tree_from_json(j, t);
    return t;
}

// ---------------------------------------------------------------------------
// Uniform model interface

/// A trained classifier that maps feature rows to fraud probabilities.
/// Implementations are immutable after training.
class Model {
public:
    virtual ~Model() = default;
    virtual ModelKind kind() const = 0;
    virtual std::size_t input_features() const = 0;
    virtual std::vector<double> predict_checked(const Matrix& rows) const = 0;
    virtual nlohmann::json body_json() const = 0;

    std::vector<double> predict(const Matrix& rows) const {
        require(rows.cols == input_features(), "feature width " + std::to_string(rows.cols) + " does not match model width " +
                                                   std::to_string(input_features()));
        return predict_checked(rows);
    }

    /// 1 iff p >= threshold; the threshold is clamped to [0, 1].
    std::vector<int> classify(const Matrix& rows, double threshold = 0.5) const {
        return nn::threshold_labels(predict(rows), std::clamp(threshold, 0.0, 1.0));
    }
};

class NetworkModel final : public Model {
public:
    NetworkModel(ModelKind kind, nn::Network net, nn::FitHistory hist = {})
        : kind_(kind), net_(std::move(net)), history_(std::move(hist)) {}

    ModelKind kind() const override { return kind_; }
    std::size_t input_features() const override { return nn::shape_size(net_.input_shape()); }
    std::vector<double> predict_checked(const Matrix& rows) const override { return net_.predict(rows); }
    nlohmann::json body_json() const override { return {{"network", nn::to_json(net_)}}; }

    const nn::Network& network() const { return net_; }
    const nn::FitHistory& history() const { return history_; }

private:
    ModelKind kind_;
    nn::Network net_;
    nn::FitHistory history_;
};

class ForestModel final : public Model {
public:
    ForestModel(ModelKind kind, std::vector<Tree> trees, std::size_t width)
        : kind_(kind), trees_(std::move(trees)), width_(width) {}

    ModelKind kind() const override { return kind_; }
    std::size_t input_features() const override { return width_; }

    /// Mean of leaf probabilities over trees.
    std::vector<double> predict_checked(const Matrix& rows) const override {
        std::vector<double> p(rows.rows, 0.0);
        for (std::size_t r = 0; r < rows.rows; ++r) {
            double s = 0.0;
            for (const auto& t : trees_) s += t.predict_one(rows.row(r));
            p[r] = s / static_cast<double>(trees_.size());
        }
        return p;
    }

    nlohmann::json body_json() const override {
        if (kind_ == ModelKind::dtree) return {{"tree", to_json(trees_.front())}};
        nlohmann::json ts = nlohmann::json::array();
        for (const auto& t : trees_) ts.push_back(to_json(t));
        return {{"trees", ts}};
    }

    const std::vector<Tree>& trees() const { return trees_; }

private:
    ModelKind kind_;
    std::vector<Tree> trees_;
    std::size_t width_;
};

/// Logistic regression fit with the network trainer (BCE, adaptive moments).
inline std::unique_ptr<NetworkModel> train_logreg(const Dataset& train, double lr, std::size_t epochs, std::uint64_t seed = 0,
                                                  const Dataset* val = nullptr, std::size_t batch = 256,
                                                  std::size_t patience = 5) {
    nn::Network net = build_logreg(train.n_features());
    net.init(derive_seed(seed, "init"));
    nn::FitOptions fo{epochs, batch, patience, lr, 0.5, derive_seed(seed, "fit")};
    auto hist = nn::fit(net, train, val, fo);
    return std::make_unique<NetworkModel>(ModelKind::logreg, std::move(net), std::move(hist));
}

/// Trains any model kind. `val` drives early stopping for network models and is
/// ignored by trees.
inline std::unique_ptr<Model> train_model(const ModelSpec& spec, const Dataset& train, const Dataset* val, std::uint64_t seed) {
    if (auto why = inapplicable_reason(spec, train.n_features())) throw InvalidArgument(to_string(spec.kind) + ": " + *why);
    switch (spec.kind) {
        case ModelKind::dtree: {
            Tree t = train_dtree(train, TreeOptions{spec.max_depth, spec.min_leaf, spec.max_features, derive_seed(seed, "tree")});
            return std::make_unique<ForestModel>(ModelKind::dtree, std::vector<Tree>{std::move(t)}, train.n_features());
        }
        case ModelKind::forest: {
            ForestOptions fo{spec.n_trees, spec.max_depth, spec.min_leaf, spec.max_features, spec.bootstrap,
                             derive_seed(seed, "forest")};
            return std::make_unique<ForestModel>(ModelKind::forest, train_forest(train, fo), train.n_features());
        }
        case ModelKind::logreg:
            return train_logreg(train, spec.logreg_lr, spec.epochs, seed, val, spec.batch, spec.patience);
        default: {
            nn::Network net = build_network(spec, train.n_features());
            net.init(derive_seed(seed, "init"));
            nn::FitOptions fo{spec.epochs, spec.batch, spec.patience, spec.lr, spec.threshold, derive_seed(seed, "fit")};
            auto hist = nn::fit(net, train, val, fo);
            return std::make_unique<NetworkModel>(spec.kind, std::move(net), std::move(hist));
        }
    }
}

// ---------------------------------------------------------------------------
// Model files: one JSON document with the model body and, optionally, the
// scaler fitted on its training partition.

inline constexpr int kModelFormatVersion = 1;

inline nlohmann::json model_to_json(const Model& m, const std::optional<ScalerParams>& scaler = std::nullopt,
                                    double threshold = 0.5) {
    nlohmann::json j = {{"format", "fraudkit.model"},
                        {"version", kModelFormatVersion},
                        {"kind", to_string(m.kind())},
                        {"input_features", m.input_features()},
                        {"threshold", threshold}};
    j.update(m.body_json());
    if (scaler) j["scaler"] = to_json(*scaler);
    return j;
}

struct LoadedModel {
    std::unique_ptr<Model> model;
    std::optional<ScalerParams> scaler;
    double threshold = 0.5;
};

inline LoadedModel model_from_json(const nlohmann::json& j) {
    require(j.value("format", "") == "fraudkit.model", "not a model file");
    require(j.at("version").get<int>() == kModelFormatVersion, "unsupported model format version " + j.at("version").dump());
    LoadedModel out;
    const ModelKind kind = parse_model_kind(j.at("kind").get<std::string>());
    const std::size_t width = j.at("input_features").get<std::size_t>();
    out.threshold = j.value("threshold", 0.5);
    if (is_network_kind(kind)) {
        out.model = std::make_unique<NetworkModel>(kind, nn::network_from_json(j.at("network")));
    } else if (kind == ModelKind::dtree) {
        out.model = std::make_unique<ForestModel>(kind, std::vector<Tree>{tree_from_json(j.at("tree"))}, width);
    } else {
        std::vector<Tree> trees;
        for (const auto& t : j.at("trees")) trees.push_back(tree_from_json(t));
        out.model = std::make_unique<ForestModel>(kind, std::move(trees), width);
    }
    if (j.contains("scaler")) out.scaler = scaler_from_json(j.at("scaler"));
    return out;
}

inline void save_model(const std::string& path, const Model& m, const std::optional<ScalerParams>& scaler = std::nullopt,
                       double threshold = 0.5) {
    std::ofstream out(path);
    require(static_cast<bool>(out), "cannot write model file '" + path + "'");
    out << model_to_json(m, scaler, threshold).dump() << '\n';
}

inline LoadedModel load_model(const std::string& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), "cannot open model file '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument("model file '" + path + "' is not valid JSON: " + e.what());
    }
    return model_from_json(j);
}

}  // namespace fraudkit
