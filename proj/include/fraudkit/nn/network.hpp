#pragma once

#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "../ingest.hpp"
#include "../metrics.hpp"
#include "layers.hpp"

namespace fraudkit::nn {

using Gradients = std::vector<std::vector<double>>;

/// Sequential stack of layers over a fixed per-sample input shape. Layers are
/// shape-checked as they are added, so a built network is always consistent.
class Network {
public:
    explicit Network(Shape input = {}) : input_(std::move(input)) {}

    Network(const Network& o) : input_(o.input_) {
        for (const auto& l : o.layers_) layers_.push_back(l->clone());
    }
    Network& operator=(const Network& o) {
        if (this != &o) {
            Network tmp(o);
            std::swap(input_, tmp.input_);
            std::swap(layers_, tmp.layers_);
        }
        return *this;
    }
    Network(Network&&) noexcept = default;
    Network& operator=(Network&&) noexcept = default;

    Network& add(const LayerSpec& spec) {
        auto layer = make_layer(spec);
        layer->build(output_shape());
        layers_.push_back(std::move(layer));
        return *this;
    }

    const Shape& input_shape() const { return input_; }
    Shape output_shape() const { return layers_.empty() ? input_ : layers_.back()->output_shape(layers_.back()->input_shape()); }

    /// Input shape followed by every layer's output shape.
    std::vector<Shape> shape_trace() const {
        std::vector<Shape> out{input_};
        for (const auto& l : layers_) out.push_back(l->output_shape(l->input_shape()));
        return out;
    }

    std::size_t layer_count() const { return layers_.size(); }
    const Layer& layer(std::size_t i) const { return *layers_.at(i); }
    Layer& layer(std::size_t i) { return *layers_.at(i); }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& l : layers_) n += l->params.size();
        return n;
    }

    /// Weights drawn per each layer's init rule; biases zero.
    void init(std::uint64_t seed) {
        Rng rng(seed);
        for (auto& l : layers_) {
            std::fill(l->params.begin(), l->params.end(), 0.0);
            l->init_params(rng);
        }
    }

    Gradients zero_gradients() const {
        Gradients g;
        for (const auto& l : layers_) g.emplace_back(l->params.size(), 0.0);
        return g;
    }

    std::vector<std::span<double>> param_spans() {
        std::vector<std::span<double>> out;
        for (auto& l : layers_) out.emplace_back(l->params);
        return out;
    }

    Gradients snapshot() const {
        Gradients s;
        for (const auto& l : layers_) s.push_back(l->params);
        return s;
    }

    void restore(const Gradients& s) {
        require(s.size() == layers_.size(), "parameter snapshot does not match network");
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            require(s[i].size() == layers_[i]->params.size(), "parameter snapshot does not match network");
            layers_[i]->params = s[i];
        }
    }

    Tensor forward(const Tensor& x, Mode mode = Mode::infer, Rng* rng = nullptr,
                   std::vector<LayerCache>* caches = nullptr) const {
        if (x.shape != input_)
            throw InvalidArgument("network expects input " + shape_str(input_) + ", got " + shape_str(x.shape));
        if (caches) caches->assign(layers_.size(), {});
        Tensor cur = x;
        for (std::size_t i = 0; i < layers_.size(); ++i)
            cur = layers_[i]->forward(cur, mode, rng, caches ? &(*caches)[i] : nullptr);
        check_finite(cur.data, "network output");
        return cur;
    }

    /// Backpropagates `dy` from layer `last` down to the input; adds into `grads`.
    Tensor backward_from(std::size_t last, Tensor dy, const std::vector<LayerCache>& caches, Gradients& grads) const {
        for (std::size_t i = last + 1; i-- > 0;) dy = layers_[i]->backward(dy, caches[i], grads[i]);
        return dy;
    }

    double predict_one(std::span<const double> row) const {
        Tensor out = forward(Tensor(input_, std::vector<double>(row.begin(), row.end())));
        require(out.size() == 1, "network output is not a single probability");
        return out[0];
    }

    std::vector<double> predict(const Matrix& X) const {
        require(X.cols == shape_size(input_), "feature width " + std::to_string(X.cols) + " does not match network input " +
                                                  shape_str(input_));
        std::vector<double> p(X.rows);
        for (std::size_t r = 0; r < X.rows; ++r) p[r] = predict_one(X.row(r));
        return p;
    }

    /// Mean binary cross-entropy over `rows` of X. When `grads` is given, the exact
    /// gradient of that mean is added into it. The network must end in a single
    /// sigmoid unit; the sigmoid/BCE pair is differentiated jointly (dL/dz = p - y).
    double loss_gradient(const Matrix& X, std::span<const int> y, std::span<const std::size_t> rows, Mode mode, Rng* rng,
                         Gradients* grads) const {
        require(!layers_.empty() && layers_.back()->spec().kind == LayerKind::activation &&
                    layers_.back()->spec().act == Activation::sigmoid && shape_size(output_shape()) == 1,
                "training needs a network ending in a single sigmoid unit");
        require(!rows.empty(), "empty batch");
        const double inv = 1.0 / static_cast<double>(rows.size());
        double loss = 0.0;
        std::vector<LayerCache> caches;
        for (std::size_t r : rows) {
            Tensor x(input_, std::vector<double>(X.row(r).begin(), X.row(r).end()));
            const Tensor out = forward(x, mode, rng, grads ? &caches : nullptr);
            const double p = out[0];
            loss += bce_loss(p, y[r]);
            if (grads) {
                if (layers_.size() >= 2) {
                    Tensor dz(layers_.back()->input_shape(), std::vector<double>{(p - y[r]) * inv});
                    backward_from(layers_.size() - 2, std::move(dz), caches, *grads);
                }
            }
        }
        loss *= inv;
        if (!std::isfinite(loss)) throw NumericError("non-finite loss");
        return loss;
    }

    double loss(const Matrix& X, std::span<const int> y) const {
        const auto rows = iota_indices(X.rows);
        return loss_gradient(X, y, rows, Mode::infer, nullptr, nullptr);
    }

private:
    Shape input_;
    std::vector<std::unique_ptr<Layer>> layers_;
};

// ---------------------------------------------------------------------------
// Optimizer

struct OptimizerState {
    std::size_t step = 0;
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    Gradients m, v;
};

/// Adaptive-moment update with bias correction. Moments are allocated on first use.
inline void adam_step(OptimizerState& st, std::vector<std::span<double>> params, const Gradients& grads) {
    require(params.size() == grads.size(), "adam_step: parameter/gradient group count mismatch");
    if (st.m.empty()) {
        for (const auto& p : params) {
            st.m.emplace_back(p.size(), 0.0);
            st.v.emplace_back(p.size(), 0.0);
        }
    }
    require(st.m.size() == params.size(), "adam_step: optimizer state does not match parameters");
    ++st.step;
    const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
    const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
    for (std::size_t g = 0; g < params.size(); ++g) {
        require(params[g].size() == grads[g].size() && st.m[g].size() == grads[g].size(),
                "adam_step: shape mismatch in parameter group " + std::to_string(g));
        for (std::size_t i = 0; i < params[g].size(); ++i) {
            const double gr = grads[g][i];
            st.m[g][i] = st.beta1 * st.m[g][i] + (1.0 - st.beta1) * gr;
            st.v[g][i] = st.beta2 * st.v[g][i] + (1.0 - st.beta2) * gr * gr;
            const double mh = st.m[g][i] / c1, vh = st.v[g][i] / c2;
            params[g][i] -= st.lr * mh / (std::sqrt(vh) + st.eps);
        }
    }
}

// ---------------------------------------------------------------------------
// Training

struct FitOptions {
    std::size_t epochs_max = 100;
    std::size_t batch = 256;
    std::size_t patience = 5;
    double lr = 0.001;
    double threshold = 0.5;
    std::uint64_t seed = 0;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    std::optional<double> val_loss;
    std::optional<MetricReport> val_metrics;
};

struct FitHistory {
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;
    bool stopped_early = false;
};

inline std::vector<int> threshold_labels(std::span<const double> p, double threshold) {
    std::vector<int> out(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) out[i] = p[i] >= threshold ? 1 : 0;
    return out;
}

/// Mini-batch training with a per-epoch seeded shuffle. When `val` is non-empty,
/// training stops after `patience` epochs without a validation-loss improvement
/// and the best-validation parameters are restored.
inline FitHistory fit(Network& net, const Dataset& train, const Dataset* val, const FitOptions& opt) {
    require(train.n_rows() >= 1, "training set is empty");
    require(train.n_features() == shape_size(net.input_shape()),
            "dataset width " + std::to_string(train.n_features()) + " does not match network input " +
                shape_str(net.input_shape()));
    require(opt.batch >= 1, "batch size must be >= 1");
    const bool use_val = val && val->n_rows() > 0;
    if (use_val) require(val->n_features() == train.n_features(), "validation width differs from training width");

    FitHistory hist;
    Rng rng(opt.seed);
    OptimizerState adam;
    adam.lr = opt.lr;
    double best = std::numeric_limits<double>::infinity();
    Gradients best_params = net.snapshot();
    std::size_t wait = 0;
    for (std::size_t epoch = 0; epoch < opt.epochs_max; ++epoch) {
        auto order = permutation(train.n_rows(), rng);
        double total = 0.0;
        for (std::size_t start = 0, b = 0; start < order.size(); start += opt.batch, ++b) {
            const std::size_t end = std::min(order.size(), start + opt.batch);
            std::span<const std::size_t> rows(order.data() + start, end - start);
            Gradients g = net.zero_gradients();
            double l;
            try {
                l = net.loss_gradient(train.features, train.labels, rows, Mode::train, &rng, &g);
            } catch (const NumericError& e) {
                throw NumericError(std::string(e.what()) + " at epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(b));
            }
            for (std::size_t li = 0; li < g.size(); ++li)
                check_finite(g[li], "gradient at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b));
            total += l * static_cast<double>(rows.size());
            adam_step(adam, net.param_spans(), g);
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = total / static_cast<double>(train.n_rows());
        if (use_val) {
            const auto p = net.predict(val->features);
            double vl = 0.0;
            for (std::size_t i = 0; i < p.size(); ++i) vl += bce_loss(p[i], val->labels[i]);
            vl /= static_cast<double>(p.size());
            rec.val_loss = vl;
            rec.val_metrics = metrics(confusion(val->labels, threshold_labels(p, opt.threshold)));
            if (vl < best) {
                best = vl;
                best_params = net.snapshot();
                hist.best_epoch = epoch;
                wait = 0;
            } else if (++wait >= opt.patience) {
                hist.epochs.push_back(rec);
                hist.stopped_early = true;
                break;
            }
        } else {
            hist.best_epoch = epoch;
        }
        hist.epochs.push_back(rec);
    }
    if (use_val && !hist.epochs.empty()) net.restore(best_params);
    return hist;
}

// ---------------------------------------------------------------------------
// Serialization

inline constexpr int kNetworkFormatVersion = 1;

inline nlohmann::json to_json(const Network& net) {
    nlohmann::json layers = nlohmann::json::array();
    for (std::size_t i = 0; i < net.layer_count(); ++i) {
        const auto& l = net.layer(i);
        const auto& s = l.spec();
        layers.push_back({{"kind", to_string(s.kind)},
                          {"units", s.units},
                          {"channels", s.channels},
                          {"kernel", s.kernel},
                          {"pool", s.pool},
                          {"rate", s.rate},
                          {"activation", to_string(s.act)},
                          {"target", s.target},
                          {"init", s.init == Init::he_uniform ? "he_uniform" : "glorot_uniform"},
                          {"input_shape", l.input_shape()},
                          {"params", l.params}});
    }
    return {{"format", "fraudkit.network"}, {"version", kNetworkFormatVersion}, {"input_shape", net.input_shape()},
            {"layers", layers}};
}

inline Network network_from_json(const nlohmann::json& j) {
    require(j.value("format", "") == "fraudkit.network", "not a serialized network");
    require(j.at("version").get<int>() == kNetworkFormatVersion,
            "unsupported network format version " + j.at("version").dump());
    Network net(j.at("input_shape").get<Shape>());
    for (const auto& jl : j.at("layers")) {
        LayerSpec s;
        s.kind = parse_layer_kind(jl.at("kind").get<std::string>());
        s.units = jl.at("units").get<std::size_t>();
        s.channels = jl.at("channels").get<std::size_t>();
        s.kernel = jl.at("kernel").get<std::size_t>();
        s.pool = jl.at("pool").get<std::size_t>();
        s.rate = jl.at("rate").get<double>();
        s.act = parse_activation(jl.at("activation").get<std::string>());
        s.target = jl.at("target").get<Shape>();
        s.init = jl.at("init").get<std::string>() == "he_uniform" ? Init::he_uniform : Init::glorot_uniform;
        net.add(s);
        auto params = jl.at("params").get<std::vector<double>>();
        require(params.size() == net.layer(net.layer_count() - 1).params.size(),
                "parameter count mismatch in serialized " + to_string(s.kind) + " layer");
        net.layer(net.layer_count() - 1).params = std::move(params);
    }
    return net;
}

}  // namespace fraudkit::nn
