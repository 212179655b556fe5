#pragma once

#include <memory>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace fraudkit::nn {

enum class LayerKind { dense, conv1d, conv2d, maxpool1d, dropout, flatten, lstm, activation, reshape };

inline std::string to_string(LayerKind k) {
    switch (k) {
        case LayerKind::dense: return "dense";
        case LayerKind::conv1d: return "conv1d";
        case LayerKind::conv2d: return "conv2d";
        case LayerKind::maxpool1d: return "maxpool1d";
        case LayerKind::dropout: return "dropout";
        case LayerKind::flatten: return "flatten";
        case LayerKind::lstm: return "lstm";
        case LayerKind::activation: return "activation";
        case LayerKind::reshape: return "reshape";
    }
    return "?";
}

inline LayerKind parse_layer_kind(const std::string& s) {
    for (auto k : {LayerKind::dense, LayerKind::conv1d, LayerKind::conv2d, LayerKind::maxpool1d, LayerKind::dropout,
                   LayerKind::flatten, LayerKind::lstm, LayerKind::activation, LayerKind::reshape})
        if (to_string(k) == s) return k;
    throw InvalidArgument("unknown layer kind '" + s + "'");
}

enum class Init { glorot_uniform, he_uniform };

/// Layer description. Fields not used by a kind stay at their defaults.
struct LayerSpec {
    LayerKind kind = LayerKind::dense;
    std::size_t units = 0;     // dense outputs, lstm hidden size
    std::size_t channels = 0;  // conv output channels
    std::size_t kernel = 0;    // conv kernel side
    std::size_t pool = 0;
    double rate = 0.0;                    // dropout
    Activation act = Activation::relu;    // activation layer; lstm inner transform
    Shape target;                         // reshape
    Init init = Init::glorot_uniform;

    static LayerSpec dense(std::size_t units, Init init = Init::glorot_uniform) {
        return {.kind = LayerKind::dense, .units = units, .init = init};
    }
    static LayerSpec conv1d(std::size_t channels, std::size_t kernel, Init init = Init::glorot_uniform) {
        return {.kind = LayerKind::conv1d, .channels = channels, .kernel = kernel, .init = init};
    }
    static LayerSpec conv2d(std::size_t channels, std::size_t kernel, Init init = Init::glorot_uniform) {
        return {.kind = LayerKind::conv2d, .channels = channels, .kernel = kernel, .init = init};
    }
    static LayerSpec maxpool1d(std::size_t pool) { return {.kind = LayerKind::maxpool1d, .pool = pool}; }
    static LayerSpec dropout(double rate) { return {.kind = LayerKind::dropout, .rate = rate}; }
    static LayerSpec flatten() { return {.kind = LayerKind::flatten}; }
    static LayerSpec lstm(std::size_t hidden, Activation inner = Activation::tanh) {
        return {.kind = LayerKind::lstm, .units = hidden, .act = inner};
    }
    static LayerSpec activation(Activation a) { return {.kind = LayerKind::activation, .act = a}; }
    static LayerSpec reshape(Shape target) { return {.kind = LayerKind::reshape, .target = std::move(target)}; }

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Per-sample intermediates recorded by forward and consumed by backward.
struct LayerCache {
    Tensor input;
    Tensor output;
    std::vector<double> aux;
    std::vector<kernels::LstmStepCache> steps;
};

/// A layer owns its flat parameter vector. `backward` returns the input gradient
/// and adds parameter gradients into `grad` (same layout as `params`).
class Layer {
public:
    explicit Layer(LayerSpec spec) : spec_(std::move(spec)) {}
    virtual ~Layer() = default;

    const LayerSpec& spec() const { return spec_; }
    const Shape& input_shape() const { return in_; }

    /// Validates `in` and returns the output shape.
    virtual Shape output_shape(const Shape& in) const = 0;
    virtual std::size_t param_count(const Shape& /*in*/) const { return 0; }

    void build(const Shape& in) {
        output_shape(in);
        in_ = in;
        params.assign(param_count(in), 0.0);
    }
    virtual void init_params(Rng& /*rng*/) {}

    virtual Tensor forward(const Tensor& x, Mode mode, Rng* rng, LayerCache* cache) const = 0;
    virtual Tensor backward(const Tensor& dy, const LayerCache& cache, std::span<double> grad) const = 0;

    virtual std::unique_ptr<Layer> clone() const = 0;

    std::vector<double> params;

protected:
    void check_input(const Tensor& x) const {
        if (x.shape != in_)
            throw InvalidArgument(to_string(spec_.kind) + " layer expects input " + shape_str(in_) + ", got " +
                                  shape_str(x.shape));
    }

    static void fill_uniform(std::span<double> v, double limit, Rng& rng) {
        for (auto& x : v) x = (2.0 * uniform01(rng) - 1.0) * limit;
    }

    LayerSpec spec_;
    Shape in_;
};

class DenseLayer final : public Layer {
public:
    using Layer::Layer;

    Shape output_shape(const Shape& in) const override {
        require(in.size() == 1, "dense layer needs a rank-1 input, got " + shape_str(in));
        require(spec_.units >= 1, "dense layer needs units >= 1");
        return {spec_.units};
    }
    std::size_t param_count(const Shape& in) const override { return spec_.units * in[0] + spec_.units; }

    void init_params(Rng& rng) override {
        const double n = static_cast<double>(in_[0]), m = static_cast<double>(spec_.units);
        const double limit = spec_.init == Init::he_uniform ? std::sqrt(6.0 / n) : std::sqrt(6.0 / (n + m));
        fill_uniform(std::span(params).first(spec_.units * in_[0]), limit, rng);
    }

    Tensor forward(const Tensor& x, Mode, Rng*, LayerCache* cache) const override {
        check_input(x);
        const std::size_t m = spec_.units, n = in_[0];
        Tensor y({m});
        kernels::dense(params.data(), params.data() + m * n, x.data.data(), m, n, y.data.data());
        if (cache) cache->input = x;
        return y;
    }

    Tensor backward(const Tensor& dy, const LayerCache& cache, std::span<double> grad) const override {
        const std::size_t m = spec_.units, n = in_[0];
        Tensor dx({n});
        const double* W = params.data();
        double* dW = grad.data();
        double* db = grad.data() + m * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double g = dy.data[i];
            db[i] += g;
            for (std::size_t j = 0; j < n; ++j) {
                dW[i * n + j] += g * cache.input.data[j];
                dx.data[j] += W[i * n + j] * g;
            }
        }
        return dx;
    }

    std::unique_ptr<Layer> clone() const override { return std::make_unique<DenseLayer>(*this); }
};

class Conv2DLayer final : public Layer {
public:
    using Layer::Layer;

    Shape output_shape(const Shape& in) const override {
        require(in.size() == 3, "conv2d layer needs an [h,w,c] input, got " + shape_str(in));
        const std::size_t k = spec_.kernel;
        require(k >= 1 && spec_.channels >= 1, "conv2d needs kernel >= 1 and channels >= 1");
        require(k <= in[0] && k <= in[1], "conv2d kernel " + std::to_string(k) + "x" + std::to_string(k) +
                                              " larger than input " + shape_str(in));
        return {in[0] - k + 1, in[1] - k + 1, spec_.channels};
    }
    std::size_t param_count(const Shape& in) const override {
        return spec_.kernel * spec_.kernel * in[2] * spec_.channels + spec_.channels;
    }

    void init_params(Rng& rng) override {
        const double kk = static_cast<double>(spec_.kernel * spec_.kernel);
        const double fan_in = kk * static_cast<double>(in_[2]), fan_out = kk * static_cast<double>(spec_.channels);
        const double limit = spec_.init == Init::he_uniform ? std::sqrt(6.0 / fan_in) : std::sqrt(6.0 / (fan_in + fan_out));
        fill_uniform(std::span(params).first(params.size() - spec_.channels), limit, rng);
    }

    Tensor forward(const Tensor& x, Mode, Rng*, LayerCache* cache) const override {
        check_input(x);
        Tensor y(output_shape(in_));
        const std::size_t nk = params.size() - spec_.channels;
        kernels::conv2d(x.data.data(), in_[0], in_[1], in_[2], params.data(), params.data() + nk, spec_.kernel,
                        spec_.channels, y.data.data());
        if (cache) cache->input = x;
        return y;
    }

    Tensor backward(const Tensor& dy, const LayerCache& cache, std::span<double> grad) const override {
        Tensor dx(in_);
        const std::size_t nk = params.size() - spec_.channels;
        kernels::conv2d_backward(cache.input.data.data(), in_[0], in_[1], in_[2], params.data(), spec_.kernel,
                                 spec_.channels, dy.data.data(), dx.data.data(), grad.data(), grad.data() + nk);
        return dx;
    }

    std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv2DLayer>(*this); }
};

class Conv1DLayer final : public Layer {
public:
    using Layer::Layer;

    Shape output_shape(const Shape& in) const override {
        require(in.size() == 2, "conv1d layer needs a [len,c] input, got " + shape_str(in));
        require(spec_.kernel >= 1 && spec_.channels >= 1, "conv1d needs kernel >= 1 and channels >= 1");
        require(spec_.kernel <= in[0], "conv1d kernel " + std::to_string(spec_.kernel) + " longer than input " +
                                           shape_str(in));
        return {in[0] - spec_.kernel + 1, spec_.channels};
    }
    std::size_t param_count(const Shape& in) const override {
        return spec_.kernel * in[1] * spec_.channels + spec_.channels;
    }

    void init_params(Rng& rng) override {
        const double k = static_cast<double>(spec_.kernel);
        const double fan_in = k * static_cast<double>(in_[1]), fan_out = k * static_cast<double>(spec_.channels);
        const double limit = spec_.init == Init::he_uniform ? std::sqrt(6.0 / fan_in) : std::sqrt(6.0 / (fan_in + fan_out));
        fill_uniform(std::span(params).first(params.size() - spec_.channels), limit, rng);
    }

    Tensor forward(const Tensor& x, Mode, Rng*, LayerCache* cache) const override {
        check_input(x);
        Tensor y(output_shape(in_));
        const std::size_t nk = params.size() - spec_.channels;
        conv1d_raw(x.data.data(), in_[0], in_[1], params.data(), params.data() + nk, spec_.kernel, spec_.channels,
                   y.data.data());
        if (cache) cache->input = x;
        return y;
    }

    Tensor backward(const Tensor& dy, const LayerCache& cache, std::span<double> grad) const override {
        const std::size_t len = in_[0], ci = in_[1], k = spec_.kernel, co = spec_.channels;
        const std::size_t nk = params.size() - co;
        Tensor dx(in_);
        const double* in = cache.input.data.data();
        for (std::size_t t = 0; t + k <= len; ++t) {
            const double* g = dy.data.data() + t * co;
            for (std::size_t c = 0; c < co; ++c) grad[nk + c] += g[c];
            for (std::size_t d = 0; d < k; ++d)
                for (std::size_t a = 0; a < ci; ++a) {
                    const std::size_t off = (d * ci + a) * co;
                    const double v = in[(t + d) * ci + a];
                    double acc = 0.0;
                    for (std::size_t c = 0; c < co; ++c) {
                        grad[off + c] += v * g[c];
                        acc += params[off + c] * g[c];
                    }
                    dx.data[(t + d) * ci + a] += acc;
                }
        }
        return dx;
    }

    std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv1DLayer>(*this); }
};

class MaxPool1DLayer final : public Layer {
public:
    using Layer::Layer;

    Shape output_shape(const Shape& in) const override {
        require(in.size() == 2, "maxpool1d needs a [len,c] input, got " + shape_str(in));
        require(spec_.pool >= 1 && spec_.pool <= in[0], "maxpool1d pool must be in [1, len]");
        return {in[0] / spec_.pool, in[1]};
    }

    Tensor forward(const Tensor& x, Mode, Rng*, LayerCache* cache) const override {
        check_input(x);
        if (cache) cache->input = x;
        return maxpool1d(x, spec_.pool);
    }

    /// Routes each output gradient to the first maximal element of its window.
    Tensor backward(const Tensor& dy, const LayerCache& cache, std::span<double>) const override {
        const std::size_t c = in_[1], pool = spec_.pool;
        Tensor dx(in_);
        for (std::size_t t = 0; t < in_[0] / pool; ++t)
            for (std::size_t ch = 0; ch < c; ++ch) {
                std::size_t best = t * pool * c + ch;
                for (std::size_t d = 1; d < pool; ++d) {
                    const std::size_t idx = (t * pool + d) * c + ch;
                    if (cache.input.data[idx] > cache.input.data[best]) best = idx;
                }
                dx.data[best] += dy.data[t * c + ch];
            }
        return dx;
    }

    std::unique_ptr<Layer> clone() const override { return std::make_unique<MaxPool1DLayer>(*this); }
};

class DropoutLayer final : public Layer {
public:
    using Layer::Layer;

    Shape output_shape(const Shape& in) const override {
        require(spec_.rate >= 0.0 && spec_.rate < 1.0, "dropout rate must be in [0,1)");
        return in;
    }

    Tensor forward(const Tensor& x, Mode mode, Rng* rng, LayerCache* cache) const override {
        check_input(x);
        if (mode == Mode::infer || spec_.rate == 0.0) {
            if (cache) cache->aux.assign(x.size(), 1.0);
            return x;
        }
        require(rng != nullptr, "dropout in train mode needs a random source");
        std::vector<double> mask;
        Tensor y = dropout(x, spec_.rate, mode, *rng, &mask);
        if (cache) cache->aux = std::move(mask);
        return y;
    }

    Tensor backward(const Tensor& dy, const LayerCache& cache, std::span<double>) const override {
        Tensor dx = dy;
        for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] *= cache.aux[i];
        return dx;
    }

    std::unique_ptr<Layer> clone() const override { return std::make_unique<DropoutLayer>(*this); }
};

class FlattenLayer final : public Layer {
public:
    using Layer::Layer;
    Shape output_shape(const Shape& in) const override { return {shape_size(in)}; }
    Tensor forward(const Tensor& x, Mode, Rng*, LayerCache*) const override {
        check_input(x);
        return Tensor({x.size()}, x.data);
    }
    Tensor backward(const Tensor& dy, const LayerCache&, std::span<double>) const override { return Tensor(in_, dy.data); }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<FlattenLayer>(*this); }
};

class ReshapeLayer final : public Layer {
public:
    using Layer::Layer;
    Shape output_shape(const Shape& in) const override {
        require(shape_size(spec_.target) == shape_size(in),
                "cannot reshape " + shape_str(in) + " to " + shape_str(spec_.target));
        return spec_.target;
    }
    Tensor forward(const Tensor& x, Mode, Rng*, LayerCache*) const override {
        check_input(x);
        return Tensor(spec_.target, x.data);
    }
    Tensor backward(const Tensor& dy, const LayerCache&, std::span<double>) const override { return Tensor(in_, dy.data); }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<ReshapeLayer>(*this); }
};

class ActivationLayer final : public Layer {
public:
    using Layer::Layer;
    Shape output_shape(const Shape& in) const override {
        if (spec_.act == Activation::softmax) require(in.size() == 1, "softmax needs a vector input");
        return in;
    }
    Tensor forward(const Tensor& x, Mode, Rng*, LayerCache* cache) const override {
        check_input(x);
        Tensor y = activation(x, spec_.act);
        if (cache) cache->output = y;
        return y;
    }
    Tensor backward(const Tensor& dy, const LayerCache& cache, std::span<double>) const override {
        return Tensor(in_, activation_backward(cache.output.data, dy.data, spec_.act));
    }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<ActivationLayer>(*this); }
};

/// LSTM over a [steps x features] sequence, emitting the final hidden state.
/// Parameter layout: W_f, W_i, W_g, W_o (each hidden x (hidden+features)), then b_f, b_i, b_g, b_o.
class LSTMLayer final : public Layer {
public:
    using Layer::Layer;

    Shape output_shape(const Shape& in) const override {
        require(in.size() == 2, "lstm layer needs a [steps,features] input, got " + shape_str(in));
        require(in[0] >= 1 && spec_.units >= 1, "lstm needs at least one step and one unit");
        require(spec_.act == Activation::tanh || spec_.act == Activation::relu, "lstm inner activation must be tanh or relu");
        return {spec_.units};
    }
    std::size_t param_count(const Shape& in) const override {
        return 4 * (spec_.units * (spec_.units + in[1]) + spec_.units);
    }

    void init_params(Rng& rng) override {
        const double H = static_cast<double>(spec_.units), F = static_cast<double>(in_[1]);
        const double limit = std::sqrt(6.0 / (H + F + H));
        fill_uniform(std::span(params).first(weight_block() * 4), limit, rng);
    }

    /// Extracts the gate matrices in the free-standing lstm_step layout.
    LSTMParams gate_params() const {
        const std::size_t H = spec_.units, Z = H + in_[1];
        LSTMParams p;
        Matrix* Ws[4] = {&p.W_f, &p.W_i, &p.W_g, &p.W_o};
        std::vector<double>* bs[4] = {&p.b_f, &p.b_i, &p.b_g, &p.b_o};
        for (int g = 0; g < 4; ++g) {
            *Ws[g] = Matrix(H, Z);
            std::copy_n(params.data() + g * weight_block(), H * Z, Ws[g]->data.begin());
            bs[g]->assign(params.data() + 4 * weight_block() + g * H, params.data() + 4 * weight_block() + (g + 1) * H);
        }
        return p;
    }

    Tensor forward(const Tensor& x, Mode, Rng*, LayerCache* cache) const override {
        check_input(x);
        const std::size_t H = spec_.units, F = in_[1], T = in_[0];
        const double* W[4];
        const double* b[4];
        pointers(W, b);
        std::vector<double> h(H, 0.0), c(H, 0.0), h2(H), c2(H);
        if (cache) cache->steps.assign(T, {});
        for (std::size_t t = 0; t < T; ++t) {
            kernels::lstm_cell(W, b, H, F, h.data(), c.data(), x.data.data() + t * F, spec_.act, h2.data(), c2.data(),
                               cache ? &cache->steps[t] : nullptr);
            std::swap(h, h2);
            std::swap(c, c2);
        }
        return Tensor({H}, h);
    }

    Tensor backward(const Tensor& dy, const LayerCache& cache, std::span<double> grad) const override {
        const std::size_t H = spec_.units, F = in_[1], T = in_[0], Z = H + F;
        const bool relu_inner = spec_.act == Activation::relu;
        Tensor dx(in_);
        std::vector<double> dh(dy.data), dc(H, 0.0), da(4 * H), dz(Z);
        for (std::size_t t = T; t-- > 0;) {
            const auto& s = cache.steps[t];
            for (std::size_t u = 0; u < H; ++u) {
                const double dphi_c = relu_inner ? (s.c[u] > 0.0 ? 1.0 : 0.0) : 1.0 - s.phi_c[u] * s.phi_c[u];
                const double d_o = dh[u] * s.phi_c[u];
                dc[u] += dh[u] * s.o[u] * dphi_c;
                const double d_f = dc[u] * s.c_prev[u];
                const double d_i = dc[u] * s.g[u];
                const double d_g = dc[u] * s.i[u];
                const double dphi_g = relu_inner ? (s.g_pre[u] > 0.0 ? 1.0 : 0.0) : 1.0 - s.g[u] * s.g[u];
                da[u] = d_f * s.f[u] * (1.0 - s.f[u]);
                da[H + u] = d_i * s.i[u] * (1.0 - s.i[u]);
                da[2 * H + u] = d_g * dphi_g;
                da[3 * H + u] = d_o * s.o[u] * (1.0 - s.o[u]);
                dc[u] *= s.f[u];  // carry to C_{t-1}
            }
            std::fill(dz.begin(), dz.end(), 0.0);
            for (std::size_t g = 0; g < 4; ++g) {
                const double* Wg = params.data() + g * weight_block();
                double* dWg = grad.data() + g * weight_block();
                double* dbg = grad.data() + 4 * weight_block() + g * H;
                for (std::size_t u = 0; u < H; ++u) {
                    const double a = da[g * H + u];
                    if (a == 0.0) continue;
                    dbg[u] += a;
                    for (std::size_t j = 0; j < Z; ++j) {
                        dWg[u * Z + j] += a * s.z[j];
                        dz[j] += Wg[u * Z + j] * a;
                    }
                }
            }
            std::copy_n(dz.begin(), H, dh.begin());
            std::copy_n(dz.begin() + static_cast<std::ptrdiff_t>(H), F, dx.data.begin() + static_cast<std::ptrdiff_t>(t * F));
        }
        return dx;
    }

    std::unique_ptr<Layer> clone() const override { return std::make_unique<LSTMLayer>(*this); }

private:
    std::size_t weight_block() const { return spec_.units * (spec_.units + in_[1]); }
    void pointers(const double* W[4], const double* b[4]) const {
        for (std::size_t g = 0; g < 4; ++g) {
            W[g] = params.data() + g * weight_block();
            b[g] = params.data() + 4 * weight_block() + g * spec_.units;
        }
    }
};

inline std::unique_ptr<Layer> make_layer(const LayerSpec& spec) {
    switch (spec.kind) {
        case LayerKind::dense: return std::make_unique<DenseLayer>(spec);
        case LayerKind::conv1d: return std::make_unique<Conv1DLayer>(spec);
        case LayerKind::conv2d: return std::make_unique<Conv2DLayer>(spec);
        case LayerKind::maxpool1d: return std::make_unique<MaxPool1DLayer>(spec);
        case LayerKind::dropout: return std::make_unique<DropoutLayer>(spec);
        case LayerKind::flatten: return std::make_unique<FlattenLayer>(spec);
        case LayerKind::lstm: return std::make_unique<LSTMLayer>(spec);
        case LayerKind::activation: return std::make_unique<ActivationLayer>(spec);
        case LayerKind::reshape: return std::make_unique<ReshapeLayer>(spec);
    }
    throw InvalidArgument("unknown layer kind");
}

}  // namespace fraudkit::nn
