#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "../core.hpp"

namespace fraudkit::nn {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
    return out + ")";
}

/// Row-major tensor of doubles. Channels are the innermost dimension
/// ([len x c] for sequences, [h x w x c] for images).
struct Tensor {
    Shape shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(Shape s, double fill = 0.0) : shape(std::move(s)), data(shape_size(shape), fill) {}
    Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        require(shape_size(shape) == data.size(), "tensor shape " + shape_str(shape) + " does not match " +
                                                      std::to_string(data.size()) + " values");
    }

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    friend bool operator==(const Tensor&, const Tensor&) = default;
};

inline void check_finite(std::span<const double> v, const std::string& where) {
    for (double x : v)
        if (!std::isfinite(x)) throw NumericError("non-finite value in " + where);
}

enum class Mode { train, infer };

enum class Activation { relu, sigmoid, tanh, softmax };

inline std::string to_string(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::sigmoid: return "sigmoid";
        case Activation::tanh: return "tanh";
        case Activation::softmax: return "softmax";
    }
    return "?";
}

inline Activation parse_activation(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "sigmoid") return Activation::sigmoid;
    if (s == "tanh") return Activation::tanh;
    if (s == "softmax") return Activation::softmax;
    throw InvalidArgument("unknown activation '" + s + "'");
}

// ---------------------------------------------------------------------------
// Scalar nonlinearities

/// Overflow-free logistic function, kept strictly inside (0, 1).
inline double sigmoid(double x) {
    double y;
    if (x >= 0.0) {
        y = 1.0 / (1.0 + std::exp(-x));
    } else {
        const double e = std::exp(x);
        y = e / (1.0 + e);
    }
    constexpr double hi = 1.0 - 0x1.0p-53;
    return std::clamp(y, std::numeric_limits<double>::denorm_min(), hi);
}

inline double relu(double x) { return x > 0.0 ? x : 0.0; }

// ---------------------------------------------------------------------------
// Forward primitives. Weights are taken as raw row-major spans so layers and
// the free-standing ops below share one code path.

namespace kernels {

/// y[m] = W[m x n] x[n] + b[m]
inline void dense(const double* W, const double* b, const double* x, std::size_t m, std::size_t n, double* y) {
    for (std::size_t i = 0; i < m; ++i) {
        double s = b[i];
        const double* w = W + i * n;
        for (std::size_t j = 0; j < n; ++j) s += w[j] * x[j];
        y[i] = s;
    }
}

/// Valid, stride-1 cross-correlation. in [h x w x ci], K [k x k x ci x co], out [(h-k+1) x (w-k+1) x co].
inline void conv2d(const double* in, std::size_t h, std::size_t w, std::size_t ci, const double* K, const double* b,
                   std::size_t k, std::size_t co, double* out) {
    const std::size_t oh = h - k + 1, ow = w - k + 1;
    for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
            double* o = out + (y * ow + x) * co;
            for (std::size_t c = 0; c < co; ++c) o[c] = b[c];
            for (std::size_t dy = 0; dy < k; ++dy)
                for (std::size_t dx = 0; dx < k; ++dx) {
                    const double* px = in + ((y + dy) * w + (x + dx)) * ci;
                    const double* kk = K + (dy * k + dx) * ci * co;
                    for (std::size_t a = 0; a < ci; ++a) {
                        const double v = px[a];
                        const double* kr = kk + a * co;
                        for (std::size_t c = 0; c < co; ++c) o[c] += v * kr[c];
                    }
                }
        }
}

/// Gradients of conv2d given dout; accumulates into dK, db and writes din (if non-null).
inline void conv2d_backward(const double* in, std::size_t h, std::size_t w, std::size_t ci, const double* K,
                            std::size_t k, std::size_t co, const double* dout, double* din, double* dK, double* db) {
    const std::size_t oh = h - k + 1, ow = w - k + 1;
    if (din) std::fill(din, din + h * w * ci, 0.0);
    for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
            const double* g = dout + (y * ow + x) * co;
            for (std::size_t c = 0; c < co; ++c) db[c] += g[c];
            for (std::size_t dy = 0; dy < k; ++dy)
                for (std::size_t dx = 0; dx < k; ++dx) {
                    const std::size_t pix = ((y + dy) * w + (x + dx)) * ci;
                    const std::size_t koff = (dy * k + dx) * ci * co;
                    for (std::size_t a = 0; a < ci; ++a) {
                        const double v = in[pix + a];
                        double* dkr = dK + koff + a * co;
                        const double* kr = K + koff + a * co;
                        double acc = 0.0;
                        for (std::size_t c = 0; c < co; ++c) {
                            dkr[c] += v * g[c];
                            acc += kr[c] * g[c];
                        }
                        if (din) din[pix + a] += acc;
                    }
                }
        }
}

/// LSTM cell, gate order (forget, input, candidate, output). Each W_* is
/// [hidden x (hidden + input)] acting on z = concat(h_prev, x).
struct LstmStepCache {
    std::vector<double> z, f, i, g_pre, g, o, c_prev, c, phi_c;
};

inline void lstm_cell(const double* const W[4], const double* const b[4], std::size_t hidden, std::size_t input,
                      const double* h_prev, const double* c_prev, const double* x, Activation inner, double* h_out,
                      double* c_out, LstmStepCache* cache) {
    const std::size_t zn = hidden + input;
    std::vector<double> z(zn);
    std::copy(h_prev, h_prev + hidden, z.begin());
    std::copy(x, x + input, z.begin() + static_cast<std::ptrdiff_t>(hidden));
    std::vector<double> pre[4];
    for (int gate = 0; gate < 4; ++gate) {
        pre[gate].resize(hidden);
        dense(W[gate], b[gate], z.data(), hidden, zn, pre[gate].data());
    }
    auto phi = [inner](double v) { return inner == Activation::relu ? relu(v) : std::tanh(v); };
    std::vector<double> f(hidden), i(hidden), g(hidden), o(hidden), c(hidden), pc(hidden);
    for (std::size_t u = 0; u < hidden; ++u) {
        f[u] = sigmoid(pre[0][u]);
        i[u] = sigmoid(pre[1][u]);
        g[u] = phi(pre[2][u]);
        o[u] = sigmoid(pre[3][u]);
        c[u] = f[u] * c_prev[u] + i[u] * g[u];
        pc[u] = phi(c[u]);
        h_out[u] = o[u] * pc[u];
        c_out[u] = c[u];
    }
    if (cache) {
        cache->z = std::move(z);
        cache->f = std::move(f);
        cache->i = std::move(i);
        cache->g_pre = std::move(pre[2]);
        cache->g = std::move(g);
        cache->o = std::move(o);
        cache->c_prev.assign(c_prev, c_prev + hidden);
        cache->c = std::move(c);
        cache->phi_c = std::move(pc);
    }
}

}  // namespace kernels

// ---------------------------------------------------------------------------
// Free-standing forward ops

inline std::vector<double> dense_forward(const Matrix& W, std::span<const double> b, std::span<const double> x) {
    require(W.cols == x.size() && W.rows == b.size(), "dense_forward: W is " + std::to_string(W.rows) + "x" +
                                                          std::to_string(W.cols) + ", b has " +
                                                          std::to_string(b.size()) + ", x has " +
                                                          std::to_string(x.size()));
    std::vector<double> y(W.rows);
    kernels::dense(W.data.data(), b.data(), x.data(), W.rows, W.cols, y.data());
    check_finite(y, "dense_forward");
    return y;
}

inline Tensor conv2d_forward(const Tensor& input, const Tensor& kern, std::span<const double> bias) {
    require(input.rank() == 3 && kern.rank() == 4, "conv2d_forward expects [h,w,c_in] input and [k,k,c_in,c_out] kernels");
    const std::size_t h = input.shape[0], w = input.shape[1], ci = input.shape[2];
    const std::size_t k = kern.shape[0], co = kern.shape[3];
    require(kern.shape[1] == k && kern.shape[2] == ci && bias.size() == co, "conv2d_forward: kernel/bias shape mismatch");
    require(k <= h && k <= w, "conv2d_forward: kernel " + std::to_string(k) + " larger than input " + shape_str(input.shape));
    Tensor out({h - k + 1, w - k + 1, co});
    kernels::conv2d(input.data.data(), h, w, ci, kern.data.data(), bias.data(), k, co, out.data.data());
    check_finite(out.data, "conv2d_forward");
    return out;
}

/// Valid, stride-1 1-D cross-correlation. in [len x ci], K [k x ci x co].
inline void conv1d_raw(const double* in, std::size_t len, std::size_t ci, const double* K, const double* b,
                       std::size_t k, std::size_t co, double* out) {
    for (std::size_t t = 0; t + k <= len; ++t) {
        double* o = out + t * co;
        for (std::size_t c = 0; c < co; ++c) o[c] = b[c];
        for (std::size_t d = 0; d < k; ++d)
            for (std::size_t a = 0; a < ci; ++a) {
                const double v = in[(t + d) * ci + a];
                const double* kr = K + (d * ci + a) * co;
                for (std::size_t c = 0; c < co; ++c) o[c] += v * kr[c];
            }
    }
}

inline Tensor conv1d_forward(const Tensor& input, const Tensor& kern, std::span<const double> bias) {
    require(input.rank() == 2 && kern.rank() == 3, "conv1d_forward expects [len,c_in] input and [k,c_in,c_out] kernels");
    const std::size_t len = input.shape[0], ci = input.shape[1], k = kern.shape[0], co = kern.shape[2];
    require(kern.shape[1] == ci && bias.size() == co, "conv1d_forward: kernel/bias shape mismatch");
    require(k <= len, "conv1d_forward: kernel " + std::to_string(k) + " longer than input length " + std::to_string(len));
    Tensor out({len - k + 1, co});
    conv1d_raw(input.data.data(), len, ci, kern.data.data(), bias.data(), k, co, out.data.data());
    check_finite(out.data, "conv1d_forward");
    return out;
}

inline Tensor maxpool1d(const Tensor& input, std::size_t pool) {
    require(input.rank() == 2, "maxpool1d expects [len,c] input");
    require(pool >= 1, "maxpool1d: pool must be >= 1");
    const std::size_t len = input.shape[0], c = input.shape[1];
    require(pool <= len, "maxpool1d: pool " + std::to_string(pool) + " larger than length " + std::to_string(len));
    Tensor out({len / pool, c});
    for (std::size_t t = 0; t < len / pool; ++t)
        for (std::size_t ch = 0; ch < c; ++ch) {
            double m = input.data[t * pool * c + ch];
            for (std::size_t d = 1; d < pool; ++d) m = std::max(m, input.data[(t * pool + d) * c + ch]);
            out.data[t * c + ch] = m;
        }
    return out;
}

/// Inverted dropout with a mask drawn from `rng`.
inline Tensor dropout(const Tensor& input, double rate, Mode mode, Rng& rng, std::vector<double>* mask = nullptr) {
    require(rate >= 0.0 && rate < 1.0, "dropout rate must be in [0,1)");
    if (mode == Mode::infer || rate == 0.0) {
        if (mask) mask->assign(input.size(), 1.0);
        return input;
    }
    Tensor out = input;
    const double scale = 1.0 / (1.0 - rate);
    if (mask) mask->resize(input.size());
    for (std::size_t i = 0; i < input.size(); ++i) {
        const double m = uniform01(rng) < rate ? 0.0 : scale;
        out.data[i] *= m;
        if (mask) (*mask)[i] = m;
    }
    return out;
}

inline Tensor dropout(const Tensor& input, double rate, Mode mode, std::uint64_t seed) {
    Rng rng(seed);
    return dropout(input, rate, mode, rng);
}

inline Tensor activation(const Tensor& x, Activation kind) {
    Tensor y = x;
    switch (kind) {
        case Activation::relu:
            for (auto& v : y.data) v = relu(v);
            break;
        case Activation::sigmoid:
            for (auto& v : y.data) v = sigmoid(v);
            break;
        case Activation::tanh:
            for (auto& v : y.data) v = std::tanh(v);
            break;
        case Activation::softmax: {
            require(x.rank() == 1, "softmax requires a vector, got shape " + shape_str(x.shape));
            if (y.data.empty()) break;
            const double mx = *std::max_element(y.data.begin(), y.data.end());
            double s = 0.0;
            for (auto& v : y.data) {
                v = std::exp(v - mx);
                s += v;
            }
            for (auto& v : y.data) v /= s;
            break;
        }
    }
    check_finite(y.data, "activation " + to_string(kind));
    return y;
}

/// J^T dy for an activation, given its output y.
inline std::vector<double> activation_backward(std::span<const double> y, std::span<const double> dy, Activation kind) {
    std::vector<double> dx(y.size());
    switch (kind) {
        case Activation::relu:
            for (std::size_t i = 0; i < y.size(); ++i) dx[i] = y[i] > 0.0 ? dy[i] : 0.0;
            break;
        case Activation::sigmoid:
            for (std::size_t i = 0; i < y.size(); ++i) dx[i] = dy[i] * y[i] * (1.0 - y[i]);
            break;
        case Activation::tanh:
            for (std::size_t i = 0; i < y.size(); ++i) dx[i] = dy[i] * (1.0 - y[i] * y[i]);
            break;
        case Activation::softmax: {
            double dot = 0.0;
            for (std::size_t i = 0; i < y.size(); ++i) dot += dy[i] * y[i];
            for (std::size_t i = 0; i < y.size(); ++i) dx[i] = y[i] * (dy[i] - dot);
            break;
        }
    }
    return dx;
}

/// Gate weights and biases of one LSTM layer.
struct LSTMParams {
    Matrix W_f, W_i, W_g, W_o;  // hidden x (hidden + input)
    std::vector<double> b_f, b_i, b_g, b_o;

    std::size_t hidden() const { return b_f.size(); }
    std::size_t input() const { return W_f.cols - W_f.rows; }
};

struct LSTMState {
    std::vector<double> h;
    std::vector<double> c;

    static LSTMState zeros(std::size_t hidden) { return {std::vector<double>(hidden, 0.0), std::vector<double>(hidden, 0.0)}; }
};

/// One LSTM time step:
///   z = [h_prev, x];  f, i, o = sigmoid(W z + b);  g = phi(W_g z + b_g)
///   c = f * c_prev + i * g;  h = o * phi(c)
inline LSTMState lstm_step(const LSTMParams& p, const LSTMState& s, std::span<const double> x, Activation inner) {
    require(inner == Activation::tanh || inner == Activation::relu, "LSTM inner activation must be tanh or relu");
    const std::size_t H = p.hidden();
    for (const Matrix* W : {&p.W_f, &p.W_i, &p.W_g, &p.W_o})
        require(W->rows == H && W->cols == H + x.size(), "lstm_step: gate matrix shape mismatch");
    for (const auto* b : {&p.b_i, &p.b_g, &p.b_o}) require(b->size() == H, "lstm_step: bias size mismatch");
    require(s.h.size() == H && s.c.size() == H, "lstm_step: state size mismatch");
    const double* W[4] = {p.W_f.data.data(), p.W_i.data.data(), p.W_g.data.data(), p.W_o.data.data()};
    const double* b[4] = {p.b_f.data(), p.b_i.data(), p.b_g.data(), p.b_o.data()};
    LSTMState out = LSTMState::zeros(H);
    kernels::lstm_cell(W, b, H, x.size(), s.h.data(), s.c.data(), x.data(), inner, out.h.data(), out.c.data(), nullptr);
    check_finite(out.h, "lstm_step");
    check_finite(out.c, "lstm_step");
    return out;
}

/// Binary cross-entropy with p clamped to [1e-7, 1 - 1e-7].
inline double bce_loss(double p, int y) {
    constexpr double eps = 1e-7;
    p = std::clamp(p, eps, 1.0 - eps);
    return -(y * std::log(p) + (1 - y) * std::log(1.0 - p));
}

}  // namespace fraudkit::nn
