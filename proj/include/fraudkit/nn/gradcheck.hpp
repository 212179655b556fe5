#pragma once

#include <string>
#include <vector>

#include "network.hpp"

namespace fraudkit::nn {

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t n_checked = 0;
    std::string worst;  // location of the largest error
};

/// |a - n| / max(|a|, |n|, floor). The floor keeps near-zero gradients from
/// turning finite-difference round-off into huge relative errors.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
    const double d = std::abs(analytic - numeric);
    return d / std::max({std::abs(analytic), std::abs(numeric), floor});
}

namespace detail {
inline void note(GradCheckResult& r, double err, const std::string& where) {
    ++r.n_checked;
    if (err > r.max_rel_error) {
        r.max_rel_error = err;
        r.worst = where;
    }
}
}  // namespace detail

/// Central-difference check of one built layer against the scalar objective
/// f(x, params) = sum_i proj_i * forward(x)_i. In train mode the random source is
/// re-seeded for every evaluation so dropout masks stay fixed.
inline GradCheckResult check_layer(Layer& layer, const Tensor& x, std::span<const double> proj, Mode mode = Mode::infer,
                                   std::uint64_t mask_seed = 1, double step = 1e-5) {
    auto eval = [&](const Tensor& in) {
        Rng rng(mask_seed);
        const Tensor y = layer.forward(in, mode, &rng, nullptr);
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) s += proj[i] * y[i];
        return s;
    };
    Rng rng(mask_seed);
    LayerCache cache;
    const Tensor y = layer.forward(x, mode, &rng, &cache);
    require(proj.size() == y.size(), "projection size does not match layer output");
    std::vector<double> grad(layer.params.size(), 0.0);
    const Tensor dx = layer.backward(Tensor(y.shape, std::vector<double>(proj.begin(), proj.end())), cache, grad);

    GradCheckResult res;
    for (std::size_t i = 0; i < layer.params.size(); ++i) {
        const double keep = layer.params[i];
        layer.params[i] = keep + step;
        const double fp = eval(x);
        layer.params[i] = keep - step;
        const double fm = eval(x);
        layer.params[i] = keep;
        detail::note(res, relative_error(grad[i], (fp - fm) / (2 * step)), "param " + std::to_string(i));
    }
    Tensor xp = x;
    for (std::size_t j = 0; j < x.size(); ++j) {
        xp.data[j] = x.data[j] + step;
        const double fp = eval(xp);
        xp.data[j] = x.data[j] - step;
        const double fm = eval(xp);
        xp.data[j] = x.data[j];
        detail::note(res, relative_error(dx.data[j], (fp - fm) / (2 * step)), "input " + std::to_string(j));
    }
    return res;
}

/// Central-difference check of the network's mean BCE over `rows`. When
/// `max_params` is non-zero, only that many parameters (chosen with `seed`) are probed.
inline GradCheckResult check_network(Network& net, const Matrix& X, std::span<const int> y,
                                     std::span<const std::size_t> rows, std::size_t max_params = 0,
                                     std::uint64_t seed = 0, double step = 1e-5) {
    Gradients g = net.zero_gradients();
    net.loss_gradient(X, y, rows, Mode::infer, nullptr, &g);
    std::vector<std::pair<std::size_t, std::size_t>> coords;
    for (std::size_t l = 0; l < net.layer_count(); ++l)
        for (std::size_t i = 0; i < net.layer(l).params.size(); ++i) coords.emplace_back(l, i);
    if (max_params && coords.size() > max_params) {
        Rng rng(seed);
        shuffle(coords, rng);
        coords.resize(max_params);
    }
    GradCheckResult res;
    for (auto [l, i] : coords) {
        auto& p = net.layer(l).params;
        const double keep = p[i];
        p[i] = keep + step;
        const double fp = net.loss_gradient(X, y, rows, Mode::infer, nullptr, nullptr);
        p[i] = keep - step;
        const double fm = net.loss_gradient(X, y, rows, Mode::infer, nullptr, nullptr);
        p[i] = keep;
        detail::note(res, relative_error(g[l][i], (fp - fm) / (2 * step)),
                     "layer " + std::to_string(l) + " (" + to_string(net.layer(l).spec().kind) + ") param " +
                         std::to_string(i));
    }
    return res;
}

}  // namespace fraudkit::nn
