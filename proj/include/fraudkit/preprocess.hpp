#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "core.hpp"
#include "ingest.hpp"

namespace fraudkit {

/// Per-feature mean and population standard deviation.
struct ScalerParams {
    std::vector<double> mean;
    std::vector<double> std;

    friend bool operator==(const ScalerParams&, const ScalerParams&) = default;
};

inline ScalerParams fit_scaler(const Dataset& ds) {
    require(ds.n_rows() >= 1, "cannot fit a scaler on an empty dataset");
    const std::size_t n = ds.n_rows(), d = ds.n_features();
    ScalerParams p{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < d; ++j) p.mean[j] += ds.features(r, j);
    for (auto& m : p.mean) m /= static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < d; ++j) {
            const double dv = ds.features(r, j) - p.mean[j];
            p.std[j] += dv * dv;
        }
    for (auto& s : p.std) s = std::sqrt(s / static_cast<double>(n));
    return p;
}

/// (x - mean) / std per feature; zero-variance features become 0.
inline Dataset apply_scaler(const Dataset& ds, const ScalerParams& p) {
    require(p.mean.size() == ds.n_features() && p.std.size() == ds.n_features(),
            "scaler width " + std::to_string(p.mean.size()) + " does not match dataset width " +
                std::to_string(ds.n_features()));
    Dataset out = ds;
    for (std::size_t r = 0; r < ds.n_rows(); ++r)
        for (std::size_t j = 0; j < ds.n_features(); ++j)
            out.features(r, j) = p.std[j] > 0.0 ? (ds.features(r, j) - p.mean[j]) / p.std[j] : 0.0;
    return out;
}

inline nlohmann::json to_json(const ScalerParams& p) { return {{"mean", p.mean}, {"std", p.std}}; }

inline ScalerParams scaler_from_json(const nlohmann::json& j) {
    return {j.at("mean").get<std::vector<double>>(), j.at("std").get<std::vector<double>>()};
}

struct Correlation {
    std::vector<std::string> names;
    Matrix values;
    /// Names of zero-variance columns; their off-diagonal entries are reported as 0.
    std::vector<std::string> constant_columns;
};

/// Pearson correlation between all feature columns (and the label, when asked).
/// The result is exactly symmetric with a unit diagonal.
inline Correlation correlation_matrix(const Dataset& ds, bool include_label) {
    require(ds.n_rows() >= 2, "correlation needs at least 2 rows");
    const std::size_t n = ds.n_rows();
    std::vector<std::vector<double>> cols;
    Correlation out;
    for (std::size_t j = 0; j < ds.n_features(); ++j) {
        cols.push_back(ds.features.column(j));
        out.names.push_back(ds.columns[j].name);
    }
    if (include_label) {
        cols.emplace_back(ds.labels.begin(), ds.labels.end());
        out.names.push_back(ds.label.name);
    }
    const std::size_t m = cols.size();
    std::vector<double> norm(m, 0.0);
    for (std::size_t c = 0; c < m; ++c) {
        double mean = 0.0;
        for (double v : cols[c]) mean += v;
        mean /= static_cast<double>(n);
        double ss = 0.0;
        for (double& v : cols[c]) {
            v -= mean;
            ss += v * v;
        }
        norm[c] = std::sqrt(ss);
        if (norm[c] == 0.0) out.constant_columns.push_back(out.names[c]);
    }
    out.values = Matrix(m, m, 0.0);
    for (std::size_t a = 0; a < m; ++a) {
        out.values(a, a) = 1.0;
        for (std::size_t b = a + 1; b < m; ++b) {
            double v = 0.0;
            if (norm[a] > 0.0 && norm[b] > 0.0) {
                double s = 0.0;
                for (std::size_t r = 0; r < n; ++r) s += cols[a][r] * cols[b][r];
                v = std::clamp(s / (norm[a] * norm[b]), -1.0, 1.0);
            }
            out.values(a, b) = v;
            out.values(b, a) = v;
        }
    }
    return out;
}

inline void write_correlation_csv(const Correlation& c, const std::string& path) {
    std::ofstream out(path);
    require(static_cast<bool>(out), "cannot write '" + path + "'");
    out << "feature";
    for (const auto& n : c.names) out << ',' << detail::csv_escape(n);
    out << '\n';
    char buf[40];
    for (std::size_t i = 0; i < c.names.size(); ++i) {
        out << detail::csv_escape(c.names[i]);
        for (std::size_t j = 0; j < c.names.size(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", c.values(i, j));
            out << ',' << buf;
        }
        out << '\n';
    }
}

/// Test / train / validation partition of row indices.
struct SplitIndices {
    std::vector<std::size_t> test;
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
    std::uint64_t seed = 0;
};

struct SplitSizes {
    std::size_t test, validation, train;
};

/// Floor rounding, remainder to train. Each part is bumped to at least one row
/// (taken from train) so any n >= 3 yields three non-empty sets.
inline SplitSizes split_sizes(std::size_t n, double test_frac, double val_frac) {
    require(test_frac > 0.0 && test_frac < 1.0, "test fraction must be in (0,1)");
    require(val_frac > 0.0 && val_frac < 1.0, "validation fraction must be in (0,1)");
    require(n >= 3, "split needs at least 3 rows, got " + std::to_string(n));
    std::size_t test = static_cast<std::size_t>(std::floor(test_frac * static_cast<double>(n)));
    test = std::clamp<std::size_t>(test, 1, n - 2);
    const std::size_t rest = n - test;
    std::size_t val = static_cast<std::size_t>(std::floor(val_frac * static_cast<double>(rest)));
    val = std::clamp<std::size_t>(val, 1, rest - 1);
    return {test, val, rest - val};
}

namespace detail {
inline void assign_split(const std::vector<std::size_t>& perm, SplitSizes sz, SplitIndices& out) {
    auto it = perm.begin();
    out.test.insert(out.test.end(), it, it + static_cast<std::ptrdiff_t>(sz.test));
    it += static_cast<std::ptrdiff_t>(sz.test);
    out.validation.insert(out.validation.end(), it, it + static_cast<std::ptrdiff_t>(sz.validation));
    it += static_cast<std::ptrdiff_t>(sz.validation);
    out.train.insert(out.train.end(), it, perm.end());
}
}  // namespace detail

/// Uniform random permutation under `seed`; first the test block, then
/// validation, then train.
inline SplitIndices split(std::size_t n_rows, double test_frac, double val_frac, std::uint64_t seed) {
    const auto sz = split_sizes(n_rows, test_frac, val_frac);
    Rng rng(seed);
    const auto perm = permutation(n_rows, rng);
    SplitIndices out;
    out.seed = seed;
    detail::assign_split(perm, sz, out);
    return out;
}

/// Split with the given fractions applied within each class separately.
inline SplitIndices stratified_split(const Dataset& ds, double test_frac, double val_frac, std::uint64_t seed) {
    std::vector<std::size_t> pos, neg;
    for (std::size_t r = 0; r < ds.n_rows(); ++r) (ds.labels[r] ? pos : neg).push_back(r);
    Rng rng(seed);
    shuffle(pos, rng);
    shuffle(neg, rng);
    SplitIndices out;
    out.seed = seed;
    detail::assign_split(pos, split_sizes(pos.size(), test_frac, val_frac), out);
    detail::assign_split(neg, split_sizes(neg.size(), test_frac, val_frac), out);
    for (auto* part : {&out.test, &out.validation, &out.train}) shuffle(*part, rng);
    return out;
}

inline SplitIndices split(const Dataset& ds, double test_frac = 0.035, double val_frac = 0.2, std::uint64_t seed = 0,
                          bool stratified = false) {
    return stratified ? stratified_split(ds, test_frac, val_frac, seed) : split(ds.n_rows(), test_frac, val_frac, seed);
}

}  // namespace fraudkit
