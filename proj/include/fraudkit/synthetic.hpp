#pragma once

#include <string>

#include "core.hpp"
#include "ingest.hpp"

namespace fraudkit {

/// Two Gaussian classes with identity covariance. The fraud-class mean sits
/// `separation` standard deviations from the origin along a seeded random unit vector.
struct SyntheticSpec {
    std::size_t n_rows = 1000;
    std::size_t n_features = 10;
    double fraud_fraction = 0.01;
    double separation = 2.0;
    std::uint64_t seed = 0;

    friend bool operator==(const SyntheticSpec&, const SyntheticSpec&) = default;
};

/// Positive count = round(n_rows * fraud_fraction).
inline std::size_t synthetic_positive_count(const SyntheticSpec& s) {
    return round_count(static_cast<double>(s.n_rows) * s.fraud_fraction);
}

inline Dataset gen_synthetic(const SyntheticSpec& s) {
    require(s.n_rows >= 1, "synthetic spec needs n_rows >= 1");
    require(s.n_features >= 1, "synthetic spec needs n_features >= 1");
    require(s.fraud_fraction > 0.0 && s.fraud_fraction < 1.0, "fraud_fraction must be in (0,1)");
    require(s.separation >= 0.0 && std::isfinite(s.separation), "separation must be finite and >= 0");
    Rng rng(s.seed);

    std::vector<double> dir(s.n_features);
    double norm = 0.0;
    while (norm == 0.0) {
        for (auto& v : dir) v = standard_normal(rng);
        norm = 0.0;
        for (double v : dir) norm += v * v;
        norm = std::sqrt(norm);
    }
    for (auto& v : dir) v /= norm;

    const std::size_t n_pos = synthetic_positive_count(s);
    std::vector<int> labels(s.n_rows, 0);
    auto order = permutation(s.n_rows, rng);
    for (std::size_t i = 0; i < n_pos; ++i) labels[order[i]] = 1;

    Matrix X(s.n_rows, s.n_features);
    for (std::size_t r = 0; r < s.n_rows; ++r)
        for (std::size_t j = 0; j < s.n_features; ++j)
            X(r, j) = standard_normal(rng) + (labels[r] ? s.separation * dir[j] : 0.0);
    Dataset ds = make_dataset(std::move(X), std::move(labels), "synthetic");
    ds.label.name = "Class";
    return ds;
}

}  // namespace fraudkit
