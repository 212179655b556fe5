#pragma once

#include <algorithm>
#include <fstream>
#include <string>
#include <vector>

#include "core.hpp"
#include "ingest.hpp"

namespace fraudkit {

enum class SamplerMethod { none, rus, nearmiss, smote };

inline std::string to_string(SamplerMethod m) {
    switch (m) {
        case SamplerMethod::none: return "none";
        case SamplerMethod::rus: return "rus";
        case SamplerMethod::nearmiss: return "nearmiss";
        case SamplerMethod::smote: return "smote";
    }
    return "?";
}

inline SamplerMethod parse_sampler_method(const std::string& s) {
    if (s == "none") return SamplerMethod::none;
    if (s == "rus") return SamplerMethod::rus;
    if (s == "nearmiss") return SamplerMethod::nearmiss;
    if (s == "smote") return SamplerMethod::smote;
    throw InvalidArgument("unknown sampler '" + s + "'");
}

/// Ratio semantics depend on the method: under-samplers take majority/minority
/// (>= 1), SMOTE takes minority/majority after resampling (in (0, 1]).
struct SamplerConfig {
    SamplerMethod method = SamplerMethod::none;
    int nearmiss_version = 1;
    std::size_t k_neighbors = 0;  // 0: method default (NearMiss 3, SMOTE 5)
    double ratio = 1.0;
    std::uint64_t seed = 0;

    std::size_t k() const {
        if (k_neighbors) return k_neighbors;
        return method == SamplerMethod::smote ? 5 : 3;
    }

    /// Short label used in reports, e.g. "nearmiss2" or "smote".
    std::string label() const {
        if (method == SamplerMethod::nearmiss) return "nearmiss" + std::to_string(nearmiss_version);
        return to_string(method);
    }

    friend bool operator==(const SamplerConfig&, const SamplerConfig&) = default;
};

namespace detail {

inline double euclidean(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

inline void split_classes(const Dataset& ds, std::vector<std::size_t>& pos, std::vector<std::size_t>& neg) {
    pos.clear();
    neg.clear();
    for (std::size_t r = 0; r < ds.n_rows(); ++r) (ds.labels[r] ? pos : neg).push_back(r);
}

struct Ranked {
    double key;
    std::size_t index;
};

inline bool ranked_less(const Ranked& a, const Ranked& b) {
    return a.key < b.key || (a.key == b.key && a.index < b.index);
}

/// Distances from row `r` to each row in `targets`, sorted ascending with index tie-break.
inline std::vector<Ranked> sorted_distances(const Dataset& ds, std::size_t r, const std::vector<std::size_t>& targets,
                                            bool skip_self = false) {
    std::vector<Ranked> d;
    d.reserve(targets.size());
    for (std::size_t t : targets) {
        if (skip_self && t == r) continue;
        d.push_back({euclidean(ds.features.row(r), ds.features.row(t)), t});
    }
    std::sort(d.begin(), d.end(), ranked_less);
    return d;
}

/// Mean of the first k keys of an ascending list, summed in ascending order.
inline double mean_of_smallest(const std::vector<Ranked>& d, std::size_t k) {
    double s = 0.0;
    for (std::size_t i = 0; i < k; ++i) s += d[i].key;
    return s / static_cast<double>(k);
}

/// Mean of the last k keys, summed in ascending order.
inline double mean_of_largest(const std::vector<Ranked>& d, std::size_t k) {
    double s = 0.0;
    for (std::size_t i = d.size() - k; i < d.size(); ++i) s += d[i].key;
    return s / static_cast<double>(k);
}

inline Dataset assemble(const Dataset& ds, std::vector<std::size_t> rows, std::uint64_t seed) {
    Rng rng(seed);
    shuffle(rows, rng);
    return ds.select_rows(rows);
}

}  // namespace detail

/// Random under-sampling: all minority rows plus round(ratio * n_pos) majority
/// rows chosen uniformly; output order shuffled under the same seed.
inline Dataset rus(const Dataset& ds, double ratio, std::uint64_t seed) {
    std::vector<std::size_t> pos, neg;
    detail::split_classes(ds, pos, neg);
    require(!pos.empty(), "random under-sampling needs at least one minority row");
    require(ratio > 0.0, "under-sampling ratio must be positive");
    const std::size_t target = round_count(ratio * static_cast<double>(pos.size()));
    require(target <= neg.size(), "ratio " + std::to_string(ratio) + " needs " + std::to_string(target) +
                                      " majority rows, only " + std::to_string(neg.size()) + " available");
    Rng rng(seed);
    shuffle(neg, rng);
    neg.resize(target);
    std::sort(neg.begin(), neg.end());
    std::vector<std::size_t> rows = pos;
    rows.insert(rows.end(), neg.begin(), neg.end());
    return detail::assemble(ds, std::move(rows), splitmix64(seed));
}

/// NearMiss under-sampling. Keeps every minority row and round(ratio * n_pos)
/// majority rows, chosen by:
///   v1: smallest mean distance to the k nearest minority rows;
///   v2: smallest mean distance to the k farthest minority rows;
///   v3: for each minority row, its k nearest majority rows form a candidate pool;
///       candidates with the largest mean distance to their k nearest minority rows
///       are kept. If the pool is smaller than the target, the remaining slots are
///       filled from non-candidates by the same score.
/// Ties are broken by lower row index. Output rows: minority first, then the kept
/// majority rows in ascending index order.
inline Dataset nearmiss(const Dataset& ds, int version, std::size_t k, double ratio) {
    require(version >= 1 && version <= 3, "NearMiss version must be 1, 2 or 3");
    require(k >= 1, "NearMiss needs k >= 1");
    std::vector<std::size_t> pos, neg;
    detail::split_classes(ds, pos, neg);
    require(pos.size() >= k, "NearMiss needs at least k=" + std::to_string(k) + " minority rows, got " +
                                 std::to_string(pos.size()));
    const std::size_t target = round_count(ratio * static_cast<double>(pos.size()));
    require(target <= neg.size(), "NearMiss target " + std::to_string(target) + " exceeds majority count " +
                                      std::to_string(neg.size()));

    std::vector<std::size_t> kept;
    if (version == 1 || version == 2) {
        std::vector<detail::Ranked> score;
        score.reserve(neg.size());
        for (std::size_t r : neg) {
            const auto d = detail::sorted_distances(ds, r, pos);
            score.push_back({version == 1 ? detail::mean_of_smallest(d, k) : detail::mean_of_largest(d, k), r});
        }
        std::sort(score.begin(), score.end(), detail::ranked_less);
        for (std::size_t i = 0; i < target; ++i) kept.push_back(score[i].index);
    } else {
        std::vector<unsigned char> candidate(ds.n_rows(), 0);
        const std::size_t m = std::min(k, neg.size());
        for (std::size_t p : pos) {
            const auto d = detail::sorted_distances(ds, p, neg);
            for (std::size_t i = 0; i < m; ++i) candidate[d[i].index] = 1;
        }
        // Larger mean distance ranks first: sort by negated score.
        std::vector<detail::Ranked> in_pool, out_pool;
        for (std::size_t r : neg) {
            const auto d = detail::sorted_distances(ds, r, pos);
            (candidate[r] ? in_pool : out_pool).push_back({-detail::mean_of_smallest(d, k), r});
        }
        std::sort(in_pool.begin(), in_pool.end(), detail::ranked_less);
        std::sort(out_pool.begin(), out_pool.end(), detail::ranked_less);
        for (std::size_t i = 0; i < target; ++i)
            kept.push_back(i < in_pool.size() ? in_pool[i].index : out_pool[i - in_pool.size()].index);
    }
    std::sort(kept.begin(), kept.end());
    std::vector<std::size_t> rows = pos;
    rows.insert(rows.end(), kept.begin(), kept.end());
    return ds.select_rows(rows);
}

/// One synthetic SMOTE row: base + lambda * (neighbor - base). Indices refer to
/// rows of the input dataset.
struct SmoteProvenance {
    std::size_t base;
    std::size_t neighbor;
    double lambda;
};

struct SmoteResult {
    Dataset data;
    std::vector<SmoteProvenance> provenance;  // one entry per appended row, in order
};

/// SMOTE over-sampling. Appends round(ratio * n_neg) - n_pos synthetic minority
/// rows after all original rows (which are left untouched, in order).
inline SmoteResult smote_with_provenance(const Dataset& ds, double ratio, std::size_t k, std::uint64_t seed) {
    std::vector<std::size_t> pos, neg;
    detail::split_classes(ds, pos, neg);
    require(pos.size() >= 2, "SMOTE needs at least 2 minority rows");
    require(k >= 1 && k < pos.size(), "SMOTE needs 1 <= k < minority count (k=" + std::to_string(k) +
                                          ", minority=" + std::to_string(pos.size()) + ")");
    require(ratio > 0.0, "SMOTE ratio must be positive");
    const std::size_t target = round_count(ratio * static_cast<double>(neg.size()));
    require(target >= pos.size(), "SMOTE ratio " + std::to_string(ratio) + " gives target " + std::to_string(target) +
                                      " below current minority count " + std::to_string(pos.size()));
    const std::size_t n_new = target - pos.size();

    // k nearest minority neighbours of every minority row (exact, index tie-break).
    std::vector<std::vector<std::size_t>> nn(pos.size());
    if (n_new > 0) {
        for (std::size_t i = 0; i < pos.size(); ++i) {
            const auto d = detail::sorted_distances(ds, pos[i], pos, true);
            for (std::size_t j = 0; j < k; ++j) nn[i].push_back(d[j].index);
        }
    }

    SmoteResult res;
    res.data = ds;
    const std::size_t d = ds.n_features();
    res.data.features.data.reserve((ds.n_rows() + n_new) * d);
    res.provenance.reserve(n_new);
    Rng rng(seed);
    std::size_t next_id = ds.row_ids.empty() ? 0 : *std::max_element(ds.row_ids.begin(), ds.row_ids.end()) + 1;
    for (std::size_t s = 0; s < n_new; ++s) {
        const std::size_t i = uniform_index(rng, pos.size());
        const std::size_t nb = nn[i][uniform_index(rng, k)];
        const double lambda = uniform_closed01(rng);
        const std::size_t base = pos[i];
        for (std::size_t j = 0; j < d; ++j) {
            const double a = ds.features(base, j), b = ds.features(nb, j);
            res.data.features.data.push_back(a + lambda * (b - a));
        }
        res.data.labels.push_back(1);
        res.data.row_ids.push_back(next_id++);
        res.provenance.push_back({base, nb, lambda});
    }
    res.data.features.rows = res.data.labels.size();
    return res;
}

inline Dataset smote(const Dataset& ds, double ratio, std::size_t k, std::uint64_t seed) {
    return smote_with_provenance(ds, ratio, k, seed).data;
}

inline void write_provenance_csv(const std::vector<SmoteProvenance>& prov, const std::string& path) {
    std::ofstream out(path);
    require(static_cast<bool>(out), "cannot write '" + path + "'");
    out << "synthetic,base,neighbor,lambda\n";
    char buf[40];
    for (std::size_t i = 0; i < prov.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", prov[i].lambda);
        out << i << ',' << prov[i].base << ',' << prov[i].neighbor << ',' << buf << '\n';
    }
}

/// Dispatches on `cfg.method`.
inline Dataset resample(const Dataset& ds, const SamplerConfig& cfg) {
    switch (cfg.method) {
        case SamplerMethod::none: return ds;
        case SamplerMethod::rus: return rus(ds, cfg.ratio, cfg.seed);
        case SamplerMethod::nearmiss: return nearmiss(ds, cfg.nearmiss_version, cfg.k(), cfg.ratio);
        case SamplerMethod::smote: return smote(ds, cfg.ratio, cfg.k(), cfg.seed);
    }
    return ds;
}

}  // namespace fraudkit
