#pragma once

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "core.hpp"

namespace fraudkit {

enum class ColumnKind { numeric, categorical, label, drop };
enum class MissingPolicy { forbid, drop_column, drop_row };

inline std::string to_string(ColumnKind k) {
    switch (k) {
        case ColumnKind::numeric: return "numeric";
        case ColumnKind::categorical: return "categorical";
        case ColumnKind::label: return "label";
        case ColumnKind::drop: return "drop";
    }
    return "?";
}

inline ColumnKind parse_column_kind(const std::string& s) {
    if (s == "numeric") return ColumnKind::numeric;
    if (s == "categorical") return ColumnKind::categorical;
    if (s == "label") return ColumnKind::label;
    if (s == "drop") return ColumnKind::drop;
    throw InvalidArgument("unknown column kind '" + s + "'");
}

inline std::string to_string(MissingPolicy p) {
    switch (p) {
        case MissingPolicy::forbid: return "forbid";
        case MissingPolicy::drop_column: return "drop_column";
        case MissingPolicy::drop_row: return "drop_row";
    }
    return "?";
}

inline MissingPolicy parse_missing_policy(const std::string& s) {
    if (s == "forbid") return MissingPolicy::forbid;
    if (s == "drop_column") return MissingPolicy::drop_column;
    if (s == "drop_row") return MissingPolicy::drop_row;
    throw InvalidArgument("unknown missing policy '" + s + "'");
}

struct ColumnSchema {
    std::string name;
    ColumnKind kind = ColumnKind::numeric;
    MissingPolicy missing = MissingPolicy::drop_row;
    /// Categorical code table: categories[code] is the original string.
    std::vector<std::string> categories;
    /// Label tokens. Only meaningful for kind == label.
    std::string positive_token = "1";
    std::string negative_token = "0";
    /// Missing cells seen at load time (before any row was dropped).
    std::size_t n_missing = 0;

    friend bool operator==(const ColumnSchema&, const ColumnSchema&) = default;
};

/// Throws unless exactly one label column exists and names are unique.
inline void validate_schema(const std::vector<ColumnSchema>& schema) {
    std::set<std::string> names;
    std::size_t labels = 0;
    for (const auto& c : schema) {
        require(names.insert(c.name).second, "duplicate column name '" + c.name + "' in schema");
        if (c.kind == ColumnKind::label) ++labels;
    }
    require(labels == 1, "schema must declare exactly one label column (found " + std::to_string(labels) + ")");
}

/// Feature matrix plus binary labels (0 = non-fraud, 1 = fraud).
///
/// `columns` describes the feature columns in matrix order; `label` describes the
/// label column. `row_ids` carries each row's index in the originally loaded or
/// generated table, so provenance survives splitting and resampling.
struct Dataset {
    std::string name;
    std::vector<ColumnSchema> columns;
    ColumnSchema label{"label", ColumnKind::label};
    Matrix features;
    std::vector<int> labels;
    std::vector<std::size_t> row_ids;

    std::size_t n_rows() const { return labels.size(); }
    std::size_t n_features() const { return features.cols; }
    std::size_t n_pos() const { return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1)); }
    std::size_t n_neg() const { return n_rows() - n_pos(); }

    std::vector<std::string> feature_names() const {
        std::vector<std::string> out;
        out.reserve(columns.size());
        for (const auto& c : columns) out.push_back(c.name);
        return out;
    }

    std::optional<std::size_t> feature_index(const std::string& col) const {
        for (std::size_t i = 0; i < columns.size(); ++i)
            if (columns[i].name == col) return i;
        return std::nullopt;
    }

    /// Rows `idx` in the given order; row_ids follow along.
    Dataset select_rows(std::span<const std::size_t> idx) const {
        Dataset out;
        out.name = name;
        out.columns = columns;
        out.label = label;
        out.features = Matrix(idx.size(), n_features());
        out.labels.resize(idx.size());
        out.row_ids.resize(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            const std::size_t r = idx[i];
            require(r < n_rows(), "row index out of range");
            std::copy(features.row(r).begin(), features.row(r).end(), out.features.row(i).begin());
            out.labels[i] = labels[r];
            out.row_ids[i] = row_ids[r];
        }
        return out;
    }

    friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Builds a dataset from a matrix and labels with generic feature names f0..f{n-1}.
inline Dataset make_dataset(Matrix features, std::vector<int> labels, std::string name = "data") {
    require(features.rows == labels.size(), "feature rows and label count differ");
    for (int y : labels) require(y == 0 || y == 1, "labels must be 0 or 1");
    Dataset ds;
    ds.name = std::move(name);
    for (std::size_t j = 0; j < features.cols; ++j) ds.columns.push_back({"f" + std::to_string(j), ColumnKind::numeric});
    ds.features = std::move(features);
    ds.labels = std::move(labels);
    ds.row_ids = iota_indices(ds.labels.size());
    return ds;
}

// ---------------------------------------------------------------------------
// Categorical encoding

/// Ordinal codes by first appearance. `mapping`, when given, receives the code table.
inline std::vector<double> encode_categoricals(std::span<const std::string> column,
                                               std::vector<std::string>* mapping = nullptr) {
    std::unordered_map<std::string, std::size_t> codes;
    std::vector<std::string> table;
    std::vector<double> out;
    out.reserve(column.size());
    for (const auto& v : column) {
        auto [it, inserted] = codes.try_emplace(v, table.size());
        if (inserted) table.push_back(v);
        out.push_back(static_cast<double>(it->second));
    }
    if (mapping) *mapping = std::move(table);
    return out;
}

/// Re-encodes with a stored code table; unseen strings are appended to it.
inline std::vector<double> encode_with_mapping(std::span<const std::string> column, std::vector<std::string>& mapping) {
    std::unordered_map<std::string, std::size_t> codes;
    for (std::size_t i = 0; i < mapping.size(); ++i) codes.emplace(mapping[i], i);
    std::vector<double> out;
    out.reserve(column.size());
    for (const auto& v : column) {
        auto [it, inserted] = codes.try_emplace(v, mapping.size());
        if (inserted) mapping.push_back(v);
        out.push_back(static_cast<double>(it->second));
    }
    return out;
}

// ---------------------------------------------------------------------------
// CSV

namespace detail {

inline std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r' || s[b] == '\n')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r' || s[e - 1] == '\n')) --e;
    return std::string(s.substr(b, e - b));
}

/// Splits one CSV record. Double-quoted fields may contain commas and "" escapes.
inline void split_csv_line(std::string_view line, std::vector<std::string>& out) {
    out.clear();
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find('"') == std::string_view::npos) {
        std::size_t start = 0;
        while (true) {
            const std::size_t pos = line.find(',', start);
            if (pos == std::string_view::npos) {
                out.emplace_back(line.substr(start));
                break;
            }
            out.emplace_back(line.substr(start, pos - start));
            start = pos + 1;
        }
        return;
    }
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(field));
            field.clear();
        } else {
            field += c;
        }
    }
    out.push_back(std::move(field));
}

inline bool is_missing_token(std::string_view s) {
    return s.empty() || s == "NA" || s == "NaN" || s == "nan" || s == "null" || s == "NULL";
}

inline std::optional<double> parse_double(std::string_view s) {
    double v = 0.0;
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

inline std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

}  // namespace detail

/// Reads and trims the header row of a CSV file.
inline std::vector<std::string> read_csv_header(const std::string& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), "cannot open '" + path + "'");
    std::string line;
    require(static_cast<bool>(std::getline(in, line)), "'" + path + "' has no header row");
    std::vector<std::string> fields;
    detail::split_csv_line(line, fields);
    for (auto& f : fields) f = detail::trim(f);
    return fields;
}

/// Loads a comma-delimited file with a header row.
///
/// Header names must equal the schema names as a set; feature order follows the
/// file. Dropped columns are skipped, categoricals are encoded by first appearance
/// (among retained rows), and missing cells are handled per column policy. A
/// column that is missing in every row is dropped under the drop_row policy too,
/// since dropping rows would empty the table.
inline Dataset load_csv(const std::string& path, std::vector<ColumnSchema> schema) {
    validate_schema(schema);
    const auto header = read_csv_header(path);
    {
        std::set<std::string> hs(header.begin(), header.end());
        std::set<std::string> ss;
        for (const auto& c : schema) ss.insert(c.name);
        require(hs.size() == header.size(), "duplicate column names in header of '" + path + "'");
        if (hs != ss) {
            std::string msg = "header of '" + path + "' does not match schema:";
            for (const auto& h : hs)
                if (!ss.count(h)) msg += " unexpected '" + h + "'";
            for (const auto& s : ss)
                if (!hs.count(s)) msg += " missing '" + s + "'";
            throw InvalidArgument(msg);
        }
    }
    std::unordered_map<std::string, const ColumnSchema*> by_name;
    for (const auto& c : schema) by_name[c.name] = &c;

    // Per file column: index into numeric/categorical storage.
    struct Slot {
        const ColumnSchema* col;
        std::vector<double> num;              // NaN marks missing
        std::vector<std::string> cat;
        std::vector<unsigned char> cat_missing;
    };
    std::vector<Slot> slots;
    std::vector<int> slot_of(header.size(), -1);
    std::size_t label_col = 0;
    for (std::size_t i = 0; i < header.size(); ++i) {
        const ColumnSchema* c = by_name.at(header[i]);
        if (c->kind == ColumnKind::label) {
            label_col = i;
        } else if (c->kind != ColumnKind::drop) {
            slot_of[i] = static_cast<int>(slots.size());
            slots.push_back({c, {}, {}, {}});
        }
    }
    const ColumnSchema& label_schema = *by_name.at(header[label_col]);

    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    std::vector<std::string> fields;
    std::vector<int> labels;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        detail::split_csv_line(line, fields);
        if (fields.size() != header.size())
            throw InvalidArgument(path + ":" + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                                  " fields, got " + std::to_string(fields.size()));
        const std::string lab = detail::trim(fields[label_col]);
        if (lab == label_schema.positive_token) {
            labels.push_back(1);
        } else if (lab == label_schema.negative_token) {
            labels.push_back(0);
        } else {
            auto v = detail::parse_double(lab);
            if (v && (*v == 0.0 || *v == 1.0) && label_schema.positive_token == "1") {
                labels.push_back(static_cast<int>(*v));
            } else {
                throw InvalidArgument(path + ":" + std::to_string(line_no) + ": label '" + lab + "' outside {" +
                                      label_schema.negative_token + "," + label_schema.positive_token + "}");
            }
        }
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (slot_of[i] < 0) continue;
            Slot& s = slots[static_cast<std::size_t>(slot_of[i])];
            const std::string cell = detail::trim(fields[i]);
            const bool missing = detail::is_missing_token(cell);
            if (s.col->kind == ColumnKind::numeric) {
                if (missing) {
                    s.num.push_back(std::numeric_limits<double>::quiet_NaN());
                } else {
                    auto v = detail::parse_double(cell);
                    if (!v)
                        throw InvalidArgument(path + ":" + std::to_string(line_no) + ": unparseable numeric cell '" +
                                              cell + "' in column '" + s.col->name + "'");
                    s.num.push_back(*v);
                }
            } else {
                s.cat.push_back(missing ? std::string() : cell);
                s.cat_missing.push_back(missing ? 1 : 0);
            }
        }
    }
    const std::size_t n = labels.size();

    std::vector<unsigned char> keep_row(n, 1);
    std::vector<unsigned char> keep_col(slots.size(), 1);
    std::vector<std::size_t> missing_counts(slots.size(), 0);
    for (std::size_t s = 0; s < slots.size(); ++s) {
        const auto& sl = slots[s];
        std::size_t miss = 0;
        for (std::size_t r = 0; r < n; ++r) {
            const bool m = sl.col->kind == ColumnKind::numeric ? std::isnan(sl.num[r]) : sl.cat_missing[r] != 0;
            if (m) ++miss;
        }
        missing_counts[s] = miss;
        if (miss == 0) continue;
        switch (sl.col->missing) {
            case MissingPolicy::forbid:
                throw InvalidArgument("column '" + sl.col->name + "' has " + std::to_string(miss) +
                                      " missing values under policy forbid");
            case MissingPolicy::drop_column:
                keep_col[s] = 0;
                break;
            case MissingPolicy::drop_row:
                if (miss == n) {
                    keep_col[s] = 0;
                    break;
                }
                for (std::size_t r = 0; r < n; ++r) {
                    const bool m = sl.col->kind == ColumnKind::numeric ? std::isnan(sl.num[r]) : sl.cat_missing[r] != 0;
                    if (m) keep_row[r] = 0;
                }
                break;
        }
    }

    std::vector<std::size_t> rows;
    for (std::size_t r = 0; r < n; ++r)
        if (keep_row[r]) rows.push_back(r);

    Dataset ds;
    ds.name = path;
    ds.label = label_schema;
    std::vector<std::size_t> kept_slots;
    for (std::size_t s = 0; s < slots.size(); ++s)
        if (keep_col[s]) kept_slots.push_back(s);
    ds.features = Matrix(rows.size(), kept_slots.size());
    for (std::size_t j = 0; j < kept_slots.size(); ++j) {
        auto& sl = slots[kept_slots[j]];
        ColumnSchema col = *sl.col;
        col.n_missing = missing_counts[kept_slots[j]];
        if (col.kind == ColumnKind::numeric) {
            for (std::size_t i = 0; i < rows.size(); ++i) ds.features(i, j) = sl.num[rows[i]];
        } else {
            std::vector<std::string> vals;
            vals.reserve(rows.size());
            for (std::size_t r : rows) vals.push_back(std::move(sl.cat[r]));
            const auto codes = col.categories.empty() ? encode_categoricals(vals, &col.categories)
                                                      : encode_with_mapping(vals, col.categories);
            for (std::size_t i = 0; i < rows.size(); ++i) ds.features(i, j) = codes[i];
        }
        ds.columns.push_back(std::move(col));
    }
    ds.labels.reserve(rows.size());
    for (std::size_t r : rows) ds.labels.push_back(labels[r]);
    ds.row_ids = iota_indices(rows.size());
    return ds;
}

/// Writes features (17 significant digits) and the 0/1 label as the last column.
inline void write_csv(const Dataset& ds, const std::string& path) {
    std::ofstream out(path);
    require(static_cast<bool>(out), "cannot write '" + path + "'");
    for (const auto& c : ds.columns) out << detail::csv_escape(c.name) << ',';
    out << detail::csv_escape(ds.label.name) << '\n';
    char buf[40];
    for (std::size_t r = 0; r < ds.n_rows(); ++r) {
        for (std::size_t j = 0; j < ds.n_features(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", ds.features(r, j));
            out << buf << ',';
        }
        out << ds.labels[r] << '\n';
    }
}

/// Schema where every listed feature is numeric and `label` is the label column.
inline std::vector<ColumnSchema> numeric_schema(const std::vector<std::string>& features, const std::string& label) {
    std::vector<ColumnSchema> s;
    for (const auto& f : features) s.push_back({f, ColumnKind::numeric});
    s.push_back({label, ColumnKind::label});
    return s;
}

// ---------------------------------------------------------------------------

/// Removes a feature column, typically an all-distinct identifier.
inline Dataset drop_uninformative(const Dataset& ds, const std::string& column) {
    require(column != ds.label.name, "cannot drop the label column '" + column + "'");
    const auto idx = ds.feature_index(column);
    require(idx.has_value(), "unknown column '" + column + "'");
    Dataset out = ds;
    out.columns.erase(out.columns.begin() + static_cast<std::ptrdiff_t>(*idx));
    out.features = Matrix(ds.n_rows(), ds.n_features() - 1);
    for (std::size_t r = 0; r < ds.n_rows(); ++r) {
        std::size_t k = 0;
        for (std::size_t j = 0; j < ds.n_features(); ++j)
            if (j != *idx) out.features(r, k++) = ds.features(r, j);
    }
    return out;
}

struct ColumnProfile {
    std::string name;
    double mean = 0.0;
    double std = 0.0;
    std::size_t n_missing = 0;
    std::size_t n_distinct = 0;
};

struct DatasetProfile {
    std::size_t n_rows = 0;
    std::size_t n_features = 0;
    std::size_t n_pos = 0;
    std::size_t n_neg = 0;
    double fraud_fraction = 0.0;
    std::vector<ColumnProfile> columns;
};

inline DatasetProfile profile(const Dataset& ds) {
    require(ds.n_rows() >= 1, "cannot profile an empty dataset");
    DatasetProfile p;
    p.n_rows = ds.n_rows();
    p.n_features = ds.n_features();
    p.n_pos = ds.n_pos();
    p.n_neg = ds.n_neg();
    p.fraud_fraction = static_cast<double>(p.n_pos) / static_cast<double>(p.n_rows);
    const double n = static_cast<double>(p.n_rows);
    for (std::size_t j = 0; j < ds.n_features(); ++j) {
        ColumnProfile c;
        c.name = ds.columns[j].name;
        c.n_missing = ds.columns[j].n_missing;
        std::unordered_set<double> distinct;
        double sum = 0.0;
        for (std::size_t r = 0; r < ds.n_rows(); ++r) {
            sum += ds.features(r, j);
            distinct.insert(ds.features(r, j));
        }
        c.mean = sum / n;
        double ss = 0.0;
        for (std::size_t r = 0; r < ds.n_rows(); ++r) {
            const double d = ds.features(r, j) - c.mean;
            ss += d * d;
        }
        c.std = std::sqrt(ss / n);
        c.n_distinct = distinct.size();
        p.columns.push_back(std::move(c));
    }
    return p;
}

inline nlohmann::json to_json(const DatasetProfile& p) {
    nlohmann::json cols = nlohmann::json::array();
    for (const auto& c : p.columns)
        cols.push_back({{"name", c.name}, {"mean", c.mean}, {"std", c.std}, {"n_missing", c.n_missing},
                        {"n_distinct", c.n_distinct}});
    return {{"n_rows", p.n_rows},   {"n_features", p.n_features}, {"n_pos", p.n_pos},
            {"n_neg", p.n_neg},     {"fraud_fraction", p.fraud_fraction}, {"columns", cols}};
}

/// Draws exactly `n_pos` positives and `n_neg` negatives without replacement.
/// Selected rows keep their original relative order.
inline Dataset subsample_counts(const Dataset& ds, std::size_t n_pos, std::size_t n_neg, std::uint64_t seed) {
    std::vector<std::size_t> pos, neg;
    for (std::size_t r = 0; r < ds.n_rows(); ++r) (ds.labels[r] ? pos : neg).push_back(r);
    require(n_pos <= pos.size(), "requested " + std::to_string(n_pos) + " positives, only " +
                                     std::to_string(pos.size()) + " available");
    require(n_neg <= neg.size(), "requested " + std::to_string(n_neg) + " negatives, only " +
                                     std::to_string(neg.size()) + " available");
    Rng rng(seed);
    shuffle(pos, rng);
    shuffle(neg, rng);
    std::vector<std::size_t> pick(pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(n_pos));
    pick.insert(pick.end(), neg.begin(), neg.begin() + static_cast<std::ptrdiff_t>(n_neg));
    std::sort(pick.begin(), pick.end());
    return ds.select_rows(pick);
}

/// Random subsample of `n` rows. With `preserve_fraction`, the positive count is
/// floor(n * n_pos / n_rows) and the remainder goes to the majority class.
inline Dataset subsample(const Dataset& ds, std::size_t n, bool preserve_fraction, std::uint64_t seed) {
    require(n <= ds.n_rows(), "subsample size " + std::to_string(n) + " exceeds " + std::to_string(ds.n_rows()) + " rows");
    if (preserve_fraction && ds.n_rows() > 0) {
        const std::size_t pos = static_cast<std::size_t>(
            (static_cast<unsigned __int128>(n) * ds.n_pos()) / ds.n_rows());
        return subsample_counts(ds, pos, n - pos, seed);
    }
    Rng rng(seed);
    auto perm = permutation(ds.n_rows(), rng);
    perm.resize(n);
    std::sort(perm.begin(), perm.end());
    return ds.select_rows(perm);
}

}  // namespace fraudkit
