#pragma once

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "core.hpp"
#include "ingest.hpp"

namespace fraudkit {

/// Sectioned key/value configuration.
///
/// Grammar, one item per line:
///   # comment            (also ';')
///   [section]
///   key = value          (key may contain spaces; value runs to end of line)
/// Keys before the first header belong to the unnamed section "". Lists are
/// comma-separated values. Repeating a key within a section is an error.
class Config {
public:
    using Section = std::map<std::string, std::string>;

    static Config parse(std::string_view text, const std::string& origin = "<config>") {
        Config c;
        std::string section;
        std::istringstream in{std::string(text)};
        std::string line;
        std::size_t no = 0;
        while (std::getline(in, line)) {
            ++no;
            const std::string t = detail::trim(line);
            if (t.empty() || t[0] == '#' || t[0] == ';') continue;
            const std::string where = origin + ":" + std::to_string(no);
            if (t.front() == '[') {
                require(t.back() == ']', where + ": unterminated section header");
                section = detail::trim(std::string_view(t).substr(1, t.size() - 2));
                c.sections_[section];
                continue;
            }
            const auto eq = t.find('=');
            require(eq != std::string::npos, where + ": expected 'key = value'");
            const std::string key = detail::trim(std::string_view(t).substr(0, eq));
            require(!key.empty(), where + ": empty key");
            const std::string value = detail::trim(std::string_view(t).substr(eq + 1));
            require(c.sections_[section].emplace(key, value).second,
                    where + ": duplicate key '" + key + "' in section [" + section + "]");
        }
        return c;
    }

    static Config load(const std::string& path) {
        std::ifstream in(path);
        require(static_cast<bool>(in), "cannot open config '" + path + "'");
        std::stringstream ss;
        ss << in.rdbuf();
        return parse(ss.str(), path);
    }

    void set(const std::string& section, const std::string& key, const std::string& value) { sections_[section][key] = value; }

    /// Applies "section.key=value" (or "key=value" for the unnamed section).
    /// Keys never contain dots, so "data.ecd.path" is section "data.ecd".
    void apply_override(const std::string& assignment) {
        const auto eq = assignment.find('=');
        require(eq != std::string::npos, "override '" + assignment + "' must look like section.key=value");
        const std::string lhs = detail::trim(std::string_view(assignment).substr(0, eq));
        const std::string value = detail::trim(std::string_view(assignment).substr(eq + 1));
        const auto dot = lhs.rfind('.');
        if (dot == std::string::npos)
            set("", lhs, value);
        else
            set(lhs.substr(0, dot), lhs.substr(dot + 1), value);
    }

    bool has_section(const std::string& s) const { return sections_.count(s) > 0; }
    bool has(const std::string& s, const std::string& k) const {
        auto it = sections_.find(s);
        return it != sections_.end() && it->second.count(k);
    }

    const Section& section(const std::string& s) const {
        static const Section empty;
        mark_section(s);
        auto it = sections_.find(s);
        return it == sections_.end() ? empty : it->second;
    }

    std::string get(const std::string& s, const std::string& k, const std::string& fallback) const {
        if (!has(s, k)) return fallback;
        used_.insert({s, k});
        return sections_.at(s).at(k);
    }

    std::string get(const std::string& s, const std::string& k) const {
        require(has(s, k), "missing required key '" + k + "' in section [" + s + "]");
        used_.insert({s, k});
        return sections_.at(s).at(k);
    }

    double get_double(const std::string& s, const std::string& k, double fallback) const {
        return has(s, k) ? to_double(s, k, get(s, k)) : fallback;
    }
    double get_double(const std::string& s, const std::string& k) const { return to_double(s, k, get(s, k)); }

    std::size_t get_size(const std::string& s, const std::string& k, std::size_t fallback) const {
        return has(s, k) ? to_size(s, k, get(s, k)) : fallback;
    }
    std::uint64_t get_u64(const std::string& s, const std::string& k, std::uint64_t fallback) const {
        return has(s, k) ? to_size(s, k, get(s, k)) : fallback;
    }

    bool get_bool(const std::string& s, const std::string& k, bool fallback) const {
        if (!has(s, k)) return fallback;
        const std::string v = get(s, k);
        if (v == "true" || v == "yes" || v == "1" || v == "on") return true;
        if (v == "false" || v == "no" || v == "0" || v == "off") return false;
        throw InvalidArgument("[" + s + "] " + k + ": expected a boolean, got '" + v + "'");
    }

    std::vector<std::string> get_list(const std::string& s, const std::string& k,
                                      const std::vector<std::string>& fallback) const {
        if (!has(s, k)) return fallback;
        std::vector<std::string> out;
        std::string cur;
        std::istringstream in(get(s, k));
        while (std::getline(in, cur, ',')) {
            cur = detail::trim(cur);
            if (!cur.empty()) out.push_back(cur);
        }
        return out;
    }

    std::vector<double> get_double_list(const std::string& s, const std::string& k, const std::vector<double>& fallback) const {
        if (!has(s, k)) return fallback;
        std::vector<double> out;
        for (const auto& v : get_list(s, k, {})) out.push_back(to_double(s, k, v));
        return out;
    }

    /// Keys present in the file that no getter has read; used to reject typos.
    std::vector<std::string> unused_keys() const {
        std::vector<std::string> out;
        for (const auto& [s, kv] : sections_) {
            if (used_sections_.count(s)) continue;
            for (const auto& [k, v] : kv)
                if (!used_.count({s, k})) out.push_back(s.empty() ? k : s + "." + k);
        }
        return out;
    }

    /// Canonical text form (sections and keys sorted). Parsing it yields an equal config.
    std::string dump() const {
        std::ostringstream out;
        bool first = true;
        for (const auto& [s, kv] : sections_) {
            if (!s.empty()) {
                if (!first) out << '\n';
                out << '[' << s << "]\n";
            }
            for (const auto& [k, v] : kv) out << k << " = " << v << '\n';
            first = false;
        }
        return out.str();
    }

    friend bool operator==(const Config& a, const Config& b) { return a.sections_ == b.sections_; }

private:
    static double to_double(const std::string& s, const std::string& k, const std::string& v) {
        auto d = detail::parse_double(v);
        require(d.has_value(), "[" + s + "] " + k + ": expected a number, got '" + v + "'");
        return *d;
    }
    static std::uint64_t to_size(const std::string& s, const std::string& k, const std::string& v) {
        std::uint64_t out = 0;
        auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
        require(ec == std::errc() && p == v.data() + v.size(),
                "[" + s + "] " + k + ": expected a non-negative integer, got '" + v + "'");
        return out;
    }
    void mark_section(const std::string& s) const { used_sections_.insert(s); }

    std::map<std::string, Section> sections_;
    mutable std::set<std::pair<std::string, std::string>> used_;
    mutable std::set<std::string> used_sections_;
};

// ---------------------------------------------------------------------------
// Schema files
//
//   [columns]        name = numeric | categorical | label | drop
//   [missing]        name = forbid | drop_column | drop_row
//   [label]          positive = <token>, negative = <token>
//   [defaults]       kind = <kind for unlisted header columns>, missing = <policy>

/// Builds the column schema for a CSV header from a schema config.
inline std::vector<ColumnSchema> resolve_schema(const Config& cfg, const std::vector<std::string>& header) {
    const auto& cols = cfg.section("columns");
    const auto& miss = cfg.section("missing");
    const std::string default_kind = cfg.get("defaults", "kind", "");
    const MissingPolicy default_missing = parse_missing_policy(cfg.get("defaults", "missing", "drop_row"));
    const std::string pos = cfg.get("label", "positive", "1");
    const std::string neg = cfg.get("label", "negative", "0");
    std::set<std::string> hs(header.begin(), header.end());
    for (const auto& [name, kind] : cols)
        require(hs.count(name), "schema column '" + name + "' not present in the data header");
    for (const auto& [name, pol] : miss) require(hs.count(name), "missing-policy column '" + name + "' not in header");
    std::vector<ColumnSchema> out;
    for (const auto& h : header) {
        ColumnSchema c;
        c.name = h;
        auto it = cols.find(h);
        if (it != cols.end()) {
            c.kind = parse_column_kind(it->second);
        } else {
            require(!default_kind.empty(), "header column '" + h + "' is not declared in the schema and no default kind is set");
            c.kind = parse_column_kind(default_kind);
        }
        auto mt = miss.find(h);
        c.missing = mt != miss.end() ? parse_missing_policy(mt->second) : default_missing;
        if (c.kind == ColumnKind::label) {
            c.positive_token = pos;
            c.negative_token = neg;
        }
        out.push_back(std::move(c));
    }
    validate_schema(out);
    return out;
}

/// Loads `data_path` using the schema file at `schema_path`.
inline Dataset load_with_schema(const std::string& data_path, const std::string& schema_path) {
    const Config cfg = Config::load(schema_path);
    return load_csv(data_path, resolve_schema(cfg, read_csv_header(data_path)));
}

}  // namespace fraudkit
