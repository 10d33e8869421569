#pragma once

// Plain comma-separated input and output for datasets. Quoting is limited to
// stripping surrounding double quotes from a field.

#include "stochmed/dataset.hpp"
#include "stochmed/error.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace stochmed {

// Which input columns play which role. An empty covariate list means every
// column not mapped to another role.
struct ColumnMapping {
    std::string a = "A";
    std::string z = "Z";
    std::string m = "M";
    std::string y = "Y";
    std::vector<std::string> w;
    std::optional<std::string> selection;
};

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::optional<std::size_t> column(const std::string& name) const {
        for (std::size_t j = 0; j < header.size(); ++j)
            if (header[j] == name) return j;
        return std::nullopt;
    }
};

namespace detail {

inline std::string trim_field(std::string s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    s = s.substr(first, last - first + 1);
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
    return s;
}

inline std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(trim_field(field));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline bool is_missing(const std::string& s) { return s.empty() || s == "NA" || s == "NaN" || s == "nan" || s == "."; }

inline std::optional<double> parse_number(const std::string& s) {
    double v = 0.0;
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || ptr != end || !std::isfinite(v)) return std::nullopt;
    return v;
}

}  // namespace detail

inline CsvTable read_csv(std::istream& in) {
    CsvTable t;
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("input has no header row");
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    t.header = detail::split_line(line);
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (detail::trim_field(line).empty()) continue;
        auto fields = detail::split_line(line);
        if (fields.size() != t.header.size())
            throw ConfigError("row " + std::to_string(row) + ": expected " + std::to_string(t.header.size()) +
                              " fields, found " + std::to_string(fields.size()));
        t.rows.push_back(std::move(fields));
    }
    return t;
}

/// Builds a Dataset from a table. Rows are numbered from 1 after the header
/// in error messages. When a selection column is mapped, rows with a zero
/// indicator are dropped before any other check, so masked rows may carry
/// missing values. A non-binary Y is rescaled to [0,1] and a notice is added.
inline Dataset dataset_from_table(const CsvTable& table, const ColumnMapping& map,
                                  std::vector<std::string>* notices = nullptr) {
    auto require = [&](const std::string& name) {
        auto j = table.column(name);
        if (!j) throw ConfigError("column '" + name + "' not found in input");
        return *j;
    };
    const std::size_t ja = require(map.a), jz = require(map.z), jm = require(map.m), jy = require(map.y);
    std::optional<std::size_t> jsel;
    if (map.selection) jsel = require(*map.selection);

    std::vector<std::string> w_names = map.w;
    if (w_names.empty()) {
        for (const auto& h : table.header) {
            if (h == map.a || h == map.z || h == map.m || h == map.y || (map.selection && h == *map.selection))
                continue;
            w_names.push_back(h);
        }
    }
    std::vector<std::size_t> jw;
    for (const auto& name : w_names) {
        const auto j = require(name);
        if (j == ja || j == jz || j == jm || j == jy || (jsel && j == *jsel))
            throw ConfigError("column '" + name + "' cannot be both a covariate and another role");
        jw.push_back(j);
    }

    std::vector<std::size_t> keep;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        if (!jsel) {
            keep.push_back(r);
            continue;
        }
        const auto& s = table.rows[r][*jsel];
        const auto v = detail::is_missing(s) ? std::nullopt : detail::parse_number(s);
        if (!v) throw ConfigError("row " + std::to_string(r + 1) + ": missing or non-numeric " + *map.selection);
        if (*v != 0.0 && *v != 1.0) throw ConfigError("row " + std::to_string(r + 1) + ": " + *map.selection + " not in {0,1}");
        if (*v == 1.0) keep.push_back(r);
    }
    if (keep.empty()) throw ConfigError("no rows to analyze");

    const auto n = static_cast<Eigen::Index>(keep.size());
    Dataset d;
    d.a.resize(n);
    d.z.resize(n);
    d.m.resize(n);
    d.y.resize(n);
    d.w.resize(n, static_cast<Eigen::Index>(jw.size()));
    d.w_names = w_names;

    auto value = [&](std::size_t r, std::size_t j, const std::string& name) {
        const auto& s = table.rows[r][j];
        const std::string where = "row " + std::to_string(r + 1) + ": ";
        if (detail::is_missing(s)) throw ConfigError(where + "missing value in " + name);
        const auto v = detail::parse_number(s);
        if (!v) throw ConfigError(where + name + " is not numeric");
        return *v;
    };
    auto binary = [&](std::size_t r, std::size_t j, const std::string& name) {
        const double v = value(r, j, name);
        if (v != 0.0 && v != 1.0) throw ConfigError("row " + std::to_string(r + 1) + ": " + name + " not in {0,1}");
        return v;
    };
    for (Eigen::Index i = 0; i < n; ++i) {
        const std::size_t r = keep[static_cast<std::size_t>(i)];
        d.a[i] = binary(r, ja, map.a);
        d.z[i] = binary(r, jz, map.z);
        d.m[i] = binary(r, jm, map.m);
        d.y[i] = value(r, jy, map.y);
        for (std::size_t k = 0; k < jw.size(); ++k) d.w(i, static_cast<Eigen::Index>(k)) = value(r, jw[k], w_names[k]);
    }
    d.outcome_scale = bound_outcome(d.y);
    if (d.outcome_scale.active && notices) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "continuous outcome %s rescaled from [%.6g, %.6g] to [0,1]", map.y.c_str(),
                      d.outcome_scale.lower, d.outcome_scale.upper);
        notices->emplace_back(buf);
    }
    return d;
}

inline Dataset ingest_csv(const std::string& path, const ColumnMapping& map,
                          std::vector<std::string>* notices = nullptr) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open input '" + path + "'");
    return dataset_from_table(read_csv(in), map, notices);
}

inline std::string format_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Header W..., A, Z, M, Y; Y is written on its original scale.
inline void write_dataset_csv(const Dataset& d, std::ostream& out) {
    for (const auto& name : d.w_names) out << name << ',';
    out << "A,Z,M,Y\n";
    for (Eigen::Index i = 0; i < d.size(); ++i) {
        for (Eigen::Index j = 0; j < d.w.cols(); ++j) out << format_number(d.w(i, j)) << ',';
        out << d.a[i] << ',' << d.z[i] << ',' << d.m[i] << ',' << format_number(d.outcome_scale.to_original(d.y[i]))
            << '\n';
    }
}

}  // namespace stochmed
