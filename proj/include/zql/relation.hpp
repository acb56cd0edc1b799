#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "zql/errors.hpp"

namespace zql {

/// Plain data-layer relation: named 64-bit integer columns of equal length.
struct Relation {
    std::string name;
    std::vector<std::string> attrs;
    std::vector<std::vector<std::uint64_t>> cols; // [attr][row]

    std::size_t ncols() const { return cols.size(); }
    std::size_t nrows() const { return cols.empty() ? 0 : cols[0].size(); }

    int attr_index(const std::string& a) const {
        for (std::size_t i = 0; i < attrs.size(); ++i)
            if (attrs[i] == a) return int(i);
        return -1;
    }

    std::vector<std::uint64_t> row(std::size_t r) const {
        std::vector<std::uint64_t> out;
        out.reserve(cols.size());
        for (const auto& c : cols) out.push_back(c[r]);
        return out;
    }

    void push_row(const std::vector<std::uint64_t>& vals) {
        if (vals.size() != cols.size()) fail(ErrorCode::ShapeMismatch, "row arity mismatch");
        for (std::size_t i = 0; i < vals.size(); ++i) cols[i].push_back(vals[i]);
    }
};

/// Parses one CSV cell as a non-negative number, scaling decimals by
/// 10^scale and requiring the result to fit in 64 bits.
inline std::uint64_t parse_scaled_cell(const std::string& cell, int scale,
                                       const std::string& context) {
    std::string intpart, fracpart;
    bool dot = false;
    for (char ch : cell) {
        if (ch == '.') {
            if (dot) fail(ErrorCode::ParseError, context + ": bad number '" + cell + "'");
            dot = true;
        } else if (ch >= '0' && ch <= '9') {
            (dot ? fracpart : intpart) += ch;
        } else if (ch == ' ' || ch == '\r') {
            continue;
        } else {
            fail(ErrorCode::ParseError, context + ": bad number '" + cell + "'");
        }
    }
    if (intpart.empty() && fracpart.empty())
        fail(ErrorCode::ParseError, context + ": empty cell");
    if (int(fracpart.size()) > scale)
        fail(ErrorCode::ParseError, context + ": '" + cell + "' exceeds declared scale");
    fracpart.resize(std::size_t(scale), '0');
    std::string digits = intpart + fracpart;
    std::uint64_t v = 0;
    for (char ch : digits) {
        std::uint64_t d = std::uint64_t(ch - '0');
        if (v > (UINT64_MAX - d) / 10)
            fail(ErrorCode::OutOfRange, context + ": '" + cell + "' does not fit in 64 bits");
        v = v * 10 + d;
    }
    return v;
}

/// Loads a CSV file (header row = attribute names) with per-column decimal
/// scale factors (powers of ten; empty vector means all zero).
inline Relation load_csv(const std::string& path, const std::string& table_name,
                         const std::vector<int>& scales = {}) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::IoError, "cannot open " + path);
    Relation rel;
    rel.name = table_name;
    std::string line;
    if (!std::getline(in, line)) fail(ErrorCode::ParseError, path + ": missing header");
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
            while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
            rel.attrs.push_back(cell);
        }
    }
    rel.cols.assign(rel.attrs.size(), {});
    if (!scales.empty() && scales.size() != rel.attrs.size())
        fail(ErrorCode::ShapeMismatch, path + ": scale count != column count");
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        std::stringstream ss(line);
        std::string cell;
        std::size_t col = 0;
        while (std::getline(ss, cell, ',')) {
            if (col >= rel.attrs.size())
                fail(ErrorCode::ParseError, path + ":" + std::to_string(lineno) + ": too many cells");
            int scale = scales.empty() ? 0 : scales[col];
            rel.cols[col].push_back(
                parse_scaled_cell(cell, scale, path + ":" + std::to_string(lineno)));
            ++col;
        }
        if (col != rel.attrs.size())
            fail(ErrorCode::ParseError, path + ":" + std::to_string(lineno) + ": too few cells");
    }
    return rel;
}

/// Witness-side padded table: a relation stretched to its circuit budget
/// with a validity flag per row. Invalid rows hold zeros.
struct TableData {
    std::vector<std::vector<std::uint64_t>> cols; // [attr][row], length = budget
    std::vector<std::uint8_t> valid;              // length = budget

    std::size_t budget() const { return valid.size(); }
    std::size_t live() const {
        std::size_t n = 0;
        for (auto v : valid) n += v;
        return n;
    }

    std::vector<std::uint64_t> row_of(std::size_t r) const {
        std::vector<std::uint64_t> out;
        out.reserve(cols.size());
        for (const auto& c : cols) out.push_back(c[r]);
        return out;
    }

    static TableData from_relation(const Relation& rel, std::size_t budget) {
        if (rel.nrows() > budget)
            fail(ErrorCode::BudgetExceeded, rel.name + ": " + std::to_string(rel.nrows()) +
                                                " rows exceed budget " + std::to_string(budget));
        TableData d;
        d.valid.assign(budget, 0);
        d.cols.assign(rel.ncols(), std::vector<std::uint64_t>(budget, 0));
        for (std::size_t c = 0; c < rel.ncols(); ++c)
            for (std::size_t r = 0; r < rel.nrows(); ++r) d.cols[c][r] = rel.cols[c][r];
        for (std::size_t r = 0; r < rel.nrows(); ++r) d.valid[r] = 1;
        return d;
    }

    /// Valid rows only, in order, as a Relation (attrs unnamed by default).
    Relation to_relation(const std::vector<std::string>& names = {}) const {
        Relation rel;
        rel.attrs = names.empty() ? std::vector<std::string>(cols.size(), "") : names;
        rel.cols.assign(cols.size(), {});
        for (std::size_t r = 0; r < budget(); ++r) {
            if (!valid[r]) continue;
            for (std::size_t c = 0; c < cols.size(); ++c) rel.cols[c].push_back(cols[c][r]);
        }
        return rel;
    }
};

} // namespace zql
