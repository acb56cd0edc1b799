#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "zql/plan.hpp"
#include "zql/relation.hpp"

namespace zql {

/// Reference query evaluator over plain 64-bit rows. Implements the same
/// operator semantics and output ordering contract as the circuit pipeline,
/// but shares no code with it: results from the two paths cross-check each
/// other.
namespace refeval {

using Row = std::vector<std::uint64_t>;

struct EvalTable {
    std::vector<std::string> names;
    std::vector<Row> rows;

    std::size_t col(const std::string& n) const {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == n) return i;
        fail(ErrorCode::UnknownColumn, "evaluator: no column " + n);
        return 0;
    }
};

inline bool cmp_holds(std::uint64_t a, CmpOp op, std::uint64_t lit) {
    switch (op) {
        case CmpOp::Lt: return a < lit;
        case CmpOp::Le: return a <= lit;
        case CmpOp::Eq: return a == lit;
        case CmpOp::Ge: return a >= lit;
        case CmpOp::Gt: return a > lit;
    }
    return false;
}

/// Stable sort by the named key columns; descending flips each key against
/// 2^64 - 1 so the comparison stays unsigned-lexicographic.
inline void sort_rows(EvalTable& t, const std::vector<std::size_t>& keys, bool asc) {
    std::stable_sort(t.rows.begin(), t.rows.end(), [&](const Row& a, const Row& b) {
        for (std::size_t k : keys) {
            std::uint64_t x = asc ? a[k] : UINT64_MAX - a[k];
            std::uint64_t y = asc ? b[k] : UINT64_MAX - b[k];
            if (x != y) return x < y;
        }
        return false;
    });
}

inline EvalTable scan_table(const PlanStep& s, const Schema& schema,
                            const std::map<std::string, Relation>& db) {
    const TableInfo& info = schema.table(s.table);
    auto it = db.find(s.table);
    if (it == db.end()) fail(ErrorCode::IoError, "evaluator: no data for table " + s.table);
    const Relation& rel = it->second;
    EvalTable t;
    std::vector<std::size_t> src;
    for (const auto& c : info.columns) {
        int idx = rel.attr_index(c.name);
        if (idx < 0)
            fail(ErrorCode::ShapeMismatch, "table " + s.table + " lacks column " + c.name);
        src.push_back(std::size_t(idx));
        t.names.push_back(s.table + "." + c.name);
    }
    for (std::size_t r = 0; r < rel.nrows(); ++r) {
        Row row;
        for (std::size_t c : src) row.push_back(rel.cols[c][r]);
        t.rows.push_back(std::move(row));
    }
    return t;
}

inline EvalTable join_tables(const EvalTable& l, const EvalTable& r, const PlanStep& s) {
    EvalTable o;
    o.names = l.names;
    o.names.insert(o.names.end(), r.names.begin(), r.names.end());
    std::size_t la = l.col(s.left_attr), ra = r.col(s.right_attr);
    for (const Row& a : l.rows) {
        for (const Row& b : r.rows) {
            if (a[la] != b[ra]) continue;
            Row row = a;
            row.insert(row.end(), b.begin(), b.end());
            o.rows.push_back(std::move(row));
        }
    }
    return o;
}

struct AggItem {
    AggFn fn = AggFn::Sum;
    std::size_t attr = 0; // unused for Count
    std::string out_name;
};

inline EvalTable group_table(const EvalTable& in, const std::vector<std::size_t>& gcols,
                             const std::vector<std::string>& gnames,
                             const std::vector<AggItem>& aggs) {
    // groups materialize in ascending lexicographic key order
    std::map<Row, std::vector<std::size_t>> groups;
    for (std::size_t r = 0; r < in.rows.size(); ++r) {
        Row key;
        for (std::size_t c : gcols) key.push_back(in.rows[r][c]);
        groups[key].push_back(r);
    }
    EvalTable o;
    o.names = gnames;
    for (const AggItem& a : aggs) o.names.push_back(a.out_name);
    for (const auto& [key, members] : groups) {
        Row row = key;
        for (const AggItem& a : aggs) {
            unsigned __int128 acc = 0;
            std::uint64_t mn = UINT64_MAX, mx = 0;
            for (std::size_t r : members) {
                std::uint64_t v = a.fn == AggFn::Count ? 1 : in.rows[r][a.attr];
                acc += v;
                mn = std::min(mn, v);
                mx = std::max(mx, v);
            }
            unsigned __int128 res = 0;
            switch (a.fn) {
                case AggFn::Sum: res = acc; break;
                case AggFn::Count: res = members.size(); break;
                case AggFn::Avg: res = acc / members.size(); break;
                case AggFn::Min: res = mn; break;
                case AggFn::Max: res = mx; break;
            }
            if (res >> 64) fail(ErrorCode::OutOfRange, "aggregate exceeds 64 bits");
            row.push_back(std::uint64_t(res));
        }
        o.rows.push_back(std::move(row));
    }
    return o;
}

/// Multiset intersection, output sorted ascending; marks which left/right
/// rows feed the intersection so union can reuse the leftover bookkeeping.
struct SetSplit {
    std::vector<Row> inter;       // sorted, with multiplicity
    std::vector<Row> right_rest;  // leftover right rows, original order
};

inline SetSplit split_sets(const EvalTable& l, const EvalTable& r) {
    std::map<Row, std::size_t> c1, c2;
    for (const Row& a : l.rows) c1[a]++;
    for (const Row& b : r.rows) c2[b]++;
    SetSplit sp;
    std::map<Row, std::size_t> remaining2;
    for (const auto& [k, n1] : c1) {
        auto it = c2.find(k);
        if (it == c2.end()) continue;
        std::size_t mn = std::min(n1, it->second);
        for (std::size_t t = 0; t < mn; ++t) sp.inter.push_back(k);
        remaining2[k] = mn;
    }
    std::sort(sp.inter.begin(), sp.inter.end());
    for (const Row& b : r.rows) {
        auto it = remaining2.find(b);
        if (it != remaining2.end() && it->second > 0)
            --it->second;
        else
            sp.right_rest.push_back(b);
    }
    return sp;
}

} // namespace refeval

/// Evaluates a query plan directly over the database relations. The result
/// row order matches the circuit pipeline's public output ordering.
inline Relation evaluate_reference(const QueryPlan& plan, const Schema& schema,
                                   const std::map<std::string, Relation>& db) {
    using namespace refeval;
    std::vector<EvalTable> stack;
    auto pop = [&] {
        if (stack.empty()) fail(ErrorCode::InternalInconsistency, "evaluator: empty plan stack");
        EvalTable t = std::move(stack.back());
        stack.pop_back();
        return t;
    };

    bool explicit_sort = false;
    const auto& steps = plan.steps;
    for (std::size_t si = 0; si < steps.size(); ++si) {
        const PlanStep& s = steps[si];
        switch (s.kind) {
            case PlanStep::Kind::Scan: stack.push_back(scan_table(s, schema, db)); break;
            case PlanStep::Kind::Filter: {
                EvalTable t = pop();
                std::size_t c = t.col(s.attr);
                std::vector<Row> kept;
                for (Row& row : t.rows)
                    if (cmp_holds(row[c], s.op, s.literal)) kept.push_back(std::move(row));
                t.rows = std::move(kept);
                stack.push_back(std::move(t));
                break;
            }
            case PlanStep::Kind::Join: {
                EvalTable r = pop(), l = pop();
                stack.push_back(join_tables(l, r, s));
                break;
            }
            case PlanStep::Kind::GroupBy: {
                EvalTable t = pop();
                std::vector<std::size_t> gcols;
                std::vector<std::string> gnames;
                for (const std::string& g : s.attrs) {
                    gcols.push_back(t.col(g));
                    gnames.push_back(g);
                }
                std::vector<AggItem> aggs;
                while (si + 1 < steps.size() &&
                       steps[si + 1].kind == PlanStep::Kind::Aggregate) {
                    const PlanStep& a = steps[++si];
                    AggItem it;
                    it.fn = a.fn;
                    if (!a.attr.empty()) it.attr = t.col(a.attr);
                    it.out_name = agg_fn_name(a.fn) + "(" + a.attr + ")";
                    aggs.push_back(it);
                }
                stack.push_back(group_table(t, gcols, gnames, aggs));
                break;
            }
            case PlanStep::Kind::Aggregate:
                fail(ErrorCode::InternalInconsistency, "aggregate without group step");
                break;
            case PlanStep::Kind::Project: {
                EvalTable t = pop();
                EvalTable o;
                o.names = s.columns;
                std::vector<std::size_t> src;
                for (const std::string& c : s.columns) src.push_back(t.col(c));
                for (const Row& row : t.rows) {
                    Row r2;
                    for (std::size_t c : src) r2.push_back(row[c]);
                    o.rows.push_back(std::move(r2));
                }
                stack.push_back(std::move(o));
                break;
            }
            case PlanStep::Kind::Sort: {
                EvalTable t = pop();
                std::vector<std::size_t> keys;
                for (const std::string& k : s.attrs) keys.push_back(t.col(k));
                sort_rows(t, keys, s.ascending);
                stack.push_back(std::move(t));
                explicit_sort = true;
                break;
            }
            case PlanStep::Kind::SetOp: {
                EvalTable r = pop(), l = pop();
                if (l.names.size() != r.names.size())
                    fail(ErrorCode::ShapeMismatch, "set operands have different arity");
                SetSplit sp = split_sets(l, r);
                EvalTable o;
                o.names = l.names;
                if (s.set_kind == "intersect") {
                    o.rows = std::move(sp.inter);
                } else {
                    o.rows = l.rows;
                    for (Row& b : sp.right_rest) o.rows.push_back(std::move(b));
                }
                stack.push_back(std::move(o));
                break;
            }
        }
    }
    if (stack.size() != 1)
        fail(ErrorCode::InternalInconsistency, "evaluator: plan left " +
                                                   std::to_string(stack.size()) + " tables");
    EvalTable t = std::move(stack.back());

    // canonical output order: leading columns ascending, unless the query
    // already fixed the order itself
    if (!explicit_sort) {
        std::vector<std::size_t> keys;
        for (std::size_t i = 0; i < std::min<std::size_t>(3, t.names.size()); ++i)
            keys.push_back(i);
        sort_rows(t, keys, true);
    }

    Relation out;
    out.attrs = t.names;
    out.cols.assign(t.names.size(), {});
    for (const Row& row : t.rows) out.push_row(row);
    return out;
}

} // namespace zql
