#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "zql/gadgets.hpp"
#include "zql/plan.hpp"
#include "zql/relation.hpp"

namespace zql {

/// Circuit-side handle of a padded table: one advice column per attribute
/// plus a {0,1} validity column, occupying rows [0, budget).
struct TableCols {
    std::vector<ColumnId> attrs;
    ColumnId valid{};
    std::size_t budget = 0;
};

// ---------------------------------------------------------------------------
// Composite sort keys: invalid rows get a most-significant marker so dummies
// order after every real row; attributes pack 64 bits each, first attribute
// most significant. Descending order negates attributes against 2^64 - 1.
// ---------------------------------------------------------------------------

inline ExprPtr composite_key_expr(const TableCols& t, const std::vector<std::size_t>& keys,
                                  bool asc, int rot = 0) {
    const std::size_t m = keys.size();
    ExprPtr k = (ec(1) - cell(t.valid, rot)) * ec(fe_pow2(unsigned(64 * m)));
    for (std::size_t j = 0; j < m; ++j) {
        ExprPtr a = cell(t.attrs[keys[j]], rot);
        if (!asc) a = ec(Fe(UINT64_MAX)) - a;
        k = k + a * ec(fe_pow2(unsigned(64 * (m - 1 - j))));
    }
    return k;
}

inline Fe composite_key_value(const TableData& d, std::size_t row,
                              const std::vector<std::size_t>& keys, bool asc) {
    const std::size_t m = keys.size();
    Fe k = d.valid[row] ? Fe::zero() : fe_pow2(unsigned(64 * m));
    for (std::size_t j = 0; j < m; ++j) {
        std::uint64_t v = d.cols[keys[j]][row];
        if (!asc) v = UINT64_MAX - v;
        k += Fe(v) * fe_pow2(unsigned(64 * (m - 1 - j)));
    }
    return k;
}

/// Lexicographic witness-side ordering tuple: (invalid, key attrs..., row).
inline std::vector<std::uint64_t> order_tuple(const TableData& d, std::size_t row,
                                              const std::vector<std::size_t>& keys, bool asc) {
    std::vector<std::uint64_t> t;
    t.reserve(keys.size() + 2);
    t.push_back(d.valid[row] ? 0 : 1);
    for (std::size_t k : keys) {
        std::uint64_t v = d.cols[k][row];
        t.push_back(asc ? v : UINT64_MAX - v);
    }
    t.push_back(row); // stable tie-break
    return t;
}

inline void set_col(const ConstraintSystem& cs, Assignment& asg, ColumnId col,
                    const std::vector<Fe>& vals, PinList* pins, std::size_t from = 0) {
    for (std::size_t r = 0; r < vals.size(); ++r) {
        asg.set(cs, col, from + r, vals[r]);
        pin(pins, col, from + r);
    }
}

inline std::vector<Fe> fe_vec(const std::vector<std::uint64_t>& v) {
    std::vector<Fe> out;
    out.reserve(v.size());
    for (auto x : v) out.push_back(Fe(x));
    return out;
}

inline std::vector<Fe> fe_vec(const std::vector<std::uint8_t>& v) {
    std::vector<Fe> out;
    out.reserve(v.size());
    for (auto x : v) out.push_back(Fe(std::uint64_t(x)));
    return out;
}

// ---------------------------------------------------------------------------
// Scan: advice columns loaded from the committed database. Validity is a
// prefix of ones and dummy rows are all-zero.
// ---------------------------------------------------------------------------

struct ScanGate {
    std::string name;
    TableCols out;

    TableData fill(const ConstraintSystem& cs, Assignment& asg, const TableData& d,
                   PinList* pins = nullptr) const {
        const std::size_t n = out.budget;
        if (d.budget() != n || d.cols.size() != out.attrs.size())
            fail(ErrorCode::ShapeMismatch, name + ": data does not match scan shape");
        std::size_t live = d.live();
        for (std::size_t r = 0; r < live; ++r)
            if (!d.valid[r]) fail(ErrorCode::InternalInconsistency, name + ": validity not a prefix");
        for (std::size_t j = 0; j < out.attrs.size(); ++j) {
            for (std::size_t r = 0; r < n; ++r) {
                asg.set(cs, out.attrs[j], r, Fe(d.cols[j][r]));
                // dummy attribute cells are pinned by the zeroing gate; valid
                // rows are pinned by downstream consumers
                if (r >= live) pin(pins, out.attrs[j], r);
            }
        }
        for (std::size_t r = 0; r < n; ++r) {
            asg.set(cs, out.valid, r, d.valid[r] ? Fe::one() : Fe::zero());
            bool boundary = (live > 0 && r == live - 1) || r == live;
            if (!boundary) pin(pins, out.valid, r);
        }
        return d;
    }
};

inline ScanGate build_scan(CircuitBuilder& b, std::size_t n_attrs, std::size_t budget,
                           const std::string& name) {
    ScanGate s;
    s.name = name;
    s.out.budget = budget;
    b.note_region(budget);
    for (std::size_t j = 0; j < n_attrs; ++j)
        s.out.attrs.push_back(b.advice(name + ".a" + std::to_string(j)));
    s.out.valid = b.advice(name + ".valid");
    add_prefix_flag_gates(b, s.out.valid, budget, name + ".valid");
    ColumnId sel = b.selector(name + ".sel", 0, budget);
    std::vector<ExprPtr> zeroes;
    for (ColumnId a : s.out.attrs) zeroes.push_back((ec(1) - cell(s.out.valid)) * cell(a));
    b.cs.add_gate({name + ".dummy_zero", sel, zeroes});
    return s;
}

// ---------------------------------------------------------------------------
// Filter: per-row comparison bit against a literal held in a Fixed column;
// surviving rows keep validity, others become dummy (in place, no compaction).
// ---------------------------------------------------------------------------

struct FilterGate {
    std::string name;
    TableCols in, out;
    std::size_t attr = 0;
    CmpOp op = CmpOp::Eq;
    std::uint64_t literal = 0;

    bool eq = false, neg = false, swapped = false;
    IsZero iz;
    LessThan lt;
    ColumnId lit_col{};

    TableData fill_phase1(const ConstraintSystem& cs, Assignment& asg, const TableData& d,
                          PinList* pins = nullptr) const {
        const std::size_t n = in.budget;
        std::vector<std::uint8_t> keep(n, 0);
        if (eq) {
            std::vector<Fe> diffs;
            for (std::size_t r = 0; r < n; ++r) {
                diffs.push_back(Fe(d.cols[attr][r]) - Fe(literal));
                keep[r] = d.cols[attr][r] == literal;
            }
            iz.fill(cs, asg, diffs, pins);
        } else {
            std::vector<std::uint64_t> xs(n), ts(n);
            for (std::size_t r = 0; r < n; ++r) {
                std::uint64_t a = d.cols[attr][r];
                xs[r] = swapped ? literal : a;
                ts[r] = swapped ? a : literal;
                bool raw = xs[r] < ts[r];
                keep[r] = neg ? !raw : raw;
            }
            lt.fill(cs, asg, xs, ts, pins);
        }
        TableData o = d;
        for (std::size_t r = 0; r < n; ++r) {
            o.valid[r] = d.valid[r] && keep[r];
            for (std::size_t j = 0; j < o.cols.size(); ++j)
                if (!o.valid[r]) o.cols[j][r] = 0;
            asg.set(cs, out.valid, r, o.valid[r] ? Fe::one() : Fe::zero());
            pin(pins, out.valid, r);
            for (std::size_t j = 0; j < o.cols.size(); ++j) {
                asg.set(cs, out.attrs[j], r, Fe(o.cols[j][r]));
                pin(pins, out.attrs[j], r);
            }
            // the comparison gadget's linkage gate pins the filtered attribute
            pin(pins, in.attrs[attr], r);
        }
        return o;
    }
};

inline FilterGate build_filter(CircuitBuilder& b, const TableCols& in, std::size_t attr, CmpOp op,
                               std::uint64_t literal, const std::string& name) {
    FilterGate f;
    f.name = name;
    f.in = in;
    f.attr = attr;
    f.op = op;
    f.literal = literal;
    const std::size_t n = in.budget;
    f.lit_col = b.fixed(name + ".lit", std::vector<Fe>(n, Fe(literal)));

    ExprPtr b_expr;
    switch (op) {
        case CmpOp::Eq:
            f.eq = true;
            f.iz = build_is_zero(b, cell(in.attrs[attr]), cell(f.lit_col), 0, n, name + ".cmp");
            b_expr = cell(f.iz.b);
            break;
        case CmpOp::Lt:
        case CmpOp::Ge:
            f.lt = build_less_than(b, cell(in.attrs[attr]), cell(f.lit_col), n, 64, name + ".cmp");
            f.neg = op == CmpOp::Ge;
            b_expr = f.neg ? ec(1) - cell(f.lt.check) : cell(f.lt.check);
            break;
        case CmpOp::Gt:
        case CmpOp::Le:
            f.swapped = true;
            f.lt = build_less_than(b, cell(f.lit_col), cell(in.attrs[attr]), n, 64, name + ".cmp");
            f.neg = op == CmpOp::Le;
            b_expr = f.neg ? ec(1) - cell(f.lt.check) : cell(f.lt.check);
            break;
    }

    f.out.budget = n;
    f.out.valid = b.advice(name + ".valid");
    ColumnId sel = b.selector(name + ".sel", 0, n);
    b.cs.add_gate({name + ".keep", sel, {cell(f.out.valid) - b_expr * cell(in.valid)}});
    std::vector<ExprPtr> attr_gates;
    for (std::size_t j = 0; j < in.attrs.size(); ++j) {
        ColumnId oc = b.advice(name + ".a" + std::to_string(j));
        f.out.attrs.push_back(oc);
        attr_gates.push_back(cell(oc) - cell(f.out.valid) * cell(in.attrs[j]));
    }
    b.cs.add_gate({name + ".mask", sel, attr_gates});
    return f;
}

// ---------------------------------------------------------------------------
// Sort: grand-product row-permutation plus adjacency bound on composite keys.
// ---------------------------------------------------------------------------

struct SortGate {
    std::string name;
    TableCols in, out;
    std::vector<std::size_t> keys;
    bool asc = true;
    GrandProduct gp;
    ColumnId kdiff{};
    LimbDecomposition dec;
    bool has_adj = false;

    /// Stable sort order of the input rows (dummies last).
    std::vector<std::size_t> sorted_order(const TableData& d) const {
        std::vector<std::size_t> idx(d.budget());
        std::iota(idx.begin(), idx.end(), 0);
        std::vector<std::vector<std::uint64_t>> tup;
        tup.reserve(idx.size());
        for (std::size_t r = 0; r < idx.size(); ++r) tup.push_back(order_tuple(d, r, keys, asc));
        std::sort(idx.begin(), idx.end(),
                  [&](std::size_t a2, std::size_t b2) { return tup[a2] < tup[b2]; });
        return idx;
    }

    TableData fill_phase1(const ConstraintSystem& cs, Assignment& asg, const TableData& d,
                          PinList* pins = nullptr) const {
        const std::size_t n = in.budget;
        if (d.budget() != n) fail(ErrorCode::ShapeMismatch, name + ": budget mismatch");
        std::vector<std::size_t> idx = sorted_order(d);
        TableData o;
        o.valid.resize(n);
        o.cols.assign(d.cols.size(), std::vector<std::uint64_t>(n, 0));
        for (std::size_t r = 0; r < n; ++r) {
            o.valid[r] = d.valid[idx[r]];
            for (std::size_t j = 0; j < d.cols.size(); ++j) o.cols[j][r] = d.cols[j][idx[r]];
        }
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t j = 0; j < d.cols.size(); ++j) {
                asg.set(cs, out.attrs[j], r, Fe(o.cols[j][r]));
                pin(pins, out.attrs[j], r);
                pin(pins, in.attrs[j], r); // bound by the permutation fingerprint
            }
            asg.set(cs, out.valid, r, o.valid[r] ? Fe::one() : Fe::zero());
            pin(pins, out.valid, r);
            pin(pins, in.valid, r);
        }
        if (has_adj) {
            std::vector<Fe> diffs;
            for (std::size_t r = 0; r + 1 < n; ++r)
                diffs.push_back(composite_key_value(o, r + 1, keys, asc) -
                                composite_key_value(o, r, keys, asc));
            set_col(cs, asg, kdiff, diffs, pins);
            dec.fill(cs, asg, pins);
        }
        return o;
    }

    void fill_phase2(const ConstraintSystem& cs, Assignment& asg, PinList* pins = nullptr) const {
        gp.fill(cs, asg, pins);
    }
};

inline SortGate build_sort_gate(CircuitBuilder& b, const TableCols& in,
                                const std::vector<std::size_t>& keys, bool asc,
                                const std::string& name) {
    SortGate s;
    s.name = name;
    s.in = in;
    s.keys = keys;
    s.asc = asc;
    const std::size_t n = in.budget;
    s.out.budget = n;
    for (std::size_t j = 0; j < in.attrs.size(); ++j)
        s.out.attrs.push_back(b.advice(name + ".a" + std::to_string(j)));
    s.out.valid = b.advice(name + ".valid");

    std::vector<ExprPtr> lhs_parts, rhs_parts;
    for (std::size_t j = 0; j < in.attrs.size(); ++j) {
        lhs_parts.push_back(cell(in.attrs[j]));
        rhs_parts.push_back(cell(s.out.attrs[j]));
    }
    lhs_parts.push_back(cell(in.valid));
    rhs_parts.push_back(cell(s.out.valid));
    s.gp = build_grand_product(b, row_fingerprint(lhs_parts, b.gamma) + chal(b.alpha),
                               row_fingerprint(rhs_parts, b.gamma) + chal(b.alpha), n,
                               name + ".perm");
    b.expect(name + ".permutation", false, name + ".perm.step", n);

    if (n >= 2) {
        s.has_adj = true;
        s.kdiff = b.advice(name + ".kdiff");
        ColumnId sel = b.selector(name + ".adj_sel", 0, n - 1);
        b.cs.add_gate({name + ".adj",
                       sel,
                       {cell(s.kdiff) - (composite_key_expr(s.out, keys, asc, 1) -
                                         composite_key_expr(s.out, keys, asc, 0))}});
        s.dec = build_limb_range_check(b, s.kdiff, n - 1, int(8 * keys.size() + 1),
                                       name + ".kdrange");
        b.expect(name + ".adjacency", false, name + ".adj", n - 1);
    }
    return s;
}

// ---------------------------------------------------------------------------
// Group-by with fused aggregates: sort by group key, boundary flags from one
// is-zero per row on a packed group key, running accumulators per aggregate,
// outputs exposed on group-end rows.
// ---------------------------------------------------------------------------

struct AggSpec {
    AggFn fn = AggFn::Sum;
    std::size_t attr = 0; // ignored for Count
};

struct GroupByGate {
    struct AggMachinery {
        AggSpec spec;
        ColumnId out_col{};
        ColumnId m{}; // accumulator / carrier column (count column for Count)
        RunningAccumulator ra;
        bool has_ra = false;
        ColumnId xt{}; // sentinel-masked value (Min/Max)
        LessThan lt;
        bool has_lt = false;
        ColumnId q{}, r{}; // Avg quotient/remainder
        LimbDecomposition qdec;
        MaskedRange rlow, rhigh;
    };

    std::string name;
    TableCols in, out;
    std::vector<std::size_t> group_attrs;
    std::vector<AggSpec> aggs;
    SortGate sort;
    ColumnId gkey{}, ofs{}, ov{};
    IsZero iz;
    RunningAccumulator count_ra;
    bool has_count = false;
    std::vector<AggMachinery> machs;
    std::vector<ColumnId> gout;

    TableData fill_phase1(const ConstraintSystem& cs, Assignment& asg, const TableData& d,
                          PinList* pins = nullptr) const {
        const std::size_t n = in.budget;
        TableData sd = sort.fill_phase1(cs, asg, d, pins);

        std::vector<Fe> gkeys;
        for (std::size_t r = 0; r < n; ++r)
            gkeys.push_back(composite_key_value(sd, r, group_attrs, true));
        set_col(cs, asg, gkey, gkeys, pins);

        Fe off = fe_pow2(unsigned(64 * group_attrs.size() + 2));
        std::vector<Fe> diffs;
        std::vector<bool> starts(n);
        for (std::size_t r = 0; r < n; ++r) {
            // row 0 wraps to the zeroed padding row, not to row n-1
            Fe dd = r == 0 ? gkeys[0] + off : gkeys[r] - gkeys[r - 1];
            diffs.push_back(dd);
            starts[r] = !dd.is_zero();
        }
        iz.fill(cs, asg, diffs, pins);

        std::vector<std::uint8_t> ovv(n);
        for (std::size_t r = 0; r < n; ++r)
            ovv[r] = (r + 1 == n || starts[r + 1]) && sd.valid[r];
        set_col(cs, asg, ov, fe_vec(ovv), pins);

        std::vector<std::uint64_t> counts(n, 0);
        if (has_count) {
            std::vector<Fe> vals;
            for (std::size_t r = 0; r < n; ++r) {
                std::uint64_t prev = (r == 0 || starts[r]) ? 0 : counts[r - 1];
                counts[r] = prev + sd.valid[r];
                vals.push_back(Fe(std::uint64_t(sd.valid[r])));
            }
            count_ra.fill(cs, asg, vals, starts, pins);
        }

        TableData o;
        o.valid = ovv;
        o.cols.assign(out.attrs.size(), std::vector<std::uint64_t>(n, 0));

        for (std::size_t gi = 0; gi < group_attrs.size(); ++gi) {
            std::vector<Fe> vals(n);
            for (std::size_t r = 0; r < n; ++r) {
                std::uint64_t v = ovv[r] ? sd.cols[group_attrs[gi]][r] : 0;
                o.cols[gi][r] = v;
                vals[r] = Fe(v);
            }
            set_col(cs, asg, gout[gi], vals, pins);
        }

        for (std::size_t ai = 0; ai < machs.size(); ++ai) {
            const AggMachinery& mm = machs[ai];
            std::vector<unsigned __int128> acc(n, 0);
            switch (mm.spec.fn) {
                case AggFn::Sum:
                case AggFn::Avg: {
                    std::vector<Fe> vals;
                    for (std::size_t r = 0; r < n; ++r) {
                        unsigned __int128 x =
                            sd.valid[r] ? (unsigned __int128)sd.cols[mm.spec.attr][r] : 0;
                        acc[r] = ((r == 0 || starts[r]) ? 0 : acc[r - 1]) + x;
                        vals.push_back(Fe(std::uint64_t(sd.valid[r])) * Fe(sd.cols[mm.spec.attr][r]));
                    }
                    mm.ra.fill(cs, asg, vals, starts, pins);
                    break;
                }
                case AggFn::Count:
                    for (std::size_t r = 0; r < n; ++r) acc[r] = counts[r];
                    break;
                case AggFn::Min:
                case AggFn::Max: {
                    const bool is_min = mm.spec.fn == AggFn::Min;
                    const std::uint64_t sentinel = is_min ? UINT64_MAX : 0;
                    std::vector<std::uint64_t> xtv(n), mv(n);
                    for (std::size_t r = 0; r < n; ++r) {
                        xtv[r] = sd.valid[r] ? sd.cols[mm.spec.attr][r] : sentinel;
                        if (r == 0 || starts[r])
                            mv[r] = xtv[r];
                        else
                            mv[r] = is_min ? std::min(mv[r - 1], xtv[r]) : std::max(mv[r - 1], xtv[r]);
                        acc[r] = mv[r];
                    }
                    set_col(cs, asg, mm.xt, fe_vec(xtv), pins);
                    set_col(cs, asg, mm.m, fe_vec(mv), pins);
                    std::vector<std::uint64_t> xs(n), ts(n);
                    for (std::size_t r = 0; r < n; ++r) {
                        // row 0 wraps to the zeroed padding row
                        std::uint64_t prev = r == 0 ? 0 : mv[r - 1];
                        xs[r] = is_min ? xtv[r] : prev;
                        ts[r] = is_min ? prev : xtv[r];
                    }
                    mm.lt.fill(cs, asg, xs, ts, pins);
                    break;
                }
            }

            std::vector<Fe> outvals(n, Fe::zero());
            if (mm.spec.fn == AggFn::Avg) {
                std::vector<Fe> qv(n, Fe::zero()), rv(n, Fe::zero());
                std::vector<Fe> wlo(n, Fe::zero()), whi(n, Fe::zero());
                for (std::size_t r = 0; r < n; ++r) {
                    if (!ovv[r]) continue;
                    if (counts[r] == 0)
                        fail(ErrorCode::DivisionByZeroGroup, name + ": empty group");
                    unsigned __int128 qq = acc[r] / counts[r];
                    std::uint64_t rr = std::uint64_t(acc[r] % counts[r]);
                    qv[r] = Fe(std::uint64_t(qq >> 64)) * fe_pow2(64) + Fe(std::uint64_t(qq));
                    rv[r] = Fe(rr);
                    wlo[r] = rv[r];
                    whi[r] = Fe(counts[r] - 1 - rr);
                    if (qq >> 64)
                        fail(ErrorCode::OutOfRange, name + ": aggregate exceeds 64 bits");
                    outvals[r] = qv[r];
                    o.cols[group_attrs.size() + ai][r] = std::uint64_t(qq);
                }
                set_col(cs, asg, mm.q, qv, pins);
                for (std::size_t r = 0; r < n; ++r) {
                    asg.set(cs, mm.r, r, rv[r]);
                    if (ovv[r]) pin(pins, mm.r, r); // only division-gated rows pin r
                }
                mm.qdec.fill(cs, asg, pins);
                mm.rlow.fill(cs, asg, wlo, pins);
                mm.rhigh.fill(cs, asg, whi, pins);
            } else {
                for (std::size_t r = 0; r < n; ++r) {
                    if (!ovv[r]) continue;
                    if (acc[r] >> 64)
                        fail(ErrorCode::OutOfRange, name + ": aggregate exceeds 64 bits");
                    outvals[r] = Fe(std::uint64_t(acc[r]));
                    o.cols[group_attrs.size() + ai][r] = std::uint64_t(acc[r]);
                }
            }
            set_col(cs, asg, mm.out_col, outvals, pins);
        }
        return o;
    }

    void fill_phase2(const ConstraintSystem& cs, Assignment& asg, PinList* pins = nullptr) const {
        sort.fill_phase2(cs, asg, pins);
    }
};

inline GroupByGate build_groupby_gate(CircuitBuilder& b, const TableCols& in,
                                      const std::vector<std::size_t>& group_attrs,
                                      const std::vector<AggSpec>& aggs, const std::string& name) {
    GroupByGate g;
    g.name = name;
    g.in = in;
    g.group_attrs = group_attrs;
    g.aggs = aggs;
    const std::size_t n = in.budget;
    g.sort = build_sort_gate(b, in, group_attrs, true, name + ".sort");
    const TableCols& st = g.sort.out;

    g.gkey = b.advice(name + ".gkey");
    {
        std::vector<Fe> o(1, fe_pow2(unsigned(64 * group_attrs.size() + 2)));
        g.ofs = b.fixed(name + ".first_ofs", o);
    }
    ColumnId sel_all = b.selector(name + ".sel", 0, n);
    b.cs.add_gate({name + ".gkey", sel_all,
                   {cell(g.gkey) - composite_key_expr(st, group_attrs, true)}});
    g.iz = build_is_zero(b, cell(g.gkey) + cell(g.ofs), cell(g.gkey, -1), 0, n,
                         name + ".boundary");
    ExprPtr S = ec(1) - cell(g.iz.b);

    g.ov = b.advice(name + ".ov");
    if (n >= 2) {
        ColumnId sel_main = b.selector(name + ".ov_sel", 0, n - 1);
        b.cs.add_gate({name + ".ov_main", sel_main,
                       {cell(g.ov) - (ec(1) - cell(g.iz.b, 1)) * cell(st.valid)}});
    }
    ColumnId sel_last = b.selector_row(name + ".last_sel", n - 1);
    b.cs.add_gate({name + ".ov_last", sel_last, {cell(g.ov) - cell(st.valid)}});

    bool need_count = false;
    for (const auto& a : aggs)
        need_count |= a.fn == AggFn::Count || a.fn == AggFn::Avg;
    if (need_count) {
        g.has_count = true;
        g.count_ra = build_running_accumulator(b, cell(st.valid), S, n, name + ".count");
    }

    for (std::size_t ai = 0; ai < aggs.size(); ++ai) {
        GroupByGate::AggMachinery mm;
        mm.spec = aggs[ai];
        std::string an = name + ".agg" + std::to_string(ai);
        switch (mm.spec.fn) {
            case AggFn::Sum:
            case AggFn::Avg:
                mm.ra = build_running_accumulator(
                    b, cell(st.attrs[mm.spec.attr]) * cell(st.valid), S, n, an + ".sum");
                mm.has_ra = true;
                mm.m = mm.ra.m;
                break;
            case AggFn::Count: mm.m = g.count_ra.m; break;
            case AggFn::Min:
            case AggFn::Max: {
                const bool is_min = mm.spec.fn == AggFn::Min;
                mm.xt = b.advice(an + ".xt");
                mm.m = b.advice(an + ".m");
                ExprPtr sentinel = is_min ? ec(Fe(UINT64_MAX)) : ec(0);
                b.cs.add_gate({an + ".xt", sel_all,
                               {cell(mm.xt) - (cell(st.valid) * cell(st.attrs[mm.spec.attr]) +
                                               (ec(1) - cell(st.valid)) * sentinel)}});
                ExprPtr x = is_min ? cell(mm.xt) : cell(mm.m, -1);
                ExprPtr t = is_min ? cell(mm.m, -1) : cell(mm.xt);
                mm.lt = build_less_than(b, x, t, n, 64, an + ".cmp");
                mm.has_lt = true;
                ExprPtr chk = cell(mm.lt.check);
                ColumnId sel_first = b.selector_row(an + ".first_sel", 0);
                b.cs.add_gate({an + ".carry_first", sel_first, {cell(mm.m) - cell(mm.xt)}});
                if (n >= 2) {
                    ColumnId sel_mid = b.selector(an + ".mid_sel", 1, n);
                    b.cs.add_gate(
                        {an + ".carry", sel_mid,
                         {cell(mm.m) - (S * cell(mm.xt) +
                                        (ec(1) - S) * (chk * cell(mm.xt) +
                                                       (ec(1) - chk) * cell(mm.m, -1)))}});
                }
                break;
            }
        }
        if (mm.spec.fn == AggFn::Avg) {
            mm.q = b.advice(an + ".q");
            mm.r = b.advice(an + ".r");
            b.cs.add_gate({an + ".div", sel_all,
                           {cell(g.ov) * (cell(mm.m) - cell(mm.q) * cell(g.count_ra.m) -
                                          cell(mm.r))}});
            mm.qdec = build_limb_range_check(b, mm.q, n, 12, an + ".qrange");
            mm.rlow = build_masked_range(b, cell(g.ov), cell(mm.r), 0, n, 8, an + ".rlow");
            mm.rhigh = build_masked_range(b, cell(g.ov), cell(g.count_ra.m) - ec(1) - cell(mm.r),
                                          0, n, 8, an + ".rhigh");
        }
        mm.out_col = b.advice(an + ".out");
        ExprPtr src = mm.spec.fn == AggFn::Avg ? cell(mm.q) : cell(mm.m);
        b.cs.add_gate({an + ".out", sel_all, {cell(mm.out_col) - cell(g.ov) * src}});
        g.machs.push_back(std::move(mm));
    }

    for (std::size_t gi = 0; gi < group_attrs.size(); ++gi) {
        ColumnId oc = b.advice(name + ".g" + std::to_string(gi));
        g.gout.push_back(oc);
        b.cs.add_gate({name + ".gout" + std::to_string(gi), sel_all,
                       {cell(oc) - cell(g.ov) * cell(st.attrs[group_attrs[gi]])}});
    }

    g.out.budget = n;
    g.out.valid = g.ov;
    g.out.attrs = g.gout;
    for (const auto& mm : g.machs) g.out.attrs.push_back(mm.out_col);
    return g;
}

// ---------------------------------------------------------------------------
// Disjoint merge: proves two flagged key columns (entries = key+1, zero on
// unflagged rows) hold disjoint, internally duplicate-free sets, via a merged
// strictly increasing column.
// ---------------------------------------------------------------------------

struct DisjointMerge {
    std::string name;
    ColumnId cval{}, cflag{}, s{}, sv{};
    GrandProduct gp;
    MaskedRange strict;
    bool has_strict = false;
    std::size_t len = 0;

    /// vals/flags are the concatenated source column contents (length len).
    void fill_phase1(const ConstraintSystem& cs, Assignment& asg, const std::vector<Fe>& vals,
                     const std::vector<std::uint8_t>& flags, PinList* pins = nullptr) const {
        if (vals.size() != len || flags.size() != len)
            fail(ErrorCode::ShapeMismatch, name + ": concat length mismatch");
        set_col(cs, asg, cval, vals, pins);
        set_col(cs, asg, cflag, fe_vec(flags), pins);
        std::vector<Fe> real;
        for (std::size_t i = 0; i < len; ++i)
            if (flags[i]) real.push_back(vals[i]);
        std::sort(real.begin(), real.end());
        for (std::size_t i = 0; i + 1 < real.size(); ++i)
            if (real[i] == real[i + 1])
                fail(ErrorCode::WitnessInfeasible,
                     name + ": sets are not disjoint (duplicate " + real[i].to_dec() + ")");
        std::vector<Fe> sv_vals(len, Fe::zero()), s_vals(len, Fe::zero());
        for (std::size_t i = 0; i < real.size(); ++i) {
            s_vals[i] = real[i];
            sv_vals[i] = Fe::one();
        }
        set_col(cs, asg, s, s_vals, pins);
        set_col(cs, asg, sv, sv_vals, pins);
        if (has_strict) {
            std::vector<Fe> w(len - 1, Fe::zero());
            for (std::size_t i = 0; i + 1 < len; ++i)
                if (!sv_vals[i + 1].is_zero()) w[i] = s_vals[i + 1] - s_vals[i] - Fe::one();
            strict.fill(cs, asg, w, pins);
        }
    }

    void fill_phase2(const ConstraintSystem& cs, Assignment& asg, PinList* pins = nullptr) const {
        gp.fill(cs, asg, pins);
    }
};

inline DisjointMerge build_disjoint_merge(CircuitBuilder& b, ColumnId colA, ColumnId flagA,
                                          std::size_t lenA, ColumnId colB, ColumnId flagB,
                                          std::size_t lenB, int limbs, const std::string& name) {
    DisjointMerge dmm;
    dmm.name = name;
    dmm.len = lenA + lenB;
    b.note_region(dmm.len + 1);
    dmm.cval = b.advice(name + ".cval");
    dmm.cflag = b.advice(name + ".cflag");
    for (std::size_t i = 0; i < lenA; ++i) {
        b.cs.add_copy(dmm.cval, i, colA, i);
        b.cs.add_copy(dmm.cflag, i, flagA, i);
    }
    for (std::size_t i = 0; i < lenB; ++i) {
        b.cs.add_copy(dmm.cval, lenA + i, colB, i);
        b.cs.add_copy(dmm.cflag, lenA + i, flagB, i);
    }
    dmm.s = b.advice(name + ".s");
    dmm.sv = b.advice(name + ".sv");
    add_prefix_flag_gates(b, dmm.sv, dmm.len, name + ".sv");
    ColumnId sel = b.selector(name + ".sel", 0, dmm.len);
    b.cs.add_gate({name + ".dummy_zero", sel, {(ec(1) - cell(dmm.sv)) * cell(dmm.s)}});
    dmm.gp = build_grand_product(
        b, row_fingerprint({cell(dmm.cval), cell(dmm.cflag)}, b.gamma) + chal(b.alpha),
        row_fingerprint({cell(dmm.s), cell(dmm.sv)}, b.gamma) + chal(b.alpha), dmm.len,
        name + ".perm");
    if (dmm.len >= 2) {
        dmm.has_strict = true;
        dmm.strict = build_masked_range(b, cell(dmm.sv, 1), cell(dmm.s, 1) - cell(dmm.s) - ec(1),
                                        0, dmm.len - 1, limbs, name + ".strict");
    }
    return dmm;
}

// ---------------------------------------------------------------------------
// Join.
// ---------------------------------------------------------------------------

struct JoinGate {
    std::string name;
    TableCols in1, in2, out;
    std::size_t ja = 0, jb = 0;
    bool general = false;

    ColumnId f{}, g{}, h1{};
    std::vector<ColumnId> aprime, bprime;
    ColumnId vprime{}, fprime{}, wprime{}, gprime{};
    GrandProduct gpa, gpb;

    // pkfk parts
    std::vector<ColumnId> jd_a, jd_b, tb;
    ColumnId t1de{}, td1{}, t2de{}, td2{};
    DisjointMerge dm;

    // general parts
    ColumnId h2{};
    ColumnId t1all{}, ta1{}, t2non{}, tn2{}, t2all{}, ta2{};
    DisjointMerge dm_y;
    std::vector<ColumnId> pa, pb;
    ColumnId pav{}, pbv{}, pv{};
    IsZero iz_pair;
    std::vector<ColumnId> oa, ob;

    TableData fill_phase1(const ConstraintSystem& cs, Assignment& asg, const TableData& d1,
                          const TableData& d2, PinList* pins = nullptr) const;
    void fill_phase2(const ConstraintSystem& cs, Assignment& asg, PinList* pins = nullptr) const {
        gpa.fill(cs, asg, pins);
        gpb.fill(cs, asg, pins);
        dm.fill_phase2(cs, asg, pins);
        if (general) dm_y.fill_phase2(cs, asg, pins);
    }
};

inline JoinGate build_join_gate(CircuitBuilder& b, const TableCols& in1, const TableCols& in2,
                                std::size_t ja, std::size_t jb, bool general,
                                const std::string& name) {
    JoinGate j;
    j.name = name;
    j.in1 = in1;
    j.in2 = in2;
    j.ja = ja;
    j.jb = jb;
    j.general = general;
    const std::size_t n1 = in1.budget, n2 = in2.budget;
    const std::size_t k1 = in1.attrs.size(), k2 = in2.attrs.size();

    ColumnId sel1 = b.selector(name + ".sel1", 0, n1);
    ColumnId sel2 = b.selector(name + ".sel2", 0, n2);

    // contributing flags on the original rows
    j.f = b.advice(name + ".f");
    b.cs.add_gate({name + ".f", sel1,
                   {cell(j.f) * (ec(1) - cell(j.f)), cell(j.f) * (ec(1) - cell(in1.valid))}});
    j.g = b.advice(name + ".g");
    b.cs.add_gate({name + ".g", sel2,
                   {cell(j.g) * (ec(1) - cell(j.g)), cell(j.g) * (ec(1) - cell(in2.valid))}});

    // category 1: reordered permutations with contributing-rows-first layout
    std::vector<ExprPtr> lhs1, rhs1, lhs2, rhs2;
    for (std::size_t c = 0; c < k1; ++c) {
        j.aprime.push_back(b.advice(name + ".ap" + std::to_string(c)));
        lhs1.push_back(cell(in1.attrs[c]));
        rhs1.push_back(cell(j.aprime[c]));
    }
    j.vprime = b.advice(name + ".vprime");
    j.fprime = b.advice(name + ".fprime");
    lhs1.push_back(cell(in1.valid));
    lhs1.push_back(cell(j.f));
    rhs1.push_back(cell(j.vprime));
    rhs1.push_back(cell(j.fprime));
    j.gpa = build_grand_product(b, row_fingerprint(lhs1, b.gamma) + chal(b.alpha),
                                row_fingerprint(rhs1, b.gamma) + chal(b.alpha), n1,
                                name + ".perm_a");
    add_prefix_flag_gates(b, j.fprime, n1, name + ".fprime");
    b.cs.add_gate({name + ".fp_valid", sel1, {cell(j.fprime) * (ec(1) - cell(j.vprime))}});

    for (std::size_t c = 0; c < k2; ++c) {
        j.bprime.push_back(b.advice(name + ".bp" + std::to_string(c)));
        lhs2.push_back(cell(in2.attrs[c]));
        rhs2.push_back(cell(j.bprime[c]));
    }
    j.wprime = b.advice(name + ".wprime");
    j.gprime = b.advice(name + ".gprime");
    lhs2.push_back(cell(in2.valid));
    lhs2.push_back(cell(j.g));
    rhs2.push_back(cell(j.wprime));
    rhs2.push_back(cell(j.gprime));
    j.gpb = build_grand_product(b, row_fingerprint(lhs2, b.gamma) + chal(b.alpha),
                                row_fingerprint(rhs2, b.gamma) + chal(b.alpha), n2,
                                name + ".perm_b");
    add_prefix_flag_gates(b, j.gprime, n2, name + ".gp_flag");
    b.cs.add_gate({name + ".gp_valid", sel2, {cell(j.gprime) * (ec(1) - cell(j.wprime))}});

    b.expect("join.category1.permutation", false, name + ".perm_a.step", n1);
    b.expect("join.category1.permutation", false, name + ".perm_b.step", n2);

    // category 2 (first half): dedup of non-contributing left keys
    j.h1 = b.advice(name + ".h1");
    b.cs.add_gate({name + ".h1", sel1, {cell(j.h1) - cell(in1.valid) * (ec(1) - cell(j.f))}});
    j.t1de = b.advice(name + ".t1de");
    j.td1 = b.advice(name + ".td1");
    add_prefix_flag_gates(b, j.td1, n1, name + ".td1");
    b.cs.add_gate({name + ".t1de_zero", sel1, {(ec(1) - cell(j.td1)) * cell(j.t1de)}});
    b.cs.add_lookup({name + ".dedup_a", sel1,
                     {cell(j.h1) * (cell(in1.attrs[ja]) + ec(1)), cell(j.h1)},
                     {j.t1de, j.td1}});

    if (!general) {
        // category 2 (second half): every valid right key appears among the
        // deduplicated right keys, so a suppressed match collides in S
        j.t2de = b.advice(name + ".t2de");
        j.td2 = b.advice(name + ".td2");
        add_prefix_flag_gates(b, j.td2, n2, name + ".td2");
        b.cs.add_gate({name + ".t2de_zero", sel2, {(ec(1) - cell(j.td2)) * cell(j.t2de)}});
        b.cs.add_lookup({name + ".dedup_b", sel2,
                         {cell(in2.valid) * (cell(in2.attrs[jb]) + ec(1)), cell(in2.valid)},
                         {j.t2de, j.td2}});
        b.expect("join.category2.dedup", true, name + ".dedup_", n1 + n2);

        // category 3: merged strictly-sorted disjointness
        j.dm = build_disjoint_merge(b, j.t1de, j.td1, n1, j.t2de, j.td2, n2, 8, name + ".merge");
        b.expect("join.category3.sorted", false, name + ".merge.strict.mask", n1 + n2 - 1);

        // joined output aligned with the reordered left table
        std::vector<ExprPtr> acons, bcons;
        for (std::size_t c = 0; c < k1; ++c) {
            j.jd_a.push_back(b.advice(name + ".jda" + std::to_string(c)));
            acons.push_back(cell(j.jd_a[c]) - cell(j.fprime) * cell(j.aprime[c]));
        }
        b.cs.add_gate({name + ".jd_a", sel1, acons});
        for (std::size_t c = 0; c < k2; ++c) {
            j.jd_b.push_back(b.advice(name + ".jdb" + std::to_string(c)));
            bcons.push_back((ec(1) - cell(j.fprime)) * cell(j.jd_b[c]));
        }
        b.cs.add_gate({name + ".jd_b_zero", sel1, bcons});

        // category 4: per-output-row key equality
        b.cs.add_gate({name + ".equality", sel1,
                       {cell(j.fprime) * (cell(j.jd_b[jb]) - cell(j.aprime[ja]))}});
        b.expect("join.category4.equality", false, name + ".equality", n1);

        // category 5: joined right halves originate from marked right rows
        std::vector<ExprPtr> tbcons;
        for (std::size_t c = 0; c < k2; ++c) {
            j.tb.push_back(b.advice(name + ".tb" + std::to_string(c)));
            tbcons.push_back(cell(j.tb[c]) - cell(j.gprime) * cell(j.bprime[c]));
        }
        b.cs.add_gate({name + ".tb", sel2, tbcons});
        std::vector<ExprPtr> src_in;
        std::vector<ColumnId> src_tab;
        for (std::size_t c = 0; c < k2; ++c) {
            src_in.push_back(cell(j.fprime) * cell(j.jd_b[c]));
            src_tab.push_back(j.tb[c]);
        }
        src_in.push_back(cell(j.fprime));
        src_tab.push_back(j.gprime);
        b.cs.add_lookup({name + ".source", sel1, src_in, src_tab});
        b.expect("join.category5.source", true, name + ".source", n1);

        j.out.budget = n1;
        j.out.valid = j.fprime;
        j.out.attrs = j.jd_a;
        for (ColumnId c : j.jd_b) j.out.attrs.push_back(c);
        return j;
    }

    // general mode: both-direction disjointness plus pairwise comparison
    j.t2all = b.advice(name + ".t2all");
    j.ta2 = b.advice(name + ".ta2");
    add_prefix_flag_gates(b, j.ta2, n2, name + ".ta2");
    b.cs.add_gate({name + ".t2all_zero", sel2, {(ec(1) - cell(j.ta2)) * cell(j.t2all)}});
    b.cs.add_lookup({name + ".dedup_b", sel2,
                     {cell(in2.valid) * (cell(in2.attrs[jb]) + ec(1)), cell(in2.valid)},
                     {j.t2all, j.ta2}});
    j.dm = build_disjoint_merge(b, j.t1de, j.td1, n1, j.t2all, j.ta2, n2, 8, name + ".merge");

    j.h2 = b.advice(name + ".h2");
    b.cs.add_gate({name + ".h2", sel2, {cell(j.h2) - cell(in2.valid) * (ec(1) - cell(j.g))}});
    j.t2non = b.advice(name + ".t2non");
    j.tn2 = b.advice(name + ".tn2");
    add_prefix_flag_gates(b, j.tn2, n2, name + ".tn2");
    b.cs.add_gate({name + ".t2non_zero", sel2, {(ec(1) - cell(j.tn2)) * cell(j.t2non)}});
    b.cs.add_lookup({name + ".dedup_c", sel2,
                     {cell(j.h2) * (cell(in2.attrs[jb]) + ec(1)), cell(j.h2)},
                     {j.t2non, j.tn2}});
    j.t1all = b.advice(name + ".t1all");
    j.ta1 = b.advice(name + ".ta1");
    add_prefix_flag_gates(b, j.ta1, n1, name + ".ta1");
    b.cs.add_gate({name + ".t1all_zero", sel1, {(ec(1) - cell(j.ta1)) * cell(j.t1all)}});
    b.cs.add_lookup({name + ".dedup_d", sel1,
                     {cell(in1.valid) * (cell(in1.attrs[ja]) + ec(1)), cell(in1.valid)},
                     {j.t1all, j.ta1}});
    j.dm_y = build_disjoint_merge(b, j.t2non, j.tn2, n2, j.t1all, j.ta1, n1, 8, name + ".merge_y");
    b.expect("join.category2.dedup", true, name + ".dedup_", 2 * (n1 + n2));
    b.expect("join.category3.sorted", false, name + ".merge.strict.mask", n1 + n2 - 1);
    b.expect("join.category3.sorted", false, name + ".merge_y.strict.mask", n1 + n2 - 1);

    const std::size_t np = n1 * n2;
    b.note_region(np);
    ColumnId selp = b.selector(name + ".selp", 0, np);
    for (std::size_t c = 0; c < k1; ++c) j.pa.push_back(b.advice(name + ".pa" + std::to_string(c)));
    for (std::size_t c = 0; c < k2; ++c) j.pb.push_back(b.advice(name + ".pb" + std::to_string(c)));
    j.pav = b.advice(name + ".pav");
    j.pbv = b.advice(name + ".pbv");
    for (std::size_t i = 0; i < n1; ++i) {
        for (std::size_t jj = 0; jj < n2; ++jj) {
            std::size_t r = i * n2 + jj;
            for (std::size_t c = 0; c < k1; ++c) b.cs.add_copy(j.pa[c], r, in1.attrs[c], i);
            for (std::size_t c = 0; c < k2; ++c) b.cs.add_copy(j.pb[c], r, in2.attrs[c], jj);
            b.cs.add_copy(j.pav, r, in1.valid, i);
            b.cs.add_copy(j.pbv, r, in2.valid, jj);
        }
    }
    j.iz_pair = build_is_zero(b, cell(j.pa[ja]), cell(j.pb[jb]), 0, np, name + ".pair");
    b.expect("join.category4.equality", false, name + ".pair.", 2 * np);
    j.pv = b.advice(name + ".pv");
    b.cs.add_gate({name + ".pv", selp,
                   {cell(j.pv) - cell(j.iz_pair.b) * cell(j.pav) * cell(j.pbv)}});

    std::vector<ExprPtr> ocons;
    for (std::size_t c = 0; c < k1; ++c) {
        j.oa.push_back(b.advice(name + ".oa" + std::to_string(c)));
        ocons.push_back(cell(j.oa[c]) - cell(j.pv) * cell(j.pa[c]));
    }
    for (std::size_t c = 0; c < k2; ++c) {
        j.ob.push_back(b.advice(name + ".ob" + std::to_string(c)));
        ocons.push_back(cell(j.ob[c]) - cell(j.pv) * cell(j.pb[c]));
    }
    b.cs.add_gate({name + ".jd_bind", selp, ocons});
    b.expect("join.category5.source", false, name + ".jd_bind", np);

    j.out.budget = np;
    j.out.valid = j.pv;
    j.out.attrs = j.oa;
    for (ColumnId c : j.ob) j.out.attrs.push_back(c);
    return j;
}

inline TableData JoinGate::fill_phase1(const ConstraintSystem& cs, Assignment& asg,
                                       const TableData& d1, const TableData& d2,
                                       PinList* pins) const {
    const std::size_t n1 = in1.budget, n2 = in2.budget;
    const std::size_t k1 = in1.attrs.size(), k2 = in2.attrs.size();

    // match flags
    std::map<std::uint64_t, std::vector<std::size_t>> bkey_rows;
    for (std::size_t r = 0; r < n2; ++r)
        if (d2.valid[r]) bkey_rows[d2.cols[jb][r]].push_back(r);
    if (!general) {
        for (const auto& [k, v] : bkey_rows)
            if (v.size() > 1)
                fail(ErrorCode::WitnessInfeasible,
                     name + ": right join key " + std::to_string(k) + " is not unique");
    }
    std::vector<std::uint8_t> fv(n1, 0), gv(n2, 0);
    for (std::size_t r = 0; r < n1; ++r)
        fv[r] = d1.valid[r] && bkey_rows.count(d1.cols[ja][r]);
    std::map<std::uint64_t, std::vector<std::size_t>> akey_rows;
    for (std::size_t r = 0; r < n1; ++r)
        if (d1.valid[r]) akey_rows[d1.cols[ja][r]].push_back(r);
    for (std::size_t r = 0; r < n2; ++r)
        gv[r] = d2.valid[r] && akey_rows.count(d2.cols[jb][r]);

    set_col(cs, asg, f, fe_vec(fv), pins);
    set_col(cs, asg, g, fe_vec(gv), pins);
    for (std::size_t r = 0; r < n1; ++r) {
        for (std::size_t c = 0; c < k1; ++c) pin(pins, in1.attrs[c], r);
        pin(pins, in1.valid, r);
        asg.set(cs, h1, r, Fe(std::uint64_t(d1.valid[r] && !fv[r])));
        pin(pins, h1, r);
    }
    for (std::size_t r = 0; r < n2; ++r) {
        for (std::size_t c = 0; c < k2; ++c) pin(pins, in2.attrs[c], r);
        pin(pins, in2.valid, r);
    }

    // reorders: contributing first, then non-contributing valid, then dummies
    auto reorder = [](const std::vector<std::uint8_t>& flag, const std::vector<std::uint8_t>& val) {
        std::vector<std::size_t> idx(flag.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) {
            int rx = flag[x] ? 0 : (val[x] ? 1 : 2);
            int ry = flag[y] ? 0 : (val[y] ? 1 : 2);
            return rx < ry;
        });
        return idx;
    };
    std::vector<std::size_t> ia = reorder(fv, d1.valid), ib = reorder(gv, d2.valid);
    std::vector<std::uint8_t> fpv(n1), vpv(n1), gpv(n2), wpv(n2);
    for (std::size_t r = 0; r < n1; ++r) {
        fpv[r] = fv[ia[r]];
        vpv[r] = d1.valid[ia[r]];
        for (std::size_t c = 0; c < k1; ++c) {
            asg.set(cs, aprime[c], r, Fe(d1.cols[c][ia[r]]));
            pin(pins, aprime[c], r);
        }
    }
    set_col(cs, asg, vprime, fe_vec(vpv), pins);
    set_col(cs, asg, fprime, fe_vec(fpv), pins);
    for (std::size_t r = 0; r < n2; ++r) {
        gpv[r] = gv[ib[r]];
        wpv[r] = d2.valid[ib[r]];
        for (std::size_t c = 0; c < k2; ++c) {
            asg.set(cs, bprime[c], r, Fe(d2.cols[c][ib[r]]));
            pin(pins, bprime[c], r);
        }
    }
    set_col(cs, asg, wprime, fe_vec(wpv), pins);
    set_col(cs, asg, gprime, fe_vec(gpv), pins);

    // deduplicated key sets
    auto dedup_fill = [&](ColumnId vals_col, ColumnId flag_col, const std::set<std::uint64_t>& ks,
                          std::size_t len) {
        std::vector<Fe> vals(len, Fe::zero());
        std::vector<Fe> flags(len, Fe::zero());
        if (ks.size() > len)
            fail(ErrorCode::InternalInconsistency, name + ": dedup overflow");
        std::size_t i = 0;
        for (std::uint64_t k : ks) {
            vals[i] = Fe(k) + Fe::one();
            flags[i] = Fe::one();
            ++i;
        }
        set_col(cs, asg, vals_col, vals, pins);
        set_col(cs, asg, flag_col, flags, pins);
        return vals;
    };
    std::set<std::uint64_t> a_non, b_all;
    for (std::size_t r = 0; r < n1; ++r)
        if (d1.valid[r] && !fv[r]) a_non.insert(d1.cols[ja][r]);
    for (std::size_t r = 0; r < n2; ++r)
        if (d2.valid[r]) b_all.insert(d2.cols[jb][r]);

    auto merge_concat = [&](const std::set<std::uint64_t>& s1, std::size_t l1,
                            const std::set<std::uint64_t>& s2, std::size_t l2,
                            const DisjointMerge& dmm) {
        std::vector<Fe> vals;
        std::vector<std::uint8_t> flags;
        vals.resize(l1 + l2, Fe::zero());
        flags.resize(l1 + l2, 0);
        std::size_t i = 0;
        for (std::uint64_t k : s1) {
            vals[i] = Fe(k) + Fe::one();
            flags[i] = 1;
            ++i;
        }
        i = l1;
        for (std::uint64_t k : s2) {
            vals[i] = Fe(k) + Fe::one();
            flags[i] = 1;
            ++i;
        }
        dmm.fill_phase1(cs, asg, vals, flags, pins);
    };

    if (!general) {
        dedup_fill(t1de, td1, a_non, n1);
        dedup_fill(t2de, td2, b_all, n2);
        merge_concat(a_non, n1, b_all, n2, dm);

        // joined output + masked source table
        TableData o;
        o.valid.assign(n1, 0);
        o.cols.assign(k1 + k2, std::vector<std::uint64_t>(n1, 0));
        for (std::size_t r = 0; r < n1; ++r) {
            o.valid[r] = fpv[r];
            std::vector<std::uint64_t> brow(k2, 0);
            if (fpv[r]) {
                std::size_t src = ia[r];
                std::size_t bm = bkey_rows.at(d1.cols[ja][src]).front();
                for (std::size_t c = 0; c < k1; ++c) o.cols[c][r] = d1.cols[c][src];
                for (std::size_t c = 0; c < k2; ++c) {
                    o.cols[k1 + c][r] = d2.cols[c][bm];
                    brow[c] = d2.cols[c][bm];
                }
            }
            for (std::size_t c = 0; c < k1; ++c) {
                asg.set(cs, jd_a[c], r, Fe(o.cols[c][r]));
                pin(pins, jd_a[c], r);
            }
            for (std::size_t c = 0; c < k2; ++c) {
                asg.set(cs, jd_b[c], r, Fe(brow[c]));
                pin(pins, jd_b[c], r);
            }
        }
        for (std::size_t r = 0; r < n2; ++r) {
            for (std::size_t c = 0; c < k2; ++c) {
                asg.set(cs, tb[c], r, gpv[r] ? Fe(d2.cols[c][ib[r]]) : Fe::zero());
                pin(pins, tb[c], r);
            }
        }
        return o;
    }

    // general mode
    std::set<std::uint64_t> b_non, a_all;
    for (std::size_t r = 0; r < n2; ++r) {
        if (d2.valid[r] && !gv[r]) b_non.insert(d2.cols[jb][r]);
        asg.set(cs, h2, r, Fe(std::uint64_t(d2.valid[r] && !gv[r])));
        pin(pins, h2, r);
    }
    for (std::size_t r = 0; r < n1; ++r)
        if (d1.valid[r]) a_all.insert(d1.cols[ja][r]);
    dedup_fill(t1de, td1, a_non, n1);
    dedup_fill(t2all, ta2, b_all, n2);
    merge_concat(a_non, n1, b_all, n2, dm);
    dedup_fill(t2non, tn2, b_non, n2);
    dedup_fill(t1all, ta1, a_all, n1);
    merge_concat(b_non, n2, a_all, n1, dm_y);

    const std::size_t np = n1 * n2;
    TableData o;
    o.valid.assign(np, 0);
    o.cols.assign(k1 + k2, std::vector<std::uint64_t>(np, 0));
    std::vector<Fe> diffs(np);
    for (std::size_t i = 0; i < n1; ++i) {
        for (std::size_t jj = 0; jj < n2; ++jj) {
            std::size_t r = i * n2 + jj;
            for (std::size_t c = 0; c < k1; ++c) {
                asg.set(cs, pa[c], r, Fe(d1.cols[c][i]));
                pin(pins, pa[c], r);
            }
            for (std::size_t c = 0; c < k2; ++c) {
                asg.set(cs, pb[c], r, Fe(d2.cols[c][jj]));
                pin(pins, pb[c], r);
            }
            asg.set(cs, pav, r, Fe(std::uint64_t(d1.valid[i])));
            asg.set(cs, pbv, r, Fe(std::uint64_t(d2.valid[jj])));
            pin(pins, pav, r);
            pin(pins, pbv, r);
            diffs[r] = Fe(d1.cols[ja][i]) - Fe(d2.cols[jb][jj]);
            bool match = d1.valid[i] && d2.valid[jj] && d1.cols[ja][i] == d2.cols[jb][jj];
            asg.set(cs, pv, r, Fe(std::uint64_t(match)));
            pin(pins, pv, r);
            if (match) {
                o.valid[r] = 1;
                for (std::size_t c = 0; c < k1; ++c) o.cols[c][r] = d1.cols[c][i];
                for (std::size_t c = 0; c < k2; ++c) o.cols[k1 + c][r] = d2.cols[c][jj];
            }
            for (std::size_t c = 0; c < k1; ++c) {
                asg.set(cs, oa[c], r, Fe(o.cols[c][r]));
                pin(pins, oa[c], r);
            }
            for (std::size_t c = 0; c < k2; ++c) {
                asg.set(cs, ob[c], r, Fe(o.cols[k1 + c][r]));
                pin(pins, ob[c], r);
            }
        }
    }
    iz_pair.fill(cs, asg, diffs, pins);
    return o;
}

// ---------------------------------------------------------------------------
// Projection.
// ---------------------------------------------------------------------------

struct ProjectGate {
    std::string name;
    TableCols in, out;
    std::vector<int> mask;

    TableData fill_phase1(const ConstraintSystem& cs, Assignment& asg, const TableData& d,
                          PinList* pins = nullptr) const {
        TableData o = d;
        for (std::size_t j = 0; j < mask.size(); ++j) {
            std::vector<Fe> vals(in.budget);
            for (std::size_t r = 0; r < in.budget; ++r) {
                o.cols[j][r] = mask[j] ? d.cols[j][r] : 0;
                vals[r] = Fe(o.cols[j][r]);
            }
            set_col(cs, asg, out.attrs[j], vals, pins);
        }
        return o;
    }
};

inline ProjectGate build_projection(CircuitBuilder& b, const TableCols& in,
                                    const std::vector<int>& mask, const std::string& name) {
    if (mask.size() != in.attrs.size())
        fail(ErrorCode::ShapeMismatch, name + ": mask arity mismatch");
    ProjectGate p;
    p.name = name;
    p.in = in;
    p.mask = mask;
    const std::size_t n = in.budget;
    ColumnId sel = b.selector(name + ".sel", 0, n);
    std::vector<ExprPtr> cons, look_in;
    std::vector<ColumnId> look_tab;
    for (std::size_t j = 0; j < mask.size(); ++j) {
        ColumnId mc = b.fixed(name + ".m" + std::to_string(j),
                              std::vector<Fe>(n, Fe(std::uint64_t(mask[j] ? 1 : 0))));
        ColumnId oc = b.advice(name + ".a" + std::to_string(j));
        p.out.attrs.push_back(oc);
        cons.push_back(cell(oc) - cell(mc) * cell(in.attrs[j]));
        look_in.push_back(cell(mc) * cell(in.attrs[j]));
        look_tab.push_back(oc);
    }
    b.cs.add_gate({name + ".mask", sel, cons});
    look_in.push_back(cell(in.valid));
    look_tab.push_back(in.valid);
    b.cs.add_lookup({name + ".bind", sel, look_in, look_tab});
    p.out.valid = in.valid;
    p.out.budget = n;
    return p;
}

// ---------------------------------------------------------------------------
// Set operations over whole-row composite keys (value encoding key+1, zero
// for dummy rows).
// ---------------------------------------------------------------------------

inline Fe packed_row_key(const TableData& d, std::size_t r) {
    Fe k = Fe::zero();
    const std::size_t m = d.cols.size();
    for (std::size_t j = 0; j < m; ++j)
        k += Fe(d.cols[j][r]) * fe_pow2(unsigned(64 * (m - 1 - j)));
    return k + Fe::one();
}

inline ExprPtr packed_row_key_expr(const TableCols& t) {
    ExprPtr k = ec(1);
    const std::size_t m = t.attrs.size();
    for (std::size_t j = 0; j < m; ++j)
        k = k + cell(t.attrs[j]) * ec(fe_pow2(unsigned(64 * (m - 1 - j))));
    return k;
}

struct EqualityOp {
    std::string name;
    SortGate sr, ss;

    void fill_phase1(const ConstraintSystem& cs, Assignment& asg, const TableData& d1,
                     const TableData& d2, PinList* pins = nullptr) const {
        TableData a = sr.fill_phase1(cs, asg, d1, pins);
        TableData b2 = ss.fill_phase1(cs, asg, d2, pins);
        if (a.valid != b2.valid || a.cols != b2.cols)
            fail(ErrorCode::WitnessInfeasible, name + ": multisets are not equal");
    }
    void fill_phase2(const ConstraintSystem& cs, Assignment& asg, PinList* pins = nullptr) const {
        sr.fill_phase2(cs, asg, pins);
        ss.fill_phase2(cs, asg, pins);
    }
};

inline EqualityOp build_equality_op(CircuitBuilder& b, const TableCols& r, const TableCols& s,
                                    const std::string& name) {
    if (r.budget != s.budget || r.attrs.size() != s.attrs.size())
        fail(ErrorCode::ShapeMismatch, name + ": operand shapes differ");
    EqualityOp e;
    e.name = name;
    std::vector<std::size_t> all(r.attrs.size());
    std::iota(all.begin(), all.end(), 0);
    e.sr = build_sort_gate(b, r, all, true, name + ".sr");
    e.ss = build_sort_gate(b, s, all, true, name + ".ss");
    ColumnId sel = b.selector(name + ".sel", 0, r.budget);
    std::vector<ExprPtr> cons;
    for (std::size_t j = 0; j < r.attrs.size(); ++j)
        cons.push_back(cell(e.sr.out.attrs[j]) - cell(e.ss.out.attrs[j]));
    cons.push_back(cell(e.sr.out.valid) - cell(e.ss.out.valid));
    b.cs.add_gate({name + ".eq", sel, cons});
    return e;
}

struct DisjointOp {
    std::string name;
    TableCols r, s;
    ColumnId kr{}, ks{}, rde{}, rdef{}, sde{}, sdef{};
    DisjointMerge dm;

    void fill_phase1(const ConstraintSystem& cs, Assignment& asg, const TableData& d1,
                     const TableData& d2, PinList* pins = nullptr) const {
        std::vector<Fe> krv(r.budget, Fe::zero()), ksv(s.budget, Fe::zero());
        std::vector<Fe> rkeys, skeys;
        std::set<std::string> seen;
        for (std::size_t i = 0; i < r.budget; ++i) {
            if (d1.valid[i]) {
                krv[i] = packed_row_key(d1, i);
                if (seen.insert(krv[i].to_dec()).second) rkeys.push_back(krv[i]);
            }
        }
        seen.clear();
        for (std::size_t i = 0; i < s.budget; ++i) {
            if (d2.valid[i]) {
                ksv[i] = packed_row_key(d2, i);
                if (seen.insert(ksv[i].to_dec()).second) skeys.push_back(ksv[i]);
            }
        }
        set_col(cs, asg, kr, krv, pins);
        set_col(cs, asg, ks, ksv, pins);
        auto fill_de = [&](ColumnId vc, ColumnId fc, const std::vector<Fe>& keys, std::size_t len) {
            std::vector<Fe> vals(len, Fe::zero()), flags(len, Fe::zero());
            for (std::size_t i = 0; i < keys.size(); ++i) {
                vals[i] = keys[i];
                flags[i] = Fe::one();
            }
            set_col(cs, asg, vc, vals, pins);
            set_col(cs, asg, fc, flags, pins);
            return vals;
        };
        std::vector<Fe> v1 = fill_de(rde, rdef, rkeys, r.budget);
        std::vector<Fe> v2 = fill_de(sde, sdef, skeys, s.budget);
        std::vector<Fe> concat = v1;
        concat.insert(concat.end(), v2.begin(), v2.end());
        std::vector<std::uint8_t> flags(r.budget + s.budget, 0);
        for (std::size_t i = 0; i < rkeys.size(); ++i) flags[i] = 1;
        for (std::size_t i = 0; i < skeys.size(); ++i) flags[r.budget + i] = 1;
        dm.fill_phase1(cs, asg, concat, flags, pins);
    }
    void fill_phase2(const ConstraintSystem& cs, Assignment& asg, PinList* pins = nullptr) const {
        dm.fill_phase2(cs, asg, pins);
    }
};

inline DisjointOp build_disjoint_op(CircuitBuilder& b, const TableCols& r, const TableCols& s,
                                    const std::string& name) {
    if (r.attrs.size() != s.attrs.size())
        fail(ErrorCode::ShapeMismatch, name + ": operand arities differ");
    DisjointOp d;
    d.name = name;
    d.r = r;
    d.s = s;
    const int m = int(r.attrs.size());
    d.kr = b.advice(name + ".kr");
    d.ks = b.advice(name + ".ks");
    ColumnId selr = b.selector(name + ".selr", 0, r.budget);
    ColumnId sels = b.selector(name + ".sels", 0, s.budget);
    b.cs.add_gate({name + ".kr", selr, {cell(d.kr) - cell(r.valid) * packed_row_key_expr(r)}});
    b.cs.add_gate({name + ".ks", sels, {cell(d.ks) - cell(s.valid) * packed_row_key_expr(s)}});
    d.rde = b.advice(name + ".rde");
    d.rdef = b.advice(name + ".rdef");
    add_prefix_flag_gates(b, d.rdef, r.budget, name + ".rdef");
    b.cs.add_gate({name + ".rde_zero", selr, {(ec(1) - cell(d.rdef)) * cell(d.rde)}});
    b.cs.add_lookup({name + ".dedup_r", selr, {cell(d.kr), cell(r.valid)}, {d.rde, d.rdef}});
    d.sde = b.advice(name + ".sde");
    d.sdef = b.advice(name + ".sdef");
    add_prefix_flag_gates(b, d.sdef, s.budget, name + ".sdef");
    b.cs.add_gate({name + ".sde_zero", sels, {(ec(1) - cell(d.sdef)) * cell(d.sde)}});
    b.cs.add_lookup({name + ".dedup_s", sels, {cell(d.ks), cell(s.valid)}, {d.sde, d.sdef}});
    d.dm = build_disjoint_merge(b, d.rde, d.rdef, r.budget, d.sde, d.sdef, s.budget, 8 * m,
                                name + ".merge");
    return d;
}

struct IntersectOp {
    std::string name;
    TableCols r, s, out;
    std::size_t no = 0;
    ColumnId kr{}, ks{}, forig{}, gorig{};
    ColumnId pr{}, fo{}, rv{}, ps{}, fs{}, rs{};
    GrandProduct gpr, gps;
    ColumnId rde{}, rdef{}, sde{}, sdef{};
    DisjointMerge dm;
    std::vector<ColumnId> out_attrs;
    std::vector<LimbDecomposition> out_decs;

    TableData fill_phase1(const ConstraintSystem& cs, Assignment& asg, const TableData& d1,
                          const TableData& d2, PinList* pins = nullptr) const;
    void fill_phase2(const ConstraintSystem& cs, Assignment& asg, PinList* pins = nullptr) const {
        gpr.fill(cs, asg, pins);
        gps.fill(cs, asg, pins);
        dm.fill_phase2(cs, asg, pins);
    }
};

inline IntersectOp build_intersect_op(CircuitBuilder& b, const TableCols& r, const TableCols& s,
                                      const std::string& name) {
    if (r.attrs.size() != s.attrs.size())
        fail(ErrorCode::ShapeMismatch, name + ": operand arities differ");
    IntersectOp x;
    x.name = name;
    x.r = r;
    x.s = s;
    const std::size_t nr = r.budget, ns = s.budget;
    const std::size_t m = r.attrs.size();
    x.no = std::min(nr, ns);

    ColumnId selr = b.selector(name + ".selr", 0, nr);
    ColumnId sels = b.selector(name + ".sels", 0, ns);
    x.kr = b.advice(name + ".kr");
    x.ks = b.advice(name + ".ks");
    b.cs.add_gate({name + ".kr", selr, {cell(x.kr) - cell(r.valid) * packed_row_key_expr(r)}});
    b.cs.add_gate({name + ".ks", sels, {cell(x.ks) - cell(s.valid) * packed_row_key_expr(s)}});
    x.forig = b.advice(name + ".forig");
    b.cs.add_gate({name + ".forig", selr,
                   {cell(x.forig) * (ec(1) - cell(x.forig)),
                    cell(x.forig) * (ec(1) - cell(r.valid))}});
    x.gorig = b.advice(name + ".gorig");
    b.cs.add_gate({name + ".gorig", sels,
                   {cell(x.gorig) * (ec(1) - cell(x.gorig)),
                    cell(x.gorig) * (ec(1) - cell(s.valid))}});

    x.pr = b.advice(name + ".pr");
    x.fo = b.advice(name + ".fo");
    x.rv = b.advice(name + ".rv");
    add_prefix_flag_gates(b, x.fo, nr, name + ".fo");
    add_prefix_flag_gates(b, x.rv, nr, name + ".rv");
    b.cs.add_gate({name + ".pr_shape", selr,
                   {cell(x.fo) * (ec(1) - cell(x.rv)), (ec(1) - cell(x.rv)) * cell(x.pr)}});
    x.gpr = build_grand_product(
        b, row_fingerprint({cell(x.kr), cell(x.forig), cell(r.valid)}, b.gamma) + chal(b.alpha),
        row_fingerprint({cell(x.pr), cell(x.fo), cell(x.rv)}, b.gamma) + chal(b.alpha), nr,
        name + ".perm_r");
    x.ps = b.advice(name + ".ps");
    x.fs = b.advice(name + ".fs");
    x.rs = b.advice(name + ".rs");
    add_prefix_flag_gates(b, x.fs, ns, name + ".fs");
    add_prefix_flag_gates(b, x.rs, ns, name + ".rs");
    b.cs.add_gate({name + ".ps_shape", sels,
                   {cell(x.fs) * (ec(1) - cell(x.rs)), (ec(1) - cell(x.rs)) * cell(x.ps)}});
    x.gps = build_grand_product(
        b, row_fingerprint({cell(x.ks), cell(x.gorig), cell(s.valid)}, b.gamma) + chal(b.alpha),
        row_fingerprint({cell(x.ps), cell(x.fs), cell(x.rs)}, b.gamma) + chal(b.alpha), ns,
        name + ".perm_s");

    // intersection prefixes match row-by-row
    ColumnId selo = b.selector(name + ".selo", 0, x.no);
    b.cs.add_gate({name + ".match", selo,
                   {cell(x.fo) - cell(x.fs), cell(x.fo) * (cell(x.pr) - cell(x.ps))}});
    if (nr > x.no) {
        ColumnId sel_tail = b.selector(name + ".tail_r", x.no, nr);
        b.cs.add_gate({name + ".fo_tail", sel_tail, {cell(x.fo)}});
    }
    if (ns > x.no) {
        ColumnId sel_tail = b.selector(name + ".tail_s", x.no, ns);
        b.cs.add_gate({name + ".fs_tail", sel_tail, {cell(x.fs)}});
    }

    // leftover parts have disjoint supports
    x.rde = b.advice(name + ".rde");
    x.rdef = b.advice(name + ".rdef");
    add_prefix_flag_gates(b, x.rdef, nr, name + ".rdef");
    b.cs.add_gate({name + ".rde_zero", selr, {(ec(1) - cell(x.rdef)) * cell(x.rde)}});
    b.cs.add_lookup({name + ".dedup_r", selr,
                     {(cell(x.rv) - cell(x.fo)) * cell(x.pr), cell(x.rv) - cell(x.fo)},
                     {x.rde, x.rdef}});
    x.sde = b.advice(name + ".sde");
    x.sdef = b.advice(name + ".sdef");
    add_prefix_flag_gates(b, x.sdef, ns, name + ".sdef");
    b.cs.add_gate({name + ".sde_zero", sels, {(ec(1) - cell(x.sdef)) * cell(x.sde)}});
    b.cs.add_lookup({name + ".dedup_s", sels,
                     {(cell(x.rs) - cell(x.fs)) * cell(x.ps), cell(x.rs) - cell(x.fs)},
                     {x.sde, x.sdef}});
    x.dm = build_disjoint_merge(b, x.rde, x.rdef, nr, x.sde, x.sdef, ns, int(8 * m),
                                name + ".merge");

    // decode the intersection prefix into 64-bit output attributes
    std::vector<ExprPtr> cons;
    ExprPtr packed = ec(1);
    for (std::size_t j = 0; j < m; ++j) {
        ColumnId oc = b.advice(name + ".o" + std::to_string(j));
        x.out_attrs.push_back(oc);
        packed = packed + cell(oc) * ec(fe_pow2(unsigned(64 * (m - 1 - j))));
        cons.push_back((ec(1) - cell(x.fo)) * cell(oc));
        x.out_decs.push_back(build_limb_range_check(b, oc, x.no, 8, name + ".orange" +
                                                                        std::to_string(j)));
    }
    cons.push_back(cell(x.fo) * (packed - cell(x.pr)));
    b.cs.add_gate({name + ".decode", selo, cons});

    x.out.attrs = x.out_attrs;
    x.out.valid = x.fo;
    x.out.budget = x.no;
    return x;
}

namespace detail {

/// Multiset bookkeeping for intersect/union fills.
struct SetOpWitness {
    std::vector<std::vector<std::uint64_t>> inter_rows; // sorted intersection tuples
    std::vector<std::uint8_t> forig, gorig;             // marks rows feeding the intersection
    std::vector<std::size_t> r_rest, s_rest;            // leftover valid row indices (in order)
};

inline SetOpWitness intersect_witness(const TableData& d1, const TableData& d2) {
    SetOpWitness w;
    std::map<std::vector<std::uint64_t>, std::size_t> c1, c2;
    for (std::size_t i = 0; i < d1.budget(); ++i)
        if (d1.valid[i]) c1[d1.row_of(i)]++;
    for (std::size_t i = 0; i < d2.budget(); ++i)
        if (d2.valid[i]) c2[d2.row_of(i)]++;
    std::map<std::vector<std::uint64_t>, std::size_t> remaining1, remaining2;
    for (const auto& [k, n1] : c1) {
        auto it = c2.find(k);
        if (it == c2.end()) continue;
        std::size_t mn = std::min(n1, it->second);
        for (std::size_t t = 0; t < mn; ++t) w.inter_rows.push_back(k);
        remaining1[k] = mn;
        remaining2[k] = mn;
    }
    std::sort(w.inter_rows.begin(), w.inter_rows.end());
    w.forig.assign(d1.budget(), 0);
    w.gorig.assign(d2.budget(), 0);
    for (std::size_t i = 0; i < d1.budget(); ++i) {
        if (!d1.valid[i]) continue;
        auto it = remaining1.find(d1.row_of(i));
        if (it != remaining1.end() && it->second > 0) {
            w.forig[i] = 1;
            --it->second;
        } else {
            w.r_rest.push_back(i);
        }
    }
    for (std::size_t i = 0; i < d2.budget(); ++i) {
        if (!d2.valid[i]) continue;
        auto it = remaining2.find(d2.row_of(i));
        if (it != remaining2.end() && it->second > 0) {
            w.gorig[i] = 1;
            --it->second;
        } else {
            w.s_rest.push_back(i);
        }
    }
    return w;
}

} // namespace detail

inline TableData IntersectOp::fill_phase1(const ConstraintSystem& cs, Assignment& asg,
                                          const TableData& d1, const TableData& d2,
                                          PinList* pins) const {
    const std::size_t nr = r.budget, ns = s.budget, m = r.attrs.size();
    detail::SetOpWitness w = detail::intersect_witness(d1, d2);
    if (w.inter_rows.size() > no)
        fail(ErrorCode::BudgetExceeded, name + ": intersection exceeds output budget");

    std::vector<Fe> krv(nr, Fe::zero()), ksv(ns, Fe::zero());
    for (std::size_t i = 0; i < nr; ++i)
        if (d1.valid[i]) krv[i] = packed_row_key(d1, i);
    for (std::size_t i = 0; i < ns; ++i)
        if (d2.valid[i]) ksv[i] = packed_row_key(d2, i);
    set_col(cs, asg, kr, krv, pins);
    set_col(cs, asg, ks, ksv, pins);
    set_col(cs, asg, forig, fe_vec(w.forig), pins);
    set_col(cs, asg, gorig, fe_vec(w.gorig), pins);
    for (std::size_t i = 0; i < nr; ++i) {
        for (ColumnId c : r.attrs) pin(pins, c, i);
        pin(pins, r.valid, i);
    }
    for (std::size_t i = 0; i < ns; ++i) {
        for (ColumnId c : s.attrs) pin(pins, c, i);
        pin(pins, s.valid, i);
    }

    auto pack_tuple = [&](const std::vector<std::uint64_t>& t) {
        Fe k = Fe::zero();
        for (std::size_t jj = 0; jj < m; ++jj)
            k += Fe(t[jj]) * fe_pow2(unsigned(64 * (m - 1 - jj)));
        return k + Fe::one();
    };

    auto layout = [&](std::size_t n, const std::vector<std::size_t>& rest,
                      const std::vector<Fe>& kv, ColumnId pcol, ColumnId focol, ColumnId rvcol,
                      std::vector<Fe>& pvals, std::vector<std::uint8_t>& fovals,
                      std::vector<std::uint8_t>& rvvals) {
        pvals.assign(n, Fe::zero());
        fovals.assign(n, 0);
        rvvals.assign(n, 0);
        std::size_t i = 0;
        for (const auto& t : w.inter_rows) {
            pvals[i] = pack_tuple(t);
            fovals[i] = 1;
            rvvals[i] = 1;
            ++i;
        }
        for (std::size_t src : rest) {
            pvals[i] = kv[src];
            rvvals[i] = 1;
            ++i;
        }
        set_col(cs, asg, pcol, pvals, pins);
        set_col(cs, asg, focol, fe_vec(fovals), pins);
        set_col(cs, asg, rvcol, fe_vec(rvvals), pins);
    };
    std::vector<Fe> prv, psv;
    std::vector<std::uint8_t> fov, rvv, fsv, rsv;
    layout(nr, w.r_rest, krv, pr, fo, rv, prv, fov, rvv);
    layout(ns, w.s_rest, ksv, ps, fs, rs, psv, fsv, rsv);

    // leftover supports
    auto distinct_rest = [&](const std::vector<Fe>& pvals, const std::vector<std::uint8_t>& fovals,
                             const std::vector<std::uint8_t>& rvvals) {
        std::vector<Fe> out;
        std::set<std::string> seen;
        for (std::size_t i = 0; i < pvals.size(); ++i)
            if (rvvals[i] && !fovals[i] && seen.insert(pvals[i].to_dec()).second)
                out.push_back(pvals[i]);
        return out;
    };
    std::vector<Fe> rrest = distinct_rest(prv, fov, rvv), srest = distinct_rest(psv, fsv, rsv);
    auto fill_de = [&](ColumnId vc, ColumnId fc, const std::vector<Fe>& keys, std::size_t len) {
        std::vector<Fe> vals(len, Fe::zero()), flags(len, Fe::zero());
        for (std::size_t i = 0; i < keys.size(); ++i) {
            vals[i] = keys[i];
            flags[i] = Fe::one();
        }
        set_col(cs, asg, vc, vals, pins);
        set_col(cs, asg, fc, flags, pins);
    };
    fill_de(rde, rdef, rrest, nr);
    fill_de(sde, sdef, srest, ns);
    std::vector<Fe> concat(nr + ns, Fe::zero());
    std::vector<std::uint8_t> cflags(nr + ns, 0);
    for (std::size_t i = 0; i < rrest.size(); ++i) {
        concat[i] = rrest[i];
        cflags[i] = 1;
    }
    for (std::size_t i = 0; i < srest.size(); ++i) {
        concat[nr + i] = srest[i];
        cflags[nr + i] = 1;
    }
    dm.fill_phase1(cs, asg, concat, cflags, pins);

    // output
    TableData o;
    o.valid.assign(no, 0);
    o.cols.assign(m, std::vector<std::uint64_t>(no, 0));
    for (std::size_t i = 0; i < w.inter_rows.size(); ++i) {
        o.valid[i] = 1;
        for (std::size_t jj = 0; jj < m; ++jj) o.cols[jj][i] = w.inter_rows[i][jj];
    }
    for (std::size_t jj = 0; jj < m; ++jj) {
        std::vector<Fe> vals(no);
        for (std::size_t i = 0; i < no; ++i) vals[i] = Fe(o.cols[jj][i]);
        set_col(cs, asg, out_attrs[jj], vals, pins);
        out_decs[jj].fill(cs, asg, pins);
    }
    return o;
}

struct UnionOp {
    std::string name;
    IntersectOp inter;
    TableCols out;
    ColumnId c_v{}, c_rv{}, c_fs{}, ku{}, uv{};
    GrandProduct gpu;
    std::vector<ColumnId> out_attrs;
    std::vector<LimbDecomposition> out_decs;

    TableData fill_phase1(const ConstraintSystem& cs, Assignment& asg, const TableData& d1,
                          const TableData& d2, PinList* pins = nullptr) const;
    void fill_phase2(const ConstraintSystem& cs, Assignment& asg, PinList* pins = nullptr) const {
        inter.fill_phase2(cs, asg, pins);
        gpu.fill(cs, asg, pins);
    }
};

inline UnionOp build_union_op(CircuitBuilder& b, const TableCols& r, const TableCols& s,
                              const std::string& name) {
    UnionOp u;
    u.name = name;
    u.inter = build_intersect_op(b, r, s, name + ".inter");
    const std::size_t nr = r.budget, ns = s.budget, nu = nr + ns;
    const std::size_t m = r.attrs.size();
    b.note_region(nu + 1);

    u.c_v = b.advice(name + ".cv");
    u.c_rv = b.advice(name + ".crv");
    u.c_fs = b.advice(name + ".cfs");
    for (std::size_t i = 0; i < nr; ++i) {
        b.cs.add_copy(u.c_v, i, u.inter.kr, i);
        b.cs.add_copy(u.c_rv, i, r.valid, i);
    }
    ColumnId sel_r = b.selector(name + ".sel_r", 0, nr);
    b.cs.add_gate({name + ".cfs_zero", sel_r, {cell(u.c_fs)}});
    for (std::size_t i = 0; i < ns; ++i) {
        b.cs.add_copy(u.c_v, nr + i, u.inter.ps, i);
        b.cs.add_copy(u.c_rv, nr + i, u.inter.rs, i);
        b.cs.add_copy(u.c_fs, nr + i, u.inter.fs, i);
    }

    u.ku = b.advice(name + ".ku");
    u.uv = b.advice(name + ".uv");
    add_prefix_flag_gates(b, u.uv, nu, name + ".uv");
    ColumnId sel_u = b.selector(name + ".sel_u", 0, nu);
    b.cs.add_gate({name + ".ku_zero", sel_u, {(ec(1) - cell(u.uv)) * cell(u.ku)}});
    ExprPtr take = cell(u.c_rv) - cell(u.c_fs);
    u.gpu = build_grand_product(
        b, take * cell(u.c_v) * chal(b.gamma, 1) + take * chal(b.gamma, 2) + chal(b.alpha),
        row_fingerprint({cell(u.ku), cell(u.uv)}, b.gamma) + chal(b.alpha), nu, name + ".perm");

    std::vector<ExprPtr> cons;
    ExprPtr packed = ec(1);
    for (std::size_t j = 0; j < m; ++j) {
        ColumnId oc = b.advice(name + ".o" + std::to_string(j));
        u.out_attrs.push_back(oc);
        packed = packed + cell(oc) * ec(fe_pow2(unsigned(64 * (m - 1 - j))));
        cons.push_back((ec(1) - cell(u.uv)) * cell(oc));
        u.out_decs.push_back(build_limb_range_check(b, oc, nu, 8, name + ".orange" +
                                                                      std::to_string(j)));
    }
    cons.push_back(cell(u.uv) * (packed - cell(u.ku)));
    b.cs.add_gate({name + ".decode", sel_u, cons});

    u.out.attrs = u.out_attrs;
    u.out.valid = u.uv;
    u.out.budget = nu;
    return u;
}

inline TableData UnionOp::fill_phase1(const ConstraintSystem& cs, Assignment& asg,
                                      const TableData& d1, const TableData& d2,
                                      PinList* pins) const {
    const std::size_t nr = inter.r.budget, ns = inter.s.budget, nu = nr + ns;
    const std::size_t m = inter.r.attrs.size();
    inter.fill_phase1(cs, asg, d1, d2, pins);
    detail::SetOpWitness w = detail::intersect_witness(d1, d2);

    // union rows: all of R plus the leftover part of S
    std::vector<std::vector<std::uint64_t>> rows;
    for (std::size_t i = 0; i < d1.budget(); ++i)
        if (d1.valid[i]) rows.push_back(d1.row_of(i));
    for (std::size_t src : w.s_rest) rows.push_back(d2.row_of(src));
    if (rows.size() > nu) fail(ErrorCode::BudgetExceeded, name + ": union exceeds budget");

    // concat columns mirror their copy sources
    for (std::size_t i = 0; i < nr; ++i) {
        asg.set(cs, c_v, i, asg.at(cs, inter.kr, i));
        asg.set(cs, c_rv, i, asg.at(cs, inter.r.valid, i));
        asg.set(cs, c_fs, i, Fe::zero());
        pin(pins, c_v, i);
        pin(pins, c_rv, i);
        pin(pins, c_fs, i);
    }
    for (std::size_t i = 0; i < ns; ++i) {
        asg.set(cs, c_v, nr + i, asg.at(cs, inter.ps, i));
        asg.set(cs, c_rv, nr + i, asg.at(cs, inter.rs, i));
        asg.set(cs, c_fs, nr + i, asg.at(cs, inter.fs, i));
        pin(pins, c_v, nr + i);
        pin(pins, c_rv, nr + i);
        pin(pins, c_fs, nr + i);
    }

    TableData o;
    o.valid.assign(nu, 0);
    o.cols.assign(m, std::vector<std::uint64_t>(nu, 0));
    std::vector<Fe> kuv(nu, Fe::zero());
    std::vector<std::uint8_t> uvv(nu, 0);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        o.valid[i] = 1;
        Fe k = Fe::zero();
        for (std::size_t jj = 0; jj < m; ++jj) {
            o.cols[jj][i] = rows[i][jj];
            k += Fe(rows[i][jj]) * fe_pow2(unsigned(64 * (m - 1 - jj)));
        }
        kuv[i] = k + Fe::one();
        uvv[i] = 1;
    }
    set_col(cs, asg, ku, kuv, pins);
    set_col(cs, asg, uv, fe_vec(uvv), pins);
    for (std::size_t jj = 0; jj < m; ++jj) {
        std::vector<Fe> vals(nu);
        for (std::size_t i = 0; i < nu; ++i) vals[i] = Fe(o.cols[jj][i]);
        set_col(cs, asg, out_attrs[jj], vals, pins);
        out_decs[jj].fill(cs, asg, pins);
    }
    return o;
}

} // namespace zql
