#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "zql/constraint_system.hpp"

namespace zql {

struct CellRef {
    ColumnId col;
    std::size_t row = 0;
};

/// Cells whose honest value is pinned by the constraints: changing any of
/// them (holding the rest of the assignment fixed) must break at least one
/// constraint. The tamper harness samples from this list.
using PinList = std::vector<CellRef>;

inline void pin(PinList* pins, ColumnId col, std::size_t row) {
    if (pins) pins->push_back({col, row});
}

/// Analytic constraint-count expectation, matched against the actual
/// selector-active row counts by name prefix.
struct Expectation {
    std::string category;
    bool lookup = false;
    std::string prefix;
    std::size_t expected = 0;
};

struct ExpectationResult {
    Expectation expectation;
    std::size_t actual = 0;
    bool match = false;
};

/// Wraps a ConstraintSystem under construction: challenge slots, cached
/// tables, selector helpers, region tracking and count expectations.
class CircuitBuilder {
public:
    ConstraintSystem cs;
    int alpha, beta, gamma;

    CircuitBuilder() {
        alpha = cs.allocate_challenge();
        beta = cs.allocate_challenge();
        gamma = cs.allocate_challenge();
    }

    ColumnId advice(const std::string& name, int phase = 0) {
        return cs.declare_column(ColumnKind::Advice, name, phase);
    }

    ColumnId instance(const std::string& name) {
        return cs.declare_column(ColumnKind::Instance, name);
    }

    ColumnId fixed(const std::string& name, std::vector<Fe> values) {
        note_region(values.size());
        ColumnId id = cs.declare_column(ColumnKind::Fixed, name);
        cs.set_fixed(id, std::move(values));
        return id;
    }

    /// Fixed column with 1s on [begin, end).
    ColumnId selector(const std::string& name, std::size_t begin, std::size_t end) {
        std::vector<Fe> v(end, Fe::zero());
        for (std::size_t i = begin; i < end; ++i) v[i] = Fe::one();
        return fixed(name, std::move(v));
    }

    ColumnId selector_row(const std::string& name, std::size_t row) {
        return selector(name, row, row + 1);
    }

    /// Shared fixed column holding [0, 255]; rows past 255 hold 0, which is
    /// already a table member, so reuse across the circuit is safe.
    ColumnId u8_table() {
        if (!have_u8_) {
            std::vector<Fe> v(256);
            for (std::size_t i = 0; i < 256; ++i) v[i] = Fe(i);
            u8_table_ = fixed("tbl.u8", std::move(v));
            have_u8_ = true;
        }
        return u8_table_;
    }

    void note_region(std::size_t len) { max_region_ = std::max(max_region_, len); }

    void expect(const std::string& category, bool lookup, const std::string& prefix,
                std::size_t expected) {
        expectations_.push_back({category, lookup, prefix, expected});
    }

    const std::vector<Expectation>& expectations() const { return expectations_; }

    /// Pads the row count to a power of two strictly greater than the widest
    /// region (so every lookup table has at least one all-zero row) and
    /// freezes the system.
    void freeze() {
        std::size_t need = std::max<std::size_t>(max_region_ + 1, 257);
        std::size_t rows = 1;
        while (rows < need) rows <<= 1;
        cs.freeze(rows);
    }

private:
    bool have_u8_ = false;
    ColumnId u8_table_{};
    std::size_t max_region_ = 0;
    std::vector<Expectation> expectations_;
};

inline std::vector<ExpectationResult> evaluate_expectations(const CircuitBuilder& b) {
    ConstraintReport rep = count_constraints(b.cs);
    std::vector<ExpectationResult> out;
    for (const auto& e : b.expectations()) {
        ExpectationResult r;
        r.expectation = e;
        if (e.lookup) {
            r.actual = rep.lookup_rows_prefix(e.prefix);
        } else {
            for (const auto& g : rep.gates)
                if (g.name.rfind(e.prefix, 0) == 0) r.actual += g.active_rows;
        }
        r.match = r.actual == e.expected;
        out.push_back(std::move(r));
    }
    return out;
}

/// Random-linear-combination fingerprint of a row: sum of parts[j] * gamma^(j+1).
inline ExprPtr row_fingerprint(const std::vector<ExprPtr>& parts, int gamma_slot) {
    ExprPtr acc = ec(0);
    for (std::size_t j = 0; j < parts.size(); ++j)
        acc = acc + parts[j] * chal(gamma_slot, unsigned(j + 1));
    return acc;
}

inline Fe fingerprint_value(const std::vector<Fe>& parts, const Fe& gamma) {
    Fe acc = Fe::zero();
    Fe g = gamma;
    for (const Fe& p : parts) {
        acc += p * g;
        g *= gamma;
    }
    return acc;
}

// ---------------------------------------------------------------------------
// Sorted-permutation range-check argument: P' / Q' adjacency rule plus the
// grand-product permutation accumulator with boundary Z_0 = Z_len = 1.
// ---------------------------------------------------------------------------

struct PermutationArgument {
    std::string name;
    ColumnId p, q, p_prime, q_prime, z;
    ColumnId sel_first, sel_mid, sel_z, sel_end;
    std::size_t len = 0;   // max(|P|, |Q|) after padding
    std::size_t p_len = 0; // caller-visible P length before padding
    std::vector<Fe> q_values;

    /// Phase 1: place values into P, sort into P', align Q'.
    /// Throws WitnessInfeasible if some value is not in the table.
    void fill(const ConstraintSystem& cs, Assignment& asg, std::vector<Fe> values,
              PinList* pins = nullptr) const {
        if (values.size() != p_len)
            fail(ErrorCode::ShapeMismatch, name + ": expected " + std::to_string(p_len) + " values");
        values.resize(len, q_values.empty() ? Fe::zero() : q_values[0]); // pad with a value already present in the table
        std::vector<Fe> sorted = values;
        std::sort(sorted.begin(), sorted.end());

        // Q' alignment: a fresh value in P' consumes one copy from Q; leftover
        // Q values fill the duplicate rows in their original order.
        std::map<std::string, int> avail;
        for (const Fe& v : q_values) avail[v.to_dec()]++;
        std::vector<bool> placeholder(len, false);
        std::vector<Fe> q_prime_vals(len, Fe::zero());
        for (std::size_t i = 0; i < len; ++i) {
            if (i == 0 || sorted[i] != sorted[i - 1]) {
                auto it = avail.find(sorted[i].to_dec());
                if (it == avail.end() || it->second == 0)
                    fail(ErrorCode::WitnessInfeasible,
                         name + ": value " + sorted[i].to_dec() + " not in table");
                --it->second;
                q_prime_vals[i] = sorted[i];
            } else {
                placeholder[i] = true;
            }
        }
        std::vector<Fe> leftovers;
        {
            std::map<std::string, int> used = avail;
            for (const Fe& v : q_values) {
                auto it = used.find(v.to_dec());
                if (it != used.end() && it->second > 0) {
                    --it->second;
                    leftovers.push_back(v);
                }
            }
        }
        std::size_t li = 0;
        for (std::size_t i = 0; i < len; ++i)
            if (placeholder[i]) q_prime_vals[i] = leftovers[li++];

        for (std::size_t i = 0; i < len; ++i) {
            asg.set(cs, p, i, values[i]);
            asg.set(cs, p_prime, i, sorted[i]);
            asg.set(cs, q_prime, i, q_prime_vals[i]);
            pin(pins, p, i);
            pin(pins, p_prime, i);
            pin(pins, q_prime, i);
        }
    }

    /// Phase 2: grand-product accumulator, after alpha/beta are known.
    void fill_accumulator(const ConstraintSystem& cs, Assignment& asg,
                          PinList* pins = nullptr) const {
        const Fe a = asg.challenges()[0];
        const Fe b = asg.challenges()[1];
        Fe acc = Fe::one();
        asg.set(cs, z, 0, acc);
        pin(pins, z, 0);
        for (std::size_t i = 0; i < len; ++i) {
            Fe num = (asg.at(cs, p, i) + a) * (asg.at(cs, q, i) + b);
            Fe den = (asg.at(cs, p_prime, i) + a) * (asg.at(cs, q_prime, i) + b);
            if (den.is_zero())
                fail(ErrorCode::InternalInconsistency, name + ": challenge collision");
            acc = acc * num * den.inv();
            asg.set(cs, z, i + 1, acc);
            pin(pins, z, i + 1);
        }
    }
};

inline PermutationArgument build_permutation_argument(CircuitBuilder& b, std::size_t p_len,
                                                      std::vector<Fe> q_values,
                                                      const std::string& name) {
    PermutationArgument pa;
    pa.name = name;
    pa.p_len = p_len;
    pa.len = std::max(p_len, q_values.size());
    if (!q_values.empty())
        q_values.resize(pa.len, q_values.back()); // pad the table by duplicating its last entry
    pa.q_values = q_values;
    b.note_region(pa.len + 1);

    pa.p = b.advice(name + ".p");
    pa.p_prime = b.advice(name + ".p_prime");
    pa.q_prime = b.advice(name + ".q_prime");
    pa.z = b.advice(name + ".z", 1);
    pa.q = b.fixed(name + ".q", q_values);
    pa.sel_first = b.selector_row(name + ".sel_first", 0);
    pa.sel_mid = b.selector(name + ".sel_mid", 1, pa.len);
    pa.sel_z = b.selector(name + ".sel_z", 0, pa.len);
    pa.sel_end = b.selector_row(name + ".sel_end", pa.len);

    b.cs.add_gate({name + ".eq1_first", pa.sel_first, {cell(pa.p_prime) - cell(pa.q_prime)}});
    b.cs.add_gate({name + ".eq1_mid",
                   pa.sel_mid,
                   {(cell(pa.p_prime) - cell(pa.q_prime)) * (cell(pa.p_prime) - cell(pa.p_prime, -1))}});
    ExprPtr a = chal(b.alpha), bb = chal(b.beta);
    b.cs.add_gate({name + ".grand_product",
                   pa.sel_z,
                   {cell(pa.z, 1) * ((cell(pa.p_prime) + a) * (cell(pa.q_prime) + bb)) -
                    cell(pa.z) * ((cell(pa.p) + a) * (cell(pa.q) + bb))}});
    b.cs.add_gate({name + ".z_begin", pa.sel_first, {cell(pa.z) - ec(1)}});
    b.cs.add_gate({name + ".z_end", pa.sel_end, {cell(pa.z) - ec(1)}});

    b.expect(name + ".eq1", false, name + ".eq1", pa.len);
    return pa;
}

/// Batched range check of a value column against [0, t]: fixed table
/// column plus the sorted-permutation argument, with the caller's cells bound to
/// the gadget's P column by copy constraints.
inline PermutationArgument build_range_check_batch(CircuitBuilder& b, ColumnId values,
                                                   std::size_t n, std::uint64_t t,
                                                   const std::string& name) {
    std::vector<Fe> q;
    q.reserve(std::size_t(t) + 1);
    for (std::uint64_t i = 0; i <= t; ++i) q.push_back(Fe(i));
    PermutationArgument pa = build_permutation_argument(b, n, std::move(q), name);
    for (std::size_t i = 0; i < n; ++i) b.cs.add_copy(values, i, pa.p, i);
    return pa;
}

// ---------------------------------------------------------------------------
// u8 limb decomposition, generalized to k limbs.
// ---------------------------------------------------------------------------

struct LimbDecomposition {
    std::string name;
    ColumnId value;
    std::vector<ColumnId> limbs;
    ColumnId sel;
    std::size_t n = 0;
    int k = 8;

    /// Reads the already-filled value cells and fills the limb columns.
    void fill(const ConstraintSystem& cs, Assignment& asg, PinList* pins = nullptr) const {
        for (std::size_t r = 0; r < n; ++r) {
            Fe v = asg.at(cs, value, r);
            if (!v.fits_bits(unsigned(8 * k)))
                fail(ErrorCode::WitnessInfeasible,
                     name + ": value " + v.to_dec() + " exceeds " + std::to_string(8 * k) + " bits");
            std::uint8_t bytes[32];
            v.to_bytes_be(bytes);
            for (int j = 0; j < k; ++j) {
                asg.set(cs, limbs[std::size_t(j)], r, Fe(bytes[31 - j]));
                pin(pins, limbs[std::size_t(j)], r);
            }
        }
    }
};

inline LimbDecomposition build_limb_range_check(CircuitBuilder& b, ColumnId value_col,
                                                std::size_t n, int k, const std::string& name) {
    LimbDecomposition d;
    d.name = name;
    d.value = value_col;
    d.n = n;
    d.k = k;
    b.note_region(n);
    ColumnId table = b.u8_table();
    d.sel = b.selector(name + ".sel", 0, n);
    ExprPtr recomposed = ec(0);
    for (int j = 0; j < k; ++j) {
        ColumnId limb = b.advice(name + ".limb" + std::to_string(j));
        d.limbs.push_back(limb);
        recomposed = recomposed + cell(limb) * ec(fe_pow2(unsigned(8 * j)));
        b.cs.add_lookup({name + ".u8." + std::to_string(j), d.sel, {cell(limb)}, {table}});
    }
    b.cs.add_gate({name + ".decompose", d.sel, {cell(value_col) - recomposed}});
    b.expect(name + ".u8", true, name + ".u8.", n * std::size_t(k));
    b.expect(name + ".decompose", false, name + ".decompose", n);
    return d;
}

// ---------------------------------------------------------------------------
// Conditional less-than: 0 <= (x - t) + check*u < u.
// ---------------------------------------------------------------------------

struct LessThan {
    std::string name;
    ColumnId check, xmt, shifted;
    ColumnId sel;
    std::size_t n = 0;
    unsigned u_bits = 64;
    bool limb_path = true;
    LimbDecomposition dec; // limb path only
    Fe u;

    /// xs/ts are the integer values the x/t expressions evaluate to per row.
    void fill(const ConstraintSystem& cs, Assignment& asg, const std::vector<std::uint64_t>& xs,
              const std::vector<std::uint64_t>& ts, PinList* pins = nullptr) const {
        if (xs.size() != n || ts.size() != n)
            fail(ErrorCode::ShapeMismatch, name + ": value count mismatch");
        for (std::size_t r = 0; r < n; ++r) {
            bool lt = xs[r] < ts[r];
            Fe c = lt ? Fe::one() : Fe::zero();
            Fe diff = Fe(xs[r]) - Fe(ts[r]);
            Fe sh = diff + c * u;
            asg.set(cs, check, r, c);
            asg.set(cs, xmt, r, diff);
            asg.set(cs, shifted, r, sh);
            pin(pins, check, r);
            pin(pins, xmt, r);
            pin(pins, shifted, r);
        }
        if (limb_path) dec.fill(cs, asg, pins);
    }
};

/// x and t are row expressions (cells or constants) of degree <= 1. u = 2^u_bits;
/// a multiple of 8 selects the limb decomposition path, otherwise a fixed
/// lookup table of size 2^u_bits is used (small ranges only).
inline LessThan build_less_than(CircuitBuilder& b, ExprPtr x, ExprPtr t, std::size_t n,
                                unsigned u_bits, const std::string& name) {
    LessThan lt;
    lt.name = name;
    lt.n = n;
    lt.u_bits = u_bits;
    lt.u = fe_pow2(u_bits);
    b.note_region(n);
    lt.check = b.advice(name + ".check");
    lt.xmt = b.advice(name + ".xmt");
    lt.shifted = b.advice(name + ".shifted");
    lt.sel = b.selector(name + ".sel", 0, n);

    b.cs.add_gate({name + ".boolean", lt.sel, {cell(lt.check) * (ec(1) - cell(lt.check))}});
    b.cs.add_gate({name + ".linkage", lt.sel, {x - t - cell(lt.xmt)}});
    b.cs.add_gate({name + ".shift", lt.sel,
                   {cell(lt.shifted) - (cell(lt.xmt) + cell(lt.check) * ec(lt.u))}});
    b.expect(name + ".shift", false, name + ".shift", n);

    if (u_bits % 8 == 0) {
        lt.limb_path = true;
        lt.dec = build_limb_range_check(b, lt.shifted, n, int(u_bits / 8), name + ".range");
    } else {
        if (u_bits > 20) fail(ErrorCode::OutOfRange, "table range check too wide");
        lt.limb_path = false;
        std::vector<Fe> tbl;
        for (std::uint64_t i = 0; i < (1ULL << u_bits); ++i) tbl.push_back(Fe(i));
        ColumnId table = b.fixed(name + ".tbl", std::move(tbl));
        b.cs.add_lookup({name + ".range", lt.sel, {cell(lt.shifted)}, {table}});
    }
    return lt;
}

// ---------------------------------------------------------------------------
// is-zero gadget: b = 1 - (v1 - v2) * p and b * (v1 - v2) = 0.
// ---------------------------------------------------------------------------

struct IsZero {
    std::string name;
    ColumnId p, b; // b = 1 iff v1 == v2
    ColumnId sel;
    std::size_t n = 0;

    void fill(const ConstraintSystem& cs, Assignment& asg, const std::vector<Fe>& diffs,
              PinList* pins = nullptr) const {
        if (diffs.size() != n) fail(ErrorCode::ShapeMismatch, name + ": diff count mismatch");
        for (std::size_t r = 0; r < n; ++r) {
            if (diffs[r].is_zero()) {
                asg.set(cs, p, r, Fe::zero());
                asg.set(cs, b, r, Fe::one());
            } else {
                asg.set(cs, p, r, diffs[r].inv());
                asg.set(cs, b, r, Fe::zero());
                pin(pins, p, r); // p is only pinned when the difference is nonzero
            }
            pin(pins, b, r);
        }
    }
};

/// v1/v2 are row expressions of degree <= 1; active on [first, n).
inline IsZero build_is_zero(CircuitBuilder& bld, ExprPtr v1, ExprPtr v2, std::size_t first,
                            std::size_t n, const std::string& name, int phase = 0) {
    IsZero g;
    g.name = name;
    g.n = n;
    bld.note_region(n);
    g.p = bld.advice(name + ".p", phase);
    g.b = bld.advice(name + ".b", phase);
    g.sel = bld.selector(name + ".sel", first, n);
    ExprPtr diff = v1 - v2;
    bld.cs.add_gate({name + ".value", g.sel, {cell(g.b) - (ec(1) - diff * cell(g.p))}});
    bld.cs.add_gate({name + ".product", g.sel, {cell(g.b) * diff}});
    bld.expect(name, false, name + ".", 2 * (n - first));
    return g;
}

// ---------------------------------------------------------------------------
// Running accumulator with reset flags: M_i = reset*v + (1-reset)*(M_{i-1}+v).
// ---------------------------------------------------------------------------

struct RunningAccumulator {
    std::string name;
    ColumnId m;
    ColumnId sel_first, sel_mid;
    std::size_t n = 0;

    void fill(const ConstraintSystem& cs, Assignment& asg, const std::vector<Fe>& values,
              const std::vector<bool>& resets, PinList* pins = nullptr) const {
        if (values.size() != n || resets.size() != n)
            fail(ErrorCode::ShapeMismatch, name + ": length mismatch");
        Fe acc = Fe::zero();
        for (std::size_t r = 0; r < n; ++r) {
            acc = (r == 0 || resets[r]) ? values[r] : acc + values[r];
            asg.set(cs, m, r, acc);
            pin(pins, m, r);
        }
    }
};

/// value degree <= 2, reset degree <= 1. The first active row always resets.
inline RunningAccumulator build_running_accumulator(CircuitBuilder& b, ExprPtr value,
                                                    ExprPtr reset, std::size_t n,
                                                    const std::string& name, int phase = 0) {
    RunningAccumulator ra;
    ra.name = name;
    ra.n = n;
    b.note_region(n);
    ra.m = b.advice(name + ".m", phase);
    ra.sel_first = b.selector_row(name + ".sel_first", 0);
    ra.sel_mid = b.selector(name + ".sel_mid", 1, n);
    b.cs.add_gate({name + ".first", ra.sel_first, {cell(ra.m) - value}});
    b.cs.add_gate({name + ".step", ra.sel_mid,
                   {cell(ra.m) - (reset * value + (ec(1) - reset) * (cell(ra.m, -1) + value))}});
    return ra;
}

// ---------------------------------------------------------------------------
// Grand-product multiset equality over arbitrary row terms:
// Z_{i+1} * rhs_i = Z_i * lhs_i with Z_0 = Z_len = 1.
// ---------------------------------------------------------------------------

struct GrandProduct {
    std::string name;
    ColumnId z;
    ExprPtr lhs, rhs;
    std::size_t len = 0;

    /// Phase 2: evaluates the stored terms directly against the assignment.
    void fill(const ConstraintSystem& cs, Assignment& asg, PinList* pins = nullptr) const {
        Fe acc = Fe::one();
        asg.set(cs, z, 0, acc);
        pin(pins, z, 0);
        for (std::size_t i = 0; i < len; ++i) {
            Fe num = eval_expr(*lhs, cs, asg, i);
            Fe den = eval_expr(*rhs, cs, asg, i);
            if (den.is_zero())
                fail(ErrorCode::InternalInconsistency, name + ": challenge collision");
            acc = acc * num * den.inv();
            asg.set(cs, z, i + 1, acc);
            pin(pins, z, i + 1);
        }
        if (acc != Fe::one())
            fail(ErrorCode::WitnessInfeasible, name + ": multisets differ");
    }
};

/// lhs/rhs degree <= 2 (so the cleared form stays within the degree cap).
inline GrandProduct build_grand_product(CircuitBuilder& b, ExprPtr lhs, ExprPtr rhs,
                                        std::size_t len, const std::string& name) {
    GrandProduct gp;
    gp.name = name;
    gp.lhs = lhs;
    gp.rhs = rhs;
    gp.len = len;
    b.note_region(len + 1);
    gp.z = b.advice(name + ".z", 1);
    ColumnId sel = b.selector(name + ".sel", 0, len);
    ColumnId sel_first = b.selector_row(name + ".sel_first", 0);
    ColumnId sel_end = b.selector_row(name + ".sel_end", len);
    b.cs.add_gate({name + ".step", sel, {cell(gp.z, 1) * rhs - cell(gp.z) * lhs}});
    b.cs.add_gate({name + ".z_begin", sel_first, {cell(gp.z) - ec(1)}});
    b.cs.add_gate({name + ".z_end", sel_end, {cell(gp.z) - ec(1)}});
    return gp;
}

// ---------------------------------------------------------------------------
// Masked range membership: w = mask * value with w constrained to [0, 2^(8k)).
// Used for conditional bounds (adjacent sortedness, remainder < count).
// ---------------------------------------------------------------------------

struct MaskedRange {
    std::string name;
    ColumnId w;
    LimbDecomposition dec;
    ColumnId sel;
    std::size_t first = 0, n = 0;

    void fill(const ConstraintSystem& cs, Assignment& asg, const std::vector<Fe>& w_values,
              PinList* pins = nullptr) const {
        if (w_values.size() != n) fail(ErrorCode::ShapeMismatch, name + ": length mismatch");
        for (std::size_t r = first; r < n; ++r) {
            asg.set(cs, w, r, w_values[r]);
            pin(pins, w, r);
        }
        dec.fill(cs, asg, pins);
    }
};

/// mask degree <= 2, value degree <= 1; active rows [first, n).
inline MaskedRange build_masked_range(CircuitBuilder& b, ExprPtr mask, ExprPtr value,
                                      std::size_t first, std::size_t n, int k,
                                      const std::string& name) {
    MaskedRange mr;
    mr.name = name;
    mr.first = first;
    mr.n = n;
    b.note_region(n);
    mr.w = b.advice(name + ".w");
    mr.sel = b.selector(name + ".sel", first, n);
    b.cs.add_gate({name + ".mask", mr.sel, {cell(mr.w) - mask * value}});
    mr.dec = build_limb_range_check(b, mr.w, n, k, name + ".range");
    return mr;
}

/// Boolean gate on a column over [first, n).
inline void add_boolean_gate(CircuitBuilder& b, ColumnId col, std::size_t first, std::size_t n,
                             const std::string& name) {
    ColumnId sel = b.selector(name + ".sel", first, n);
    b.cs.add_gate({name, sel, {cell(col) * (ec(1) - cell(col))}});
}

/// Forces a boolean column to be a prefix of ones: boolean everywhere plus
/// monotone non-increase between adjacent rows.
inline void add_prefix_flag_gates(CircuitBuilder& b, ColumnId col, std::size_t n,
                                  const std::string& name) {
    add_boolean_gate(b, col, 0, n, name + ".boolean");
    if (n >= 2) {
        ColumnId sel = b.selector(name + ".mono.sel", 0, n - 1);
        ExprPtr step = cell(col) - cell(col, 1);
        b.cs.add_gate({name + ".mono", sel, {step * (ec(1) - step)}});
    }
}

} // namespace zql
