#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "zql/errors.hpp"
#include "zql/field.hpp"
#include "zql/transcript.hpp"

namespace zql {

enum class ColumnKind { Fixed, Advice, Instance };

inline const char* column_kind_name(ColumnKind k) {
    switch (k) {
        case ColumnKind::Fixed: return "fixed";
        case ColumnKind::Advice: return "advice";
        case ColumnKind::Instance: return "instance";
    }
    return "?";
}

struct ColumnId {
    ColumnKind kind = ColumnKind::Advice;
    int index = -1;

    bool operator==(const ColumnId& o) const { return kind == o.kind && index == o.index; }
    bool operator!=(const ColumnId& o) const { return !(*this == o); }
    bool operator<(const ColumnId& o) const {
        if (kind != o.kind) return int(kind) < int(o.kind);
        return index < o.index;
    }
};

/// Polynomial expression tree. Degree counts Cell factors only; challenge
/// placeholders are scalars resolved from the assignment at evaluation time.
class Expr;
using ExprPtr = std::shared_ptr<const Expr>;

class Expr {
public:
    enum class Kind { Constant, Cell, Challenge, Sum, Product, Negate };

    Kind kind;
    Fe constant;        // Constant
    ColumnId col;       // Cell
    int rotation = 0;   // Cell, in {-1, 0, 1}
    int slot = 0;       // Challenge
    unsigned power = 1; // Challenge
    ExprPtr a, b;
    int degree = 0;

    static ExprPtr make_const(const Fe& v) {
        auto e = std::make_shared<Expr>();
        e->kind = Kind::Constant;
        e->constant = v;
        return e;
    }
    static ExprPtr make_cell(ColumnId c, int rot = 0) {
        if (rot < -1 || rot > 1) fail(ErrorCode::OutOfRange, "rotation out of {-1,0,1}");
        auto e = std::make_shared<Expr>();
        e->kind = Kind::Cell;
        e->col = c;
        e->rotation = rot;
        e->degree = 1;
        return e;
    }
    static ExprPtr make_challenge(int slot, unsigned power = 1) {
        auto e = std::make_shared<Expr>();
        e->kind = Kind::Challenge;
        e->slot = slot;
        e->power = power;
        return e;
    }
    static ExprPtr make_sum(ExprPtr a, ExprPtr b) {
        auto e = std::make_shared<Expr>();
        e->kind = Kind::Sum;
        e->a = std::move(a);
        e->b = std::move(b);
        e->degree = std::max(e->a->degree, e->b->degree);
        return e;
    }
    static ExprPtr make_product(ExprPtr a, ExprPtr b) {
        auto e = std::make_shared<Expr>();
        e->kind = Kind::Product;
        e->a = std::move(a);
        e->b = std::move(b);
        e->degree = e->a->degree + e->b->degree;
        return e;
    }
    static ExprPtr make_negate(ExprPtr a) {
        auto e = std::make_shared<Expr>();
        e->kind = Kind::Negate;
        e->a = std::move(a);
        e->degree = e->a->degree;
        return e;
    }

    std::string to_sexpr() const {
        switch (kind) {
            case Kind::Constant: return "(const " + constant.to_dec() + ")";
            case Kind::Cell:
                return std::string("(cell ") + column_kind_name(col.kind) + " " +
                       std::to_string(col.index) + " " + std::to_string(rotation) + ")";
            case Kind::Challenge:
                return "(chal " + std::to_string(slot) + " " + std::to_string(power) + ")";
            case Kind::Sum: return "(+ " + a->to_sexpr() + " " + b->to_sexpr() + ")";
            case Kind::Product: return "(* " + a->to_sexpr() + " " + b->to_sexpr() + ")";
            case Kind::Negate: return "(- " + a->to_sexpr() + ")";
        }
        return "?";
    }
};

inline ExprPtr ec(const Fe& v) { return Expr::make_const(v); }
inline ExprPtr ec(std::uint64_t v) { return Expr::make_const(Fe(v)); }
inline ExprPtr cell(ColumnId c, int rot = 0) { return Expr::make_cell(c, rot); }
inline ExprPtr chal(int slot, unsigned power = 1) { return Expr::make_challenge(slot, power); }
inline ExprPtr operator+(ExprPtr a, ExprPtr b) { return Expr::make_sum(std::move(a), std::move(b)); }
inline ExprPtr operator*(ExprPtr a, ExprPtr b) { return Expr::make_product(std::move(a), std::move(b)); }
inline ExprPtr operator-(ExprPtr a) { return Expr::make_negate(std::move(a)); }
inline ExprPtr operator-(ExprPtr a, ExprPtr b) {
    return Expr::make_sum(std::move(a), Expr::make_negate(std::move(b)));
}

struct Gate {
    std::string name;
    ColumnId selector; // Fixed, values in {0,1}
    std::vector<ExprPtr> constraints;
};

struct CopyConstraint {
    ColumnId left;
    std::size_t left_row = 0;
    ColumnId right;
    std::size_t right_row = 0;
};

struct LookupArgument {
    std::string name;
    ColumnId selector; // Fixed; rows where the input tuple must appear in the table
    std::vector<ExprPtr> inputs;
    std::vector<ColumnId> table;
};

struct ColumnInfo {
    ColumnId id;
    int phase = 0;    // Advice only: 0 absorbed before challenges, 1 after
    std::string name; // diagnostic label
};

class Assignment;

/// Circuit shape: column declarations, gates, copy constraints, lookups and
/// the contents of Fixed columns. Immutable once frozen.
class ConstraintSystem {
public:
    static constexpr int kMaxDegree = 3;

    ColumnId declare_column(ColumnKind kind, const std::string& name = "", int phase = 0) {
        if (frozen_) fail(ErrorCode::FrozenSystem, "declare_column after freeze");
        int idx = kind_counts_[int(kind)]++;
        ColumnId id{kind, idx};
        columns_.push_back(ColumnInfo{id, kind == ColumnKind::Advice ? phase : 0, name});
        if (kind == ColumnKind::Fixed) fixed_values_.emplace_back();
        return id;
    }

    /// Sets the contents of a fixed column; shorter vectors are zero-padded
    /// to the final row count at freeze time.
    void set_fixed(ColumnId id, std::vector<Fe> values) {
        if (frozen_) fail(ErrorCode::FrozenSystem, "set_fixed after freeze");
        require_known(id);
        if (id.kind != ColumnKind::Fixed) fail(ErrorCode::UnknownColumn, "set_fixed on non-fixed column");
        fixed_values_[std::size_t(id.index)] = std::move(values);
    }

    int add_gate(Gate g) {
        if (frozen_) fail(ErrorCode::FrozenSystem, "add_gate after freeze");
        require_known(g.selector);
        if (g.selector.kind != ColumnKind::Fixed)
            fail(ErrorCode::UnknownColumn, "gate selector must be a fixed column");
        for (const auto& c : g.constraints) {
            if (c->degree > kMaxDegree)
                fail(ErrorCode::DegreeTooHigh, "gate '" + g.name + "' constraint degree " +
                                                   std::to_string(c->degree));
            validate_expr(*c);
        }
        gates_.push_back(std::move(g));
        return int(gates_.size()) - 1;
    }

    int add_lookup(LookupArgument l) {
        if (frozen_) fail(ErrorCode::FrozenSystem, "add_lookup after freeze");
        require_known(l.selector);
        for (const auto& e : l.inputs) validate_expr(*e);
        for (const auto& c : l.table) require_known(c);
        if (l.inputs.size() != l.table.size())
            fail(ErrorCode::ShapeMismatch, "lookup input/table arity mismatch");
        lookups_.push_back(std::move(l));
        return int(lookups_.size()) - 1;
    }

    void add_copy(ColumnId a, std::size_t ra, ColumnId b, std::size_t rb) {
        if (frozen_) fail(ErrorCode::FrozenSystem, "add_copy after freeze");
        require_known(a);
        require_known(b);
        copies_.push_back(CopyConstraint{a, ra, b, rb});
    }

    int allocate_challenge() {
        if (frozen_) fail(ErrorCode::FrozenSystem, "allocate_challenge after freeze");
        return challenge_count_++;
    }

    void freeze(std::size_t row_count) {
        if (frozen_) fail(ErrorCode::FrozenSystem, "freeze twice");
        if (row_count == 0) fail(ErrorCode::ShapeMismatch, "row_count must be positive");
        row_count_ = row_count;
        for (auto& col : fixed_values_) {
            if (col.size() > row_count_)
                fail(ErrorCode::ShapeMismatch, "fixed column longer than row count");
            col.resize(row_count_, Fe::zero());
        }
        for (const auto& c : copies_)
            if (c.left_row >= row_count_ || c.right_row >= row_count_)
                fail(ErrorCode::ShapeMismatch, "copy constraint row out of range");
        frozen_ = true;
    }

    bool frozen() const { return frozen_; }
    std::size_t row_count() const { return row_count_; }
    int challenge_count() const { return challenge_count_; }
    const std::vector<ColumnInfo>& columns() const { return columns_; }
    const std::vector<Gate>& gates() const { return gates_; }
    const std::vector<LookupArgument>& lookups() const { return lookups_; }
    const std::vector<CopyConstraint>& copies() const { return copies_; }

    int count(ColumnKind k) const { return kind_counts_[int(k)]; }

    const std::vector<Fe>& fixed_column(ColumnId id) const {
        require_known(id);
        return fixed_values_[std::size_t(id.index)];
    }

    /// Flat index over all declared columns, in (kind, index) order:
    /// fixed, then advice, then instance.
    std::size_t flat_index(ColumnId id) const {
        require_known(id);
        switch (id.kind) {
            case ColumnKind::Fixed: return std::size_t(id.index);
            case ColumnKind::Advice:
                return std::size_t(kind_counts_[0]) + std::size_t(id.index);
            case ColumnKind::Instance:
                return std::size_t(kind_counts_[0] + kind_counts_[1]) + std::size_t(id.index);
        }
        fail(ErrorCode::UnknownColumn, "bad column kind");
    }

    std::size_t total_columns() const {
        return std::size_t(kind_counts_[0] + kind_counts_[1] + kind_counts_[2]);
    }

    ColumnId column_at_flat(std::size_t flat) const {
        int nf = kind_counts_[0], na = kind_counts_[1];
        if (flat < std::size_t(nf)) return ColumnId{ColumnKind::Fixed, int(flat)};
        if (flat < std::size_t(nf + na)) return ColumnId{ColumnKind::Advice, int(flat) - nf};
        return ColumnId{ColumnKind::Instance, int(flat) - nf - na};
    }

    const ColumnInfo& info(ColumnId id) const {
        for (const auto& ci : columns_)
            if (ci.id == id) return ci;
        fail(ErrorCode::UnknownColumn, "column not declared");
    }

private:
    void require_known(ColumnId id) const {
        if (id.index < 0 || id.index >= kind_counts_[int(id.kind)])
            fail(ErrorCode::UnknownColumn, std::string(column_kind_name(id.kind)) + "[" +
                                               std::to_string(id.index) + "]");
    }

    void validate_expr(const Expr& e) const {
        switch (e.kind) {
            case Expr::Kind::Cell: require_known(e.col); break;
            case Expr::Kind::Challenge:
                if (e.slot < 0 || e.slot >= challenge_count_)
                    fail(ErrorCode::OutOfRange, "challenge slot not allocated");
                break;
            case Expr::Kind::Sum:
            case Expr::Kind::Product:
                validate_expr(*e.a);
                validate_expr(*e.b);
                break;
            case Expr::Kind::Negate: validate_expr(*e.a); break;
            case Expr::Kind::Constant: break;
        }
    }

    bool frozen_ = false;
    std::size_t row_count_ = 0;
    int kind_counts_[3] = {0, 0, 0};
    int challenge_count_ = 0;
    std::vector<ColumnInfo> columns_;
    std::vector<std::vector<Fe>> fixed_values_;
    std::vector<Gate> gates_;
    std::vector<LookupArgument> lookups_;
    std::vector<CopyConstraint> copies_;
};

/// The rectangular matrix of values filling every declared column, plus the
/// resolved challenge values the gates reference.
class Assignment {
public:
    Assignment() = default;

    explicit Assignment(const ConstraintSystem& cs)
        : row_count_(cs.row_count()), challenges_(std::size_t(cs.challenge_count()), Fe::zero()) {
        if (!cs.frozen()) fail(ErrorCode::FrozenSystem, "assignment needs a frozen system");
        cells_.assign(cs.total_columns(), std::vector<Fe>(row_count_, Fe::zero()));
        for (int i = 0; i < cs.count(ColumnKind::Fixed); ++i) {
            ColumnId id{ColumnKind::Fixed, i};
            cells_[cs.flat_index(id)] = cs.fixed_column(id);
        }
    }

    std::size_t row_count() const { return row_count_; }
    std::size_t column_count() const { return cells_.size(); }

    const Fe& at(const ConstraintSystem& cs, ColumnId col, std::size_t row) const {
        return cells_[cs.flat_index(col)][row];
    }
    void set(const ConstraintSystem& cs, ColumnId col, std::size_t row, const Fe& v) {
        if (row >= row_count_) fail(ErrorCode::OutOfRange, "row out of range");
        cells_[cs.flat_index(col)][row] = v;
    }

    const std::vector<Fe>& column(const ConstraintSystem& cs, ColumnId col) const {
        return cells_[cs.flat_index(col)];
    }

    const std::vector<std::vector<Fe>>& raw_cells() const { return cells_; }
    std::vector<std::vector<Fe>>& raw_cells() { return cells_; }

    const std::vector<Fe>& challenges() const { return challenges_; }
    std::vector<Fe>& challenges() { return challenges_; }

    /// SHA-256 of a column's canonical byte encoding; used as the desk-scale
    /// stand-in for a polynomial commitment.
    std::array<std::uint8_t, 32> column_hash(const ConstraintSystem& cs, ColumnId col) const {
        const auto& c = cells_[cs.flat_index(col)];
        std::vector<std::uint8_t> buf;
        buf.reserve(c.size() * 32);
        std::uint8_t tmp[32];
        for (const Fe& v : c) {
            v.to_bytes_be(tmp);
            buf.insert(buf.end(), tmp, tmp + 32);
        }
        return sha256(buf);
    }

private:
    std::size_t row_count_ = 0;
    std::vector<std::vector<Fe>> cells_;
    std::vector<Fe> challenges_;
};

struct Failure {
    enum class Kind { Gate, Lookup, Copy, Fixed };
    Kind kind;
    std::string name;
    int index = 0; // gate/lookup index, or constraint index within a gate
    std::size_t row = 0;

    bool operator<(const Failure& o) const {
        if (kind != o.kind) return int(kind) < int(o.kind);
        if (index != o.index) return index < o.index;
        return row < o.row;
    }
};

struct Verdict {
    bool ok = true;
    std::vector<Failure> failures;
};

inline Fe eval_expr(const Expr& e, const ConstraintSystem& cs, const Assignment& asg,
                    std::size_t row) {
    switch (e.kind) {
        case Expr::Kind::Constant: return e.constant;
        case Expr::Kind::Cell: {
            std::size_t n = asg.row_count();
            std::size_t r = (row + std::size_t(n) + std::size_t(std::intptr_t(e.rotation))) % n;
            return asg.at(cs, e.col, r);
        }
        case Expr::Kind::Challenge: {
            Fe c = asg.challenges()[std::size_t(e.slot)];
            Fe r = Fe::one();
            for (unsigned i = 0; i < e.power; ++i) r *= c;
            return r;
        }
        case Expr::Kind::Sum:
            return eval_expr(*e.a, cs, asg, row) + eval_expr(*e.b, cs, asg, row);
        case Expr::Kind::Product: {
            Fe av = eval_expr(*e.a, cs, asg, row);
            if (av.is_zero()) return Fe::zero();
            return av * eval_expr(*e.b, cs, asg, row);
        }
        case Expr::Kind::Negate: return -eval_expr(*e.a, cs, asg, row);
    }
    return Fe::zero();
}

/// The mock-prover core: evaluates every gate at every selector-active row,
/// every copy constraint, and every lookup argument. Failures are reported
/// sorted by (kind, id, row) so the verdict is order-independent.
inline Verdict check_satisfied(const ConstraintSystem& cs, const Assignment& asg) {
    if (!cs.frozen()) fail(ErrorCode::FrozenSystem, "check on unfrozen system");
    if (asg.row_count() != cs.row_count() || asg.column_count() != cs.total_columns() ||
        asg.challenges().size() != std::size_t(cs.challenge_count()))
        fail(ErrorCode::ShapeMismatch, "assignment dimensions disagree with declarations");

    Verdict v;
    const std::size_t n = cs.row_count();

    // Fixed columns must match the circuit definition.
    for (int i = 0; i < cs.count(ColumnKind::Fixed); ++i) {
        ColumnId id{ColumnKind::Fixed, i};
        const auto& want = cs.fixed_column(id);
        const auto& got = asg.column(cs, id);
        for (std::size_t r = 0; r < n; ++r)
            if (want[r] != got[r]) v.failures.push_back({Failure::Kind::Fixed, "fixed", i, r});
    }

    for (std::size_t gi = 0; gi < cs.gates().size(); ++gi) {
        const Gate& g = cs.gates()[gi];
        const auto& sel = asg.column(cs, g.selector);
        for (std::size_t r = 0; r < n; ++r) {
            if (sel[r].is_zero()) continue;
            for (std::size_t ci = 0; ci < g.constraints.size(); ++ci) {
                if (!eval_expr(*g.constraints[ci], cs, asg, r).is_zero())
                    v.failures.push_back({Failure::Kind::Gate, g.name + "#" + std::to_string(ci),
                                          int(gi * 64 + ci), r});
            }
        }
    }

    for (std::size_t li = 0; li < cs.lookups().size(); ++li) {
        const LookupArgument& l = cs.lookups()[li];
        const auto& sel = asg.column(cs, l.selector);
        std::unordered_set<std::string> table;
        for (std::size_t r = 0; r < n; ++r) {
            std::string key;
            key.reserve(l.table.size() * 32);
            std::uint8_t tmp[32];
            for (ColumnId tc : l.table) {
                asg.at(cs, tc, r).to_bytes_be(tmp);
                key.append(reinterpret_cast<char*>(tmp), 32);
            }
            table.insert(std::move(key));
        }
        for (std::size_t r = 0; r < n; ++r) {
            if (sel[r].is_zero()) continue;
            std::string key;
            key.reserve(l.inputs.size() * 32);
            std::uint8_t tmp[32];
            for (const auto& in : l.inputs) {
                eval_expr(*in, cs, asg, r).to_bytes_be(tmp);
                key.append(reinterpret_cast<char*>(tmp), 32);
            }
            if (!table.count(key))
                v.failures.push_back({Failure::Kind::Lookup, l.name, int(li), r});
        }
    }

    for (std::size_t ci = 0; ci < cs.copies().size(); ++ci) {
        const CopyConstraint& c = cs.copies()[ci];
        if (asg.at(cs, c.left, c.left_row) != asg.at(cs, c.right, c.right_row))
            v.failures.push_back({Failure::Kind::Copy, "copy", int(ci), c.left_row});
    }

    std::sort(v.failures.begin(), v.failures.end());
    v.ok = v.failures.empty();
    return v;
}

/// Structural digest: a function of circuit shape and public (fixed) data
/// only. Advice and instance values never enter it.
struct ShapeDigest {
    int fixed_columns = 0;
    int advice_columns = 0;
    int instance_columns = 0;
    std::size_t row_count = 0;
    std::vector<std::pair<std::string, int>> gates; // name, constraint count
    int lookup_count = 0;
    int copy_count = 0;
    int challenge_count = 0;
    std::string fixed_hash; // hex

    std::string combined_hex() const {
        std::vector<std::uint8_t> buf;
        auto put = [&](std::uint64_t x) {
            for (int i = 7; i >= 0; --i) buf.push_back(std::uint8_t(x >> (8 * i)));
        };
        put(std::uint64_t(fixed_columns));
        put(std::uint64_t(advice_columns));
        put(std::uint64_t(instance_columns));
        put(row_count);
        put(gates.size());
        for (const auto& [name, cnt] : gates) {
            put(name.size());
            buf.insert(buf.end(), name.begin(), name.end());
            put(std::uint64_t(cnt));
        }
        put(std::uint64_t(lookup_count));
        put(std::uint64_t(copy_count));
        put(std::uint64_t(challenge_count));
        buf.insert(buf.end(), fixed_hash.begin(), fixed_hash.end());
        auto d = sha256(buf);
        return hex_encode(d.data(), d.size());
    }

    bool operator==(const ShapeDigest& o) const { return combined_hex() == o.combined_hex(); }
    bool operator!=(const ShapeDigest& o) const { return !(*this == o); }
};

inline ShapeDigest shape_digest(const ConstraintSystem& cs) {
    ShapeDigest d;
    d.fixed_columns = cs.count(ColumnKind::Fixed);
    d.advice_columns = cs.count(ColumnKind::Advice);
    d.instance_columns = cs.count(ColumnKind::Instance);
    d.row_count = cs.row_count();
    for (const auto& g : cs.gates()) d.gates.emplace_back(g.name, int(g.constraints.size()));
    d.lookup_count = int(cs.lookups().size());
    d.copy_count = int(cs.copies().size());
    d.challenge_count = cs.challenge_count();

    std::vector<std::uint8_t> buf;
    std::uint8_t tmp[32];
    for (int i = 0; i < d.fixed_columns; ++i) {
        for (const Fe& v : cs.fixed_column(ColumnId{ColumnKind::Fixed, i})) {
            v.to_bytes_be(tmp);
            buf.insert(buf.end(), tmp, tmp + 32);
        }
    }
    auto h = sha256(buf);
    d.fixed_hash = hex_encode(h.data(), h.size());
    return d;
}

inline ShapeDigest shape_digest(const ConstraintSystem& cs, const Assignment& asg) {
    if (asg.row_count() != cs.row_count())
        fail(ErrorCode::ShapeMismatch, "digest: assignment row count mismatch");
    return shape_digest(cs);
}

struct GateCount {
    std::string name;
    std::size_t active_rows = 0;     // rows where the selector is 1
    std::size_t constraint_rows = 0; // active_rows * constraints in the gate
};

struct LookupCount {
    std::string name;
    std::size_t active_rows = 0;
};

struct ConstraintReport {
    std::vector<GateCount> gates;
    std::vector<LookupCount> lookups;
    std::size_t copy_count = 0;

    std::size_t gate_rows(const std::string& name) const {
        std::size_t total = 0;
        for (const auto& g : gates)
            if (g.name == name) total += g.active_rows;
        return total;
    }
    std::size_t lookup_rows_prefix(const std::string& prefix) const {
        std::size_t total = 0;
        for (const auto& l : lookups)
            if (l.name.rfind(prefix, 0) == 0) total += l.active_rows;
        return total;
    }
};

inline ConstraintReport count_constraints(const ConstraintSystem& cs) {
    ConstraintReport rep;
    for (const auto& g : cs.gates()) {
        GateCount gc;
        gc.name = g.name;
        for (const Fe& s : cs.fixed_column(g.selector))
            if (!s.is_zero()) ++gc.active_rows;
        gc.constraint_rows = gc.active_rows * g.constraints.size();
        rep.gates.push_back(std::move(gc));
    }
    for (const auto& l : cs.lookups()) {
        LookupCount lc;
        lc.name = l.name;
        for (const Fe& s : cs.fixed_column(l.selector))
            if (!s.is_zero()) ++lc.active_rows;
        rep.lookups.push_back(std::move(lc));
    }
    rep.copy_count = cs.copies().size();
    return rep;
}

} // namespace zql
