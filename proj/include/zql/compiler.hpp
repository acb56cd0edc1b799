#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "zql/plan.hpp"
#include "zql/relation.hpp"
#include "zql/sql_gates.hpp"

namespace zql {

/// Per-table circuit row budgets. The compiled circuit shape depends only on
/// the plan, the schema and these budgets — never on table contents.
struct Budgets {
    std::map<std::string, std::size_t> per_table;
    std::size_t fallback = 16;

    std::size_t of(const std::string& table) const {
        auto it = per_table.find(table);
        return it != per_table.end() ? it->second : fallback;
    }
};

/// One pipeline stage of a compiled query; exactly one member is populated
/// (Project carries only a column-index view, no gates).
struct CompiledStep {
    PlanStep::Kind kind = PlanStep::Kind::Scan;
    std::string table; // Scan
    std::shared_ptr<ScanGate> scan;
    std::shared_ptr<FilterGate> filter;
    std::shared_ptr<SortGate> sort;
    std::shared_ptr<GroupByGate> group;
    std::shared_ptr<JoinGate> join;
    std::shared_ptr<IntersectOp> inter;
    std::shared_ptr<UnionOp> uni;
    std::vector<std::size_t> view; // Project
};

/// A query blueprint: the constraint system plus the fill recipe. Built from
/// (plan, schema, budgets) alone, so its shape digest is data-oblivious.
struct CompiledQuery {
    CircuitBuilder b;
    Schema schema;
    std::vector<CompiledStep> steps;
    std::vector<std::string> output_names;
    TableCols out;                    // final (sorted) output columns
    std::vector<ColumnId> inst_attrs; // public result, bound by copies
    ColumnId inst_valid{};

    /// Loads table data, runs every stage and exposes the result on the
    /// instance columns. Returns the final padded output table.
    TableData fill_phase1(Assignment& asg, const std::map<std::string, Relation>& db,
                          PinList* pins = nullptr) const {
        const ConstraintSystem& cs = b.cs;
        std::vector<TableData> stack;
        auto pop = [&] {
            TableData d = std::move(stack.back());
            stack.pop_back();
            return d;
        };
        for (const CompiledStep& st : steps) {
            switch (st.kind) {
                case PlanStep::Kind::Scan: {
                    auto it = db.find(st.table);
                    if (it == db.end())
                        fail(ErrorCode::IoError, "no data for table " + st.table);
                    const Relation& rel = it->second;
                    const TableInfo& info = schema.table(st.table);
                    Relation ordered;
                    ordered.name = st.table;
                    for (const auto& c : info.columns) {
                        int idx = rel.attr_index(c.name);
                        if (idx < 0)
                            fail(ErrorCode::ShapeMismatch,
                                 "table " + st.table + " lacks column " + c.name);
                        ordered.attrs.push_back(c.name);
                        ordered.cols.push_back(rel.cols[std::size_t(idx)]);
                    }
                    TableData d = TableData::from_relation(ordered, st.scan->out.budget);
                    stack.push_back(st.scan->fill(cs, asg, d, pins));
                    break;
                }
                case PlanStep::Kind::Filter:
                    stack.back() = st.filter->fill_phase1(cs, asg, stack.back(), pins);
                    break;
                case PlanStep::Kind::Sort:
                    stack.back() = st.sort->fill_phase1(cs, asg, stack.back(), pins);
                    break;
                case PlanStep::Kind::GroupBy:
                    stack.back() = st.group->fill_phase1(cs, asg, stack.back(), pins);
                    break;
                case PlanStep::Kind::Join: {
                    TableData r = pop(), l = pop();
                    stack.push_back(st.join->fill_phase1(cs, asg, l, r, pins));
                    break;
                }
                case PlanStep::Kind::Project: {
                    TableData d = pop();
                    TableData v;
                    v.valid = d.valid;
                    for (std::size_t c : st.view) v.cols.push_back(d.cols[c]);
                    stack.push_back(std::move(v));
                    break;
                }
                case PlanStep::Kind::SetOp: {
                    TableData r = pop(), l = pop();
                    if (st.inter)
                        stack.push_back(st.inter->fill_phase1(cs, asg, l, r, pins));
                    else
                        stack.push_back(st.uni->fill_phase1(cs, asg, l, r, pins));
                    break;
                }
                case PlanStep::Kind::Aggregate:
                    fail(ErrorCode::InternalInconsistency, "stray aggregate stage");
                    break;
            }
        }
        if (stack.size() != 1)
            fail(ErrorCode::InternalInconsistency, "pipeline left " +
                                                       std::to_string(stack.size()) + " tables");
        const TableData& fin = stack.back();
        for (std::size_t r = 0; r < out.budget; ++r) {
            for (std::size_t j = 0; j < inst_attrs.size(); ++j) {
                asg.set(cs, inst_attrs[j], r, Fe(fin.cols[j][r]));
                pin(pins, inst_attrs[j], r);
            }
            asg.set(cs, inst_valid, r, Fe(std::uint64_t(fin.valid[r])));
            pin(pins, inst_valid, r);
        }
        return stack.back();
    }

    /// Fills every challenge-dependent column (grand products).
    void fill_phase2(Assignment& asg, PinList* pins = nullptr) const {
        const ConstraintSystem& cs = b.cs;
        for (const CompiledStep& st : steps) {
            switch (st.kind) {
                case PlanStep::Kind::Sort: st.sort->fill_phase2(cs, asg, pins); break;
                case PlanStep::Kind::GroupBy: st.group->fill_phase2(cs, asg, pins); break;
                case PlanStep::Kind::Join: st.join->fill_phase2(cs, asg, pins); break;
                case PlanStep::Kind::SetOp:
                    if (st.inter)
                        st.inter->fill_phase2(cs, asg, pins);
                    else
                        st.uni->fill_phase2(cs, asg, pins);
                    break;
                default: break;
            }
        }
    }

    Relation public_result(const TableData& fin) const { return fin.to_relation(output_names); }
};

namespace detail {

struct StackEntry {
    TableCols cols;
    std::vector<std::string> names;

    std::size_t col(const std::string& n) const {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == n) return i;
        fail(ErrorCode::UnknownColumn, "compile: no column " + n);
        return 0;
    }
};

} // namespace detail

/// Maximum composite-key arity: keys pack 64 bits per attribute plus a
/// validity marker bit, and must stay below the field size.
inline constexpr std::size_t kMaxKeyArity = 3;

inline CompiledQuery compile(const QueryPlan& plan, const Schema& schema,
                             const Budgets& budgets) {
    CompiledQuery q;
    q.schema = schema;
    std::vector<detail::StackEntry> stack;
    auto pop = [&] {
        if (stack.empty()) fail(ErrorCode::InternalInconsistency, "compile: empty plan stack");
        detail::StackEntry e = std::move(stack.back());
        stack.pop_back();
        return e;
    };

    const auto& steps = plan.steps;
    for (std::size_t si = 0; si < steps.size(); ++si) {
        const PlanStep& s = steps[si];
        std::string nm = "q" + std::to_string(q.steps.size());
        CompiledStep cst;
        cst.kind = s.kind;
        switch (s.kind) {
            case PlanStep::Kind::Scan: {
                const TableInfo& info = schema.table(s.table);
                cst.table = s.table;
                cst.scan = std::make_shared<ScanGate>(
                    build_scan(q.b, info.columns.size(), budgets.of(s.table), nm));
                detail::StackEntry e;
                e.cols = cst.scan->out;
                for (const auto& c : info.columns) e.names.push_back(s.table + "." + c.name);
                stack.push_back(std::move(e));
                break;
            }
            case PlanStep::Kind::Filter: {
                detail::StackEntry e = pop();
                cst.filter = std::make_shared<FilterGate>(
                    build_filter(q.b, e.cols, e.col(s.attr), s.op, s.literal, nm));
                e.cols = cst.filter->out;
                stack.push_back(std::move(e));
                break;
            }
            case PlanStep::Kind::Join: {
                detail::StackEntry r = pop(), l = pop();
                cst.join = std::make_shared<JoinGate>(
                    build_join_gate(q.b, l.cols, r.cols, l.col(s.left_attr),
                                    r.col(s.right_attr), s.mode == "general", nm));
                detail::StackEntry e;
                e.cols = cst.join->out;
                e.names = l.names;
                e.names.insert(e.names.end(), r.names.begin(), r.names.end());
                stack.push_back(std::move(e));
                break;
            }
            case PlanStep::Kind::GroupBy: {
                detail::StackEntry e = pop();
                if (s.attrs.size() > kMaxKeyArity)
                    fail(ErrorCode::UnsupportedFeature, "GROUP BY supports at most " +
                                                            std::to_string(kMaxKeyArity) +
                                                            " columns");
                std::vector<std::size_t> gcols;
                std::vector<std::string> names;
                for (const std::string& g : s.attrs) {
                    gcols.push_back(e.col(g));
                    names.push_back(g);
                }
                std::vector<AggSpec> aggs;
                while (si + 1 < steps.size() &&
                       steps[si + 1].kind == PlanStep::Kind::Aggregate) {
                    const PlanStep& a = steps[++si];
                    AggSpec sp;
                    sp.fn = a.fn;
                    sp.attr = a.attr.empty() ? 0 : e.col(a.attr);
                    aggs.push_back(sp);
                    names.push_back(agg_fn_name(a.fn) + "(" + a.attr + ")");
                }
                cst.group =
                    std::make_shared<GroupByGate>(build_groupby_gate(q.b, e.cols, gcols, aggs, nm));
                e.cols = cst.group->out;
                e.names = std::move(names);
                stack.push_back(std::move(e));
                break;
            }
            case PlanStep::Kind::Aggregate:
                fail(ErrorCode::InternalInconsistency, "aggregate without group step");
                break;
            case PlanStep::Kind::Project: {
                detail::StackEntry e = pop();
                detail::StackEntry v;
                v.cols.valid = e.cols.valid;
                v.cols.budget = e.cols.budget;
                for (const std::string& c : s.columns) {
                    std::size_t idx = e.col(c);
                    cst.view.push_back(idx);
                    v.cols.attrs.push_back(e.cols.attrs[idx]);
                    v.names.push_back(c);
                }
                stack.push_back(std::move(v));
                break;
            }
            case PlanStep::Kind::Sort: {
                detail::StackEntry e = pop();
                if (s.attrs.size() > kMaxKeyArity)
                    fail(ErrorCode::UnsupportedFeature, "ORDER BY supports at most " +
                                                            std::to_string(kMaxKeyArity) +
                                                            " columns");
                std::vector<std::size_t> keys;
                for (const std::string& k : s.attrs) keys.push_back(e.col(k));
                cst.sort = std::make_shared<SortGate>(
                    build_sort_gate(q.b, e.cols, keys, s.ascending, nm));
                e.cols = cst.sort->out;
                stack.push_back(std::move(e));
                break;
            }
            case PlanStep::Kind::SetOp: {
                detail::StackEntry r = pop(), l = pop();
                if (l.cols.attrs.size() != r.cols.attrs.size())
                    fail(ErrorCode::ShapeMismatch, "set operands have different arity");
                if (l.cols.attrs.size() > kMaxKeyArity)
                    fail(ErrorCode::UnsupportedFeature, "set operations support at most " +
                                                            std::to_string(kMaxKeyArity) +
                                                            " columns");
                detail::StackEntry e;
                e.names = l.names;
                if (s.set_kind == "intersect") {
                    cst.inter = std::make_shared<IntersectOp>(
                        build_intersect_op(q.b, l.cols, r.cols, nm));
                    e.cols = cst.inter->out;
                } else {
                    cst.uni =
                        std::make_shared<UnionOp>(build_union_op(q.b, l.cols, r.cols, nm));
                    e.cols = cst.uni->out;
                }
                stack.push_back(std::move(e));
                break;
            }
        }
        q.steps.push_back(std::move(cst));
    }
    if (stack.size() != 1)
        fail(ErrorCode::InternalInconsistency,
             "plan left " + std::to_string(stack.size()) + " tables");
    detail::StackEntry fin = std::move(stack.back());

    // canonical output order: leading columns ascending, unless the query
    // fixed the order via an explicit sort stage
    if (q.steps.empty() || q.steps.back().kind != PlanStep::Kind::Sort) {
        CompiledStep cst;
        cst.kind = PlanStep::Kind::Sort;
        std::vector<std::size_t> keys;
        for (std::size_t i = 0; i < std::min(kMaxKeyArity, fin.cols.attrs.size()); ++i)
            keys.push_back(i);
        cst.sort = std::make_shared<SortGate>(
            build_sort_gate(q.b, fin.cols, keys, true, "q" + std::to_string(q.steps.size())));
        fin.cols = cst.sort->out;
        q.steps.push_back(std::move(cst));
    }

    q.out = fin.cols;
    q.output_names = fin.names;
    for (std::size_t j = 0; j < q.out.attrs.size(); ++j) {
        ColumnId ic = q.b.instance("out.a" + std::to_string(j));
        q.inst_attrs.push_back(ic);
        for (std::size_t r = 0; r < q.out.budget; ++r) q.b.cs.add_copy(ic, r, q.out.attrs[j], r);
    }
    q.inst_valid = q.b.instance("out.valid");
    for (std::size_t r = 0; r < q.out.budget; ++r)
        q.b.cs.add_copy(q.inst_valid, r, q.out.valid, r);

    q.b.freeze();
    return q;
}

} // namespace zql
