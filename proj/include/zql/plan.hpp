#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "zql/errors.hpp"

namespace zql {

enum class CmpOp { Lt, Le, Eq, Ge, Gt };

enum class AggFn { Sum, Count, Avg, Min, Max };

inline std::string cmp_op_name(CmpOp op) {
    switch (op) {
        case CmpOp::Lt: return "<";
        case CmpOp::Le: return "<=";
        case CmpOp::Eq: return "=";
        case CmpOp::Ge: return ">=";
        case CmpOp::Gt: return ">";
    }
    return "?";
}

inline std::string agg_fn_name(AggFn fn) {
    switch (fn) {
        case AggFn::Sum: return "sum";
        case AggFn::Count: return "count";
        case AggFn::Avg: return "avg";
        case AggFn::Min: return "min";
        case AggFn::Max: return "max";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Schema
// ---------------------------------------------------------------------------

struct ColumnDef {
    std::string name;
    int scale = 0;              // decimal cells are scaled by 10^scale
    bool primary_key = false;   // drives key-join mode
    std::string references;     // foreign-key target table ("" if none)
};

struct TableInfo {
    std::string name;
    std::vector<ColumnDef> columns;

    int col_index(const std::string& c) const {
        for (std::size_t i = 0; i < columns.size(); ++i)
            if (columns[i].name == c) return int(i);
        return -1;
    }

    std::vector<int> scales() const {
        std::vector<int> out;
        for (const auto& c : columns) out.push_back(c.scale);
        return out;
    }
};

struct Schema {
    std::map<std::string, TableInfo> tables;

    const TableInfo& table(const std::string& t) const {
        auto it = tables.find(t);
        if (it == tables.end()) fail(ErrorCode::UnknownColumn, "unknown table: " + t);
        return it->second;
    }

    static Schema from_json(const nlohmann::json& j) {
        Schema s;
        if (!j.contains("tables") || !j["tables"].is_array())
            fail(ErrorCode::ParseError, "schema: missing 'tables' array");
        for (const auto& tj : j["tables"]) {
            TableInfo t;
            t.name = tj.at("name").get<std::string>();
            for (const auto& cj : tj.at("columns")) {
                ColumnDef c;
                c.name = cj.at("name").get<std::string>();
                c.scale = cj.value("scale", 0);
                c.primary_key = cj.value("primary_key", false);
                c.references = cj.value("references", std::string());
                t.columns.push_back(std::move(c));
            }
            if (t.columns.empty())
                fail(ErrorCode::ParseError, "schema: table " + t.name + " has no columns");
            s.tables[t.name] = std::move(t);
        }
        return s;
    }

    static Schema load(const std::string& path) {
        std::ifstream in(path);
        if (!in) fail(ErrorCode::IoError, "cannot open schema " + path);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const std::exception& e) {
            fail(ErrorCode::ParseError, std::string("schema json: ") + e.what());
        }
        return from_json(j);
    }
};

// ---------------------------------------------------------------------------
// QueryPlan
// ---------------------------------------------------------------------------

struct PlanStep {
    enum class Kind { Scan, Filter, Join, GroupBy, Aggregate, Sort, Project, SetOp };
    Kind kind = Kind::Scan;

    std::string table;                    // Scan
    std::string attr;                     // Filter / Aggregate
    CmpOp op = CmpOp::Eq;                 // Filter
    std::uint64_t literal = 0;            // Filter (post-scaling)
    std::string left_attr, right_attr;    // Join
    std::string mode;                     // Join: "pkfk" | "general"
    std::vector<std::string> attrs;       // GroupBy / Sort
    AggFn fn = AggFn::Sum;                // Aggregate
    bool ascending = true;                // Sort
    std::vector<std::string> columns;     // Project (output names in order)
    std::string set_kind;                 // SetOp: "union" | "intersect"
};

struct QueryPlan {
    std::vector<PlanStep> steps;
};

inline nlohmann::json plan_to_json(const QueryPlan& p) {
    nlohmann::json steps = nlohmann::json::array();
    for (const PlanStep& s : p.steps) {
        nlohmann::json j;
        switch (s.kind) {
            case PlanStep::Kind::Scan:
                j["op"] = "scan";
                j["table"] = s.table;
                break;
            case PlanStep::Kind::Filter:
                j["op"] = "filter";
                j["attr"] = s.attr;
                j["cmp"] = cmp_op_name(s.op);
                j["literal"] = std::to_string(s.literal);
                break;
            case PlanStep::Kind::Join:
                j["op"] = "join";
                j["left"] = s.left_attr;
                j["right"] = s.right_attr;
                j["mode"] = s.mode;
                break;
            case PlanStep::Kind::GroupBy:
                j["op"] = "group_by";
                j["attrs"] = s.attrs;
                break;
            case PlanStep::Kind::Aggregate:
                j["op"] = "aggregate";
                j["fn"] = agg_fn_name(s.fn);
                j["attr"] = s.attr;
                break;
            case PlanStep::Kind::Sort:
                j["op"] = "sort";
                j["attrs"] = s.attrs;
                j["direction"] = s.ascending ? "asc" : "desc";
                break;
            case PlanStep::Kind::Project:
                j["op"] = "project";
                j["columns"] = s.columns;
                break;
            case PlanStep::Kind::SetOp:
                j["op"] = "set_op";
                j["kind"] = s.set_kind;
                break;
        }
        steps.push_back(std::move(j));
    }
    return nlohmann::json{{"steps", std::move(steps)}};
}

} // namespace zql
