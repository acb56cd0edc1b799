#pragma once

#include <algorithm>
#include <cctype>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "zql/plan.hpp"
#include "zql/relation.hpp"

namespace zql {

namespace sqlparse {

struct Token {
    enum class Kind { Ident, Number, String, Symbol, End };
    Kind kind = Kind::End;
    std::string text; // keywords are upper-cased identifiers
};

inline bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
inline bool ident_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '\'';
}

inline std::vector<Token> tokenize(const std::string& sql) {
    std::vector<Token> out;
    std::size_t i = 0;
    while (i < sql.size()) {
        char c = sql[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
            continue;
        }
        if (ident_start(c)) {
            std::size_t j = i;
            while (j < sql.size() && ident_char(sql[j])) ++j;
            out.push_back({Token::Kind::Ident, sql.substr(i, j - i)});
            i = j;
            continue;
        }
        if (std::isdigit(static_cast<unsigned char>(c))) {
            std::size_t j = i;
            while (j < sql.size() &&
                   (std::isdigit(static_cast<unsigned char>(sql[j])) || sql[j] == '.'))
                ++j;
            out.push_back({Token::Kind::Number, sql.substr(i, j - i)});
            i = j;
            continue;
        }
        if (c == '\'') { // quoted string literal (only LIKE patterns use these)
            std::size_t j = i + 1;
            while (j < sql.size() && sql[j] != '\'') ++j;
            if (j >= sql.size()) fail(ErrorCode::ParseError, "unterminated string literal");
            out.push_back({Token::Kind::String, sql.substr(i + 1, j - i - 1)});
            i = j + 1;
            continue;
        }
        if (c == '<' || c == '>') {
            if (i + 1 < sql.size() && sql[i + 1] == '=') {
                out.push_back({Token::Kind::Symbol, sql.substr(i, 2)});
                i += 2;
            } else {
                out.push_back({Token::Kind::Symbol, std::string(1, c)});
                ++i;
            }
            continue;
        }
        if (std::string("=,().*").find(c) != std::string::npos) {
            out.push_back({Token::Kind::Symbol, std::string(1, c)});
            ++i;
            continue;
        }
        fail(ErrorCode::ParseError, std::string("unexpected character '") + c + "'");
    }
    out.push_back({Token::Kind::End, ""});
    return out;
}

inline std::string upper(const std::string& s) {
    std::string o = s;
    std::transform(o.begin(), o.end(), o.begin(),
                   [](unsigned char c) { return char(std::toupper(c)); });
    return o;
}

inline bool is_keyword(const Token& t, const std::string& kw) {
    return t.kind == Token::Kind::Ident && upper(t.text) == kw;
}

struct SelectItem {
    bool is_agg = false;
    AggFn fn = AggFn::Sum;
    std::string attr; // possibly "table.column"; empty for COUNT(*)
};

struct Predicate {
    bool is_join = false;
    std::string lhs, rhs; // attrs; rhs empty for filters
    CmpOp op = CmpOp::Eq;
    std::string literal_text; // raw number text
};

struct SelectParts {
    std::vector<SelectItem> items;
    bool star = false;
    std::vector<std::string> tables;
    std::vector<Predicate> predicates;
    std::vector<std::string> group_attrs;
    std::vector<std::string> order_attrs;
    bool order_asc = true;
};

class Parser {
public:
    explicit Parser(const std::string& sql) : toks_(tokenize(sql)) {}

    /// SELECT ... [set-op SELECT ...]
    std::pair<SelectParts, std::optional<std::pair<std::string, SelectParts>>> parse_query() {
        SelectParts left = parse_select();
        if (is_keyword(peek(), "UNION") || is_keyword(peek(), "INTERSECT")) {
            std::string kind = upper(next().text) == "UNION" ? "union" : "intersect";
            SelectParts right = parse_select();
            expect_end();
            return {left, std::make_pair(kind, right)};
        }
        expect_end();
        return {left, std::nullopt};
    }

private:
    std::vector<Token> toks_;
    std::size_t pos_ = 0;

    const Token& peek(std::size_t ahead = 0) const {
        return toks_[std::min(pos_ + ahead, toks_.size() - 1)];
    }
    const Token& next() { return toks_[std::min(pos_++, toks_.size() - 1)]; }
    bool accept_symbol(const std::string& s) {
        if (peek().kind == Token::Kind::Symbol && peek().text == s) {
            ++pos_;
            return true;
        }
        return false;
    }
    void expect_symbol(const std::string& s) {
        if (!accept_symbol(s))
            fail(ErrorCode::ParseError, "expected '" + s + "', got '" + peek().text + "'");
    }
    void expect_keyword(const std::string& kw) {
        if (!is_keyword(peek(), kw))
            fail(ErrorCode::ParseError, "expected " + kw + ", got '" + peek().text + "'");
        ++pos_;
    }
    void expect_end() {
        if (peek().kind != Token::Kind::End)
            fail(ErrorCode::ParseError, "trailing input at '" + peek().text + "'");
    }

    static const std::set<std::string>& keywords() {
        static const std::set<std::string> kws = {
            "SELECT", "FROM",  "WHERE",     "AND",  "GROUP", "BY",  "ORDER", "ASC",
            "DESC",   "UNION", "INTERSECT", "SUM",  "COUNT", "AVG", "MIN",   "MAX",
            "LIKE",   "OR",    "NOT",       "JOIN", "ON",    "AS"};
        return kws;
    }

    std::string parse_attr_name() {
        if (peek().kind != Token::Kind::Ident || keywords().count(upper(peek().text)))
            fail(ErrorCode::ParseError, "expected column name, got '" + peek().text + "'");
        std::string name = next().text;
        if (accept_symbol(".")) {
            if (peek().kind != Token::Kind::Ident)
                fail(ErrorCode::ParseError, "expected column after '" + name + ".'");
            name += "." + next().text;
        }
        return name;
    }

    std::optional<AggFn> agg_keyword() {
        if (peek().kind != Token::Kind::Ident) return std::nullopt;
        std::string u = upper(peek().text);
        if (u == "SUM") return AggFn::Sum;
        if (u == "COUNT") return AggFn::Count;
        if (u == "AVG") return AggFn::Avg;
        if (u == "MIN") return AggFn::Min;
        if (u == "MAX") return AggFn::Max;
        return std::nullopt;
    }

    SelectItem parse_select_item() {
        SelectItem item;
        if (auto fn = agg_keyword(); fn && peek(1).kind == Token::Kind::Symbol &&
                                     peek(1).text == "(") {
            item.is_agg = true;
            item.fn = *fn;
            next();
            expect_symbol("(");
            if (accept_symbol("*")) {
                if (item.fn != AggFn::Count)
                    fail(ErrorCode::ParseError, "'*' is only valid inside COUNT()");
            } else {
                item.attr = parse_attr_name();
            }
            expect_symbol(")");
            return item;
        }
        item.attr = parse_attr_name();
        return item;
    }

    SelectParts parse_select() {
        SelectParts q;
        expect_keyword("SELECT");
        if (is_keyword(peek(), "SELECT"))
            fail(ErrorCode::UnsupportedFeature, "nested SELECT is not supported");
        if (accept_symbol("*")) {
            q.star = true;
        } else {
            q.items.push_back(parse_select_item());
            while (accept_symbol(",")) q.items.push_back(parse_select_item());
        }
        expect_keyword("FROM");
        auto parse_table = [&] {
            if (peek().kind != Token::Kind::Ident || keywords().count(upper(peek().text)))
                fail(ErrorCode::ParseError, "expected table name, got '" + peek().text + "'");
            if (peek().kind == Token::Kind::Symbol && peek().text == "(")
                fail(ErrorCode::UnsupportedFeature, "subqueries in FROM are not supported");
            q.tables.push_back(next().text);
        };
        if (accept_symbol("("))
            fail(ErrorCode::UnsupportedFeature, "subqueries in FROM are not supported");
        parse_table();
        while (accept_symbol(",")) parse_table();
        if (is_keyword(peek(), "JOIN"))
            fail(ErrorCode::UnsupportedFeature, "explicit JOIN syntax; list tables and use WHERE");

        if (is_keyword(peek(), "WHERE")) {
            ++pos_;
            q.predicates.push_back(parse_predicate());
            while (true) {
                if (is_keyword(peek(), "AND")) {
                    ++pos_;
                    q.predicates.push_back(parse_predicate());
                    continue;
                }
                if (is_keyword(peek(), "OR"))
                    fail(ErrorCode::UnsupportedFeature, "OR-disjunctions are not supported");
                break;
            }
        }
        if (is_keyword(peek(), "GROUP")) {
            ++pos_;
            expect_keyword("BY");
            q.group_attrs.push_back(parse_attr_name());
            while (accept_symbol(",")) q.group_attrs.push_back(parse_attr_name());
        }
        if (is_keyword(peek(), "ORDER")) {
            ++pos_;
            expect_keyword("BY");
            bool dir_set = false;
            auto one = [&] {
                q.order_attrs.push_back(parse_attr_name());
                bool asc = true, given = false;
                if (is_keyword(peek(), "ASC")) {
                    ++pos_;
                    given = true;
                } else if (is_keyword(peek(), "DESC")) {
                    ++pos_;
                    asc = false;
                    given = true;
                }
                if (given) {
                    if (dir_set && asc != q.order_asc)
                        fail(ErrorCode::UnsupportedFeature,
                             "mixed ASC/DESC directions are not supported");
                    q.order_asc = asc;
                    dir_set = true;
                }
            };
            one();
            while (accept_symbol(",")) one();
        }
        return q;
    }

    Predicate parse_predicate() {
        Predicate p;
        p.lhs = parse_attr_name();
        if (is_keyword(peek(), "LIKE"))
            fail(ErrorCode::UnsupportedFeature, "LIKE patterns are not supported");
        if (peek().kind != Token::Kind::Symbol)
            fail(ErrorCode::ParseError, "expected comparison after '" + p.lhs + "'");
        std::string sym = next().text;
        if (sym == "<")
            p.op = CmpOp::Lt;
        else if (sym == "<=")
            p.op = CmpOp::Le;
        else if (sym == "=")
            p.op = CmpOp::Eq;
        else if (sym == ">=")
            p.op = CmpOp::Ge;
        else if (sym == ">")
            p.op = CmpOp::Gt;
        else
            fail(ErrorCode::ParseError, "unknown comparison '" + sym + "'");
        if (peek().kind == Token::Kind::Number) {
            p.literal_text = next().text;
            return p;
        }
        if (peek().kind == Token::Kind::String)
            fail(ErrorCode::UnsupportedFeature, "string comparisons are not supported");
        if (p.op != CmpOp::Eq)
            fail(ErrorCode::UnsupportedFeature, "column-to-column predicates must use '='");
        p.is_join = true;
        p.rhs = parse_attr_name();
        return p;
    }
};

/// Resolves a possibly-unqualified attribute against the FROM tables.
inline std::string resolve_attr(const std::string& name, const std::vector<std::string>& tables,
                                const Schema& schema) {
    auto dot = name.find('.');
    if (dot != std::string::npos) {
        std::string t = name.substr(0, dot), c = name.substr(dot + 1);
        if (std::find(tables.begin(), tables.end(), t) == tables.end())
            fail(ErrorCode::UnknownColumn, "table " + t + " is not in FROM");
        if (schema.table(t).col_index(c) < 0)
            fail(ErrorCode::UnknownColumn, "no column " + c + " in table " + t);
        return name;
    }
    std::string found;
    for (const std::string& t : tables) {
        if (schema.table(t).col_index(name) >= 0) {
            if (!found.empty())
                fail(ErrorCode::UnknownColumn, "ambiguous column " + name);
            found = t + "." + name;
        }
    }
    if (found.empty()) fail(ErrorCode::UnknownColumn, "unknown column " + name);
    return found;
}

inline const ColumnDef& column_info(const std::string& qualified, const Schema& schema) {
    auto dot = qualified.find('.');
    const TableInfo& t = schema.table(qualified.substr(0, dot));
    return t.columns[std::size_t(t.col_index(qualified.substr(dot + 1)))];
}

/// Lowers one parsed SELECT into plan steps (scans+filters, joins, group-by,
/// aggregates, project; ORDER BY becomes a trailing Sort step).
inline void lower_select(const SelectParts& q, const Schema& schema, QueryPlan& plan,
                         bool allow_order) {
    if (q.tables.empty()) fail(ErrorCode::ParseError, "no tables in FROM");
    std::set<std::string> seen;
    for (const std::string& t : q.tables) {
        schema.table(t);
        if (!seen.insert(t).second)
            fail(ErrorCode::UnsupportedFeature, "self-joins are not supported");
    }

    // resolve names
    std::vector<SelectItem> items = q.items;
    if (q.star) {
        if (q.tables.size() != 1 || !q.group_attrs.empty())
            fail(ErrorCode::UnsupportedFeature, "SELECT * requires a single plain table");
        for (const auto& c : schema.table(q.tables[0]).columns) {
            SelectItem it;
            it.attr = q.tables[0] + "." + c.name;
            items.push_back(it);
        }
    }
    for (auto& it : items)
        if (!it.attr.empty()) it.attr = resolve_attr(it.attr, q.tables, schema);
    std::vector<std::string> group_attrs;
    for (const std::string& g : q.group_attrs)
        group_attrs.push_back(resolve_attr(g, q.tables, schema));

    bool any_agg = false;
    for (const auto& it : items) any_agg |= it.is_agg;
    bool grouped = any_agg || !group_attrs.empty();
    if (grouped) {
        for (const auto& it : items) {
            if (it.is_agg) continue;
            if (std::find(group_attrs.begin(), group_attrs.end(), it.attr) == group_attrs.end())
                fail(ErrorCode::ParseError,
                     "column " + it.attr + " must appear in GROUP BY or an aggregate");
        }
    }

    std::vector<Predicate> filters, joins;
    for (const Predicate& p : q.predicates) {
        Predicate r = p;
        r.lhs = resolve_attr(p.lhs, q.tables, schema);
        if (p.is_join) {
            r.rhs = resolve_attr(p.rhs, q.tables, schema);
            joins.push_back(r);
        } else {
            filters.push_back(r);
        }
    }

    auto table_of = [](const std::string& qualified) {
        return qualified.substr(0, qualified.find('.'));
    };

    // scan with pushed-down filters; each joined table is scanned right
    // before its join so the pipeline stays a left-deep chain
    auto emit_scan = [&](const std::string& t) {
        PlanStep s;
        s.kind = PlanStep::Kind::Scan;
        s.table = t;
        plan.steps.push_back(s);
        for (const Predicate& f : filters) {
            if (table_of(f.lhs) != t) continue;
            PlanStep fs;
            fs.kind = PlanStep::Kind::Filter;
            fs.attr = f.lhs;
            fs.op = f.op;
            fs.literal = parse_scaled_cell(f.literal_text, column_info(f.lhs, schema).scale,
                                           "literal for " + f.lhs);
            plan.steps.push_back(fs);
        }
    };
    emit_scan(q.tables[0]);

    // joins left-to-right as written
    std::set<std::string> joined = {q.tables[0]};
    std::vector<Predicate> pending = joins;
    for (std::size_t i = 1; i < q.tables.size(); ++i) {
        const std::string& t = q.tables[i];
        bool found = false;
        for (std::size_t pi = 0; pi < pending.size(); ++pi) {
            const Predicate& p = pending[pi];
            std::string lt = table_of(p.lhs), rt = table_of(p.rhs);
            std::string left, right;
            if (joined.count(lt) && rt == t) {
                left = p.lhs;
                right = p.rhs;
            } else if (joined.count(rt) && lt == t) {
                left = p.rhs;
                right = p.lhs;
            } else {
                continue;
            }
            emit_scan(t);
            PlanStep js;
            js.kind = PlanStep::Kind::Join;
            js.left_attr = left;
            js.right_attr = right;
            js.mode = column_info(right, schema).primary_key ? "pkfk" : "general";
            plan.steps.push_back(js);
            pending.erase(pending.begin() + long(pi));
            joined.insert(t);
            found = true;
            break;
        }
        if (!found)
            fail(ErrorCode::UnsupportedFeature,
                 "no equality predicate links table " + t + " (cross joins unsupported)");
    }
    if (!pending.empty())
        fail(ErrorCode::UnsupportedFeature,
             "multiple join predicates between the same tables are not supported");

    std::vector<std::string> out_names;
    if (grouped) {
        PlanStep g;
        g.kind = PlanStep::Kind::GroupBy;
        g.attrs = group_attrs;
        plan.steps.push_back(g);
        for (const auto& it : items) {
            if (!it.is_agg) continue;
            PlanStep a;
            a.kind = PlanStep::Kind::Aggregate;
            a.fn = it.fn;
            a.attr = it.attr; // empty means COUNT(*)
            plan.steps.push_back(a);
        }
        for (const auto& it : items)
            out_names.push_back(it.is_agg ? agg_fn_name(it.fn) + "(" + it.attr + ")" : it.attr);
    } else {
        for (const auto& it : items) out_names.push_back(it.attr);
    }

    PlanStep pr;
    pr.kind = PlanStep::Kind::Project;
    pr.columns = out_names;
    plan.steps.push_back(pr);

    if (!q.order_attrs.empty()) {
        if (!allow_order)
            fail(ErrorCode::UnsupportedFeature, "ORDER BY inside set-operation operands");
        PlanStep so;
        so.kind = PlanStep::Kind::Sort;
        so.ascending = q.order_asc;
        for (const std::string& o : q.order_attrs) {
            std::string r = resolve_attr(o, q.tables, schema);
            // ORDER BY keys must be part of the output
            bool ok = false;
            for (const std::string& n : out_names) ok |= n == r;
            if (!ok)
                fail(ErrorCode::UnsupportedFeature,
                     "ORDER BY column " + r + " must appear in the select list");
            so.attrs.push_back(r);
        }
        plan.steps.push_back(so);
    }
}

} // namespace sqlparse

/// Parses the supported SQL subset into a canonical QueryPlan.
inline QueryPlan parse(const std::string& sql, const Schema& schema) {
    sqlparse::Parser parser(sql);
    auto [left, setop] = parser.parse_query();
    QueryPlan plan;
    if (!setop) {
        sqlparse::lower_select(left, schema, plan, true);
        return plan;
    }
    sqlparse::lower_select(left, schema, plan, false);
    sqlparse::lower_select(setop->second, schema, plan, false);
    PlanStep s;
    s.kind = PlanStep::Kind::SetOp;
    s.set_kind = setop->first;
    plan.steps.push_back(s);
    return plan;
}

} // namespace zql
