#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <random>

#include "zql/compiler.hpp"
#include "zql/evaluator.hpp"
#include "zql/parser.hpp"

using namespace zql;

namespace {

Schema two_table_schema() {
    return Schema::from_json(nlohmann::json::parse(R"({
      "tables": [
        {"name": "T1", "columns": [
          {"name": "a", "scale": 0},
          {"name": "b", "scale": 0}]},
        {"name": "T2", "columns": [
          {"name": "c", "scale": 0, "primary_key": true},
          {"name": "d", "scale": 0}]}
      ]})"));
}

Relation rel(const std::string& name, const std::vector<std::string>& attrs,
             const std::vector<std::vector<std::uint64_t>>& rows) {
    Relation r;
    r.name = name;
    r.attrs = attrs;
    r.cols.assign(attrs.size(), {});
    for (const auto& row : rows) r.push_row(row);
    return r;
}

std::vector<std::string> plan_ops(const QueryPlan& p) {
    std::vector<std::string> ops;
    nlohmann::json j = plan_to_json(p);
    for (const auto& s : j["steps"]) ops.push_back(s["op"]);
    return ops;
}

ErrorCode code_of(const std::string& sql, const Schema& schema) {
    try {
        parse(sql, schema);
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode::InternalInconsistency;
}

/// Full pipeline: compile, fill both phases with fixed challenges, demand a
/// satisfied system and return the public rows.
Relation run_circuit(const CompiledQuery& q, const std::map<std::string, Relation>& db) {
    Assignment asg(q.b.cs);
    asg.challenges()[0] = Fe::from_dec("982451653000000007");
    asg.challenges()[1] = Fe::from_dec("1787569463");
    asg.challenges()[2] = Fe::from_dec("104729");
    TableData fin = q.fill_phase1(asg, db);
    q.fill_phase2(asg);
    Verdict v = check_satisfied(q.b.cs, asg);
    REQUIRE(v.ok);
    return q.public_result(fin);
}

bool same_rows(const Relation& a, const Relation& b) {
    if (a.nrows() != b.nrows() || a.ncols() != b.ncols()) return false;
    for (std::size_t r = 0; r < a.nrows(); ++r)
        if (a.row(r) != b.row(r)) return false;
    return true;
}

void expect_agreement(const std::string& sql, const Schema& schema, const Budgets& budgets,
                      const std::map<std::string, Relation>& db) {
    QueryPlan plan = parse(sql, schema);
    CompiledQuery q = compile(plan, schema, budgets);
    Relation got = run_circuit(q, db);
    Relation want = evaluate_reference(plan, schema, db);
    CAPTURE(sql);
    CHECK(same_rows(got, want));
}

} // namespace

// ---------------------------------------------------------------------------
// Parsing and plan lowering
// ---------------------------------------------------------------------------

TEST_CASE("grouped aggregate lowers to scan, group, aggregate, project") {
    Schema s = Schema::from_json(nlohmann::json::parse(
        R"({"tables":[{"name":"T","columns":[{"name":"D1"},{"name":"D2"}]}]})"));
    QueryPlan p = parse("SELECT SUM(D2) FROM T GROUP BY D1", s);
    CHECK(plan_ops(p) ==
          std::vector<std::string>{"scan", "group_by", "aggregate", "project"});
    CHECK(p.steps[1].attrs == std::vector<std::string>{"T.D1"});
    CHECK(p.steps[2].fn == AggFn::Sum);
    CHECK(p.steps[2].attr == "T.D2");
    CHECK(p.steps[3].columns == std::vector<std::string>{"sum(T.D2)"});
}

TEST_CASE("two-table equality predicate lowers to a key join") {
    Schema s = two_table_schema();
    QueryPlan p = parse("SELECT T1.a, T2.d FROM T1, T2 WHERE T1.a = T2.c", s);
    CHECK(plan_ops(p) == std::vector<std::string>{"scan", "scan", "join", "project"});
    CHECK(p.steps[2].left_attr == "T1.a");
    CHECK(p.steps[2].right_attr == "T2.c");
    CHECK(p.steps[2].mode == "pkfk"); // right side is a primary key
    QueryPlan p2 = parse("SELECT T1.a, T2.c FROM T1, T2 WHERE T1.a = T2.d", s);
    CHECK(p2.steps[2].mode == "general"); // d is not a key
}

TEST_CASE("filters are pushed below the join, onto their own table") {
    Schema s = two_table_schema();
    QueryPlan p =
        parse("SELECT T1.a, T2.d FROM T1, T2 WHERE T1.a = T2.c AND b > 3 AND d < 9", s);
    CHECK(plan_ops(p) == std::vector<std::string>{"scan", "filter", "scan", "filter", "join",
                                                  "project"});
    CHECK(p.steps[1].attr == "T1.b");
    CHECK(p.steps[1].op == CmpOp::Gt);
    CHECK(p.steps[3].attr == "T2.d");
    CHECK(p.steps[3].literal == 9);
}

TEST_CASE("unsupported constructs and bad names raise the right errors") {
    Schema s = two_table_schema();
    CHECK(code_of("SELECT a FROM T1 WHERE b LIKE 'x%'", s) == ErrorCode::UnsupportedFeature);
    CHECK(code_of("SELECT a FROM T1 WHERE a = 1 OR b = 2", s) == ErrorCode::UnsupportedFeature);
    CHECK(code_of("SELECT a FROM T1, T2", s) == ErrorCode::UnsupportedFeature); // cross join
    CHECK(code_of("SELECT nosuch FROM T1", s) == ErrorCode::UnknownColumn);
    CHECK(code_of("SELECT a FROM T9", s) == ErrorCode::UnknownColumn);
    CHECK(code_of("SELECT a, b FROM T1 GROUP BY a", s) == ErrorCode::ParseError);
    CHECK(code_of("SELECT FROM T1", s) == ErrorCode::ParseError);
    CHECK(code_of("SELECT a FROM T1 ORDER BY a ASC, b DESC", s) ==
          ErrorCode::UnsupportedFeature);
    CHECK(code_of("SELECT a FROM T1 ORDER BY b", s) == ErrorCode::UnsupportedFeature);
}

TEST_CASE("plan dumps are deterministic and literals honor column scales") {
    Schema s = Schema::from_json(nlohmann::json::parse(
        R"({"tables":[{"name":"T","columns":[{"name":"price","scale":2},{"name":"n"}]}]})"));
    std::string sql = "SELECT n FROM T WHERE price >= 10.5";
    QueryPlan p1 = parse(sql, s), p2 = parse(sql, s);
    CHECK(plan_to_json(p1).dump() == plan_to_json(p2).dump());
    CHECK(p1.steps[1].literal == 1050);
    CHECK(code_of("SELECT n FROM T WHERE n > 1.5", s) == ErrorCode::ParseError); // scale 0
}

TEST_CASE("set operations parse into two sub-pipelines") {
    Schema s = two_table_schema();
    QueryPlan p = parse("SELECT a FROM T1 UNION SELECT c FROM T2", s);
    CHECK(plan_ops(p) ==
          std::vector<std::string>{"scan", "project", "scan", "project", "set_op"});
    CHECK(p.steps[4].set_kind == "union");
    CHECK(code_of("SELECT a FROM T1 ORDER BY a UNION SELECT c FROM T2", s) ==
          ErrorCode::UnsupportedFeature);
}

// ---------------------------------------------------------------------------
// Reference evaluator against hand-computed results
// ---------------------------------------------------------------------------

TEST_CASE("evaluator computes grouped aggregates and canonical order") {
    Schema s = two_table_schema();
    std::map<std::string, Relation> db;
    db["T1"] = rel("T1", {"a", "b"}, {{2, 5}, {1, 7}, {2, 9}, {1, 1}});
    QueryPlan p = parse("SELECT a, SUM(b), MIN(b), AVG(b) FROM T1 GROUP BY a", s);
    Relation out = evaluate_reference(p, s, db);
    REQUIRE(out.nrows() == 2);
    CHECK(out.row(0) == std::vector<std::uint64_t>{1, 8, 1, 4});
    CHECK(out.row(1) == std::vector<std::uint64_t>{2, 14, 5, 7});
}

TEST_CASE("evaluator union keeps left rows then right leftovers") {
    Schema s = two_table_schema();
    std::map<std::string, Relation> db;
    db["T1"] = rel("T1", {"a", "b"}, {{1, 0}, {2, 0}, {2, 0}});
    db["T2"] = rel("T2", {"c", "d"}, {{2, 0}, {3, 0}});
    QueryPlan pu = parse("SELECT a FROM T1 UNION SELECT c FROM T2", s);
    Relation u = evaluate_reference(pu, s, db);
    REQUIRE(u.nrows() == 4); // {1,2,2} ∪ {2,3} = {1,2,2,3}
    CHECK(u.cols[0] == std::vector<std::uint64_t>({1, 2, 2, 3}));
    QueryPlan pi = parse("SELECT a FROM T1 INTERSECT SELECT c FROM T2", s);
    Relation i = evaluate_reference(pi, s, db);
    REQUIRE(i.nrows() == 1);
    CHECK(i.cols[0][0] == 2);
}

// ---------------------------------------------------------------------------
// Compiled circuits agree with the evaluator
// ---------------------------------------------------------------------------

TEST_CASE("compiled pipelines match the evaluator on fixed examples") {
    Schema s = two_table_schema();
    Budgets budgets;
    budgets.fallback = 8;
    std::map<std::string, Relation> db;
    db["T1"] = rel("T1", {"a", "b"}, {{2, 5}, {1, 7}, {2, 9}, {1, 1}, {8, 3}});
    db["T2"] = rel("T2", {"c", "d"}, {{1, 100}, {2, 200}, {5, 500}});

    expect_agreement("SELECT a, b FROM T1 WHERE a < 3", s, budgets, db);
    expect_agreement("SELECT a, SUM(b), COUNT(b), AVG(b), MIN(b), MAX(b) FROM T1 GROUP BY a",
                     s, budgets, db);
    expect_agreement("SELECT SUM(b), COUNT(b) FROM T1", s, budgets, db); // global aggregate
    expect_agreement("SELECT T1.a, T1.b, T2.d FROM T1, T2 WHERE T1.a = T2.c", s, budgets, db);
    expect_agreement("SELECT T2.d, T1.b FROM T1, T2 WHERE T1.a = T2.d", s, budgets, db);
    expect_agreement("SELECT a, b FROM T1 ORDER BY b DESC", s, budgets, db);
    expect_agreement("SELECT a FROM T1 UNION SELECT c FROM T2", s, budgets, db);
    expect_agreement("SELECT a FROM T1 INTERSECT SELECT c FROM T2", s, budgets, db);
    expect_agreement("SELECT a FROM T1 GROUP BY a", s, budgets, db); // bare dedup
}

TEST_CASE("joined group-by pipeline matches the evaluator") {
    Schema s = two_table_schema();
    Budgets budgets;
    budgets.fallback = 8;
    std::map<std::string, Relation> db;
    db["T1"] = rel("T1", {"a", "b"}, {{1, 3}, {1, 4}, {2, 5}, {5, 6}, {9, 7}});
    db["T2"] = rel("T2", {"c", "d"}, {{1, 10}, {2, 20}, {5, 30}});
    expect_agreement(
        "SELECT T2.d, SUM(T1.b) FROM T1, T2 WHERE T1.a = T2.c AND b >= 4 GROUP BY T2.d", s,
        budgets, db);
}

TEST_CASE("compiled circuits agree with the evaluator on random databases") {
    Schema s = two_table_schema();
    Budgets budgets;
    budgets.fallback = 8;
    const char* queries[] = {
        "SELECT a, b FROM T1 WHERE b <= 40",
        "SELECT a, SUM(b), MAX(b) FROM T1 GROUP BY a",
        "SELECT T1.b, T2.d FROM T1, T2 WHERE T1.a = T2.c",
        "SELECT b FROM T1 UNION SELECT d FROM T2",
        "SELECT AVG(b) FROM T1",
    };
    std::mt19937_64 rng(7);
    for (int iter = 0; iter < 8; ++iter) {
        std::map<std::string, Relation> db;
        std::vector<std::vector<std::uint64_t>> r1, r2;
        std::size_t n1 = rng() % 7, n2 = rng() % 6;
        for (std::size_t i = 0; i < n1; ++i) r1.push_back({rng() % 6, rng() % 80});
        std::set<std::uint64_t> keys;
        while (keys.size() < n2) keys.insert(rng() % 9); // unique: c is a primary key
        for (std::uint64_t k : keys) r2.push_back({k, rng() % 80});
        db["T1"] = rel("T1", {"a", "b"}, r1);
        db["T2"] = rel("T2", {"c", "d"}, r2);
        for (const char* sql : queries) expect_agreement(sql, s, budgets, db);
    }
}

// ---------------------------------------------------------------------------
// Obliviousness and budgets
// ---------------------------------------------------------------------------

TEST_CASE("circuit shape depends on schema and budgets, not on data") {
    Schema s = two_table_schema();
    Budgets budgets;
    budgets.fallback = 8;
    std::string sql = "SELECT T1.a, T2.d FROM T1, T2 WHERE T1.a = T2.c AND b < 50";
    QueryPlan plan = parse(sql, s);

    std::string base;
    std::mt19937_64 rng(11);
    for (int iter = 0; iter < 5; ++iter) {
        CompiledQuery q = compile(plan, s, budgets);
        std::map<std::string, Relation> db;
        std::vector<std::vector<std::uint64_t>> r1, r2;
        for (std::size_t i = 0; i < rng() % 6; ++i) r1.push_back({rng() % 5, rng() % 99});
        std::set<std::uint64_t> keys;
        for (std::size_t i = 0; i < 4; ++i) keys.insert(rng() % 9);
        for (std::uint64_t k : keys) r2.push_back({k, rng() % 99});
        db["T1"] = rel("T1", {"a", "b"}, r1);
        db["T2"] = rel("T2", {"c", "d"}, r2);

        Assignment asg(q.b.cs);
        asg.challenges()[0] = Fe(12345);
        asg.challenges()[1] = Fe(678);
        asg.challenges()[2] = Fe(91011);
        q.fill_phase1(asg, db);
        q.fill_phase2(asg);
        REQUIRE(check_satisfied(q.b.cs, asg).ok);
        std::string digest = shape_digest(q.b.cs).combined_hex();
        if (iter == 0)
            base = digest;
        else
            CHECK(digest == base);
    }

    // a different budget or a different literal is a different shape
    Budgets other = budgets;
    other.per_table["T1"] = 12;
    CHECK(shape_digest(compile(plan, s, other).b.cs).combined_hex() != base);
    QueryPlan plan2 = parse("SELECT T1.a, T2.d FROM T1, T2 WHERE T1.a = T2.c AND b < 51", s);
    CHECK(shape_digest(compile(plan2, s, budgets).b.cs).combined_hex() != base);
}

TEST_CASE("empty results use the same shape and still verify") {
    Schema s = two_table_schema();
    Budgets budgets;
    budgets.fallback = 4;
    QueryPlan plan = parse("SELECT a FROM T1 WHERE a > 100", s);
    CompiledQuery q = compile(plan, s, budgets);
    std::map<std::string, Relation> db;
    db["T1"] = rel("T1", {"a", "b"}, {{1, 2}, {3, 4}});
    Relation got = run_circuit(q, db);
    CHECK(got.nrows() == 0);
}

TEST_CASE("over-budget tables are rejected at fill time") {
    Schema s = two_table_schema();
    Budgets budgets;
    budgets.per_table["T1"] = 2;
    QueryPlan plan = parse("SELECT a FROM T1", s);
    CompiledQuery q = compile(plan, s, budgets);
    std::map<std::string, Relation> db;
    db["T1"] = rel("T1", {"a", "b"}, {{1, 2}, {3, 4}, {5, 6}});
    Assignment asg(q.b.cs);
    CHECK_THROWS_AS(q.fill_phase1(asg, db), Error);
}
