#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <random>

#include "zql/parser.hpp"
#include "zql/serialize.hpp"
#include "zql/witness.hpp"

using namespace zql;

namespace {

Schema schema() {
    return Schema::from_json(nlohmann::json::parse(R"({
      "tables": [
        {"name": "T1", "columns": [{"name": "a"}, {"name": "b"}]},
        {"name": "T2", "columns": [{"name": "c", "primary_key": true}, {"name": "d"}]}
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

std::map<std::string, Relation> sample_db() {
    std::map<std::string, Relation> db;
    db["T1"] = rel("T1", {"a", "b"}, {{2, 5}, {1, 7}, {2, 9}, {5, 1}});
    db["T2"] = rel("T2", {"c", "d"}, {{1, 10}, {2, 20}, {9, 90}});
    return db;
}

CompiledQuery make_query(const std::string& sql) {
    Budgets budgets;
    budgets.fallback = 8;
    Schema s = schema();
    return compile(parse(sql, s), s, budgets);
}

bool same_rows(const Relation& a, const Relation& b) {
    if (a.nrows() != b.nrows() || a.ncols() != b.ncols()) return false;
    for (std::size_t r = 0; r < a.nrows(); ++r)
        if (a.row(r) != b.row(r)) return false;
    return true;
}

} // namespace

TEST_CASE("honest bundles verify and agree with the reference evaluator") {
    Schema s = schema();
    const char* queries[] = {
        "SELECT a, SUM(b) FROM T1 GROUP BY a",
        "SELECT T1.b, T2.d FROM T1, T2 WHERE T1.a = T2.c",
        "SELECT a FROM T1 WHERE b >= 5",
        "SELECT a FROM T1 UNION SELECT c FROM T2",
    };
    for (const char* sql : queries) {
        CAPTURE(sql);
        CompiledQuery q = make_query(sql);
        WitnessBundle w = generate_witness(q, sample_db(), 42);
        VerifyOutcome v = verify_witness(q.b.cs, w);
        CHECK(v.ok);
        Relation want = evaluate_reference(parse(sql, s), s, sample_db());
        CHECK(same_rows(w.public_result, want));
    }
}

TEST_CASE("witness generation is deterministic byte-for-byte") {
    CompiledQuery q = make_query("SELECT a, SUM(b) FROM T1 GROUP BY a");
    WitnessBundle w1 = generate_witness(q, sample_db(), 7);
    WitnessBundle w2 = generate_witness(q, sample_db(), 7);
    CHECK(bundle_to_json(q.b.cs, w1, false).dump() == bundle_to_json(q.b.cs, w2, false).dump());
    WitnessBundle w3 = generate_witness(q, sample_db(), 8);
    CHECK(w1.assignment.challenges() != w3.assignment.challenges()); // seed feeds Fiat-Shamir
}

TEST_CASE("challenges are bound to the phase-0 columns") {
    CompiledQuery q = make_query("SELECT a FROM T1 WHERE b >= 5");
    WitnessBundle w = generate_witness(q, sample_db(), 1);
    // rewrite an unconstrained dummy-region cell: constraints may still hold,
    // but the transcript no longer matches
    REQUIRE(!w.pins.empty());
    const CellRef& c = w.pins[0];
    WitnessBundle t = tamper(q.b.cs, w, c.col, c.row, w.assignment.at(q.b.cs, c.col, c.row) + Fe(1));
    VerifyOutcome v = verify_witness(q.b.cs, t);
    CHECK(!v.ok);
    CHECK(verify_witness(q.b.cs, w).ok); // the original bundle is untouched
}

TEST_CASE("tampering with the public output is rejected") {
    CompiledQuery q = make_query("SELECT a, SUM(b) FROM T1 GROUP BY a");
    WitnessBundle w = generate_witness(q, sample_db(), 3);
    REQUIRE(!q.inst_attrs.empty());
    // find a live output row and bump its value
    std::size_t row = 0;
    for (; row < q.out.budget; ++row)
        if (!w.assignment.at(q.b.cs, q.inst_valid, row).is_zero()) break;
    REQUIRE(row < q.out.budget);
    Fe old = w.assignment.at(q.b.cs, q.inst_attrs[1], row);
    WitnessBundle t = tamper(q.b.cs, w, q.inst_attrs[1], row, old + Fe(1));
    CHECK(!verify_witness(q.b.cs, t).ok);
    // no-op tamper changes nothing
    WitnessBundle same = tamper(q.b.cs, w, q.inst_attrs[1], row, old);
    CHECK(verify_witness(q.b.cs, same).ok);
}

TEST_CASE("tamper validates its target location") {
    CompiledQuery q = make_query("SELECT a FROM T1");
    WitnessBundle w = generate_witness(q, sample_db(), 0);
    CHECK_THROWS_AS(tamper(q.b.cs, w, q.inst_attrs[0], q.b.cs.row_count(), Fe(1)), Error);
    ColumnId some_fixed{ColumnKind::Fixed, 0};
    CHECK_THROWS_AS(tamper(q.b.cs, w, some_fixed, 0, Fe(1)), Error);
}

TEST_CASE("full bundles survive a serialization round trip") {
    CompiledQuery q = make_query("SELECT T1.b, T2.d FROM T1, T2 WHERE T1.a = T2.c");
    WitnessBundle w = generate_witness(q, sample_db(), 5);
    nlohmann::json j = bundle_to_json(q.b.cs, w, false);
    LoadedBundle l = bundle_from_json(q.b.cs, j);
    CHECK(l.bundle.assignment.challenges() == w.assignment.challenges());
    VerifyOutcome v = verify_witness(q.b.cs, l.bundle);
    CHECK(v.ok);
    CHECK(same_rows(l.bundle.public_result, w.public_result));
}

TEST_CASE("public-only bundles drop advice values but keep their hashes") {
    CompiledQuery q = make_query("SELECT a FROM T1 WHERE b >= 5");
    WitnessBundle w = generate_witness(q, sample_db(), 5);
    nlohmann::json j = bundle_to_json(q.b.cs, w, true);
    std::size_t advice = 0, with_values = 0, hashes = 0;
    for (const auto& c : j["columns"]) {
        if (c["kind"] == "advice") {
            ++advice;
            if (c.contains("values")) ++with_values;
            if (c["hash"].get<std::string>().size() == 64) ++hashes;
        }
    }
    CHECK(advice > 0);
    CHECK(with_values == 0);
    CHECK(hashes == advice);

    // the verifier can still re-derive the challenges from the stored hashes
    LoadedBundle l = bundle_from_json(q.b.cs, j);
    std::vector<Fe> ch = derive_challenges(q.b.cs, l.bundle.seed, l.transcript_hashes);
    CHECK(ch == w.assignment.challenges());
}

TEST_CASE("over-budget databases fail witness generation") {
    Budgets budgets;
    budgets.per_table["T1"] = 2;
    Schema s = schema();
    CompiledQuery q = compile(parse("SELECT a FROM T1", s), s, budgets);
    CHECK_THROWS_AS(generate_witness(q, sample_db(), 0), Error);
}
