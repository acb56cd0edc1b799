// zql: prove and verify SQL query results over a committed database.
//
// Subcommands: commit, plan, prove, verify, report. Exit codes: 0 ok,
// 1 usage, otherwise one distinct code per failure class (see exit_code()).

#include <chrono>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "zql/commitment.hpp"
#include "zql/parser.hpp"
#include "zql/serialize.hpp"
#include "zql/witness.hpp"

using namespace zql;
using nlohmann::json;

namespace {

int exit_code(ErrorCode c) {
    switch (c) {
        case ErrorCode::ParseError: return 3;
        case ErrorCode::UnknownColumn: return 4;
        case ErrorCode::UnsupportedFeature: return 5;
        case ErrorCode::BudgetExceeded: return 6;
        case ErrorCode::IoError: return 7;
        case ErrorCode::CommitmentMismatch: return 8;
        case ErrorCode::ConstraintFailure: return 9;
        case ErrorCode::ShapeMismatch: return 10;
        case ErrorCode::OutOfRange: return 11;
        case ErrorCode::WitnessInfeasible: return 12;
        default: return 20;
    }
}

json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::IoError, "cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        fail(ErrorCode::ParseError, path + ": " + e.what());
    }
    return j;
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) fail(ErrorCode::IoError, "cannot write " + path);
    out << text;
}

/// Loads every schema table from <db_dir>/<table>.csv, applying the declared
/// decimal scales.
std::map<std::string, Relation> load_database(const Schema& schema, const std::string& db_dir) {
    std::map<std::string, Relation> db;
    for (const auto& [name, info] : schema.tables) {
        std::string path = db_dir + "/" + name + ".csv";
        std::ifstream probe(path);
        if (!probe) fail(ErrorCode::IoError, "missing table file for " + name + ": " + path);
        db[name] = load_csv(path, name, info.scales());
    }
    return db;
}

/// Budget syntax: "T1=64,T2=32,default=16".
Budgets parse_budgets(const std::string& text) {
    Budgets b;
    if (text.empty()) return b;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t comma = text.find(',', pos);
        std::string item = text.substr(pos, comma == std::string::npos ? comma : comma - pos);
        std::size_t eq = item.find('=');
        if (eq == std::string::npos)
            fail(ErrorCode::ParseError, "bad --budget item '" + item + "' (want name=rows)");
        std::string key = item.substr(0, eq);
        std::size_t rows = 0;
        try {
            rows = std::stoull(item.substr(eq + 1));
        } catch (const std::exception&) {
            fail(ErrorCode::ParseError, "bad --budget rows in '" + item + "'");
        }
        if (rows == 0) fail(ErrorCode::ParseError, "--budget rows must be positive");
        if (key == "default")
            b.fallback = rows;
        else
            b.per_table[key] = rows;
        pos = comma == std::string::npos ? text.size() : comma + 1;
    }
    return b;
}

json budgets_to_json(const Budgets& b) {
    json j;
    j["default"] = b.fallback;
    json per = json::object();
    for (const auto& [k, v] : b.per_table) per[k] = v;
    j["per_table"] = std::move(per);
    return j;
}

Budgets budgets_from_json(const json& j) {
    Budgets b;
    b.fallback = j.at("default").get<std::size_t>();
    for (const auto& [k, v] : j.at("per_table").items()) b.per_table[k] = v.get<std::size_t>();
    return b;
}

json report_to_json(const CircuitBuilder& b) {
    ConstraintReport rep = count_constraints(b.cs);
    json gates = json::array();
    for (const auto& g : rep.gates)
        gates.push_back({{"name", g.name},
                         {"active_rows", g.active_rows},
                         {"constraint_rows", g.constraint_rows}});
    json lookups = json::array();
    for (const auto& l : rep.lookups)
        lookups.push_back({{"name", l.name}, {"active_rows", l.active_rows}});
    json expectations = json::array();
    for (const auto& e : evaluate_expectations(b))
        expectations.push_back({{"category", e.expectation.category},
                                {"prefix", e.expectation.prefix},
                                {"expected", e.expectation.expected},
                                {"actual", e.actual},
                                {"match", e.match}});
    return json{{"gates", std::move(gates)},
                {"lookups", std::move(lookups)},
                {"copy_count", rep.copy_count},
                {"expectations", std::move(expectations)}};
}

struct ProveArgs {
    std::string query, schema_path, db_dir, budget_text, out_dir = ".";
    std::uint64_t seed = 0;
    bool public_only = false;
};

int cmd_commit(const std::string& schema_path, const std::string& db_dir) {
    Schema schema = Schema::load(schema_path);
    auto db = load_database(schema, db_dir);
    CommitmentRoot root = commit_database(db);
    write_file(db_dir + "/commitment.json", commitment_to_json(root).dump(2) + "\n");
    std::cout << root.hex() << "\n";
    return 0;
}

int cmd_plan(const std::string& query, const std::string& schema_path) {
    Schema schema = Schema::load(schema_path);
    QueryPlan plan = parse(query, schema);
    std::cout << plan_to_json(plan).dump(2) << "\n";
    return 0;
}

int cmd_prove(const ProveArgs& a) {
    using clock = std::chrono::steady_clock;
    auto ms = [](clock::time_point s, clock::time_point e) {
        return std::chrono::duration_cast<std::chrono::milliseconds>(e - s).count();
    };
    Schema schema = Schema::load(a.schema_path);
    Budgets budgets = parse_budgets(a.budget_text);
    QueryPlan plan = parse(a.query, schema);
    auto db = load_database(schema, a.db_dir);

    auto t0 = clock::now();
    CompiledQuery q = compile(plan, schema, budgets);
    auto t1 = clock::now();
    WitnessBundle w = generate_witness(q, db, a.seed);
    auto t2 = clock::now();

    CommitmentRoot root = commit_database(db);
    std::ifstream probe(a.db_dir + "/commitment.json");
    if (probe) {
        CommitmentRoot published = commitment_from_json(read_json(a.db_dir + "/commitment.json"));
        bind_commitment(db, published); // CommitmentMismatch if the db drifted
    }
    w.commitment_root = root.hex();

    VerifyOutcome v = verify_witness(q.b.cs, w);
    if (!v.ok) fail(ErrorCode::InternalInconsistency, "self-check failed: " + v.reason);
    auto t3 = clock::now();

    if (!a.public_only)
        write_file(a.out_dir + "/bundle.json", bundle_to_json(q.b.cs, w, false).dump() + "\n");
    write_file(a.out_dir + "/bundle.public.json", bundle_to_json(q.b.cs, w, true).dump() + "\n");

    json manifest{{"query", a.query},
                  {"schema_path", a.schema_path},
                  {"db_path", a.db_dir},
                  {"budgets", budgets_to_json(budgets)},
                  {"seed", std::to_string(a.seed)},
                  {"commitment_root", root.hex()},
                  {"shape", w.digest.combined_hex()},
                  {"verdict", "ok"},
                  {"bundle", a.public_only ? "" : "bundle.json"},
                  {"public_bundle", "bundle.public.json"},
                  {"report", report_to_json(q.b)},
                  {"timings_ms", json{{"compile", ms(t0, t1)},
                                      {"witness", ms(t1, t2)},
                                      {"check", ms(t2, t3)}}}};
    write_file(a.out_dir + "/manifest.json", manifest.dump(2) + "\n");
    std::cout << "ok rows=" << w.public_result.nrows() << " shape=" << w.digest.combined_hex()
              << "\n";
    return 0;
}

int cmd_verify(const std::string& manifest_path, bool full) {
    json m = read_json(manifest_path);
    std::string dir = manifest_path.substr(0, manifest_path.find_last_of('/') + 1);
    if (dir.empty()) dir = "./";

    Schema schema = Schema::load(m.at("schema_path").get<std::string>());
    Budgets budgets = budgets_from_json(m.at("budgets"));
    QueryPlan plan = parse(m.at("query").get<std::string>(), schema);
    CompiledQuery q = compile(plan, schema, budgets); // independent recompilation

    std::string bundle_file = full ? m.at("bundle").get<std::string>()
                                   : m.at("public_bundle").get<std::string>();
    LoadedBundle l = bundle_from_json(q.b.cs, read_json(dir + bundle_file));

    // commitment binding: the bundle's root must equal the published one
    std::string published = m.at("commitment_root").get<std::string>();
    std::ifstream probe(m.at("db_path").get<std::string>() + "/commitment.json");
    if (probe) {
        CommitmentRoot c = commitment_from_json(
            read_json(m.at("db_path").get<std::string>() + "/commitment.json"));
        if (c.encoding_version != kCommitmentEncodingVersion)
            fail(ErrorCode::CommitmentMismatch, "unsupported commitment encoding version");
        published = c.hex();
    }
    if (l.bundle.commitment_root != published)
        fail(ErrorCode::CommitmentMismatch, "bundle root " + l.bundle.commitment_root +
                                                " != published root " + published);

    // challenges must be the transcript's output over the committed columns
    std::vector<Fe> want = derive_challenges(q.b.cs, l.bundle.seed, l.transcript_hashes);
    if (want != l.bundle.assignment.challenges())
        fail(ErrorCode::ConstraintFailure, "challenges do not match the transcript");

    // instance consistency: claimed result rows = valid-row decode of the
    // instance columns, and the instance hashes are honest
    {
        const ConstraintSystem& cs = q.b.cs;
        TableData fin;
        fin.valid.resize(q.out.budget);
        fin.cols.assign(q.inst_attrs.size(), std::vector<std::uint64_t>(q.out.budget, 0));
        for (std::size_t r = 0; r < q.out.budget; ++r) {
            Fe v = l.bundle.assignment.at(cs, q.inst_valid, r);
            if (!v.is_zero() && v != Fe::one())
                fail(ErrorCode::ConstraintFailure, "instance validity flag is not boolean");
            fin.valid[r] = v.is_zero() ? 0 : 1;
            for (std::size_t j = 0; j < q.inst_attrs.size(); ++j) {
                Fe a = l.bundle.assignment.at(cs, q.inst_attrs[j], r);
                if (!a.fits_bits(64))
                    fail(ErrorCode::ConstraintFailure, "instance value exceeds 64 bits");
                fin.cols[j][r] = a.low_u64();
            }
        }
        Relation claimed = fin.to_relation(q.output_names);
        const Relation& stated = l.bundle.public_result;
        bool same = claimed.nrows() == stated.nrows() && claimed.ncols() == stated.ncols();
        for (std::size_t r = 0; same && r < claimed.nrows(); ++r)
            same = claimed.row(r) == stated.row(r);
        if (!same)
            fail(ErrorCode::ConstraintFailure, "public result does not match instance columns");
    }

    if (full) {
        VerifyOutcome v = verify_witness(q.b.cs, l.bundle);
        if (!v.ok) {
            std::string where;
            for (std::size_t i = 0; i < std::min<std::size_t>(3, v.verdict.failures.size()); ++i)
                where += " " + v.verdict.failures[i].name + "@" +
                         std::to_string(v.verdict.failures[i].row);
            fail(ErrorCode::ConstraintFailure, v.reason + where);
        }
    }
    std::cout << "ok" << (full ? " (full constraint check)" : " (public sections)") << "\n";
    return 0;
}

int cmd_report(const std::string& manifest_path) {
    json m = read_json(manifest_path);
    Schema schema = Schema::load(m.at("schema_path").get<std::string>());
    Budgets budgets = budgets_from_json(m.at("budgets"));
    QueryPlan plan = parse(m.at("query").get<std::string>(), schema);
    CompiledQuery q = compile(plan, schema, budgets);
    json rep = report_to_json(q.b);
    std::cout << rep.dump(2) << "\n";
    for (const auto& e : rep["expectations"])
        if (!e["match"].get<bool>()) return exit_code(ErrorCode::InternalInconsistency);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"SQL query proving over a committed database (mock prover)"};
    app.require_subcommand(0, 1);
    bool field_info = false;
    app.add_flag("--field-info", field_info, "print the field modulus and exit");

    std::string schema_path, db_dir, query, budget_text, manifest_path, out_dir = ".";
    std::uint64_t seed = 0;
    bool full = false, public_only = false;

    CLI::App* c_commit = app.add_subcommand("commit", "commit a database directory");
    c_commit->add_option("--schema", schema_path)->required();
    c_commit->add_option("--db", db_dir)->required();

    CLI::App* c_plan = app.add_subcommand("plan", "print the lowered query plan");
    c_plan->add_option("--query", query)->required();
    c_plan->add_option("--schema", schema_path)->required();

    CLI::App* c_prove = app.add_subcommand("prove", "compile, fill and check a query");
    c_prove->add_option("--query", query)->required();
    c_prove->add_option("--schema", schema_path)->required();
    c_prove->add_option("--db", db_dir)->required();
    c_prove->add_option("--budget", budget_text, "T1=64,T2=32,default=16");
    c_prove->add_option("--out", out_dir);
    c_prove->add_option("--seed", seed, "transcript salt (test-only)");
    c_prove->add_flag("--public-only", public_only, "skip writing the private bundle");

    CLI::App* c_verify = app.add_subcommand("verify", "verify a proved run");
    c_verify->add_option("--manifest", manifest_path)->required();
    c_verify->add_flag("--full", full, "check every constraint (needs the private bundle)");

    CLI::App* c_report = app.add_subcommand("report", "constraint counts vs analytic formulas");
    c_report->add_option("--manifest", manifest_path)->required();

    CLI11_PARSE(app, argc, argv);

    if (field_info) {
        std::cout << "field: BN254 scalar, modulus " << (Fe::zero() - Fe::one()).to_dec()
                  << " + 1 (254 bits)\n";
        return 0;
    }

    try {
        if (c_commit->parsed()) return cmd_commit(schema_path, db_dir);
        if (c_plan->parsed()) return cmd_plan(query, schema_path);
        if (c_prove->parsed()) {
            ProveArgs a;
            a.query = query;
            a.schema_path = schema_path;
            a.db_dir = db_dir;
            a.budget_text = budget_text;
            a.out_dir = out_dir;
            a.seed = seed;
            a.public_only = public_only;
            return cmd_prove(a);
        }
        if (c_verify->parsed()) return cmd_verify(manifest_path, full);
        if (c_report->parsed()) return cmd_report(manifest_path);
    } catch (const Error& e) {
        std::cerr << "error [" << error_code_name(e.code()) << "]: " << e.what() << "\n";
        return exit_code(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 20;
    }
    std::cout << app.help();
    return 1;
}
