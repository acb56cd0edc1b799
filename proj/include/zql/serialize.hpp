#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "zql/witness.hpp"

namespace zql {

inline constexpr const char* kBundleEncoding = "zql-bundle-v1";

inline nlohmann::json relation_to_json(const Relation& r) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < r.nrows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (std::uint64_t v : r.row(i)) row.push_back(std::to_string(v));
        rows.push_back(std::move(row));
    }
    return nlohmann::json{{"attrs", r.attrs}, {"rows", std::move(rows)}};
}

inline Relation relation_from_json(const nlohmann::json& j) {
    Relation r;
    r.attrs = j.at("attrs").get<std::vector<std::string>>();
    r.cols.assign(r.attrs.size(), {});
    for (const auto& row : j.at("rows")) {
        std::vector<std::uint64_t> vals;
        for (const auto& c : row) vals.push_back(std::stoull(c.get<std::string>()));
        r.push_row(vals);
    }
    return r;
}

/// Serializes a bundle. With `public_only`, advice cell values are dropped
/// but their hashes stay, so the verifier can still re-derive the challenges.
inline nlohmann::json bundle_to_json(const ConstraintSystem& cs, const WitnessBundle& w,
                                     bool public_only) {
    nlohmann::json cols = nlohmann::json::array();
    for (const auto& ci : cs.columns()) {
        nlohmann::json c;
        switch (ci.id.kind) {
            case ColumnKind::Fixed: c["kind"] = "fixed"; break;
            case ColumnKind::Advice: c["kind"] = "advice"; break;
            case ColumnKind::Instance: c["kind"] = "instance"; break;
        }
        c["name"] = ci.name;
        c["phase"] = ci.phase;
        auto h = w.assignment.column_hash(cs, ci.id);
        c["hash"] = hex_encode(h.data(), h.size());
        bool keep_values = !public_only || ci.id.kind == ColumnKind::Instance;
        if (ci.id.kind == ColumnKind::Fixed) keep_values = false; // derivable from blueprint
        if (keep_values) {
            nlohmann::json vals = nlohmann::json::array();
            for (const Fe& v : w.assignment.column(cs, ci.id)) vals.push_back(v.to_dec());
            c["values"] = std::move(vals);
        }
        cols.push_back(std::move(c));
    }
    nlohmann::json ch = nlohmann::json::array();
    for (const Fe& c : w.assignment.challenges()) ch.push_back(c.to_dec());
    return nlohmann::json{{"encoding", kBundleEncoding},
                          {"public_only", public_only},
                          {"row_count", cs.row_count()},
                          {"seed", std::to_string(w.seed)},
                          {"shape", w.digest.combined_hex()},
                          {"challenges", std::move(ch)},
                          {"columns", std::move(cols)},
                          {"public_result", relation_to_json(w.public_result)},
                          {"commitment_root", w.commitment_root}};
}

struct LoadedBundle {
    WitnessBundle bundle;
    bool public_only = false;
    std::string shape_hex;
    std::vector<std::array<std::uint8_t, 32>> transcript_hashes; // phase-0 + instance
};

/// Rehydrates a bundle against a recompiled constraint system. Column order,
/// names and kinds must match the blueprint exactly.
inline LoadedBundle bundle_from_json(const ConstraintSystem& cs, const nlohmann::json& j) {
    if (j.value("encoding", "") != kBundleEncoding)
        fail(ErrorCode::ParseError, "unknown bundle encoding");
    LoadedBundle out;
    out.public_only = j.value("public_only", false);
    out.shape_hex = j.value("shape", "");
    WitnessBundle& w = out.bundle;
    w.digest = shape_digest(cs);
    if (out.shape_hex != w.digest.combined_hex())
        fail(ErrorCode::ShapeMismatch, "bundle shape digest differs from blueprint");
    w.seed = std::stoull(j.value("seed", std::string("0")));
    w.commitment_root = j.value("commitment_root", "");
    w.assignment = Assignment(cs);
    if (j.at("row_count").get<std::size_t>() != cs.row_count())
        fail(ErrorCode::ShapeMismatch, "bundle row count differs from blueprint");
    const auto& cols = j.at("columns");
    const auto& decls = cs.columns();
    if (cols.size() != decls.size())
        fail(ErrorCode::ShapeMismatch, "bundle column count differs from blueprint");
    for (std::size_t i = 0; i < decls.size(); ++i) {
        const auto& cj = cols[i];
        if (cj.at("name").get<std::string>() != decls[i].name)
            fail(ErrorCode::ShapeMismatch, "bundle column order differs from blueprint");
        std::string hh = cj.at("hash").get<std::string>();
        if (decls[i].id.kind == ColumnKind::Instance ||
            (decls[i].id.kind == ColumnKind::Advice && decls[i].phase == 0)) {
            if (hh.size() != 64) fail(ErrorCode::ParseError, "bad column hash length");
            std::array<std::uint8_t, 32> h{};
            for (std::size_t b = 0; b < 32; ++b)
                h[b] = std::uint8_t(std::stoul(hh.substr(2 * b, 2), nullptr, 16));
            out.transcript_hashes.push_back(h);
        }
        if (!cj.contains("values")) continue;
        const auto& vals = cj.at("values");
        if (vals.size() != cs.row_count())
            fail(ErrorCode::ShapeMismatch, "bundle column length differs from blueprint");
        for (std::size_t r = 0; r < vals.size(); ++r)
            w.assignment.set(cs, decls[i].id, r, Fe::from_dec(vals[r].get<std::string>()));
    }
    const auto& ch = j.at("challenges");
    if (ch.size() != w.assignment.challenges().size())
        fail(ErrorCode::ShapeMismatch, "bundle challenge count differs from blueprint");
    for (std::size_t i = 0; i < ch.size(); ++i)
        w.assignment.challenges()[i] = Fe::from_dec(ch[i].get<std::string>());
    w.public_result = relation_from_json(j.at("public_result"));
    return out;
}

} // namespace zql
