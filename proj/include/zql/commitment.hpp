#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "zql/relation.hpp"
#include "zql/transcript.hpp"

namespace zql {

inline constexpr std::uint32_t kCommitmentEncodingVersion = 1;

struct CommitmentRoot {
    std::array<std::uint8_t, 32> root{};
    std::size_t leaf_count = 0;
    std::uint32_t encoding_version = kCommitmentEncodingVersion;

    std::string hex() const { return hex_encode(root.data(), root.size()); }
};

namespace merkle {

inline void append_u64(std::vector<std::uint8_t>& v, std::uint64_t x) {
    for (int i = 7; i >= 0; --i) v.push_back(std::uint8_t(x >> (8 * i)));
}

/// Leaf preimage: version, table name, row index, then the row as
/// length-prefixed 64-bit big-endian values.
inline std::array<std::uint8_t, 32> leaf_hash(const std::string& table, std::uint64_t row_index,
                                              const std::vector<std::uint64_t>& row) {
    std::vector<std::uint8_t> buf;
    buf.push_back(0x00); // leaf domain tag
    append_u64(buf, kCommitmentEncodingVersion);
    append_u64(buf, table.size());
    buf.insert(buf.end(), table.begin(), table.end());
    append_u64(buf, row_index);
    append_u64(buf, row.size());
    for (std::uint64_t v : row) append_u64(buf, v);
    return sha256(buf);
}

inline std::array<std::uint8_t, 32> empty_marker_leaf() {
    std::vector<std::uint8_t> buf;
    buf.push_back(0x02); // empty-database domain tag
    append_u64(buf, kCommitmentEncodingVersion);
    return sha256(buf);
}

inline std::array<std::uint8_t, 32> node_hash(const std::array<std::uint8_t, 32>& l,
                                              const std::array<std::uint8_t, 32>& r) {
    std::vector<std::uint8_t> buf;
    buf.push_back(0x01); // inner-node domain tag
    buf.insert(buf.end(), l.begin(), l.end());
    buf.insert(buf.end(), r.begin(), r.end());
    return sha256(buf);
}

/// Balanced binary tree; odd levels duplicate their last node.
inline std::array<std::uint8_t, 32> tree_root(std::vector<std::array<std::uint8_t, 32>> level) {
    if (level.empty()) return empty_marker_leaf();
    while (level.size() > 1) {
        if (level.size() % 2 == 1) level.push_back(level.back());
        std::vector<std::array<std::uint8_t, 32>> next;
        next.reserve(level.size() / 2);
        for (std::size_t i = 0; i < level.size(); i += 2)
            next.push_back(node_hash(level[i], level[i + 1]));
        level = std::move(next);
    }
    return level[0];
}

/// One leaf per table row, tables in name order, rows in table order.
inline std::vector<std::array<std::uint8_t, 32>> database_leaves(
    const std::map<std::string, Relation>& db) {
    std::vector<std::array<std::uint8_t, 32>> leaves;
    for (const auto& [name, rel] : db)
        for (std::size_t r = 0; r < rel.nrows(); ++r)
            leaves.push_back(leaf_hash(name, r, rel.row(r)));
    return leaves;
}

} // namespace merkle

inline CommitmentRoot commit_database(const std::map<std::string, Relation>& db) {
    CommitmentRoot c;
    auto leaves = merkle::database_leaves(db);
    c.leaf_count = leaves.size();
    c.root = merkle::tree_root(std::move(leaves));
    return c;
}

/// Recomputes the root over one changed row by rebuilding the affected tree
/// path. At desk scale the leaf level is kept; only inner nodes are redone.
inline CommitmentRoot update_commitment(const std::map<std::string, Relation>& db,
                                        const std::string& table, std::size_t row,
                                        const std::vector<std::uint64_t>& new_row) {
    auto leaves = merkle::database_leaves(db);
    std::size_t offset = 0;
    for (const auto& [name, rel] : db) {
        if (name == table) {
            if (row >= rel.nrows()) fail(ErrorCode::OutOfRange, "update row out of range");
            leaves[offset + row] = merkle::leaf_hash(table, row, new_row);
            CommitmentRoot c;
            c.leaf_count = leaves.size();
            c.root = merkle::tree_root(std::move(leaves));
            return c;
        }
        offset += rel.nrows();
    }
    fail(ErrorCode::UnknownColumn, "update: unknown table " + table);
    return {};
}

inline nlohmann::json commitment_to_json(const CommitmentRoot& c) {
    return nlohmann::json{{"root", c.hex()},
                          {"leaf_count", c.leaf_count},
                          {"encoding_version", c.encoding_version}};
}

inline CommitmentRoot commitment_from_json(const nlohmann::json& j) {
    CommitmentRoot c;
    c.encoding_version = j.at("encoding_version").get<std::uint32_t>();
    c.leaf_count = j.at("leaf_count").get<std::size_t>();
    std::string h = j.at("root").get<std::string>();
    if (h.size() != 64) fail(ErrorCode::ParseError, "bad commitment root length");
    for (std::size_t i = 0; i < 32; ++i)
        c.root[i] = std::uint8_t(std::stoul(h.substr(2 * i, 2), nullptr, 16));
    return c;
}

/// Checks that a prover's input database matches a previously published
/// commitment (full recomputation at desk scale).
inline void bind_commitment(const std::map<std::string, Relation>& db, const CommitmentRoot& c) {
    if (c.encoding_version != kCommitmentEncodingVersion)
        fail(ErrorCode::CommitmentMismatch,
             "commitment encoding version " + std::to_string(c.encoding_version) +
                 " is not supported");
    CommitmentRoot now = commit_database(db);
    if (now.root != c.root || now.leaf_count != c.leaf_count)
        fail(ErrorCode::CommitmentMismatch, "database does not match the committed root");
}

} // namespace zql
