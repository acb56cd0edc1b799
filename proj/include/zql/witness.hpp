#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "zql/compiler.hpp"
#include "zql/evaluator.hpp"
#include "zql/transcript.hpp"

namespace zql {

/// Everything the prover produces for one query run: the full cell
/// assignment, the public result rows, the circuit shape digest and the seed
/// that anchors the challenge transcript. `pins` lists constrained advice
/// cells for the tamper harness and is not serialized.
struct WitnessBundle {
    Assignment assignment;
    Relation public_result;
    ShapeDigest digest;
    std::uint64_t seed = 0;
    std::string commitment_root; // lowercase hex; empty until bound
    PinList pins;
};

/// Column hashes that feed the challenge transcript: every phase-0 advice
/// column plus every instance column, in declaration order. Phase-1 columns
/// are excluded — they may depend on the challenges.
inline std::vector<std::array<std::uint8_t, 32>> transcript_hashes(const ConstraintSystem& cs,
                                                                   const Assignment& asg) {
    std::vector<std::array<std::uint8_t, 32>> out;
    for (const auto& ci : cs.columns()) {
        if (ci.id.kind == ColumnKind::Advice && ci.phase == 0)
            out.push_back(asg.column_hash(cs, ci.id));
        else if (ci.id.kind == ColumnKind::Instance)
            out.push_back(asg.column_hash(cs, ci.id));
    }
    return out;
}

/// Fiat-Shamir: challenges are a hash of the circuit shape, the run seed and
/// the committed (hashed) phase-0 columns. The verifier re-derives them from
/// the same data, so a prover cannot pick challenges to suit the witness.
inline std::vector<Fe> derive_challenges(const ConstraintSystem& cs, std::uint64_t seed,
                                         const std::vector<std::array<std::uint8_t, 32>>& hashes) {
    Transcript t;
    std::string shape = shape_digest(cs).combined_hex();
    t.absorb("shape", reinterpret_cast<const std::uint8_t*>(shape.data()), shape.size());
    std::uint8_t sb[8];
    for (int i = 0; i < 8; ++i) sb[i] = std::uint8_t(seed >> (8 * (7 - i)));
    t.absorb("seed", sb, 8);
    for (const auto& h : hashes) t.absorb("col", h.data(), h.size());
    std::vector<Fe> ch;
    for (int i = 0; i < cs.challenge_count(); ++i)
        ch.push_back(t.challenge("challenge." + std::to_string(i)));
    return ch;
}

/// Runs the full two-phase fill: data-dependent columns, then challenges,
/// then the challenge-dependent accumulators. Honest inputs must satisfy the
/// system; anything else is a defect, not a user error.
inline WitnessBundle generate_witness(const CompiledQuery& q,
                                      const std::map<std::string, Relation>& db,
                                      std::uint64_t seed = 0) {
    WitnessBundle w;
    w.seed = seed;
    w.assignment = Assignment(q.b.cs);
    TableData fin = q.fill_phase1(w.assignment, db, &w.pins);
    w.public_result = q.public_result(fin);
    w.digest = shape_digest(q.b.cs);
    w.assignment.challenges() =
        derive_challenges(q.b.cs, seed, transcript_hashes(q.b.cs, w.assignment));
    q.fill_phase2(w.assignment, &w.pins);
    Verdict v = check_satisfied(q.b.cs, w.assignment);
    if (!v.ok)
        fail(ErrorCode::InternalInconsistency,
             "honest witness fails its own constraints (first: " +
                 (v.failures.empty() ? std::string("?") : v.failures[0].name) + ")");
    return w;
}

/// Returns a modified copy of the bundle; the input is never mutated. Only
/// advice and instance cells are legal targets.
inline WitnessBundle tamper(const ConstraintSystem& cs, const WitnessBundle& bundle,
                            ColumnId col, std::size_t row, const Fe& value) {
    if (col.kind != ColumnKind::Advice && col.kind != ColumnKind::Instance)
        fail(ErrorCode::OutOfRange, "tamper targets must be advice or instance cells");
    if (row >= cs.row_count()) fail(ErrorCode::OutOfRange, "tamper row out of range");
    WitnessBundle t = bundle;
    t.assignment.set(cs, col, row, value);
    return t;
}

struct VerifyOutcome {
    bool ok = false;
    std::string reason; // empty when ok
    Verdict verdict;
};

/// Full (desk-scale) verification of a bundle against a recompiled circuit:
/// shape digest, re-derived challenges, then every constraint.
inline VerifyOutcome verify_witness(const ConstraintSystem& cs, const WitnessBundle& w) {
    VerifyOutcome out;
    if (shape_digest(cs).combined_hex() != w.digest.combined_hex()) {
        out.reason = "shape digest mismatch";
        return out;
    }
    std::vector<Fe> want = derive_challenges(cs, w.seed, transcript_hashes(cs, w.assignment));
    if (want != w.assignment.challenges()) {
        out.reason = "challenges do not match the transcript";
        return out;
    }
    out.verdict = check_satisfied(cs, w.assignment);
    if (!out.verdict.ok) {
        out.reason = "constraint failure at " + (out.verdict.failures.empty()
                                                     ? std::string("?")
                                                     : out.verdict.failures[0].name);
        return out;
    }
    out.ok = true;
    return out;
}

} // namespace zql
