#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "zql/gadgets.hpp"

using namespace zql;

namespace {

void set_test_challenges(Assignment& asg) {
    asg.challenges()[0] = Fe::from_dec("982451653000000007");
    asg.challenges()[1] = Fe::from_dec("1787569463");
    asg.challenges()[2] = Fe::from_dec("104729");
}

std::vector<Fe> fes(const std::vector<std::uint64_t>& v) {
    std::vector<Fe> out;
    for (auto x : v) out.push_back(Fe(x));
    return out;
}

} // namespace

TEST_CASE("permutation argument accepts values drawn from the table") {
    CircuitBuilder b;
    PermutationArgument pa = build_permutation_argument(b, 4, fes({0, 1, 2, 3}), "rc");
    b.freeze();
    Assignment asg(b.cs);
    set_test_challenges(asg);
    pa.fill(b.cs, asg, fes({0, 2, 1, 3}));
    pa.fill_accumulator(b.cs, asg);
    CHECK(check_satisfied(b.cs, asg).ok);
    // Z closes at one.
    CHECK(asg.at(b.cs, pa.z, pa.len) == Fe::one());
}

TEST_CASE("permutation argument with duplicates and short P") {
    // all-equal values are fine as long as the value is in the table
    CircuitBuilder b;
    std::vector<Fe> table;
    for (std::uint64_t i = 0; i < 10; ++i) table.push_back(Fe(i));
    PermutationArgument pa = build_permutation_argument(b, 6, table, "rc");
    b.freeze();
    Assignment asg(b.cs);
    set_test_challenges(asg);
    pa.fill(b.cs, asg, fes({7, 7, 7, 7, 7, 7}));
    pa.fill_accumulator(b.cs, asg);
    CHECK(check_satisfied(b.cs, asg).ok);

    // |P| < |Q|: P is padded with a table value
    CircuitBuilder b2;
    PermutationArgument pa2 = build_permutation_argument(b2, 1, fes({0, 1, 2, 3}), "rc");
    CHECK(pa2.len == 4);
    b2.freeze();
    Assignment asg2(b2.cs);
    set_test_challenges(asg2);
    pa2.fill(b2.cs, asg2, fes({3}));
    pa2.fill_accumulator(b2.cs, asg2);
    CHECK(check_satisfied(b2.cs, asg2).ok);
}

TEST_CASE("permutation argument rejects out-of-table values at fill time") {
    CircuitBuilder b;
    PermutationArgument pa = build_permutation_argument(b, 2, fes({0, 1, 2, 3}), "rc");
    b.freeze();
    Assignment asg(b.cs);
    set_test_challenges(asg);
    CHECK_THROWS_AS(pa.fill(b.cs, asg, fes({1, 5})), Error);
}

TEST_CASE("permutation argument catches a tampered cell") {
    CircuitBuilder b;
    PermutationArgument pa = build_permutation_argument(b, 4, fes({0, 1, 2, 3}), "rc");
    b.freeze();
    Assignment honest(b.cs);
    set_test_challenges(honest);
    pa.fill(b.cs, honest, fes({0, 2, 1, 3}));
    pa.fill_accumulator(b.cs, honest);
    REQUIRE(check_satisfied(b.cs, honest).ok);

    // smuggle an out-of-range value into P after the fact
    Assignment t = honest;
    t.set(b.cs, pa.p, 1, Fe(9));
    CHECK(!check_satisfied(b.cs, t).ok);
    // or corrupt the sorted column
    t = honest;
    t.set(b.cs, pa.p_prime, 2, Fe(0));
    CHECK(!check_satisfied(b.cs, t).ok);
}

TEST_CASE("range check batch binds an external column") {
    CircuitBuilder b;
    ColumnId vals = b.advice("vals");
    PermutationArgument pa = build_range_check_batch(b, vals, 3, 15, "rc");
    b.freeze();
    Assignment asg(b.cs);
    set_test_challenges(asg);
    asg.set(b.cs, vals, 0, Fe(5));
    asg.set(b.cs, vals, 1, Fe(15));
    asg.set(b.cs, vals, 2, Fe(0));
    pa.fill(b.cs, asg, fes({5, 15, 0}));
    pa.fill_accumulator(b.cs, asg);
    CHECK(check_satisfied(b.cs, asg).ok);
    // a value that disagrees with the bound copy breaks it
    asg.set(b.cs, vals, 1, Fe(14));
    CHECK(!check_satisfied(b.cs, asg).ok);
}

TEST_CASE("eq1 constraint count is max(|P|, |Q|)") {
    for (auto [plen, qlen] : std::vector<std::pair<std::size_t, std::size_t>>{
             {4, 4}, {2, 7}, {9, 3}, {1, 1}}) {
        CircuitBuilder b;
        std::vector<Fe> q;
        for (std::uint64_t i = 0; i < qlen; ++i) q.push_back(Fe(i));
        build_permutation_argument(b, plen, q, "rc");
        b.freeze();
        for (const auto& r : evaluate_expectations(b)) {
            INFO(r.expectation.prefix << " expected " << r.expectation.expected << " got "
                                      << r.actual);
            CHECK(r.match);
        }
        ConstraintReport rep = count_constraints(b.cs);
        CHECK(rep.gate_rows("rc.eq1_first") + rep.gate_rows("rc.eq1_mid") ==
              std::max(plen, qlen));
    }
}

TEST_CASE("u8 limb decomposition matches byte oracle") {
    CircuitBuilder b;
    ColumnId v = b.advice("v");
    LimbDecomposition dec = build_limb_range_check(b, v, 2, 8, "dec");
    b.freeze();
    Assignment asg(b.cs);
    set_test_challenges(asg);
    asg.set(b.cs, v, 0, Fe(0x0123456789ABCDEFULL));
    asg.set(b.cs, v, 1, Fe(0));
    dec.fill(b.cs, asg);
    const std::uint64_t want[8] = {0xEF, 0xCD, 0xAB, 0x89, 0x67, 0x45, 0x23, 0x01};
    for (int j = 0; j < 8; ++j) CHECK(asg.at(b.cs, dec.limbs[std::size_t(j)], 0) == Fe(want[j]));
    CHECK(check_satisfied(b.cs, asg).ok);

    // tampered limb breaks either the recomposition or the u8 lookup
    asg.set(b.cs, dec.limbs[3], 0, Fe(0x88));
    CHECK(!check_satisfied(b.cs, asg).ok);
}

TEST_CASE("limb decomposition rejects values beyond the bit width") {
    CircuitBuilder b;
    ColumnId v = b.advice("v");
    LimbDecomposition dec = build_limb_range_check(b, v, 1, 2, "dec"); // 16 bits
    b.freeze();
    Assignment asg(b.cs);
    set_test_challenges(asg);
    asg.set(b.cs, v, 0, Fe(65536));
    CHECK_THROWS_AS(dec.fill(b.cs, asg), Error);
    asg.set(b.cs, v, 0, Fe(65535));
    CHECK_NOTHROW(dec.fill(b.cs, asg));
    CHECK(check_satisfied(b.cs, asg).ok);
}

TEST_CASE("less-than is exhaustively correct on the table path") {
    const std::size_t n = 256;
    CircuitBuilder b;
    ColumnId x = b.advice("x"), t = b.advice("t");
    LessThan lt = build_less_than(b, cell(x), cell(t), n, 4, "lt"); // u = 16
    b.freeze();
    Assignment asg(b.cs);
    set_test_challenges(asg);
    std::vector<std::uint64_t> xs, ts;
    for (std::uint64_t xv = 0; xv < 16; ++xv)
        for (std::uint64_t tv = 0; tv < 16; ++tv) {
            xs.push_back(xv);
            ts.push_back(tv);
        }
    for (std::size_t r = 0; r < n; ++r) {
        asg.set(b.cs, x, r, Fe(xs[r]));
        asg.set(b.cs, t, r, Fe(ts[r]));
    }
    lt.fill(b.cs, asg, xs, ts);
    for (std::size_t r = 0; r < n; ++r)
        CHECK(asg.at(b.cs, lt.check, r) == (xs[r] < ts[r] ? Fe::one() : Fe::zero()));
    CHECK(check_satisfied(b.cs, asg).ok);

    // flipping any check bit must break a constraint
    for (std::size_t r : {std::size_t(0), std::size_t(17), std::size_t(255)}) {
        Assignment bad = asg;
        bad.set(b.cs, lt.check, r, Fe::one() - asg.at(b.cs, lt.check, r));
        CHECK(!check_satisfied(b.cs, bad).ok);
    }
}

TEST_CASE("less-than limb path agrees with the table path") {
    std::mt19937_64 rng(42);
    const std::size_t n = 16;
    std::vector<std::uint64_t> xs, ts;
    for (std::size_t i = 0; i < n; ++i) {
        xs.push_back(rng() % 4096);
        ts.push_back(rng() % 4096);
    }

    auto run = [&](unsigned u_bits) {
        CircuitBuilder b;
        ColumnId x = b.advice("x"), t = b.advice("t");
        LessThan lt = build_less_than(b, cell(x), cell(t), n, u_bits, "lt");
        b.freeze();
        Assignment asg(b.cs);
        set_test_challenges(asg);
        for (std::size_t r = 0; r < n; ++r) {
            asg.set(b.cs, x, r, Fe(xs[r]));
            asg.set(b.cs, t, r, Fe(ts[r]));
        }
        lt.fill(b.cs, asg, xs, ts);
        REQUIRE(check_satisfied(b.cs, asg).ok);
        std::vector<bool> bits;
        for (std::size_t r = 0; r < n; ++r) bits.push_back(asg.at(b.cs, lt.check, r) == Fe::one());
        return bits;
    };

    CHECK(run(16) == run(13)); // limb path vs table path
    auto bits = run(16);
    for (std::size_t r = 0; r < n; ++r) CHECK(bits[r] == (xs[r] < ts[r]));
}

TEST_CASE("less-than with 64-bit bound") {
    const std::size_t n = 4;
    CircuitBuilder b;
    ColumnId x = b.advice("x"), t = b.advice("t");
    LessThan lt = build_less_than(b, cell(x), cell(t), n, 64, "lt");
    b.freeze();
    Assignment asg(b.cs);
    set_test_challenges(asg);
    std::vector<std::uint64_t> xs = {0, 0xFFFFFFFFFFFFFFFFULL, 12345, 12345};
    std::vector<std::uint64_t> ts = {0xFFFFFFFFFFFFFFFFULL, 0, 12345, 12346};
    for (std::size_t r = 0; r < n; ++r) {
        asg.set(b.cs, x, r, Fe(xs[r]));
        asg.set(b.cs, t, r, Fe(ts[r]));
    }
    lt.fill(b.cs, asg, xs, ts);
    CHECK(check_satisfied(b.cs, asg).ok);
    CHECK(asg.at(b.cs, lt.check, 0) == Fe::one());
    CHECK(asg.at(b.cs, lt.check, 1) == Fe::zero());
    CHECK(asg.at(b.cs, lt.check, 2) == Fe::zero());
    CHECK(asg.at(b.cs, lt.check, 3) == Fe::one());
}

TEST_CASE("is-zero is exhaustively correct and resists the lazy cheat") {
    const std::size_t n = 64;
    CircuitBuilder b;
    ColumnId x = b.advice("x"), y = b.advice("y");
    IsZero iz = build_is_zero(b, cell(x), cell(y), 0, n, "iz");
    b.freeze();
    Assignment asg(b.cs);
    set_test_challenges(asg);
    std::vector<Fe> diffs;
    std::size_t r = 0;
    for (std::uint64_t xv = 0; xv < 8; ++xv)
        for (std::uint64_t yv = 0; yv < 8; ++yv, ++r) {
            asg.set(b.cs, x, r, Fe(xv));
            asg.set(b.cs, y, r, Fe(yv));
            diffs.push_back(Fe(xv) - Fe(yv));
        }
    iz.fill(b.cs, asg, diffs);
    r = 0;
    for (std::uint64_t xv = 0; xv < 8; ++xv)
        for (std::uint64_t yv = 0; yv < 8; ++yv, ++r)
            CHECK(asg.at(b.cs, iz.b, r) == (xv == yv ? Fe::one() : Fe::zero()));
    CHECK(check_satisfied(b.cs, asg).ok);

    // claim "equal" on an unequal row with p = 0: the product gate fires
    Assignment bad = asg;
    bad.set(b.cs, iz.p, 1, Fe::zero()); // row 1: x=0, y=1
    bad.set(b.cs, iz.b, 1, Fe::one());
    Verdict v = check_satisfied(b.cs, bad);
    REQUIRE(!v.ok);
    bool product_failed = false;
    for (const auto& f : v.failures) product_failed |= f.name.rfind("iz.product", 0) == 0;
    CHECK(product_failed);
}

TEST_CASE("running accumulator resets per flag") {
    const std::size_t n = 4;
    CircuitBuilder b;
    ColumnId v = b.advice("v"), rst = b.advice("rst");
    RunningAccumulator ra = build_running_accumulator(b, cell(v), cell(rst), n, "acc");
    b.freeze();
    Assignment asg(b.cs);
    set_test_challenges(asg);
    std::vector<Fe> values = fes({4, 1, 1, 2});
    std::vector<bool> resets = {true, false, true, false};
    for (std::size_t r = 0; r < n; ++r) {
        asg.set(b.cs, v, r, values[r]);
        asg.set(b.cs, rst, r, resets[r] ? Fe::one() : Fe::zero());
    }
    ra.fill(b.cs, asg, values, resets);
    CHECK(asg.at(b.cs, ra.m, 0) == Fe(4));
    CHECK(asg.at(b.cs, ra.m, 1) == Fe(5));
    CHECK(asg.at(b.cs, ra.m, 2) == Fe(1));
    CHECK(asg.at(b.cs, ra.m, 3) == Fe(3));
    CHECK(check_satisfied(b.cs, asg).ok);

    asg.set(b.cs, ra.m, 1, Fe(6));
    CHECK(!check_satisfied(b.cs, asg).ok);
}

TEST_CASE("grand product proves multiset equality of two columns") {
    const std::size_t n = 5;
    CircuitBuilder b;
    ColumnId lhs = b.advice("lhs"), rhs = b.advice("rhs");
    GrandProduct gp = build_grand_product(b, cell(lhs) + chal(b.alpha),
                                          cell(rhs) + chal(b.alpha), n, "gp");
    b.freeze();

    Assignment asg(b.cs);
    set_test_challenges(asg);
    std::vector<Fe> a = fes({3, 1, 4, 1, 5});
    std::vector<Fe> perm = fes({1, 5, 3, 4, 1});
    for (std::size_t r = 0; r < n; ++r) {
        asg.set(b.cs, lhs, r, a[r]);
        asg.set(b.cs, rhs, r, perm[r]);
    }
    gp.fill(b.cs, asg);
    CHECK(check_satisfied(b.cs, asg).ok);
    CHECK(asg.at(b.cs, gp.z, n) == Fe::one());

    // not a permutation: the fill itself refuses (telescoping product != 1)
    Assignment bad(b.cs);
    set_test_challenges(bad);
    for (std::size_t r = 0; r < n; ++r) {
        bad.set(b.cs, lhs, r, a[r]);
        bad.set(b.cs, rhs, r, r == 0 ? Fe(9) : perm[r]);
    }
    CHECK_THROWS_AS(gp.fill(b.cs, bad), Error);
}

TEST_CASE("row fingerprints distinguish tuples and respect attribute order") {
    Fe g = Fe::from_dec("998244353");
    CHECK(fingerprint_value({Fe(1), Fe(2)}, g) != fingerprint_value({Fe(2), Fe(1)}, g));
    CHECK(fingerprint_value({Fe(1), Fe(2)}, g) == fingerprint_value({Fe(1), Fe(2)}, g));

    // expression form evaluates to the same value
    CircuitBuilder b;
    ColumnId c0 = b.advice("c0"), c1 = b.advice("c1");
    ExprPtr fp = row_fingerprint({cell(c0), cell(c1)}, b.gamma);
    b.freeze();
    Assignment asg(b.cs);
    set_test_challenges(asg);
    asg.set(b.cs, c0, 0, Fe(1));
    asg.set(b.cs, c1, 0, Fe(2));
    CHECK(eval_expr(*fp, b.cs, asg, 0) == fingerprint_value({Fe(1), Fe(2)}, asg.challenges()[2]));
}

TEST_CASE("masked range accepts masked-off rows and rejects negatives") {
    const std::size_t n = 4;
    CircuitBuilder b;
    ColumnId m = b.advice("m"), x = b.advice("x"), y = b.advice("y");
    MaskedRange mr = build_masked_range(b, cell(m), cell(x) - cell(y), 0, n, 1, "mr");
    b.freeze();
    Assignment asg(b.cs);
    set_test_challenges(asg);
    // rows: (mask, x, y): masked rows may hold any difference
    std::vector<std::uint64_t> ms = {1, 0, 1, 0}, xs = {9, 3, 200, 0}, ys = {4, 7, 0, 5};
    std::vector<Fe> ws;
    for (std::size_t r = 0; r < n; ++r) {
        asg.set(b.cs, m, r, Fe(ms[r]));
        asg.set(b.cs, x, r, Fe(xs[r]));
        asg.set(b.cs, y, r, Fe(ys[r]));
        ws.push_back(Fe(ms[r]) * (Fe(xs[r]) - Fe(ys[r])));
    }
    mr.fill(b.cs, asg, ws);
    CHECK(check_satisfied(b.cs, asg).ok);

    // unmasked negative difference: w would be a huge field element
    Assignment bad(b.cs);
    set_test_challenges(bad);
    bad.set(b.cs, m, 0, Fe(1));
    bad.set(b.cs, x, 0, Fe(3));
    bad.set(b.cs, y, 0, Fe(7));
    std::vector<Fe> bws = {Fe(3) - Fe(7), Fe(0), Fe(0), Fe(0)};
    CHECK_THROWS_AS(mr.fill(b.cs, bad, bws), Error);
}

TEST_CASE("prefix flag gates accept prefixes of ones only") {
    auto run = [](const std::vector<std::uint64_t>& flags) {
        CircuitBuilder b;
        ColumnId f = b.advice("f");
        add_prefix_flag_gates(b, f, flags.size(), "valid");
        b.freeze();
        Assignment asg(b.cs);
        set_test_challenges(asg);
        for (std::size_t r = 0; r < flags.size(); ++r) asg.set(b.cs, f, r, Fe(flags[r]));
        return check_satisfied(b.cs, asg).ok;
    };
    CHECK(run({1, 1, 0, 0}));
    CHECK(run({1, 1, 1, 1}));
    CHECK(run({0, 0, 0, 0}));
    CHECK(!run({1, 0, 1, 0}));
    CHECK(!run({0, 1, 1, 1}));
    CHECK(!run({1, 2, 0, 0}));
}
