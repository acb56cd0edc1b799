#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "zql/field.hpp"
#include "zql/transcript.hpp"

using namespace zql;

namespace {

Fe random_fe(std::mt19937_64& rng) {
    std::uint8_t buf[32];
    for (auto& b : buf) b = std::uint8_t(rng());
    return Fe::from_bytes_be(buf);
}

} // namespace

TEST_CASE("addition basics") {
    Fe x(12345);
    CHECK(Fe::zero() + x == x);
    CHECK(Fe(17) + Fe(25) == Fe(42));
    Fe pm1 = Fe::from_dec(Fe::modulus_dec()) - Fe::one(); // modulus reduces to 0
    CHECK(Fe::from_dec(Fe::modulus_dec()) == Fe::zero());
    CHECK(pm1 + Fe::one() == Fe::zero());
}

TEST_CASE("multiplication basics") {
    Fe x(987654321);
    CHECK(Fe::one() * x == x);
    CHECK(Fe::zero() * x == Fe::zero());
    CHECK(Fe(3) * Fe(9) == Fe(27));
    // 3 * (1 + 2) * 3 = 27
    CHECK(Fe(3) * (Fe(1) + Fe(2)) * Fe(3) == Fe(27));
}

TEST_CASE("inverse") {
    CHECK(Fe::one().inv() == Fe::one());
    CHECK_THROWS_AS(Fe::zero().inv(), Error);

    std::mt19937_64 rng(7);
    for (int i = 0; i < 100; ++i) {
        Fe a = random_fe(rng);
        if (a.is_zero()) continue;
        CHECK(a * a.inv() == Fe::one());
    }
}

TEST_CASE("field axioms on random triples") {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 1000; ++i) {
        Fe a = random_fe(rng), b = random_fe(rng), c = random_fe(rng);
        CHECK((a + b) + c == a + (b + c));
        CHECK((a * b) * c == a * (b * c));
        CHECK(a + b == b + a);
        CHECK(a * b == b * a);
        CHECK(a * (b + c) == a * b + a * c);
        CHECK(a - a == Fe::zero());
    }
}

TEST_CASE("decimal and byte round trips") {
    std::mt19937_64 rng(13);
    for (int i = 0; i < 50; ++i) {
        Fe a = random_fe(rng);
        CHECK(Fe::from_dec(a.to_dec()) == a);
        std::uint8_t buf[32];
        a.to_bytes_be(buf);
        CHECK(Fe::from_bytes_be(buf) == a);
    }
    CHECK(Fe(1).fits_bits(1));
    CHECK(!Fe(2).fits_bits(1));
    CHECK(Fe(0xFFFFFFFFFFFFFFFFULL).fits_bits(64));
    CHECK(!(Fe(0xFFFFFFFFFFFFFFFFULL) + Fe::one()).fits_bits(64));
}

TEST_CASE("transcript determinism") {
    Transcript t1, t2;
    t1.absorb("data", {1, 2, 3});
    t2.absorb("data", {1, 2, 3});
    Fe c1 = t1.challenge("alpha");
    Fe c2 = t2.challenge("alpha");
    CHECK(c1 == c2);
    CHECK(t1.challenge("beta") == t2.challenge("beta"));
}

TEST_CASE("transcript sensitivity to a single byte") {
    Transcript t1, t2;
    t1.absorb("data", {1, 2, 3});
    t2.absorb("data", {1, 2, 4});
    CHECK(t1.challenge("alpha") != t2.challenge("alpha"));
}

TEST_CASE("challenges are canonical field elements") {
    Transcript t;
    t.absorb("data", {9, 9});
    for (int i = 0; i < 20; ++i) {
        Fe c = t.challenge("c");
        CHECK(Fe::from_dec(c.to_dec()) == c); // canonical round trip
    }
}
