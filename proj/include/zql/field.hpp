#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <functional>
#include <string>

#include <gmp.h>

#include "zql/errors.hpp"

namespace zql {

/// Element of the prime field F_r where r is the 254-bit scalar-field order
/// of the BN254 curve. Values are kept canonical (< r) after every operation.
/// Limbs are little-endian 64-bit words, matching GMP's mpn layout.
class Fe {
public:
    static constexpr int kLimbs = 4;

    // r = 21888242871839275222246405745257275088548364400416034343698204186575808495617
    static const mp_limb_t* modulus_limbs() {
        static const mp_limb_t p[kLimbs] = {
            0x43e1f593f0000001ULL,
            0x2833e84879b97091ULL,
            0xb85045b68181585dULL,
            0x30644e72e131a029ULL,
        };
        return p;
    }

    static const std::string& modulus_dec() {
        static const std::string s =
            "21888242871839275222246405745257275088548364400416034343698204186575808495617";
        return s;
    }

    static const std::string& modulus_hex() {
        static const std::string s =
            "30644e72e131a029b85045b68181585d2833e84879b9709143e1f593f0000001";
        return s;
    }

    Fe() { limbs_.fill(0); }

    explicit Fe(std::uint64_t v) {
        limbs_.fill(0);
        limbs_[0] = v;
    }

    static Fe zero() { return Fe(); }
    static Fe one() { return Fe(1); }

    /// Parses a non-negative decimal string, reducing mod r.
    static Fe from_dec(const std::string& s) {
        mpz_t z;
        mpz_init(z);
        if (mpz_set_str(z, s.c_str(), 10) != 0 || mpz_sgn(z) < 0) {
            mpz_clear(z);
            fail(ErrorCode::ParseError, "bad field element literal: " + s);
        }
        Fe out = reduce_mpz(z);
        mpz_clear(z);
        return out;
    }

    /// Interprets 32 big-endian bytes as an integer and reduces mod r.
    static Fe from_bytes_be(const std::uint8_t bytes[32]) {
        mpz_t z;
        mpz_init(z);
        mpz_import(z, 32, 1, 1, 1, 0, bytes);
        Fe out = reduce_mpz(z);
        mpz_clear(z);
        return out;
    }

    std::string to_dec() const {
        mpz_t z;
        mpz_init(z);
        mpz_import(z, kLimbs, -1, sizeof(mp_limb_t), 0, 0, limbs_.data());
        char* s = mpz_get_str(nullptr, 10, z);
        std::string out(s);
        void (*freefn)(void*, size_t);
        mp_get_memory_functions(nullptr, nullptr, &freefn);
        freefn(s, std::strlen(s) + 1);
        mpz_clear(z);
        return out;
    }

    /// Canonical 32-byte big-endian encoding.
    void to_bytes_be(std::uint8_t out[32]) const {
        for (int i = 0; i < kLimbs; ++i) {
            std::uint64_t w = limbs_[kLimbs - 1 - i];
            for (int b = 0; b < 8; ++b) out[i * 8 + b] = std::uint8_t(w >> (56 - 8 * b));
        }
    }

    bool is_zero() const {
        return (limbs_[0] | limbs_[1] | limbs_[2] | limbs_[3]) == 0;
    }

    /// True when the canonical value fits in `bits` bits (bits <= 256).
    bool fits_bits(unsigned bits) const {
        for (int i = 0; i < kLimbs; ++i) {
            unsigned lo = unsigned(i) * 64;
            if (lo >= bits) {
                if (limbs_[i] != 0) return false;
            } else if (lo + 64 > bits) {
                if (limbs_[i] >> (bits - lo)) return false;
            }
        }
        return true;
    }

    /// Low 64 bits of the canonical value; caller checks fits_bits(64) first.
    std::uint64_t low_u64() const { return limbs_[0]; }

    std::uint64_t limb(int i) const { return limbs_[size_t(i)]; }

    Fe operator+(const Fe& o) const {
        Fe r;
        mp_limb_t carry = mpn_add_n(r.limbs_.data(), limbs_.data(), o.limbs_.data(), kLimbs);
        if (carry || mpn_cmp(r.limbs_.data(), modulus_limbs(), kLimbs) >= 0)
            mpn_sub_n(r.limbs_.data(), r.limbs_.data(), modulus_limbs(), kLimbs);
        return r;
    }

    Fe operator-(const Fe& o) const {
        Fe r;
        mp_limb_t borrow = mpn_sub_n(r.limbs_.data(), limbs_.data(), o.limbs_.data(), kLimbs);
        if (borrow) mpn_add_n(r.limbs_.data(), r.limbs_.data(), modulus_limbs(), kLimbs);
        return r;
    }

    Fe operator-() const { return Fe::zero() - *this; }

    Fe operator*(const Fe& o) const {
        mp_limb_t prod[2 * kLimbs];
        mpn_mul_n(prod, limbs_.data(), o.limbs_.data(), kLimbs);
        mp_limb_t quot[kLimbs + 1];
        Fe r;
        mpn_tdiv_qr(quot, r.limbs_.data(), 0, prod, 2 * kLimbs, modulus_limbs(), kLimbs);
        return r;
    }

    Fe& operator+=(const Fe& o) { return *this = *this + o; }
    Fe& operator-=(const Fe& o) { return *this = *this - o; }
    Fe& operator*=(const Fe& o) { return *this = *this * o; }

    Fe inv() const {
        if (is_zero()) fail(ErrorCode::ZeroInverse, "inverse of zero");
        mpz_t a, p, r;
        mpz_inits(a, p, r, nullptr);
        mpz_import(a, kLimbs, -1, sizeof(mp_limb_t), 0, 0, limbs_.data());
        mpz_import(p, kLimbs, -1, sizeof(mp_limb_t), 0, 0, modulus_limbs());
        mpz_invert(r, a, p);
        Fe out;
        size_t n = 0;
        mpz_export(out.limbs_.data(), &n, -1, sizeof(mp_limb_t), 0, 0, r);
        mpz_clears(a, p, r, nullptr);
        return out;
    }

    bool operator==(const Fe& o) const { return limbs_ == o.limbs_; }
    bool operator!=(const Fe& o) const { return limbs_ != o.limbs_; }

    /// Total order on canonical representatives (for deterministic sorting
    /// of witness data, not a field property).
    bool operator<(const Fe& o) const {
        return mpn_cmp(limbs_.data(), o.limbs_.data(), kLimbs) < 0;
    }

private:
    static Fe reduce_mpz(const mpz_t z) {
        mpz_t p, r;
        mpz_inits(p, r, nullptr);
        mpz_import(p, kLimbs, -1, sizeof(mp_limb_t), 0, 0, modulus_limbs());
        mpz_mod(r, z, p);
        Fe out;
        size_t n = 0;
        mpz_export(out.limbs_.data(), &n, -1, sizeof(mp_limb_t), 0, 0, r);
        mpz_clears(p, r, nullptr);
        return out;
    }

    std::array<mp_limb_t, kLimbs> limbs_;
};

static_assert(sizeof(mp_limb_t) == 8, "64-bit limbs expected");

/// 2^k as a field element, k < 254.
inline Fe fe_pow2(unsigned k) {
    Fe r = Fe::one();
    Fe two(2);
    for (unsigned i = 0; i < k; ++i) r *= two;
    return r;
}

struct FeHash {
    std::size_t operator()(const Fe& f) const {
        std::size_t h = 0x9e3779b97f4a7c15ULL;
        for (int i = 0; i < Fe::kLimbs; ++i)
            h ^= std::hash<std::uint64_t>{}(f.limb(i)) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
        return h;
    }
};

} // namespace zql
