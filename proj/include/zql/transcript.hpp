#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "zql/field.hpp"

namespace zql {

inline std::array<std::uint8_t, 32> sha256(const std::uint8_t* data, std::size_t len) {
    std::array<std::uint8_t, 32> out{};
    unsigned int n = 0;
    EVP_Digest(data, len, out.data(), &n, EVP_sha256(), nullptr);
    return out;
}

inline std::array<std::uint8_t, 32> sha256(const std::vector<std::uint8_t>& v) {
    return sha256(v.data(), v.size());
}

inline std::string hex_encode(const std::uint8_t* data, std::size_t len) {
    static const char* digits = "0123456789abcdef";
    std::string s;
    s.reserve(len * 2);
    for (std::size_t i = 0; i < len; ++i) {
        s.push_back(digits[data[i] >> 4]);
        s.push_back(digits[data[i] & 0xf]);
    }
    return s;
}

/// Fiat-Shamir transcript. Absorbs length-prefixed byte strings into a running
/// buffer; each challenge hashes (buffer || label || counter) with SHA-256 and
/// reduces the digest mod the field order. The digest is folded back into the
/// buffer so later challenges depend on earlier ones.
class Transcript {
public:
    static constexpr const char* kHashName = "sha256";

    Transcript() = default;

    void absorb(const std::string& label, const std::uint8_t* data, std::size_t len) {
        append_u64(state_, label.size());
        state_.insert(state_.end(), label.begin(), label.end());
        append_u64(state_, len);
        state_.insert(state_.end(), data, data + len);
    }

    void absorb(const std::string& label, const std::vector<std::uint8_t>& data) {
        absorb(label, data.data(), data.size());
    }

    void absorb_field(const std::string& label, const Fe& f) {
        std::uint8_t buf[32];
        f.to_bytes_be(buf);
        absorb(label, buf, 32);
    }

    Fe challenge(const std::string& label) {
        std::vector<std::uint8_t> buf = state_;
        append_u64(buf, label.size());
        buf.insert(buf.end(), label.begin(), label.end());
        append_u64(buf, counter_);
        auto digest = sha256(buf);
        ++counter_;
        absorb("chal." + label, digest.data(), digest.size());
        return Fe::from_bytes_be(digest.data());
    }

private:
    static void append_u64(std::vector<std::uint8_t>& v, std::uint64_t x) {
        for (int i = 7; i >= 0; --i) v.push_back(std::uint8_t(x >> (8 * i)));
    }

    std::vector<std::uint8_t> state_;
    std::uint64_t counter_ = 0;
};

} // namespace zql
