// Shared error types, content hashing, and number formatting for ood-scope.
#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace oodscope {

/// Bad caller input: malformed files, shape mismatches, out-of-range
/// parameters. Maps to CLI exit code 1.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The math gave up: non-convergence, matrices indefinite beyond the ridge
/// schedule, non-finite results. Maps to CLI exit code 2.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Incremental FNV-1a (64-bit). Used for model fingerprints and file
/// checksums; not cryptographic.
class Fnv1a {
public:
    void update(const void* data, std::size_t size) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < size; ++i) {
            state_ ^= static_cast<std::uint64_t>(p[i]);
            state_ *= 0x100000001b3ULL;
        }
    }

    void update_u64(std::uint64_t v) {
        unsigned char bytes[8];
        for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(v >> (8 * i));
        update(bytes, 8);
    }

    void update_i64(std::int64_t v) { update_u64(static_cast<std::uint64_t>(v)); }

    void update_f64(double v) { update_u64(std::bit_cast<std::uint64_t>(v)); }

    [[nodiscard]] std::uint64_t digest() const { return state_; }

private:
    std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

/// Shortest text form that round-trips a double exactly (17 significant
/// digits).
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string format_hex_u64(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace oodscope
