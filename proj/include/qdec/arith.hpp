#pragma once

#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace qdec {

// Thrown when an enumeration or grid would exceed its configured budget.
struct ResourceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Thrown by verification routines when a checked inequality or identity fails.
struct VerificationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

inline std::int64_t checked_mul(std::int64_t a, std::int64_t b) {
    std::int64_t r;
    if (__builtin_mul_overflow(a, b, &r)) throw std::overflow_error("int64 multiply overflow");
    return r;
}

inline std::int64_t checked_add(std::int64_t a, std::int64_t b) {
    std::int64_t r;
    if (__builtin_add_overflow(a, b, &r)) throw std::overflow_error("int64 add overflow");
    return r;
}

inline std::int64_t ipow(std::int64_t base, int e) {
    if (e < 0) throw std::invalid_argument("ipow: negative exponent");
    std::int64_t r = 1;
    for (int i = 0; i < e; ++i) r = checked_mul(r, base);
    return r;
}

// Non-negative residue of a mod m (m > 0).
inline std::int64_t mod(std::int64_t a, std::int64_t m) {
    std::int64_t r = a % m;
    return r < 0 ? r + m : r;
}

inline std::int64_t mulmod(std::int64_t a, std::int64_t b, std::int64_t m) {
    return static_cast<std::int64_t>(static_cast<__int128>(mod(a, m)) * mod(b, m) % m);
}

inline std::int64_t addmod(std::int64_t a, std::int64_t b, std::int64_t m) {
    return static_cast<std::int64_t>((static_cast<__int128>(mod(a, m)) + mod(b, m)) % m);
}

// Inverse of a modulo m; throws when gcd(a, m) != 1.
inline std::int64_t invmod(std::int64_t a, std::int64_t m) {
    if (m == 1) return 0;
    std::int64_t old_r = mod(a, m), r = m;
    std::int64_t old_s = 1, s = 0;
    while (r != 0) {
        std::int64_t qt = old_r / r;
        std::int64_t t = old_r - qt * r;
        old_r = r;
        r = t;
        t = old_s - qt * s;
        old_s = s;
        s = t;
    }
    if (old_r != 1) throw std::domain_error("invmod: not invertible");
    return mod(old_s, m);
}

inline bool is_prime(std::int64_t n) {
    if (n < 2) return false;
    for (std::int64_t d = 2; d * d <= n; ++d)
        if (n % d == 0) return false;
    return true;
}

inline std::int64_t factorial(int n) {
    std::int64_t r = 1;
    for (int i = 2; i <= n; ++i) r = checked_mul(r, i);
    return r;
}

}  // namespace detail
}  // namespace qdec
