#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "qdec/arith.hpp"

namespace qdec {

using BigInt = boost::multiprecision::cpp_int;
using BigRational = boost::multiprecision::cpp_rational;

inline constexpr std::uint64_t kDefaultTupleBudget = 200'000'000;

// Worker count from QDEC_THREADS (default 1).
inline unsigned thread_count() {
    if (const char* s = std::getenv("QDEC_THREADS")) {
        char* end = nullptr;
        long v = std::strtol(s, &end, 10);
        if (end != s && v > 0) return static_cast<unsigned>(std::min(v, 256L));
    }
    return 1;
}

namespace detail {

struct KeyHash {
    std::size_t operator()(const std::vector<std::int64_t>& v) const noexcept {
        std::uint64_t h = 1469598103934665603ULL;
        for (auto x : v) {
            h ^= static_cast<std::uint64_t>(x) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
        }
        return static_cast<std::size_t>(h);
    }
};

using Histogram = std::unordered_map<std::vector<std::int64_t>, std::uint64_t, KeyHash>;

inline void check_tuple_budget(const std::vector<std::vector<std::int64_t>>& slots, std::uint64_t budget) {
    long double n = 1;
    for (const auto& s : slots) n *= static_cast<long double>(s.size());
    if (n > static_cast<long double>(budget)) throw ResourceError("tuple enumeration exceeds budget");
}

// Histogram of power-sum keys (sum x_i^j, optionally mod moduli[j-1]) over tuples drawn from the
// per-position value lists, keeping tuples accepted by keep. Split over the first position.
inline Histogram power_sum_histogram(const std::vector<std::vector<std::int64_t>>& slots, int k,
                                     const std::vector<std::int64_t>& moduli,
                                     const std::function<bool(const std::vector<std::int64_t>&)>& keep,
                                     std::uint64_t budget) {
    check_tuple_budget(slots, budget);
    int s = static_cast<int>(slots.size());
    if (s == 0) return Histogram{{std::vector<std::int64_t>(static_cast<std::size_t>(k), 0), 1}};
    for (const auto& slot : slots)
        if (slot.empty()) return {};
    auto power = [&](std::int64_t x, int j) {
        std::int64_t m = moduli[static_cast<std::size_t>(j - 1)];
        std::int64_t r = 1;
        for (int t = 0; t < j; ++t) r = m ? mulmod(r, x, m) : checked_mul(r, x);
        return r;
    };
    auto work = [&](std::size_t first_lo, std::size_t first_hi) {
        Histogram h;
        std::vector<std::size_t> idx(static_cast<std::size_t>(s), 0);
        std::vector<std::int64_t> tup(static_cast<std::size_t>(s));
        std::vector<std::int64_t> key(static_cast<std::size_t>(k));
        for (std::size_t f = first_lo; f < first_hi; ++f) {
            std::fill(idx.begin(), idx.end(), 0);
            idx[0] = f;
            bool done = false;
            while (!done) {
                for (int i = 0; i < s; ++i) tup[static_cast<std::size_t>(i)] = slots[static_cast<std::size_t>(i)][idx[static_cast<std::size_t>(i)]];
                if (!keep || keep(tup)) {
                    for (int j = 1; j <= k; ++j) {
                        std::int64_t m = moduli[static_cast<std::size_t>(j - 1)];
                        std::int64_t acc = 0;
                        for (auto x : tup) acc = m ? addmod(acc, power(x, j), m) : checked_add(acc, power(x, j));
                        key[static_cast<std::size_t>(j - 1)] = acc;
                    }
                    ++h[key];
                }
                int i = 1;
                for (; i < s; ++i) {
                    if (++idx[static_cast<std::size_t>(i)] < slots[static_cast<std::size_t>(i)].size()) break;
                    idx[static_cast<std::size_t>(i)] = 0;
                }
                done = (i == s);
            }
        }
        return h;
    };
    std::size_t n0 = slots[0].size();
    unsigned T = std::max(1u, std::min<unsigned>(thread_count(), static_cast<unsigned>(n0)));
    if (T == 1) return work(0, n0);
    std::vector<Histogram> parts(T);
    {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < T; ++t)
            pool.emplace_back([&, t] { parts[t] = work(n0 * t / T, n0 * (t + 1) / T); });
    }
    Histogram out = std::move(parts[0]);
    for (unsigned t = 1; t < T; ++t)
        for (auto& [key, c] : parts[t]) out[key] += c;
    return out;
}

inline BigInt sum_of_squares(const Histogram& h) {
    BigInt total = 0;
    for (const auto& [_, c] : h) total += BigInt(c) * c;
    return total;
}

inline std::vector<std::int64_t> range_values(std::int64_t lo, std::int64_t hi) {
    std::vector<std::int64_t> v;
    for (std::int64_t x = lo; x <= hi; ++x) v.push_back(x);
    return v;
}

inline bool distinct_mod(const std::vector<std::int64_t>& t, int count, std::int64_t p) {
    for (int i = 0; i < count; ++i)
        for (int j = i + 1; j < count; ++j)
            if (mod(t[static_cast<std::size_t>(i)] - t[static_cast<std::size_t>(j)], p) == 0) return false;
    return true;
}

}  // namespace detail

// J_{s,k}(X): solutions in [1,X]^{2s} of sum x_i^j = sum y_i^j, j = 1..k.
inline BigInt count_J(int s, int k, std::int64_t X, std::uint64_t budget = kDefaultTupleBudget) {
    if (s < 1 || k < 1 || X < 1) throw std::invalid_argument("count_J: need s, k, X >= 1");
    std::vector<std::vector<std::int64_t>> slots(static_cast<std::size_t>(s), detail::range_values(1, X));
    return detail::sum_of_squares(
        detail::power_sum_histogram(slots, k, std::vector<std::int64_t>(static_cast<std::size_t>(k), 0), {}, budget));
}

// J_{s,k}(X,p) (residue empty) or J_{s,k}(X,p,a): x_1..x_k pairwise distinct mod p, and the
// remaining variables congruent to a mod p; the same on the y side.
inline BigInt count_J_congruence(int s, int k, std::int64_t X, std::int64_t p, std::optional<std::int64_t> residue = {},
                                 std::uint64_t budget = kDefaultTupleBudget) {
    if (s < k) throw std::invalid_argument("count_J_congruence: need s >= k");
    if (!detail::is_prime(p)) throw std::invalid_argument("count_J_congruence: p must be prime");
    std::vector<std::vector<std::int64_t>> slots(static_cast<std::size_t>(s), detail::range_values(1, X));
    if (residue) {
        std::vector<std::int64_t> pinned;
        for (std::int64_t x = 1; x <= X; ++x)
            if (detail::mod(x - *residue, p) == 0) pinned.push_back(x);
        for (int i = k; i < s; ++i) slots[static_cast<std::size_t>(i)] = pinned;
    }
    auto keep = [k, p](const std::vector<std::int64_t>& t) { return detail::distinct_mod(t, k, p); };
    return detail::sum_of_squares(
        detail::power_sum_histogram(slots, k, std::vector<std::int64_t>(static_cast<std::size_t>(k), 0), keep, budget));
}

// Ordered pairs of s-tuples from values whose degree-j power sums agree mod moduli[j-1].
inline BigInt count_power_sum_collisions(const std::vector<std::int64_t>& values, int s, int k,
                                         const std::vector<std::int64_t>& moduli,
                                         std::uint64_t budget = kDefaultTupleBudget) {
    if (static_cast<int>(moduli.size()) != k) throw std::invalid_argument("count_power_sum_collisions: need k moduli");
    std::vector<std::vector<std::int64_t>> slots(static_cast<std::size_t>(s), values);
    return detail::sum_of_squares(detail::power_sum_histogram(slots, k, moduli, {}, budget));
}

// Linnik residue histogram: for each (H_1 mod p, ..., H_k mod p^k), the number of k-tuples of
// residues mod p^k, pairwise distinct mod p, with sum x_i^j = H_j mod p^j.
class LinnikTable {
public:
    LinnikTable(int k, std::int64_t p, std::uint64_t budget = kDefaultTupleBudget) : k_(k), p_(p) {
        if (!detail::is_prime(p) || p <= k) throw std::invalid_argument("linnik: p must be a prime > k");
        std::int64_t R = detail::ipow(p, k);
        long double tuples = std::pow(static_cast<long double>(R), k);
        if (tuples > static_cast<long double>(budget)) throw ResourceError("linnik: p^{k^2} exceeds budget");
        mods_.resize(static_cast<std::size_t>(k));
        stride_.resize(static_cast<std::size_t>(k));
        std::int64_t size = 1;
        for (int j = 1; j <= k; ++j) {
            mods_[static_cast<std::size_t>(j - 1)] = detail::ipow(p, j);
            stride_[static_cast<std::size_t>(j - 1)] = size;
            size = detail::checked_mul(size, mods_[static_cast<std::size_t>(j - 1)]);
        }
        counts_.assign(static_cast<std::size_t>(size), 0);
        // pw[x][j-1] = x^j mod p^j
        std::vector<std::vector<std::int64_t>> pw(static_cast<std::size_t>(R), std::vector<std::int64_t>(static_cast<std::size_t>(k)));
        for (std::int64_t x = 0; x < R; ++x) {
            std::int64_t v = 1;
            for (int j = 1; j <= k; ++j) {
                v = detail::mulmod(v, x, mods_.back());
                pw[static_cast<std::size_t>(x)][static_cast<std::size_t>(j - 1)] = detail::mod(v, mods_[static_cast<std::size_t>(j - 1)]);
            }
        }
        std::vector<std::int64_t> t(static_cast<std::size_t>(k), 0);
        while (true) {
            if (detail::distinct_mod(t, k, p)) {
                std::int64_t key = 0;
                for (int j = 0; j < k; ++j) {
                    std::int64_t acc = 0;
                    for (int i = 0; i < k; ++i) acc += pw[static_cast<std::size_t>(t[static_cast<std::size_t>(i)])][static_cast<std::size_t>(j)];
                    key += (acc % mods_[static_cast<std::size_t>(j)]) * stride_[static_cast<std::size_t>(j)];
                }
                ++counts_[static_cast<std::size_t>(key)];
            }
            int i = 0;
            for (; i < k; ++i) {
                if (++t[static_cast<std::size_t>(i)] < R) break;
                t[static_cast<std::size_t>(i)] = 0;
            }
            if (i == k) break;
        }
    }

    int k() const { return k_; }
    std::int64_t p() const { return p_; }
    std::uint64_t count(const std::vector<std::int64_t>& H) const {
        if (static_cast<int>(H.size()) != k_) throw std::invalid_argument("linnik_count: need k residues");
        std::int64_t key = 0;
        for (int j = 0; j < k_; ++j) key += detail::mod(H[static_cast<std::size_t>(j)], mods_[static_cast<std::size_t>(j)]) * stride_[static_cast<std::size_t>(j)];
        return counts_[static_cast<std::size_t>(key)];
    }
    std::uint64_t max() const { return *std::max_element(counts_.begin(), counts_.end()); }
    std::size_t residue_classes() const { return counts_.size(); }
    std::uint64_t total() const {
        std::uint64_t s = 0;
        for (auto c : counts_) s += c;
        return s;
    }

private:
    int k_;
    std::int64_t p_;
    std::vector<std::int64_t> mods_, stride_;
    std::vector<std::uint32_t> counts_;
};

inline std::uint64_t linnik_count(int k, std::int64_t p, const std::vector<std::int64_t>& H) { return LinnikTable(k, p).count(H); }
inline std::uint64_t linnik_max(int k, std::int64_t p) { return LinnikTable(k, p).max(); }
// k! p^{k(k-1)/2}
inline std::int64_t linnik_bound(int k, std::int64_t p) { return detail::factorial(k) * detail::ipow(p, k * (k - 1) / 2); }

inline std::vector<BigRational> power_sums(const std::vector<BigRational>& xs, int k) {
    std::vector<BigRational> p(static_cast<std::size_t>(k), 0);
    for (const auto& x : xs) {
        BigRational v = 1;
        for (int j = 0; j < k; ++j) {
            v *= x;
            p[static_cast<std::size_t>(j)] += v;
        }
    }
    return p;
}

// e_1..e_k from p_1..p_k via j e_j = sum_{i<j} (-1)^i e_{j-i-1} p_{i+1}.
inline std::vector<BigRational> newton_girard(const std::vector<BigRational>& p) {
    std::size_t k = p.size();
    std::vector<BigRational> e(k + 1, 0);
    e[0] = 1;
    for (std::size_t j = 1; j <= k; ++j) {
        BigRational acc = 0;
        for (std::size_t i = 0; i < j; ++i) {
            BigRational term = e[j - i - 1] * p[i];
            acc += (i % 2 == 0) ? term : BigRational(-term);
        }
        e[j] = acc / BigRational(static_cast<long long>(j));
    }
    return {e.begin() + 1, e.end()};
}

// Same recurrence in Z/mZ; j must be invertible mod m.
inline std::vector<std::int64_t> newton_girard_mod(const std::vector<std::int64_t>& p, std::int64_t m) {
    std::size_t k = p.size();
    std::vector<std::int64_t> e(k + 1, 0);
    e[0] = 1 % m;
    for (std::size_t j = 1; j <= k; ++j) {
        std::int64_t acc = 0;
        for (std::size_t i = 0; i < j; ++i) {
            std::int64_t term = detail::mulmod(e[j - i - 1], p[i], m);
            acc = (i % 2 == 0) ? detail::addmod(acc, term, m) : detail::addmod(acc, -term, m);
        }
        std::int64_t inv;
        try {
            inv = detail::invmod(static_cast<std::int64_t>(j), m);
        } catch (const std::domain_error&) {
            throw std::domain_error("newton_girard: " + std::to_string(j) + " is not invertible in the ring");
        }
        e[j] = detail::mulmod(acc, inv, m);
    }
    return {e.begin() + 1, e.end()};
}

// Coefficients of prod (X - x_i), leading coefficient first.
inline std::vector<BigRational> poly_from_roots(const std::vector<BigRational>& xs) {
    std::vector<BigRational> c{1};
    for (const auto& x : xs) {
        std::vector<BigRational> n(c.size() + 1, 0);
        for (std::size_t i = 0; i < c.size(); ++i) {
            n[i] += c[i];
            n[i + 1] -= c[i] * x;
        }
        c = std::move(n);
    }
    return c;
}

struct PrimeChoice {
    std::int64_t p = 0;
    bool widened = false;
    std::int64_t lo = 0, hi = 0;  // searched integer range
};

// Smallest prime in [X^{1/k}, 2 X^{1/k}]; the upper end doubles until a prime appears.
inline PrimeChoice choose_prime(std::int64_t X, int k) {
    auto kth_root_ceil = [&](std::int64_t n) {
        std::int64_t r = static_cast<std::int64_t>(std::floor(std::pow(static_cast<long double>(n), 1.0L / k)));
        r = std::max<std::int64_t>(r - 1, 1);
        while (detail::ipow(r, k) < n) ++r;
        return r;
    };
    std::int64_t lo = std::max<std::int64_t>(2, kth_root_ceil(X));
    // p <= c X^{1/k}  <=>  p^k <= c^k X
    std::int64_t c = 2;
    PrimeChoice pc;
    for (;;) {
        std::int64_t cap = detail::checked_mul(detail::ipow(c, k), X);
        std::int64_t hi = lo;
        while (detail::ipow(hi + 1, k) <= cap) ++hi;
        for (std::int64_t p = lo; p <= hi; ++p) {
            if (detail::is_prime(p)) {
                pc.p = p;
                pc.lo = lo;
                pc.hi = hi;
                return pc;
            }
        }
        pc.widened = true;
        c *= 2;
        if (c > 1024) throw std::runtime_error("karatsuba: no prime in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
}

struct KaratsubaStep {
    int s = 0;
    std::int64_t X = 0;
    std::int64_t p = 0;
    std::int64_t X_next = 0;
    bool widened = false;
    BigInt factor;  // p^{2s-2k} X^k p^{k(k-1)/2}
};

struct KaratsubaResult {
    BigInt bound;
    std::vector<KaratsubaStep> steps;
    BigInt base_value;
    int base_s = 0;
    std::vector<std::string> warnings;
};

// Unrolled iteration J_{s,k}(X) <= p^{2s-2k} J_{s-k,k}(ceil(X/p)) X^k p^{k(k-1)/2}, implied constant 1.
inline KaratsubaResult karatsuba_bound(int s, int k, std::int64_t X) {
    if (s < 1 || k < 1 || X < 1) throw std::invalid_argument("karatsuba_bound: need s, k, X >= 1");
    KaratsubaResult r;
    BigInt acc = 1;
    int cur_s = s;
    std::int64_t cur_X = X;
    while (cur_s > k) {
        PrimeChoice pc = choose_prime(cur_X, k);
        if (pc.widened)
            r.warnings.push_back("no prime in [X^{1/k}, 2X^{1/k}] for X=" + std::to_string(cur_X) + "; used " + std::to_string(pc.p));
        KaratsubaStep st;
        st.s = cur_s;
        st.X = cur_X;
        st.p = pc.p;
        st.widened = pc.widened;
        st.X_next = (cur_X + pc.p - 1) / pc.p;
        st.factor = boost::multiprecision::pow(BigInt(pc.p), static_cast<unsigned>(2 * cur_s - 2 * k + k * (k - 1) / 2)) *
                    boost::multiprecision::pow(BigInt(cur_X), static_cast<unsigned>(k));
        acc *= st.factor;
        r.steps.push_back(st);
        cur_s -= k;
        cur_X = st.X_next;
    }
    // s' <= k: the first s' power sums fix the multiset, so J_{s',k}(X) <= s'! X^{s'}.
    r.base_s = cur_s;
    r.base_value = BigInt(detail::factorial(cur_s)) * boost::multiprecision::pow(BigInt(cur_X), static_cast<unsigned>(cur_s));
    r.bound = acc * r.base_value;
    return r;
}

// Exponent of X in the unrolled bound when p = X^{1/k} exactly:
// E(s) = (2s-2k)/k + k + (k-1)/2 + (1-1/k) E(s-k), E(s') = s' for s' <= k.
inline BigRational karatsuba_exponent(int s, int k) {
    if (s <= k) return BigRational(s);
    BigRational step = BigRational(2 * s - 2 * k, k) + k + BigRational(k - 1, 2);
    return step + BigRational(k - 1, k) * karatsuba_exponent(s - k, k);
}

// 2s - k(k+1)/2 + (k^2/2)(1-1/k)^{s/k}, for s a multiple of k.
inline BigRational classical_vmvt_exponent(int s, int k) {
    if (s % k != 0) throw std::invalid_argument("classical_vmvt_exponent: s must be a multiple of k");
    BigRational w = 1;
    for (int i = 0; i < s / k; ++i) w *= BigRational(k - 1, k);
    return BigRational(2 * s) - BigRational(k * (k + 1), 2) + BigRational(k * k, 2) * w;
}

}  // namespace qdec
