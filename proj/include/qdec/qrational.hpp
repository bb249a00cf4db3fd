#pragma once

#include <cmath>
#include <compare>
#include <complex>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "qdec/arith.hpp"

namespace qdec {

// q-adic norm value: either 0 or q^exponent.
struct QNorm {
    int q = 0;
    bool zero = true;
    int exponent = 0;

    double value() const { return zero ? 0.0 : std::pow(static_cast<double>(q), exponent); }

    friend bool operator==(const QNorm& a, const QNorm& b) {
        return a.zero == b.zero && (a.zero || a.exponent == b.exponent);
    }
    friend std::strong_ordering operator<=>(const QNorm& a, const QNorm& b) {
        if (a.zero || b.zero) return b.zero <=> a.zero;
        return a.exponent <=> b.exponent;
    }
    friend QNorm operator*(const QNorm& a, const QNorm& b) {
        if (a.zero || b.zero) return {a.q, true, 0};
        return {a.q, false, a.exponent + b.exponent};
    }
};

// Element unit * q^valuation of Z[1/q], with gcd(unit, q) = 1 unless zero.
class QRational {
public:
    static constexpr int kZeroValuation = std::numeric_limits<int>::max();

    QRational() = default;
    QRational(std::int64_t n, int q) : q_(q) { assign(n, 0); }

    static QRational from_parts(std::int64_t unit, int valuation, int q) {
        QRational r;
        r.q_ = q;
        r.assign(unit, valuation);
        return r;
    }
    // q^e
    static QRational power(int e, int q) { return from_parts(1, e, q); }

    int q() const { return q_; }
    std::int64_t unit() const { return unit_; }
    int valuation() const { return valuation_; }
    bool is_zero() const { return unit_ == 0; }

    friend QRational operator+(const QRational& a, const QRational& b) {
        if (a.is_zero()) return b.with_q(a.q_);
        if (b.is_zero()) return a;
        check_same(a, b);
        int v = std::min(a.valuation_, b.valuation_);
        std::int64_t x = detail::checked_mul(a.unit_, detail::ipow(a.q_, a.valuation_ - v));
        std::int64_t y = detail::checked_mul(b.unit_, detail::ipow(a.q_, b.valuation_ - v));
        return from_parts(detail::checked_add(x, y), v, a.q_);
    }
    friend QRational operator-(const QRational& a) {
        QRational r = a;
        r.unit_ = -r.unit_;
        return r;
    }
    friend QRational operator-(const QRational& a, const QRational& b) { return a + (-b); }
    friend QRational operator*(const QRational& a, const QRational& b) {
        int q = a.q_ ? a.q_ : b.q_;
        if (a.is_zero() || b.is_zero()) return QRational(0, q);
        check_same(a, b);
        return from_parts(detail::checked_mul(a.unit_, b.unit_), a.valuation_ + b.valuation_, q);
    }
    QRational& operator+=(const QRational& o) { return *this = *this + o; }
    QRational& operator-=(const QRational& o) { return *this = *this - o; }
    QRational& operator*=(const QRational& o) { return *this = *this * o; }

    // Exact quotient; only defined when the result stays in Z[1/q].
    friend QRational operator/(const QRational& a, const QRational& b) {
        if (b.is_zero()) throw std::domain_error("QRational: division by zero");
        if (a.is_zero()) return a;
        check_same(a, b);
        if (a.unit_ % b.unit_ != 0) throw std::domain_error("QRational: quotient leaves Z[1/q]");
        return from_parts(a.unit_ / b.unit_, a.valuation_ - b.valuation_, a.q_);
    }

    friend bool operator==(const QRational& a, const QRational& b) {
        return a.unit_ == b.unit_ && (a.unit_ == 0 || a.valuation_ == b.valuation_);
    }
    friend std::strong_ordering operator<=>(const QRational& a, const QRational& b) {
        if (auto c = a.valuation_ <=> b.valuation_; c != 0) return c;
        return a.unit_ <=> b.unit_;
    }

    QNorm norm() const {
        if (is_zero()) return {q_, true, 0};
        return {q_, false, -valuation_};
    }

    // Representative of this mod q^e Z_q carrying only digits at positions < e.
    QRational residue(int e) const {
        if (is_zero() || valuation_ >= e) return QRational(0, q_);
        std::int64_t m = detail::ipow(q_, e - valuation_);
        return from_parts(detail::mod(unit_, m), valuation_, q_);
    }

    // Integer value of this * q^(-e), which must be a q-adic integer after scaling;
    // returned modulo m.
    std::int64_t scaled_mod(int e, std::int64_t m) const {
        if (is_zero()) return 0;
        int shift = valuation_ - e;
        if (shift < 0) throw std::domain_error("QRational: scaled value not integral");
        std::int64_t r = detail::mod(unit_, m);
        for (int i = 0; i < shift && r != 0; ++i) r = detail::mulmod(r, q_, m);
        return r;
    }

    double to_double() const {
        return static_cast<double>(unit_) * std::pow(static_cast<double>(q_), valuation_);
    }

    std::string to_string() const {
        if (is_zero()) return "0";
        return std::to_string(unit_) + "*" + std::to_string(q_) + "^" + std::to_string(valuation_);
    }

private:
    std::int64_t unit_ = 0;
    int valuation_ = kZeroValuation;
    int q_ = 0;

    void assign(std::int64_t u, int v) {
        if (q_ < 2) throw std::invalid_argument("QRational: q must be a prime >= 2");
        if (u == 0) {
            unit_ = 0;
            valuation_ = kZeroValuation;
            return;
        }
        while (u % q_ == 0) {
            u /= q_;
            ++v;
        }
        unit_ = u;
        valuation_ = v;
    }
    QRational with_q(int q) const {
        QRational r = *this;
        if (r.q_ == 0) r.q_ = q;
        return r;
    }
    static void check_same(const QRational& a, const QRational& b) {
        if (a.q_ != b.q_) throw std::invalid_argument("QRational: mixed primes");
    }
};

inline QNorm qnorm(const QRational& x) { return x.norm(); }

// x / u for a q-adic unit u, truncated: the result y satisfies |y - x/u| <= q^-precision.
inline QRational div_unit_trunc(const QRational& x, std::int64_t u, int precision) {
    int q = x.q();
    if (u % q == 0) throw std::domain_error("div_unit_trunc: divisor is not a q-adic unit");
    if (x.is_zero() || x.valuation() >= precision) return QRational(0, q);
    std::int64_t m = detail::ipow(q, precision - x.valuation());
    std::int64_t w = detail::mulmod(x.unit(), detail::invmod(u, m), m);
    return QRational::from_parts(w, x.valuation(), q);
}

// Rational angle num/den in [0,1) with den a power of q; stands for e^{2 pi i angle}.
struct UnitComplex {
    std::int64_t num = 0;
    std::int64_t den = 1;

    std::complex<double> value() const {
        long double t = 2.0L * std::numbers::pi_v<long double> * static_cast<long double>(num) /
                        static_cast<long double>(den);
        return {static_cast<double>(std::cos(t)), static_cast<double>(std::sin(t))};
    }
    bool is_one() const { return num == 0; }

    friend UnitComplex operator*(const UnitComplex& a, const UnitComplex& b) {
        std::int64_t den = std::max(a.den, b.den);
        std::int64_t n = detail::addmod(detail::checked_mul(a.num, den / a.den),
                                        detail::checked_mul(b.num, den / b.den), den);
        return reduce(n, den);
    }
    UnitComplex conj() const { return reduce(detail::mod(-num, den), den); }
    friend bool operator==(const UnitComplex&, const UnitComplex&) = default;

    static UnitComplex reduce(std::int64_t n, std::int64_t d) {
        if (n == 0) return {0, 1};
        std::int64_t g = std::gcd(n, d);
        return {n / g, d / g};
    }
};

// chi(x) = e^{2 pi i frac_q(x)}; trivial on Z_q, nontrivial on q^-1 Z_q.
inline UnitComplex char_chi(const QRational& x) {
    if (x.is_zero() || x.valuation() >= 0) return {};
    std::int64_t den = detail::ipow(x.q(), -x.valuation());
    return UnitComplex::reduce(detail::mod(x.unit(), den), den);
}

// Alternate admissible character x -> chi(t x) for a q-adic unit t.
inline UnitComplex char_chi_twisted(const QRational& x, std::int64_t t) {
    if (t % x.q() == 0) throw std::invalid_argument("char_chi_twisted: twist must be a unit");
    return char_chi(x * QRational(t, x.q()));
}

class QVector {
public:
    QVector() = default;
    QVector(int k, int q) : coords_(static_cast<std::size_t>(k), QRational(0, q)) {}
    explicit QVector(std::vector<QRational> c) : coords_(std::move(c)) {}

    int k() const { return static_cast<int>(coords_.size()); }
    int q() const { return coords_.empty() ? 0 : coords_.front().q(); }
    const QRational& operator[](int i) const { return coords_[static_cast<std::size_t>(i)]; }
    QRational& operator[](int i) { return coords_[static_cast<std::size_t>(i)]; }
    const std::vector<QRational>& coords() const { return coords_; }

    bool is_zero() const {
        for (const auto& c : coords_)
            if (!c.is_zero()) return false;
        return true;
    }

    friend QVector operator+(const QVector& a, const QVector& b) {
        check(a, b);
        QVector r = a;
        for (int i = 0; i < a.k(); ++i) r[i] += b[i];
        return r;
    }
    friend QVector operator-(const QVector& a) {
        QVector r = a;
        for (auto& c : r.coords_) c = -c;
        return r;
    }
    friend QVector operator-(const QVector& a, const QVector& b) { return a + (-b); }
    friend QVector operator*(const QRational& s, const QVector& a) {
        QVector r = a;
        for (auto& c : r.coords_) c = s * c;
        return r;
    }
    friend bool operator==(const QVector&, const QVector&) = default;
    friend auto operator<=>(const QVector& a, const QVector& b) { return a.coords_ <=> b.coords_; }

    QVector residue(int e) const {
        QVector r = *this;
        for (auto& c : r.coords_) c = c.residue(e);
        return r;
    }

    std::string to_string() const {
        std::string s;
        for (std::size_t i = 0; i < coords_.size(); ++i) {
            if (i) s += ",";
            s += coords_[i].to_string();
        }
        return s;
    }

private:
    std::vector<QRational> coords_;

    static void check(const QVector& a, const QVector& b) {
        if (a.k() != b.k()) throw std::invalid_argument("QVector: dimension mismatch");
    }
};

inline QRational dot(const QVector& a, const QVector& b) {
    if (a.k() != b.k()) throw std::invalid_argument("dot: dimension mismatch");
    QRational s(0, a.q() ? a.q() : b.q());
    for (int i = 0; i < a.k(); ++i) s += a[i] * b[i];
    return s;
}

// Max of coordinate norms.
inline QNorm vnorm(const QVector& v) {
    QNorm n{v.q(), true, 0};
    for (const auto& c : v.coords()) n = std::max(n, c.norm());
    return n;
}

// Smallest valuation among coordinates (kZeroValuation for the zero vector).
inline int min_valuation(const QVector& v) {
    int m = QRational::kZeroValuation;
    for (const auto& c : v.coords()) m = std::min(m, c.valuation());
    return m;
}

}  // namespace qdec
