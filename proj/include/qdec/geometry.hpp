#pragma once

#include <vector>

#include "qdec/qrational.hpp"

namespace qdec {

// {x : |x - corner| <= q^-scale_exp}, corner carrying only digits below scale_exp.
struct Interval {
    QRational corner;
    int scale_exp = 0;

    Interval() = default;
    Interval(const QRational& c, int m) : corner(c.residue(m)), scale_exp(m) {}

    int q() const { return corner.q(); }
    bool contains(const QRational& x) const { return x.residue(scale_exp) == corner; }
    bool contains(const Interval& j) const {
        return j.scale_exp >= scale_exp && j.corner.residue(scale_exp) == corner;
    }
    friend bool operator==(const Interval&, const Interval&) = default;
    friend auto operator<=>(const Interval& a, const Interval& b) {
        if (auto c = a.scale_exp <=> b.scale_exp; c != 0) return c;
        return a.corner <=> b.corner;
    }
};

// Distance between two intervals (0 when they meet).
inline QNorm interval_distance(const Interval& a, const Interval& b) {
    if (a.contains(b) || b.contains(a)) return {a.q(), true, 0};
    return (a.corner - b.corner).norm();
}

// Cube of side q^-scale_exp.
struct Cube {
    QVector corner;
    int scale_exp = 0;

    Cube() = default;
    Cube(const QVector& c, int m) : corner(c.residue(m)), scale_exp(m) {}

    int k() const { return corner.k(); }
    int q() const { return corner.q(); }
    bool contains(const QVector& x) const { return x.residue(scale_exp) == corner; }
    bool contains(const Cube& c) const {
        return c.scale_exp >= scale_exp && c.corner.residue(scale_exp) == corner;
    }
    friend bool operator==(const Cube&, const Cube&) = default;
    friend auto operator<=>(const Cube& a, const Cube& b) {
        if (auto c = a.scale_exp <=> b.scale_exp; c != 0) return c;
        return a.corner <=> b.corner;
    }
};

// Minkowski sum of two cubes: the coarser side, centred at the corner sum.
inline Cube minkowski_sum(const Cube& a, const Cube& b) {
    return Cube(a.corner + b.corner, std::min(a.scale_exp, b.scale_exp));
}
inline Cube negate(const Cube& a) { return Cube(-a.corner, a.scale_exp); }

// Enumerates the q^(fine - coarse) residues t * q^coarse with t in [0, q^(fine-coarse)).
inline std::vector<QRational> digit_block(int q, int coarse, int fine) {
    std::int64_t n = detail::ipow(q, fine - coarse);
    std::vector<QRational> out;
    out.reserve(static_cast<std::size_t>(n));
    for (std::int64_t t = 0; t < n; ++t) out.push_back(QRational::from_parts(t, coarse, q));
    return out;
}

// P_delta(I) with delta = q^-delta_exp, ordered by the digit block value.
inline std::vector<Interval> partition(const Interval& I, int delta_exp) {
    if (delta_exp < I.scale_exp) throw std::invalid_argument("partition: scale coarser than interval");
    std::vector<Interval> out;
    for (const auto& t : digit_block(I.q(), I.scale_exp, delta_exp))
        out.emplace_back(I.corner + t, delta_exp);
    return out;
}

inline Interval unit_interval(int q) { return Interval(QRational(0, q), 0); }

// Subcubes of c at the finer scale m, in odometer order (first coordinate fastest).
inline std::vector<Cube> subcubes(const Cube& c, int m) {
    if (m < c.scale_exp) throw std::invalid_argument("subcubes: scale coarser than cube");
    auto block = digit_block(c.q(), c.scale_exp, m);
    std::size_t n = block.size();
    int k = c.k();
    std::size_t total = 1;
    for (int i = 0; i < k; ++i) total *= n;
    std::vector<Cube> out;
    out.reserve(total);
    std::vector<std::size_t> idx(static_cast<std::size_t>(k), 0);
    for (std::size_t it = 0; it < total; ++it) {
        QVector corner = c.corner;
        for (int i = 0; i < k; ++i) corner[i] += block[idx[static_cast<std::size_t>(i)]];
        out.emplace_back(corner, m);
        for (int i = 0; i < k; ++i) {
            if (++idx[static_cast<std::size_t>(i)] < n) break;
            idx[static_cast<std::size_t>(i)] = 0;
        }
    }
    return out;
}

inline QVector gamma(const QRational& a, int k) {
    if (a.norm() > QNorm{a.q(), false, 0}) throw std::invalid_argument("gamma: |a| > 1");
    std::vector<QRational> c;
    QRational p = a;
    for (int j = 0; j < k; ++j) {
        c.push_back(p);
        p = p * a;
    }
    return QVector(std::move(c));
}

// Lower triangular matrix whose column j is the j-th derivative of gamma at a.
class MaMatrix {
public:
    MaMatrix(const QRational& a, int k) : a_(a), k_(k) {
        if (a.norm() > QNorm{a.q(), false, 0}) throw std::invalid_argument("ma_matrix: |a| > 1");
        int q = a.q();
        e_.assign(static_cast<std::size_t>(k * k), QRational(0, q));
        for (int i = 1; i <= k; ++i) {
            for (int j = 1; j <= i; ++j) {
                std::int64_t falling = 1;
                for (int t = 0; t < j; ++t) falling *= (i - t);
                QRational p(1, q);
                for (int t = 0; t < i - j; ++t) p = p * a;
                at(i - 1, j - 1) = QRational(falling, q) * p;
            }
        }
    }

    int k() const { return k_; }
    const QRational& anchor() const { return a_; }
    const QRational& at(int r, int c) const { return e_[static_cast<std::size_t>(r * k_ + c)]; }

    QVector apply(const QVector& t) const {
        QVector r(k_, a_.q());
        for (int i = 0; i < k_; ++i)
            for (int j = 0; j <= i; ++j) r[i] += at(i, j) * t[j];
        return r;
    }
    QVector apply_transpose(const QVector& x) const {
        QVector r(k_, a_.q());
        for (int j = 0; j < k_; ++j)
            for (int i = j; i < k_; ++i) r[j] += at(i, j) * x[i];
        return r;
    }
    // M^-1 x, accurate modulo q^precision in every coordinate (the diagonal j! is a q-adic unit).
    QVector inverse_apply(const QVector& x, int precision) const {
        QVector t(k_, a_.q());
        for (int i = 0; i < k_; ++i) {
            QRational r = x[i];
            for (int j = 0; j < i; ++j) r -= at(i, j) * t[j];
            t[i] = div_unit_trunc(r, at(i, i).unit(), precision + at(i, i).valuation());
        }
        return t;
    }
    // M^-T y, accurate modulo q^precision.
    QVector inverse_transpose_apply(const QVector& y, int precision) const {
        QVector z(k_, a_.q());
        for (int j = k_ - 1; j >= 0; --j) {
            QRational r = y[j];
            for (int i = j + 1; i < k_; ++i) r -= at(i, j) * z[i];
            z[j] = div_unit_trunc(r, at(j, j).unit(), precision + at(j, j).valuation());
        }
        return z;
    }
    QNorm det_norm() const {
        QNorm n{a_.q(), false, 0};
        for (int i = 0; i < k_; ++i) n = n * at(i, i).norm();
        return n;
    }

private:
    QRational& at(int r, int c) { return e_[static_cast<std::size_t>(r * k_ + c)]; }
    QRational a_;
    int k_;
    std::vector<QRational> e_;
};

inline MaMatrix ma_matrix(const QRational& a, int k) { return MaMatrix(a, k); }

// Checks M_a = M_b U with U lower unipotent, U_ij = (a-b)^(i-j)/(i-j)!, scaled by k! to stay in Z[1/q].
inline bool anchor_change_holds(const QRational& a, const QRational& b, int k) {
    const MaMatrix ma(a, k), mb(b, k);
    int q = a.q();
    QRational d = a - b;
    std::int64_t L = detail::factorial(k);
    for (int j = 0; j < k; ++j) {
        for (int r = 0; r < k; ++r) {
            QRational s(0, q);
            for (int i = j; i < k; ++i) {
                QRational p(L / detail::factorial(i - j), q);
                for (int t = 0; t < i - j; ++t) p = p * d;
                s += mb.at(r, i) * p;
            }
            if (!(s == QRational(L, q) * ma.at(r, j))) return false;
        }
    }
    return true;
}

// theta_K = gamma(a) + M_a theta_delta, a the canonical corner of K.
struct ThetaBox {
    QRational anchor;
    int scale_exp = 0;
    int k = 0;

    bool contains(const QVector& xi) const {
        MaMatrix m(anchor, k);
        QVector t = m.inverse_apply(xi - gamma(anchor, k), k * scale_exp + 1);
        for (int j = 0; j < k; ++j)
            if (t[j].valuation() < (j + 1) * scale_exp) return false;
        return true;
    }
    // A cube lies in theta iff its corner does and its side is at most delta^k.
    bool contains(const Cube& c) const { return c.scale_exp >= k * scale_exp && contains(c.corner); }
};

inline ThetaBox theta_of(const Interval& K, int k) { return {K.corner, K.scale_exp, k}; }
inline ThetaBox theta_with_anchor(const QRational& a, int delta_exp, int k) { return {a, delta_exp, k}; }

// tau_K: cube of side |K| centred at gamma(a).
inline Cube tau_of(const Interval& K, int k) { return Cube(gamma(K.corner, k), K.scale_exp); }

// theta_K - theta_K = M_a theta_delta as delta^{-k(k-1)/2} disjoint cubes of side delta^k.
inline std::vector<Cube> theta_diff_decompose(const Interval& K, int k) {
    int q = K.q(), m = K.scale_exp;
    MaMatrix ma(K.corner, k);
    std::vector<std::vector<QRational>> blocks;
    for (int j = 1; j <= k; ++j) blocks.push_back(digit_block(q, j * m, k * m));
    std::vector<Cube> out;
    std::vector<std::size_t> idx(static_cast<std::size_t>(k), 0);
    while (true) {
        QVector t(k, q);
        for (int j = 0; j < k; ++j) t[j] = blocks[static_cast<std::size_t>(j)][idx[static_cast<std::size_t>(j)]];
        out.emplace_back(ma.apply(t), k * m);
        int j = 0;
        for (; j < k; ++j) {
            if (++idx[static_cast<std::size_t>(j)] < blocks[static_cast<std::size_t>(j)].size()) break;
            idx[static_cast<std::size_t>(j)] = 0;
        }
        if (j == k) break;
    }
    return out;
}

// Translate offset + M_a^{-T} T_delta of the dual parallelepiped.
struct Tile {
    Interval base;
    QVector offset;
    int k = 0;

    bool contains(const QVector& x) const {
        MaMatrix ma(base.corner, k);
        QVector y = ma.apply_transpose(x - offset);
        for (int j = 0; j < k; ++j)
            if (y[j].valuation() < -(j + 1) * base.scale_exp) return false;
        return true;
    }
    // The delta^{-k(k-1)/2} cubes of side delta^-1 making up the tile.
    std::vector<Cube> cubes() const {
        int q = base.q(), m = base.scale_exp;
        MaMatrix ma(base.corner, k);
        std::vector<std::vector<QRational>> blocks;
        for (int j = 1; j <= k; ++j) blocks.push_back(digit_block(q, -j * m, -m));
        std::vector<Cube> out;
        std::vector<std::size_t> idx(static_cast<std::size_t>(k), 0);
        while (true) {
            QVector y(k, q);
            for (int j = 0; j < k; ++j) y[j] = blocks[static_cast<std::size_t>(j)][idx[static_cast<std::size_t>(j)]];
            out.emplace_back(offset + ma.inverse_transpose_apply(y, -m), -m);
            int j = 0;
            for (; j < k; ++j) {
                if (++idx[static_cast<std::size_t>(j)] < blocks[static_cast<std::size_t>(j)].size()) break;
                idx[static_cast<std::size_t>(j)] = 0;
            }
            if (j == k) break;
        }
        return out;
    }
    friend bool operator==(const Tile& a, const Tile& b) {
        return a.base == b.base && a.k == b.k && a.contains(b.offset);
    }
};

// Tiles of T(K) inside a cube Q of side delta^-k; there are delta^{-k(k-1)/2} of them.
inline std::vector<Tile> tile_partition(const Cube& Q, const Interval& K) {
    int k = Q.k(), q = Q.q(), m = K.scale_exp;
    if (Q.scale_exp != -k * m) throw std::invalid_argument("tile_partition: cube side must be delta^-k");
    MaMatrix ma(K.corner, k);
    std::vector<std::vector<QRational>> blocks;
    for (int j = 1; j <= k; ++j) blocks.push_back(digit_block(q, -k * m, -j * m));
    std::vector<Tile> out;
    std::vector<std::size_t> idx(static_cast<std::size_t>(k), 0);
    while (true) {
        QVector y(k, q);
        for (int j = 0; j < k; ++j) y[j] = blocks[static_cast<std::size_t>(j)][idx[static_cast<std::size_t>(j)]];
        QVector off = (Q.corner + ma.inverse_transpose_apply(y, -m)).residue(-m);
        out.push_back(Tile{K, off, k});
        int j = 0;
        for (; j < k; ++j) {
            if (++idx[static_cast<std::size_t>(j)] < blocks[static_cast<std::size_t>(j)].size()) break;
            idx[static_cast<std::size_t>(j)] = 0;
        }
        if (j == k) break;
    }
    return out;
}

}  // namespace qdec
