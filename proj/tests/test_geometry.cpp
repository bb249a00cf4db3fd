#include <gtest/gtest.h>

#include <random>
#include <set>

#include "oracles.hpp"
#include "qdec/geometry.hpp"

using namespace qdec;

namespace {

QRational qr(std::int64_t n, int q) { return QRational(n, q); }
QVector vec(std::initializer_list<std::int64_t> xs, int q) {
    std::vector<QRational> c;
    for (auto x : xs) c.emplace_back(x, q);
    return QVector(std::move(c));
}

// M_a t mod q^{km} over t_j in q^{jm} Z / q^{km} Z, with integer arithmetic only.
std::set<std::vector<std::int64_t>> theta_diff_oracle(int q, int k, int m, std::int64_t a) {
    std::int64_t mod = oracle::ipow(q, k * m);
    std::set<std::vector<std::int64_t>> out;
    std::vector<std::int64_t> t(static_cast<std::size_t>(k), 0);
    while (true) {
        std::vector<std::int64_t> x(static_cast<std::size_t>(k), 0);
        for (int i = 1; i <= k; ++i) {
            oracle::i128 s = 0;
            for (int j = 1; j <= i; ++j) {
                oracle::i128 c = 1;
                for (int r = i - j + 1; r <= i; ++r) c *= r;
                for (int r = 0; r < i - j; ++r) c = c * a % mod;
                s += c * (t[static_cast<std::size_t>(j - 1)] * oracle::ipow(q, j * m)) % mod;
            }
            x[static_cast<std::size_t>(i - 1)] = oracle::pmod(s, mod);
        }
        out.insert(x);
        int j = 0;
        for (; j < k; ++j) {
            if (++t[static_cast<std::size_t>(j)] < oracle::ipow(q, (k - j - 1) * m)) break;
            t[static_cast<std::size_t>(j)] = 0;
        }
        if (j == k) break;
    }
    return out;
}

}  // namespace

TEST(Gamma, Values) {
    EXPECT_TRUE(gamma(qr(0, 5), 3).is_zero());
    EXPECT_EQ(gamma(qr(1, 5), 3), vec({1, 1, 1}, 5));
    EXPECT_EQ(gamma(qr(2, 3), 2), vec({2, 4}, 3));
    EXPECT_THROW(gamma(QRational::power(-1, 3), 2), std::invalid_argument);
}

TEST(Partition, Counts) {
    auto P = partition(unit_interval(3), 1);
    ASSERT_EQ(P.size(), 3u);
    for (int i = 0; i < 3; ++i) EXPECT_EQ(P[static_cast<std::size_t>(i)].corner, qr(i, 3));
    Interval I(qr(2, 5), 1);
    EXPECT_EQ(partition(I, 3).size(), 25u);
    std::set<Interval> direct, nested;
    for (const auto& J : partition(unit_interval(3), 3)) direct.insert(J);
    for (const auto& J : partition(unit_interval(3), 1))
        for (const auto& L : partition(J, 3)) nested.insert(L);
    EXPECT_EQ(direct, nested);
}

TEST(Theta, Membership) {
    Interval K(qr(1, 3), 1);
    auto th = theta_of(K, 2);
    for (const auto& a : digit_block(3, 0, 3))
        if (K.contains(a)) {
            EXPECT_TRUE(th.contains(gamma(a, 2)));
        }
    EXPECT_TRUE(tau_of(K, 2).contains(gamma(K.corner, 2)));

    // gamma(1) + t gamma'(1) with |t| = 1/3: t = 3 gives (4, 7)
    QVector p = gamma(qr(1, 3), 2) + qr(3, 3) * vec({1, 2}, 3);
    EXPECT_EQ(p, vec({4, 7}, 3));
    EXPECT_TRUE(th.contains(p));
    EXPECT_TRUE(tau_of(K, 2).contains(p));
    // with t = 1/3 the displacement has norm 3, far outside both
    QVector far = gamma(qr(1, 3), 2) + QRational::power(-1, 3) * vec({1, 2}, 3);
    EXPECT_FALSE(th.contains(far));
    EXPECT_FALSE(tau_of(K, 2).contains(far));
    // second-order direction is allowed only to size delta^2
    EXPECT_TRUE(th.contains(gamma(qr(1, 3), 2) + vec({0, 9}, 3)));
    EXPECT_FALSE(th.contains(gamma(qr(1, 3), 2) + vec({0, 3}, 3)));
}

TEST(Theta, AnchorIndependence) {
    std::mt19937_64 rng(5);
    int q = 5, k = 3, m = 2;
    Interval K(qr(7, q), m);
    QRational a = K.corner, b = K.corner + qr(25 * 3, q);
    ASSERT_TRUE(K.contains(b));
    EXPECT_TRUE(anchor_change_holds(a, b, k));
    // points gamma(a) + M_a t: inside iff every t_j has valuation >= (j+1) m
    auto ma = ma_matrix(a, k);
    std::uniform_int_distribution<std::int64_t> unit(1, q - 1), d(0, oracle::ipow(q, 4));
    int inside = 0;
    for (int i = 0; i < 100; ++i) {
        QVector t(k, q);
        int spoil = static_cast<int>(rng() % 2) ? static_cast<int>(rng() % k) : -1;
        for (int j = 0; j < k; ++j) {
            int v = (j + 1) * m - (j == spoil ? 1 : 0);
            t[j] = QRational::from_parts(unit(rng) + q * d(rng), v, q);
        }
        QVector x = gamma(a, k) + ma.apply(t);
        bool ia = theta_with_anchor(a, m, k).contains(x);
        EXPECT_EQ(ia, spoil < 0);
        EXPECT_EQ(ia, theta_with_anchor(b, m, k).contains(x));
        inside += ia;
    }
    EXPECT_GT(inside, 0);
    EXPECT_LT(inside, 100);
}

TEST(MaMatrix, Columns) {
    MaMatrix M(qr(0, 7), 3);
    EXPECT_EQ(M.apply(vec({1, 0, 0}, 7)), vec({1, 0, 0}, 7));
    EXPECT_EQ(M.apply(vec({0, 1, 0}, 7)), vec({0, 2, 0}, 7));
    EXPECT_EQ(M.apply(vec({0, 0, 1}, 7)), vec({0, 0, 6}, 7));
    EXPECT_DOUBLE_EQ(M.det_norm().value(), 1.0);
    EXPECT_DOUBLE_EQ(MaMatrix(qr(2, 5), 3).det_norm().value(), 1.0);
    // q = 3 sees the factor 3 in 3!
    EXPECT_DOUBLE_EQ(MaMatrix(qr(0, 3), 3).det_norm().value(), 1.0 / 3);
}

TEST(ThetaDiff, CountsAndOracle) {
    struct Case {
        int q, k, m;
        std::int64_t a;
        std::size_t expected;
    };
    for (auto c : {Case{3, 2, 1, 1, 3}, Case{5, 3, 1, 2, 125}, Case{3, 2, 2, 4, 9}, Case{5, 1, 1, 3, 1}}) {
        auto cubes = theta_diff_decompose(Interval(qr(c.a, c.q), c.m), c.k);
        ASSERT_EQ(cubes.size(), c.expected);
        std::set<std::vector<std::int64_t>> got;
        std::int64_t mod = oracle::ipow(c.q, c.k * c.m);
        for (const auto& cb : cubes) {
            EXPECT_EQ(cb.scale_exp, c.k * c.m);
            std::vector<std::int64_t> x;
            for (int j = 0; j < c.k; ++j) x.push_back(oracle::pmod(oracle::scaled(cb.corner[j], 0), mod));
            got.insert(x);
        }
        EXPECT_EQ(got.size(), c.expected);
        EXPECT_EQ(got, theta_diff_oracle(c.q, c.k, c.m, c.a));
    }
}

TEST(Tiles, Partition) {
    EXPECT_EQ(tile_partition(Cube(QVector(2, 3), -2), Interval(qr(1, 3), 1)).size(), 3u);
    EXPECT_EQ(tile_partition(Cube(QVector(1, 5), -1), Interval(qr(1, 5), 1)).size(), 1u);
    EXPECT_THROW(tile_partition(Cube(QVector(2, 3), -1), Interval(qr(1, 3), 1)), std::invalid_argument);
    for (std::int64_t a : {0, 1, 2}) {
        auto au = oracle::audit_tiling(3, 2, 1, a, true);
        EXPECT_TRUE(au.ok) << au.why;
        EXPECT_EQ(au.tiles, 3u);
    }
    auto au = oracle::audit_tiling(5, 3, 1, 17 % 5, true);
    EXPECT_TRUE(au.ok) << au.why;
    EXPECT_EQ(au.tiles, 125u);
}

TEST(Tiles, MembershipMatchesCubes) {
    auto tiles = tile_partition(Cube(QVector(2, 3), -4), Interval(qr(5, 3), 2));
    ASSERT_EQ(tiles.size(), 9u);
    for (const auto& T : tiles)
        for (const auto& c : T.cubes()) {
            EXPECT_TRUE(T.contains(c.corner));
            for (const auto& U : tiles)
                if (!(U == T)) {
                    EXPECT_FALSE(U.contains(c.corner));
                }
        }
}
