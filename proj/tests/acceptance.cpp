// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "qdec/decoupling.hpp"
#include "qdec/exponents.hpp"
#include "qdec/vinogradov.hpp"
#include "qdec/wavepackets.hpp"

using namespace qdec;

namespace {

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void require(bool cond, const std::string& what) {
        if (!cond && pass) {
            pass = false;
            detail.str("");
            detail << what;
        }
    }
};

double rel(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }
QRational qr(std::int64_t n, int q) { return QRational(n, q); }
Cube ball(int q, int k, int m) { return Cube(QVector(k, q), -k * m); }

// 1. FT of the unit ball indicator is itself, exactly.
void fourier_unit_ball(Outcome& o) {
    int n = 0;
    for (int q : {3, 5})
        for (int k = 1; k <= 3; ++k) {
            Cube unit(QVector(k, q), 0);
            auto F = fourier(ModulatedStep::indicator(unit));
            bool ok = F.terms().size() == 1 && F.terms()[0].cube == unit && F.terms()[0].coeff == cplx(1.0) &&
                      F.terms()[0].modulation.is_zero();
            o.require(ok, "FT(1_O^k) differs at q=" + std::to_string(q) + " k=" + std::to_string(k));
            ++n;
        }
    o.detail << n << " cases exact";
}

// 2. Plancherel and the convolution theorem against the direct finite-quotient transform.
void plancherel_convolution(Outcome& o) {
    std::mt19937_64 rng(1002);
    double worst = 0;
    int instances = 0;
    for (int q : {3, 5})
        for (int k = 1; k <= 3; ++k) {
            // keep the q=5, k=3 grid at 25^3 cells
            int lo = (q == 5 && k == 3) ? 1 : 0, hi = 3;
            oracle::Grid g{q, k, lo, hi};
            for (int trial = 0; trial < 100; ++trial) {
                auto f = oracle::random_step(q, k, lo, hi, 4, rng);
                auto h = oracle::random_step(q, k, lo, hi, 3, rng);
                auto vf = oracle::eval_grid(f, g);
                double s = 0;
                for (const auto& v : vf) s += std::norm(v);
                double l2 = std::sqrt(s * g.volume());
                auto F = fourier(f);
                double e1 = s == 0 ? 0 : std::max(rel(lp_norm(F, 2), l2), rel(lp_norm(f, 2), l2));
                auto pts = oracle::probe_points(g, F.terms(), 4, rng);
                double e2 = oracle::transform_mismatch(vf, g, [&](const QVector& xi) { return evaluate_at(F, xi); }, pts);

                auto rhs = convolve(F, fourier(h));
                auto vh = oracle::eval_grid(h, g);
                for (std::size_t i = 0; i < vf.size(); ++i) vf[i] *= vh[i];
                auto pts2 = oracle::probe_points(g, rhs.terms(), 4, rng);
                double e3 = oracle::transform_mismatch(vf, g, [&](const QVector& xi) { return evaluate_at(rhs, xi); }, pts2);
                bool same = approx_equal(fourier(f * h), rhs);
                double e = std::max({e1, e2, e3});
                worst = std::max(worst, e);
                o.require(e <= 1e-9 && same, "q=" + std::to_string(q) + " k=" + std::to_string(k) + " trial " + std::to_string(trial) +
                                                 " error " + std::to_string(e) + (same ? "" : " (FT(fg) != FT f * FT g)"));
                ++instances;
            }
        }
    if (o.pass) o.detail << instances << " instances, worst relative error " << worst;
}

// 3. Tilings of the ball of radius delta^-k by T(K).
void tilings(Outcome& o) {
    std::size_t audits = 0, sampled = 0;
    for (int q : {3, 5})
        for (int k : {2, 3})
            for (int m : {1, 2}) {
                std::int64_t anchors = oracle::ipow(q, m);
                std::int64_t cubes = oracle::ipow(q, k * (k - 1) * m);
                if (cubes <= (std::int64_t{1} << 20)) {
                    for (std::int64_t a = 0; a < anchors; ++a) {
                        auto au = oracle::audit_tiling(q, k, m, a, true);
                        o.require(au.ok, au.why + " at q=" + std::to_string(q) + " k=" + std::to_string(k) + " m=" +
                                             std::to_string(m) + " a=" + std::to_string(a));
                        ++audits;
                    }
                    continue;
                }
                // 5^12 cubes per anchor: count and class keys for every K, the full class sweep for two
                // anchors, library cube lists sampled
                std::int64_t expected = oracle::ipow(q, m * k * (k - 1) / 2);
                for (std::int64_t a = 0; a < anchors; ++a) {
                    Interval K(qr(a, q), m);
                    auto tiles = tile_partition(ball(q, k, m), K);
                    o.require(static_cast<std::int64_t>(tiles.size()) == expected, "tile count at a=" + std::to_string(a));
                    oracle::TileKeyer keyer(a, q, k, m);
                    std::int64_t per = oracle::ipow(q, (k - 1) * m);
                    std::set<std::int64_t> keys;
                    for (const auto& T : tiles) {
                        std::vector<std::int64_t> X;
                        for (int j = 0; j < k; ++j) X.push_back(oracle::pmod(oracle::scaled(T.offset[j], -k * m), per));
                        keys.insert(keyer(X.data()));
                    }
                    o.require(keys.size() == tiles.size(), "two tiles share a class at a=" + std::to_string(a));
                }
                for (std::int64_t a : {std::int64_t{0}, std::int64_t{7}}) {
                    auto au = oracle::audit_tiling(q, k, m, a, true, 40);
                    o.require(au.ok, au.why + " at q=5 k=3 m=2 a=" + std::to_string(a));
                    ++sampled;
                }
            }
    if (o.pass) o.detail << audits << " exhaustive audits, " << sampled << " with sampled cube lists (q=5 k=3 delta=1/25)";
}

// 4. Wavepacket decomposition invariants.
void wavepackets(Outcome& o) {
    std::mt19937_64 rng(1004);
    std::size_t packets = 0;
    for (int i = 0; i < 50; ++i) {
        int m = i < 25 ? 1 : 2;
        Interval K(qr(static_cast<std::int64_t>(rng() % oracle::ipow(3, m)), 3), m);
        auto g = oracle::random_theta_function(K, 2, rng, 0.6);
        auto ws = wavepacket_decompose(g, K);
        auto why = oracle::packet_violation(g, ws);
        o.require(why.empty(), why + " (instance " + std::to_string(i) + ")");
        packets += ws.packets.size();
    }
    if (o.pass) o.detail << "50 instances, " << packets << " packets";
}

// 5. Linnik's lemma.
void linnik(Outcome& o) {
    for (auto [k, p] : {std::pair{2, 3}, {2, 5}, {3, 5}}) {
        LinnikTable t(k, p);
        auto bound = static_cast<std::uint64_t>(linnik_bound(k, p));
        // every k-tuple distinct mod p lands in exactly one class
        std::uint64_t tuples = 1;
        for (int i = 0; i < k; ++i) tuples *= static_cast<std::uint64_t>(p - i) * static_cast<std::uint64_t>(oracle::ipow(p, k - 1));
        o.require(t.total() == tuples, "class counts do not sum to the tuple count");
        o.require(t.max() <= bound, "max " + std::to_string(t.max()) + " exceeds " + std::to_string(bound));
        if (k == 2) {
            std::uint64_t mx = 0;
            for (std::int64_t h1 = 0; h1 < p; ++h1)
                for (std::int64_t h2 = 0; h2 < p * p; ++h2) {
                    auto d = oracle::linnik_direct(k, p, {h1, h2});
                    o.require(d == t.count({h1, h2}), "direct count differs");
                    mx = std::max(mx, d);
                }
            o.require(mx == t.max(), "direct max differs");
        } else {
            std::mt19937_64 rng(1005);
            for (int i = 0; i < 4; ++i) {
                std::vector<std::int64_t> H{static_cast<std::int64_t>(rng() % 5), static_cast<std::int64_t>(rng() % 25),
                                            static_cast<std::int64_t>(rng() % 125)};
                o.require(oracle::linnik_direct(3, 5, H) == t.count(H), "direct count differs at (3,5)");
            }
        }
        o.detail << "(" << k << "," << p << ") max " << t.max() << " <= " << bound << "; ";
    }
}

// 6. Vinogradov counts.
void vinogradov(Outcome& o) {
    for (int k = 1; k <= 3; ++k)
        for (std::int64_t X = 1; X <= 12; ++X) o.require(count_J(1, k, X) == X, "J_{1,k}(X) != X");
    o.require(count_J(2, 2, 2) == 6 && count_J(2, 2, 3) == 15, "J_{2,2}(2), J_{2,2}(3)");
    for (std::int64_t X = 1; X <= 30; ++X) o.require(count_J(2, 2, X) == 2 * X * X - X, "J_{2,2}(" + std::to_string(X) + ")");
    std::size_t agree = 0;
    for (std::int64_t X = 1; X <= 12; ++X) {
        o.require(count_J(2, 2, X) == oracle::brute_J(2, 2, X), "meet-in-the-middle vs nested loops, s=k=2");
        BigInt J = count_J(3, 3, X);
        o.require(J <= BigInt(6) * X * X * X, "J_{3,3}(" + std::to_string(X) + ") above 6X^3");
        o.require(J == oracle::brute_J(3, 3, X), "meet-in-the-middle vs nested loops, s=k=3, X=" + std::to_string(X));
        agree += 2;
    }
    o.require(count_J_congruence(3, 2, 6, 5) == oracle::brute_J(3, 2, 6, 5), "congruence count differs");
    o.require(count_J_congruence(3, 2, 6, 5, 1) == oracle::brute_J(3, 2, 6, 5, 1), "pinned congruence count differs");
    if (o.pass) o.detail << agree + 2 << " instances agree across both enumerations; J_{3,3}(12) = " << count_J(3, 3, 12);
}

// 7. Counting lemma, every admissible query.
void counting(Outcome& o) {
    for (auto [q, m] : {std::pair{3, 2}, {5, 2}}) {
        auto cfg = ScaleConfig::make(q, 2, m, 1, 2);
        auto sw = counting_lemma_exhaustive(cfg);
        o.require(sw.bound == 1, "bound is not 1");
        o.require(sw.violations == 0 && sw.max_count <= 1, "count above 1 at q=" + std::to_string(q));
        o.require(sw.queries > 0, "no queries");
        o.detail << "q=" << q << ": " << sw.queries << " queries, max " << sw.max_count << "; ";
    }
    // spot check against direct congruences
    std::mt19937_64 rng(1007);
    int q = 3, k = 2, m = 2;
    auto cfg = ScaleConfig::make(q, k, m, 1, 2);
    auto kappa_ints = partition(unit_interval(q), cfg.kappa_exp);
    auto boxes = subcubes(Cube(QVector(k, q), 0), k * cfg.nu_exp);
    for (int trial = 0; trial < 40; ++trial) {
        CountingQuery qry;
        std::size_t i0 = rng() % 3, i1 = (i0 + 1 + rng() % 2) % 3;
        qry.intervals = {kappa_ints[i0], kappa_ints[i1]};
        std::vector<std::int64_t> abar;
        for (const auto& I : qry.intervals) {
            auto sub = partition(I, m);
            qry.kbar.push_back(sub[rng() % sub.size()]);
            abar.push_back(static_cast<std::int64_t>(oracle::scaled(qry.kbar.back().corner, 0)));
        }
        qry.box = boxes[rng() % boxes.size()];
        std::size_t want = 0;
        for (const auto& K0 : partition(qry.intervals[0], m))
            for (const auto& K1 : partition(qry.intervals[1], m))
                want += oracle::in_counting_set({static_cast<std::int64_t>(oracle::scaled(K0.corner, 0)),
                                                 static_cast<std::int64_t>(oracle::scaled(K1.corner, 0))},
                                                abar, qry.box, q, k, m);
        o.require(counting_set(qry, cfg).size() == want, "counting_set differs from the congruence oracle");
    }
}

// 8. Broad-narrow pointwise bound.
void broad_narrow(Outcome& o) {
    std::mt19937_64 rng(1008);
    auto cfg = ScaleConfig::make(3, 2, 2, 1, 2);
    std::size_t cells = 0, broad = 0;
    double worst = 0;
    for (int i = 0; i < 50; ++i) {
        auto rep = broad_narrow_check(random_packet_function(3, 2, 2, rng), cfg);
        o.require(rep.holds, std::to_string(rep.violations) + " cells violate the bound (instance " + std::to_string(i) + ")");
        cells += rep.cells;
        broad += rep.broad_binding;
        worst = std::max(worst, rep.worst_ratio);
    }
    if (o.pass) o.detail << cells << " cells, broad term larger on " << broad << ", worst lhs/rhs " << worst;
}

struct Recomputed {
    std::size_t pieces = 0, N = 0;
    double lhs = 0, sum_sq_p = 0, max_inf = 0, sum_inf = 0, all_low = 0, max_J_inner = 0;
};

// Norms of g and of its delta-pieces on a grid holding all of them, grouped by nu-interval.
Recomputed recompute(const ModulatedStep& g, const ScaleConfig& cfg, int p) {
    Recomputed r;
    int low = p - 2 * cfg.k;
    auto pieces = nonzero_pieces(g, cfg.delta_exp);
    Window w = window_of(g);
    for (const auto& pc : pieces) w = join(w, window_of(pc.g));
    oracle::Grid grid{cfg.q, cfg.k, w.lo, w.hi};
    auto norms = [&](const std::vector<cplx>& v, double e) {
        double s = 0;
        for (const auto& x : v) s += std::pow(std::abs(x), e);
        return std::pow(s * grid.volume(), 1 / e);
    };
    auto vg = oracle::eval_grid(g, grid);
    r.lhs = std::pow(norms(vg, p), p);
    std::map<std::int64_t, double> inner;
    for (const auto& pc : pieces) {
        auto v = oracle::eval_grid(pc.g, grid);
        double lp = norms(v, p), lo = norms(v, low), li = 0;
        for (const auto& x : v) li = std::max(li, std::abs(x));
        r.sum_sq_p += lp * lp;
        r.max_inf = std::max(r.max_inf, li);
        r.sum_inf += li;
        r.all_low += lo * lo;
        inner[oracle::pmod(oracle::scaled(pc.I.corner, 0), oracle::ipow(cfg.q, cfg.nu_exp))] += lo * lo;
        ++r.pieces;
    }
    r.N = inner.size();
    for (const auto& [_, s] : inner) r.max_J_inner = std::max(r.max_J_inner, std::pow(s, low / 2.0));
    return r;
}

// 9. Main lemma and reversed Hoelder instances, every factor recomputed.
void lemma_instances(Outcome& o) {
    std::mt19937_64 rng(1009);
    auto cfg = ScaleConfig::make(3, 2, 2, 1, 2);
    const int p = 8, k = 2, low = p - 2 * k;
    double worst = 0;
    for (int i = 0; i < 20; ++i) {
        auto g = random_packet_function(3, 2, 2, rng, 0.4, 3);
        auto R = recompute(g, cfg, p);
        auto ml = verify_main_lemma(g, cfg, p);
        auto rh = verify_reversed_holder(g, cfg, p);
        const auto& F = ml.factors;
        std::string at = " (instance " + std::to_string(i) + ")";
        o.require(ml.holds, "main lemma fails" + at);
        o.require(rh.holds, "reversed Hoelder fails" + at);
        o.require(F.pieces.size() == R.pieces && F.N == R.N, "piece or nu-interval count differs" + at);

        double Dp = std::sqrt(3.0), Dlow = std::sqrt(3.0);  // trivial bound at delta/kappa = delta/nu = 1/3
        double term1 = std::pow(Dp, p) * std::pow(R.sum_sq_p, p / 2.0);
        double term2 = std::pow(3.0, -k * (k - 1)) * std::pow(3.0, cfg.kappa_exp * (k * k + 4.0 * k - 2)) *
                       std::pow(3.0, cfg.nu_exp * k * (k - 1) / 2.0) * std::pow(static_cast<double>(R.N), low) * std::pow(Dlow, low) *
                       std::pow(R.max_inf, k) * std::pow(R.sum_inf, k) * R.max_J_inner;
        double holder = std::pow(R.max_inf, k) * std::pow(R.sum_inf, k) * std::pow(R.all_low, low / 2.0);
        double rh_rhs = std::pow(static_cast<double>(R.N), low / 2.0) * std::pow(R.max_inf, k) * std::pow(R.sum_inf, k) * R.max_J_inner;
        std::vector<std::pair<double, double>> pairs{{ml.lhs, R.lhs},
                                                     {ml.D_p, Dp},
                                                     {ml.D_low, Dlow},
                                                     {F.sum_sq_p, R.sum_sq_p},
                                                     {F.max_inf, R.max_inf},
                                                     {F.sum_inf, R.sum_inf},
                                                     {F.max_J_inner, R.max_J_inner},
                                                     {ml.term_decoupled, term1},
                                                     {ml.term_broad, term2},
                                                     {ml.rhs, term1 + term2},
                                                     {rh.lhs, std::pow(R.sum_sq_p, p / 2.0)},
                                                     {rh.holder, holder},
                                                     {rh.rhs, rh_rhs}};
        for (std::size_t j = 0; j < pairs.size(); ++j) {
            double e = rel(pairs[j].first, pairs[j].second);
            worst = std::max(worst, e);
            o.require(e <= 1e-9, "factor " + std::to_string(j) + " differs by " + std::to_string(e) + at);
        }
        o.require(R.lhs <= (term1 + term2) * (1 + 1e-9), "recomputed main lemma fails" + at);
        o.require(std::pow(R.sum_sq_p, p / 2.0) <= holder * (1 + 1e-9) && holder <= rh_rhs * (1 + 1e-9),
                  "recomputed reversed Hoelder fails" + at);
    }
    if (o.pass) o.detail << "20 instances each, factors agree to " << worst;
}

// 10. Exponent engine identities.
void exponents(Outcome& o) {
    std::size_t checks = 0;
    for (int k = 2; k <= 5; ++k)
        for (int p0 = 2; p0 <= 4 * k; p0 += 2) {
            o.require(a_coeff(p0, p0, k) == 0, "a(p0,p0) != 0");
            for (int p = p0; p <= p0 + 20 * k; p += 2 * k, ++checks)
                o.require(a_coeff(p, p0, k) == a_coeff_recurrence(p, p0, k), "recurrence differs from closed form");
        }
    o.require(corollary_q_exponent(8, 2) == ExpRational(11, 8), "corollary exponent at k=2, p=8");
    for (int k = 2; k <= 5; ++k)
        for (int p = 2 * k; p <= 22 * k; p += 2 * k, ++checks)
            o.require(a_coeff(p, 2 * k, k) / p == corollary_closed_form(p, k), "corollary closed form");
    for (int k = 2; k <= 4; ++k)
        for (double c0 : {0.0, 1.0, k * k / 2.0, 10.0}) o.require(b_monotone_check(k, c0, 2, 100, 0.25), "b not monotone");
    for (int k = 2; k <= 5; ++k)
        for (int p0 = 2; p0 <= 6 * k; p0 += 2)
            for (int c = 0; c <= 40; ++c) {
                ExponentParams P;
                P.k = k;
                P.p0 = p0;
                P.c0 = ExpRational(c, 4);
                if (!P.positiveexp()) continue;
                for (int p = p0; p <= p0 + 40 * k; p += 2 * k, ++checks)
                    o.require(pineq_value(p, k, c / 4.0) >= -1e-12, "pineq fails under positiveexp");
            }
    if (o.pass) o.detail << checks << " identities; a(8,4)/8 = 11/8";
}

// 11. Karatsuba pipeline.
void karatsuba(Outcome& o) {
    for (int s : {2, 4})
        for (std::int64_t X = 1; X <= 8; ++X)
            o.require(karatsuba_bound(s, 2, X).bound >= count_J(s, 2, X), "bound below the count at s=" + std::to_string(s));
    // k=2: E(2)=2, E(s) = (2s-4)/2 + 5/2 + E(s-2)/2; k=3: E(3)=3, E(6)=8, E(9)=40/3
    o.require(karatsuba_exponent(2, 2) == 2 && karatsuba_exponent(4, 2) == BigRational(11, 2) &&
                  karatsuba_exponent(6, 2) == BigRational(37, 4) && karatsuba_exponent(8, 2) == BigRational(105, 8),
              "k=2 exponent trace");
    o.require(karatsuba_exponent(3, 3) == 3 && karatsuba_exponent(6, 3) == 8 && karatsuba_exponent(9, 3) == BigRational(40, 3),
              "k=3 exponent trace");
    auto r = karatsuba_bound(8, 2, 400);
    o.require(r.steps.size() == 3 && r.base_s == 2, "step count");
    BigInt prod = r.base_value;
    for (const auto& st : r.steps) {
        o.require(detail::is_prime(st.p) && st.p * st.p >= st.X, "prime choice");
        o.require(st.factor == boost::multiprecision::pow(BigInt(st.p), static_cast<unsigned>(2 * st.s - 3)) * BigInt(st.X) * st.X,
                  "step factor");
        prod *= st.factor;
    }
    o.require(prod == r.bound, "bound is not the product of its steps");
    if (o.pass) o.detail << "E(8) = 105/8 at k=2; bound(8,2,400) has " << r.steps.size() << " steps";
}

// 12. Extremizer ratios.
void extremizer_ratios(Outcome& o) {
    double prev12 = 0;
    for (int m : {1, 2})
        for (int p : {4, 12}) {
            auto r = exp_sum_lower_bound(3, 2, m, p);
            std::string at = " at delta=3^-" + std::to_string(m) + " p=" + std::to_string(p);
            o.require(r.ratio <= r.ceiling * (1 + 1e-12), "ratio above delta^-1/2" + at);
            o.require(rel(r.ratio, r.ratio_from_count) <= 1e-9, "ratio disagrees with the solution count" + at);
            if (m == 1 || p == 4)
                o.require(r.collisions == oracle::anchor_collisions(3, 2, m, p / 2), "collision count differs from nested loops" + at);
            if (p == 12) {
                o.require(r.ratio >= prev12 * (1 - 1e-12), "p=12 ratio decreased" + at);
                prev12 = r.ratio;
            }
            o.detail << "d=1/" << oracle::ipow(3, m) << ",p=" << p << ": " << r.ratio << " (ceiling " << r.ceiling << "); ";
        }
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria{
        {"fourier-unit-ball", fourier_unit_ball},
        {"plancherel-convolution", plancherel_convolution},
        {"tilings", tilings},
        {"wavepackets", wavepackets},
        {"linnik", linnik},
        {"vinogradov-counts", vinogradov},
        {"counting-lemma", counting},
        {"broad-narrow", broad_narrow},
        {"main-lemma-reversed-holder", lemma_instances},
        {"exponent-identities", exponents},
        {"karatsuba", karatsuba},
        {"extremizer", extremizer_ratios},
    };
    int failed = 0, id = 0;
    for (const auto& [name, fn] : criteria) {
        ++id;
        Outcome o;
        auto t0 = std::chrono::steady_clock::now();
        try {
            fn(o);
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail.str("");
            o.detail << "exception: " << e.what();
        }
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        failed += !o.pass;
        std::printf("%s %2d %-28s %8.2fs  %s\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), secs, o.detail.str().c_str());
        std::fflush(stdout);
    }
    std::printf("%d/%d criteria passed\n", id - failed, id);
    return failed ? 1 : 0;
}
