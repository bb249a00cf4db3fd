#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <vector>

#include "qdec/stepfn.hpp"

namespace qdec {

// delta = q^-delta_exp, nu = q^-nu_exp, kappa = q^-kappa_exp.
struct ScaleConfig {
    int q = 3, k = 2;
    int delta_exp = 1;
    int nu_exp = 1;
    int kappa_exp = 1;
    std::int64_t eps_num = 1, eps_den = 2;

    // nu = q^floor(log_q delta^{1/k}), kappa = q^floor(log_q delta^eps).
    static ScaleConfig make(int q, int k, int delta_exp, std::int64_t eps_num, std::int64_t eps_den) {
        if (eps_num <= 0 || eps_den <= 0 || eps_num >= eps_den) throw std::invalid_argument("ScaleConfig: eps must lie in (0,1)");
        ScaleConfig c{q, k, delta_exp, 0, 0, eps_num, eps_den};
        c.nu_exp = (delta_exp + k - 1) / k;
        c.kappa_exp = static_cast<int>((delta_exp * eps_num + eps_den - 1) / eps_den);
        c.validate();
        return c;
    }
    void validate() const {
        if (!detail::is_prime(q) || q <= k) throw std::invalid_argument("ScaleConfig: q must be a prime > k");
        if (delta_exp < 1) throw std::invalid_argument("ScaleConfig: delta must be < 1");
        if (nu_exp * k < delta_exp) throw std::invalid_argument("ScaleConfig: nu exceeds delta^{1/k}");
        if (kappa_exp < 1 || kappa_exp > delta_exp) throw std::invalid_argument("ScaleConfig: kappa outside [delta, 1)");
    }
    double delta() const { return std::pow(static_cast<double>(q), -delta_exp); }
    double nu() const { return std::pow(static_cast<double>(q), -nu_exp); }
    double kappa() const { return std::pow(static_cast<double>(q), -kappa_exp); }
};

// Cubes of scale e that meet the support of f.
inline std::set<Cube> covering_cubes(const ModulatedStep& f, int e) {
    std::set<Cube> out;
    for (const auto cf = canonicalize(f); const auto& t : cf.terms()) {
        if (t.cube.scale_exp >= e) {
            out.insert(Cube(t.cube.corner, e));
        } else {
            for (auto& c : subcubes(t.cube, e)) out.insert(std::move(c));
        }
    }
    return out;
}

// Intervals K in P_delta carrying Fourier mass; throws naming the first cube outside the thetas.
inline std::vector<Interval> certify_fourier_support(const ModulatedStep& f, int delta_exp) {
    std::set<Interval> ks;
    int k = f.k();
    for (const auto F = fourier(f); const auto& t : F.terms()) {
        const QRational& x = t.cube.corner[0];
        if (x.valuation() < 0) throw std::invalid_argument("Fourier support outside the thetas at cube " + t.cube.corner.to_string());
        Interval K(x, delta_exp);
        if (!theta_of(K, k).contains(t.cube))
            throw std::invalid_argument("Fourier support outside the thetas at cube " + t.cube.corner.to_string() +
                                        " scale " + std::to_string(t.cube.scale_exp));
        ks.insert(K);
    }
    return {ks.begin(), ks.end()};
}

inline ModulatedStep tile_indicator(const Tile& T, cplx coeff = 1.0) {
    ModulatedStep f(T.base.q(), T.k);
    for (const auto& c : T.cubes()) f.push(Term{coeff, QVector(T.k, T.base.q()), c});
    return canonicalize(f);
}

struct Packet {
    Tile tile;
    ModulatedStep piece;
    double height = 0;
};

struct WavepacketSet {
    Interval base;
    std::vector<Packet> packets;
};

// g = sum over tiles T of g 1_T, for g Fourier supported in theta_K.
inline WavepacketSet wavepacket_decompose(const ModulatedStep& g, const Interval& K) {
    int k = g.k(), m = K.scale_exp;
    ModulatedStep cg = canonicalize(g);
    ThetaBox th = theta_of(K, k);
    for (const auto F = fourier(cg); const auto& t : F.terms())
        if (!th.contains(t.cube))
            throw std::invalid_argument("wavepacket_decompose: Fourier support leaves theta_K at cube " +
                                        t.cube.corner.to_string());
    WavepacketSet out{K, {}};
    for (const auto& Q : covering_cubes(cg, -k * m)) {
        for (const auto& T : tile_partition(Q, K)) {
            ModulatedStep piece = cg * tile_indicator(T);
            if (piece.empty()) continue;
            double h = std::abs(evaluate_at(piece, T.offset));
            out.packets.push_back(Packet{T, std::move(piece), h});
        }
    }
    return out;
}

struct PigeonholeBucket {
    double H = 0;
    int height_index = 0;  // H = H* 2^-height_index
    std::int64_t alpha = 1;
    std::int64_t beta = 1;
    ModulatedStep function;
    std::vector<Interval> intervals;
    std::vector<Tile> packet_tiles;
};

struct PigeonholeResult {
    double H_star = 0;
    double threshold = 0;
    std::vector<PigeonholeBucket> buckets;
    ModulatedStep remainder;
    double remainder_norm = 0;
    double remainder_bound = 0;  // (sum_K ||f_K||_p^2)^{1/2}
};

inline std::int64_t dyadic_ceiling(std::int64_t n) {
    std::int64_t a = 1;
    while (a < n) a *= 2;
    return a;
}

// Index i with h in (H* 2^{-i-1}, H* 2^{-i}]; exact powers of two land in their own bucket.
inline int height_index(double h_star, double h) {
    double r = std::log2(h_star / h);
    double rr = std::round(r);
    if (std::abs(r - rr) < 1e-9) return static_cast<int>(rr);
    return static_cast<int>(std::floor(r));
}

// Height, packet-count and sibling-count pigeonholing; height_exponent defaults to 1 + k(k-1)/(2p).
inline PigeonholeResult pigeonhole(const ModulatedStep& f, const ScaleConfig& cfg, double p,
                                   std::optional<double> height_exponent = std::nullopt) {
    int k = cfg.k, q = cfg.q, m = cfg.delta_exp;
    ModulatedStep cf = canonicalize(f);
    PigeonholeResult res;
    res.remainder = ModulatedStep(q, k);
    if (cf.empty()) return res;
    if (covering_cubes(cf, -k * m).size() != 1)
        throw std::invalid_argument("pigeonhole: f must live on one translate of the ball of radius delta^-k");
    certify_fourier_support(cf, m);
    double expo = height_exponent.value_or(1.0 + k * (k - 1) / (2.0 * p));

    struct KData {
        Interval K;
        ModulatedStep fK;
        WavepacketSet packets;
    };
    std::vector<KData> parts;
    double sum_sq = 0;
    for (const auto& K : partition(unit_interval(q), m)) {
        ModulatedStep fK = restrict_freq(cf, K);
        if (fK.empty()) continue;
        res.H_star = std::max(res.H_star, linf_norm(fK));
        double n = lp_norm(fK, p);
        sum_sq += n * n;
        parts.push_back({K, fK, wavepacket_decompose(fK, K)});
    }
    res.remainder_bound = std::sqrt(sum_sq);
    res.threshold = std::pow(cfg.delta(), expo) * res.H_star;

    // (height index, K position) -> packet indices
    std::map<int, std::map<std::size_t, std::vector<std::size_t>>> by_height;
    ModulatedStep rem(q, k);
    for (std::size_t i = 0; i < parts.size(); ++i) {
        for (std::size_t j = 0; j < parts[i].packets.packets.size(); ++j) {
            const auto& pk = parts[i].packets.packets[j];
            int hi = height_index(res.H_star, pk.height);
            if (res.H_star * std::pow(2.0, -hi) <= res.threshold) {
                for (const auto& t : pk.piece.terms()) rem.push(t);
                continue;
            }
            by_height[hi][i].push_back(j);
        }
    }
    res.remainder = canonicalize(rem);
    res.remainder_norm = lp_norm(res.remainder, p);

    for (const auto& [hi, per_k] : by_height) {
        std::map<std::int64_t, std::vector<std::size_t>> by_alpha;
        for (const auto& [i, pks] : per_k) by_alpha[dyadic_ceiling(static_cast<std::int64_t>(pks.size()))].push_back(i);
        for (const auto& [alpha, ks] : by_alpha) {
            std::map<Interval, std::vector<std::size_t>> by_parent;
            for (auto i : ks) by_parent[Interval(parts[i].K.corner, cfg.nu_exp)].push_back(i);
            std::map<std::int64_t, std::vector<std::size_t>> by_beta;
            for (const auto& [J, kids] : by_parent)
                for (auto i : kids) by_beta[dyadic_ceiling(static_cast<std::int64_t>(kids.size()))].push_back(i);
            for (const auto& [beta, members] : by_beta) {
                PigeonholeBucket b;
                b.height_index = hi;
                b.H = res.H_star * std::pow(2.0, -hi);
                b.alpha = alpha;
                b.beta = beta;
                ModulatedStep fn(q, k);
                for (auto i : members) {
                    b.intervals.push_back(parts[i].K);
                    for (auto j : per_k.at(i)) {
                        const auto& pk = parts[i].packets.packets[j];
                        b.packet_tiles.push_back(pk.tile);
                        for (const auto& t : pk.piece.terms()) fn.push(t);
                    }
                }
                b.function = canonicalize(fn);
                res.buckets.push_back(std::move(b));
            }
        }
    }
    return res;
}

// Random function sum_K chi(gamma(a_K).x) sum_T c_{K,T} 1_T on the ball of radius delta^-k,
// with coefficient sizes spread over a few dyadic levels.
template <class Rng>
ModulatedStep random_packet_function(int q, int k, int delta_exp, Rng& rng, double fill = 0.5, int levels = 3) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::uniform_int_distribution<int> lvl(0, std::max(0, levels - 1));
    ModulatedStep f(q, k);
    Cube ball(QVector(k, q), -k * delta_exp);
    for (const auto& K : partition(unit_interval(q), delta_exp)) {
        QVector mod = gamma(K.corner, k);
        for (const auto& T : tile_partition(ball, K)) {
            if (unif(rng) >= fill) continue;
            double mag = std::ldexp(0.5 + 0.5 * unif(rng), -lvl(rng));
            cplx c = std::polar(mag, 2.0 * std::numbers::pi * unif(rng));
            for (const auto& cube : T.cubes()) f.push(Term{c, mod, cube});
        }
    }
    return canonicalize(f);
}

}  // namespace qdec
