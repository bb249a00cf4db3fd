#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <vector>

#include "qdec/vinogradov.hpp"
#include "qdec/wavepackets.hpp"

namespace qdec {

// Relative slack used when comparing floating sides of an inequality.
inline constexpr double kInequalitySlack = 1e-9;

inline bool le_with_slack(double lhs, double rhs) { return lhs <= rhs * (1 + kInequalitySlack) + 1e-300; }

struct DecouplingInstance {
    ModulatedStep f;
    int delta_exp = 1;
    double p = 2;
    std::vector<Interval> certificate;  // K with f_K != 0
};

inline DecouplingInstance make_instance(const ModulatedStep& f, int delta_exp, double p) {
    if (!(p >= 2)) throw std::invalid_argument("decoupling instance: p must be >= 2");
    ModulatedStep cf = canonicalize(f);
    return {cf, delta_exp, p, certify_fourier_support(cf, delta_exp)};
}

struct RatioReport {
    double ratio = 0;
    double lhs = 0;  // ||f||_p
    double rhs = 0;  // (sum_K ||f_K||_p^2)^{1/2}
    double ceiling = 0;  // delta^{-1/2}
    std::vector<std::pair<Interval, double>> pieces;
};

inline RatioReport decoupling_ratio(const DecouplingInstance& inst) {
    if (inst.f.empty()) throw std::invalid_argument("decoupling_ratio: zero function");
    RatioReport r;
    r.lhs = lp_norm(inst.f, inst.p);
    double s = 0;
    for (const auto& K : inst.certificate) {
        double n = lp_norm(restrict_freq(inst.f, K), inst.p);
        r.pieces.emplace_back(K, n);
        s += n * n;
    }
    r.rhs = std::sqrt(s);
    r.ratio = r.lhs / r.rhs;
    r.ceiling = std::pow(static_cast<double>(inst.f.q()), inst.delta_exp / 2.0);
    return r;
}

// sum over anchors a in [0, q^m) of chi(gamma(a).x) 1_{B(0, delta^-k)}(x)
inline ModulatedStep extremizer(int q, int k, int delta_exp) {
    Cube ball(QVector(k, q), -k * delta_exp);
    ModulatedStep f(q, k);
    std::int64_t n = detail::ipow(q, delta_exp);
    for (std::int64_t a = 0; a < n; ++a) f.push(Term{1.0, gamma(QRational(a, q), k), ball});
    return canonicalize(f);
}

struct ExtremizerReport {
    int q = 0, k = 0, delta_exp = 0, p = 0;
    double ratio = 0;
    double ceiling = 0;             // delta^{-1/2}
    double predicted_exponent = 0;  // max(0, 1/2 - k(k+1)/(2p))
    double predicted_ratio = 0;     // delta^{-predicted_exponent}
    BigInt collisions;              // anchor tuples with power sums equal mod q^{km}
    double ratio_from_count = 0;    // (collisions delta^{p/2})^{1/p}
};

inline ExtremizerReport exp_sum_lower_bound(int q, int k, int delta_exp, int p) {
    if (p < 2 || p % 2 != 0) throw std::invalid_argument("exp_sum_lower_bound: p must be even");
    ExtremizerReport r;
    r.q = q;
    r.k = k;
    r.delta_exp = delta_exp;
    r.p = p;
    auto inst = make_instance(extremizer(q, k, delta_exp), delta_exp, p);
    auto rr = decoupling_ratio(inst);
    r.ratio = rr.ratio;
    r.ceiling = rr.ceiling;
    r.predicted_exponent = std::max(0.0, 0.5 - k * (k + 1) / (2.0 * p));
    r.predicted_ratio = std::pow(static_cast<double>(q), delta_exp * r.predicted_exponent);
    std::vector<std::int64_t> anchors;
    for (std::int64_t a = 0; a < detail::ipow(q, delta_exp); ++a) anchors.push_back(a);
    std::vector<std::int64_t> moduli(static_cast<std::size_t>(k), detail::ipow(q, k * delta_exp));
    r.collisions = count_power_sum_collisions(anchors, p / 2, k, moduli);
    long double lc = std::log(static_cast<long double>(r.collisions.convert_to<long double>()));
    r.ratio_from_count = static_cast<double>(std::exp((lc - (p / 2.0L) * delta_exp * std::log(static_cast<long double>(q))) / p));
    return r;
}

// Values of several functions on one shared grid.
struct SharedGrid {
    Window window;
    std::vector<std::vector<cplx>> values;
};

inline SharedGrid evaluate_shared(const std::vector<const ModulatedStep*>& fs) {
    SharedGrid g;
    bool first = true;
    for (const auto* f : fs) {
        if (f->empty()) continue;
        Window w = window_of(*f);
        g.window = first ? w : join(g.window, w);
        first = false;
    }
    if (first) return g;
    for (const auto* f : fs)
        g.values.push_back(f->empty() ? std::vector<cplx>(g.window.cells(), 0.0) : evaluate_grid(*f, g.window));
    return g;
}

// Unordered k-subsets of {0..n-1}.
inline std::vector<std::vector<std::size_t>> k_subsets(std::size_t n, int k) {
    std::vector<std::vector<std::size_t>> out;
    if (static_cast<std::size_t>(k) > n) return out;
    std::vector<std::size_t> idx(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) idx[static_cast<std::size_t>(i)] = static_cast<std::size_t>(i);
    while (true) {
        out.push_back(idx);
        int i = k - 1;
        while (i >= 0 && idx[static_cast<std::size_t>(i)] == n - static_cast<std::size_t>(k - i)) --i;
        if (i < 0) break;
        ++idx[static_cast<std::size_t>(i)];
        for (int j = i + 1; j < k; ++j) idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
    }
    return out;
}

struct IntervalPiece {
    Interval I;
    ModulatedStep g;
};

inline std::vector<IntervalPiece> nonzero_pieces(const ModulatedStep& g, int scale_exp) {
    std::vector<IntervalPiece> out;
    for (const auto& I : partition(unit_interval(g.q()), scale_exp)) {
        ModulatedStep gi = restrict_freq(g, I);
        if (!gi.empty()) out.push_back({I, std::move(gi)});
    }
    return out;
}

// Transverse k-tuples (as unordered index sets) among pieces: pairwise distance > kappa.
inline std::vector<std::vector<std::size_t>> transverse_sets(const std::vector<IntervalPiece>& pieces, int k, int kappa_exp) {
    std::vector<std::vector<std::size_t>> out;
    QNorm kappa{pieces.empty() ? 2 : pieces.front().I.q(), false, -kappa_exp};
    for (auto& s : k_subsets(pieces.size(), k)) {
        bool ok = true;
        for (std::size_t a = 0; a < s.size() && ok; ++a)
            for (std::size_t b = a + 1; b < s.size() && ok; ++b)
                ok = interval_distance(pieces[s[a]].I, pieces[s[b]].I) > kappa;
        if (ok) out.push_back(std::move(s));
    }
    return out;
}

struct BroadNarrowReport {
    std::size_t cells = 0;
    std::size_t narrow_binding = 0;
    std::size_t broad_binding = 0;
    std::size_t violations = 0;
    double worst_ratio = 0;  // max lhs / rhs over checked cells
    bool holds = true;
};

namespace detail {

inline void broad_narrow_cell(BroadNarrowReport& rep, int k, double kappa, cplx gx, const std::vector<cplx>& pieces,
                              const std::vector<std::vector<std::size_t>>& transverse) {
    double lhs = std::pow(std::abs(gx), 2 * k);
    double mx = 0;
    for (const auto& v : pieces) mx = std::max(mx, std::abs(v));
    double c = std::pow(2.0, 2 * k - 1);
    double narrow = c * std::pow(static_cast<double>(k), 2 * k) * std::pow(mx, 2 * k);
    double best = 0;
    for (const auto& s : transverse) {
        double prod = 1;
        for (auto i : s) prod *= std::norm(pieces[i]);
        best = std::max(best, prod);
    }
    double broad = c * std::pow(kappa, -(4.0 * k - 2)) * best;
    double rhs = narrow + broad;
    ++rep.cells;
    if (lhs == 0 && rhs == 0) return;
    (narrow >= broad ? rep.narrow_binding : rep.broad_binding)++;
    if (rhs > 0) rep.worst_ratio = std::max(rep.worst_ratio, lhs / rhs);
    if (!le_with_slack(lhs, rhs)) {
        ++rep.violations;
        rep.holds = false;
    }
}

}  // namespace detail

// |g|^{2k} <= 2^{2k-1} k^{2k} max_I |g_I|^{2k} + 2^{2k-1} kappa^{-(4k-2)} max_transverse |g_I1 ... g_Ik|^2,
// checked on every constancy cell (or at the given points).
inline BroadNarrowReport broad_narrow_check(const ModulatedStep& g0, const ScaleConfig& cfg,
                                            const std::vector<QVector>* points = nullptr) {
    BroadNarrowReport rep;
    ModulatedStep g = canonicalize(g0);
    if (g.empty()) return rep;
    certify_fourier_support(g, cfg.delta_exp);
    auto pieces = nonzero_pieces(g, cfg.kappa_exp);
    auto trans = transverse_sets(pieces, cfg.k, cfg.kappa_exp);
    std::vector<cplx> vals(pieces.size());
    if (points) {
        for (const auto& x : *points) {
            for (std::size_t i = 0; i < pieces.size(); ++i) vals[i] = evaluate_at(pieces[i].g, x);
            detail::broad_narrow_cell(rep, cfg.k, cfg.kappa(), evaluate_at(g, x), vals, trans);
        }
        return rep;
    }
    std::vector<const ModulatedStep*> fs{&g};
    for (const auto& pc : pieces) fs.push_back(&pc.g);
    SharedGrid grid = evaluate_shared(fs);
    std::size_t n = grid.window.cells();
    for (std::size_t c = 0; c < n; ++c) {
        for (std::size_t i = 0; i < pieces.size(); ++i) vals[i] = grid.values[i + 1][c];
        detail::broad_narrow_cell(rep, cfg.k, cfg.kappa(), grid.values[0][c], vals, trans);
    }
    return rep;
}

// ---------------------------------------------------------------- counting lemma

struct CountingQuery {
    std::vector<Interval> intervals;  // I_1..I_k in P_kappa
    std::vector<Interval> kbar;       // Kbar_i in P_delta(I_i)
    Cube box;                         // side nu^k
};

inline std::int64_t counting_bound(const ScaleConfig& cfg) {
    return detail::ipow(cfg.q, (cfg.kappa_exp - 1) * cfg.k * (cfg.k - 1));
}

inline void validate_query(const CountingQuery& qry, const ScaleConfig& cfg) {
    int k = cfg.k;
    if (static_cast<int>(qry.intervals.size()) != k || static_cast<int>(qry.kbar.size()) != k)
        throw std::invalid_argument("counting query: need k intervals and k sub-intervals");
    QNorm kappa{cfg.q, false, -cfg.kappa_exp};
    for (int i = 0; i < k; ++i) {
        const auto& I = qry.intervals[static_cast<std::size_t>(i)];
        if (I.scale_exp != cfg.kappa_exp) throw std::invalid_argument("counting query: interval not in P_kappa");
        const auto& Kb = qry.kbar[static_cast<std::size_t>(i)];
        if (Kb.scale_exp != cfg.delta_exp || !I.contains(Kb))
            throw std::invalid_argument("counting query: Kbar_i must be a delta-interval inside I_i");
        for (int j = i + 1; j < k; ++j)
            if (!(interval_distance(I, qry.intervals[static_cast<std::size_t>(j)]) > kappa))
                throw std::invalid_argument("counting query: intervals not kappa-separated");
    }
    if (qry.box.k() != k || qry.box.scale_exp != k * cfg.nu_exp) throw std::invalid_argument("counting query: box side must be nu^k");
}

namespace detail {

// Odometer over the product of per-slot interval lists.
template <class Fn>
void for_each_interval_tuple(const std::vector<std::vector<Interval>>& slots, Fn&& fn) {
    std::size_t k = slots.size();
    std::vector<std::size_t> idx(k, 0);
    std::vector<Interval> cur(k);
    while (true) {
        for (std::size_t i = 0; i < k; ++i) cur[i] = slots[i][idx[i]];
        fn(cur);
        std::size_t i = 0;
        for (; i < k; ++i) {
            if (++idx[i] < slots[i].size()) break;
            idx[i] = 0;
        }
        if (i == k) break;
    }
}

inline QVector gamma_sum(const std::vector<Interval>& ks, int k) {
    QVector s(k, ks.front().q());
    for (const auto& K : ks) s = s + gamma(K.corner, k);
    return s;
}

}  // namespace detail

// All (K_1..K_k), K_i in P_delta(I_i), with 0 in tau_K1 + ... + tau_Kk - tau_Kbar1 - ... - tau_Kbark + box.
inline std::vector<std::vector<Interval>> counting_set(const CountingQuery& qry, const ScaleConfig& cfg) {
    validate_query(qry, cfg);
    int k = cfg.k;
    Cube fixed = qry.box;
    for (const auto& Kb : qry.kbar) fixed = minkowski_sum(fixed, negate(tau_of(Kb, k)));
    std::vector<std::vector<Interval>> slots;
    for (const auto& I : qry.intervals) slots.push_back(partition(I, cfg.delta_exp));
    std::vector<std::vector<Interval>> out;
    QVector zero(k, cfg.q);
    detail::for_each_interval_tuple(slots, [&](const std::vector<Interval>& ks) {
        Cube c = fixed;
        for (const auto& K : ks) c = minkowski_sum(c, tau_of(K, k));
        if (c.contains(zero)) out.push_back(ks);
    });
    return out;
}

// Stricter variant: membership decided on actual Fourier support cubes. support_of(K) lists the
// cubes of supp g_K^, box_support those of the weight restricted to the box.
inline std::vector<std::vector<Interval>> counting_set_with_supports(
    const CountingQuery& qry, const ScaleConfig& cfg, const std::function<std::vector<Cube>(const Interval&)>& support_of,
    const std::vector<Cube>& box_support) {
    validate_query(qry, cfg);
    int k = cfg.k;
    auto sumset = [](const std::set<Cube>& a, const std::vector<Cube>& b) {
        std::set<Cube> out;
        for (const auto& x : a)
            for (const auto& y : b) out.insert(minkowski_sum(x, y));
        return out;
    };
    std::set<Cube> fixed(box_support.begin(), box_support.end());
    for (const auto& Kb : qry.kbar) {
        std::vector<Cube> neg;
        for (const auto& c : support_of(Kb)) neg.push_back(negate(c));
        fixed = sumset(fixed, neg);
    }
    std::vector<std::vector<Interval>> slots;
    for (const auto& I : qry.intervals) slots.push_back(partition(I, cfg.delta_exp));
    std::vector<std::vector<Interval>> out;
    QVector zero(k, cfg.q);
    detail::for_each_interval_tuple(slots, [&](const std::vector<Interval>& ks) {
        std::set<Cube> cur = fixed;
        for (const auto& K : ks) cur = sumset(cur, support_of(K));
        for (const auto& c : cur)
            if (c.contains(zero)) {
                out.push_back(ks);
                return;
            }
    });
    return out;
}

struct CountingSweep {
    std::size_t queries = 0;
    std::uint64_t max_count = 0;
    std::int64_t bound = 0;
    std::size_t violations = 0;
    std::size_t interval_tuples = 0;
};

// Every admissible query: ordered kappa-separated I-tuples, all Kbar, and every box of side nu^k in O^k.
// Only the delta-cube of the box matters, so counts come from a histogram of sum gamma(a_i) mod delta.
inline CountingSweep counting_lemma_exhaustive(const ScaleConfig& cfg) {
    cfg.validate();
    int k = cfg.k, q = cfg.q, m = cfg.delta_exp;
    CountingSweep sw;
    sw.bound = counting_bound(cfg);
    auto kappa_ints = partition(unit_interval(q), cfg.kappa_exp);
    QNorm kappa{q, false, -cfg.kappa_exp};
    std::vector<Cube> boxes = subcubes(Cube(QVector(k, q), 0), k * cfg.nu_exp);
    std::vector<std::vector<Interval>> all(static_cast<std::size_t>(k), kappa_ints);
    detail::for_each_interval_tuple(all, [&](const std::vector<Interval>& Is) {
        for (std::size_t i = 0; i < Is.size(); ++i)
            for (std::size_t j = i + 1; j < Is.size(); ++j)
                if (!(interval_distance(Is[i], Is[j]) > kappa)) return;
        ++sw.interval_tuples;
        std::vector<std::vector<Interval>> slots;
        for (const auto& I : Is) slots.push_back(partition(I, m));
        std::map<QVector, std::uint64_t> hist;
        detail::for_each_interval_tuple(slots, [&](const std::vector<Interval>& ks) { ++hist[detail::gamma_sum(ks, k).residue(m)]; });
        detail::for_each_interval_tuple(slots, [&](const std::vector<Interval>& kbar) {
            QVector s = detail::gamma_sum(kbar, k);
            for (const auto& box : boxes) {
                ++sw.queries;
                auto it = hist.find((s - box.corner).residue(m));
                std::uint64_t c = it == hist.end() ? 0 : it->second;
                sw.max_count = std::max(sw.max_count, c);
                if (c > static_cast<std::uint64_t>(sw.bound)) ++sw.violations;
            }
        });
    });
    return sw;
}

// ---------------------------------------------------------------- main lemma and reversed Hoelder

// Certified upper bound for the decoupling constant at frequency scale q^-scale_exp and exponent p.
using DecBoundSupplier = std::function<double(double p, int scale_exp)>;

inline DecBoundSupplier trivial_dec_bound(int q) {
    return [q](double, int scale_exp) { return std::pow(static_cast<double>(q), scale_exp / 2.0); };
}

struct PieceNorms {
    Interval K;
    double lp = 0, linf = 0, lp_low = 0;  // ||g_K||_p, ||g_K||_inf, ||g_K||_{p-2k}
};

struct LemmaFactors {
    std::vector<PieceNorms> pieces;
    std::size_t N = 0;          // J in P_nu with g_J != 0
    double sum_sq_p = 0;        // sum_K ||g_K||_p^2
    double max_inf = 0;         // max_K ||g_K||_inf
    double sum_inf = 0;         // sum_K ||g_K||_inf
    double max_J_inner = 0;     // max_J (sum_{K in J} ||g_K||_{p-2k}^2)^{(p-2k)/2}
};

inline LemmaFactors lemma_factors(const ModulatedStep& g, const ScaleConfig& cfg, int p) {
    LemmaFactors F;
    auto cert = certify_fourier_support(g, cfg.delta_exp);
    int low = p - 2 * cfg.k;
    std::map<Interval, double> inner;
    for (const auto& K : cert) {
        ModulatedStep gK = restrict_freq(g, K);
        PieceNorms pn{K, lp_norm(gK, p), linf_norm(gK), lp_norm(gK, low)};
        F.sum_sq_p += pn.lp * pn.lp;
        F.max_inf = std::max(F.max_inf, pn.linf);
        F.sum_inf += pn.linf;
        inner[Interval(K.corner, cfg.nu_exp)] += pn.lp_low * pn.lp_low;
        F.pieces.push_back(pn);
    }
    F.N = inner.size();
    for (const auto& [_, s] : inner) F.max_J_inner = std::max(F.max_J_inner, std::pow(s, low / 2.0));
    return F;
}

inline void check_lemma_exponent(int p, int k) {
    if (p % 2 != 0 || p < 2 * k + 2) throw std::invalid_argument("p must lie in 2k + 2N (even, > 2k)");
}

struct MainLemmaReport {
    double lhs = 0;  // int |g|^p
    double D_p = 0, D_low = 0;
    double constant = 1;
    double term_decoupled = 0;
    double term_broad = 0;
    double rhs = 0;
    LemmaFactors factors;
    bool holds = true;
};

// Lemma inequality with the decoupling factor raised to the p-th power, as in the proof.
inline MainLemmaReport verify_main_lemma(const ModulatedStep& g0, const ScaleConfig& cfg, int p,
                                         DecBoundSupplier supplier = {}, double C = 1.0) {
    check_lemma_exponent(p, cfg.k);
    cfg.validate();
    MainLemmaReport r;
    r.constant = C;
    ModulatedStep g = canonicalize(g0);
    if (g.empty()) return r;
    if (!supplier) supplier = trivial_dec_bound(cfg.q);
    int k = cfg.k, q = cfg.q, low = p - 2 * k;
    r.factors = lemma_factors(g, cfg, p);
    const auto& F = r.factors;
    r.lhs = std::pow(lp_norm(g, p), p);
    r.D_p = supplier(p, cfg.delta_exp - cfg.kappa_exp);
    r.D_low = supplier(low, cfg.delta_exp - cfg.nu_exp);
    r.term_decoupled = C * std::pow(r.D_p, p) * std::pow(F.sum_sq_p, p / 2.0);
    double qd = static_cast<double>(q);
    r.term_broad = C * std::pow(qd, -k * (k - 1)) * std::pow(qd, cfg.kappa_exp * (k * k + 4.0 * k - 2)) *
                   std::pow(qd, cfg.nu_exp * k * (k - 1) / 2.0) * std::pow(static_cast<double>(F.N), low) *
                   std::pow(r.D_low, low) * std::pow(F.max_inf, k) * std::pow(F.sum_inf, k) * F.max_J_inner;
    r.rhs = r.term_decoupled + r.term_broad;
    r.holds = le_with_slack(r.lhs, r.rhs);
    return r;
}

struct ReversedHolderReport {
    double lhs = 0;     // (sum_K ||g_K||_p^2)^{p/2}
    double holder = 0;  // max_K ||g_K||_inf^k (sum ||g_K||_inf)^k (sum_K ||g_K||_{p-2k}^2)^{(p-2k)/2}
    double rhs = 0;     // with N and the max over J in P_nu
    LemmaFactors factors;
    bool holds = true;
};

inline ReversedHolderReport verify_reversed_holder(const ModulatedStep& g0, const ScaleConfig& cfg, int p) {
    if (p % 2 != 0 || p <= 2 * cfg.k) throw std::invalid_argument("reversed Hoelder: p must be even and > 2k");
    cfg.validate();
    ReversedHolderReport r;
    ModulatedStep g = canonicalize(g0);
    if (g.empty()) return r;
    int k = cfg.k, low = p - 2 * k;
    r.factors = lemma_factors(g, cfg, p);
    const auto& F = r.factors;
    double all_low = 0;
    for (const auto& pn : F.pieces) all_low += pn.lp_low * pn.lp_low;
    r.lhs = std::pow(F.sum_sq_p, p / 2.0);
    r.holder = std::pow(F.max_inf, k) * std::pow(F.sum_inf, k) * std::pow(all_low, low / 2.0);
    r.rhs = std::pow(static_cast<double>(F.N), low / 2.0) * std::pow(F.max_inf, k) * std::pow(F.sum_inf, k) * F.max_J_inner;
    r.holds = le_with_slack(r.lhs, r.holder) && le_with_slack(r.holder, r.rhs);
    return r;
}

// ---------------------------------------------------------------- affine rescaling

// Frequency map xi' -> gamma(a0) + A D xi' sending P_{delta/|I|}(O) onto P_delta(I), I = a0 + q^r O.
// A_ji = C(j,i) a0^{j-i} (unipotent), D = diag(q^{r i}).
class AffineMap {
public:
    AffineMap(const Interval& I, int k) : a0_(I.corner), r_(I.scale_exp), k_(k) {
        int q = I.q();
        binom_.assign(static_cast<std::size_t>(k + 1), std::vector<std::int64_t>(static_cast<std::size_t>(k + 1), 0));
        for (int n = 0; n <= k; ++n) {
            binom_[static_cast<std::size_t>(n)][0] = 1;
            for (int j = 1; j <= n; ++j)
                binom_[static_cast<std::size_t>(n)][static_cast<std::size_t>(j)] =
                    binom_[static_cast<std::size_t>(n - 1)][static_cast<std::size_t>(j - 1)] +
                    (j < n ? binom_[static_cast<std::size_t>(n - 1)][static_cast<std::size_t>(j)] : 0);
        }
        pw_.push_back(QRational(1, q));
        npw_.push_back(QRational(1, q));
        for (int i = 1; i <= k; ++i) {
            pw_.push_back(pw_.back() * a0_);
            npw_.push_back(npw_.back() * (-a0_));
        }
    }

    int r() const { return r_; }
    // |det A D| = q^{-r k(k+1)/2}
    double det_norm(int q) const { return std::pow(static_cast<double>(q), -r_ * k_ * (k_ + 1) / 2.0); }

    // (A D)^{-1} v
    QVector inverse_apply(const QVector& v) const {
        int q = v.q();
        QVector out(k_, q);
        for (int j = 1; j <= k_; ++j) {
            QRational s(0, q);
            for (int i = 1; i <= j; ++i) s += QRational(binom(j, i), q) * npw_[static_cast<std::size_t>(j - i)] * v[i - 1];
            out[j - 1] = s * QRational::power(-r_ * j, q);
        }
        return out;
    }
    // (A D)^T y = D A^T y
    QVector transpose_apply(const QVector& y) const {
        int q = y.q();
        QVector out(k_, q);
        for (int i = 1; i <= k_; ++i) {
            QRational s(0, q);
            for (int j = i; j <= k_; ++j) s += QRational(binom(j, i), q) * pw_[static_cast<std::size_t>(j - i)] * y[j - 1];
            out[i - 1] = s * QRational::power(r_ * i, q);
        }
        return out;
    }
    // Image of a delta-interval K inside I.
    Interval rescaled(const Interval& K) const {
        return Interval((K.corner - a0_) * QRational::power(-r_, K.q()), K.scale_exp - r_);
    }

private:
    std::int64_t binom(int n, int i) const { return binom_[static_cast<std::size_t>(n)][static_cast<std::size_t>(i)]; }
    QRational a0_;
    int r_, k_;
    std::vector<std::vector<std::int64_t>> binom_;
    std::vector<QRational> pw_, npw_;
};

// h(x) = |det L|^{-1} chi(-x . L^{-1} gamma(a0)) g(L^{-T} x), whose Fourier transform is g^ composed with the map.
inline ModulatedStep affine_rescale(const ModulatedStep& g0, const Interval& I) {
    ModulatedStep g = canonicalize(g0);
    int k = g.k(), q = g.q();
    AffineMap L(I, k);
    QVector g0pt = gamma(I.corner, k);
    double inv_det = 1.0 / L.det_norm(q);
    int r = L.r();
    ModulatedStep h(q, k);
    for (const auto& t : g.terms()) {
        QVector mod = L.inverse_apply(t.modulation - g0pt);
        QVector base = L.transpose_apply(t.cube.corner);
        int e = t.cube.scale_exp, fine = e + r * k;
        // coordinate i of the image box has side q^-(e + r i); cut it into cubes of side q^-fine
        std::vector<std::vector<QRational>> offs;
        for (int i = 1; i <= k; ++i) offs.push_back(digit_block(q, e + r * i, fine));
        std::vector<std::size_t> idx(static_cast<std::size_t>(k), 0);
        while (true) {
            QVector c = base;
            for (int i = 0; i < k; ++i) c[i] += offs[static_cast<std::size_t>(i)][idx[static_cast<std::size_t>(i)]];
            h.push(Term{t.coeff * inv_det, mod, Cube(c, fine)});
            int i = 0;
            for (; i < k; ++i) {
                if (++idx[static_cast<std::size_t>(i)] < offs[static_cast<std::size_t>(i)].size()) break;
                idx[static_cast<std::size_t>(i)] = 0;
            }
            if (i == k) break;
        }
    }
    return canonicalize(h);
}

struct AffineRescaleReport {
    int r = 0;
    double det = 1;
    double norm_gI = 0;
    double norm_h = 0;
    double max_rel_err = 0;  // over g_I and every g_K
    std::size_t pieces = 0;
    bool support_ok = true;
    bool norms_ok = true;
    double ratio_g = 0, ratio_h = 0;  // decoupling ratios before and after
    ModulatedStep h;
};

inline AffineRescaleReport affine_rescale_verify(const ModulatedStep& g, const Interval& I, const ScaleConfig& cfg, double p) {
    int k = cfg.k, q = cfg.q, m = cfg.delta_exp;
    if (I.scale_exp > m) throw std::invalid_argument("affine rescale: interval shorter than delta");
    AffineRescaleReport rep;
    ModulatedStep gI = restrict_freq(canonicalize(g), I);
    if (gI.empty()) throw std::invalid_argument("affine rescale: g_I is zero");
    AffineMap L(I, k);
    rep.r = L.r();
    rep.det = L.det_norm(q);
    rep.h = affine_rescale(gI, I);
    double scale = std::pow(rep.det, 1.0 - 1.0 / p);
    auto rel = [](double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); };
    rep.norm_gI = lp_norm(gI, p);
    rep.norm_h = lp_norm(rep.h, p);
    rep.max_rel_err = rel(rep.norm_gI, scale * rep.norm_h);
    std::vector<Interval> kprime;
    try {
        kprime = certify_fourier_support(rep.h, m - rep.r);
    } catch (const std::invalid_argument&) {
        rep.support_ok = false;
    }
    double sg = 0, sh = 0;
    for (const auto& K : certify_fourier_support(gI, m)) {
        ModulatedStep gK = restrict_freq(gI, K);
        ModulatedStep hK = restrict_freq(rep.h, L.rescaled(K));
        double a = lp_norm(gK, p), b = lp_norm(hK, p);
        rep.max_rel_err = std::max(rep.max_rel_err, rel(a, scale * b));
        sg += a * a;
        sh += b * b;
        ++rep.pieces;
    }
    if (rep.support_ok && kprime.size() != rep.pieces) rep.support_ok = false;
    rep.ratio_g = rep.norm_gI / std::sqrt(sg);
    rep.ratio_h = rep.norm_h / std::sqrt(sh);
    rep.norms_ok = rep.max_rel_err <= 1e-9;
    return rep;
}

// ---------------------------------------------------------------- reverse square function

struct ReverseSquareReport {
    double lhs = 0;     // int |g|^{2k}
    double square = 0;  // int (sum_K |g_K|^2)^k
    double ratio = 0;
    double trivial_bound = 0;  // delta^{-k}
    double narrow_sum = 0;     // sum_I int |g_I|^{2k}
    double broad_sum = 0;      // sum over ordered transverse tuples of int |g_I1 ... g_Ik|^2
    double bg_rhs = 0;
    double broad_bound = 0;    // (q kappa)^{-k(k-1)} square
    double max_narrow_ratio = 0;
    double recursion_rhs = 0;
    bool trivial_holds = true, bg_holds = true, broad_holds = true, recursion_holds = true;
    bool holds() const { return trivial_holds && bg_holds && broad_holds && recursion_holds; }
};

inline ReverseSquareReport reverse_square_check(const ModulatedStep& g0, int delta_exp, int kappa_exp) {
    ReverseSquareReport r;
    ModulatedStep g = canonicalize(g0);
    if (g.empty()) return r;
    int k = g.k(), q = g.q();
    auto cert = certify_fourier_support(g, delta_exp);
    std::vector<ModulatedStep> gK;
    for (const auto& K : cert) gK.push_back(restrict_freq(g, K));
    auto pieces = nonzero_pieces(g, kappa_exp);
    std::vector<const ModulatedStep*> fs{&g};
    for (const auto& f : gK) fs.push_back(&f);
    for (const auto& pc : pieces) fs.push_back(&pc.g);
    SharedGrid grid = evaluate_shared(fs);
    double vol = grid.window.cell_volume();
    std::size_t n = grid.window.cells(), nK = gK.size(), nI = pieces.size();
    // piece index of each K
    std::vector<std::size_t> owner(nK);
    for (std::size_t i = 0; i < nK; ++i)
        for (std::size_t j = 0; j < nI; ++j)
            if (pieces[j].I.contains(cert[i])) owner[i] = j;
    std::vector<double> narrow_num(nI, 0), narrow_den(nI, 0);
    // ordered transverse tuples: every permutation of each transverse set
    auto trans = transverse_sets(pieces, k, kappa_exp);
    double perms = std::tgamma(k + 1.0);
    std::vector<double> sq(nI);
    for (std::size_t c = 0; c < n; ++c) {
        double tot = 0;
        std::fill(sq.begin(), sq.end(), 0.0);
        for (std::size_t i = 0; i < nK; ++i) {
            double v = std::norm(grid.values[1 + i][c]);
            tot += v;
            sq[owner[i]] += v;
        }
        r.lhs += std::pow(std::abs(grid.values[0][c]), 2 * k) * vol;
        r.square += std::pow(tot, k) * vol;
        for (std::size_t j = 0; j < nI; ++j) {
            double a = std::pow(std::abs(grid.values[1 + nK + j][c]), 2 * k) * vol;
            narrow_num[j] += a;
            narrow_den[j] += std::pow(sq[j], k) * vol;
            r.narrow_sum += a;
        }
        for (const auto& s : trans) {
            double prod = 1;
            for (auto j : s) prod *= std::norm(grid.values[1 + nK + j][c]);
            r.broad_sum += perms * prod * vol;
        }
    }
    r.ratio = r.lhs / r.square;
    double delta = std::pow(static_cast<double>(q), -delta_exp), kappa = std::pow(static_cast<double>(q), -kappa_exp);
    r.trivial_bound = std::pow(delta, -k);
    double c = std::pow(2.0, 2 * k - 1);
    r.bg_rhs = c * std::pow(static_cast<double>(k), 2 * k) * r.narrow_sum + c * std::pow(kappa, -(4.0 * k - 2)) * r.broad_sum;
    double count = std::pow(q * kappa, -static_cast<double>(k * (k - 1)));
    r.broad_bound = count * r.square;
    for (std::size_t j = 0; j < nI; ++j)
        if (narrow_den[j] > 0) r.max_narrow_ratio = std::max(r.max_narrow_ratio, narrow_num[j] / narrow_den[j]);
    r.recursion_rhs = c * std::pow(static_cast<double>(k), 2 * k) * r.max_narrow_ratio + c * std::pow(kappa, -(4.0 * k - 2)) * count;
    r.trivial_holds = le_with_slack(r.ratio, r.trivial_bound);
    r.bg_holds = le_with_slack(r.lhs, r.bg_rhs);
    r.broad_holds = le_with_slack(r.broad_sum, r.broad_bound);
    r.recursion_holds = le_with_slack(r.ratio, r.recursion_rhs);
    return r;
}

}  // namespace qdec
