#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <vector>

#include "qdec/geometry.hpp"

namespace qdec {

using cplx = std::complex<double>;

inline constexpr std::size_t kDefaultCellBudget = std::size_t{1} << 22;
// Coefficients below this fraction of the largest one are treated as cancelled.
inline constexpr double kCancelTolerance = 1e-10;

// coeff * chi(modulation . x) * 1_cube(x)
struct Term {
    cplx coeff;
    QVector modulation;
    Cube cube;
};

class ModulatedStep {
public:
    ModulatedStep() = default;
    ModulatedStep(int q, int k) : q_(q), k_(k) {}

    static ModulatedStep indicator(const Cube& c, cplx coeff = 1.0) {
        ModulatedStep f(c.q(), c.k());
        f.push(Term{coeff, QVector(c.k(), c.q()), c});
        return f;
    }
    static ModulatedStep wave(cplx coeff, const QVector& modulation, const Cube& c) {
        ModulatedStep f(c.q(), c.k());
        f.push(Term{coeff, modulation, c});
        return f;
    }

    int q() const { return q_; }
    int k() const { return k_; }
    const std::vector<Term>& terms() const { return terms_; }
    bool empty() const { return terms_.empty(); }
    bool canonical() const { return canonical_; }
    // Common cube scale of a canonical, nonempty function.
    int scale() const { return scale_; }

    void push(Term t) {
        if (t.cube.k() != k_ || t.modulation.k() != k_) throw std::invalid_argument("ModulatedStep: term dimension");
        terms_.push_back(std::move(t));
        canonical_ = false;
    }

    static ModulatedStep from_canonical(int q, int k, std::vector<Term> terms, int scale) {
        ModulatedStep f(q, k);
        f.terms_ = std::move(terms);
        f.canonical_ = true;
        f.scale_ = scale;
        return f;
    }

private:
    int q_ = 0;
    int k_ = 0;
    std::vector<Term> terms_;
    bool canonical_ = true;
    int scale_ = 0;
};

namespace detail {

inline int finest_scale(const std::vector<Term>& ts) {
    int s = std::numeric_limits<int>::min();
    for (const auto& t : ts) s = std::max(s, t.cube.scale_exp);
    return s;
}
inline int coarsest_scale(const std::vector<Term>& ts) {
    int s = std::numeric_limits<int>::max();
    for (const auto& t : ts) s = std::min(s, t.cube.scale_exp);
    return s;
}

inline std::size_t count_cells(int q, int k, int levels) {
    long double n = std::pow(static_cast<long double>(q), static_cast<long double>(levels) * k);
    if (n > 1e15L) return std::numeric_limits<std::size_t>::max();
    return static_cast<std::size_t>(n);
}

// Calls fn(corner, modulation, coeff) for every subcube of t at scale s.
template <class Fn>
void split_term(const Term& t, int s, Fn&& fn) {
    int k = t.cube.k(), q = t.cube.q();
    QVector b = t.modulation.residue(-s);
    QVector db = t.modulation - b;
    bool twist = !db.is_zero();
    if (s == t.cube.scale_exp) {
        cplx c = t.coeff;
        if (twist) c *= char_chi(dot(db, t.cube.corner)).value();
        fn(t.cube.corner, b, c);
        return;
    }
    auto block = digit_block(q, t.cube.scale_exp, s);
    std::size_t n = block.size();
    std::vector<std::size_t> idx(static_cast<std::size_t>(k), 0);
    while (true) {
        QVector corner = t.cube.corner;
        for (int i = 0; i < k; ++i) corner[i] += block[idx[static_cast<std::size_t>(i)]];
        cplx c = t.coeff;
        if (twist) c *= char_chi(dot(db, corner)).value();
        fn(corner, b, c);
        int i = 0;
        for (; i < k; ++i) {
            if (++idx[static_cast<std::size_t>(i)] < n) break;
            idx[static_cast<std::size_t>(i)] = 0;
        }
        if (i == k) break;
    }
}

using CellMap = std::map<QVector, std::vector<std::pair<QVector, cplx>>>;

inline void check_cell_budget(const std::vector<Term>& ts, int s, std::size_t budget) {
    std::size_t total = 0;
    for (const auto& t : ts) {
        std::size_t c = count_cells(t.cube.q(), t.cube.k(), s - t.cube.scale_exp);
        if (c > budget || total + c > budget) throw ResourceError("step function refinement exceeds cell budget");
        total += c;
    }
}

inline CellMap build_cells(const std::vector<Term>& ts, int s, std::size_t budget) {
    check_cell_budget(ts, s, budget);
    CellMap cells;
    for (const auto& t : ts) {
        split_term(t, s, [&](const QVector& corner, const QVector& b, cplx c) {
            auto& slot = cells[corner];
            for (auto& [mb, mc] : slot) {
                if (mb == b) {
                    mc += c;
                    return;
                }
            }
            slot.emplace_back(b, c);
        });
    }
    // residues of cancellation scale with the inputs, so the threshold does too
    double mx = 0;
    for (const auto& t : ts) mx = std::max(mx, std::abs(t.coeff));
    double tol = kCancelTolerance * mx;
    for (auto it = cells.begin(); it != cells.end();) {
        auto& slot = it->second;
        slot.erase(std::remove_if(slot.begin(), slot.end(), [&](const auto& e) { return std::abs(e.second) <= tol; }),
                   slot.end());
        it = slot.empty() ? cells.erase(it) : std::next(it);
    }
    return cells;
}

inline bool near(cplx a, cplx b) {
    return std::abs(a - b) <= 1e-9 * std::max({1e-300, std::abs(a), std::abs(b)});
}

// Attempts to merge every full family of q^k sibling cells into its parent.
inline bool coarsen_once(CellMap& cells, int s, int q, int k) {
    std::size_t fam = count_cells(q, k, 1);
    std::map<QVector, std::vector<CellMap::const_iterator>> groups;
    for (auto it = cells.cbegin(); it != cells.cend(); ++it) groups[it->first.residue(s - 1)].push_back(it);
    CellMap merged;
    auto digits = digit_block(q, -s, -s + 1);
    for (const auto& [parent, kids] : groups) {
        if (kids.size() != fam) return false;
        const QVector& b0 = kids.front()->second.front().first;
        for (const auto& kid : kids)
            if (kid->second.front().first != b0) return false;
        // Each digit of B - b0 is read off a sibling that differs from the first kid in one
        // coordinate only; the whole family is then checked against that single candidate.
        const auto& y0 = kids.front()->first;
        cplx c0 = kids.front()->second.front().second;
        QVector D(k, q);
        std::vector<bool> solved(static_cast<std::size_t>(k), false);
        for (const auto& kid : kids) {
            int axis = -1;
            for (int i = 0; i < k; ++i) {
                if (kid->first[i] == y0[i]) continue;
                axis = axis == -1 ? i : -2;
            }
            if (axis < 0 || solved[static_cast<std::size_t>(axis)]) continue;
            QRational dy = kid->first[axis] - y0[axis];
            for (const auto& d : digits) {
                if (near(kid->second.front().second, c0 * char_chi(d * dy).value())) {
                    D[axis] = d;
                    solved[static_cast<std::size_t>(axis)] = true;
                    break;
                }
            }
            if (!solved[static_cast<std::size_t>(axis)]) return false;
        }
        cplx C = c0 * char_chi(dot(D, y0)).conj().value();
        for (const auto& kid : kids)
            if (!near(kid->second.front().second, C * char_chi(dot(D, kid->first)).value())) return false;
        merged[parent].emplace_back(b0 + D, C);
    }
    cells = std::move(merged);
    return true;
}

}  // namespace detail

namespace detail {

// Cells at one scale s inside q^lo O^k. A corner n q^lo has q-adic digits at positions lo..s-1 in
// every coordinate; the digits of all coordinates at one position form a super-digit in [0, q^k),
// and the key lists super-digits base q^k with position s-1 least significant. The q^k siblings of
// a parent cell are then consecutive keys and the parent key is key / q^k.
struct Cell {
    std::uint64_t key;
    std::uint32_t mod;
    cplx coeff;
};

struct CellTable {
    int q = 0, k = 0, lo = 0, s = 0;
    std::vector<Cell> cells;

    std::uint64_t Q() const { return static_cast<std::uint64_t>(ipow(q, k)); }
    std::int64_t side() const { return ipow(q, s - lo); }

    std::uint64_t encode(const std::int64_t* n) const {
        std::uint64_t key = 0, Qk = Q();
        for (int p = lo; p < s; ++p) {
            std::int64_t d = 0, w = ipow(q, p - lo);
            for (int j = k - 1; j >= 0; --j) d = d * q + (n[j] / w) % q;
            key = key * Qk + static_cast<std::uint64_t>(d);
        }
        return key;
    }
    void decode(std::uint64_t key, std::int64_t* n) const {
        std::uint64_t Qk = Q();
        std::fill(n, n + k, 0);
        for (int p = s - 1; p >= lo; --p) {
            auto d = static_cast<std::int64_t>(key % Qk);
            key /= Qk;
            std::int64_t w = ipow(q, p - lo);
            for (int j = 0; j < k; ++j, d /= q) n[j] += (d % q) * w;
        }
    }
};

class ModTable {
public:
    std::uint32_t intern(const QVector& b) {
        auto [it, fresh] = ids_.try_emplace(b, static_cast<std::uint32_t>(mods_.size()));
        if (fresh) mods_.push_back(b);
        return it->second;
    }
    const QVector& operator[](std::uint32_t i) const { return mods_[i]; }

private:
    std::map<QVector, std::uint32_t> ids_;
    std::vector<QVector> mods_;
};

inline int window_floor(const std::vector<Term>& ts) {
    int lo = std::numeric_limits<int>::max();
    for (const auto& t : ts) lo = std::min({lo, t.cube.scale_exp, min_valuation(t.cube.corner)});
    return lo;
}

// Keys need q^(k (s-lo)) < 2^63.
inline bool keys_fit(int q, int k, int span) {
    return std::pow(static_cast<long double>(q), static_cast<long double>(span) * k) < 9e18L;
}

inline cplx turn(std::int64_t r, std::int64_t side) {
    return std::polar(1.0, 2.0 * std::numbers::pi * static_cast<double>(r) / static_cast<double>(side));
}

inline CellTable build_table(const std::vector<Term>& ts, int q, int k, int lo, int s, ModTable& mods, std::size_t budget) {
    check_cell_budget(ts, s, budget);
    CellTable T{q, k, lo, s, {}};
    std::int64_t side = T.side();
    std::uint64_t Qk = T.Q();
    auto K = static_cast<std::size_t>(k);
    std::vector<std::int64_t> base(K), r(K);
    std::vector<std::int64_t> ang;
    for (const auto& t : ts) {
        int e = t.cube.scale_exp;
        QVector b = t.modulation.residue(-s);
        QVector db = t.modulation - b;
        bool twist = !db.is_zero();
        std::uint32_t id = mods.intern(b);
        for (std::size_t j = 0; j < K; ++j) base[j] = t.cube.corner[static_cast<int>(j)].scaled_mod(lo, side);
        auto count = static_cast<std::uint64_t>(ipow(static_cast<std::int64_t>(Qk), s - e));
        std::uint64_t K0 = CellTable{q, k, lo, e, {}}.encode(base.data()) * count;
        if (!twist) {
            for (std::uint64_t m = 0; m < count; ++m) T.cells.push_back(Cell{K0 + m, id, t.coeff});
            continue;
        }
        // chi(db . n q^lo) = e(sum_j r_j n_j / side); split n over the free positions e..s-1
        std::int64_t a0 = 0;
        for (std::size_t j = 0; j < K; ++j) {
            r[j] = db[static_cast<int>(j)].scaled_mod(-s, side);
            a0 = addmod(a0, mulmod(r[j], base[j], side), side);
        }
        int levels = s - e;
        ang.assign(static_cast<std::size_t>(levels) * Qk, 0);
        for (int p = 0; p < levels; ++p) {
            std::int64_t w = ipow(q, e + p - lo);
            for (std::uint64_t D = 0; D < Qk; ++D) {
                std::int64_t a = 0, d = static_cast<std::int64_t>(D);
                for (std::size_t j = 0; j < K; ++j, d /= q) a = addmod(a, mulmod(r[j], (d % q) * w, side), side);
                ang[static_cast<std::size_t>(p) * Qk + D] = a;
            }
        }
        for (std::uint64_t m = 0; m < count; ++m) {
            std::int64_t a = a0;
            std::uint64_t x = m;
            for (int p = levels - 1; p >= 0; --p, x /= Qk) a = addmod(a, ang[static_cast<std::size_t>(p) * Qk + x % Qk], side);
            T.cells.push_back(Cell{K0 + m, id, t.coeff * turn(a, side)});
        }
    }
    std::sort(T.cells.begin(), T.cells.end(), [](const Cell& x, const Cell& y) {
        return x.key != y.key ? x.key < y.key : x.mod < y.mod;
    });
    // residues of cancellation scale with the inputs, so the threshold does too
    double mx = 0;
    for (const auto& t : ts) mx = std::max(mx, std::abs(t.coeff));
    double tol = kCancelTolerance * mx;
    std::size_t out = 0;
    for (std::size_t i = 0; i < T.cells.size();) {
        std::size_t j = i;
        cplx sum = 0;
        while (j < T.cells.size() && T.cells[j].key == T.cells[i].key && T.cells[j].mod == T.cells[i].mod) sum += T.cells[j++].coeff;
        if (std::abs(sum) > tol) T.cells[out++] = Cell{T.cells[i].key, T.cells[i].mod, sum};
        i = j;
    }
    T.cells.resize(out);
    return T;
}

inline bool one_mod_per_cell(const CellTable& T) {
    for (std::size_t i = 1; i < T.cells.size(); ++i)
        if (T.cells[i - 1].key == T.cells[i].key) return false;
    return true;
}

// Merges every family of siblings into its parent, or changes nothing and returns false. The
// merged modulation gains one digit t_j q^-s per axis; kid q^j differs from kid 0 along axis j only.
inline bool coarsen_table(CellTable& T, ModTable& mods) {
    int q = T.q, k = T.k;
    std::uint64_t Qk = T.Q();
    auto& cs = T.cells;
    if (T.s - 1 < T.lo || cs.empty() || cs.size() % Qk != 0) return false;
    auto K = static_cast<std::size_t>(k);
    std::int64_t side = T.side();
    std::vector<std::int64_t> t(K), n(K);
    std::vector<Cell> out;
    out.reserve(cs.size() / Qk);
    std::map<std::pair<std::uint32_t, std::uint64_t>, std::uint32_t> merged_mod;
    for (std::size_t g = 0; g < cs.size(); g += Qk) {
        const Cell& c0 = cs[g];
        if (c0.key % Qk != 0 || cs[g + Qk - 1].key != c0.key + Qk - 1) return false;
        std::uint64_t tcode = 0;
        for (std::size_t j = 0, step = 1; j < K; ++j, step *= static_cast<std::size_t>(q)) {
            if (std::abs(c0.coeff) == 0) return false;
            double a = std::arg(cs[g + step].coeff / c0.coeff) * q / (2.0 * std::numbers::pi);
            t[j] = mod(static_cast<std::int64_t>(std::llround(a)), q);
        }
        for (std::size_t j = K; j-- > 0;) tcode = tcode * static_cast<std::uint64_t>(q) + static_cast<std::uint64_t>(t[j]);
        for (std::uint64_t i = 0; i < Qk; ++i) {
            const Cell& c = cs[g + i];
            if (c.mod != c0.mod) return false;
            std::int64_t a = 0, d = static_cast<std::int64_t>(i);
            for (std::size_t j = 0; j < K; ++j, d /= q) a += t[j] * (d % q);
            if (!near(c.coeff, c0.coeff * turn(a % q, q))) return false;
        }
        T.decode(c0.key, n.data());
        std::int64_t a = 0;
        for (std::size_t j = 0; j < K; ++j) a = addmod(a, mulmod(t[j], n[j], side), side);
        cplx C = c0.coeff * std::conj(turn(a, side));
        auto [it, fresh] = merged_mod.try_emplace({c0.mod, tcode}, 0);
        if (fresh) {
            QVector B = mods[c0.mod];
            for (std::size_t j = 0; j < K; ++j) B[static_cast<int>(j)] += QRational::from_parts(t[j], -T.s, q);
            it->second = mods.intern(B);
        }
        out.push_back(Cell{c0.key / Qk, it->second, C});
    }
    cs = std::move(out);
    --T.s;
    return true;
}

inline ModulatedStep canonicalize_generic(const std::vector<Term>& ts, int q, int k, std::size_t budget) {
    int s = finest_scale(ts);
    CellMap cells;
    for (;;) {
        cells = build_cells(ts, s, budget);
        bool single = true;
        for (const auto& [_, slot] : cells)
            if (slot.size() > 1) single = false;
        if (single) break;
        ++s;
    }
    if (cells.empty()) return ModulatedStep(q, k);
    while (coarsen_once(cells, s, q, k)) --s;
    std::vector<Term> out;
    out.reserve(cells.size());
    for (const auto& [corner, slot] : cells) out.push_back(Term{slot.front().second, slot.front().first, Cube(corner, s)});
    return ModulatedStep::from_canonical(q, k, std::move(out), s);
}

}  // namespace detail

// Equivalent function with all cubes at one common scale, pairwise disjoint, one term per cube,
// modulations reduced to their canonical digits; the common scale is the coarsest such scale.
inline ModulatedStep canonicalize(const ModulatedStep& f, std::size_t budget = kDefaultCellBudget) {
    if (f.canonical()) return f;
    int q = f.q(), k = f.k();
    std::vector<Term> ts;
    for (const auto& t : f.terms())
        if (t.coeff != cplx(0)) ts.push_back(t);
    if (ts.empty()) return ModulatedStep(q, k);
    int s = detail::finest_scale(ts), lo = detail::window_floor(ts);
    detail::ModTable mods;
    detail::CellTable cells;
    for (;; ++s) {
        if (!detail::keys_fit(q, k, s - lo)) return detail::canonicalize_generic(ts, q, k, budget);
        cells = detail::build_table(ts, q, k, lo, s, mods, budget);
        if (detail::one_mod_per_cell(cells)) break;
    }
    if (cells.cells.empty()) return ModulatedStep(q, k);
    while (detail::coarsen_table(cells, mods)) {
    }
    std::vector<Term> out;
    out.reserve(cells.cells.size());
    std::vector<std::int64_t> n(static_cast<std::size_t>(k));
    for (const auto& c : cells.cells) {
        cells.decode(c.key, n.data());
        QVector corner(k, q);
        for (int j = 0; j < k; ++j) corner[j] = QRational::from_parts(n[static_cast<std::size_t>(j)], lo, q);
        out.push_back(Term{c.coeff, mods[c.mod], Cube(corner, cells.s)});
    }
    return ModulatedStep::from_canonical(q, k, std::move(out), cells.s);
}

// Canonical terms of f re-expressed at the finer scale s (not coarsened).
inline std::vector<Term> refine(const ModulatedStep& f, int s, std::size_t budget = kDefaultCellBudget) {
    ModulatedStep g = canonicalize(f, budget);
    detail::check_cell_budget(g.terms(), s, budget);
    std::vector<Term> out;
    for (const auto& t : g.terms()) {
        if (s < t.cube.scale_exp) throw std::invalid_argument("refine: target scale coarser than function");
        detail::split_term(t, s, [&](const QVector& c, const QVector& b, cplx v) { out.push_back(Term{v, b, Cube(c, s)}); });
    }
    return out;
}

inline ModulatedStep operator+(const ModulatedStep& f, const ModulatedStep& g) {
    ModulatedStep h(f.q() ? f.q() : g.q(), f.q() ? f.k() : g.k());
    for (const auto& t : f.terms()) h.push(t);
    for (const auto& t : g.terms()) h.push(t);
    return canonicalize(h);
}

inline ModulatedStep scale(const ModulatedStep& f, cplx s) {
    ModulatedStep h(f.q(), f.k());
    for (auto t : f.terms()) {
        t.coeff *= s;
        h.push(std::move(t));
    }
    return canonicalize(h);
}

inline ModulatedStep operator-(const ModulatedStep& f, const ModulatedStep& g) { return f + scale(g, -1.0); }

inline ModulatedStep conjugate(const ModulatedStep& f) {
    ModulatedStep h(f.q(), f.k());
    for (const auto& t : f.terms()) h.push(Term{std::conj(t.coeff), -t.modulation, t.cube});
    return canonicalize(h);
}

// Grid (q^lo Z_q / q^hi Z_q)^k on which a function is supported and locally constant.
struct Window {
    int q = 0, k = 0, lo = 0, hi = 0;

    std::int64_t side() const { return detail::ipow(q, hi - lo); }
    std::size_t cells() const { return detail::count_cells(q, k, hi - lo); }
    double cell_volume() const { return std::pow(static_cast<double>(q), -static_cast<double>(hi) * k); }
    Window dual() const { return {q, k, -hi, -lo}; }

    QVector point(std::size_t idx) const {
        QVector x(k, q);
        auto n = static_cast<std::size_t>(side());
        for (int j = 0; j < k; ++j) {
            x[j] = QRational::from_parts(static_cast<std::int64_t>(idx % n), lo, q);
            idx /= n;
        }
        return x;
    }
    std::size_t index(const QVector& x) const {
        std::int64_t n = side();
        std::size_t idx = 0;
        for (int j = k - 1; j >= 0; --j) idx = idx * static_cast<std::size_t>(n) + static_cast<std::size_t>(x[j].scaled_mod(lo, n));
        return idx;
    }
};

inline Window join(const Window& a, const Window& b) { return {a.q, a.k, std::min(a.lo, b.lo), std::max(a.hi, b.hi)}; }

inline Window window_of(const ModulatedStep& f) {
    if (f.empty()) return {f.q(), f.k(), 0, 0};
    Window w{f.q(), f.k(), std::numeric_limits<int>::max(), std::numeric_limits<int>::min()};
    for (const auto& t : f.terms()) {
        w.lo = std::min({w.lo, t.cube.scale_exp, min_valuation(t.cube.corner)});
        int mv = min_valuation(t.modulation.residue(-t.cube.scale_exp));
        w.hi = std::max(w.hi, t.cube.scale_exp);
        if (mv != QRational::kZeroValuation) w.hi = std::max(w.hi, -mv);
    }
    return w;
}

// Values of f on every cell of w, index = sum n_j side^j.
inline std::vector<cplx> evaluate_grid(const ModulatedStep& f, const Window& w, std::size_t budget = kDefaultCellBudget) {
    std::size_t total = w.cells();
    if (total > budget) throw ResourceError("grid evaluation exceeds cell budget");
    std::vector<cplx> v(total, 0.0);
    std::int64_t N = w.side();
    std::vector<cplx> phase(static_cast<std::size_t>(N));
    for (std::int64_t t = 0; t < N; ++t) phase[static_cast<std::size_t>(t)] = UnitComplex::reduce(t, N).value();
    int k = w.k;
    std::vector<std::int64_t> stride_idx(static_cast<std::size_t>(k));
    for (int j = 0; j < k; ++j) stride_idx[static_cast<std::size_t>(j)] = detail::ipow(N, j);
    for (const auto& t0 : f.terms()) {
        const Term& t = t0;
        int e = t.cube.scale_exp;
        if (e < w.lo || e > w.hi || min_valuation(t.cube.corner) < w.lo)
            throw std::invalid_argument("evaluate_grid: term outside window");
        QVector b = t.modulation.residue(-e);
        cplx c = t.coeff * char_chi(dot(t.modulation - b, t.cube.corner)).value();
        std::vector<std::int64_t> base(static_cast<std::size_t>(k)), beta(static_cast<std::size_t>(k));
        for (int j = 0; j < k; ++j) {
            base[static_cast<std::size_t>(j)] = t.cube.corner[j].scaled_mod(w.lo, N);
            beta[static_cast<std::size_t>(j)] = b[j].scaled_mod(-w.hi, N);
        }
        std::int64_t step = detail::ipow(w.q, e - w.lo), count = detail::ipow(w.q, w.hi - e);
        std::vector<std::int64_t> cnt(static_cast<std::size_t>(k), 0);
        while (true) {
            std::int64_t ang = 0;
            std::int64_t idx = 0;
            for (int j = 0; j < k; ++j) {
                std::int64_t n = base[static_cast<std::size_t>(j)] + cnt[static_cast<std::size_t>(j)] * step;
                ang = detail::addmod(ang, detail::mulmod(beta[static_cast<std::size_t>(j)], n, N), N);
                idx += n * stride_idx[static_cast<std::size_t>(j)];
            }
            v[static_cast<std::size_t>(idx)] += c * phase[static_cast<std::size_t>(ang)];
            int j = 0;
            for (; j < k; ++j) {
                if (++cnt[static_cast<std::size_t>(j)] < count) break;
                cnt[static_cast<std::size_t>(j)] = 0;
            }
            if (j == k) break;
        }
    }
    return v;
}

namespace detail {

// Step function with value v[i] on cell i of w (cells at scale w.hi). Values below the cancellation
// tolerance relative to ref, the size of the inputs, are dropped.
inline ModulatedStep from_grid(const std::vector<cplx>& v, const Window& w, double ref = 0) {
    double mx = ref;
    for (const auto& z : v) mx = std::max(mx, std::abs(z));
    ModulatedStep h(w.q, w.k);
    for (std::size_t i = 0; i < v.size(); ++i)
        if (std::abs(v[i]) > kCancelTolerance * mx) h.push(Term{v[i], QVector(w.k, w.q), Cube(w.point(i), w.hi)});
    return canonicalize(h);
}

}  // namespace detail

inline ModulatedStep operator*(const ModulatedStep& f, const ModulatedStep& g) {
    ModulatedStep a = canonicalize(f), b = canonicalize(g);
    if (a.empty() || b.empty()) return ModulatedStep(f.q() ? f.q() : g.q(), f.q() ? f.k() : g.k());
    // disjoint cubes at one scale each: a fine cube meets at most the coarse cube containing it
    const ModulatedStep& coarse = a.scale() <= b.scale() ? a : b;
    const ModulatedStep& fine = a.scale() <= b.scale() ? b : a;
    std::map<QVector, const Term*> lookup;
    for (const auto& t : coarse.terms()) lookup.emplace(t.cube.corner, &t);
    ModulatedStep h(a.q(), a.k());
    for (const auto& t : fine.terms()) {
        auto it = lookup.find(t.cube.corner.residue(coarse.scale()));
        if (it == lookup.end()) continue;
        h.push(Term{t.coeff * it->second->coeff, t.modulation + it->second->modulation, t.cube});
    }
    return canonicalize(h);
}

inline ModulatedStep modulus_sq(const ModulatedStep& f) { return f * conjugate(f); }

namespace detail {

// Term by term; exact for sparse functions but a dense sum of many cells piles up on few
// frequency cubes, which then need a fine refinement.
inline ModulatedStep fourier_termwise(const ModulatedStep& f) {
    ModulatedStep h(f.q(), f.k());
    int k = f.k();
    for (const auto& t : f.terms()) {
        double vol = std::pow(static_cast<double>(f.q()), -static_cast<double>(t.cube.scale_exp) * k);
        cplx c = t.coeff * vol * char_chi(dot(t.cube.corner, t.modulation)).value();
        h.push(Term{c, -t.cube.corner, Cube(t.modulation, -t.cube.scale_exp)});
    }
    return canonicalize(h);
}

inline ModulatedStep inverse_fourier_termwise(const ModulatedStep& F) {
    ModulatedStep h(F.q(), F.k());
    int k = F.k();
    for (const auto& t : F.terms()) {
        double vol = std::pow(static_cast<double>(F.q()), -static_cast<double>(t.cube.scale_exp) * k);
        cplx c = t.coeff * vol * char_chi(dot(t.cube.corner, t.modulation)).value();
        h.push(Term{c, t.cube.corner, Cube(-t.modulation, -t.cube.scale_exp)});
    }
    return canonicalize(h);
}

}  // namespace detail

// f^(xi) = int f(x) chi(-x.xi) dx.
inline ModulatedStep fourier(const ModulatedStep& f);
// F-check(x) = int F(xi) chi(x.xi) dxi.
inline ModulatedStep inverse_fourier(const ModulatedStep& F);

// (f * g)(x) = int f(y) g(x - y) dy.
inline ModulatedStep convolve(const ModulatedStep& f, const ModulatedStep& g);

inline cplx integrate(const ModulatedStep& f) {
    cplx s = 0;
    for (const auto& t : f.terms()) {
        if (!t.modulation.residue(-t.cube.scale_exp).is_zero()) continue;
        double vol = std::pow(static_cast<double>(f.q()), -static_cast<double>(t.cube.scale_exp) * f.k());
        s += t.coeff * vol * char_chi(dot(t.modulation, t.cube.corner)).value();
    }
    return s;
}

inline cplx evaluate_at(const ModulatedStep& f, const QVector& x) {
    cplx s = 0;
    for (const auto& t : f.terms())
        if (t.cube.contains(x)) s += t.coeff * char_chi(dot(t.modulation, x)).value();
    return s;
}

// Cubes of the canonical Fourier support (pairwise disjoint).
struct FreqSupport {
    std::vector<Cube> cubes;
};

inline FreqSupport freq_support(const ModulatedStep& f) {
    FreqSupport s;
    for (const auto F = fourier(f); const auto& t : F.terms()) s.cubes.push_back(t.cube);
    return s;
}

// f_I: Fourier transform cut to I x Q_q^{k-1}.
inline ModulatedStep restrict_freq(const ModulatedStep& f, const Interval& I) {
    ModulatedStep F = fourier(f);
    if (F.empty()) return F;
    std::vector<Term> ts = F.scale() < I.scale_exp ? refine(F, I.scale_exp) : F.terms();
    ModulatedStep kept(f.q(), f.k());
    for (const auto& t : ts)
        if (I.contains(t.cube.corner[0])) kept.push(t);
    return inverse_fourier(kept);
}

inline bool approx_equal(const ModulatedStep& f, const ModulatedStep& g) {
    ModulatedStep h(f.q(), f.k());
    for (const auto& t : f.terms()) h.push(t);
    for (const auto& t : g.terms()) h.push(Term{-t.coeff, t.modulation, t.cube});
    // cancellation is judged against the size of the inputs, not of the difference
    double mx = 0;
    for (const auto& t : h.terms()) mx = std::max(mx, std::abs(t.coeff));
    ModulatedStep d = canonicalize(h);
    for (const auto& t : d.terms())
        if (std::abs(t.coeff) > 1e-8 * std::max(mx, 1e-300)) return false;
    return true;
}

namespace detail {

// Radix-q transform of x (length N, a power of q) into y: y[m] = sum_n x[n] root^(n m), where
// root^t = phase[t * (Nmax / N)].
inline void fft_line(const cplx* x, std::size_t xs, cplx* y, std::size_t N, std::size_t q, const std::vector<cplx>& phase,
                     std::vector<cplx>& scratch) {
    if (N == 1) {
        y[0] = x[0];
        return;
    }
    std::size_t M = N / q, unit = phase.size() / N;
    // sub-transform r of the samples x[q n + r] lands in y[r M .. r M + M)
    for (std::size_t r = 0; r < q; ++r) fft_line(x + r * xs, xs * q, y + r * M, M, q, phase, scratch);
    scratch.assign(y, y + N);
    for (std::size_t m = 0; m < N; ++m) {
        cplx s = 0;
        for (std::size_t r = 0; r < q; ++r) s += scratch[r * M + m % M] * phase[(r * m % N) * unit];
        y[m] = s;
    }
}

// In-place k-dimensional DFT of grid values of side N = q^L, one axis at a time.
inline void dft_axes(std::vector<cplx>& v, std::size_t N, std::size_t q, int k, int sign) {
    std::vector<cplx> phase(N);
    for (std::size_t t = 0; t < N; ++t) phase[t] = std::polar(1.0, sign * 2.0 * std::numbers::pi * static_cast<double>(t) / static_cast<double>(N));
    std::vector<cplx> line(N), out(N), scratch;
    std::size_t stride = 1;
    for (int axis = 0; axis < k; ++axis, stride *= N) {
        for (std::size_t base = 0; base < v.size(); ++base) {
            if ((base / stride) % N != 0) continue;
            for (std::size_t n = 0; n < N; ++n) line[n] = v[base + n * stride];
            fft_line(line.data(), 1, out.data(), N, q, phase, scratch);
            for (std::size_t m = 0; m < N; ++m) v[base + m * stride] = out[m];
        }
    }
}

// Transform on the window grid: f lives on q^lo O^k at scale q^hi, its transform on the dual window.
inline ModulatedStep fourier_grid(const ModulatedStep& f, int sign) {
    Window w = window_of(f);
    std::vector<cplx> v = evaluate_grid(f, w);
    double vol = w.cell_volume(), l1 = 0;
    for (const auto& z : v) l1 += std::abs(z);
    dft_axes(v, static_cast<std::size_t>(w.side()), static_cast<std::size_t>(w.q), w.k, sign);
    for (auto& z : v) z *= vol;
    // |transform| <= |f|_1
    return from_grid(v, w.dual(), l1 * vol);
}

// Many terms usually means a dense sum over a window small enough for the grid path.
inline bool prefer_grid(const ModulatedStep& f) {
    if (f.terms().size() < 64) return false;
    Window w = window_of(f);
    return w.cells() <= kDefaultCellBudget / 16 && w.side() <= 4096;
}

}  // namespace detail

inline ModulatedStep fourier(const ModulatedStep& f) {
    if (detail::prefer_grid(f)) return detail::fourier_grid(f, -1);
    try {
        return detail::fourier_termwise(f);
    } catch (const ResourceError&) {
        return detail::fourier_grid(f, -1);
    }
}

inline ModulatedStep inverse_fourier(const ModulatedStep& F) {
    if (detail::prefer_grid(F)) return detail::fourier_grid(F, 1);
    try {
        return detail::inverse_fourier_termwise(F);
    } catch (const ResourceError&) {
        return detail::fourier_grid(F, 1);
    }
}

// On a shared window small enough for a grid the product of transforms never leaves the grid,
// so only the result is canonicalized.
inline ModulatedStep convolve(const ModulatedStep& f, const ModulatedStep& g) {
    if (f.empty() || g.empty()) return ModulatedStep(f.q() ? f.q() : g.q(), f.q() ? f.k() : g.k());
    Window w = join(window_of(f), window_of(g));
    if (w.cells() > kDefaultCellBudget / 16 || w.side() > 4096) return inverse_fourier(fourier(f) * fourier(g));
    auto N = static_cast<std::size_t>(w.side());
    std::vector<cplx> vf = evaluate_grid(f, w), vg = evaluate_grid(g, w);
    // |f * g| <= |f|_2 |g|_2
    double nf = 0, ng = 0;
    for (std::size_t i = 0; i < vf.size(); ++i) {
        nf += std::norm(vf[i]);
        ng += std::norm(vg[i]);
    }
    double ref = std::sqrt(nf * ng) * w.cell_volume();
    detail::dft_axes(vf, N, static_cast<std::size_t>(w.q), w.k, -1);
    detail::dft_axes(vg, N, static_cast<std::size_t>(w.q), w.k, -1);
    // cell volumes of the two forward transforms and of the inverse one on the dual grid
    double scale = w.cell_volume() * w.cell_volume() * w.dual().cell_volume();
    for (std::size_t i = 0; i < vf.size(); ++i) vf[i] *= vg[i] * scale;
    detail::dft_axes(vf, N, static_cast<std::size_t>(w.q), w.k, 1);
    return detail::from_grid(vf, w, ref);
}

inline double grid_lp(const std::vector<cplx>& v, double cell_volume, double p) {
    if (std::isinf(p)) {
        double m = 0;
        for (const auto& z : v) m = std::max(m, std::abs(z));
        return m;
    }
    long double s = 0;
    for (const auto& z : v) s += std::pow(static_cast<long double>(std::abs(z)), static_cast<long double>(p));
    return static_cast<double>(std::pow(s * cell_volume, 1.0L / p));
}

// ||f||_p for p >= 1 (p = infinity allowed), evaluated on the constancy cells of f.
inline double lp_norm(const ModulatedStep& f, double p) {
    if (!(p >= 1)) throw std::invalid_argument("lp_norm: p must be >= 1");
    if (f.empty()) return 0;
    Window w = window_of(f);
    return grid_lp(evaluate_grid(f, w), w.cell_volume(), p);
}

inline double linf_norm(const ModulatedStep& f) { return lp_norm(f, std::numeric_limits<double>::infinity()); }

}  // namespace qdec
