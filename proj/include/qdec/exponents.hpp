#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

namespace qdec {

using ExpRational = boost::multiprecision::cpp_rational;

inline double to_double(const ExpRational& r) { return static_cast<double>(r); }

struct ExponentParams {
    int k = 2;
    int p0 = 4;
    ExpRational c0 = 0;
    double C1 = 1.0;
    ExpRational epsilon{1, 100};
    int q = 3;

    // 1/2 - k(k+1)/(2p0) + (c0/p0)(1-1/k)^{p0/(2k)} >= 0
    double positiveexp_value() const {
        return 0.5 - k * (k + 1) / (2.0 * p0) + to_double(c0) / p0 * std::pow(1.0 - 1.0 / k, p0 / (2.0 * k));
    }
    bool positiveexp() const { return positiveexp_value() >= -1e-12; }

    void validate_ranges() const {
        if (k < 2) throw std::invalid_argument("exponent params: k must be >= 2");
        if (p0 < 2 || p0 % 2 != 0) throw std::invalid_argument("exponent params: p0 must be an even integer >= 2");
        if (c0 < 0) throw std::invalid_argument("exponent params: c0 must be >= 0");
        if (epsilon <= 0 || epsilon >= 1) throw std::invalid_argument("exponent params: eps must lie in (0,1)");
        if (!(C1 > 0)) throw std::invalid_argument("exponent params: C1 must be positive");
    }
    void validate() const {
        validate_ranges();
        if (!positiveexp()) throw std::invalid_argument("exponent params: the base exponent is negative");
    }
};

inline void check_lattice(int p, int p0, int k) {
    if (p < p0 || (p - p0) % (2 * k) != 0)
        throw std::invalid_argument("p=" + std::to_string(p) + " is not in p0 + 2k N (p0=" + std::to_string(p0) +
                                    ", k=" + std::to_string(k) + ")");
}

// a(p,p0) = n(p0/2 + (k^2+7k-4)/2) + (k/2) n (n+1), n = (p-p0)/(2k)
inline ExpRational a_coeff(int p, int p0, int k) {
    check_lattice(p, p0, k);
    ExpRational n(p - p0, 2 * k);
    return n * (ExpRational(p0, 2) + ExpRational(k * k + 7 * k - 4, 2)) + ExpRational(k, 2) * n * (n + 1);
}

// a(p) = a(p-2k) + p/2 + (k^2+7k-4)/2 from a(p0) = 0.
inline ExpRational a_coeff_recurrence(int p, int p0, int k) {
    check_lattice(p, p0, k);
    ExpRational a = 0;
    for (int r = p0 + 2 * k; r <= p; r += 2 * k) a += ExpRational(r, 2) + ExpRational(k * k + 7 * k - 4, 2);
    return a;
}

// (1/(2k) - 1/p)(k^2+9k-4)/2 + (p/(2k) - 1)/4
inline ExpRational corollary_closed_form(int p, int k) {
    return (ExpRational(1, 2 * k) - ExpRational(1, p)) * ExpRational(k * k + 9 * k - 4, 2) +
           (ExpRational(p, 2 * k) - 1) / 4;
}

// a(p,2k)/p, checked against the closed form.
inline ExpRational corollary_q_exponent(int p, int k) {
    check_lattice(p, 2 * k, k);
    ExpRational v = a_coeff(p, 2 * k, k) / p;
    if (v != corollary_closed_form(p, k)) throw std::logic_error("corollary q-exponent: closed form disagrees");
    return v;
}

// (1-1/k)^{p/(2k)}
inline double decay(int k, double p) { return std::pow(1.0 - 1.0 / k, p / (2.0 * k)); }

inline double b_func(double p, int k, double c0) {
    return (p - k * (k + 1)) * std::pow(1.0 - 1.0 / k, -p / (2.0 * k)) + 2.0 * c0;
}

// b nondecreasing on the grid lo, lo+step, ..., hi.
inline bool b_monotone_check(int k, double c0, double lo, double hi, double step) {
    double prev = b_func(lo, k, c0);
    for (double p = lo + step; p <= hi + 1e-12; p += step) {
        double v = b_func(p, k, c0);
        if (v < prev - 1e-12 * std::max(1.0, std::abs(prev))) return false;
        prev = v;
    }
    return true;
}

// p/2 - k(k+1)/2 + c0 (1-1/k)^{p/(2k)}
inline double pineq_value(double p, int k, double c0) { return p / 2.0 - k * (k + 1) / 2.0 + c0 * decay(k, p); }

struct TheoremExponent {
    double delta_exponent = 0;  // signed power of delta
    ExpRational q_exponent;     // a(p,p0)/p
    bool hypothesis_ok = true;  // positiveexp at p0; the formula is evaluated either way
};

inline TheoremExponent theorem_exponent(const ExponentParams& P, int p) {
    P.validate_ranges();
    check_lattice(p, P.p0, P.k);
    int k = P.k;
    TheoremExponent t;
    t.hypothesis_ok = P.positiveexp();
    t.delta_exponent = -(0.5 - k * (k + 1) / (2.0 * p)) - to_double(P.c0) / p * decay(k, p) - to_double(P.epsilon);
    t.q_exponent = a_coeff(p, P.p0, k) / p;
    return t;
}

// max(0, 1/2 - k(k+1)/(2p))
inline double bdg_exponent(int p, int k) { return std::max(0.0, 0.5 - k * (k + 1) / (2.0 * p)); }

// M = ceil(log(1/eps) / log(1/(1-eps))): least M with (1-eps)^M <= eps.
inline int inner_iterations(double eps) {
    if (!(eps > 0 && eps < 1)) throw std::invalid_argument("inner_iterations: eps must lie in (0,1)");
    double r = std::log(1.0 / eps) / std::log(1.0 / (1.0 - eps));
    int M = static_cast<int>(std::ceil(r - 1e-12));
    while (std::pow(1.0 - eps, M) > eps) ++M;
    while (M > 1 && std::pow(1.0 - eps, M - 1) <= eps) --M;
    return std::max(M, 1);
}

struct TrajectoryStep {
    int p = 0;
    int M = 0;
    double base_exponent = 0;  // p/2 - k(k+1)/2 + c0 (1-1/k)^{p/(2k)}
    double loss = 0;           // accumulated eps losses x_p
    double exponent = 0;       // power of 1/delta bounding D_p(delta)^p
    double magnitude = 0;      // exponent / p
    ExpRational q_power;       // a(p,p0)
    // unspecified constants, kept as symbolic powers
    long long C_power = 0;
    long long log_power = 0;  // power of log(1/delta)
    int C1_power = 0;
};

struct BoundTrajectory {
    std::vector<TrajectoryStep> steps;
    double final_magnitude() const { return steps.back().magnitude; }
};

struct BaseBound {
    // D_{p0}(delta)^{p0} <= C1^{p0} delta^{-exponent}
    double exponent = 0;
};

inline BaseBound hypothesis_base(const ExponentParams& P) {
    return {P.p0 / 2.0 - P.k * (P.k + 1) / 2.0 + to_double(P.c0) * decay(P.k, P.p0)};
}

// Unrolls the induction on p from p0 with M inner scale steps per level.
inline BoundTrajectory iterate_D_bound(const ExponentParams& P, int p, std::optional<BaseBound> base = std::nullopt) {
    P.validate();
    check_lattice(p, P.p0, P.k);
    if (!base) throw std::invalid_argument("iterate_D_bound: base bound for D_{p0} missing");
    int k = P.k;
    double eps = to_double(P.epsilon);
    int M = inner_iterations(eps);
    double c0 = to_double(P.c0);
    BoundTrajectory tr;
    TrajectoryStep s0;
    s0.p = P.p0;
    s0.base_exponent = pineq_value(P.p0, k, c0);
    s0.exponent = base->exponent;
    s0.magnitude = s0.exponent / P.p0;
    s0.q_power = 0;
    s0.C1_power = P.p0;
    tr.steps.push_back(s0);
    double loss = 0;
    for (int r = P.p0 + 2 * k; r <= p; r += 2 * k) {
        const TrajectoryStep& prev = tr.steps.back();
        TrajectoryStep st;
        st.p = r;
        st.M = M;
        st.base_exponent = pineq_value(r, k, c0);
        loss = (k * k + 4 * k - 2) * eps + (1.0 - 1.0 / k) * loss;
        st.loss = loss;
        // second bracket of the iteration with D_{p-2k} taken at delta^{1-1/k}
        double via_lower = (r / 2.0 + k * (k - 3) / 2.0) / k + (k * k + 4 * k - 2) * eps + (1.0 - 1.0 / k) * prev.exponent;
        double trivial = std::pow(1.0 - eps, M) * r / 2.0;
        st.exponent = std::max(via_lower, trivial);
        st.magnitude = st.exponent / r;
        st.q_power = a_coeff(r, P.p0, k);
        st.C_power = prev.C_power + M + 1;
        st.log_power = prev.log_power + 3LL * M * r;
        st.C1_power = prev.C1_power;
        tr.steps.push_back(st);
    }
    return tr;
}

// Declared degradation: the trajectory magnitude exceeds the eps-free theorem magnitude by at most this.
inline double trajectory_slack(const ExponentParams& P, int p) {
    double eps = to_double(P.epsilon);
    int k = P.k;
    return std::max(k * (k * k + 4.0 * k - 2.0) * eps, eps * p / 2.0) / p;
}

}  // namespace qdec
