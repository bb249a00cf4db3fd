#include <chrono>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "qdec/decoupling.hpp"
#include "qdec/exponents.hpp"
#include "qdec/io.hpp"
#include "qdec/version.hpp"
#include "qdec/vinogradov.hpp"
#include "qdec/wavepackets.hpp"

using namespace qdec;

namespace {

enum Exit { kOk = 0, kUsage = 2, kResource = 3, kVerification = 4 };

struct Options {
    std::string format = "json";
    std::string out;
    std::uint64_t seed = 0;
    int q = 3, k = 2;
    int delta_exp = 2, kappa_exp = 1;
    int s = 2;
    std::int64_t X = 8, X_max = 0, p_int = 0;
    std::int64_t residue = -1;
    int p = 8;
    int p0 = 4;
    int p_max = 40;
    std::string c0 = "0", eps = "1/2", C1 = "1";
    std::string input;
    bool exhaustive = false, extremizer = false;
    int samples = 100;
    int instances = 5;
    std::uint64_t budget = kDefaultTupleBudget;
};

json config_json(const std::string& cmd, const Options& o) {
    return json{{"subcommand", cmd}, {"q", o.q}, {"k", o.k}, {"delta_exp", o.delta_exp}, {"kappa_exp", o.kappa_exp},
                {"s", o.s}, {"X", o.X}, {"X_max", o.X_max}, {"prime", o.p_int}, {"residue", o.residue},
                {"p", o.p}, {"p0", o.p0}, {"p_max", o.p_max}, {"c0", o.c0}, {"eps", o.eps}, {"C1", o.C1},
                {"input", o.input}, {"exhaustive", o.exhaustive}, {"extremizer", o.extremizer},
                {"samples", o.samples}, {"instances", o.instances}, {"seed", o.seed}, {"budget", o.budget},
                {"format", o.format}};
}

struct VerificationFailure : std::runtime_error {
    json result;
    VerificationFailure(const std::string& why, json r) : std::runtime_error(why), result(std::move(r)) {}
};

void require_q(const Options& o) {
    if (!detail::is_prime(o.q) || o.q <= o.k) throw std::invalid_argument("q must be a prime greater than k");
    if (o.k < 1) throw std::invalid_argument("k must be positive");
}

std::string big(const BigInt& b) { return b.str(); }
std::string rat(const BigRational& r) {
    std::ostringstream s;
    s << numerator(r);
    if (denominator(r) != 1) s << "/" << denominator(r);
    return s.str();
}

ModulatedStep load_or_random(const Options& o, int delta_exp) {
    if (!o.input.empty()) {
        std::ifstream in(o.input);
        if (!in) throw std::invalid_argument("cannot read " + o.input);
        json j;
        try {
            in >> j;
        } catch (const json::exception& e) {
            throw std::invalid_argument(std::string("malformed function file: ") + e.what());
        }
        auto f = step_from_json(j);
        if (f.q() != o.q || f.k() != o.k) throw std::invalid_argument("function file q/k disagree with --q/--k");
        return f;
    }
    std::mt19937_64 rng(o.seed);
    return random_packet_function(o.q, o.k, delta_exp, rng);
}

ScaleConfig scale_config(const Options& o) {
    auto [en, ed] = parse_rational(o.eps);
    ScaleConfig c = ScaleConfig::make(o.q, o.k, o.delta_exp, en, ed);
    return c;
}

json cfg_json(const ScaleConfig& c) {
    return json{{"q", c.q}, {"k", c.k}, {"delta_exp", c.delta_exp}, {"nu_exp", c.nu_exp}, {"kappa_exp", c.kappa_exp}};
}

// ---------------------------------------------------------------- subcommands

json run_count(const Options& o) {
    json rows = json::array();
    std::int64_t hi = o.X_max > 0 ? o.X_max : o.X;
    for (std::int64_t X = o.X_max > 0 ? 1 : o.X; X <= hi; ++X) {
        json r{{"s", o.s}, {"k", o.k}, {"X", X}};
        r["J"] = big(count_J(o.s, o.k, X, o.budget));
        if (o.p_int > 0) {
            std::optional<std::int64_t> a;
            if (o.residue >= 0) a = o.residue;
            r["J_congruence"] = big(count_J_congruence(o.s, o.k, X, o.p_int, a, o.budget));
        }
        rows.push_back(r);
    }
    json cols = {"s", "k", "X", "J"};
    if (o.p_int > 0) cols.push_back("J_congruence");
    return json{{"columns", cols}, {"rows", rows}};
}

json run_linnik(const Options& o) {
    LinnikTable t(o.k, o.p_int > 0 ? o.p_int : o.q, o.budget);
    std::int64_t bound = linnik_bound(t.k(), t.p());
    json r{{"k", t.k()}, {"p", t.p()}, {"max_count", t.max()}, {"bound", bound}, {"residue_classes", t.residue_classes()},
           {"tuples", t.total()}};
    if (t.max() > static_cast<std::uint64_t>(bound)) throw VerificationFailure("linnik bound exceeded", r);
    return r;
}

json run_karatsuba(const Options& o) {
    auto kr = karatsuba_bound(o.s, o.k, o.X);
    json steps = json::array();
    for (const auto& st : kr.steps)
        steps.push_back(json{{"s", st.s}, {"X", st.X}, {"p", st.p}, {"X_next", st.X_next}, {"widened", st.widened}, {"factor", big(st.factor)}});
    json r{{"s", o.s}, {"k", o.k}, {"X", o.X}, {"bound", big(kr.bound)}, {"base_s", kr.base_s}, {"base_value", big(kr.base_value)},
           {"steps", steps}, {"warnings", kr.warnings}, {"exponent", rat(karatsuba_exponent(o.s, o.k))}};
    if (o.exhaustive) {
        BigInt J = count_J(o.s, o.k, o.X, o.budget);
        r["exact"] = big(J);
        if (J > kr.bound) throw VerificationFailure("karatsuba bound below exact count", r);
    }
    return r;
}

json run_counting(const Options& o) {
    require_q(o);
    ScaleConfig c = scale_config(o);
    c.kappa_exp = o.kappa_exp;
    c.validate();
    json r{{"scales", cfg_json(c)}, {"bound", counting_bound(c)}};
    if (o.exhaustive) {
        auto sw = counting_lemma_exhaustive(c);
        r.update(json{{"mode", "exhaustive"}, {"interval_tuples", sw.interval_tuples}, {"queries", sw.queries},
                      {"max_count", sw.max_count}, {"violations", sw.violations}});
        if (sw.violations) throw VerificationFailure("counting bound exceeded", r);
        return r;
    }
    std::mt19937_64 rng(o.seed);
    auto kap = partition(unit_interval(c.q), c.kappa_exp);
    QNorm kappa{c.q, false, -c.kappa_exp};
    std::size_t done = 0, max_count = 0, violations = 0, attempts = 0;
    while (done < static_cast<std::size_t>(o.samples) && attempts < 1000u * static_cast<std::size_t>(o.samples)) {
        ++attempts;
        CountingQuery qry;
        for (int i = 0; i < c.k; ++i) qry.intervals.push_back(kap[std::uniform_int_distribution<std::size_t>(0, kap.size() - 1)(rng)]);
        bool sep = true;
        for (int i = 0; i < c.k; ++i)
            for (int j = i + 1; j < c.k; ++j)
                sep = sep && interval_distance(qry.intervals[static_cast<std::size_t>(i)], qry.intervals[static_cast<std::size_t>(j)]) > kappa;
        if (!sep) continue;
        for (const auto& I : qry.intervals) {
            auto subs = partition(I, c.delta_exp);
            qry.kbar.push_back(subs[std::uniform_int_distribution<std::size_t>(0, subs.size() - 1)(rng)]);
        }
        auto boxes = subcubes(Cube(QVector(c.k, c.q), 0), c.k * c.nu_exp);
        qry.box = boxes[std::uniform_int_distribution<std::size_t>(0, boxes.size() - 1)(rng)];
        auto S = counting_set(qry, c);
        max_count = std::max(max_count, S.size());
        if (static_cast<std::int64_t>(S.size()) > counting_bound(c)) ++violations;
        ++done;
    }
    r.update(json{{"mode", "sampled"}, {"queries", done}, {"max_count", max_count}, {"violations", violations}});
    if (violations) throw VerificationFailure("counting bound exceeded", r);
    return r;
}

json run_ratio(const Options& o) {
    require_q(o);
    if (o.extremizer) {
        auto e = exp_sum_lower_bound(o.q, o.k, o.delta_exp, o.p);
        json r{{"ratio", e.ratio}, {"ceiling", e.ceiling}, {"predicted_exponent", e.predicted_exponent},
               {"predicted_ratio", e.predicted_ratio}, {"collisions", big(e.collisions)}, {"ratio_from_count", e.ratio_from_count}};
        if (!le_with_slack(e.ratio, e.ceiling)) throw VerificationFailure("ratio exceeds the trivial ceiling", r);
        return r;
    }
    auto inst = make_instance(load_or_random(o, o.delta_exp), o.delta_exp, o.p);
    auto rr = decoupling_ratio(inst);
    json pieces = json::array();
    for (const auto& [K, n] : rr.pieces) pieces.push_back(json{{"interval", to_json(K)}, {"norm", n}});
    json r{{"ratio", rr.ratio}, {"lhs", rr.lhs}, {"rhs", rr.rhs}, {"ceiling", rr.ceiling}, {"pieces", pieces}};
    if (!le_with_slack(rr.ratio, rr.ceiling)) throw VerificationFailure("ratio exceeds the trivial ceiling", r);
    return r;
}

json factors_json(const LemmaFactors& F) {
    json pieces = json::array();
    for (const auto& pn : F.pieces)
        pieces.push_back(json{{"interval", to_json(pn.K)}, {"lp", pn.lp}, {"linf", pn.linf}, {"lp_low", pn.lp_low}});
    return json{{"N", F.N}, {"sum_sq_p", F.sum_sq_p}, {"max_inf", F.max_inf}, {"sum_inf", F.sum_inf},
                {"max_J_inner", F.max_J_inner}, {"pieces", pieces}};
}

json run_main_lemma(const Options& o) {
    require_q(o);
    ScaleConfig c = scale_config(o);
    ModulatedStep g = load_or_random(o, c.delta_exp);
    auto m = verify_main_lemma(g, c, o.p);
    auto h = verify_reversed_holder(g, c, o.p);
    json r{{"scales", cfg_json(c)},
           {"main", {{"lhs", m.lhs}, {"rhs", m.rhs}, {"term_decoupled", m.term_decoupled}, {"term_broad", m.term_broad},
                     {"D_p", m.D_p}, {"D_low", m.D_low}, {"constant", m.constant}, {"holds", m.holds}}},
           {"reversed_holder", {{"lhs", h.lhs}, {"holder", h.holder}, {"rhs", h.rhs}, {"holds", h.holds}}},
           {"factors", factors_json(m.factors)}};
    if (!m.holds || !h.holds) throw VerificationFailure("lemma inequality violated", r);
    return r;
}

json run_reverse_square(const Options& o) {
    require_q(o);
    ModulatedStep g = o.extremizer ? extremizer(o.q, o.k, o.delta_exp) : load_or_random(o, o.delta_exp);
    auto rs = reverse_square_check(g, o.delta_exp, o.kappa_exp);
    json r{{"ratio", rs.ratio}, {"lhs", rs.lhs}, {"square", rs.square}, {"trivial_bound", rs.trivial_bound},
           {"narrow_sum", rs.narrow_sum}, {"broad_sum", rs.broad_sum}, {"bg_rhs", rs.bg_rhs}, {"broad_bound", rs.broad_bound},
           {"max_narrow_ratio", rs.max_narrow_ratio}, {"recursion_rhs", rs.recursion_rhs},
           {"checks", {{"trivial", rs.trivial_holds}, {"pointwise_integrated", rs.bg_holds}, {"broad", rs.broad_holds},
                       {"recursion", rs.recursion_holds}}}};
    if (!rs.holds()) throw VerificationFailure("reverse square check failed", r);
    return r;
}

json run_exponents(const Options& o) {
    require_q(o);
    ExponentParams P;
    P.k = o.k;
    P.p0 = o.p0;
    auto [cn, cd] = parse_rational(o.c0);
    P.c0 = ExpRational(cn, cd);
    auto [en, ed] = parse_rational(o.eps);
    P.epsilon = ExpRational(en, ed);
    auto [c1n, c1d] = parse_rational(o.C1);
    P.C1 = static_cast<double>(c1n) / static_cast<double>(c1d);
    P.q = o.q;
    P.validate();
    json rows = json::array();
    for (int p = P.p0; p <= o.p_max; p += 2 * P.k) {
        auto t = theorem_exponent(P, p);
        std::ostringstream de;
        de.precision(12);
        de << t.delta_exponent;
        rows.push_back(json{{"p", p}, {"delta_exponent", de.str()}, {"q_exponent", rat(t.q_exponent)},
                            {"bdg_exponent", bdg_exponent(p, P.k)}});
    }
    return json{{"columns", {"p", "delta_exponent", "q_exponent", "bdg_exponent"}}, {"rows", rows}};
}

json run_pigeonhole(const Options& o) {
    require_q(o);
    ScaleConfig c = scale_config(o);
    ModulatedStep f = load_or_random(o, c.delta_exp);
    auto res = pigeonhole(f, c, o.p);
    json buckets = json::array();
    for (const auto& b : res.buckets)
        buckets.push_back(json{{"H", b.H}, {"height_index", b.height_index}, {"alpha", b.alpha}, {"beta", b.beta},
                               {"intervals", b.intervals.size()}, {"packet_tiles", b.packet_tiles.size()}});
    json r{{"H_star", res.H_star}, {"threshold", res.threshold}, {"remainder_norm", res.remainder_norm},
           {"remainder_bound", res.remainder_bound}, {"buckets", buckets}};
    if (!le_with_slack(res.remainder_norm, res.remainder_bound)) throw VerificationFailure("remainder above bound", r);
    return r;
}

// Desk-scale composition of the module checks.
json run_verify_all(const Options& o) {
    require_q(o);
    int q = o.q, k = o.k;
    json checks = json::array();
    bool all = true;
    auto add = [&](const std::string& name, bool pass, json detail) {
        all = all && pass;
        checks.push_back(json{{"name", name}, {"pass", pass}, {"detail", std::move(detail)}});
    };
    auto skip = [&](const std::string& name, const std::string& why) {
        checks.push_back(json{{"name", name}, {"pass", nullptr}, {"skipped", why}});
    };

    {
        Cube O(QVector(k, q), 0);
        auto F = fourier(ModulatedStep::indicator(O));
        bool ok = F.terms().size() == 1 && F.terms()[0].cube == O && F.terms()[0].modulation.is_zero() &&
                  std::abs(F.terms()[0].coeff - cplx(1)) < 1e-12;
        add("fourier_unit_ball", ok, json{{"terms", F.terms().size()}});
    }
    {
        std::mt19937_64 rng(o.seed);
        double worst = 0;
        for (int i = 0; i < 10; ++i) {
            auto f = random_packet_function(q, k, 1, rng);
            if (f.empty()) continue;
            double a = lp_norm(f, 2), b = lp_norm(fourier(f), 2);
            worst = std::max(worst, std::abs(a - b) / a);
        }
        add("plancherel", worst <= 1e-9, json{{"max_rel_err", worst}});
    }
    {
        bool ok = true;
        std::size_t tiles = 0;
        for (const auto& K : partition(unit_interval(q), 1)) {
            auto ts = tile_partition(Cube(QVector(k, q), -k), K);
            tiles += ts.size();
            std::set<Cube> seen;
            std::size_t cubes = 0;
            for (const auto& T : ts)
                for (const auto& cb : T.cubes()) {
                    seen.insert(cb);
                    ++cubes;
                }
            ok = ok && static_cast<std::int64_t>(ts.size()) == detail::ipow(q, k * (k - 1) / 2) && seen.size() == cubes &&
                 static_cast<std::int64_t>(cubes) == detail::ipow(q, k * (k - 1));
        }
        add("tilings", ok, json{{"tiles", tiles}});
    }
    if (std::pow(static_cast<double>(q), k * k) <= 5e6) {
        LinnikTable t(k, q);
        add("linnik", t.max() <= static_cast<std::uint64_t>(linnik_bound(k, q)), json{{"max", t.max()}, {"bound", linnik_bound(k, q)}});
    } else {
        skip("linnik", "q^{k^2} above desk budget");
    }
    {
        bool ok = true;
        for (std::int64_t X = 1; X <= 10; ++X) {
            ok = ok && count_J(1, k, X) == X;
            if (k == 2) ok = ok && count_J(2, 2, X) == 2 * X * X - X;
        }
        add("vinogradov_counts", ok, json::object());
    }
    {
        ScaleConfig c = ScaleConfig::make(q, k, 2, 1, 2);
        double est = std::pow(static_cast<double>(q), 2.0 * k + k * k * c.nu_exp + k);
        if (est <= 2e7) {
            auto sw = counting_lemma_exhaustive(c);
            add("counting_lemma", sw.violations == 0, json{{"queries", sw.queries}, {"max_count", sw.max_count}, {"bound", sw.bound}});
        } else {
            skip("counting_lemma", "query space above desk budget");
        }
    }
    {
        int m = k == 2 ? 2 : 1;
        ScaleConfig c = ScaleConfig::make(q, k, m, 1, 2);
        std::mt19937_64 rng(o.seed);
        bool ok = true, lemma_ok = true;
        int p = 2 * k + 2;
        for (int i = 0; i < o.instances; ++i) {
            auto g = random_packet_function(q, k, m, rng);
            ok = ok && broad_narrow_check(g, c).holds;
            if (k == 2 && m == 2) lemma_ok = lemma_ok && verify_main_lemma(g, c, p).holds && verify_reversed_holder(g, c, p).holds;
        }
        add("broad_narrow", ok, json{{"instances", o.instances}, {"delta_exp", m}});
        if (k == 2 && m == 2) add("main_lemma", lemma_ok, json{{"instances", o.instances}, {"p", p}});
    }
    {
        bool ok = a_coeff(4, 4, 2) == 0 && corollary_q_exponent(8, 2) == ExpRational(11, 8);
        for (int kk = 2; kk <= 4; ++kk)
            for (int p = 2 * kk; p <= 2 * kk + 10 * kk; p += 2 * kk) ok = ok && a_coeff(p, 2 * kk, kk) == a_coeff_recurrence(p, 2 * kk, kk);
        add("exponents", ok, json::object());
    }
    {
        auto e = exp_sum_lower_bound(q, k, 1, 2 * k);
        bool ok = le_with_slack(e.ratio, e.ceiling) && std::abs(e.ratio - e.ratio_from_count) <= 1e-9 * e.ratio;
        add("extremizer", ok, json{{"ratio", e.ratio}, {"ratio_from_count", e.ratio_from_count}, {"ceiling", e.ceiling}});
    }
    json r{{"checks", checks}, {"all_pass", all}};
    if (!all) throw VerificationFailure("a desk-scale check failed", r);
    return r;
}

// ---------------------------------------------------------------- output

std::string csv_cell(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_null()) return "";
    return v.dump();
}

std::string render(const json& report, const std::string& format) {
    if (format == "json") return report.dump(2) + "\n";
    const json& res = report["result"];
    std::ostringstream out;
    if (res.contains("rows") && res["rows"].is_array() && !res["rows"].empty()) {
        const auto& rows = res["rows"];
        std::vector<std::string> cols;
        if (res.contains("columns")) {
            cols = res["columns"].get<std::vector<std::string>>();
        } else {
            for (auto it = rows[0].begin(); it != rows[0].end(); ++it) cols.push_back(it.key());
        }
        for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
        out << "\n";
        for (const auto& r : rows) {
            for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << csv_cell(r.value(cols[i], json()));
            out << "\n";
        }
        return out.str();
    }
    out << "key,value\n";
    json flat = res.flatten();
    for (const auto& [k, v] : flat.items()) out << k << "," << csv_cell(v) << "\n";
    return out.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"q-adic decoupling experiments"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kVersion));
    Options o;
    std::map<std::string, std::function<json(const Options&)>> handlers;

    auto common = [&](CLI::App* sc) {
        sc->add_option("--format", o.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
        sc->add_option("--out", o.out, "write the report here (only on success)");
        sc->add_option("--seed", o.seed, "random seed");
        sc->add_option("--budget", o.budget, "tuple budget for enumerations")->check(CLI::PositiveNumber);
        sc->add_option("--q", o.q, "prime");
        sc->add_option("--k", o.k, "curve dimension")->check(CLI::PositiveNumber);
    };
    auto sub = [&](const std::string& name, const std::string& help, std::function<json(const Options&)> fn) {
        auto* sc = app.add_subcommand(name, help);
        common(sc);
        handlers[name] = std::move(fn);
        return sc;
    };

    auto* va = sub("verify-all", "desk-scale suite", run_verify_all);
    va->add_option("--instances", o.instances, "random instances per randomized check")->check(CLI::PositiveNumber);

    auto* cv = sub("count-vinogradov", "exact J_{s,k}(X)", run_count);
    cv->add_option("--s", o.s)->check(CLI::PositiveNumber);
    cv->add_option("--X", o.X)->check(CLI::PositiveNumber);
    cv->add_option("--X-max", o.X_max, "tabulate X = 1..X-max");
    cv->add_option("--p", o.p_int, "prime for the congruence-restricted count");
    cv->add_option("--residue", o.residue, "pin the trailing variables to this class mod p");

    auto* li = sub("linnik", "exhaustive Linnik residue counts", run_linnik);
    li->add_option("--p", o.p_int, "prime (defaults to --q)");

    auto* ka = sub("karatsuba", "unrolled Karatsuba bound", run_karatsuba);
    ka->add_option("--s", o.s)->check(CLI::PositiveNumber);
    ka->add_option("--X", o.X)->check(CLI::PositiveNumber);
    ka->add_flag("--exact", o.exhaustive, "also count J exactly and compare");

    auto* cl = sub("counting-lemma", "transverse counting bound", run_counting);
    cl->add_option("--delta-exp", o.delta_exp)->check(CLI::PositiveNumber);
    cl->add_option("--kappa-exp", o.kappa_exp)->check(CLI::PositiveNumber);
    cl->add_flag("--exhaustive", o.exhaustive, "every admissible query");
    cl->add_option("--samples", o.samples, "random queries when not exhaustive")->check(CLI::PositiveNumber);

    auto* ra = sub("ratio", "decoupling ratio of one function", run_ratio);
    ra->add_option("--input", o.input, "function JSON (random when absent)");
    ra->add_option("--p", o.p)->check(CLI::PositiveNumber);
    ra->add_option("--delta-exp", o.delta_exp)->check(CLI::PositiveNumber);
    ra->add_flag("--extremizer", o.extremizer, "use the exponential-sum extremizer");

    auto* ml = sub("main-lemma", "iteration and reversed Hoelder instance checks", run_main_lemma);
    ml->add_option("--input", o.input);
    ml->add_option("--p", o.p)->check(CLI::PositiveNumber);
    ml->add_option("--delta-exp", o.delta_exp)->check(CLI::PositiveNumber);
    ml->add_option("--eps", o.eps, "kappa = delta^eps");

    auto* rs = sub("reverse-square", "reverse square function ratio and recursion", run_reverse_square);
    rs->add_option("--input", o.input);
    rs->add_option("--delta-exp", o.delta_exp)->check(CLI::PositiveNumber);
    rs->add_option("--kappa-exp", o.kappa_exp)->check(CLI::PositiveNumber);
    rs->add_flag("--extremizer", o.extremizer);

    auto* ex = sub("exponents", "exponent table", run_exponents);
    ex->add_option("--p0", o.p0);
    ex->add_option("--c0", o.c0);
    ex->add_option("--eps", o.eps);
    ex->add_option("--C1", o.C1);
    ex->add_option("--p-max", o.p_max);

    auto* ph = sub("pigeonhole-report", "wavepacket pigeonholing of a function", run_pigeonhole);
    ph->add_option("--input", o.input);
    ph->add_option("--p", o.p)->check(CLI::PositiveNumber);
    ph->add_option("--delta-exp", o.delta_exp)->check(CLI::PositiveNumber);
    ph->add_option("--eps", o.eps);

    auto fail = [&](int code, const std::string& kind, const std::string& why, const json& result, const std::string& cmd) {
        json rep{{"tool", "qdec"}, {"version", kVersion}, {"status", kind}, {"reason", why}};
        if (!cmd.empty()) rep["config"] = config_json(cmd, o);
        if (!result.is_null()) rep["result"] = result;
        std::cout << rep.dump(2) << "\n";
        return code;
    };

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        return fail(kUsage, "usage_error", e.what(), nullptr, "");
    }
    std::string cmd = app.get_subcommands().front()->get_name();
    json result;
    try {
        result = handlers.at(cmd)(o);
    } catch (const VerificationFailure& e) {
        return fail(kVerification, "verification_failure", e.what(), e.result, cmd);
    } catch (const VerificationError& e) {
        return fail(kVerification, "verification_failure", e.what(), nullptr, cmd);
    } catch (const ResourceError& e) {
        return fail(kResource, "resource_error", e.what(), nullptr, cmd);
    } catch (const std::invalid_argument& e) {
        return fail(kUsage, "usage_error", e.what(), nullptr, cmd);
    } catch (const std::domain_error& e) {
        return fail(kUsage, "usage_error", e.what(), nullptr, cmd);
    }
    json report{{"tool", "qdec"}, {"version", kVersion}, {"status", "ok"}, {"config", config_json(cmd, o)}, {"result", result}};
    std::string text = render(report, o.format);
    if (o.out.empty()) {
        std::cout << text;
    } else {
        std::ofstream f(o.out);
        if (!f) return fail(kUsage, "usage_error", "cannot write " + o.out, nullptr, cmd);
        f << text;
    }
    return kOk;
}
