#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>

#include <json.hpp>

#include "qdec/stepfn.hpp"

namespace qdec {

using json = nlohmann::json;

// Exact decimal or fraction ("0.01", "1/100", "3") as num/den in lowest terms.
inline std::pair<std::int64_t, std::int64_t> parse_rational(const std::string& s) {
    auto bad = [&] { return std::invalid_argument("not a rational number: '" + s + "'"); };
    if (s.empty()) throw bad();
    std::int64_t num = 0, den = 1;
    auto slash = s.find('/');
    try {
        if (slash != std::string::npos) {
            std::size_t a = 0, b = 0;
            num = std::stoll(s.substr(0, slash), &a);
            den = std::stoll(s.substr(slash + 1), &b);
            if (a != slash || b != s.size() - slash - 1 || den <= 0) throw bad();
        } else {
            auto dot = s.find('.');
            std::string digits = s;
            if (dot != std::string::npos) {
                std::string frac = s.substr(dot + 1);
                if (frac.size() > 15) throw bad();
                digits = s.substr(0, dot) + frac;
                den = detail::ipow(10, static_cast<int>(frac.size()));
            }
            std::size_t used = 0;
            num = std::stoll(digits, &used);
            if (used != digits.size()) throw bad();
        }
    } catch (const std::logic_error&) {
        throw bad();
    }
    std::int64_t g = std::gcd(num, den);
    return {num / g, den / g};
}

inline json to_json(const QRational& x) {
    if (x.is_zero()) return json{{"unit", 0}, {"valuation", nullptr}};
    return json{{"unit", x.unit()}, {"valuation", x.valuation()}};
}

// Accepts {"unit":u,"valuation":v}, an integer, or "u*q^v".
inline QRational qrational_from_json(const json& j, int q) {
    if (j.is_number_integer()) return QRational(j.get<std::int64_t>(), q);
    if (j.is_string()) {
        std::string s = j.get<std::string>();
        auto star = s.find('*'), caret = s.find('^');
        if (star == std::string::npos || caret == std::string::npos) return QRational(std::stoll(s), q);
        if (std::stoi(s.substr(star + 1, caret - star - 1)) != q) throw std::invalid_argument("rational with a different prime: " + s);
        return QRational::from_parts(std::stoll(s.substr(0, star)), std::stoi(s.substr(caret + 1)), q);
    }
    std::int64_t u = j.at("unit").get<std::int64_t>();
    if (u == 0) return QRational(0, q);
    return QRational::from_parts(u, j.at("valuation").get<int>(), q);
}

inline json to_json(const QVector& v) {
    json a = json::array();
    for (const auto& c : v.coords()) a.push_back(c.to_string());
    return a;
}

inline QVector qvector_from_json(const json& j, int q) {
    std::vector<QRational> c;
    for (const auto& e : j) c.push_back(qrational_from_json(e, q));
    return QVector(std::move(c));
}

inline json to_json(const Cube& c) { return json{{"corner", to_json(c.corner)}, {"scale_exp", c.scale_exp}}; }
inline json to_json(const Interval& I) { return json{{"corner", I.corner.to_string()}, {"scale_exp", I.scale_exp}}; }

// {"q":3,"k":2,"terms":[{"re":..,"im":..,"modulation":[..],"cube":{"corner":[..],"scale_exp":e}}]}
inline json to_json(const ModulatedStep& f) {
    json terms = json::array();
    for (const auto& t : f.terms())
        terms.push_back(json{{"re", t.coeff.real()}, {"im", t.coeff.imag()}, {"modulation", to_json(t.modulation)}, {"cube", to_json(t.cube)}});
    return json{{"q", f.q()}, {"k", f.k()}, {"terms", terms}};
}

inline ModulatedStep step_from_json(const json& j) {
    int q = j.at("q").get<int>(), k = j.at("k").get<int>();
    if (!detail::is_prime(q)) throw std::invalid_argument("function file: q must be prime");
    ModulatedStep f(q, k);
    for (const auto& t : j.at("terms")) {
        cplx c(t.value("re", 0.0), t.value("im", 0.0));
        QVector mod = t.contains("modulation") ? qvector_from_json(t["modulation"], q) : QVector(k, q);
        const auto& cj = t.at("cube");
        f.push(Term{c, mod, Cube(qvector_from_json(cj.at("corner"), q), cj.at("scale_exp").get<int>())});
    }
    return f;
}

}  // namespace qdec
