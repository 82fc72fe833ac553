#pragma once

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace cfnoma::gp {

// coef * prod_j x_j^e_j with coef > 0; exps sorted by variable id.
struct Monomial {
  double coef = 1.0;
  std::vector<std::pair<int, double>> exps;

  Monomial() = default;
  explicit Monomial(double c) : coef(c) {}
  Monomial& mul(int var, double exp) {
    if (exp != 0.0) exps.emplace_back(var, exp);
    return *this;
  }
  void normalize() {
    std::sort(exps.begin(), exps.end());
    std::size_t w = 0;
    for (std::size_t r = 0; r < exps.size(); ++r) {
      if (w > 0 && exps[w - 1].first == exps[r].first)
        exps[w - 1].second += exps[r].second;
      else
        exps[w++] = exps[r];
    }
    exps.resize(w);
    std::erase_if(exps, [](const auto& e) { return e.second == 0.0; });
  }
  double eval_log(const std::vector<double>& y) const {
    double s = std::log(coef);
    for (const auto& [v, e] : exps) s += e * y[v];
    return s;
  }
};

struct Posynomial {
  std::vector<Monomial> terms;

  Posynomial() = default;
  Posynomial(std::initializer_list<Monomial> t) : terms(t) {}
  Posynomial& add(Monomial m) {
    terms.push_back(std::move(m));
    return *this;
  }
  double eval(const std::vector<double>& x) const {
    double s = 0.0;
    for (const auto& t : terms) {
      double v = t.coef;
      for (const auto& [var, e] : t.exps) v *= std::pow(x[var], e);
      s += v;
    }
    return s;
  }
};

// Standard-form problem: minimize a posynomial subject to posynomial (or
// posynomial/monomial) inequalities <= 1 and monomial equalities = 1.
// Optional per-variable bounds become monomial inequalities at solve time.
struct GPProblem {
  std::vector<std::string> var_names;
  std::unordered_map<std::string, int> var_ids;
  Posynomial objective;

  struct Constraint {
    Posynomial num;
    std::optional<Monomial> den;  // fractional form num/den <= 1; den monomial
    std::string label;
  };
  std::vector<Constraint> inequalities;

  struct Equality {
    Monomial mono;  // mono(x) = 1
    std::string label;
  };
  std::vector<Equality> equalities;

  std::vector<double> lower_bound;  // 0 = none
  std::vector<double> upper_bound;  // +inf = none

  int num_vars() const { return static_cast<int>(var_names.size()); }

  int add_var(const std::string& name, double lo = 0.0,
              double hi = std::numeric_limits<double>::infinity()) {
    if (var_ids.count(name)) throw std::invalid_argument("gp: duplicate variable " + name);
    const int id = num_vars();
    var_ids.emplace(name, id);
    var_names.push_back(name);
    lower_bound.push_back(lo);
    upper_bound.push_back(hi);
    return id;
  }
  int var(const std::string& name) const {
    auto it = var_ids.find(name);
    if (it == var_ids.end()) throw std::invalid_argument("gp: unknown variable " + name);
    return it->second;
  }

  void set_objective(Posynomial p) { objective = std::move(p); }
  void add_ineq(Posynomial p, std::string label = {}) {
    inequalities.push_back({std::move(p), std::nullopt, std::move(label)});
  }
  void add_ineq_fraction(Posynomial num, Monomial den, std::string label = {}) {
    inequalities.push_back({std::move(num), std::move(den), std::move(label)});
  }
  void add_eq(Monomial m, std::string label = {}) {
    equalities.push_back({std::move(m), std::move(label)});
  }

  void check() const {
    auto check_mono = [&](const Monomial& m, const char* where) {
      if (!(m.coef > 0.0) || !std::isfinite(m.coef))
        throw std::invalid_argument(std::string("gp: nonpositive coefficient in ") + where);
      for (const auto& [v, e] : m.exps) {
        if (v < 0 || v >= num_vars())
          throw std::invalid_argument(std::string("gp: bad variable id in ") + where);
        if (!std::isfinite(e)) throw std::invalid_argument("gp: non-finite exponent");
      }
    };
    auto check_posy = [&](const Posynomial& p, const char* where) {
      if (p.terms.empty())
        throw std::invalid_argument(std::string("gp: empty posynomial in ") + where);
      for (const auto& t : p.terms) check_mono(t, where);
    };
    check_posy(objective, "objective");
    for (const auto& c : inequalities) {
      check_posy(c.num, "inequality");
      if (c.den) check_mono(*c.den, "inequality denominator");
    }
    for (const auto& e : equalities) check_mono(e.mono, "equality");
  }
};

// ---------------------------------------------------------------------------
// Plain-text exchange format.
//
//   problem   := section+
//   section   := header NEWLINE line*
//   header    := "OBJ" | "INEQ" | "EQ"
//   line      := coef (name ":" exponent)*
//
// One OBJ section (its lines are the objective's monomials). Each INEQ
// section is one posynomial constraint <= 1. Each EQ section holds exactly
// one monomial equality = 1. '#' starts a comment; blank lines are ignored.
// Variables are created in order of first appearance. Fractional constraints
// serialize as a single posynomial (terms divided by the denominator).
// ---------------------------------------------------------------------------

inline void write_gp_text(const GPProblem& p, std::ostream& os) {
  auto put_term = [&](const Monomial& m, const Monomial* den) {
    os << m.coef;
    std::vector<std::pair<int, double>> exps = m.exps;
    if (den) {
      os << '/' << den->coef;  // keep exact coefficients: coef stays a ratio
      for (const auto& [v, e] : den->exps) exps.emplace_back(v, -e);
    }
    Monomial tmp;
    tmp.exps = std::move(exps);
    tmp.normalize();
    for (const auto& [v, e] : tmp.exps) os << ' ' << p.var_names[v] << ':' << e;
    os << '\n';
  };
  os << "OBJ\n";
  for (const auto& t : p.objective.terms) put_term(t, nullptr);
  for (const auto& c : p.inequalities) {
    os << "INEQ";
    if (!c.label.empty()) os << "  # " << c.label;
    os << '\n';
    for (const auto& t : c.num.terms) put_term(t, c.den ? &*c.den : nullptr);
  }
  // Bounds have no dedicated syntax: they travel as monomial inequalities.
  for (int v = 0; v < p.num_vars(); ++v) {
    if (p.lower_bound[v] > 0.0) {
      os << "INEQ  # " << p.var_names[v] << " lower bound\n";
      Monomial m;
      m.coef = p.lower_bound[v];
      m.mul(v, -1.0);
      put_term(m, nullptr);
    }
    if (std::isfinite(p.upper_bound[v])) {
      os << "INEQ  # " << p.var_names[v] << " upper bound\n";
      Monomial m;
      m.coef = 1.0 / p.upper_bound[v];
      m.mul(v, 1.0);
      put_term(m, nullptr);
    }
  }
  for (const auto& e : p.equalities) {
    os << "EQ";
    if (!e.label.empty()) os << "  # " << e.label;
    os << '\n';
    put_term(e.mono, nullptr);
  }
}

inline std::string write_gp_text(const GPProblem& p) {
  std::ostringstream os;
  os.precision(17);
  write_gp_text(p, os);
  return os.str();
}

inline GPProblem parse_gp_text(std::istream& is) {
  GPProblem p;
  enum class Section { none, obj, ineq, eq } section = Section::none;
  Posynomial current;
  bool current_open = false;
  int line_no = 0;
  auto flush = [&]() {
    if (!current_open) return;
    if (section == Section::ineq) {
      if (current.terms.empty()) throw std::invalid_argument("gp text: empty INEQ section");
      p.add_ineq(std::move(current));
    } else if (section == Section::eq) {
      if (current.terms.size() != 1)
        throw std::invalid_argument("gp text: EQ section must hold exactly one monomial");
      p.add_eq(std::move(current.terms[0]));
    }
    current = Posynomial{};
    current_open = false;
  };
  std::string raw;
  while (std::getline(is, raw)) {
    ++line_no;
    if (auto pos = raw.find('#'); pos != std::string::npos) raw.erase(pos);
    std::istringstream ls(raw);
    std::string first;
    if (!(ls >> first)) continue;
    if (first == "OBJ" || first == "INEQ" || first == "EQ") {
      flush();
      if (first == "OBJ") {
        if (!p.objective.terms.empty())
          throw std::invalid_argument("gp text: multiple OBJ sections");
        section = Section::obj;
      } else {
        section = first == "INEQ" ? Section::ineq : Section::eq;
        current_open = true;
      }
      continue;
    }
    if (section == Section::none)
      throw std::invalid_argument("gp text: term before any section header");
    Monomial m;
    // Coefficient, optionally "a/b" to express an exact ratio.
    if (auto slash = first.find('/'); slash != std::string::npos) {
      m.coef = std::stod(first.substr(0, slash)) / std::stod(first.substr(slash + 1));
    } else {
      m.coef = std::stod(first);
    }
    std::string tok;
    while (ls >> tok) {
      const auto colon = tok.rfind(':');
      if (colon == std::string::npos)
        throw std::invalid_argument("gp text: malformed term at line " + std::to_string(line_no));
      const std::string name = tok.substr(0, colon);
      const double e = std::stod(tok.substr(colon + 1));
      const int v = p.var_ids.count(name) ? p.var_ids.at(name) : p.add_var(name);
      m.mul(v, e);
    }
    m.normalize();
    if (section == Section::obj)
      p.objective.add(std::move(m));
    else
      current.add(std::move(m));
  }
  flush();
  if (p.objective.terms.empty()) throw std::invalid_argument("gp text: missing OBJ section");
  p.check();
  return p;
}

inline GPProblem parse_gp_text(const std::string& text) {
  std::istringstream is(text);
  return parse_gp_text(is);
}

}  // namespace cfnoma::gp
