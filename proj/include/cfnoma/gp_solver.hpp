#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "cfnoma/gp.hpp"

namespace cfnoma::gp {

enum class GPStatus { optimal, infeasible, unbounded, iteration_limit };

inline const char* to_string(GPStatus s) {
  switch (s) {
    case GPStatus::optimal: return "optimal";
    case GPStatus::infeasible: return "infeasible";
    case GPStatus::unbounded: return "unbounded";
    case GPStatus::iteration_limit: return "iteration_limit";
  }
  return "?";
}

struct KktReport {
  double max_ineq_violation = 0.0;  // log-domain slack max(0, F_i)
  double max_eq_residual = 0.0;     // |log mono(x)|
  double stationarity = 0.0;        // ||grad Lagrangian|| / max(1, ||grad f0||)
  double complementarity = 0.0;     // max |lambda_i * F_i|
  bool ok = false;
};

struct GPResult {
  GPStatus status = GPStatus::iteration_limit;
  std::vector<double> x;          // full variable vector, original order
  double objective = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> ineq_mult;  // one per user inequality
  int newton_steps = 0;
  double barrier_mu = std::numeric_limits<double>::quiet_NaN();
  std::string message;
};

struct SolveOptions {
  // Duality measure: the barrier parameter mu (= lambda_i * slack_i on the
  // central path). The schedule divides mu by 10 starting from mu0.
  double tol = 1e-8;
  double mu0 = 1.0;
  int max_newton = 4000;
  std::optional<std::vector<double>> warm_x;  // full-size positive start
  // Wall-clock cutoff, checked once per Newton step; an expired solve
  // returns iteration_limit with the best iterate so far.
  std::chrono::steady_clock::time_point deadline =
      std::chrono::steady_clock::time_point::max();
};

namespace detail {

constexpr double kLogBox = 40.0;  // |ln x| cap distinguishing unbounded runs

using SparseRow = std::vector<std::pair<int, double>>;

struct Term {
  double b = 0.0;  // log coefficient
  SparseRow a;
};

enum class RowKind { user, user_bound, internal_box };

struct CompiledCon {
  std::vector<Term> terms;
  SparseRow den;  // subtracted linear part (fractional denominator)
  double den_b = 0.0;
  RowKind kind = RowKind::user;
  int user_index = -1;  // index into problem.inequalities when kind==user
  int box_var = -1;     // original variable for bound/box rows
  bool slack = false;   // phase-I slack applies
};

struct Substitution {
  int var;       // eliminated original variable
  double alpha;  // y_var = alpha + sum beta_i * y_i  (original indices)
  SparseRow beta;
};

struct Compiled {
  int n_orig = 0;
  std::vector<int> active;           // original ids of free variables
  std::vector<int> compact;          // original id -> compact id or -1
  std::vector<Substitution> substs;  // apply in reverse to reconstruct
  std::vector<Term> obj;
  std::vector<CompiledCon> cons;
  std::string infeasible_reason;
  bool presolve_infeasible = false;
};

inline void merge_row(SparseRow& a) {
  std::sort(a.begin(), a.end());
  std::size_t w = 0;
  for (std::size_t r = 0; r < a.size(); ++r) {
    if (w > 0 && a[w - 1].first == a[r].first)
      a[w - 1].second += a[r].second;
    else
      a[w++] = a[r];
  }
  a.resize(w);
  std::erase_if(a, [](const auto& p) { return p.second == 0.0; });
}

inline void apply_subst_to_row(SparseRow& a, double& b, const Substitution& s) {
  double e = 0.0;
  std::size_t w = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].first == s.var)
      e = a[i].second;
    else
      a[w++] = a[i];
  }
  if (w != a.size()) a.resize(w);
  if (e == 0.0) return;
  b += e * s.alpha;
  for (const auto& [v, be] : s.beta) a.emplace_back(v, e * be);
  merge_row(a);
}

inline Compiled compile(const GPProblem& p, bool internal_box) {
  p.check();
  Compiled c;
  c.n_orig = p.num_vars();

  auto to_term = [](const Monomial& m) {
    Term t;
    t.b = std::log(m.coef);
    t.a = m.exps;
    return t;
  };

  c.obj.reserve(p.objective.terms.size());
  for (const auto& m : p.objective.terms) c.obj.push_back(to_term(m));

  for (std::size_t i = 0; i < p.inequalities.size(); ++i) {
    const auto& con = p.inequalities[i];
    CompiledCon cc;
    cc.kind = RowKind::user;
    cc.user_index = static_cast<int>(i);
    cc.slack = true;
    for (const auto& m : con.num.terms) cc.terms.push_back(to_term(m));
    if (con.den) {
      Term d = to_term(*con.den);
      cc.den = std::move(d.a);
      cc.den_b = d.b;
    }
    c.cons.push_back(std::move(cc));
  }
  for (int v = 0; v < p.num_vars(); ++v) {
    if (p.lower_bound[v] > 0.0) {
      CompiledCon cc;  // lo / x <= 1
      cc.kind = RowKind::user_bound;
      cc.box_var = v;
      cc.slack = true;
      Term t;
      t.b = std::log(p.lower_bound[v]);
      t.a = {{v, -1.0}};
      cc.terms.push_back(std::move(t));
      c.cons.push_back(std::move(cc));
    }
    if (std::isfinite(p.upper_bound[v])) {
      CompiledCon cc;  // x / hi <= 1
      cc.kind = RowKind::user_bound;
      cc.box_var = v;
      cc.slack = true;
      Term t;
      t.b = -std::log(p.upper_bound[v]);
      t.a = {{v, 1.0}};
      cc.terms.push_back(std::move(t));
      c.cons.push_back(std::move(cc));
    }
  }

  // Each monomial equality fixes one variable in the log domain; substitute
  // it out everywhere so the barrier never sees equality constraints.
  struct EqRow {
    SparseRow a;
    double b;
    std::string label;
  };
  std::vector<EqRow> eqs;
  for (const auto& e : p.equalities) {
    Term t = to_term(e.mono);
    eqs.push_back({std::move(t.a), t.b, e.label});
  }
  for (auto& eq : eqs) {
    for (const auto& s : c.substs) apply_subst_to_row(eq.a, eq.b, s);
    if (eq.a.empty()) {
      if (std::abs(eq.b) > 1e-9) {
        c.presolve_infeasible = true;
        c.infeasible_reason = "inconsistent monomial equality " + eq.label;
        return c;
      }
      continue;
    }
    auto pivot = std::max_element(eq.a.begin(), eq.a.end(), [](const auto& l, const auto& r) {
      return std::abs(l.second) < std::abs(r.second);
    });
    Substitution s;
    s.var = pivot->first;
    const double pe = pivot->second;
    s.alpha = -eq.b / pe;
    for (const auto& [v, e] : eq.a)
      if (v != s.var) s.beta.emplace_back(v, -e / pe);
    c.substs.push_back(std::move(s));
  }

  for (auto& t : c.obj)
    for (const auto& s : c.substs) apply_subst_to_row(t.a, t.b, s);
  for (auto& cc : c.cons) {
    for (auto& t : cc.terms)
      for (const auto& s : c.substs) apply_subst_to_row(t.a, t.b, s);
    for (const auto& s : c.substs) apply_subst_to_row(cc.den, cc.den_b, s);
  }

  // Constant constraints are either vacuous or a certificate of infeasibility.
  for (auto it = c.cons.begin(); it != c.cons.end();) {
    bool constant = it->den.empty();
    if (constant)
      for (const auto& t : it->terms) constant = constant && t.a.empty();
    if (!constant) {
      ++it;
      continue;
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (const auto& t : it->terms) mx = std::max(mx, t.b);
    double s = 0.0;
    for (const auto& t : it->terms) s += std::exp(t.b - mx);
    if (mx + std::log(s) - it->den_b > 1e-12) {
      c.presolve_infeasible = true;
      c.infeasible_reason = "constraint fixed by equalities is violated";
      return c;
    }
    it = c.cons.erase(it);
  }

  std::vector<bool> eliminated(c.n_orig, false);
  for (const auto& s : c.substs) eliminated[s.var] = true;
  c.compact.assign(c.n_orig, -1);
  for (int v = 0; v < c.n_orig; ++v) {
    if (!eliminated[v]) {
      c.compact[v] = static_cast<int>(c.active.size());
      c.active.push_back(v);
    }
  }
  auto remap = [&](SparseRow& a) {
    for (auto& [v, e] : a) v = c.compact[v];
  };
  for (auto& t : c.obj) remap(t.a);
  for (auto& cc : c.cons) {
    for (auto& t : cc.terms) remap(t.a);
    remap(cc.den);
  }

  if (internal_box) {
    for (int k = 0; k < static_cast<int>(c.active.size()); ++k) {
      for (double sign : {1.0, -1.0}) {
        CompiledCon cc;  // sign * y_k <= kLogBox
        cc.kind = RowKind::internal_box;
        cc.box_var = c.active[k];
        cc.slack = false;
        Term t;
        t.b = -kLogBox;
        t.a = {{k, sign}};
        cc.terms.push_back(std::move(t));
        c.cons.push_back(std::move(cc));
      }
    }
  }
  return c;
}

// Log-sum-exp value of one constraint; fills softmax weights when requested.
inline double con_value(const CompiledCon& cc, const Eigen::VectorXd& y, double s_slack,
                        std::vector<double>* weights) {
  thread_local std::vector<double> vals;
  vals.resize(cc.terms.size());
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < cc.terms.size(); ++k) {
    double v = cc.terms[k].b;
    for (const auto& [var, e] : cc.terms[k].a) v += e * y[var];
    vals[k] = v;
    mx = std::max(mx, v);
  }
  double sum = 0.0;
  for (double v : vals) sum += std::exp(v - mx);
  double den = cc.den_b;
  for (const auto& [var, e] : cc.den) den += e * y[var];
  if (cc.slack) den += s_slack;  // phase I relaxes to F - s <= 0
  const double f = mx + std::log(sum) - den;
  if (weights) {
    weights->resize(vals.size());
    for (std::size_t k = 0; k < vals.size(); ++k) (*weights)[k] = std::exp(vals[k] - mx) / sum;
  }
  return f;
}

inline double obj_value(const std::vector<Term>& obj, const Eigen::VectorXd& y,
                        std::vector<double>* weights) {
  CompiledCon tmp;
  tmp.terms = obj;
  return con_value(tmp, y, 0.0, weights);
}

// Barrier stage over z = [y] (phase II) or z = [y; s] (phase I).
class Barrier {
 public:
  Barrier(const Compiled& c, bool phase1)
      : c_(c), phase1_(phase1), n_(static_cast<int>(c.active.size()) + (phase1 ? 1 : 0)) {}

  int dim() const { return n_; }
  double slack_of(const Eigen::VectorXd& z) const { return phase1_ ? z[n_ - 1] : 0.0; }

  double objective(const Eigen::VectorXd& z) const {
    return phase1_ ? z[n_ - 1] : obj_value(c_.obj, z, nullptr);
  }

  // t * f0 + phi; +inf outside the strictly feasible domain.
  double merit(const Eigen::VectorXd& z, double t) const {
    double m = t * objective(z);
    const double s = slack_of(z);
    for (const auto& cc : c_.cons) {
      const double f = con_value(cc, z, s, nullptr);
      if (f >= 0.0) return std::numeric_limits<double>::infinity();
      m -= std::log(-f);
    }
    return m;
  }

  double max_violation(const Eigen::VectorXd& z, bool slack_rows_only) const {
    double mx = -std::numeric_limits<double>::infinity();
    for (const auto& cc : c_.cons) {
      if (slack_rows_only && !cc.slack) continue;
      mx = std::max(mx, con_value(cc, z, 0.0, nullptr));
    }
    return mx;
  }

  void derivatives(const Eigen::VectorXd& z, double t, Eigen::VectorXd& grad,
                   Eigen::MatrixXd& hess) const {
    grad.setZero(n_);
    hess.setZero(n_, n_);
    scratch_.setZero(n_);
    const double s = slack_of(z);
    std::vector<double> w;

    if (phase1_) {
      grad[n_ - 1] += t;
    } else {
      obj_value(c_.obj, z, &w);
      add_posynomial(c_.obj, w, t, nullptr, grad, hess);
    }

    for (const auto& cc : c_.cons) {
      const double f = con_value(cc, z, s, &w);
      add_posynomial(cc.terms, w, 1.0 / (-f), &cc, grad, hess);
    }
  }

 private:
  const Compiled& c_;
  bool phase1_;
  int n_;
  mutable Eigen::VectorXd scratch_;       // zero outside `touched` between uses
  mutable std::vector<int> touched_;

  // Adds scale * [softmax Hessian] and scale * grad to the accumulators for
  // one log-sum-exp block; when `con` is nonnull, scale is 1/(-F) and the
  // barrier rank-one term grad F grad F^T / F^2 is added as well.
  void add_posynomial(const std::vector<Term>& terms, const std::vector<double>& w,
                      double scale, const CompiledCon* con, Eigen::VectorXd& grad,
                      Eigen::MatrixXd& hess) const {
    touched_.clear();
    auto touch_add = [&](int v, double val) {
      if (scratch_[v] == 0.0 && val != 0.0) touched_.push_back(v);
      scratch_[v] += val;
    };
    // scratch = A^T w (softmax mean of exponent rows)
    for (std::size_t k = 0; k < terms.size(); ++k)
      for (const auto& [v, e] : terms[k].a) touch_add(v, w[k] * e);

    if (terms.size() > 1) {
      // A^T diag(w) A * scale, scattered on term supports
      for (std::size_t k = 0; k < terms.size(); ++k) {
        const auto& a = terms[k].a;
        const double wk = w[k] * scale;
        for (std::size_t i = 0; i < a.size(); ++i)
          for (std::size_t j = 0; j <= i; ++j) {
            const double add = wk * a[i].second * a[j].second;
            const int vi = a[i].first, vj = a[j].first;
            if (vi >= vj)
              hess(vi, vj) += add;
            else
              hess(vj, vi) += add;
          }
      }
      rank_one(hess, -scale);  // -(A^T w)(A^T w)^T * scale
    }

    if (con) {
      // grad F = A^T w - r (and the slack column in phase I)
      for (const auto& [v, e] : con->den) touch_add(v, -e);
      if (con->slack && phase1_) touch_add(n_ - 1, -1.0);
      for (int v : touched_) grad[v] += scale * scratch_[v];
      rank_one(hess, scale * scale);  // grad F grad F^T / F^2
    } else {
      for (int v : touched_) grad[v] += scale * scratch_[v];
    }
    for (int v : touched_) scratch_[v] = 0.0;
  }

  // hess += coef * scratch scratch^T over the touched support.
  void rank_one(Eigen::MatrixXd& hess, double coef) const {
    if (coef == 0.0) return;
    if (touched_.size() * touched_.size() * 4 > static_cast<std::size_t>(n_) * n_) {
      hess.selfadjointView<Eigen::Lower>().rankUpdate(scratch_, coef);
      return;
    }
    for (std::size_t i = 0; i < touched_.size(); ++i)
      for (std::size_t j = 0; j <= i; ++j) {
        const int vi = touched_[i], vj = touched_[j];
        const double add = coef * scratch_[vi] * scratch_[vj];
        if (vi >= vj)
          hess(vi, vj) += add;
        else
          hess(vj, vi) += add;
      }
  }
};

struct StageResult {
  bool converged = false;
};

// Damped Newton with backtracking on the barrier merit for a fixed t.
inline StageResult newton_stage(const Barrier& B, Eigen::VectorXd& z, double t, int max_steps,
                                int& steps_used, int steps_budget,
                                std::chrono::steady_clock::time_point deadline) {
  if (B.dim() == 0) return {true};
  Eigen::VectorXd grad(B.dim()), dz(B.dim());
  Eigen::MatrixXd hess(B.dim(), B.dim());
  double ridge = 0.0;
  for (int it = 0; it < max_steps && steps_used < steps_budget; ++it) {
    if (std::chrono::steady_clock::now() >= deadline) return {};
    B.derivatives(z, t, grad, hess);
    Eigen::LLT<Eigen::MatrixXd> llt;
    bool factored = false;
    for (int attempt = 0; attempt < 40; ++attempt) {
      Eigen::MatrixXd h = hess;
      if (ridge > 0.0) h.diagonal().array() += ridge;
      llt.compute(h.selfadjointView<Eigen::Lower>());
      if (llt.info() == Eigen::Success) {
        factored = true;
        break;
      }
      ridge = std::max(ridge * 10.0, 1e-10 * (1.0 + std::abs(hess.diagonal().maxCoeff())));
    }
    if (!factored) return {};
    dz = llt.solve(-grad);
    ++steps_used;
    const double decrement = -grad.dot(dz);
    if (!(decrement > 0.0)) {
      ridge = std::max(ridge * 10.0, 1e-10 * (1.0 + std::abs(hess.diagonal().maxCoeff())));
      if (ridge > 1e15) return {};
      continue;
    }
    const double m0 = B.merit(z, t);
    // The merit is t*log f0 + phi, so its floating-point resolution grows
    // with t; a fixed decrement target below that resolution can never be
    // certified. Half of lambda^2 <= 1e-8 already centers far tighter than
    // the mu/10 path needs.
    const double dec_tol = std::max(1e-8, 1e-13 * std::abs(m0));
    if (0.5 * decrement <= dec_tol) return {true};
    double alpha = 1.0;
    bool moved = false;
    for (int ls = 0; ls < 60; ++ls) {
      Eigen::VectorXd zn = z + alpha * dz;
      if (B.merit(zn, t) <= m0 - 1e-4 * alpha * decrement) {
        z = std::move(zn);
        moved = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!moved) {
      // No representable merit decrease: either at the resolution floor
      // (accept as centered) or the model is broken (retry with a ridge).
      if (0.5 * decrement <= 1e3 * dec_tol) return {true};
      ridge = std::max(ridge * 10.0, 1e-8 * (1.0 + std::abs(hess.diagonal().maxCoeff())));
      if (ridge > 1e15) return {};
      continue;
    }
    ridge *= 0.1;
  }
  return {};
}

}  // namespace detail

// Reports primal feasibility residuals, the stationarity norm of the
// log-domain Lagrangian (multipliers estimated by least squares over the
// near-active constraints, clamped nonnegative), and complementarity gaps.
inline KktReport verify_kkt(const GPProblem& p, const std::vector<double>& x, double tol) {
  using namespace detail;
  if (static_cast<int>(x.size()) != p.num_vars())
    throw std::invalid_argument("verify_kkt: candidate size mismatch");
  for (double v : x)
    if (!(v > 0.0)) throw std::invalid_argument("verify_kkt: candidate must be strictly positive");

  const int n = p.num_vars();
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y[i] = std::log(x[i]);

  GPProblem q = p;
  q.equalities.clear();  // evaluated directly below; keep all variables live
  Compiled c = compile(q, /*internal_box=*/false);

  KktReport rep;
  std::vector<double> w;
  Eigen::VectorXd g0 = Eigen::VectorXd::Zero(n);
  obj_value(c.obj, y, &w);
  for (std::size_t k = 0; k < c.obj.size(); ++k)
    for (const auto& [v, e] : c.obj[k].a) g0[v] += w[k] * e;

  std::vector<double> fvals(c.cons.size());
  std::vector<Eigen::VectorXd> grads(c.cons.size());
  for (std::size_t i = 0; i < c.cons.size(); ++i) {
    const auto& cc = c.cons[i];
    fvals[i] = con_value(cc, y, 0.0, &w);
    rep.max_ineq_violation = std::max(rep.max_ineq_violation, std::max(0.0, fvals[i]));
    Eigen::VectorXd g = Eigen::VectorXd::Zero(n);
    for (std::size_t k = 0; k < cc.terms.size(); ++k)
      for (const auto& [v, e] : cc.terms[k].a) g[v] += w[k] * e;
    for (const auto& [v, e] : cc.den) g[v] -= e;
    grads[i] = std::move(g);
  }

  std::vector<Eigen::VectorXd> eq_rows;
  for (const auto& e : p.equalities) {
    double b = std::log(e.mono.coef);
    Eigen::VectorXd a = Eigen::VectorXd::Zero(n);
    for (const auto& [v, ex] : e.mono.exps) {
      a[v] = ex;
      b += ex * y[v];
    }
    rep.max_eq_residual = std::max(rep.max_eq_residual, std::abs(b));
    eq_rows.push_back(std::move(a));
  }

  constexpr double kActive = 1e-5;
  std::vector<int> act;
  for (std::size_t i = 0; i < fvals.size(); ++i)
    if (fvals[i] >= -kActive) act.push_back(static_cast<int>(i));

  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(static_cast<int>(act.size()));
  Eigen::VectorXd nu = Eigen::VectorXd::Zero(static_cast<int>(eq_rows.size()));
  const int cols = static_cast<int>(act.size() + eq_rows.size());
  if (cols > 0) {
    Eigen::MatrixXd A(n, cols);
    for (std::size_t j = 0; j < act.size(); ++j) A.col(static_cast<int>(j)) = grads[act[j]];
    for (std::size_t j = 0; j < eq_rows.size(); ++j)
      A.col(static_cast<int>(act.size() + j)) = eq_rows[j];
    Eigen::VectorXd sol = A.colPivHouseholderQr().solve(-g0);
    for (std::size_t j = 0; j < act.size(); ++j) lambda[j] = std::max(0.0, sol[j]);
    for (std::size_t j = 0; j < eq_rows.size(); ++j) nu[j] = sol[act.size() + j];
  }
  Eigen::VectorXd resid = g0;
  for (std::size_t j = 0; j < act.size(); ++j) resid += lambda[j] * grads[act[j]];
  for (std::size_t j = 0; j < eq_rows.size(); ++j) resid += nu[j] * eq_rows[j];
  rep.stationarity = resid.norm() / std::max(1.0, g0.norm());
  for (std::size_t j = 0; j < act.size(); ++j)
    rep.complementarity = std::max(rep.complementarity, std::abs(lambda[j] * fvals[act[j]]));

  rep.ok = rep.max_ineq_violation <= tol && rep.max_eq_residual <= tol &&
           rep.stationarity <= tol && rep.complementarity <= tol;
  return rep;
}

// Primal log-barrier interior-point method over the log-transformed problem.
// Phase I minimizes a shared constraint slack to reach a strict interior
// point; phase II follows the central path on the mu/10 schedule until the
// duality measure drops below tol.
inline GPResult solve_gp(const GPProblem& p, const SolveOptions& opt = {}) {
  using namespace detail;
  GPResult res;
  Compiled c = compile(p, /*internal_box=*/true);
  if (c.presolve_infeasible) {
    res.status = GPStatus::infeasible;
    res.message = c.infeasible_reason;
    return res;
  }
  const int nv = static_cast<int>(c.active.size());

  auto reconstruct = [&](const Eigen::VectorXd& y) {
    std::vector<double> full(c.n_orig, 0.0);
    for (int k = 0; k < nv; ++k) full[c.active[k]] = y[k];
    for (auto it = c.substs.rbegin(); it != c.substs.rend(); ++it) {
      double v = it->alpha;
      for (const auto& [ov, be] : it->beta) v += be * full[ov];
      full[it->var] = v;
    }
    for (double& v : full) v = std::exp(v);
    return full;
  };

  Eigen::VectorXd y = Eigen::VectorXd::Zero(nv);
  for (int k = 0; k < nv; ++k) {
    const int ov = c.active[k];
    const double lo = p.lower_bound[ov], hi = p.upper_bound[ov];
    if (lo > 0.0 && std::isfinite(hi))
      y[k] = 0.5 * (std::log(lo) + std::log(hi));
    else if (lo > 0.0)
      y[k] = std::log(lo) + 1.0;
    else if (std::isfinite(hi))
      y[k] = std::log(hi) - 1.0;
  }
  if (opt.warm_x) {
    if (static_cast<int>(opt.warm_x->size()) != c.n_orig)
      throw std::invalid_argument("solve_gp: warm start size mismatch");
    for (int k = 0; k < nv; ++k) {
      const double xv = (*opt.warm_x)[c.active[k]];
      if (xv > 0.0) y[k] = std::log(xv);
    }
  }
  for (int k = 0; k < nv; ++k) y[k] = std::clamp(y[k], -kLogBox + 1e-3, kLogBox - 1e-3);

  int steps_used = 0;
  Barrier barrier2(c, /*phase1=*/false);

  if (barrier2.max_violation(y, /*slack_rows_only=*/false) >= -1e-8) {
    Barrier B(c, /*phase1=*/true);
    Eigen::VectorXd z(nv + 1);
    z.head(nv) = y;
    z[nv] = std::max(B.max_violation(z, true), 0.0) + 1.0;
    double mu = std::max(1.0, opt.mu0);
    bool interior = false;
    while (true) {
      newton_stage(B, z, 1.0 / mu, 80, steps_used, opt.max_newton, opt.deadline);
      const double mg = B.max_violation(z, /*slack_rows_only=*/true);
      if (mg < -1e-4) {
        y = z.head(nv);
        interior = true;
        break;
      }
      if (std::chrono::steady_clock::now() >= opt.deadline) {
        if (mg < -1e-12) {
          y = z.head(nv);
          interior = true;
          break;
        }
        res.status = GPStatus::iteration_limit;
        res.newton_steps = steps_used;
        res.x = reconstruct(z.head(nv));
        res.message = "time limit during phase I";
        return res;
      }
      if (mu <= 1e-12 || steps_used >= opt.max_newton) {
        if (mg < -1e-12) {
          y = z.head(nv);
          interior = true;
          break;
        }
        res.status = GPStatus::infeasible;
        res.newton_steps = steps_used;
        res.x = reconstruct(z.head(nv));
        double worst = -std::numeric_limits<double>::infinity();
        int worst_idx = -1;
        for (std::size_t i = 0; i < c.cons.size(); ++i) {
          if (!c.cons[i].slack) continue;
          const double f = con_value(c.cons[i], z, 0.0, nullptr);
          if (f > worst) {
            worst = f;
            worst_idx = static_cast<int>(i);
          }
        }
        res.message = "no strictly feasible point (minimal slack " + std::to_string(z[nv]) +
                      "); worst constraint: ";
        if (worst_idx >= 0 && c.cons[worst_idx].kind == RowKind::user &&
            !p.inequalities[c.cons[worst_idx].user_index].label.empty())
          res.message += p.inequalities[c.cons[worst_idx].user_index].label;
        else
          res.message += "#" + std::to_string(worst_idx);
        return res;
      }
      mu *= 0.1;
    }
    if (!interior) {
      res.status = GPStatus::iteration_limit;
      res.newton_steps = steps_used;
      res.message = "phase I exhausted the Newton budget";
      return res;
    }
  }

  double mu = opt.mu0;
  bool converged = false;
  while (steps_used < opt.max_newton &&
         std::chrono::steady_clock::now() < opt.deadline) {
    auto st = newton_stage(barrier2, y, 1.0 / mu, 120, steps_used, opt.max_newton,
                           opt.deadline);
    if (mu <= opt.tol * (1.0 + 1e-9)) {  // repeated *0.1 drifts a few ulps high
      converged = st.converged;
      break;
    }
    mu *= 0.1;
  }

  res.newton_steps = steps_used;
  res.barrier_mu = mu;
  res.x = reconstruct(y);
  res.objective = p.objective.eval(res.x);
  res.ineq_mult.assign(p.inequalities.size(), 0.0);
  bool box_active = false;
  for (const auto& cc : c.cons) {
    const double f = con_value(cc, y, 0.0, nullptr);
    if (cc.kind == RowKind::user && cc.user_index >= 0)
      res.ineq_mult[cc.user_index] = mu / std::max(1e-300, -f);
    if (cc.kind == RowKind::internal_box && f > -1e-3) box_active = true;
  }
  if (box_active) {
    res.status = GPStatus::unbounded;
    res.message = "internal log-range cap active; problem is unbounded or badly scaled";
    return res;
  }
  res.status = converged ? GPStatus::optimal : GPStatus::iteration_limit;
  if (!converged)
    res.message = std::chrono::steady_clock::now() >= opt.deadline
                      ? "time limit reached before tolerance"
                      : "Newton budget exhausted before reaching tolerance";
  return res;
}

}  // namespace cfnoma::gp
