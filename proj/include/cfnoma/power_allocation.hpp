#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "cfnoma/config.hpp"
#include "cfnoma/core_model.hpp"
#include "cfnoma/fbc_rate.hpp"
#include "cfnoma/gp.hpp"
#include "cfnoma/gp_solver.hpp"

namespace cfnoma {

// Log-domain tangent coefficients of the finite-blocklength rate at an
// anchor SINR. The rate bound
//   R(k) >= (eta/ln2) * [(rho ln k + chi) - a (rho_hat ln k + chi_hat)]
// is tight at kappa_bar; w is its slope in ln k, so maximizing sum w ln k is
// the concave surrogate of the sum rate around the anchor.
struct BoundCoeffs {
  double rho = 0.0;
  double chi = 0.0;
  double rho_hat = 0.0;
  double chi_hat = 0.0;
  double w = 0.0;

  double rate_bound(double kappa, const RateParams& rp) const {
    const double lk = std::log(kappa);
    return rp.eta / std::numbers::ln2 *
           ((rho * lk + chi) - rp.penalty_a() * (rho_hat * lk + chi_hat));
  }
};

inline BoundCoeffs bound_coeffs(double kappa_bar, const RateParams& rp) {
  if (!(kappa_bar > 0.0)) throw std::domain_error("bound_coeffs: anchor must be positive");
  BoundCoeffs b;
  const double t = 1.0 + kappa_bar;
  const double lk = std::log(kappa_bar);
  b.rho = kappa_bar / t;
  b.chi = std::log(t) - b.rho * lk;
  const double m = std::sqrt(1.0 - 1.0 / (t * t));
  b.rho_hat = kappa_bar / (t * t * t) / m;
  b.chi_hat = m - b.rho_hat * lk;
  b.w = rp.eta / std::numbers::ln2 * (b.rho - rp.penalty_a() * b.rho_hat);
  return b;
}

// Monomial lower bound of the coherent beamforming gain
//   L * (sum_m sqrt(p_m theta_m))^2 >= coef * prod_m p_m^{exps[m]},
// tight at the anchor powers (weighted AM-GM on the amplitude sum).
struct MonomialApprox {
  std::vector<double> exps;  // per AP; nonnegative, sums to 1
  double log_coef = 0.0;

  double eval(const Eigen::VectorXd& p) const {
    double lv = log_coef;
    for (std::size_t m = 0; m < exps.size(); ++m)
      if (exps[m] != 0.0) lv += exps[m] * std::log(p[static_cast<int>(m)]);
    return std::exp(lv);
  }
};

inline MonomialApprox monomial_approx(const Eigen::VectorXd& p_anchor,
                                      const Eigen::VectorXd& theta_col, double antennas) {
  const int M = static_cast<int>(p_anchor.size());
  if (theta_col.size() != M) throw std::invalid_argument("monomial_approx: size mismatch");
  MonomialApprox a;
  a.exps.assign(M, 0.0);
  double amp = 0.0;
  for (int m = 0; m < M; ++m) {
    if (!(p_anchor[m] > 0.0) || !(theta_col[m] > 0.0))
      throw std::domain_error("monomial_approx: anchor and gains must be positive");
    amp += std::sqrt(p_anchor[m] * theta_col[m]);
  }
  double lc = std::log(antennas) + 2.0 * std::log(amp);
  for (int m = 0; m < M; ++m) {
    const double b = std::sqrt(p_anchor[m] * theta_col[m]) / amp;
    a.exps[m] = b;
    lc -= b * std::log(p_anchor[m]);
  }
  a.log_coef = lc;
  return a;
}

// ---------------------------------------------------------------------------
// GP subproblem assembly.
// ---------------------------------------------------------------------------

struct GPSubproblem {
  gp::GPProblem problem;
  std::vector<std::vector<int>> p_var;     // [m][n]
  std::vector<int> kappa_var;              // [n]
  int slack_var = -1;                      // feasibility mode only
  std::vector<std::pair<int, int>> pairs;  // (signal n, observer u)
  std::vector<int> frozen;                 // UEs whose kappa is pinned (w <= 0)
};

namespace detail {

constexpr double kPowerFloorScale = 1e-12;

// Decode-pair list: every (n, u) with u co-clustered and ranked at or
// before n. Own pairs (n, n) included.
inline std::vector<std::pair<int, int>> decode_pairs(const NetworkState& net,
                                                     const ClusteringState& cl) {
  std::vector<std::pair<int, int>> pairs;
  for (int n = 0; n < cl.num_ues; ++n)
    for (int u = 0; u < cl.num_ues; ++u) {
      if (cl.cluster_of[u] != cl.cluster_of[n]) continue;
      if (net.rank_of[u] > net.rank_of[n]) continue;
      pairs.emplace_back(n, u);
    }
  return pairs;
}

// Shared skeleton: power variables, kappa variables, SINR rows anchored at
// P_anchor, per-AP power budgets, and per-AP SIC power-order rows.
inline GPSubproblem build_core(const Eigen::MatrixXd& P_anchor, const NetworkState& net,
                               const ClusteringState& cl, const SystemConfig& cfg) {
  const int M = cfg.num_aps, N = cfg.num_ues;
  if (P_anchor.rows() != M || P_anchor.cols() != N)
    throw std::invalid_argument("gp subproblem: anchor size mismatch");
  const double p_max = cfg.max_dl_power();
  const double p_floor = kPowerFloorScale * p_max;
  const double L = static_cast<double>(cfg.antennas_per_ap);
  const double resid = 2.0 - 2.0 * cfg.sic_quality;

  GPSubproblem sub;
  gp::GPProblem& p = sub.problem;
  sub.p_var.assign(M, std::vector<int>(N, -1));
  for (int n = 0; n < N; ++n)
    for (int m = 0; m < M; ++m)
      sub.p_var[m][n] =
          p.add_var("p_" + std::to_string(m) + "_" + std::to_string(n), p_floor, p_max);
  sub.kappa_var.resize(N);
  for (int n = 0; n < N; ++n) sub.kappa_var[n] = p.add_var("k_" + std::to_string(n));

  sub.pairs = decode_pairs(net, cl);
  for (const auto& [n, u] : sub.pairs) {
    gp::Posynomial num;
    const int kv = sub.kappa_var[n];
    {
      gp::Monomial noise;  // unit-variance receiver noise
      noise.coef = 1.0;
      noise.mul(kv, 1.0);
      num.add(std::move(noise));
    }
    for (int k = 0; k < N; ++k)
      for (int m = 0; m < M; ++m) {
        gp::Monomial t;  // beamforming-uncertainty power leak
        t.coef = net.beta(m, u);
        t.mul(kv, 1.0);
        t.mul(sub.p_var[m][k], 1.0);
        num.add(std::move(t));
      }
    for (int k = 0; k < N; ++k) {
      if (k == n || cl.cluster_of[k] != cl.cluster_of[n]) continue;
      const double scale = net.rank_of[k] < net.rank_of[n] ? 1.0 : resid;
      if (scale == 0.0) continue;  // perfect SIC cancels the coherent part
      for (int m = 0; m < M; ++m)
        for (int m2 = m; m2 < M; ++m2) {
          gp::Monomial t;
          const double cross = std::sqrt(net.theta(m, u) * net.theta(m2, u));
          t.coef = scale * L * cross * (m2 == m ? 1.0 : 2.0);
          t.mul(kv, 1.0);
          if (m2 == m) {
            t.mul(sub.p_var[m][k], 1.0);
          } else {
            t.mul(sub.p_var[m][k], 0.5);
            t.mul(sub.p_var[m2][k], 0.5);
          }
          num.add(std::move(t));
        }
    }

    Eigen::VectorXd anchor = P_anchor.col(n).cwiseMax(p_floor);
    const MonomialApprox ma = monomial_approx(anchor, net.theta.col(u), L);
    gp::Monomial den;
    den.coef = std::exp(ma.log_coef);
    for (int m = 0; m < M; ++m)
      if (ma.exps[m] != 0.0) den.mul(sub.p_var[m][n], ma.exps[m]);
    p.add_ineq_fraction(std::move(num), std::move(den),
                        "sinr s=" + std::to_string(n) + " o=" + std::to_string(u));
  }

  for (int m = 0; m < M; ++m) {
    gp::Posynomial sum;
    for (int n = 0; n < N; ++n) {
      gp::Monomial t;
      t.coef = 1.0 / p_max;
      t.mul(sub.p_var[m][n], 1.0);
      sum.add(std::move(t));
    }
    p.add_ineq(std::move(sum), "power ap=" + std::to_string(m));
  }

  for (const auto& group : cl.members()) {
    std::vector<int> by_rank = group;
    std::sort(by_rank.begin(), by_rank.end(),
              [&](int a, int b) { return net.rank_of[a] < net.rank_of[b]; });
    for (std::size_t i = 0; i + 1 < by_rank.size(); ++i) {
      const int stronger = by_rank[i], weaker = by_rank[i + 1];
      for (int m = 0; m < M; ++m) {
        gp::Monomial t;  // later-decoded streams carry at least as much power
        t.coef = 1.0;
        t.mul(sub.p_var[m][stronger], 1.0);
        t.mul(sub.p_var[m][weaker], -1.0);
        p.add_ineq(gp::Posynomial{{std::move(t)}},
                   "sic ap=" + std::to_string(m) + " " + std::to_string(stronger) + "<=" +
                       std::to_string(weaker));
      }
    }
  }
  return sub;
}

}  // namespace detail

// Surrogate ASR-maximization subproblem at the given anchors: minimize
// prod kappa_n^{-w_n} subject to the Theorem-style SINR rows, QoS floors on
// kappa, per-AP budgets and SIC ordering. UEs whose tangent slope w is not
// positive have kappa pinned at the anchor instead (monotone-region guard).
inline GPSubproblem build_gp_subproblem(const Eigen::MatrixXd& P_anchor,
                                        const std::vector<double>& kappa_bar,
                                        const NetworkState& net, const ClusteringState& cl,
                                        const SystemConfig& cfg, const RateParams& rp) {
  if (static_cast<int>(kappa_bar.size()) != cfg.num_ues)
    throw std::invalid_argument("gp subproblem: kappa anchor size mismatch");
  GPSubproblem sub = detail::build_core(P_anchor, net, cl, cfg);
  const double gamma_req = rate_inverse(cfg.min_rate_bpcu(), rp);

  gp::Posynomial obj;
  gp::Monomial prod;
  prod.coef = 1.0;
  bool any_free = false;
  for (int n = 0; n < cfg.num_ues; ++n) {
    const double w = bound_coeffs(kappa_bar[n], rp).w;
    if (w > 0.0) {
      prod.mul(sub.kappa_var[n], -w);
      any_free = true;
      sub.problem.lower_bound[sub.kappa_var[n]] = gamma_req;
    } else {
      const double pin = std::max(kappa_bar[n], gamma_req);
      gp::Monomial eq;
      eq.coef = 1.0 / pin;
      eq.mul(sub.kappa_var[n], 1.0);
      sub.problem.add_eq(std::move(eq), "kappa pinned ue=" + std::to_string(n));
      sub.frozen.push_back(n);
    }
  }
  if (!any_free) prod = gp::Monomial(1.0);
  prod.normalize();
  obj.add(std::move(prod));
  sub.problem.set_objective(std::move(obj));
  return sub;
}

// Feasibility variant: minimize a shared QoS slack s >= 1 with the QoS rows
// relaxed to gamma_req / (kappa_n s) <= 1. The instance is QoS-feasible iff
// the optimum reaches s = 1.
inline GPSubproblem build_feasibility_subproblem(const Eigen::MatrixXd& P_anchor,
                                                 const NetworkState& net,
                                                 const ClusteringState& cl,
                                                 const SystemConfig& cfg, const RateParams& rp) {
  GPSubproblem sub = detail::build_core(P_anchor, net, cl, cfg);
  const double gamma_req = rate_inverse(cfg.min_rate_bpcu(), rp);
  sub.slack_var = sub.problem.add_var("s", 1.0);
  for (int n = 0; n < cfg.num_ues; ++n) {
    gp::Monomial t;
    t.coef = gamma_req;
    t.mul(sub.kappa_var[n], -1.0);
    t.mul(sub.slack_var, -1.0);
    sub.problem.add_ineq(gp::Posynomial{{std::move(t)}}, "qos ue=" + std::to_string(n));
  }
  gp::Monomial s;
  s.coef = 1.0;
  s.mul(sub.slack_var, 1.0);
  sub.problem.set_objective(gp::Posynomial{{std::move(s)}});
  return sub;
}

// Rank-proportional start: every AP splits its budget across UEs with
// weights growing linearly in decode rank, so later-decoded (weaker) streams
// start with more power and the SIC ordering holds strictly.
inline Eigen::MatrixXd initial_power(const NetworkState& net, const SystemConfig& cfg) {
  const int M = cfg.num_aps, N = cfg.num_ues;
  double wsum = 0.0;
  for (int n = 0; n < N; ++n) wsum += static_cast<double>(net.rank_of[n] + 1);
  Eigen::MatrixXd P(M, N);
  for (int n = 0; n < N; ++n)
    P.col(n).setConstant(0.999 * cfg.max_dl_power() * (net.rank_of[n] + 1) / wsum);
  return P;
}

struct SpaOptions {
  int max_iters = 30;
  double tol_bpcu = 1e-3;     // stop when the ASR gain falls below this
  double gp_tol = 1e-8;       // duality measure target per subproblem
  int gp_max_newton = 4000;
  bool warm_start = true;
  double warm_mu0 = 1e-3;
};

struct SpaResult {
  Eigen::MatrixXd P;
  double asr_bpcu = 0.0;
  int iters = 0;
  bool converged = false;
  std::vector<double> trace;  // ASR after each accepted step, starting at P0
  gp::GPStatus last_gp_status = gp::GPStatus::optimal;
  std::string message;
};

// Successive power allocation: alternate between re-anchoring the surrogate
// at the current iterate and solving the resulting GP. Accepted steps never
// decrease the true lower-bound ASR; a decreasing GP step stops the loop.
inline SpaResult spa(const Eigen::MatrixXd& P0, const NetworkState& net,
                     const ClusteringState& cl, const SystemConfig& cfg, const RateParams& rp,
                     const SpaOptions& opt = {}) {
  const double p_max = cfg.max_dl_power();
  const double p_floor = detail::kPowerFloorScale * p_max;
  const double gamma_req = rate_inverse(cfg.min_rate_bpcu(), rp);

  SpaResult out;
  out.P = P0.cwiseMax(p_floor).cwiseMin(p_max);
  out.asr_bpcu = asr(out.P, net, cl, cfg, rp).bpcu;
  out.trace.push_back(out.asr_bpcu);

  std::optional<std::vector<double>> warm;
  for (int it = 0; it < opt.max_iters; ++it) {
    std::vector<double> kappa_bar(cfg.num_ues);
    for (int n = 0; n < cfg.num_ues; ++n)
      kappa_bar[n] = std::max(effective_sinr_lb(n, out.P, net, cl, cfg), gamma_req);

    GPSubproblem sub = build_gp_subproblem(out.P, kappa_bar, net, cl, cfg, rp);
    gp::SolveOptions gopt;
    gopt.tol = opt.gp_tol;
    gopt.max_newton = opt.gp_max_newton;
    if (warm && opt.warm_start) {
      gopt.mu0 = opt.warm_mu0;
      gopt.warm_x = *warm;
    }
    const gp::GPResult res = gp::solve_gp(sub.problem, gopt);
    out.last_gp_status = res.status;
    ++out.iters;
    if (res.status != gp::GPStatus::optimal &&
        res.status != gp::GPStatus::iteration_limit) {
      out.message = "subproblem " + std::string(gp::to_string(res.status)) + ": " + res.message;
      break;
    }

    Eigen::MatrixXd P_new(out.P.rows(), out.P.cols());
    for (int m = 0; m < cfg.num_aps; ++m)
      for (int n = 0; n < cfg.num_ues; ++n) P_new(m, n) = res.x[sub.p_var[m][n]];
    const double asr_new = asr(P_new, net, cl, cfg, rp).bpcu;
    if (asr_new < out.asr_bpcu - 1e-9) {
      out.message = "surrogate step decreased the objective; stopped at the previous iterate";
      break;
    }
    const double gain = asr_new - out.asr_bpcu;
    out.P = std::move(P_new);
    out.asr_bpcu = asr_new;
    out.trace.push_back(asr_new);
    warm = res.x;
    if (gain <= opt.tol_bpcu) {
      out.converged = true;
      break;
    }
  }
  return out;
}

struct FeasibilityResult {
  bool feasible = false;
  double slack = std::numeric_limits<double>::infinity();
  Eigen::MatrixXd P;
  int iters = 0;
};

// Drive the shared QoS slack down by successive convex approximation. The
// slack sequence is nonincreasing; the run reports feasible when it reaches
// 1 within tolerance.
inline FeasibilityResult feasibility_phase(const Eigen::MatrixXd& P0, const NetworkState& net,
                                           const ClusteringState& cl, const SystemConfig& cfg,
                                           const RateParams& rp, int max_iters = 15,
                                           double tol = 1e-6) {
  const double p_max = cfg.max_dl_power();
  const double p_floor = detail::kPowerFloorScale * p_max;

  FeasibilityResult out;
  out.P = P0.cwiseMax(p_floor).cwiseMin(p_max);
  for (int it = 0; it < max_iters; ++it) {
    GPSubproblem sub = build_feasibility_subproblem(out.P, net, cl, cfg, rp);
    const gp::GPResult res = gp::solve_gp(sub.problem);
    if (res.status != gp::GPStatus::optimal &&
        res.status != gp::GPStatus::iteration_limit)
      break;
    ++out.iters;
    const double s = res.x[sub.slack_var];
    if (!(s < out.slack - tol) && it > 0) {
      out.slack = std::min(out.slack, s);
      break;
    }
    out.slack = s;
    for (int m = 0; m < cfg.num_aps; ++m)
      for (int n = 0; n < cfg.num_ues; ++n) out.P(m, n) = res.x[sub.p_var[m][n]];
    if (s <= 1.0 + tol) break;
  }
  out.feasible = out.slack <= 1.0 + tol;
  return out;
}

}  // namespace cfnoma
