#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "cfnoma/core_model.hpp"

namespace cfnoma {

inline double gaussian_q(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

// Inverse Gaussian tail: returns x with Q(x) = eps. Bisection bracket plus a
// few Newton polish steps; accurate to machine precision across (0, 1).
inline double q_inverse(double eps) {
  if (!(eps > 0.0 && eps < 1.0)) throw std::domain_error("q_inverse: eps must be in (0,1)");
  double lo = -40.0, hi = 40.0;
  for (int i = 0; i < 60; ++i) {
    const double mid = 0.5 * (lo + hi);
    (gaussian_q(mid) > eps ? lo : hi) = mid;
  }
  double x = 0.5 * (lo + hi);
  for (int i = 0; i < 4; ++i) {
    const double phi = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    if (phi <= 0.0) break;
    x += (gaussian_q(x) - eps) / phi;
  }
  return x;
}

// Channel dispersion V(gamma) = 1 - (1 + gamma)^-2.
inline double dispersion(double gamma) {
  const double t = 1.0 + gamma;
  return 1.0 - 1.0 / (t * t);
}

// Finite-blocklength rate model shared by every rate expression.
struct RateParams {
  double eta;      // tau_d / tau_c, data fraction of the coherence block
  double tau_d;    // data channel uses
  double epsilon;  // decoding error probability
  double qinv;     // Q^-1(epsilon), cached

  // Penalty weight so that rate = (eta/ln2) * (ln(1+g) - a * sqrt(V(g))).
  double penalty_a() const { return qinv / std::sqrt(eta * tau_d); }
};

inline RateParams make_rate_params(const SystemConfig& cfg) {
  return RateParams{cfg.eta(), static_cast<double>(cfg.tau_d()), cfg.decode_error_prob,
                    q_inverse(cfg.decode_error_prob)};
}

// Unclamped normal-approximation rate in bits per channel use.
inline double fbc_rate_raw(double gamma, const RateParams& rp) {
  if (gamma < 0.0) throw std::domain_error("fbc_rate: negative SINR");
  if (gamma == 0.0) return 0.0;
  return rp.eta * std::log2(1.0 + gamma) -
         std::sqrt(rp.eta * dispersion(gamma) / rp.tau_d) * rp.qinv / std::numbers::ln2;
}

// Achievable rate, clamped at zero where the penalty exceeds the capacity term.
inline double fbc_rate(double gamma, const RateParams& rp) {
  return std::max(0.0, fbc_rate_raw(gamma, rp));
}

// Below this SINR the unclamped rate decreases in gamma; above it the rate is
// strictly increasing. Solves d/dgamma = 0 in closed form.
inline double rate_monotone_threshold(const RateParams& rp) {
  const double a = rp.penalty_a();
  const double s = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * a * a));
  return std::max(0.0, std::sqrt(s) - 1.0);
}

// Smallest SINR whose clamped rate meets `target_bpcu`; target 0 returns the
// zero-rate threshold. Bisection on the increasing branch.
inline double rate_inverse(double target_bpcu, const RateParams& rp) {
  if (target_bpcu < 0.0) throw std::domain_error("rate_inverse: negative target");
  const double start = rate_monotone_threshold(rp);
  double lo = start;
  if (target_bpcu == 0.0 && rp.qinv <= 0.0) return 0.0;
  double hi = std::max(1.0, 2.0 * start + 1.0);
  while (fbc_rate_raw(hi, rp) < target_bpcu) {
    hi *= 2.0;
    if (hi > 1e30) throw std::runtime_error("rate_inverse: target not reachable");
  }
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (fbc_rate_raw(mid, rp) < target_bpcu ? lo : hi) = mid;
    if (hi - lo <= 1e-14 * std::max(1.0, hi)) break;
  }
  return 0.5 * (lo + hi);
}

// Additive pieces of the SINR denominator seen by observer u decoding the
// stream of UE n, grouped by physical origin. sinr() reassembles the ratio.
struct SinrBreakdown {
  double desired = 0.0;
  double beamform_uncertainty = 0.0;
  double inter_cluster = 0.0;
  double intra_pre_sic = 0.0;  // co-cluster streams ordered before n: never canceled
  double residual_sic = 0.0;   // co-cluster streams ordered after n: canceled imperfectly
  double noise = 1.0;

  double denominator() const {
    return beamform_uncertainty + inter_cluster + intra_pre_sic + residual_sic + noise;
  }
  double sinr() const { return desired / denominator(); }
};

namespace detail {

// sum_m sqrt(p_m,k * theta_m,u): coherent receive amplitude (squared below).
inline double coherent_amp(const Eigen::MatrixXd& P, const Eigen::MatrixXd& theta, int k,
                           int u) {
  return (P.col(k).array() * theta.col(u).array()).sqrt().sum();
}

}  // namespace detail

// Closed-form lower-bound SINR of UE n's stream as decoded by observer u,
// which must be in the same cluster and ordered no later than n. The first
// denominator group sums transmit power against beta over every UE in the
// network, so it does not depend on the clustering.
inline SinrBreakdown pairwise_sinr_breakdown(int n, int u, const Eigen::MatrixXd& P,
                                             const NetworkState& net,
                                             const ClusteringState& clustering,
                                             const SystemConfig& cfg) {
  const int N = clustering.num_ues;
  if (n < 0 || n >= N || u < 0 || u >= N)
    throw std::invalid_argument("pairwise_sinr: UE index out of range");
  if (clustering.cluster_of[n] != clustering.cluster_of[u])
    throw std::invalid_argument("pairwise_sinr: observer not in signal's cluster");
  if (net.rank_of[u] > net.rank_of[n])
    throw std::invalid_argument("pairwise_sinr: observer ordered after signal");
  const double L = static_cast<double>(cfg.antennas_per_ap);
  const double c = cfg.sic_quality;
  const int g = clustering.cluster_of[n];

  SinrBreakdown br;
  const double amp_n = detail::coherent_amp(P, net.theta, n, u);
  br.desired = L * amp_n * amp_n;
  br.beamform_uncertainty = (P.col(n).array() * net.beta.col(u).array()).sum();
  for (int k = 0; k < N; ++k) {
    if (k == n) continue;
    const double pw_beta = (P.col(k).array() * net.beta.col(u).array()).sum();
    if (clustering.cluster_of[k] != g) {
      br.inter_cluster += pw_beta;
      continue;
    }
    const double amp = detail::coherent_amp(P, net.theta, k, u);
    if (net.rank_of[k] < net.rank_of[n]) {
      br.intra_pre_sic += pw_beta + L * amp * amp;
    } else {
      br.residual_sic += pw_beta + (2.0 - 2.0 * c) * L * amp * amp;
    }
  }
  return br;
}

inline double pairwise_sinr_lb(int n, int u, const Eigen::MatrixXd& P, const NetworkState& net,
                               const ClusteringState& clustering, const SystemConfig& cfg) {
  return pairwise_sinr_breakdown(n, u, P, net, clustering, cfg).sinr();
}

// Effective bound: worst pairwise SINR over the observers that must decode
// UE n's stream (same cluster, ordered at or before n).
inline double effective_sinr_lb(int n, const Eigen::MatrixXd& P, const NetworkState& net,
                                const ClusteringState& clustering, const SystemConfig& cfg) {
  double g = std::numeric_limits<double>::infinity();
  for (int u = 0; u < clustering.num_ues; ++u) {
    if (clustering.cluster_of[u] != clustering.cluster_of[n]) continue;
    if (net.rank_of[u] > net.rank_of[n]) continue;
    g = std::min(g, pairwise_sinr_lb(n, u, P, net, clustering, cfg));
  }
  return g;
}

inline double lb_rate(int n, const Eigen::MatrixXd& P, const NetworkState& net,
                      const ClusteringState& clustering, const SystemConfig& cfg,
                      const RateParams& rp) {
  return fbc_rate(effective_sinr_lb(n, P, net, clustering, cfg), rp);
}

struct AsrValue {
  double bpcu = 0.0;  // bits per channel use
  double bps = 0.0;   // bpcu * bandwidth
};

// Achievable sum rate over the real UEs (virtual seats carry no rate).
inline AsrValue asr(const Eigen::MatrixXd& P, const NetworkState& net,
                    const ClusteringState& clustering, const SystemConfig& cfg,
                    const RateParams& rp) {
  double total = 0.0;
  for (int n = 0; n < clustering.num_ues; ++n)
    total += lb_rate(n, P, net, clustering, cfg, rp);
  return AsrValue{total, total * cfg.bandwidth_hz};
}

}  // namespace cfnoma
