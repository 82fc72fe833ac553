#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

#include "cfnoma/config.hpp"
#include "cfnoma/core_model.hpp"
#include "cfnoma/fbc_rate.hpp"
#include "cfnoma/rng.hpp"

namespace cfnoma {

// One small-scale fading draw. Co-cluster UEs share each AP's estimate
// direction nu (they share a pilot), so hhat_mn = sqrt(theta_mn)*nu_{m,g(n)}
// and the estimation error is independent with per-element variance
// beta_mn - theta_mn. Antennas of AP m occupy rows [m*L, (m+1)*L).
struct ChannelRealization {
  Eigen::MatrixXcd nu;    // (M*L) x G, CN(0,1) entries, shared per (AP, cluster)
  Eigen::MatrixXcd hhat;  // (M*L) x N estimated channels
  Eigen::MatrixXcd h;     // (M*L) x N true channels, h = hhat + error
};

inline ChannelRealization draw_channels(const NetworkState& net, const ClusteringState& cl,
                                        const SystemConfig& cfg, std::mt19937_64& rng) {
  const int M = cfg.num_aps, L = cfg.antennas_per_ap, N = cl.num_ues, G = cl.num_clusters;
  std::normal_distribution<double> unit(0.0, 1.0);
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);

  ChannelRealization cr;
  cr.nu.resize(M * L, G);
  for (int g = 0; g < G; ++g)
    for (int i = 0; i < M * L; ++i)
      cr.nu(i, g) = std::complex<double>(unit(rng), unit(rng)) * inv_sqrt2;

  cr.hhat.resize(M * L, N);
  cr.h.resize(M * L, N);
  for (int n = 0; n < N; ++n) {
    const int g = cl.cluster_of[n];
    for (int m = 0; m < M; ++m) {
      const double sd_est = std::sqrt(net.theta(m, n));
      const double sd_err = std::sqrt(std::max(net.beta(m, n) - net.theta(m, n), 0.0)) * inv_sqrt2;
      for (int l = 0; l < L; ++l) {
        const int i = m * L + l;
        cr.hhat(i, n) = sd_est * cr.nu(i, g);
        cr.h(i, n) = cr.hhat(i, n) + std::complex<double>(unit(rng), unit(rng)) * sd_err;
      }
    }
  }
  return cr;
}

namespace detail {

// Receive coefficients at UE u for each transmitted stream, one channel
// realization. The precoder for cluster g is nu_{mg}/sqrt(L) (unit average
// transmit power per stream), so the coefficient of stream k at UE u is
//   A(u,k) = sum_m sqrt(p_mk) * h_mu^H nu_{m,g(k)} / sqrt(L),
// with mean B(u,k) = sum_m sqrt(L p_mk theta_mu) for co-cluster k (the
// shared pilot makes the estimate co-directional) and mean 0 otherwise.
struct ReceiveCoeffs {
  Eigen::VectorXcd a;  // realized coefficient per stream
  Eigen::VectorXd b;   // its expectation (real by construction)
};

inline ReceiveCoeffs receive_coeffs(int u, const ChannelRealization& cr,
                                    const Eigen::MatrixXd& P, const NetworkState& net,
                                    const ClusteringState& cl, const SystemConfig& cfg) {
  const int M = cfg.num_aps, L = cfg.antennas_per_ap, N = cl.num_ues, G = cl.num_clusters;
  const double sqrt_l = std::sqrt(static_cast<double>(L));
  const int gu = cl.cluster_of[u];

  Eigen::MatrixXcd t(M, G);  // h_mu^H nu_mg / sqrt(L)
  for (int m = 0; m < M; ++m)
    for (int g = 0; g < G; ++g)
      t(m, g) = cr.h.col(u).segment(m * L, L).dot(cr.nu.col(g).segment(m * L, L)) / sqrt_l;

  ReceiveCoeffs rc;
  rc.a.setZero(N);
  rc.b.setZero(N);
  for (int k = 0; k < N; ++k) {
    const int gk = cl.cluster_of[k];
    for (int m = 0; m < M; ++m) rc.a[k] += std::sqrt(P(m, k)) * t(m, gk);
    if (gk == gu)
      for (int m = 0; m < M; ++m) rc.b[k] += sqrt_l * std::sqrt(P(m, k) * net.theta(m, u));
  }
  return rc;
}

// SINR of stream n at observer u given realized coefficients. Symbol
// expectations are analytic: the desired power is the deterministic mean
// part |B_n|^2, self-deviation |A_n - B_n|^2 is beamforming uncertainty, and
// an imperfectly cancelled later stream (estimate correlation c) leaves
// |A|^2 + |B|^2 - 2c Re(A B*) = |A - cB|^2 + (1 - c^2)|B|^2 >= 0.
inline double sinr_from_coeffs(int n, const ReceiveCoeffs& rc, const NetworkState& net,
                               const ClusteringState& cl, const SystemConfig& cfg) {
  const int N = cl.num_ues;
  const int g = cl.cluster_of[n];
  const double c = cfg.sic_quality;

  double den = std::norm(rc.a[n] - rc.b[n]) + 1.0;
  for (int k = 0; k < N; ++k) {
    if (k == n) continue;
    if (cl.cluster_of[k] != g) {
      den += std::norm(rc.a[k]);
    } else if (net.rank_of[k] < net.rank_of[n]) {
      den += std::norm(rc.a[k]);
    } else {
      den += std::norm(rc.a[k]) + rc.b[k] * rc.b[k] - 2.0 * c * rc.a[k].real() * rc.b[k];
    }
  }
  return rc.b[n] * rc.b[n] / den;
}

// Deterministic pairwise reduction; keeps float error O(log n) so reruns and
// chunked accumulation agree bit-for-bit.
inline double pairwise_sum(const double* x, std::size_t n) {
  if (n <= 8) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i];
    return s;
  }
  const std::size_t h = n / 2;
  return pairwise_sum(x, h) + pairwise_sum(x + h, n - h);
}

}  // namespace detail

// Instantaneous SINR of UE n's stream as decoded by observer u for one
// channel draw (u must be co-cluster and ordered no later than n).
inline double instantaneous_sinr(const ChannelRealization& cr, const Eigen::MatrixXd& P,
                                 const NetworkState& net, const ClusteringState& cl,
                                 const SystemConfig& cfg, int n, int u) {
  if (cl.cluster_of[n] != cl.cluster_of[u])
    throw std::invalid_argument("instantaneous_sinr: observer not in signal's cluster");
  if (net.rank_of[u] > net.rank_of[n])
    throw std::invalid_argument("instantaneous_sinr: observer ordered after signal");
  return detail::sinr_from_coeffs(n, detail::receive_coeffs(u, cr, P, net, cl, cfg), net, cl,
                                  cfg);
}

// Per-draw effective SINR of every UE: min over the same-cluster observers
// ordered at or before the UE (all of them must decode the stream for SIC).
inline Eigen::VectorXd trial_effective_sinrs(const ChannelRealization& cr,
                                             const Eigen::MatrixXd& P, const NetworkState& net,
                                             const ClusteringState& cl,
                                             const SystemConfig& cfg) {
  const int N = cl.num_ues;
  Eigen::VectorXd gamma =
      Eigen::VectorXd::Constant(N, std::numeric_limits<double>::infinity());
  for (int u = 0; u < N; ++u) {
    const auto rc = detail::receive_coeffs(u, cr, P, net, cl, cfg);
    for (int n = 0; n < N; ++n) {
      if (cl.cluster_of[n] != cl.cluster_of[u]) continue;
      if (net.rank_of[u] > net.rank_of[n]) continue;
      gamma[n] = std::min(gamma[n], detail::sinr_from_coeffs(n, rc, net, cl, cfg));
    }
  }
  return gamma;
}

struct EmpiricalRate {
  Eigen::VectorXd mean_bpcu;  // per-UE sample mean of max(R(gamma), 0)
  Eigen::VectorXd ci95_bpcu;  // 95% normal-approximation half-width
  int trials = 0;
};

// Sample estimate of the ergodic FBC rate. Trial t draws from the "mc"
// substream at index t, so any trial count is a prefix of a longer run.
inline EmpiricalRate empirical_ergodic_rate(const Eigen::MatrixXd& P, const NetworkState& net,
                                            const ClusteringState& cl, const SystemConfig& cfg,
                                            const RateParams& rp, int trials) {
  if (trials < 1) throw std::invalid_argument("empirical_ergodic_rate: trials must be >= 1");
  const int N = cl.num_ues;
  const Substreams sub(cfg.seed);

  Eigen::MatrixXd rates(trials, N);
  for (int t = 0; t < trials; ++t) {
    auto rng = sub.stream("mc", static_cast<std::uint64_t>(t));
    const ChannelRealization cr = draw_channels(net, cl, cfg, rng);
    const Eigen::VectorXd gamma = trial_effective_sinrs(cr, P, net, cl, cfg);
    for (int n = 0; n < N; ++n) rates(t, n) = fbc_rate(gamma[n], rp);
  }

  constexpr double kZ95 = 1.959963984540054;
  EmpiricalRate out;
  out.trials = trials;
  out.mean_bpcu.resize(N);
  out.ci95_bpcu.resize(N);
  Eigen::VectorXd sq(trials);
  for (int n = 0; n < N; ++n) {
    const double mean = detail::pairwise_sum(rates.col(n).data(), trials) / trials;
    out.mean_bpcu[n] = mean;
    if (trials == 1) {
      out.ci95_bpcu[n] = std::numeric_limits<double>::infinity();
      continue;
    }
    sq = (rates.col(n).array() - mean).square();
    const double var = detail::pairwise_sum(sq.data(), trials) / (trials - 1);
    out.ci95_bpcu[n] = kZ95 * std::sqrt(var / trials);
  }
  return out;
}

}  // namespace cfnoma
