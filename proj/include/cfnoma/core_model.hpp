#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "cfnoma/config.hpp"
#include "cfnoma/rng.hpp"

namespace cfnoma {

// Partition of the real UEs into clusters. Nodes N..N+G-1 are per-cluster
// virtual slots used by the reassignment graph: node N+g stands for an empty
// seat in cluster g, carries no pilot, no power, and no rate.
struct ClusteringState {
  int num_ues = 0;       // N, real UEs only
  int num_clusters = 0;  // G
  std::vector<int> cluster_of;  // size N, values in [0, G)

  int total_nodes() const { return num_ues + num_clusters; }
  bool is_virtual(int node) const { return node >= num_ues; }
  // Cluster a graph node belongs to (real UE or virtual seat).
  int node_cluster(int node) const {
    return is_virtual(node) ? node - num_ues : cluster_of[node];
  }

  std::vector<std::vector<int>> members() const {
    std::vector<std::vector<int>> m(num_clusters);
    for (int n = 0; n < num_ues; ++n) m[cluster_of[n]].push_back(n);
    return m;  // each list ascending by UE index
  }

  void validate() const {
    if (static_cast<int>(cluster_of.size()) != num_ues)
      throw std::invalid_argument("ClusteringState: cluster_of size mismatch");
    for (int g : cluster_of)
      if (g < 0 || g >= num_clusters)
        throw std::invalid_argument("ClusteringState: cluster index out of range");
  }
};

// Geometry plus large-scale and pilot-estimation statistics. beta depends
// only on the deployment; theta and the decode order depend on the current
// clustering and must be refreshed whenever it changes.
struct NetworkState {
  Eigen::MatrixX2d ap_pos;  // M x 2, meters
  Eigen::MatrixX2d ue_pos;  // N x 2, meters
  Eigen::MatrixXd beta;     // M x N, linear channel gain
  Eigen::MatrixXd theta;    // M x N, estimated-channel gain per antenna
  std::vector<double> omega;   // effective gain used for ordering, size N
  std::vector<int> order;      // order[k] = UE decoded k-th (descending omega)
  std::vector<int> rank_of;    // inverse of order
};

// Three-slope distance law with log-normal shadowing beyond the far
// breakpoint. Distances are taken in meters; the reference loss is quoted at
// 1 km, so the distance enters the slope terms in kilometers.
inline double path_loss_three_slope(double distance_m, double shadow_db = 0.0) {
  if (distance_m < 0.0) throw std::domain_error("path_loss_three_slope: negative distance");
  constexpr double kRefLossDb = 140.7;  // at 1 km
  constexpr double kNearBreakM = 10.0;
  constexpr double kFarBreakM = 50.0;
  const double near_km = kNearBreakM / 1000.0;
  const double far_km = kFarBreakM / 1000.0;
  double pl_db;
  if (distance_m <= kNearBreakM) {
    pl_db = -kRefLossDb - 15.0 * std::log10(far_km) - 20.0 * std::log10(near_km);
  } else if (distance_m <= kFarBreakM) {
    pl_db = -kRefLossDb - 15.0 * std::log10(far_km) - 20.0 * std::log10(distance_m / 1000.0);
  } else {
    pl_db = -kRefLossDb - 35.0 * std::log10(distance_m / 1000.0) + shadow_db;
  }
  return db_to_linear(pl_db);
}

// Uniform AP/UE placement plus per-link shadowing. theta/order are left
// empty; call refresh_pilot_stats once a clustering exists.
inline NetworkState generate_deployment(const SystemConfig& cfg) {
  cfg.validate();
  NetworkState net;
  Substreams sub(cfg.seed);
  {
    auto rng = sub.stream("deployment");
    std::uniform_real_distribution<double> u(0.0, cfg.area_side_m);
    net.ap_pos.resize(cfg.num_aps, 2);
    for (int m = 0; m < cfg.num_aps; ++m) {
      net.ap_pos(m, 0) = u(rng);
      net.ap_pos(m, 1) = u(rng);
    }
    net.ue_pos.resize(cfg.num_ues, 2);
    for (int n = 0; n < cfg.num_ues; ++n) {
      net.ue_pos(n, 0) = u(rng);
      net.ue_pos(n, 1) = u(rng);
    }
  }
  {
    auto rng = sub.stream("shadowing");
    std::normal_distribution<double> g(0.0, 1.0);
    net.beta.resize(cfg.num_aps, cfg.num_ues);
    for (int m = 0; m < cfg.num_aps; ++m)
      for (int n = 0; n < cfg.num_ues; ++n) {
        const double d = (net.ap_pos.row(m) - net.ue_pos.row(n)).norm();
        net.beta(m, n) = path_loss_three_slope(d, cfg.shadowing_sigma_db * g(rng));
      }
  }
  return net;
}

// Per-antenna gain of the MMSE channel estimate under shared intra-cluster
// pilots: theta_mn = tau_p * p_p * beta_mn^2 / (1 + tau_p * p_p * sum of
// beta_mn' over n' sharing UE n's pilot, n included).
inline Eigen::MatrixXd pilot_gain_theta(const Eigen::MatrixXd& beta,
                                        const ClusteringState& clustering,
                                        const SystemConfig& cfg) {
  const int M = static_cast<int>(beta.rows());
  const int N = static_cast<int>(beta.cols());
  if (N != clustering.num_ues)
    throw std::invalid_argument("pilot_gain_theta: clustering/beta size mismatch");
  const double q = static_cast<double>(cfg.tau_p()) * cfg.pilot_power();
  Eigen::MatrixXd theta(M, N);
  const auto members = clustering.members();
  Eigen::MatrixXd cluster_beta_sum = Eigen::MatrixXd::Zero(M, clustering.num_clusters);
  for (int g = 0; g < clustering.num_clusters; ++g)
    for (int n : members[g]) cluster_beta_sum.col(g) += beta.col(n);
  for (int n = 0; n < N; ++n) {
    const int g = clustering.cluster_of[n];
    for (int m = 0; m < M; ++m) {
      const double b = beta(m, n);
      theta(m, n) = q * b * b / (1.0 + q * cluster_beta_sum(m, g));
    }
  }
  return theta;
}

struct GainOrder {
  std::vector<double> omega;
  std::vector<int> order;    // descending omega, ties by ascending UE index
  std::vector<int> rank_of;
};

// Average effective downlink gain of the estimated channel, used to fix the
// decode order: omega_n = L^2 (sum_m sqrt(theta_mn))^2 + L * sum_m theta_mn.
inline GainOrder effective_gain_order(const Eigen::MatrixXd& theta, int antennas_per_ap) {
  const int N = static_cast<int>(theta.cols());
  const double L = static_cast<double>(antennas_per_ap);
  GainOrder out;
  out.omega.resize(N);
  for (int n = 0; n < N; ++n) {
    const double s_sqrt = theta.col(n).array().sqrt().sum();
    const double s = theta.col(n).sum();
    out.omega[n] = L * L * s_sqrt * s_sqrt + L * s;
  }
  out.order.resize(N);
  std::iota(out.order.begin(), out.order.end(), 0);
  std::sort(out.order.begin(), out.order.end(), [&](int a, int b) {
    if (out.omega[a] != out.omega[b]) return out.omega[a] > out.omega[b];
    return a < b;
  });
  out.rank_of.assign(N, 0);
  for (int k = 0; k < N; ++k) out.rank_of[out.order[k]] = k;
  return out;
}

inline void refresh_pilot_stats(NetworkState& net, const ClusteringState& clustering,
                                const SystemConfig& cfg) {
  net.theta = pilot_gain_theta(net.beta, clustering, cfg);
  GainOrder go = effective_gain_order(net.theta, cfg.antennas_per_ap);
  net.omega = std::move(go.omega);
  net.order = std::move(go.order);
  net.rank_of = std::move(go.rank_of);
}

}  // namespace cfnoma
