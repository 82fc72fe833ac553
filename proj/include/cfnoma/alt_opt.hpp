#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "cfnoma/clustering_graph.hpp"
#include "cfnoma/config.hpp"
#include "cfnoma/core_model.hpp"
#include "cfnoma/fbc_rate.hpp"
#include "cfnoma/power_allocation.hpp"
#include "cfnoma/rng.hpp"

namespace cfnoma {

// ---------------------------------------------------------------------------
// Initial clustering builders.
// ---------------------------------------------------------------------------

// Deferred acceptance with dynamic preferences: a UE proposes to the cluster
// whose tentative members radiate the least aggregate channel gain toward
// the network (recomputed every proposal), and a full cluster keeps the
// proposers with the smallest own gain, evicting the largest. Capacity is
// ceil(N/G). Terminates because a cluster rejects any given UE at most once.
inline ClusteringState gale_shapley_clustering(const NetworkState& net,
                                               const SystemConfig& cfg) {
  const int N = cfg.num_ues, G = cfg.num_clusters;
  const int cap = (N + G - 1) / G;
  Eigen::VectorXd gain = net.beta.colwise().sum();

  std::vector<std::vector<int>> members(G);
  std::vector<std::vector<bool>> rejected(N, std::vector<bool>(G, false));
  std::vector<int> queue(N);
  std::iota(queue.begin(), queue.end(), 0);

  std::size_t head = 0;
  while (head < queue.size()) {
    const int n = queue[head++];
    int pick = -1;
    double pick_load = std::numeric_limits<double>::infinity();
    for (int g = 0; g < G; ++g) {
      if (rejected[n][g]) continue;
      double load = 0.0;
      for (int k : members[g]) load += gain[k];
      if (load < pick_load) {
        pick_load = load;
        pick = g;
      }
    }
    if (pick < 0) throw std::logic_error("deferred acceptance: proposer ran out of clusters");
    auto& club = members[pick];
    if (static_cast<int>(club.size()) < cap) {
      club.push_back(n);
      continue;
    }
    auto worst = std::max_element(club.begin(), club.end(), [&](int a, int b) {
      if (gain[a] != gain[b]) return gain[a] < gain[b];
      return a < b;
    });
    if (gain[n] < gain[*worst]) {
      const int evicted = *worst;
      *worst = n;
      rejected[evicted][pick] = true;
      queue.push_back(evicted);
    } else {
      rejected[n][pick] = true;
      queue.push_back(n);
    }
  }

  ClusteringState cl;
  cl.num_ues = N;
  cl.num_clusters = G;
  cl.cluster_of.assign(N, 0);
  for (int g = 0; g < G; ++g)
    for (int n : members[g]) cl.cluster_of[n] = g;
  cl.validate();
  return cl;
}

// Balanced random assignment: shuffle the UEs, deal them round-robin.
inline ClusteringState brpa_clustering(int num_ues, int num_clusters, std::uint64_t seed) {
  ClusteringState cl;
  cl.num_ues = num_ues;
  cl.num_clusters = num_clusters;
  cl.cluster_of.resize(num_ues);
  std::vector<int> idx(num_ues);
  std::iota(idx.begin(), idx.end(), 0);
  Substreams sub(seed);
  auto rng = sub.stream("brpa");
  std::shuffle(idx.begin(), idx.end(), rng);
  for (int k = 0; k < num_ues; ++k) cl.cluster_of[idx[k]] = k % num_clusters;
  cl.validate();
  return cl;
}

// ---------------------------------------------------------------------------
// Alternating optimization (clustering <-> power) and baselines.
// ---------------------------------------------------------------------------

enum class Algorithm { s_ebfa, s_gsa, gale_shapley, brpa };

inline const char* to_string(Algorithm a) {
  switch (a) {
    case Algorithm::s_ebfa: return "s-ebfa";
    case Algorithm::s_gsa: return "s-gsa";
    case Algorithm::gale_shapley: return "gale-shapley";
    case Algorithm::brpa: return "brpa";
  }
  return "?";
}

inline Algorithm parse_algorithm(const std::string& s) {
  if (s == "s-ebfa") return Algorithm::s_ebfa;
  if (s == "s-gsa") return Algorithm::s_gsa;
  if (s == "gale-shapley") return Algorithm::gale_shapley;
  if (s == "brpa") return Algorithm::brpa;
  throw std::invalid_argument("unknown algorithm: " + s);
}

struct OptimizeOptions {
  LoopDetector detector = LoopDetector::gsa;
  double xi_bpcu = 1e-3;  // absolute sum-rate change ending the outer loop
  int max_outer = 20;
  bool random_start = false;  // seed the loop with a random balanced clustering
  SpaOptions spa;
  ClusteringOptions clustering;
  int feas_max_iters = 15;
};

struct OptimizationResult {
  Eigen::MatrixXd P;
  ClusteringState clustering;
  NetworkState net;  // pilot stats refreshed for the returned clustering
  std::vector<double> trace_bpcu;  // interleaved accepted half-steps
  double asr_bpcu = 0.0;
  double asr_bps = 0.0;
  std::vector<double> ue_rate_bpcu;
  std::vector<double> ue_sinr;
  int outer_iters = 0;
  bool feasible = false;
  bool converged = false;
  double wall_ms = 0.0;
  std::string algorithm;
  std::string termination;  // converged | max-outer | infeasible | baseline
};

namespace detail {

inline OptimizationResult run_pipeline(const NetworkState& net0, const SystemConfig& cfg,
                                       const RateParams& rp, const OptimizeOptions& opt,
                                       ClusteringState X, bool refine_clustering,
                                       const char* name) {
  const auto t0 = std::chrono::steady_clock::now();
  OptimizationResult out;
  out.algorithm = name;
  out.net = net0;
  refresh_pilot_stats(out.net, X, cfg);

  const FeasibilityResult feas = feasibility_phase(initial_power(out.net, cfg), out.net, X,
                                                   cfg, rp, opt.feas_max_iters);
  out.P = feas.P;
  out.feasible = feas.feasible;

  const auto record_final = [&] {
    out.clustering = std::move(X);
    out.asr_bpcu = out.trace_bpcu.back();
    out.asr_bps = out.asr_bpcu * cfg.bandwidth_hz;
    out.ue_rate_bpcu.resize(cfg.num_ues);
    out.ue_sinr.resize(cfg.num_ues);
    for (int n = 0; n < cfg.num_ues; ++n) {
      out.ue_sinr[n] = effective_sinr_lb(n, out.P, out.net, out.clustering, cfg);
      out.ue_rate_bpcu[n] = fbc_rate(out.ue_sinr[n], rp);
    }
    out.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
  };

  out.trace_bpcu.push_back(asr(out.P, out.net, X, cfg, rp).bpcu);
  if (!out.feasible) {
    out.termination = "infeasible";
    record_final();
    return out;
  }

  ClusteringOptions copt = opt.clustering;
  copt.detector = opt.detector;
  double obj_prev = out.trace_bpcu.back();
  for (int t = 0; t < opt.max_outer; ++t) {
    const SpaResult sres = spa(out.P, out.net, X, cfg, rp, opt.spa);
    out.P = sres.P;
    out.trace_bpcu.insert(out.trace_bpcu.end(), sres.trace.begin() + 1, sres.trace.end());

    if (!refine_clustering) {
      out.outer_iters = 1;
      out.converged = true;
      out.termination = "baseline";
      record_final();
      return out;
    }

    const ClusteringDesignResult cres = clustering_design(X, out.P, out.net, cfg, rp, copt);
    X = cres.clustering;
    out.trace_bpcu.insert(out.trace_bpcu.end(), cres.trace.begin() + 1, cres.trace.end());

    ++out.outer_iters;
    const double obj = out.trace_bpcu.back();
    if (std::abs(obj - obj_prev) <= opt.xi_bpcu) {
      out.converged = true;
      out.termination = "converged";
      record_final();
      return out;
    }
    obj_prev = obj;
  }
  out.termination = "max-outer";
  record_final();
  return out;
}

}  // namespace detail

// Algorithm-3-style alternating optimization: deferred-acceptance start
// (or random with opt.random_start), a feasibility phase, then alternating
// power allocation and clustering design until the sum rate stalls.
inline OptimizationResult optimize(const NetworkState& net, const SystemConfig& cfg,
                                   const RateParams& rp, const OptimizeOptions& opt = {}) {
  const ClusteringState X0 =
      opt.random_start ? brpa_clustering(cfg.num_ues, cfg.num_clusters, cfg.seed)
                       : gale_shapley_clustering(net, cfg);
  const char* name = opt.detector == LoopDetector::ebfa ? "s-ebfa" : "s-gsa";
  return detail::run_pipeline(net, cfg, rp, opt, X0, true, name);
}

// Unified entry point for the comparison protocol: the two proposed
// variants alternate clustering and power; the baselines fix the clustering
// and run power allocation only.
inline OptimizationResult run_algorithm(Algorithm alg, const NetworkState& net,
                                        const SystemConfig& cfg, const RateParams& rp,
                                        OptimizeOptions opt = {}) {
  switch (alg) {
    case Algorithm::s_ebfa:
      opt.detector = LoopDetector::ebfa;
      return optimize(net, cfg, rp, opt);
    case Algorithm::s_gsa:
      opt.detector = LoopDetector::gsa;
      return optimize(net, cfg, rp, opt);
    case Algorithm::gale_shapley:
      return detail::run_pipeline(net, cfg, rp, opt, gale_shapley_clustering(net, cfg), false,
                                  "gale-shapley");
    case Algorithm::brpa:
      return detail::run_pipeline(net, cfg, rp, opt,
                                  brpa_clustering(cfg.num_ues, cfg.num_clusters, cfg.seed),
                                  false, "brpa");
  }
  throw std::logic_error("unreachable");
}

}  // namespace cfnoma
