#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <set>
#include <unordered_map>
#include <vector>

#include "cfnoma/config.hpp"
#include "cfnoma/core_model.hpp"
#include "cfnoma/fbc_rate.hpp"

namespace cfnoma {

// ---------------------------------------------------------------------------
// Cluster-local rate evaluation.
//
// The per-cluster rate variable (nats, per-UE terms clamped at zero) is a
// pure function of the cluster's member set: estimate gains, the in-cluster
// decode order, and every intra-cluster denominator term depend only on the
// members, while the network-wide power leak is membership-independent.
// This is what makes single-cluster deltas well-defined graph weights.
// ---------------------------------------------------------------------------

// Network-wide beamforming-leak floor per observer: leak_u = sum_m beta_mu *
// (total power of AP m). Precompute once per power matrix.
inline Eigen::VectorXd universal_leak(const Eigen::MatrixXd& P, const Eigen::MatrixXd& beta) {
  return beta.transpose() * P.rowwise().sum();
}

// omega_g: sum over the hypothetical members (ascending ids) of
// max(0, ln(1+gamma) - a sqrt(V(gamma))) with gamma the worst-observer SINR
// bound under the member-local estimate gains and decode order.
inline double cluster_rate_nats(const std::vector<int>& members, const Eigen::MatrixXd& P,
                                const Eigen::VectorXd& leak, const Eigen::MatrixXd& beta,
                                const SystemConfig& cfg, const RateParams& rp) {
  const int K = static_cast<int>(members.size());
  if (K == 0) return 0.0;
  const int M = static_cast<int>(beta.rows());
  const double L = static_cast<double>(cfg.antennas_per_ap);
  const double q = static_cast<double>(cfg.tau_p()) * cfg.pilot_power();
  const double resid = 2.0 - 2.0 * cfg.sic_quality;

  Eigen::MatrixXd theta(M, K);
  {
    Eigen::VectorXd bsum = Eigen::VectorXd::Zero(M);
    for (int k = 0; k < K; ++k) bsum += beta.col(members[k]);
    for (int k = 0; k < K; ++k)
      for (int m = 0; m < M; ++m) {
        const double b = beta(m, members[k]);
        theta(m, k) = q * b * b / (1.0 + q * bsum[m]);
      }
  }

  // In-cluster decode order: effective gain descending, ties by UE index.
  std::vector<double> omega(K);
  for (int k = 0; k < K; ++k) {
    const double s_sqrt = theta.col(k).array().sqrt().sum();
    const double s = theta.col(k).sum();
    omega[k] = L * L * s_sqrt * s_sqrt + L * s;
  }
  std::vector<int> by_rank(K);
  std::iota(by_rank.begin(), by_rank.end(), 0);
  std::sort(by_rank.begin(), by_rank.end(), [&](int a, int b) {
    if (omega[a] != omega[b]) return omega[a] > omega[b];
    return members[a] < members[b];
  });

  Eigen::MatrixXd amp(K, K);  // amp(k, u): coherent amplitude of stream k at observer u
  for (int k = 0; k < K; ++k)
    for (int u = 0; u < K; ++u)
      amp(k, u) = (P.col(members[k]).array() * theta.col(u).array()).sqrt().sum();

  const double a = rp.penalty_a();
  double total = 0.0;
  for (int rn = 0; rn < K; ++rn) {
    const int n = by_rank[rn];
    double gamma = std::numeric_limits<double>::infinity();
    for (int ru = 0; ru <= rn; ++ru) {
      const int u = by_rank[ru];
      double den = leak[members[u]] + 1.0;
      for (int rk = 0; rk < K; ++rk) {
        if (rk == rn) continue;
        const int k = by_rank[rk];
        const double coh = L * amp(k, u) * amp(k, u);
        den += rk < rn ? coh : resid * coh;
      }
      gamma = std::min(gamma, L * amp(n, u) * amp(n, u) / den);
    }
    const double t = std::log1p(gamma) - a * std::sqrt(dispersion(gamma));
    if (t > 0.0) total += t;
  }
  return total;
}

// ---------------------------------------------------------------------------
// Weighted reassignment digraph.
// ---------------------------------------------------------------------------

// Nodes 0..N-1 are real UEs; node N+g is cluster g's virtual seat (rate 0,
// power 0). z(i,j) is the drop in cluster pi_j's rate variable when i takes
// j's seat there; +inf on the diagonal and within a cluster.
struct WeightedDigraph {
  int num_ues = 0;
  int num_clusters = 0;
  std::vector<int> node_cluster;  // size N+G
  Eigen::MatrixXd z;              // (N+G) x (N+G)

  int total_nodes() const { return num_ues + num_clusters; }
  bool is_virtual(int node) const { return node >= num_ues; }
};

inline WeightedDigraph build_graph(const ClusteringState& cl, const Eigen::MatrixXd& P,
                                   const NetworkState& net, const SystemConfig& cfg,
                                   const RateParams& rp) {
  const int N = cl.num_ues, G = cl.num_clusters, T = N + G;
  const double inf = std::numeric_limits<double>::infinity();

  WeightedDigraph gr;
  gr.num_ues = N;
  gr.num_clusters = G;
  gr.node_cluster.resize(T);
  for (int n = 0; n < N; ++n) gr.node_cluster[n] = cl.cluster_of[n];
  for (int g = 0; g < G; ++g) gr.node_cluster[N + g] = g;
  gr.z = Eigen::MatrixXd::Constant(T, T, inf);

  const Eigen::VectorXd leak = universal_leak(P, net.beta);
  const auto members = cl.members();
  std::vector<double> omega_cur(G);
  for (int g = 0; g < G; ++g)
    omega_cur[g] = cluster_rate_nats(members[g], P, leak, net.beta, cfg, rp);

  for (int j = 0; j < T; ++j) {
    const int g = gr.node_cluster[j];
    for (int i = 0; i < T; ++i) {
      if (i == j || gr.node_cluster[i] == g) continue;
      if (gr.is_virtual(i) && gr.is_virtual(j)) {
        gr.z(i, j) = 0.0;  // seat-for-seat swap changes no membership
        continue;
      }
      std::vector<int> hyp = members[g];
      if (!gr.is_virtual(j)) hyp.erase(std::find(hyp.begin(), hyp.end(), j));
      if (!gr.is_virtual(i)) hyp.insert(std::upper_bound(hyp.begin(), hyp.end(), i), i);
      gr.z(i, j) = omega_cur[g] - cluster_rate_nats(hyp, P, leak, net.beta, cfg, rp);
    }
  }
  return gr;
}

// ---------------------------------------------------------------------------
// Negative differ-cluster loop detection.
// ---------------------------------------------------------------------------

struct Loop {
  std::vector<int> nodes;  // cyclic successor order, clusters pairwise distinct
  double weight = 0.0;
};

// Rotation-invariant key (cycles are directed; rotate the smallest node id
// to the front).
inline std::vector<int> loop_key(const Loop& lp) {
  const auto& v = lp.nodes;
  const std::size_t pivot = static_cast<std::size_t>(
      std::min_element(v.begin(), v.end()) - v.begin());
  std::vector<int> key(v.size());
  for (std::size_t k = 0; k < v.size(); ++k) key[k] = v[(pivot + k) % v.size()];
  return key;
}

using LoopSet = std::set<std::vector<int>>;

struct DetectResult {
  std::optional<Loop> loop;
  bool complete = true;  // false when the label cap truncated the search
};

struct DetectOptions {
  double neg_tol = 1e-12;           // weight must be below -neg_tol
  std::size_t label_cap = 100000;   // per-node path-label budget (exact search)
  double gsa_alpha = 4.0;           // greedy budget factor: ceil(alpha * N * G)
  const LoopSet* exclude = nullptr; // loops to skip (canonical keys)
};

namespace detail {

struct PathLabel {
  int node;
  std::uint32_t clusters;  // bitmask of visited clusters
  double dist;
  int parent;  // index into the label pool, -1 at the start node
};

inline Loop assemble_loop(const std::vector<PathLabel>& pool, int tail, double weight) {
  Loop lp;
  lp.weight = weight;
  for (int at = tail; at >= 0; at = pool[at].parent) lp.nodes.push_back(pool[at].node);
  std::reverse(lp.nodes.begin(), lp.nodes.end());
  return lp;
}

}  // namespace detail

// Exact search: one pass per start node (equivalent to the super-node
// formulation), expanding path labels (node, visited clusters, distance)
// with Bellman-Ford-style relaxation. Only the minimal distance per
// (node, cluster-set) survives, which preserves every negative cycle; paths
// never revisit a cluster, and cycles are enumerated from their smallest
// node id. Exhaustive up to the per-node label cap.
inline DetectResult detect_negative_loop_ebfa(const WeightedDigraph& gr,
                                              const DetectOptions& opt = {}) {
  const int T = gr.total_nodes();
  DetectResult out;
  std::vector<detail::PathLabel> pool;
  std::vector<int> frontier, next;
  std::unordered_map<std::uint64_t, double> best;
  std::vector<std::size_t> labels_at(T, 0);

  for (int s = 0; s < T; ++s) {
    pool.clear();
    frontier.clear();
    best.clear();
    std::fill(labels_at.begin(), labels_at.end(), std::size_t{0});
    pool.push_back({s, std::uint32_t{1} << gr.node_cluster[s], 0.0, -1});
    frontier.push_back(0);

    while (!frontier.empty()) {
      next.clear();
      for (const int li : frontier) {
        const detail::PathLabel lab = pool[li];
        if (lab.parent >= 0) {  // cycles need at least two nodes
          const double back = gr.z(lab.node, s);
          if (std::isfinite(back) && lab.dist + back < -opt.neg_tol) {
            Loop lp = detail::assemble_loop(pool, li, lab.dist + back);
            if (!opt.exclude || !opt.exclude->contains(loop_key(lp))) {
              out.loop = std::move(lp);
              return out;
            }
          }
        }
        for (int u = s + 1; u < T; ++u) {
          const double w = gr.z(lab.node, u);
          if (!std::isfinite(w)) continue;
          const std::uint32_t cbit = std::uint32_t{1} << gr.node_cluster[u];
          if (lab.clusters & cbit) continue;
          const double nd = lab.dist + w;
          const std::uint64_t key =
              (static_cast<std::uint64_t>(u) << 32) | (lab.clusters | cbit);
          auto [it, fresh] = best.try_emplace(key, nd);
          if (!fresh) {
            if (it->second <= nd) continue;
            it->second = nd;
          }
          if (labels_at[u] >= opt.label_cap) {
            out.complete = false;
            continue;
          }
          ++labels_at[u];
          pool.push_back({u, lab.clusters | cbit, nd, li});
          next.push_back(static_cast<int>(pool.size()) - 1);
        }
      }
      frontier.swap(next);
    }
  }
  return out;
}

// Greedy search: seed with the smallest finite edge, extend from the tail
// along the smallest admissible edge (unused target cluster), close as soon
// as the return edge makes the total negative, and restart from the next
// seed on failure. Sound but not complete; the budget caps edge expansions.
inline DetectResult detect_negative_loop_gsa(const WeightedDigraph& gr,
                                             const DetectOptions& opt = {}) {
  const int T = gr.total_nodes();
  DetectResult out;
  struct Edge {
    double w;
    int i, j;
  };
  std::vector<Edge> seeds;
  for (int i = 0; i < T; ++i)
    for (int j = 0; j < T; ++j)
      if (std::isfinite(gr.z(i, j))) seeds.push_back({gr.z(i, j), i, j});
  std::sort(seeds.begin(), seeds.end(), [](const Edge& a, const Edge& b) {
    if (a.w != b.w) return a.w < b.w;
    if (a.i != b.i) return a.i < b.i;
    return a.j < b.j;
  });

  long budget = static_cast<long>(
      std::ceil(opt.gsa_alpha * gr.num_ues * std::max(gr.num_clusters, 1)));
  for (const Edge& seed : seeds) {
    if (budget <= 0) break;
    --budget;
    std::vector<int> path = {seed.i, seed.j};
    std::uint32_t used = (std::uint32_t{1} << gr.node_cluster[seed.i]) |
                         (std::uint32_t{1} << gr.node_cluster[seed.j]);
    double total = seed.w;
    while (true) {
      const int tail = path.back();
      const double back = gr.z(tail, path.front());
      if (std::isfinite(back) && total + back < -opt.neg_tol) {
        Loop lp{path, total + back};
        if (!opt.exclude || !opt.exclude->contains(loop_key(lp))) {
          out.loop = std::move(lp);
          return out;
        }
      }
      if (budget <= 0) break;
      int pick = -1;
      double pick_w = std::numeric_limits<double>::infinity();
      for (int u = 0; u < T; ++u) {
        const double w = gr.z(tail, u);
        if (!std::isfinite(w)) continue;
        if (used & (std::uint32_t{1} << gr.node_cluster[u])) continue;
        if (w < pick_w) {
          pick_w = w;
          pick = u;
        }
      }
      if (pick < 0) break;
      --budget;
      path.push_back(pick);
      used |= std::uint32_t{1} << gr.node_cluster[pick];
      total += pick_w;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Loop application and the clustering design driver.
// ---------------------------------------------------------------------------

// Every real node moves to its successor's cluster; virtual hops turn the
// rotation into pure insertions/removals. Cluster sizes are conserved except
// across virtual seats.
inline ClusteringState apply_loop(const ClusteringState& cl, const Loop& lp) {
  const std::size_t K = lp.nodes.size();
  if (K < 2) throw std::invalid_argument("apply_loop: need at least two nodes");
  std::uint32_t seen = 0;
  for (int node : lp.nodes) {
    if (node < 0 || node >= cl.total_nodes())
      throw std::invalid_argument("apply_loop: node out of range");
    const std::uint32_t bit = std::uint32_t{1} << cl.node_cluster(node);
    if (seen & bit) throw std::invalid_argument("apply_loop: clusters repeat in loop");
    seen |= bit;
  }
  ClusteringState next = cl;
  for (std::size_t k = 0; k < K; ++k) {
    const int node = lp.nodes[k];
    if (cl.is_virtual(node)) continue;
    next.cluster_of[node] = cl.node_cluster(lp.nodes[(k + 1) % K]);
  }
  next.validate();
  return next;
}

enum class LoopDetector { ebfa, gsa };

struct ClusteringOptions {
  LoopDetector detector = LoopDetector::ebfa;
  double neg_tol = 1e-12;
  std::size_t label_cap = 100000;
  double gsa_alpha = 4.0;
  double qos_tol_bpcu = 1e-6;       // hypothetical states may undershoot by this
  bool persist_invalid_set = false; // deviation: keep rejected loops across rebuilds
  int max_applied = 10000;
};

struct ClusteringDesignResult {
  ClusteringState clustering;
  double asr_bpcu = 0.0;
  int loops_applied = 0;
  bool complete = true;
  std::vector<double> trace;  // ASR before and after every applied loop
};

// Repeats build -> detect -> QoS-check -> apply until no admissible negative
// loop remains. Rejected loops go into the invalid set S, which is cleared
// every time the graph is rebuilt (unless persisted). The caller's network
// state is refreshed to match the returned clustering.
inline ClusteringDesignResult clustering_design(const ClusteringState& start,
                                                const Eigen::MatrixXd& P, NetworkState& net,
                                                const SystemConfig& cfg, const RateParams& rp,
                                                const ClusteringOptions& opt = {}) {
  ClusteringDesignResult out;
  out.clustering = start;
  refresh_pilot_stats(net, out.clustering, cfg);
  out.asr_bpcu = asr(P, net, out.clustering, cfg, rp).bpcu;
  out.trace.push_back(out.asr_bpcu);

  const double req = cfg.min_rate_bpcu() - opt.qos_tol_bpcu;
  LoopSet invalid;
  DetectOptions dopt;
  dopt.neg_tol = opt.neg_tol;
  dopt.label_cap = opt.label_cap;
  dopt.gsa_alpha = opt.gsa_alpha;
  dopt.exclude = &invalid;

  while (out.loops_applied < opt.max_applied) {
    const WeightedDigraph gr = build_graph(out.clustering, P, net, cfg, rp);
    if (!opt.persist_invalid_set) invalid.clear();
    bool applied = false;
    while (true) {
      const DetectResult det = opt.detector == LoopDetector::ebfa
                                   ? detect_negative_loop_ebfa(gr, dopt)
                                   : detect_negative_loop_gsa(gr, dopt);
      out.complete = out.complete && det.complete;
      if (!det.loop) break;

      ClusteringState cand = apply_loop(out.clustering, *det.loop);
      NetworkState net2 = net;
      refresh_pilot_stats(net2, cand, cfg);
      bool qos_ok = true;
      for (int n = 0; n < cand.num_ues && qos_ok; ++n)
        qos_ok = lb_rate(n, P, net2, cand, cfg, rp) >= req;
      if (!qos_ok) {
        invalid.insert(loop_key(*det.loop));
        continue;
      }
      out.clustering = std::move(cand);
      net = std::move(net2);
      ++out.loops_applied;
      out.asr_bpcu = asr(P, net, out.clustering, cfg, rp).bpcu;
      out.trace.push_back(out.asr_bpcu);
      applied = true;
      break;
    }
    if (!applied) break;
  }
  return out;
}

// DOT dump of the finite part of the graph, for eyeballing with graphviz.
inline void write_dot(std::ostream& os, const WeightedDigraph& gr) {
  os << "digraph reassignment {\n";
  for (int v = 0; v < gr.total_nodes(); ++v) {
    if (gr.is_virtual(v))
      os << "  v" << v - gr.num_ues << " [shape=box,label=\"seat g" << gr.node_cluster[v]
         << "\"];\n";
    else
      os << "  u" << v << " [label=\"ue" << v << " g" << gr.node_cluster[v] << "\"];\n";
  }
  const auto name = [&](int v) {
    return gr.is_virtual(v) ? "v" + std::to_string(v - gr.num_ues) : "u" + std::to_string(v);
  };
  for (int i = 0; i < gr.total_nodes(); ++i)
    for (int j = 0; j < gr.total_nodes(); ++j)
      if (std::isfinite(gr.z(i, j))) {
        os << "  " << name(i) << " -> " << name(j) << " [label=\"";
        const auto flags = os.flags();
        os.precision(6);
        os << gr.z(i, j) << "\"];\n";
        os.flags(flags);
      }
  os << "}\n";
}

}  // namespace cfnoma
