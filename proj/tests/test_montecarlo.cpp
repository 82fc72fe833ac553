#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>

#include "cfnoma/alt_opt.hpp"
#include "cfnoma/montecarlo.hpp"

using namespace cfnoma;
using Catch::Approx;

namespace {

struct Fixture {
  SystemConfig cfg;
  NetworkState net;
  ClusteringState cl;
  Eigen::MatrixXd P;

  explicit Fixture(std::uint64_t seed, int M = 20, int N = 8, int G = 4, int L = 4) {
    cfg = desk_profile();
    cfg.num_aps = M;
    cfg.num_ues = N;
    cfg.num_clusters = G;
    cfg.antennas_per_ap = L;
    cfg.seed = seed;
    cfg.validate();
    net = generate_deployment(cfg);
    cl.num_ues = N;
    cl.num_clusters = G;
    cl.cluster_of.resize(N);
    for (int n = 0; n < N; ++n) cl.cluster_of[n] = n % G;
    cl.validate();
    refresh_pilot_stats(net, cl, cfg);
    P = initial_power(net, cfg);
  }
};

}  // namespace

TEST_CASE("co-cluster UEs share the estimate direction exactly") {
  Fixture fx(7);
  Substreams sub(fx.cfg.seed);
  auto rng = sub.stream("mc", 0);
  const ChannelRealization cr = draw_channels(fx.net, fx.cl, fx.cfg, rng);

  const int ML = fx.cfg.num_aps * fx.cfg.antennas_per_ap;
  REQUIRE(cr.nu.rows() == ML);
  REQUIRE(cr.hhat.cols() == fx.cfg.num_ues);
  for (int n : {0, 4, 3, 7}) {  // round-robin: 0,4 share cluster 0; 3,7 share cluster 3
    const int g = fx.cl.cluster_of[n];
    for (int m : {0, 5, 19}) {
      for (int l = 0; l < fx.cfg.antennas_per_ap; ++l) {
        const int i = m * fx.cfg.antennas_per_ap + l;
        const std::complex<double> want = std::sqrt(fx.net.theta(m, n)) * cr.nu(i, g);
        CHECK(std::abs(cr.hhat(i, n) - want) < 1e-15);
      }
    }
  }
}

TEST_CASE("sample moments match the estimate statistics", "[slow]") {
  Fixture fx(11);
  const int M = fx.cfg.num_aps, L = fx.cfg.antennas_per_ap, N = fx.cfg.num_ues;
  const int trials = 100000;

  Eigen::MatrixXd est_pow = Eigen::MatrixXd::Zero(M, N);  // sum |hhat|^2
  Eigen::MatrixXd err_pow = Eigen::MatrixXd::Zero(M, N);  // sum |h - hhat|^2
  Eigen::VectorXd omega_hat = Eigen::VectorXd::Zero(N);   // sum |sum_m nu^H hhat|^2

  Substreams sub(fx.cfg.seed);
  for (int t = 0; t < trials; ++t) {
    auto rng = sub.stream("mc", static_cast<std::uint64_t>(t));
    const ChannelRealization cr = draw_channels(fx.net, fx.cl, fx.cfg, rng);
    for (int n = 0; n < N; ++n) {
      const int g = fx.cl.cluster_of[n];
      std::complex<double> q = 0.0;
      for (int m = 0; m < M; ++m) {
        est_pow(m, n) += cr.hhat.col(n).segment(m * L, L).squaredNorm();
        err_pow(m, n) +=
            (cr.h.col(n) - cr.hhat.col(n)).segment(m * L, L).squaredNorm();
        q += cr.nu.col(g).segment(m * L, L).dot(cr.hhat.col(n).segment(m * L, L));
      }
      omega_hat[n] += std::norm(q);
    }
  }

  const double samples = static_cast<double>(trials) * L;
  for (int n = 0; n < N; ++n) {
    for (int m = 0; m < M; ++m) {
      const double var_est = est_pow(m, n) / samples;
      const double var_err = err_pow(m, n) / samples;
      CHECK(var_est == Approx(fx.net.theta(m, n)).epsilon(0.02));
      CHECK(var_err == Approx(fx.net.beta(m, n) - fx.net.theta(m, n)).epsilon(0.02));
    }
    const double l = static_cast<double>(L);
    const Eigen::ArrayXd th = fx.net.theta.col(n).array();
    const double omega = l * l * std::pow(th.sqrt().sum(), 2) + l * th.sum();
    CHECK(omega_hat[n] / trials == Approx(omega).epsilon(0.02));
  }
}

TEST_CASE("single-link SINR matches a by-hand expansion") {
  SystemConfig cfg = desk_profile();
  cfg.num_aps = 1;
  cfg.num_ues = 1;
  cfg.num_clusters = 1;
  cfg.antennas_per_ap = 1;
  cfg.seed = 3;
  cfg.validate();

  NetworkState net;
  net.beta.resize(1, 1);
  net.beta << 2.0e-12;
  ClusteringState cl;
  cl.num_ues = 1;
  cl.num_clusters = 1;
  cl.cluster_of = {0};
  refresh_pilot_stats(net, cl, cfg);
  REQUIRE(net.theta(0, 0) > 0.0);
  REQUIRE(net.theta(0, 0) < net.beta(0, 0));

  Eigen::MatrixXd P(1, 1);
  P << 0.4 * cfg.max_dl_power();

  Substreams sub(cfg.seed);
  for (int t = 0; t < 64; ++t) {
    auto rng = sub.stream("mc", static_cast<std::uint64_t>(t));
    const ChannelRealization cr = draw_channels(net, cl, cfg, rng);
    // L = 1: the receive coefficient is a = sqrt(p) * conj(h) * nu, mean
    // b = sqrt(p * theta), and the only interference is self-deviation.
    const std::complex<double> a = std::sqrt(P(0, 0)) * std::conj(cr.h(0, 0)) * cr.nu(0, 0);
    const double b = std::sqrt(P(0, 0) * net.theta(0, 0));
    const double want = b * b / (std::norm(a - b) + 1.0);
    CHECK(instantaneous_sinr(cr, P, net, cl, cfg, 0, 0) == Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("inverse-mean of pairwise SINR reproduces the closed form", "[slow]") {
  auto run = [](double sic, std::uint64_t seed) {
    Fixture fx(seed, 4, 2, 1, 2);  // one cluster of two UEs
    fx.cfg.sic_quality = sic;
    const int trials = 100000;
    Substreams sub(fx.cfg.seed);

    // every decodable (stream, observer) pair
    std::vector<std::pair<int, int>> pairs;
    for (int n = 0; n < 2; ++n)
      for (int u = 0; u < 2; ++u)
        if (fx.net.rank_of[u] <= fx.net.rank_of[n]) pairs.emplace_back(n, u);
    REQUIRE(pairs.size() == 3);

    std::vector<double> inv_sum(pairs.size(), 0.0);
    for (int t = 0; t < trials; ++t) {
      auto rng = sub.stream("mc", static_cast<std::uint64_t>(t));
      const ChannelRealization cr = draw_channels(fx.net, fx.cl, fx.cfg, rng);
      for (std::size_t k = 0; k < pairs.size(); ++k)
        inv_sum[k] +=
            1.0 / instantaneous_sinr(cr, fx.P, fx.net, fx.cl, fx.cfg, pairs[k].first,
                                     pairs[k].second);
    }
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      const double harmonic = trials / inv_sum[k];
      const double closed =
          pairwise_sinr_lb(pairs[k].first, pairs[k].second, fx.P, fx.net, fx.cl, fx.cfg);
      CHECK(harmonic == Approx(closed).epsilon(0.05));
    }
  };
  run(0.5, 13);
  run(1.0, 17);  // perfect SIC: the coherent residual term is absent
}

TEST_CASE("closed-form rate tracks simulation at a desk operating point", "[slow]") {
  Fixture fx(21);
  ClusteringState cl = gale_shapley_clustering(fx.net, fx.cfg);
  refresh_pilot_stats(fx.net, cl, fx.cfg);
  const RateParams rp = make_rate_params(fx.cfg);
  const auto feas = feasibility_phase(initial_power(fx.net, fx.cfg), fx.net, cl, fx.cfg, rp);
  REQUIRE(feas.feasible);

  const auto emp = empirical_ergodic_rate(feas.P, fx.net, cl, fx.cfg, rp, 4000);

  // The guarantee splits on the observer count. With one decodable observer
  // the closed form is an inverse-moment (harmonic-mean) bound, so it must
  // sit below the sample mean. With several observers it takes the min over
  // per-pair harmonic means, while the simulation averages the per-trial
  // min; min-outside-the-average can overshoot by a small margin.
  const auto mem = cl.members();
  double gap_sum = 0.0;
  for (int n = 0; n < fx.cfg.num_ues; ++n) {
    int obs = 0;
    for (int u : mem[cl.cluster_of[n]])
      if (fx.net.rank_of[u] <= fx.net.rank_of[n]) ++obs;
    const double lb = lb_rate(n, feas.P, fx.net, cl, fx.cfg, rp);
    if (obs == 1)
      CHECK(lb <= emp.mean_bpcu[n] + 3.0 * emp.ci95_bpcu[n]);
    else
      CHECK(lb <= 1.05 * emp.mean_bpcu[n] + 3.0 * emp.ci95_bpcu[n]);
    gap_sum += (emp.mean_bpcu[n] - lb) / emp.mean_bpcu[n];
  }
  // Measured here: mean relative gap ~13%; the cap documents its scale.
  const double mean_gap = gap_sum / fx.cfg.num_ues;
  CHECK(mean_gap >= 0.0);
  CHECK(mean_gap <= 0.25);
}

TEST_CASE("confidence interval shrinks like one over sqrt trials") {
  Fixture fx(31);
  const RateParams rp = make_rate_params(fx.cfg);
  const auto a = empirical_ergodic_rate(fx.P, fx.net, fx.cl, fx.cfg, rp, 2000);
  const auto b = empirical_ergodic_rate(fx.P, fx.net, fx.cl, fx.cfg, rp, 4000);
  const double ratio = b.ci95_bpcu.sum() / a.ci95_bpcu.sum();
  CHECK(ratio > 0.60);
  CHECK(ratio < 0.82);
}

TEST_CASE("removing the dispersion penalty raises every empirical rate") {
  Fixture fx(37);
  const RateParams strict = make_rate_params(fx.cfg);
  SystemConfig relaxed_cfg = fx.cfg;
  relaxed_cfg.decode_error_prob = 0.5;  // Q^-1 = 0: pure Shannon term
  const RateParams relaxed = make_rate_params(relaxed_cfg);
  REQUIRE(relaxed.qinv == Approx(0.0).margin(1e-12));

  const auto rs = empirical_ergodic_rate(fx.P, fx.net, fx.cl, fx.cfg, strict, 1500);
  const auto rr = empirical_ergodic_rate(fx.P, fx.net, fx.cl, fx.cfg, relaxed, 1500);
  for (int n = 0; n < fx.cfg.num_ues; ++n) CHECK(rr.mean_bpcu[n] > rs.mean_bpcu[n]);
}

TEST_CASE("empirical estimate is deterministic in the seed") {
  Fixture fx(41);
  const RateParams rp = make_rate_params(fx.cfg);
  const auto a = empirical_ergodic_rate(fx.P, fx.net, fx.cl, fx.cfg, rp, 500);
  const auto b = empirical_ergodic_rate(fx.P, fx.net, fx.cl, fx.cfg, rp, 500);
  REQUIRE(a.mean_bpcu == b.mean_bpcu);
  REQUIRE(a.ci95_bpcu == b.ci95_bpcu);
}

TEST_CASE("empirical rate rejects nonpositive trial counts") {
  Fixture fx(43);
  const RateParams rp = make_rate_params(fx.cfg);
  CHECK_THROWS_AS(empirical_ergodic_rate(fx.P, fx.net, fx.cl, fx.cfg, rp, 0),
                  std::invalid_argument);
}
