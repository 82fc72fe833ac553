#include <catch2/catch_amalgamated.hpp>

#include "cfnoma/core_model.hpp"

#include <cmath>
#include <random>

using namespace cfnoma;

TEST_CASE("three-slope path loss matches frozen references") {
  // Independent recomputation: -140.7 dB at 1 km, 35 dB/decade far slope,
  // 20 dB/decade mid slope, constant inside 10 m.
  CHECK(linear_to_db(path_loss_three_slope(1000.0)) == Catch::Approx(-140.7).margin(1e-12));
  CHECK(linear_to_db(path_loss_three_slope(100.0)) == Catch::Approx(-105.7).margin(1e-12));
  CHECK(linear_to_db(path_loss_three_slope(50.0)) ==
        Catch::Approx(-95.1639501517606).margin(1e-10));
  CHECK(linear_to_db(path_loss_three_slope(30.0)) ==
        Catch::Approx(-90.7269751594335).margin(1e-10));
  CHECK(linear_to_db(path_loss_three_slope(10.0)) ==
        Catch::Approx(-81.1845500650403).margin(1e-10));
  CHECK(path_loss_three_slope(5.0) == path_loss_three_slope(10.0));
  CHECK(path_loss_three_slope(0.0) == path_loss_three_slope(10.0));
  CHECK(path_loss_three_slope(1000.0) == Catch::Approx(8.51138038202379e-15).epsilon(1e-12));
}

TEST_CASE("path loss is continuous at the slope breakpoints") {
  CHECK(linear_to_db(path_loss_three_slope(10.0001)) ==
        Catch::Approx(-81.1846369235024).margin(1e-9));
  CHECK(linear_to_db(path_loss_three_slope(50.0001)) ==
        Catch::Approx(-95.163980552344).margin(1e-9));
  CHECK(path_loss_three_slope(9.9999) == Catch::Approx(path_loss_three_slope(10.0001)).epsilon(1e-4));
  CHECK(path_loss_three_slope(49.9999) == Catch::Approx(path_loss_three_slope(50.0001)).epsilon(1e-4));
}

TEST_CASE("shadowing only affects the far slope") {
  CHECK(path_loss_three_slope(100.0, 8.0) ==
        Catch::Approx(db_to_linear(-105.7 + 8.0)).epsilon(1e-12));
  CHECK(path_loss_three_slope(30.0, 8.0) == path_loss_three_slope(30.0));
  CHECK(path_loss_three_slope(5.0, -13.0) == path_loss_three_slope(5.0));
  CHECK_THROWS_AS(path_loss_three_slope(-1.0), std::domain_error);
}

TEST_CASE("deployment generation is seed-deterministic and in bounds") {
  SystemConfig cfg = desk_profile();
  const NetworkState a = generate_deployment(cfg);
  const NetworkState b = generate_deployment(cfg);
  CHECK(a.ap_pos == b.ap_pos);
  CHECK(a.ue_pos == b.ue_pos);
  CHECK(a.beta == b.beta);

  cfg.seed = 2;
  const NetworkState c = generate_deployment(cfg);
  CHECK(a.ap_pos != c.ap_pos);

  CHECK(a.ap_pos.minCoeff() >= 0.0);
  CHECK(a.ap_pos.maxCoeff() <= cfg.area_side_m);
  CHECK(a.ue_pos.minCoeff() >= 0.0);
  CHECK(a.ue_pos.maxCoeff() <= cfg.area_side_m);
  CHECK(a.beta.minCoeff() > 0.0);
}

TEST_CASE("with zero shadowing, beta is exactly the distance path loss") {
  SystemConfig cfg = desk_profile();
  cfg.shadowing_sigma_db = 0.0;
  const NetworkState net = generate_deployment(cfg);
  for (int m = 0; m < cfg.num_aps; ++m)
    for (int n = 0; n < cfg.num_ues; ++n) {
      const double d = (net.ap_pos.row(m) - net.ue_pos.row(n)).norm();
      CHECK(net.beta(m, n) == path_loss_three_slope(d));
    }
}

namespace {

SystemConfig tiny_cfg() {
  SystemConfig cfg = desk_profile();
  cfg.num_aps = 2;
  cfg.num_ues = 3;
  cfg.num_clusters = 2;
  cfg.antennas_per_ap = 4;
  return cfg;
}

}  // namespace

TEST_CASE("pilot-contaminated channel estimate gain matches frozen instance") {
  const SystemConfig cfg = tiny_cfg();
  Eigen::MatrixXd beta(2, 3);
  beta << 1e-13, 2e-13, 5e-14, 4e-13, 1e-14, 3e-13;
  ClusteringState cl{3, 2, {0, 1, 0}};
  const Eigen::MatrixXd theta = pilot_gain_theta(beta, cl, cfg);

  CHECK(theta(0, 0) == Catch::Approx(5.7765442183014726e-15).epsilon(1e-14));
  CHECK(theta(0, 1) == Catch::Approx(2.2457541952588454e-14).epsilon(1e-14));
  CHECK(theta(0, 2) == Catch::Approx(1.4441360545753682e-15).epsilon(1e-14));
  CHECK(theta(1, 0) == Catch::Approx(7.0140404384811128e-14).epsilon(1e-14));
  CHECK(theta(1, 1) == Catch::Approx(6.2848067126052632e-17).epsilon(1e-14));
  CHECK(theta(1, 2) == Catch::Approx(3.9453977466456245e-14).epsilon(1e-14));

  // Estimation never amplifies: theta < beta entrywise.
  CHECK((theta.array() < beta.array()).all());
}

TEST_CASE("theta is invariant to channels outside the UE's cluster") {
  const SystemConfig cfg = tiny_cfg();
  Eigen::MatrixXd beta(2, 3);
  beta << 1e-13, 2e-13, 5e-14, 4e-13, 1e-14, 3e-13;
  ClusteringState cl{3, 2, {0, 1, 0}};
  const Eigen::MatrixXd theta = pilot_gain_theta(beta, cl, cfg);

  Eigen::MatrixXd beta2 = beta;
  beta2.col(1) *= 17.0;  // UE 1 is alone in cluster 1
  const Eigen::MatrixXd theta2 = pilot_gain_theta(beta2, cl, cfg);
  CHECK(theta2.col(0) == theta.col(0));
  CHECK(theta2.col(2) == theta.col(2));
  CHECK(theta2(0, 1) != theta(0, 1));

  // Moving UE 1 into cluster 0 contaminates both co-cluster estimates.
  ClusteringState merged{3, 2, {0, 0, 0}};
  const Eigen::MatrixXd theta3 = pilot_gain_theta(beta, merged, cfg);
  CHECK(theta3(0, 0) < theta(0, 0));
  CHECK(theta3(1, 2) < theta(1, 2));
}

TEST_CASE("effective gain ordering matches the frozen instance") {
  const SystemConfig cfg = tiny_cfg();
  Eigen::MatrixXd beta(2, 3);
  beta << 1e-13, 2e-13, 5e-14, 4e-13, 1e-14, 3e-13;
  ClusteringState cl{3, 2, {0, 1, 0}};
  const Eigen::MatrixXd theta = pilot_gain_theta(beta, cl, cfg);
  const GainOrder go = effective_gain_order(theta, cfg.antennas_per_ap);

  CHECK(go.omega[0] == Catch::Approx(2.1624610155885153e-12).epsilon(1e-13));
  CHECK(go.omega[1] == Catch::Approx(4.8842473107814935e-13).epsilon(1e-13));
  CHECK(go.omega[2] == Catch::Approx(1.0595080367429812e-12).epsilon(1e-13));
  CHECK(go.order == std::vector<int>{0, 2, 1});
  CHECK(go.rank_of == std::vector<int>{0, 2, 1});
}

TEST_CASE("ordering breaks omega ties by ascending UE index") {
  Eigen::MatrixXd theta(1, 4);
  theta << 2.0, 5.0, 2.0, 5.0;
  const GainOrder go = effective_gain_order(theta, 3);
  CHECK(go.order == std::vector<int>{1, 3, 0, 2});
  CHECK(go.rank_of == std::vector<int>{2, 0, 3, 1});
}

TEST_CASE("omega closed form matches a Monte Carlo estimate") {
  // omega_n = E{ (sum_m ||h_mn||^2 / sqrt(theta_mn))^2 } with
  // h_mn ~ CN(0, theta_mn I_L); per AP the squared norm is theta/2 * chi^2_{2L}.
  const int L = 4;
  const double th[2] = {0.6, 2.3};
  Eigen::MatrixXd theta(2, 1);
  theta << th[0], th[1];
  const GainOrder go = effective_gain_order(theta, L);

  std::mt19937_64 gen(12345);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int trials = 400000;
  double acc = 0.0;
  for (int t = 0; t < trials; ++t) {
    double s = 0.0;
    for (double thm : th) {
      double chi2 = 0.0;
      for (int i = 0; i < 2 * L; ++i) {
        const double x = gauss(gen) * std::sqrt(thm / 2.0);
        chi2 += x * x;
      }
      s += chi2 / std::sqrt(thm);
    }
    acc += s * s;
  }
  const double mc = acc / trials;
  CHECK(go.omega[0] == Catch::Approx(mc).epsilon(0.01));
}

TEST_CASE("refresh_pilot_stats populates a consistent network state") {
  SystemConfig cfg = desk_profile();
  NetworkState net = generate_deployment(cfg);
  ClusteringState cl{cfg.num_ues, cfg.num_clusters, {0, 1, 2, 3, 0, 1, 2, 3}};
  refresh_pilot_stats(net, cl, cfg);

  REQUIRE(net.theta.rows() == cfg.num_aps);
  REQUIRE(net.theta.cols() == cfg.num_ues);
  REQUIRE(static_cast<int>(net.order.size()) == cfg.num_ues);
  for (int k = 0; k < cfg.num_ues; ++k) CHECK(net.rank_of[net.order[k]] == k);
  for (int k = 0; k + 1 < cfg.num_ues; ++k)
    CHECK(net.omega[net.order[k]] >= net.omega[net.order[k + 1]]);
  CHECK(net.theta == pilot_gain_theta(net.beta, cl, cfg));
}

TEST_CASE("clustering state helpers") {
  ClusteringState cl{5, 2, {0, 1, 0, 1, 0}};
  CHECK(cl.total_nodes() == 7);
  CHECK_FALSE(cl.is_virtual(4));
  CHECK(cl.is_virtual(5));
  CHECK(cl.node_cluster(5) == 0);
  CHECK(cl.node_cluster(6) == 1);
  CHECK(cl.node_cluster(3) == 1);
  CHECK(cl.members() == std::vector<std::vector<int>>{{0, 2, 4}, {1, 3}});
  CHECK_NOTHROW(cl.validate());
  cl.cluster_of[0] = 2;
  CHECK_THROWS(cl.validate());
}
