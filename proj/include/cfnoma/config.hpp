#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "cfnoma/common.hpp"

namespace cfnoma {

// Downlink system description. Transmit powers are stored in dBm and
// converted to noise-normalized linear units (noise power = 1) on access,
// so every SINR expression can use an additive noise term of exactly 1.
struct SystemConfig {
  int num_aps = 120;           // M
  int num_ues = 40;            // N (real users; one virtual slot per cluster is implicit)
  int num_clusters = 20;       // G; also the pilot sequence length
  int antennas_per_ap = 12;    // L
  double area_side_m = 1000.0;
  double bandwidth_hz = 1.0e7;
  double noise_psd_dbm_hz = -174.0;
  double noise_figure_db = 9.0;
  double pilot_power_dbm = 20.0;
  double max_dl_power_dbm = 23.0;
  int coherence_blocklength = 200;  // tau_c, channel uses per coherence block
  double decode_error_prob = 1e-6;  // epsilon
  double min_rate_bps = 1.0e6;
  double sic_quality = 0.5;         // c in [0,1]; 1 = perfect interference cancellation
  double shadowing_sigma_db = 8.0;
  std::uint64_t seed = 1;

  double noise_power_dbm() const {
    return noise_psd_dbm_hz + 10.0 * std::log10(bandwidth_hz) + noise_figure_db;
  }
  // Noise-normalized linear powers.
  double pilot_power() const { return db_to_linear(pilot_power_dbm - noise_power_dbm()); }
  double max_dl_power() const { return db_to_linear(max_dl_power_dbm - noise_power_dbm()); }

  int tau_p() const { return num_clusters; }
  int tau_d() const { return coherence_blocklength - tau_p(); }
  double eta() const {
    return static_cast<double>(tau_d()) / static_cast<double>(coherence_blocklength);
  }
  double min_rate_bpcu() const { return min_rate_bps / bandwidth_hz; }

  void validate() const {
    if (num_aps < 1) throw ConfigError("num_aps must be >= 1");
    if (num_ues < 1) throw ConfigError("num_ues must be >= 1");
    if (num_clusters < 1) throw ConfigError("num_clusters must be >= 1");
    if (num_clusters > num_ues) throw ConfigError("num_clusters must not exceed num_ues");
    if (antennas_per_ap < 1) throw ConfigError("antennas_per_ap must be >= 1");
    if (area_side_m <= 0.0) throw ConfigError("area_side_m must be positive");
    if (bandwidth_hz <= 0.0) throw ConfigError("bandwidth_hz must be positive");
    if (coherence_blocklength <= num_clusters)
      throw ConfigError("coherence_blocklength must exceed the pilot length (num_clusters)");
    if (decode_error_prob <= 0.0 || decode_error_prob >= 0.5)
      throw ConfigError("decode_error_prob must lie in (0, 0.5)");
    if (min_rate_bps < 0.0) throw ConfigError("min_rate_bps must be nonnegative");
    if (sic_quality < 0.0 || sic_quality > 1.0) throw ConfigError("sic_quality must be in [0,1]");
    if (shadowing_sigma_db < 0.0) throw ConfigError("shadowing_sigma_db must be nonnegative");
  }
};

// Full-size setup used for the headline experiments.
inline SystemConfig paper_profile() { return SystemConfig{}; }

// Small setup sized for fast regression runs.
inline SystemConfig desk_profile() {
  SystemConfig cfg;
  cfg.num_aps = 20;
  cfg.num_ues = 8;
  cfg.num_clusters = 4;
  cfg.antennas_per_ap = 4;
  return cfg;
}

inline SystemConfig profile_by_name(const std::string& name) {
  if (name == "paper") return paper_profile();
  if (name == "desk") return desk_profile();
  throw ConfigError("unknown profile: " + name);
}

}  // namespace cfnoma
