#pragma once

#include <algorithm>
#include <atomic>
#include <cinttypes>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "cfnoma/alt_opt.hpp"
#include "cfnoma/montecarlo.hpp"

namespace cfnoma {

// ---------------------------------------------------------------------------
// Config text: INI-style sections of key = value lines.
// ---------------------------------------------------------------------------

// Parsed as "section.key" -> raw value string; later duplicates win.
// '#' and ';' start comments; blank lines are skipped.
struct ConfigText {
  std::map<std::string, std::string> kv;

  bool has(const std::string& key) const { return kv.count(key) > 0; }
  const std::string& at(const std::string& key) const { return kv.at(key); }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline double parse_double(const std::string& key, const std::string& raw) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(raw, &pos);
  } catch (const std::exception&) {
    throw ConfigError("bad numeric value for " + key + ": '" + raw + "'");
  }
  if (pos != raw.size()) throw ConfigError("trailing junk in value for " + key + ": '" + raw + "'");
  return v;
}

inline std::int64_t parse_int(const std::string& key, const std::string& raw) {
  std::size_t pos = 0;
  std::int64_t v = 0;
  try {
    v = std::stoll(raw, &pos, 10);
  } catch (const std::exception&) {
    throw ConfigError("bad integer value for " + key + ": '" + raw + "'");
  }
  if (pos != raw.size()) throw ConfigError("trailing junk in value for " + key + ": '" + raw + "'");
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& raw) {
  if (raw == "1" || raw == "true" || raw == "yes" || raw == "on") return true;
  if (raw == "0" || raw == "false" || raw == "no" || raw == "off") return false;
  throw ConfigError("bad boolean value for " + key + ": '" + raw + "'");
}

inline std::vector<std::string> split_list(const std::string& raw) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(raw);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace detail

inline ConfigText parse_config_text(std::istream& in) {
  ConfigText ct;
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("line " + std::to_string(lineno) + ": unterminated section header");
      section = detail::trim(line.substr(1, line.size() - 2));
      if (section.empty())
        throw ConfigError("line " + std::to_string(lineno) + ": empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string val = detail::trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    ct.kv[section.empty() ? key : section + "." + key] = val;
  }
  return ct;
}

inline ConfigText parse_config_text(const std::string& text) {
  std::istringstream in(text);
  return parse_config_text(in);
}

inline ConfigText load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  return parse_config_text(in);
}

// ---------------------------------------------------------------------------
// Experiment description and config application.
// ---------------------------------------------------------------------------

enum class SweepVar { num_ues, num_aps, antennas_per_ap, max_dl_power, min_rate_req };

inline const char* to_string(SweepVar v) {
  switch (v) {
    case SweepVar::num_ues: return "num_ues";
    case SweepVar::num_aps: return "num_aps";
    case SweepVar::antennas_per_ap: return "antennas_per_ap";
    case SweepVar::max_dl_power: return "max_dl_power";
    case SweepVar::min_rate_req: return "min_rate_req";
  }
  return "?";
}

inline SweepVar parse_sweep_var(const std::string& s) {
  if (s == "num_ues") return SweepVar::num_ues;
  if (s == "num_aps") return SweepVar::num_aps;
  if (s == "antennas_per_ap") return SweepVar::antennas_per_ap;
  if (s == "max_dl_power") return SweepVar::max_dl_power;
  if (s == "min_rate_req") return SweepVar::min_rate_req;
  throw ConfigError("unknown sweep variable: " + s);
}

// Run-wide knobs that are not part of the physical system description.
struct RunOptions {
  OptimizeOptions opt;
  std::uint64_t trials = 10000;   // Monte-Carlo trials for validate-lb
  bool record_walltime = false;   // keep wall_ms columns at 0 unless asked
  int jobs = 1;
};

struct ExperimentSpec {
  std::string scenario = "sweep";
  SystemConfig base;
  RunOptions run;
  SweepVar sweep_var = SweepVar::num_ues;
  std::vector<double> values;
  std::vector<Algorithm> algorithms;
  std::vector<std::uint64_t> seeds;
  std::string out_path;

  void validate() const {
    if (values.empty()) throw ConfigError("sweep values must be nonempty");
    if (!std::is_sorted(values.begin(), values.end()))
      throw ConfigError("sweep values must be sorted ascending");
    if (algorithms.empty()) throw ConfigError("algorithm list must be nonempty");
    if (seeds.empty()) throw ConfigError("seed list must be nonempty");
    if (out_path.empty()) throw ConfigError("output path must be set");
  }
};

// Sweeping the UE count rescales the cluster count to the N/2 default so
// cluster sizes stay comparable across the axis.
inline SystemConfig apply_sweep_value(SystemConfig cfg, SweepVar var, double value) {
  switch (var) {
    case SweepVar::num_ues:
      cfg.num_ues = static_cast<int>(value);
      cfg.num_clusters = std::max(1, cfg.num_ues / 2);
      break;
    case SweepVar::num_aps: cfg.num_aps = static_cast<int>(value); break;
    case SweepVar::antennas_per_ap: cfg.antennas_per_ap = static_cast<int>(value); break;
    case SweepVar::max_dl_power: cfg.max_dl_power_dbm = value; break;  // dBm
    case SweepVar::min_rate_req: cfg.min_rate_bps = value; break;      // bit/s
  }
  cfg.validate();
  return cfg;
}

// Applies "[section] key = value" pairs onto the base config and options.
// Unknown keys are errors so typos cannot silently fall back to defaults.
// When [system] sets num_ues without num_clusters, the cluster count follows
// the N/2 default.
inline void apply_config(const ConfigText& ct, SystemConfig& cfg, RunOptions& run,
                         ExperimentSpec* spec = nullptr) {
  using detail::parse_bool;
  using detail::parse_double;
  using detail::parse_int;
  bool saw_num_ues = false, saw_num_clusters = false;
  for (const auto& [key, raw] : ct.kv) {
    if (key == "system.num_aps") cfg.num_aps = static_cast<int>(parse_int(key, raw));
    else if (key == "system.num_ues") { cfg.num_ues = static_cast<int>(parse_int(key, raw)); saw_num_ues = true; }
    else if (key == "system.num_clusters") { cfg.num_clusters = static_cast<int>(parse_int(key, raw)); saw_num_clusters = true; }
    else if (key == "system.antennas_per_ap") cfg.antennas_per_ap = static_cast<int>(parse_int(key, raw));
    else if (key == "system.area_side_m") cfg.area_side_m = parse_double(key, raw);
    else if (key == "system.bandwidth_hz") cfg.bandwidth_hz = parse_double(key, raw);
    else if (key == "system.noise_psd_dbm_hz") cfg.noise_psd_dbm_hz = parse_double(key, raw);
    else if (key == "system.noise_figure_db") cfg.noise_figure_db = parse_double(key, raw);
    else if (key == "system.pilot_power_dbm") cfg.pilot_power_dbm = parse_double(key, raw);
    else if (key == "system.max_dl_power_dbm") cfg.max_dl_power_dbm = parse_double(key, raw);
    else if (key == "system.coherence_blocklength") cfg.coherence_blocklength = static_cast<int>(parse_int(key, raw));
    else if (key == "system.decode_error_prob") cfg.decode_error_prob = parse_double(key, raw);
    else if (key == "system.min_rate_bps") cfg.min_rate_bps = parse_double(key, raw);
    else if (key == "system.sic_quality") cfg.sic_quality = parse_double(key, raw);
    else if (key == "system.shadowing_sigma_db") cfg.shadowing_sigma_db = parse_double(key, raw);
    else if (key == "system.seed") cfg.seed = static_cast<std::uint64_t>(parse_int(key, raw));
    else if (key == "spa.max_iters") run.opt.spa.max_iters = static_cast<int>(parse_int(key, raw));
    else if (key == "spa.tol_bpcu") run.opt.spa.tol_bpcu = parse_double(key, raw);
    else if (key == "spa.gp_tol") run.opt.spa.gp_tol = parse_double(key, raw);
    else if (key == "spa.gp_max_newton") run.opt.spa.gp_max_newton = static_cast<int>(parse_int(key, raw));
    else if (key == "spa.warm_start") run.opt.spa.warm_start = parse_bool(key, raw);
    else if (key == "clustering.detector") run.opt.detector = raw == "ebfa" ? LoopDetector::ebfa
                                              : raw == "gsa" ? LoopDetector::gsa
                                              : throw ConfigError("unknown detector: " + raw);
    else if (key == "clustering.gsa_alpha") run.opt.clustering.gsa_alpha = parse_double(key, raw);
    else if (key == "clustering.neg_tol") run.opt.clustering.neg_tol = parse_double(key, raw);
    else if (key == "clustering.qos_tol_bpcu") run.opt.clustering.qos_tol_bpcu = parse_double(key, raw);
    else if (key == "clustering.label_cap") run.opt.clustering.label_cap = static_cast<std::size_t>(parse_int(key, raw));
    else if (key == "clustering.max_applied") run.opt.clustering.max_applied = static_cast<int>(parse_int(key, raw));
    else if (key == "clustering.persist_invalid_set") run.opt.clustering.persist_invalid_set = parse_bool(key, raw);
    else if (key == "outer.xi_bpcu") run.opt.xi_bpcu = parse_double(key, raw);
    else if (key == "outer.max_outer") run.opt.max_outer = static_cast<int>(parse_int(key, raw));
    else if (key == "outer.feas_max_iters") run.opt.feas_max_iters = static_cast<int>(parse_int(key, raw));
    else if (key == "outer.random_start") run.opt.random_start = parse_bool(key, raw);
    else if (key == "run.trials") run.trials = static_cast<std::uint64_t>(parse_int(key, raw));
    else if (key == "run.record_walltime") run.record_walltime = parse_bool(key, raw);
    else if (key == "run.jobs") run.jobs = static_cast<int>(parse_int(key, raw));
    else if (key == "experiment.scenario") { if (spec) spec->scenario = raw; }
    else if (key == "experiment.sweep_var") { if (spec) spec->sweep_var = parse_sweep_var(raw); }
    else if (key == "experiment.values") {
      if (spec) {
        spec->values.clear();
        for (const auto& item : detail::split_list(raw)) spec->values.push_back(parse_double(key, item));
      }
    } else if (key == "experiment.algorithms") {
      if (spec) {
        spec->algorithms.clear();
        for (const auto& item : detail::split_list(raw)) spec->algorithms.push_back(parse_algorithm(item));
      }
    } else if (key == "experiment.seeds") {
      if (spec) {
        spec->seeds.clear();
        for (const auto& item : detail::split_list(raw))
          spec->seeds.push_back(static_cast<std::uint64_t>(parse_int(key, item)));
      }
    } else if (key == "experiment.out") { if (spec) spec->out_path = raw; }
    else throw ConfigError("unknown config key: " + key);
  }
  if (saw_num_ues && !saw_num_clusters) cfg.num_clusters = std::max(1, cfg.num_ues / 2);
  cfg.validate();
}

// ---------------------------------------------------------------------------
// Deterministic serialization (CSV cells and the .meta sidecar).
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fmt(double v, const char* spec = "%.9g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

inline std::string fmt_u64(std::uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%" PRIu64, v);
  return buf;
}

template <class T, class F>
std::string join(const std::vector<T>& xs, F to_str) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    out += to_str(xs[i]);
  }
  return out;
}

// Runs fn(0..n-1) across up to `jobs` threads; the first exception wins and
// is rethrown after all workers join.
inline void parallel_tasks(int n, int jobs, const std::function<void(int)>& fn) {
  jobs = std::clamp(jobs, 1, std::max(1, n));
  if (jobs == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr err;
  std::mutex err_mu;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(jobs));
  for (int w = 0; w < jobs; ++w)
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mu);
          if (!err) err = std::current_exception();
          return;
        }
      }
    });
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace detail

// Full resolved configuration in the same format load_config_file accepts,
// so a .meta sidecar can replay its run verbatim.
inline std::string resolved_config_text(const SystemConfig& cfg, const RunOptions& run,
                                        const ExperimentSpec* spec = nullptr) {
  using detail::fmt;
  using detail::fmt_u64;
  std::string s;
  s += "[system]\n";
  s += "num_aps = " + std::to_string(cfg.num_aps) + "\n";
  s += "num_ues = " + std::to_string(cfg.num_ues) + "\n";
  s += "num_clusters = " + std::to_string(cfg.num_clusters) + "\n";
  s += "antennas_per_ap = " + std::to_string(cfg.antennas_per_ap) + "\n";
  s += "area_side_m = " + fmt(cfg.area_side_m, "%.17g") + "\n";
  s += "bandwidth_hz = " + fmt(cfg.bandwidth_hz, "%.17g") + "\n";
  s += "noise_psd_dbm_hz = " + fmt(cfg.noise_psd_dbm_hz, "%.17g") + "\n";
  s += "noise_figure_db = " + fmt(cfg.noise_figure_db, "%.17g") + "\n";
  s += "pilot_power_dbm = " + fmt(cfg.pilot_power_dbm, "%.17g") + "\n";
  s += "max_dl_power_dbm = " + fmt(cfg.max_dl_power_dbm, "%.17g") + "\n";
  s += "coherence_blocklength = " + std::to_string(cfg.coherence_blocklength) + "\n";
  s += "decode_error_prob = " + fmt(cfg.decode_error_prob, "%.17g") + "\n";
  s += "min_rate_bps = " + fmt(cfg.min_rate_bps, "%.17g") + "\n";
  s += "sic_quality = " + fmt(cfg.sic_quality, "%.17g") + "\n";
  s += "shadowing_sigma_db = " + fmt(cfg.shadowing_sigma_db, "%.17g") + "\n";
  s += "seed = " + fmt_u64(cfg.seed) + "\n";
  s += "\n[spa]\n";
  s += "max_iters = " + std::to_string(run.opt.spa.max_iters) + "\n";
  s += "tol_bpcu = " + fmt(run.opt.spa.tol_bpcu, "%.17g") + "\n";
  s += "gp_tol = " + fmt(run.opt.spa.gp_tol, "%.17g") + "\n";
  s += "gp_max_newton = " + std::to_string(run.opt.spa.gp_max_newton) + "\n";
  s += "warm_start = " + std::string(run.opt.spa.warm_start ? "1" : "0") + "\n";
  s += "\n[clustering]\n";
  s += "detector = " + std::string(run.opt.detector == LoopDetector::ebfa ? "ebfa" : "gsa") + "\n";
  s += "gsa_alpha = " + fmt(run.opt.clustering.gsa_alpha, "%.17g") + "\n";
  s += "neg_tol = " + fmt(run.opt.clustering.neg_tol, "%.17g") + "\n";
  s += "qos_tol_bpcu = " + fmt(run.opt.clustering.qos_tol_bpcu, "%.17g") + "\n";
  s += "label_cap = " + std::to_string(run.opt.clustering.label_cap) + "\n";
  s += "max_applied = " + std::to_string(run.opt.clustering.max_applied) + "\n";
  s += "persist_invalid_set = " + std::string(run.opt.clustering.persist_invalid_set ? "1" : "0") + "\n";
  s += "\n[outer]\n";
  s += "xi_bpcu = " + fmt(run.opt.xi_bpcu, "%.17g") + "\n";
  s += "max_outer = " + std::to_string(run.opt.max_outer) + "\n";
  s += "feas_max_iters = " + std::to_string(run.opt.feas_max_iters) + "\n";
  s += "random_start = " + std::string(run.opt.random_start ? "1" : "0") + "\n";
  s += "\n[run]\n";
  s += "trials = " + fmt_u64(run.trials) + "\n";
  s += "record_walltime = " + std::string(run.record_walltime ? "1" : "0") + "\n";
  s += "jobs = " + std::to_string(run.jobs) + "\n";
  if (spec) {
    s += "\n[experiment]\n";
    s += "scenario = " + spec->scenario + "\n";
    s += "sweep_var = " + std::string(to_string(spec->sweep_var)) + "\n";
    s += "values = " + detail::join(spec->values, [](double v) { return detail::fmt(v, "%.17g"); }) + "\n";
    s += "algorithms = " +
         detail::join(spec->algorithms, [](Algorithm a) { return std::string(to_string(a)); }) + "\n";
    s += "seeds = " + detail::join(spec->seeds, [](std::uint64_t v) { return detail::fmt_u64(v); }) + "\n";
    s += "out = " + spec->out_path + "\n";
  }
  return s;
}

// ---------------------------------------------------------------------------
// Sweep runner.
// ---------------------------------------------------------------------------

inline constexpr const char* kSweepCsvHeader =
    "sweep_var,value,algorithm,seed,asr_bps,asr_norm,iters,wall_ms,feasible";

struct SweepCell {
  double asr_bps = 0.0;
  double asr_norm = 0.0;
  int iters = 0;
  double wall_ms = 0.0;
  bool feasible = false;
};

// One row per (value, algorithm, seed) in spec order, each group followed by
// a mean row and (when seeds >= 2) a sample-std row keyed in the seed column.
inline std::string run_sweep_to_string(const ExperimentSpec& spec) {
  spec.validate();
  const int nv = static_cast<int>(spec.values.size());
  const int na = static_cast<int>(spec.algorithms.size());
  const int ns = static_cast<int>(spec.seeds.size());
  const int n_tasks = nv * na * ns;
  std::vector<SweepCell> cells(static_cast<std::size_t>(n_tasks));

  detail::parallel_tasks(n_tasks, spec.run.jobs, [&](int idx) {
    const int vi = idx / (na * ns);
    const int ai = (idx / ns) % na;
    const int si = idx % ns;
    SystemConfig cfg = apply_sweep_value(spec.base, spec.sweep_var, spec.values[vi]);
    cfg.seed = spec.seeds[si];
    const NetworkState net = generate_deployment(cfg);
    const RateParams rp = make_rate_params(cfg);
    const OptimizationResult res =
        run_algorithm(spec.algorithms[ai], net, cfg, rp, spec.run.opt);
    SweepCell& c = cells[static_cast<std::size_t>(idx)];
    c.asr_bps = res.asr_bps;
    c.asr_norm = res.asr_bpcu;
    c.iters = res.outer_iters;
    c.wall_ms = spec.run.record_walltime ? res.wall_ms : 0.0;
    c.feasible = res.feasible;
  });

  std::string csv = std::string(kSweepCsvHeader) + "\n";
  using detail::fmt;
  for (int vi = 0; vi < nv; ++vi)
    for (int ai = 0; ai < na; ++ai) {
      const std::string prefix = std::string(to_string(spec.sweep_var)) + "," +
                                 fmt(spec.values[vi]) + "," + to_string(spec.algorithms[ai]) + ",";
      double m_bps = 0, m_norm = 0, m_iters = 0, m_wall = 0, m_feas = 0;
      for (int si = 0; si < ns; ++si) {
        const SweepCell& c = cells[static_cast<std::size_t>((vi * na + ai) * ns + si)];
        csv += prefix + detail::fmt_u64(spec.seeds[si]) + "," + fmt(c.asr_bps) + "," +
               fmt(c.asr_norm) + "," + std::to_string(c.iters) + "," + fmt(c.wall_ms) + "," +
               (c.feasible ? "1" : "0") + "\n";
        m_bps += c.asr_bps;
        m_norm += c.asr_norm;
        m_iters += c.iters;
        m_wall += c.wall_ms;
        m_feas += c.feasible ? 1.0 : 0.0;
      }
      m_bps /= ns; m_norm /= ns; m_iters /= ns; m_wall /= ns; m_feas /= ns;
      csv += prefix + "mean," + fmt(m_bps) + "," + fmt(m_norm) + "," + fmt(m_iters) + "," +
             fmt(m_wall) + "," + fmt(m_feas) + "\n";
      if (ns >= 2) {
        double s_bps = 0, s_norm = 0, s_iters = 0, s_wall = 0, s_feas = 0;
        for (int si = 0; si < ns; ++si) {
          const SweepCell& c = cells[static_cast<std::size_t>((vi * na + ai) * ns + si)];
          s_bps += (c.asr_bps - m_bps) * (c.asr_bps - m_bps);
          s_norm += (c.asr_norm - m_norm) * (c.asr_norm - m_norm);
          s_iters += (c.iters - m_iters) * (c.iters - m_iters);
          s_wall += (c.wall_ms - m_wall) * (c.wall_ms - m_wall);
          const double f = (c.feasible ? 1.0 : 0.0) - m_feas;
          s_feas += f * f;
        }
        const double inv = 1.0 / (ns - 1);
        csv += prefix + "std," + fmt(std::sqrt(s_bps * inv)) + "," + fmt(std::sqrt(s_norm * inv)) +
               "," + fmt(std::sqrt(s_iters * inv)) + "," + fmt(std::sqrt(s_wall * inv)) + "," +
               fmt(std::sqrt(s_feas * inv)) + "\n";
      }
    }
  return csv;
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open output file: " + path);
  out << text;
  if (!out) throw ConfigError("write failed: " + path);
}

// Writes the CSV to spec.out_path and the resolved config to out_path + ".meta".
inline void run_sweep(const ExperimentSpec& spec) {
  const std::string csv = run_sweep_to_string(spec);
  write_text_file(spec.out_path, csv);
  write_text_file(spec.out_path + ".meta", resolved_config_text(spec.base, spec.run, &spec));
}

// ---------------------------------------------------------------------------
// Lower-bound validation report.
// ---------------------------------------------------------------------------

inline constexpr const char* kLbCsvHeader = "ue,lb_bpcu,emp_bpcu,ci95_bpcu,rel_gap,valid";

struct LbUeRow {
  int ue = 0;
  double lb_bpcu = 0.0;
  double emp_bpcu = 0.0;
  double ci95_bpcu = 0.0;
  double rel_gap = 0.0;  // (emp - lb)/emp; NaN when emp is zero
  bool valid = false;    // lb <= emp + 3*ci95
};

struct LbReport {
  std::vector<LbUeRow> rows;
  double mean_rel_gap = 0.0;  // over UEs with nonzero empirical rate
  bool validity_ok = false;   // every row valid
  bool tightness_ok = false;  // mean_rel_gap <= 0.10
  std::uint64_t trials = 0;

  std::string csv() const {
    std::string s = std::string(kLbCsvHeader) + "\n";
    for (const auto& r : rows)
      s += std::to_string(r.ue) + "," + detail::fmt(r.lb_bpcu) + "," + detail::fmt(r.emp_bpcu) +
           "," + detail::fmt(r.ci95_bpcu) + "," + detail::fmt(r.rel_gap) + "," +
           (r.valid ? "1" : "0") + "\n";
    return s;
  }

  std::string summary() const {
    return "validity " + std::string(validity_ok ? "pass" : "FAIL") + ", mean rel gap " +
           detail::fmt(100.0 * mean_rel_gap, "%.2f") + "% (guard 10%: " +
           (tightness_ok ? "pass" : "FAIL") + "), trials " + detail::fmt_u64(trials);
  }
};

// Measures the closed-form per-UE rate against the empirical ergodic rate at
// the optimizer's starting point: deferred-acceptance clustering plus the
// QoS feasibility lift of the rank-weighted initial power. This is the
// operating point before any sum-rate shaping, so the comparison exercises
// the bound itself rather than power patterns tuned against it.
inline LbReport validate_lb(const SystemConfig& cfg, std::uint64_t trials,
                            const RunOptions& run = {}) {
  cfg.validate();
  NetworkState net = generate_deployment(cfg);
  const RateParams rp = make_rate_params(cfg);
  const ClusteringState cl = gale_shapley_clustering(net, cfg);
  refresh_pilot_stats(net, cl, cfg);
  const FeasibilityResult feas =
      feasibility_phase(initial_power(net, cfg), net, cl, cfg, rp, run.opt.feas_max_iters);
  const EmpiricalRate er = empirical_ergodic_rate(feas.P, net, cl, cfg, rp, trials);

  LbReport rep;
  rep.trials = trials;
  rep.validity_ok = true;
  double gap_sum = 0.0;
  int gap_n = 0;
  for (int n = 0; n < cfg.num_ues; ++n) {
    LbUeRow r;
    r.ue = n;
    r.lb_bpcu = lb_rate(n, feas.P, net, cl, cfg, rp);
    r.emp_bpcu = er.mean_bpcu[n];
    r.ci95_bpcu = er.ci95_bpcu[n];
    r.valid = r.lb_bpcu <= r.emp_bpcu + 3.0 * r.ci95_bpcu;
    if (r.emp_bpcu > 1e-12) {
      r.rel_gap = (r.emp_bpcu - r.lb_bpcu) / r.emp_bpcu;
      gap_sum += r.rel_gap;
      ++gap_n;
    } else {
      r.rel_gap = std::numeric_limits<double>::quiet_NaN();
    }
    rep.validity_ok = rep.validity_ok && r.valid;
    rep.rows.push_back(r);
  }
  rep.mean_rel_gap = gap_n > 0 ? gap_sum / gap_n : 0.0;
  rep.tightness_ok = rep.mean_rel_gap <= 0.10;
  return rep;
}

}  // namespace cfnoma
