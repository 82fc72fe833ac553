// Command-line front end: single-instance optimization, figure sweeps,
// lower-bound validation, and a standalone GP solver for debugging.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "cfnoma/experiments.hpp"
#include "cfnoma/gp.hpp"
#include "cfnoma/gp_solver.hpp"

namespace {

using namespace cfnoma;

// Shared resolution order: profile defaults, then config file, then flags.
struct CommonArgs {
  std::string profile = "desk";
  std::string config_path;
  std::string out_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::uint64_t trials = 0;
  bool trials_set = false;
  std::string detector;
  double alpha = 0.0;
  bool alpha_set = false;
  int jobs = 0;
  bool jobs_set = false;
};

void add_common_flags(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("--profile", a.profile, "Base parameter set: paper or desk")
      ->check(CLI::IsMember({"paper", "desk"}));
  cmd->add_option("--config", a.config_path, "INI-style config overlay");
  cmd->add_option("--out", a.out_path, "Output CSV path");
  cmd->add_option("--seed", a.seed, "Deployment seed")->each([&](const std::string&) {
    a.seed_set = true;
  });
  cmd->add_option("--trials", a.trials, "Monte-Carlo trials")->each([&](const std::string&) {
    a.trials_set = true;
  });
  cmd->add_option("--detector", a.detector, "Negative-loop detector: ebfa or gsa")
      ->check(CLI::IsMember({"ebfa", "gsa"}));
  cmd->add_option("--alpha", a.alpha, "Greedy detector budget multiplier")
      ->each([&](const std::string&) { a.alpha_set = true; });
  cmd->add_option("--jobs", a.jobs, "Worker threads for sweeps")
      ->each([&](const std::string&) { a.jobs_set = true; });
}

// Builds (config, run options, optional experiment spec) from the common args.
void resolve(const CommonArgs& a, SystemConfig& cfg, RunOptions& run, ExperimentSpec* spec) {
  cfg = profile_by_name(a.profile);
  if (!a.config_path.empty()) apply_config(load_config_file(a.config_path), cfg, run, spec);
  if (a.seed_set) cfg.seed = a.seed;
  if (a.trials_set) run.trials = a.trials;
  if (!a.detector.empty())
    run.opt.detector = a.detector == "ebfa" ? LoopDetector::ebfa : LoopDetector::gsa;
  if (a.alpha_set) run.opt.clustering.gsa_alpha = a.alpha;
  if (a.jobs_set) run.jobs = a.jobs;
  cfg.validate();
}

int cmd_optimize(const CommonArgs& a, const std::string& dump_graph_path) {
  SystemConfig cfg;
  RunOptions run;
  resolve(a, cfg, run, nullptr);
  const NetworkState net = generate_deployment(cfg);
  const RateParams rp = make_rate_params(cfg);
  const OptimizationResult res = optimize(net, cfg, rp, run.opt);

  std::printf("algorithm   %s\n", res.algorithm.c_str());
  std::printf("asr         %.6f bit/s/Hz  (%.4g bit/s)\n", res.asr_bpcu, res.asr_bps);
  std::printf("outer iters %d  (%s)\n", res.outer_iters, res.termination.c_str());
  std::printf("feasible    %s\n", res.feasible ? "yes" : "no");
  for (int n = 0; n < cfg.num_ues; ++n)
    std::printf("  ue %2d  cluster %2d  sinr_lb %10.4f  rate %.6f bit/s/Hz\n", n,
                res.clustering.cluster_of[n], res.ue_sinr[n], res.ue_rate_bpcu[n]);

  if (!a.out_path.empty()) {
    std::string csv = "ue,cluster,sinr_lb,rate_bpcu\n";
    for (int n = 0; n < cfg.num_ues; ++n)
      csv += std::to_string(n) + "," + std::to_string(res.clustering.cluster_of[n]) + "," +
             detail::fmt(res.ue_sinr[n]) + "," + detail::fmt(res.ue_rate_bpcu[n]) + "\n";
    write_text_file(a.out_path, csv);
    write_text_file(a.out_path + ".meta", resolved_config_text(cfg, run));
  }
  if (!dump_graph_path.empty()) {
    const WeightedDigraph gr = build_graph(res.clustering, res.P, res.net, cfg, rp);
    std::ofstream os(dump_graph_path);
    if (!os) throw ConfigError("cannot open " + dump_graph_path);
    write_dot(os, gr);
    std::printf("exchange graph written to %s\n", dump_graph_path.c_str());
  }
  return 0;
}

int cmd_sweep(const CommonArgs& a, const std::string& algo_csv) {
  ExperimentSpec spec;
  SystemConfig cfg;
  RunOptions run;
  resolve(a, cfg, run, &spec);
  spec.base = cfg;
  spec.run = run;
  if (!algo_csv.empty()) {
    spec.algorithms.clear();
    for (const auto& item : detail::split_list(algo_csv))
      spec.algorithms.push_back(parse_algorithm(item));
  }
  if (a.seed_set) spec.seeds = {a.seed};
  if (!a.out_path.empty()) spec.out_path = a.out_path;
  spec.validate();
  run_sweep(spec);
  std::printf("wrote %s (+.meta)\n", spec.out_path.c_str());
  return 0;
}

int cmd_validate_lb(const CommonArgs& a) {
  SystemConfig cfg;
  RunOptions run;
  resolve(a, cfg, run, nullptr);
  const LbReport rep = validate_lb(cfg, run.trials, run);
  std::fputs(rep.csv().c_str(), stdout);
  std::printf("%s\n", rep.summary().c_str());
  if (!a.out_path.empty()) {
    write_text_file(a.out_path, rep.csv());
    write_text_file(a.out_path + ".meta", resolved_config_text(cfg, run));
  }
  return rep.validity_ok ? 0 : 2;
}

int cmd_gp_solve(const std::string& input_path, const std::string& out_path) {
  gp::GPProblem prob;
  if (input_path == "-") {
    prob = gp::parse_gp_text(std::cin);
  } else {
    std::ifstream in(input_path);
    if (!in) throw ConfigError("cannot open " + input_path);
    prob = gp::parse_gp_text(in);
  }
  const gp::GPResult res = gp::solve_gp(prob);
  std::string text = "status " + std::string(res.status == gp::GPStatus::optimal ? "optimal"
                                             : res.status == gp::GPStatus::infeasible ? "infeasible"
                                                                                  : "iteration-limit") +
                     "\nobjective " + detail::fmt(res.objective, "%.12g") + "\n";
  for (int v = 0; v < prob.num_vars(); ++v)
    text += prob.var_names[v] + " " + detail::fmt(res.x[v], "%.12g") + "\n";
  std::fputs(text.c_str(), stdout);
  if (!out_path.empty()) write_text_file(out_path, text);
  return res.status == gp::GPStatus::optimal ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"NOMA-aided cell-free massive MIMO sum-rate toolkit"};
  app.require_subcommand(1);

  CommonArgs opt_args, sweep_args, lb_args;
  std::string dump_graph_path, algo_csv, gp_input, gp_out;

  CLI::App* c_opt = app.add_subcommand("optimize", "Optimize one deployment instance");
  add_common_flags(c_opt, opt_args);
  c_opt->add_option("--dump-graph", dump_graph_path, "Write the final exchange graph as DOT");

  CLI::App* c_sweep = app.add_subcommand("sweep", "Run a figure sweep from a config file");
  add_common_flags(c_sweep, sweep_args);
  c_sweep->add_option("--algo", algo_csv, "Comma-separated algorithms to run");

  CLI::App* c_lb = app.add_subcommand("validate-lb", "Compare the rate bound to simulation");
  add_common_flags(c_lb, lb_args);

  CLI::App* c_gp = app.add_subcommand("gp-solve", "Solve a GP text problem (debug)");
  c_gp->add_option("input", gp_input, "Problem file, or - for stdin")->required();
  c_gp->add_option("--out", gp_out, "Also write the solution here");

  CLI11_PARSE(app, argc, argv);

  try {
    if (c_opt->parsed()) return cmd_optimize(opt_args, dump_graph_path);
    if (c_sweep->parsed()) return cmd_sweep(sweep_args, algo_csv);
    if (c_lb->parsed()) return cmd_validate_lb(lb_args);
    if (c_gp->parsed()) return cmd_gp_solve(gp_input, gp_out);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
