// Command-line front end: run experiments from a JSON config, sweep sharing
// ratios, replicate the benchmark tables, and emit histogram CSVs.

#include <CLI11.hpp>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <prism/harness.hpp>

namespace {

using namespace prism;
using harness::ExperimentConfig;

struct CommonFlags {
  std::string config_path;
  std::string out_dir;
  std::string data_path;
  std::string filter_mode;
  std::string attack;
  std::vector<std::string> methods;
  std::vector<double> ratios;
  std::uint64_t seed = 0;
  int trials = 0;
  int threads = -1;
  double step_size = 0.0;
  double alpha = 0.0;
  bool emit_mse = false;

  bool seed_set = false, trials_set = false, out_set = false, step_set = false;
  bool alpha_set = false, ratios_set = false, methods_set = false, filter_set = false;
  bool attack_set = false, data_set = false;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "JSON config file");
  cmd->add_option("--seed", f.seed, "base experiment seed")->each([&](const std::string&) {
    f.seed_set = true;
  });
  cmd->add_option("--trials", f.trials, "Monte Carlo trials")->each([&](const std::string&) {
    f.trials_set = true;
  });
  cmd->add_option("--out-dir", f.out_dir, "output directory")->each([&](const std::string&) {
    f.out_set = true;
  });
  cmd->add_option("--threads", f.threads, "worker threads (0 = hardware)");
  cmd->add_option("--mu", f.step_size, "training step size")->each([&](const std::string&) {
    f.step_set = true;
  });
  cmd->add_option("--alpha", f.alpha, "miscoverage level")->each([&](const std::string&) {
    f.alpha_set = true;
  });
  cmd->add_option("--ratios", f.ratios, "sharing ratios M/D")->each([&](const std::string&) {
    f.ratios_set = true;
  });
  cmd->add_option("--methods", f.methods, "PRISM_FCP / ROB_FCP / FCP")
      ->each([&](const std::string&) { f.methods_set = true; });
  cmd->add_option("--filter", f.filter_mode, "known_b or mad")->each([&](const std::string&) {
    f.filter_set = true;
  });
  cmd->add_option("--attack", f.attack, "single calibration attack kind")
      ->each([&](const std::string&) { f.attack_set = true; });
  cmd->add_option("--data", f.data_path, "dataset CSV path (uci scenario)")
      ->each([&](const std::string&) { f.data_set = true; });
  cmd->add_flag("--emit-mse", f.emit_mse, "write per-iteration MSE trajectories");
}

ExperimentConfig build_config(const CommonFlags& f) {
  ExperimentConfig cfg;
  if (!f.config_path.empty()) cfg = harness::load_config_file(f.config_path);
  if (f.seed_set) cfg.seed = f.seed;
  if (f.trials_set) cfg.n_trials = f.trials;
  if (f.out_set) cfg.out_dir = f.out_dir;
  if (f.threads >= 0) cfg.n_threads = f.threads;
  if (f.step_set) cfg.step_size = f.step_size;
  if (f.alpha_set) cfg.alpha = f.alpha;
  if (f.ratios_set) cfg.m_over_d = f.ratios;
  if (f.methods_set) {
    cfg.methods.clear();
    for (const auto& m : f.methods) cfg.methods.push_back(harness::method_from_string(m));
  }
  if (f.filter_set) cfg.filter_mode = harness::filter_mode_from_string(f.filter_mode);
  if (f.attack_set) {
    attacks::CalibAttackSpec spec;
    if (!cfg.attack_specs.empty()) spec = cfg.attack_specs.front();
    spec.kind = attacks::calib_attack_kind_from_string(f.attack);
    cfg.attack_specs = {spec};
  }
  if (f.data_set) {
    cfg.uci_csv_path = f.data_path;
    cfg.scenario = harness::Scenario::Uci;
  }
  if (f.emit_mse) cfg.emit_mse_trajectory = true;
  return cfg;
}

void print_summary(const harness::ExperimentConfig& cfg,
                   const harness::ExperimentOutput& out) {
  std::printf("wrote %zu trial rows to %s\n", out.results.size(),
              (cfg.out_dir + "/results.csv").c_str());
  std::printf("outputs: results.csv summary.json histograms.csv maliciousness.csv bounds.csv\n");
}

int cmd_run(const CommonFlags& f) {
  ExperimentConfig cfg = build_config(f);
  const auto out = harness::run_experiment(cfg);
  print_summary(cfg, out);
  return 0;
}

int cmd_sweep(const CommonFlags& f) {
  ExperimentConfig cfg = build_config(f);
  cfg.methods = {harness::Method::PrismFcp};
  if (!f.ratios_set && cfg.m_over_d.size() <= 1) cfg.m_over_d = {0.1, 0.3, 0.5, 0.7, 1.0};
  const auto out = harness::run_experiment(cfg);
  print_summary(cfg, out);
  return 0;
}

int cmd_table1(const CommonFlags& f) {
  ExperimentConfig cfg = build_config(f);
  cfg.scenario = harness::Scenario::Synthetic;
  cfg.m_over_d = {0.3};
  if (!f.methods_set)
    cfg.methods = {harness::Method::PrismFcp, harness::Method::RobFcp, harness::Method::Fcp};
  const auto out = harness::run_experiment(cfg);
  print_summary(cfg, out);
  return 0;
}

int cmd_table2(const CommonFlags& f) {
  ExperimentConfig cfg = build_config(f);
  cfg.scenario = harness::Scenario::Uci;
  if (cfg.uci_csv_path.empty())
    throw std::runtime_error("replicate-table2 needs --data <csv> (or uci.csv_path in the config)");
  if (!f.ratios_set) cfg.m_over_d = {0.25, 0.49, 0.74, 1.0};
  cfg.participants_per_round = std::min(cfg.n_clients, 20);
  const auto out = harness::run_experiment(cfg);
  print_summary(cfg, out);
  return 0;
}

int cmd_emit_figs(const CommonFlags& f) {
  ExperimentConfig cfg = build_config(f);
  cfg.n_trials = 1;
  cfg.methods = {harness::Method::PrismFcp};
  cfg.validate();
  std::filesystem::create_directories(cfg.out_dir);
  const double ratio = cfg.m_over_d.front();
  const auto outcome = harness::run_cell(cfg, harness::Method::PrismFcp, ratio, 0, true);
  for (const auto& art : outcome.artifacts) {
    const std::string tag =
        cfg.attack_specs.size() > 1 ? "_" + attacks::to_string(art.attack) : "";
    harness::write_histograms_csv(cfg.out_dir + "/histograms" + tag + ".csv", art);
    harness::write_maliciousness_csv(cfg.out_dir + "/maliciousness" + tag + ".csv", art);
  }
  std::printf("wrote histogram/maliciousness CSVs for %zu attack(s) to %s\n",
              outcome.artifacts.size(), cfg.out_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"partial-sharing Byzantine-resilient federated conformal prediction simulator"};
  app.require_subcommand(1);

  CommonFlags run_f, sweep_f, t1_f, t2_f, figs_f;
  CLI::App* run = app.add_subcommand("run", "full experiment from a config file");
  add_common(run, run_f);
  CLI::App* sweep = app.add_subcommand("sweep", "sharing-ratio grid for PRISM_FCP");
  add_common(sweep, sweep_f);
  CLI::App* t1 = app.add_subcommand("replicate-table1", "synthetic benchmark table");
  add_common(t1, t1_f);
  CLI::App* t2 = app.add_subcommand("replicate-table2", "real-data benchmark table");
  add_common(t2, t2_f);
  CLI::App* figs = app.add_subcommand("emit-figs", "histogram and maliciousness CSVs");
  add_common(figs, figs_f);

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(run_f);
    if (sweep->parsed()) return cmd_sweep(sweep_f);
    if (t1->parsed()) return cmd_table1(t1_f);
    if (t2->parsed()) return cmd_table2(t2_f);
    if (figs->parsed()) return cmd_emit_figs(figs_f);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
