// Experiment orchestration: seeded Monte Carlo trials over (method, attack,
// sharing-ratio) cells, method composition (partial sharing + filtering /
// full sharing + filtering / full sharing unfiltered), and result emission.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <prism/attacks.hpp>
#include <prism/datagen.hpp>
#include <prism/robust_calib.hpp>
#include <prism/training.hpp>

namespace prism::harness {

enum class Scenario { Synthetic, Uci };
enum class Method { PrismFcp, RobFcp, Fcp };
enum class FilterMode { KnownB, Mad };

std::string to_string(Scenario s);
std::string to_string(Method m);
std::string to_string(FilterMode f);
Scenario scenario_from_string(const std::string& name);
Method method_from_string(const std::string& name);
FilterMode filter_mode_from_string(const std::string& name);

struct ExperimentConfig {
  Scenario scenario = Scenario::Synthetic;
  std::vector<Method> methods{Method::PrismFcp, Method::RobFcp, Method::Fcp};
  std::vector<double> m_over_d{0.3};
  int n_clients = 100;
  int n_byzantine = 20;
  int participants_per_round = 10;
  double alpha = 0.1;
  int n_trials = 10;
  int n_train_iters = 1000;
  int n_calib = 1000;
  int n_test = 1000;
  std::uint64_t seed = 1;

  // Synthetic generator.
  int dimension = 50;
  datagen::Interval feature_variance_range{0.2, 1.2};
  datagen::Interval noise_variance_range{0.005, 0.025};
  double true_weight_norm = 1.0;

  // 0 resolves per scenario at validation: 0.05 for the synthetic generator,
  // 0.01 for standardized real data (stability scales with 1/E|x|^2).
  double step_size = 0.0;
  double divergence_guard = 1e3;

  // Calibration-side knobs.
  int n_bins = 100;
  double score_scale = 0.0;  // 0: per-trial benign pilot (99.5th percentile)
  attacks::TrainingAttackConfig train_attack{0.25, 0.1};
  std::vector<attacks::CalibAttackSpec> attack_specs;  // defaulted in validate()
  FilterMode filter_mode = FilterMode::KnownB;

  std::string out_dir = "out";
  int n_threads = 0;  // 0: hardware concurrency
  bool emit_mse_trajectory = false;

  // Real-data scenario.
  std::string uci_csv_path;
  int uci_train_per_client = 1000;
  double uci_dirichlet_alpha = 0.5;
  int uci_quantile_bins = 10;
  std::string uci_target_column = "critical_temp";

  void validate();  // also fills defaulted fields (attack_specs)
};

struct TrialResult {
  int trial_id = 0;
  Method method = Method::PrismFcp;
  attacks::CalibAttackKind attack = attacks::CalibAttackKind::None;
  double m_over_d = 1.0;
  double coverage = 0.0;
  double mean_width = 0.0;
  double quantile = 0.0;
  bool quantile_saturated = false;
  double quantile_deviation = 0.0;  // |estimated - benign reference|
  double final_mse_db = 0.0;
  int true_positives = 0;
  int false_positives = 0;
  long long comm_scalars_up = 0;
  long long comm_scalars_down = 0;
};

/// Per-(cell, attack) measurements that feed the bound-vs-empirical table.
struct TrialDiagnostics {
  int trial_id = 0;
  Method method = Method::PrismFcp;
  attacks::CalibAttackKind attack = attacks::CalibAttackKind::None;
  double m_over_d = 1.0;
  int n_shared = 0;
  int dimension = 0;
  double final_mse = 0.0;
  double reference_quantile = 0.0;
  double score_scale = 0.0;
  bool separation_valid = false;
  robust_calib::SeparationReport separation;
  bool misfiltered = false;
  long long attack_opportunities = 0;
  long long attack_events = 0;
  double attack_energy_sum = 0.0;
  // Bound values computed with this trial's inputs.
  double quantile_bound = 0.0;
  double width_bound = 0.0;
  double benign_radius_bound = 0.0;
};

/// Per-client artifacts of one filtering pass (histogram reproduction).
struct AttackArtifacts {
  attacks::CalibAttackKind attack = attacks::CalibAttackKind::None;
  std::vector<robust_calib::CharacterizationVector> vectors;
  std::vector<double> filter_score;
  std::vector<bool> is_byzantine;
};

struct CellOutcome {
  std::vector<TrialResult> rows;        // one per attack spec
  std::vector<TrialDiagnostics> diags;  // aligned with rows
  std::vector<AttackArtifacts> artifacts;  // filled when requested
  std::vector<double> mse_trajectory;      // filled when requested
  std::vector<double> mse_db_trajectory;
};

struct ExperimentOutput {
  std::vector<TrialResult> results;
  std::vector<TrialDiagnostics> diagnostics;
};

/// Deterministic per-cell seed: seed XOR hash(trial, method, ratio), with the
/// splitmix64 finalizer as the mixing function.
std::uint64_t cell_seed(std::uint64_t seed, int trial, Method method, double ratio);

/// Runs one (trial, method, ratio) cell: trains once, then applies every
/// configured calibration attack to the shared calibration scores.
CellOutcome run_cell(const ExperimentConfig& config, Method method, double ratio, int trial_id,
                     bool keep_artifacts = false);

/// Single-attack convenience wrapper around run_cell.
TrialResult run_method(const ExperimentConfig& config, Method method, double ratio,
                       const attacks::CalibAttackSpec& attack, int trial_id);

/// Full sweep over (trial, method, ratio, attack); writes results.csv,
/// summary.json, histograms.csv, maliciousness.csv, and bounds.csv to
/// config.out_dir and returns the raw rows.
ExperimentOutput run_experiment(ExperimentConfig config);

/// Parses a JSON config document. Unknown keys are an error.
ExperimentConfig load_config_file(const std::string& path);

// Emission helpers (also used by the CLI).
void write_results_csv(const std::string& path, const std::vector<TrialResult>& rows);
void write_summary_json(const std::string& path, const ExperimentConfig& config,
                        const std::vector<TrialResult>& rows);
void write_histograms_csv(const std::string& path, const AttackArtifacts& artifacts);
void write_maliciousness_csv(const std::string& path, const AttackArtifacts& artifacts);
void write_bounds_csv(const std::string& path, const ExperimentConfig& config,
                      const std::vector<TrialResult>& rows,
                      const std::vector<TrialDiagnostics>& diags);

/// The k-th smallest with k = ceil(p * n); p in (0, 1].
double percentile(std::vector<double> values, double p);

}  // namespace prism::harness
