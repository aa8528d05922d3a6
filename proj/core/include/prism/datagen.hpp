// Data generation and ingestion: synthetic non-IID linear-model streams per
// client, and CSV loading / standardization / Dirichlet partitioning for the
// real-data scenario.

#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include <prism/rng.hpp>
#include <prism/types.hpp>

namespace prism::datagen {

struct Interval {
  double low = 0.0;
  double high = 0.0;
};

struct SyntheticConfig {
  int dimension = 50;
  Interval feature_variance_range{0.2, 1.2};
  Interval noise_variance_range{0.005, 0.025};
  double true_weight_norm = 1.0;
  void validate() const;
};

/// Per-client data law, drawn once per trial.
struct ClientDataProfile {
  int client_id = -1;
  double feature_variance = 1.0;
  double noise_variance = 1.0;
};

struct RealDatasetConfig {
  std::string csv_path;
  int n_clients = 100;
  int train_per_client = 1000;
  int calib_per_client = 1000;
  int test_per_client = 1000;
  double dirichlet_alpha = 0.5;
  int n_quantile_bins = 10;
  std::string target_column = "critical_temp";

  int samples_per_client() const { return train_per_client + calib_per_client + test_per_client; }
  void validate() const;
};

/// Loaded dataset after column-wise standardization (features and target all
/// have zero mean and unit variance).
struct Dataset {
  Eigen::MatrixXd features;  // rows = samples
  Eigen::VectorXd targets;
  std::vector<std::string> feature_names;
};

/// Direction uniform on the sphere, Euclidean norm = config.true_weight_norm.
ModelVector generate_true_weights(const SyntheticConfig& config, Rng& rng);

/// Per-client variances drawn uniformly from the configured ranges.
std::vector<ClientDataProfile> draw_client_profiles(const SyntheticConfig& config, int n_clients,
                                                    Rng& rng);

/// One feature-label pair: x ~ N(0, feature_variance I), y = w*.x + noise.
Sample next_sample(const ClientDataProfile& profile, const ModelVector& true_weights, Rng& rng);

/// Parses the CSV (one header row, numeric cells) and standardizes every
/// column in place. Errors carry a row/column locus.
Dataset load_uci_dataset(const RealDatasetConfig& config);

/// Equal-frequency target bins + per-client Dirichlet mixing proportions.
/// Returns samples_per_client() row indices per client; draws within a bin
/// are without replacement until the bin is exhausted, then with replacement.
std::vector<std::vector<int>> partition_non_iid(const Dataset& data,
                                                const RealDatasetConfig& config, Rng& rng);

/// In-place column standardization to zero mean and unit (population)
/// variance. Constant columns are left centered.
void standardize_columns(Eigen::MatrixXd& matrix);
void standardize(Eigen::VectorXd& column);

/// Gamma(shape, 1) variate (Marsaglia-Tsang), building block for Dirichlet.
double gamma_sample(double shape, Rng& rng);

/// Symmetric Dirichlet(alpha) point on the (n_bins-1)-simplex.
std::vector<double> dirichlet_sample(double alpha, int n_bins, Rng& rng);

}  // namespace prism::datagen
