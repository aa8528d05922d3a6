// Histogram characterization of client score distributions and the
// distance-based Byzantine filters that run on top of it.

#pragma once

#include <Eigen/Core>
#include <vector>

#include <prism/conformal.hpp>

namespace prism::robust_calib {

/// Fixed binning of the normalized score range [0,1].
struct HistogramSpec {
  int n_bins = 0;
  std::vector<double> boundaries;  // n_bins + 1 strictly increasing, 0 .. 1
  double score_scale = 1.0;        // raw scores are divided by this, then clipped to [0,1]

  static HistogramSpec uniform(int n_bins, double score_scale);
  void validate() const;
};

/// Probability histogram on the simplex: nonnegative, sums to one.
struct CharacterizationVector {
  std::vector<double> mass;
  int client_id = -1;
};

/// Result of a filtering pass. `benign` and `flagged` partition all client
/// indices. `score` holds the per-client statistic the filter ranked by
/// (maliciousness for the top-B filter, distance-to-median for MAD).
/// Confusion counts are -1 until annotated with ground truth.
struct FilterOutcome {
  std::vector<int> benign;
  std::vector<int> flagged;
  std::vector<double> score;
  int true_positives = -1;
  int false_positives = -1;
};

/// Empirical separation between the Byzantine and benign histogram clouds,
/// measured against the group mean vectors.
struct SeparationReport {
  double separation = 0.0;         // distance between group means
  double benign_radius = 0.0;      // max benign distance to benign mean
  double adversary_radius = 0.0;   // max Byzantine distance to Byzantine mean
  double min_cross_distance = 0.0;
  double max_within_benign = 0.0;
  bool condition_holds = false;    // score-separation inequality
  double slack = 0.0;              // LHS - RHS of that inequality
};

/// Bins one client's scores: each raw score is divided by `score_scale`,
/// clipped to [0,1], and counted into half-open bins [a_{h-1}, a_h) with the
/// last bin closed at 1. Throws on an empty score set.
CharacterizationVector characterize(const conformal::ScoreSet& scores, const HistogramSpec& spec);

/// Symmetric K x K matrix of Euclidean distances between histograms.
Eigen::MatrixXd pairwise_distances(const std::vector<CharacterizationVector>& vectors);

/// Per-client sum of distances to its (n_benign - 1) farthest neighbors.
std::vector<double> maliciousness_scores(const Eigen::MatrixXd& distances, int n_benign);

/// Flags the `n_flag` clients with the largest maliciousness scores
/// (ties flagged in ascending client-index order).
FilterOutcome filter_top_b(const std::vector<double>& maliciousness, int n_flag);

/// Flags clients whose distance to the coordinate-wise median histogram
/// exceeds median + threshold * scale * MAD. One-sided; an epsilon rule
/// handles the zero-dispersion case.
FilterOutcome filter_mad(const std::vector<CharacterizationVector>& vectors,
                         double scale = 1.4826, double threshold = 2.5);

/// Fills in confusion counts given ground-truth Byzantine labels.
void annotate_detection(FilterOutcome& outcome, const std::vector<bool>& is_byzantine);

/// Measures the separation margin and evaluates the exact-filtering
/// condition. Requires both groups nonempty.
SeparationReport separation_diagnostics(const std::vector<CharacterizationVector>& vectors,
                                        const std::vector<bool>& is_byzantine);

}  // namespace prism::robust_calib
