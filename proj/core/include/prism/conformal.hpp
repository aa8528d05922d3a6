// Split-conformal machinery: nonconformity scores, the finite-sample
// conformal quantile, constant-width prediction intervals, and
// coverage/width evaluation.

#pragma once

#include <cstddef>
#include <vector>

#include <prism/types.hpp>

namespace prism::conformal {

/// Nonconformity scores of one client's calibration set. All entries >= 0.
struct ScoreSet {
  std::vector<double> scores;
  int client_id = -1;
};

struct PredictionInterval {
  double lower = 0.0;
  double upper = 0.0;
  double width() const { return upper - lower; }
};

/// Result of the conformal quantile. `saturated` is set when
/// ceil((N+1)(1-alpha)) exceeds N and the maximum score is returned instead.
struct QuantileResult {
  double value = 0.0;
  bool saturated = false;
  std::size_t order_index = 0;  // 1-based k actually used
};

struct EvalReport {
  double coverage = 0.0;    // covered / n_test, exact ratio
  double mean_width = 0.0;  // 2q for constant-width intervals
  int n_test = 0;
};

/// Absolute residuals |y - w.x| of `samples` under `model`, order preserved.
ScoreSet nonconformity_scores(const ModelVector& model, const std::vector<Sample>& samples,
                              int client_id = -1);

/// k-th smallest pooled score with k = ceil((N+1)(1-alpha)); the maximum
/// score with the saturation flag set when k > N. Throws on an empty pool or
/// alpha outside (0,1).
QuantileResult conformal_quantile(std::vector<double> pooled, double alpha);

/// [w.x - q, w.x + q]. Throws on negative q.
PredictionInterval predict_interval(const ModelVector& model, const ModelVector& features,
                                    double quantile);

/// Coverage and width of the constant-width intervals over a test set.
EvalReport evaluate(const ModelVector& model, double quantile, const std::vector<Sample>& test);

}  // namespace prism::conformal
