#include <prism/conformal.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace prism::conformal {

ScoreSet nonconformity_scores(const ModelVector& model, const std::vector<Sample>& samples,
                              int client_id) {
  ScoreSet out;
  out.client_id = client_id;
  out.scores.reserve(samples.size());
  for (const Sample& s : samples) {
    if (s.features.size() != model.size())
      throw std::invalid_argument("nonconformity_scores: feature/model dimension mismatch");
    out.scores.push_back(std::abs(s.target - model.dot(s.features)));
  }
  return out;
}

QuantileResult conformal_quantile(std::vector<double> pooled, double alpha) {
  if (pooled.empty()) throw std::invalid_argument("conformal_quantile: empty score pool");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("conformal_quantile: alpha must lie in (0,1)");

  const std::size_t n = pooled.size();
  const double raw = static_cast<double>(n + 1) * (1.0 - alpha);
  // Snap to the nearest integer when the product is one up to rounding noise,
  // so e.g. (9+1)*(1-0.1) indexes the 9th order statistic, not the 10th.
  const double snapped = std::round(raw);
  std::size_t k = std::abs(raw - snapped) < 1e-9 * static_cast<double>(n + 1)
                      ? static_cast<std::size_t>(snapped)
                      : static_cast<std::size_t>(std::ceil(raw));
  if (k < 1) k = 1;

  QuantileResult result;
  if (k > n) {
    result.saturated = true;
    k = n;
  }
  result.order_index = k;
  std::nth_element(pooled.begin(), pooled.begin() + static_cast<std::ptrdiff_t>(k - 1),
                   pooled.end());
  result.value = pooled[k - 1];
  return result;
}

PredictionInterval predict_interval(const ModelVector& model, const ModelVector& features,
                                    double quantile) {
  if (quantile < 0.0) throw std::invalid_argument("predict_interval: negative quantile");
  if (features.size() != model.size())
    throw std::invalid_argument("predict_interval: feature/model dimension mismatch");
  const double center = model.dot(features);
  return PredictionInterval{center - quantile, center + quantile};
}

EvalReport evaluate(const ModelVector& model, double quantile, const std::vector<Sample>& test) {
  if (test.empty()) throw std::invalid_argument("evaluate: empty test set");
  if (quantile < 0.0) throw std::invalid_argument("evaluate: negative quantile");
  int covered = 0;
  for (const Sample& s : test) {
    if (std::abs(s.target - model.dot(s.features)) <= quantile) ++covered;
  }
  EvalReport report;
  report.n_test = static_cast<int>(test.size());
  report.coverage = static_cast<double>(covered) / static_cast<double>(test.size());
  report.mean_width = 2.0 * quantile;
  return report;
}

}  // namespace prism::conformal
