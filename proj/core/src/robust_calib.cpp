#include <prism/robust_calib.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace prism::robust_calib {

namespace {

double median_of(std::vector<double> values) {
  const std::size_t n = values.size();
  const std::size_t mid = n / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid),
                   values.end());
  double hi = values[mid];
  if (n % 2 == 1) return hi;
  double lo = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

double l2_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

std::vector<double> group_mean(const std::vector<CharacterizationVector>& vectors,
                               const std::vector<bool>& is_byzantine, bool byzantine) {
  std::vector<double> mean;
  int count = 0;
  for (std::size_t k = 0; k < vectors.size(); ++k) {
    if (is_byzantine[k] != byzantine) continue;
    if (mean.empty()) mean.assign(vectors[k].mass.size(), 0.0);
    for (std::size_t h = 0; h < mean.size(); ++h) mean[h] += vectors[k].mass[h];
    ++count;
  }
  if (count == 0) throw std::invalid_argument("separation_diagnostics: empty group");
  for (double& m : mean) m /= count;
  return mean;
}

FilterOutcome partition_by_flags(const std::vector<bool>& flag, std::vector<double> score) {
  FilterOutcome out;
  out.score = std::move(score);
  for (std::size_t k = 0; k < flag.size(); ++k)
    (flag[k] ? out.flagged : out.benign).push_back(static_cast<int>(k));
  return out;
}

}  // namespace

HistogramSpec HistogramSpec::uniform(int n_bins, double score_scale) {
  HistogramSpec spec;
  spec.n_bins = n_bins;
  spec.score_scale = score_scale;
  spec.boundaries.resize(static_cast<std::size_t>(n_bins) + 1);
  for (int h = 0; h <= n_bins; ++h)
    spec.boundaries[static_cast<std::size_t>(h)] = static_cast<double>(h) / n_bins;
  spec.boundaries.front() = 0.0;
  spec.boundaries.back() = 1.0;
  spec.validate();
  return spec;
}

void HistogramSpec::validate() const {
  if (n_bins < 2) throw std::invalid_argument("HistogramSpec: need at least 2 bins");
  if (boundaries.size() != static_cast<std::size_t>(n_bins) + 1)
    throw std::invalid_argument("HistogramSpec: boundaries must have n_bins + 1 entries");
  if (boundaries.front() != 0.0 || boundaries.back() != 1.0)
    throw std::invalid_argument("HistogramSpec: boundaries must start at 0 and end at 1");
  for (std::size_t i = 1; i < boundaries.size(); ++i)
    if (!(boundaries[i - 1] < boundaries[i]))
      throw std::invalid_argument("HistogramSpec: boundaries must be strictly increasing");
  if (!(score_scale > 0.0)) throw std::invalid_argument("HistogramSpec: score_scale must be > 0");
}

CharacterizationVector characterize(const conformal::ScoreSet& scores, const HistogramSpec& spec) {
  spec.validate();
  if (scores.scores.empty()) throw std::invalid_argument("characterize: empty score set");

  std::vector<int> counts(static_cast<std::size_t>(spec.n_bins), 0);
  for (double raw : scores.scores) {
    double x = raw / spec.score_scale;
    x = std::clamp(x, 0.0, 1.0);
    // First boundary strictly greater than x; bin = index - 1. x == 1 falls
    // past the last boundary and lands in the final (closed) bin.
    auto it = std::upper_bound(spec.boundaries.begin(), spec.boundaries.end(), x);
    std::size_t bin = static_cast<std::size_t>(it - spec.boundaries.begin());
    bin = (bin == spec.boundaries.size()) ? static_cast<std::size_t>(spec.n_bins) - 1 : bin - 1;
    ++counts[bin];
  }

  CharacterizationVector v;
  v.client_id = scores.client_id;
  v.mass.resize(counts.size());
  const double n = static_cast<double>(scores.scores.size());
  for (std::size_t h = 0; h < counts.size(); ++h) v.mass[h] = counts[h] / n;
  return v;
}

Eigen::MatrixXd pairwise_distances(const std::vector<CharacterizationVector>& vectors) {
  const auto n = static_cast<Eigen::Index>(vectors.size());
  if (n == 0) return Eigen::MatrixXd::Zero(0, 0);
  const std::size_t n_bins = vectors[0].mass.size();
  for (const auto& v : vectors)
    if (v.mass.size() != n_bins)
      throw std::invalid_argument("pairwise_distances: mixed histogram sizes");

  Eigen::MatrixXd dist = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double d = l2_distance(vectors[static_cast<std::size_t>(i)].mass,
                                   vectors[static_cast<std::size_t>(j)].mass);
      dist(i, j) = d;
      dist(j, i) = d;
    }
  }
  return dist;
}

std::vector<double> maliciousness_scores(const Eigen::MatrixXd& distances, int n_benign) {
  const auto n = distances.rows();
  if (n < 2) throw std::invalid_argument("maliciousness_scores: need at least 2 clients");
  if (n_benign < 2 || n_benign > n)
    throw std::invalid_argument("maliciousness_scores: n_benign out of range");

  const int take = n_benign - 1;
  std::vector<double> out(static_cast<std::size_t>(n), 0.0);
  std::vector<std::pair<double, int>> row;
  row.reserve(static_cast<std::size_t>(n) - 1);
  for (Eigen::Index k = 0; k < n; ++k) {
    row.clear();
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != k) row.emplace_back(distances(k, j), static_cast<int>(j));
    // Farthest first; ties broken toward the lower client index.
    std::partial_sort(row.begin(), row.begin() + take, row.end(),
                      [](const auto& a, const auto& b) {
                        if (a.first != b.first) return a.first > b.first;
                        return a.second < b.second;
                      });
    double sum = 0.0;
    for (int i = 0; i < take; ++i) sum += row[static_cast<std::size_t>(i)].first;
    out[static_cast<std::size_t>(k)] = sum;
  }
  return out;
}

FilterOutcome filter_top_b(const std::vector<double>& maliciousness, int n_flag) {
  const int n = static_cast<int>(maliciousness.size());
  if (n_flag < 0 || n_flag >= n)
    throw std::invalid_argument("filter_top_b: flag count must lie in [0, n_clients)");

  std::vector<int> order(maliciousness.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (maliciousness[static_cast<std::size_t>(a)] != maliciousness[static_cast<std::size_t>(b)])
      return maliciousness[static_cast<std::size_t>(a)] >
             maliciousness[static_cast<std::size_t>(b)];
    return a < b;
  });

  std::vector<bool> flag(maliciousness.size(), false);
  for (int i = 0; i < n_flag; ++i) flag[static_cast<std::size_t>(order[i])] = true;
  return partition_by_flags(flag, maliciousness);
}

FilterOutcome filter_mad(const std::vector<CharacterizationVector>& vectors, double scale,
                         double threshold) {
  const std::size_t n = vectors.size();
  if (n < 3) throw std::invalid_argument("filter_mad: need at least 3 clients");
  const std::size_t n_bins = vectors[0].mass.size();
  for (const auto& v : vectors)
    if (v.mass.size() != n_bins) throw std::invalid_argument("filter_mad: mixed histogram sizes");

  // Coordinate-wise median histogram as the robust population center.
  std::vector<double> center(n_bins, 0.0);
  std::vector<double> column(n);
  for (std::size_t h = 0; h < n_bins; ++h) {
    for (std::size_t k = 0; k < n; ++k) column[k] = vectors[k].mass[h];
    center[h] = median_of(column);
  }

  std::vector<double> dist(n);
  for (std::size_t k = 0; k < n; ++k) dist[k] = l2_distance(vectors[k].mass, center);

  const double med = median_of(dist);
  std::vector<double> abs_dev(n);
  for (std::size_t k = 0; k < n; ++k) abs_dev[k] = std::abs(dist[k] - med);
  const double mad = median_of(abs_dev);

  const double cutoff = mad < 1e-12 ? med + 1e-9 : med + threshold * scale * mad;
  std::vector<bool> flag(n, false);
  for (std::size_t k = 0; k < n; ++k) flag[k] = dist[k] > cutoff;
  return partition_by_flags(flag, dist);
}

void annotate_detection(FilterOutcome& outcome, const std::vector<bool>& is_byzantine) {
  int tp = 0, fp = 0;
  for (int k : outcome.flagged) (is_byzantine[static_cast<std::size_t>(k)] ? tp : fp)++;
  outcome.true_positives = tp;
  outcome.false_positives = fp;
}

SeparationReport separation_diagnostics(const std::vector<CharacterizationVector>& vectors,
                                        const std::vector<bool>& is_byzantine) {
  if (vectors.size() != is_byzantine.size())
    throw std::invalid_argument("separation_diagnostics: label/vector size mismatch");

  const std::vector<double> benign_mean = group_mean(vectors, is_byzantine, false);
  const std::vector<double> byz_mean = group_mean(vectors, is_byzantine, true);

  SeparationReport rep;
  rep.separation = l2_distance(benign_mean, byz_mean);

  int n_benign = 0, n_byz = 0;
  for (std::size_t k = 0; k < vectors.size(); ++k) {
    const double to_center =
        l2_distance(vectors[k].mass, is_byzantine[k] ? byz_mean : benign_mean);
    if (is_byzantine[k]) {
      rep.adversary_radius = std::max(rep.adversary_radius, to_center);
      ++n_byz;
    } else {
      rep.benign_radius = std::max(rep.benign_radius, to_center);
      ++n_benign;
    }
  }

  rep.min_cross_distance = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < vectors.size(); ++j) {
    if (!is_byzantine[j]) continue;
    for (std::size_t k = 0; k < vectors.size(); ++k) {
      if (is_byzantine[k]) continue;
      const double d = l2_distance(vectors[j].mass, vectors[k].mass);
      rep.min_cross_distance = std::min(rep.min_cross_distance, d);
    }
  }
  for (std::size_t j = 0; j < vectors.size(); ++j) {
    if (is_byzantine[j]) continue;
    for (std::size_t k = j + 1; k < vectors.size(); ++k) {
      if (is_byzantine[k]) continue;
      rep.max_within_benign =
          std::max(rep.max_within_benign, l2_distance(vectors[j].mass, vectors[k].mass));
    }
  }

  const double margin_low = rep.separation - rep.adversary_radius - rep.benign_radius;
  const double margin_high = rep.separation + rep.adversary_radius + rep.benign_radius;
  const double lhs = (n_benign - 1) * margin_low;
  const double rhs = n_byz * margin_high + (n_benign - 1 - n_byz) * 2.0 * rep.benign_radius;
  rep.condition_holds = lhs > rhs;
  rep.slack = lhs - rhs;
  return rep;
}

}  // namespace prism::robust_calib
