#include <prism/datagen.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace prism::datagen {

namespace {

void check_interval(const Interval& iv, const char* name) {
  if (!(iv.low > 0.0) || !(iv.low <= iv.high))
    throw std::invalid_argument(std::string("SyntheticConfig: ") + name +
                                " requires 0 < low <= high");
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_cell(const std::string& cell, std::size_t row, std::size_t col) {
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
  while (end > begin && (end[-1] == ' ' || end[-1] == '\t' || end[-1] == '\r')) --end;
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc{} || ptr != end)
    throw std::runtime_error("CSV parse error: non-numeric cell at row " + std::to_string(row) +
                             ", column " + std::to_string(col) + " ('" + cell + "')");
  return value;
}

}  // namespace

void SyntheticConfig::validate() const {
  if (dimension < 1) throw std::invalid_argument("SyntheticConfig: dimension must be >= 1");
  if (!(true_weight_norm > 0.0))
    throw std::invalid_argument("SyntheticConfig: true_weight_norm must be > 0");
  check_interval(feature_variance_range, "feature_variance_range");
  check_interval(noise_variance_range, "noise_variance_range");
}

void RealDatasetConfig::validate() const {
  if (n_clients < 1) throw std::invalid_argument("RealDatasetConfig: n_clients must be >= 1");
  if (train_per_client < 0 || calib_per_client < 0 || test_per_client < 0 ||
      samples_per_client() < 1)
    throw std::invalid_argument("RealDatasetConfig: invalid split sizes");
  if (!(dirichlet_alpha > 0.0))
    throw std::invalid_argument("RealDatasetConfig: dirichlet_alpha must be > 0");
  if (n_quantile_bins < 2)
    throw std::invalid_argument("RealDatasetConfig: n_quantile_bins must be >= 2");
}

ModelVector generate_true_weights(const SyntheticConfig& config, Rng& rng) {
  config.validate();
  ModelVector w(config.dimension);
  double norm = 0.0;
  do {
    for (int d = 0; d < config.dimension; ++d) w[d] = rng.gaussian();
    norm = w.norm();
  } while (norm == 0.0);
  return w * (config.true_weight_norm / norm);
}

std::vector<ClientDataProfile> draw_client_profiles(const SyntheticConfig& config, int n_clients,
                                                    Rng& rng) {
  config.validate();
  if (n_clients < 1) throw std::invalid_argument("draw_client_profiles: n_clients must be >= 1");
  std::vector<ClientDataProfile> profiles(static_cast<std::size_t>(n_clients));
  for (int k = 0; k < n_clients; ++k) {
    auto& p = profiles[static_cast<std::size_t>(k)];
    p.client_id = k;
    p.feature_variance =
        rng.uniform(config.feature_variance_range.low, config.feature_variance_range.high);
    p.noise_variance =
        rng.uniform(config.noise_variance_range.low, config.noise_variance_range.high);
  }
  return profiles;
}

Sample next_sample(const ClientDataProfile& profile, const ModelVector& true_weights, Rng& rng) {
  const double feature_std = std::sqrt(profile.feature_variance);
  const double noise_std = std::sqrt(profile.noise_variance);
  Sample s;
  s.features.resize(true_weights.size());
  for (Eigen::Index d = 0; d < true_weights.size(); ++d)
    s.features[d] = rng.gaussian(0.0, feature_std);
  s.target = true_weights.dot(s.features) + rng.gaussian(0.0, noise_std);
  return s;
}

void standardize(Eigen::VectorXd& column) {
  const double n = static_cast<double>(column.size());
  const double mean = column.mean();
  column.array() -= mean;
  const double var = column.squaredNorm() / n;
  if (var > 0.0) column /= std::sqrt(var);
}

void standardize_columns(Eigen::MatrixXd& matrix) {
  for (Eigen::Index c = 0; c < matrix.cols(); ++c) {
    Eigen::VectorXd col = matrix.col(c);
    standardize(col);
    matrix.col(c) = col;
  }
}

Dataset load_uci_dataset(const RealDatasetConfig& config) {
  config.validate();
  std::ifstream in(config.csv_path);
  if (!in) throw std::runtime_error("cannot open dataset file: " + config.csv_path);

  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("dataset file is empty: " + config.csv_path);
  std::vector<std::string> header = split_csv_line(line);
  for (auto& h : header) {
    while (!h.empty() && (h.back() == '\r' || h.back() == ' ')) h.pop_back();
  }
  const std::size_t n_cols = header.size();
  if (n_cols < 2)
    throw std::runtime_error("dataset needs at least one feature column and a target column");

  std::ptrdiff_t target_col = -1;
  for (std::size_t c = 0; c < n_cols; ++c)
    if (header[c] == config.target_column) target_col = static_cast<std::ptrdiff_t>(c);
  if (target_col < 0)
    throw std::runtime_error("target column '" + config.target_column + "' not found in header");

  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != n_cols)
      throw std::runtime_error("CSV parse error: row " + std::to_string(line_no) + " has " +
                               std::to_string(cells.size()) + " cells, expected " +
                               std::to_string(n_cols));
    std::vector<double> row(n_cols);
    for (std::size_t c = 0; c < n_cols; ++c) row[c] = parse_cell(cells[c], line_no, c + 1);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("dataset has a header but no data rows");

  Dataset data;
  const auto n_rows = static_cast<Eigen::Index>(rows.size());
  const auto n_feat = static_cast<Eigen::Index>(n_cols - 1);
  data.features.resize(n_rows, n_feat);
  data.targets.resize(n_rows);
  data.feature_names.reserve(static_cast<std::size_t>(n_feat));
  for (std::size_t c = 0; c < n_cols; ++c)
    if (static_cast<std::ptrdiff_t>(c) != target_col) data.feature_names.push_back(header[c]);

  for (Eigen::Index r = 0; r < n_rows; ++r) {
    Eigen::Index f = 0;
    for (std::size_t c = 0; c < n_cols; ++c) {
      if (static_cast<std::ptrdiff_t>(c) == target_col)
        data.targets[r] = rows[static_cast<std::size_t>(r)][c];
      else
        data.features(r, f++) = rows[static_cast<std::size_t>(r)][c];
    }
  }

  standardize_columns(data.features);
  standardize(data.targets);
  return data;
}

double gamma_sample(double shape, Rng& rng) {
  if (!(shape > 0.0)) throw std::invalid_argument("gamma_sample: shape must be > 0");
  if (shape < 1.0) {
    // Boost: Gamma(a) = Gamma(a+1) * U^{1/a}
    double u = rng.uniform01();
    if (u <= 0.0) u = 0x1.0p-53;
    return gamma_sample(shape + 1.0, rng) * std::pow(u, 1.0 / shape);
  }
  // Marsaglia-Tsang squeeze
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = rng.gaussian();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform01();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

std::vector<double> dirichlet_sample(double alpha, int n_bins, Rng& rng) {
  if (n_bins < 1) throw std::invalid_argument("dirichlet_sample: n_bins must be >= 1");
  std::vector<double> p(static_cast<std::size_t>(n_bins));
  double sum = 0.0;
  for (auto& v : p) {
    v = gamma_sample(alpha, rng);
    sum += v;
  }
  if (sum <= 0.0) {
    std::fill(p.begin(), p.end(), 1.0 / n_bins);
    return p;
  }
  for (auto& v : p) v /= sum;
  return p;
}

std::vector<std::vector<int>> partition_non_iid(const Dataset& data,
                                                const RealDatasetConfig& config, Rng& rng) {
  config.validate();
  const auto n_rows = data.targets.size();
  if (config.n_quantile_bins > n_rows)
    throw std::invalid_argument("partition_non_iid: more quantile bins than rows");

  // Equal-frequency bins over the target.
  std::vector<int> order(static_cast<std::size_t>(n_rows));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return data.targets[a] < data.targets[b]; });
  const int n_bins = config.n_quantile_bins;
  std::vector<std::vector<int>> bins(static_cast<std::size_t>(n_bins));
  for (int b = 0; b < n_bins; ++b) {
    const auto lo = static_cast<std::size_t>(static_cast<long long>(n_rows) * b / n_bins);
    const auto hi = static_cast<std::size_t>(static_cast<long long>(n_rows) * (b + 1) / n_bins);
    bins[static_cast<std::size_t>(b)].assign(order.begin() + static_cast<std::ptrdiff_t>(lo),
                                             order.begin() + static_cast<std::ptrdiff_t>(hi));
  }

  const int per_client = config.samples_per_client();
  std::vector<std::vector<int>> assignment(static_cast<std::size_t>(config.n_clients));
  for (int k = 0; k < config.n_clients; ++k) {
    const std::vector<double> mixing = dirichlet_sample(config.dirichlet_alpha, n_bins, rng);
    // Lazy per-client copy of each bin, consumed by partial Fisher-Yates so
    // the within-client draw is without replacement until exhaustion.
    std::vector<std::vector<int>> pool(bins.size());
    std::vector<std::size_t> cursor(bins.size(), 0);

    auto& mine = assignment[static_cast<std::size_t>(k)];
    mine.reserve(static_cast<std::size_t>(per_client));
    for (int s = 0; s < per_client; ++s) {
      const double u = rng.uniform01();
      double acc = 0.0;
      int b = n_bins - 1;
      for (int i = 0; i < n_bins; ++i) {
        acc += mixing[static_cast<std::size_t>(i)];
        if (u < acc) {
          b = i;
          break;
        }
      }
      auto& bin_pool = pool[static_cast<std::size_t>(b)];
      if (bin_pool.empty()) bin_pool = bins[static_cast<std::size_t>(b)];
      auto& cur = cursor[static_cast<std::size_t>(b)];
      if (cur < bin_pool.size()) {
        const std::size_t j = cur + static_cast<std::size_t>(rng.below(bin_pool.size() - cur));
        std::swap(bin_pool[cur], bin_pool[j]);
        mine.push_back(bin_pool[cur]);
        ++cur;
      } else {
        // Bin exhausted for this client: fall back to with-replacement.
        mine.push_back(bin_pool[static_cast<std::size_t>(rng.below(bin_pool.size()))]);
      }
    }
  }
  return assignment;
}

}  // namespace prism::datagen
