#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <prism/datagen.hpp>

#include "oracles.hpp"

using namespace prism;
using namespace prism::datagen;

namespace {

std::string write_temp_csv(const std::string& name, const std::string& content) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream out(path);
  out << content;
  return path.string();
}

}  // namespace

TEST_SUITE("datagen") {

TEST_CASE("true weights: unit norm, uniform direction, deterministic") {
  SyntheticConfig cfg;
  cfg.dimension = 50;
  SUBCASE("norm matches the target to 1e-12") {
    Rng rng(1);
    const ModelVector w = generate_true_weights(cfg, rng);
    CHECK(std::abs(w.norm() - 1.0) < 1e-12);
  }
  SUBCASE("one dimension leaves only +/-1") {
    cfg.dimension = 1;
    for (std::uint64_t s = 0; s < 20; ++s) {
      Rng rng(s);
      const ModelVector w = generate_true_weights(cfg, rng);
      CHECK(std::abs(std::abs(w[0]) - 1.0) < 1e-12);
    }
  }
  SUBCASE("same seed, same vector") {
    Rng a(7), b(7);
    CHECK(generate_true_weights(cfg, a) == generate_true_weights(cfg, b));
  }
  SUBCASE("coordinate means vanish over many draws") {
    Rng rng(3);
    cfg.dimension = 5;
    ModelVector mean = ModelVector::Zero(5);
    for (int i = 0; i < 20000; ++i) mean += generate_true_weights(cfg, rng);
    mean /= 20000;
    CHECK(mean.cwiseAbs().maxCoeff() < 0.02);
  }
}

TEST_CASE("client profiles fall in the configured ranges") {
  SyntheticConfig cfg;
  SUBCASE("all values inside [low, high]") {
    Rng rng(5);
    for (const auto& p : draw_client_profiles(cfg, 100, rng)) {
      CHECK(p.feature_variance >= 0.2);
      CHECK(p.feature_variance <= 1.2);
      CHECK(p.noise_variance >= 0.005);
      CHECK(p.noise_variance <= 0.025);
    }
  }
  SUBCASE("degenerate interval pins the value") {
    cfg.feature_variance_range = {0.7, 0.7};
    Rng rng(6);
    for (const auto& p : draw_client_profiles(cfg, 10, rng)) CHECK(p.feature_variance == 0.7);
  }
  SUBCASE("sample mean within 3 sigma of the midpoint") {
    Rng rng(8);
    const int n = 10000;
    double sum = 0.0;
    for (const auto& p : draw_client_profiles(cfg, n, rng)) sum += p.feature_variance;
    const double midpoint = 0.7;
    const double sigma_mean = (1.2 - 0.2) / std::sqrt(12.0) / std::sqrt(n);
    CHECK(std::abs(sum / n - midpoint) < 3.0 * sigma_mean);
  }
}

TEST_CASE("samples follow the linear model") {
  SyntheticConfig cfg;
  cfg.dimension = 10;
  Rng rng(9);
  const ModelVector w = generate_true_weights(cfg, rng);

  SUBCASE("negligible noise pins the target to w.x") {
    ClientDataProfile p{0, 0.5, 1e-30};
    Rng r2(10);
    for (int i = 0; i < 1000; ++i) {
      const Sample s = next_sample(p, w, r2);
      CHECK(std::abs(s.target - w.dot(s.features)) < 1e-10);
    }
  }
  SUBCASE("empirical feature variance within 3% of the profile value") {
    ClientDataProfile p{0, 0.8, 0.01};
    Rng r2(11);
    double sum2 = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
      const Sample s = next_sample(p, w, r2);
      sum2 += s.features[0] * s.features[0];
    }
    CHECK(std::abs(sum2 / n - 0.8) < 0.03 * 0.8);
  }
  SUBCASE("residuals under the true weights are half-normal (KS at the 1% level)") {
    ClientDataProfile p{0, 0.6, 0.02};
    const double sigma = std::sqrt(p.noise_variance);
    Rng r2(12);
    std::vector<double> residuals;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
      const Sample s = next_sample(p, w, r2);
      residuals.push_back(std::abs(s.target - w.dot(s.features)));
    }
    const double ks = oracle::ks_statistic(
        residuals, [&](double r) { return oracle::half_normal_cdf(r, sigma); });
    CHECK(ks < 1.62762 / std::sqrt(static_cast<double>(n)));
  }
  SUBCASE("identical seeds give bit-identical streams") {
    ClientDataProfile p{0, 0.6, 0.02};
    Rng a(13), b(13);
    for (int i = 0; i < 100; ++i) {
      const Sample sa = next_sample(p, w, a);
      const Sample sb = next_sample(p, w, b);
      CHECK(sa.target == sb.target);
      CHECK(sa.features == sb.features);
    }
  }
}

TEST_CASE("CSV loading and standardization") {
  RealDatasetConfig cfg;
  cfg.n_clients = 2;
  cfg.train_per_client = 1;
  cfg.calib_per_client = 1;
  cfg.test_per_client = 1;

  SUBCASE("3-row file matches the hand computation") {
    cfg.csv_path = write_temp_csv("prism_small.csv",
                                  "a,b,critical_temp\n"
                                  "1,4,10\n"
                                  "2,6,20\n"
                                  "3,8,30\n");
    const Dataset data = load_uci_dataset(cfg);
    REQUIRE(data.features.rows() == 3);
    REQUIRE(data.features.cols() == 2);
    // column {1,2,3}: mean 2, population std sqrt(2/3)
    const double z = 1.0 / std::sqrt(2.0 / 3.0);
    CHECK(data.features(0, 0) == doctest::Approx(-z).epsilon(1e-12));
    CHECK(data.features(1, 0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(data.features(2, 0) == doctest::Approx(z).epsilon(1e-12));
    CHECK(data.targets(0) == doctest::Approx(-z).epsilon(1e-12));
  }
  SUBCASE("columns end up with zero mean and unit variance") {
    std::string body = "x0,x1,critical_temp\n";
    Rng rng(14);
    for (int i = 0; i < 200; ++i) {
      char line[128];
      std::snprintf(line, sizeof line, "%.8f,%.8f,%.8f\n", rng.uniform(-3, 9),
                    rng.gaussian(5, 2), rng.uniform(0, 100));
      body += line;
    }
    cfg.csv_path = write_temp_csv("prism_rand.csv", body);
    Dataset data = load_uci_dataset(cfg);
    for (int c = 0; c < 2; ++c) {
      const auto col = data.features.col(c);
      CHECK(std::abs(col.mean()) < 1e-9);
      CHECK(std::abs(col.squaredNorm() / col.size() - 1.0) < 1e-9);
    }
    CHECK(std::abs(data.targets.mean()) < 1e-9);

    // idempotence: standardizing again changes nothing beyond 1e-9
    Eigen::MatrixXd again = data.features;
    standardize_columns(again);
    CHECK((again - data.features).cwiseAbs().maxCoeff() <= 1e-9);
  }
  SUBCASE("missing file reports the path") {
    cfg.csv_path = "/nonexistent/nowhere.csv";
    CHECK_THROWS_WITH_AS(load_uci_dataset(cfg),
                         doctest::Contains("/nonexistent/nowhere.csv"), std::runtime_error);
  }
  SUBCASE("malformed cell reports row and column") {
    cfg.csv_path = write_temp_csv("prism_bad.csv",
                                  "a,critical_temp\n"
                                  "1,10\n"
                                  "oops,20\n");
    CHECK_THROWS_WITH_AS(load_uci_dataset(cfg), doctest::Contains("row 3"), std::runtime_error);
  }
  SUBCASE("ragged row is rejected") {
    cfg.csv_path = write_temp_csv("prism_ragged.csv",
                                  "a,b,critical_temp\n"
                                  "1,2,3\n"
                                  "1,2\n");
    CHECK_THROWS_AS(load_uci_dataset(cfg), std::runtime_error);
  }
  SUBCASE("missing target column is rejected") {
    cfg.csv_path = write_temp_csv("prism_notarget.csv", "a,b\n1,2\n");
    CHECK_THROWS_WITH_AS(load_uci_dataset(cfg), doctest::Contains("critical_temp"),
                         std::runtime_error);
  }
}

TEST_CASE("dirichlet sampling") {
  SUBCASE("gamma mean tracks the shape") {
    Rng rng(15);
    for (double shape : {0.5, 1.0, 2.5}) {
      double sum = 0.0;
      const int n = 20000;
      for (int i = 0; i < n; ++i) sum += gamma_sample(shape, rng);
      CHECK(std::abs(sum / n - shape) < 0.05 * std::max(shape, 1.0));
    }
  }
  SUBCASE("proportions live on the simplex") {
    Rng rng(16);
    for (int t = 0; t < 100; ++t) {
      const auto p = dirichlet_sample(0.5, 10, rng);
      double sum = 0.0;
      for (double v : p) {
        CHECK(v >= 0.0);
        sum += v;
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
  SUBCASE("symmetric marginal mean: two bins, alpha=0.5") {
    Rng rng(17);
    double sum = 0.0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) sum += dirichlet_sample(0.5, 2, rng)[0];
    CHECK(std::abs(sum / n - 0.5) < 0.02);
  }
}

TEST_CASE("non-IID partitioning") {
  // In-memory dataset; partitioning only looks at the targets.
  Dataset data;
  const int n_rows = 40000;
  data.features = Eigen::MatrixXd::Zero(n_rows, 1);
  data.targets.resize(n_rows);
  Rng rng(18);
  for (int i = 0; i < n_rows; ++i) data.targets[i] = rng.uniform(0.0, 1.0);

  RealDatasetConfig cfg;
  cfg.n_clients = 4;
  cfg.train_per_client = 4000;
  cfg.calib_per_client = 4000;
  cfg.test_per_client = 4000;
  cfg.n_quantile_bins = 10;

  SUBCASE("every client receives exactly samples_per_client indices") {
    Rng prng(19);
    const auto parts = partition_non_iid(data, cfg, prng);
    REQUIRE(parts.size() == 4);
    for (const auto& idx : parts) {
      CHECK(static_cast<int>(idx.size()) == cfg.samples_per_client());
      for (int i : idx) {
        CHECK(i >= 0);
        CHECK(i < n_rows);
      }
    }
  }
  SUBCASE("huge alpha approaches uniform bin proportions") {
    cfg.dirichlet_alpha = 1e6;
    Rng prng(20);
    const auto parts = partition_non_iid(data, cfg, prng);
    // recover each index's bin from the target order
    std::vector<int> order(n_rows);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return data.targets[a] < data.targets[b]; });
    std::vector<int> bin_of(n_rows);
    for (int r = 0; r < n_rows; ++r) bin_of[order[r]] = r / (n_rows / 10);
    for (const auto& idx : parts) {
      std::vector<int> counts(10, 0);
      for (int i : idx) ++counts[bin_of[i]];
      for (int c : counts)
        CHECK(std::abs(c / static_cast<double>(idx.size()) - 0.1) < 0.01);
    }
  }
  SUBCASE("deterministic for a fixed seed") {
    Rng a(21), b(21);
    CHECK(partition_non_iid(data, cfg, a) == partition_non_iid(data, cfg, b));
  }
  SUBCASE("more bins than rows is rejected") {
    Dataset tiny;
    tiny.features = Eigen::MatrixXd::Zero(5, 1);
    tiny.targets = Eigen::VectorXd::LinSpaced(5, 0.0, 1.0);
    cfg.n_quantile_bins = 10;
    Rng prng(22);
    CHECK_THROWS_AS(partition_non_iid(tiny, cfg, prng), std::invalid_argument);
  }
}

TEST_CASE("config invariants are enforced") {
  SyntheticConfig bad;
  bad.dimension = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  SyntheticConfig bad2;
  bad2.feature_variance_range = {0.0, 1.0};
  CHECK_THROWS_AS(bad2.validate(), std::invalid_argument);
  SyntheticConfig bad3;
  bad3.noise_variance_range = {0.5, 0.1};
  CHECK_THROWS_AS(bad3.validate(), std::invalid_argument);
  RealDatasetConfig bad4;
  bad4.dirichlet_alpha = 0.0;
  CHECK_THROWS_AS(bad4.validate(), std::invalid_argument);
}

}  // TEST_SUITE
