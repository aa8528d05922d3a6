#include <doctest.h>

#include <cmath>
#include <numeric>
#include <prism/robust_calib.hpp>
#include <prism/rng.hpp>

#include "oracles.hpp"

using namespace prism;
using namespace prism::robust_calib;

namespace {

CharacterizationVector on_simplex(std::vector<double> mass, int id = -1) {
  CharacterizationVector v;
  v.mass = std::move(mass);
  v.client_id = id;
  return v;
}

conformal::ScoreSet scores_of(std::vector<double> s) {
  conformal::ScoreSet set;
  set.scores = std::move(s);
  return set;
}

}  // namespace

TEST_SUITE("robust_calib") {

TEST_CASE("characterize bins normalized scores") {
  SUBCASE("everything below the first boundary lands in bin 0") {
    const auto spec = HistogramSpec::uniform(4, 1.0);
    const auto v = characterize(scores_of({0.0, 0.1, 0.2, 0.24}), spec);
    CHECK(v.mass[0] == 1.0);
    for (std::size_t h = 1; h < v.mass.size(); ++h) CHECK(v.mass[h] == 0.0);
  }
  SUBCASE("H=2, boundary 0.5, scores {0.2, 0.7, 0.9} -> (1/3, 2/3)") {
    const auto spec = HistogramSpec::uniform(2, 1.0);
    const auto v = characterize(scores_of({0.2, 0.7, 0.9}), spec);
    CHECK(v.mass[0] == doctest::Approx(1.0 / 3).epsilon(1e-12));
    CHECK(v.mass[1] == doctest::Approx(2.0 / 3).epsilon(1e-12));
  }
  SUBCASE("scores at and above the scale clip into the last bin") {
    const auto spec = HistogramSpec::uniform(5, 2.0);
    const auto v = characterize(scores_of({2.0, 3.5, 100.0}), spec);
    CHECK(v.mass[4] == 1.0);
  }
  SUBCASE("all-zero (efficiency-attacked) scores concentrate in bin 0") {
    const auto spec = HistogramSpec::uniform(30, 0.8);
    const auto v = characterize(scores_of(std::vector<double>(100, 0.0)), spec);
    CHECK(v.mass[0] == 1.0);
  }
  SUBCASE("output is always on the simplex") {
    Rng rng(11);
    const auto spec = HistogramSpec::uniform(10, 0.7);
    for (int t = 0; t < 200; ++t) {
      std::vector<double> s;
      const int n = 1 + static_cast<int>(rng.below(50));
      for (int i = 0; i < n; ++i) s.push_back(std::abs(rng.gaussian()));
      const auto v = characterize(scores_of(std::move(s)), spec);
      double sum = 0.0;
      for (double m : v.mass) {
        CHECK(m >= 0.0);
        sum += m;
      }
      CHECK(std::abs(sum - 1.0) <= 1e-12);
    }
  }
  SUBCASE("empty scores throw") {
    CHECK_THROWS_AS(characterize(scores_of({}), HistogramSpec::uniform(4, 1.0)),
                    std::invalid_argument);
  }
  SUBCASE("bad specs throw") {
    CHECK_THROWS_AS(HistogramSpec::uniform(1, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(HistogramSpec::uniform(4, 0.0), std::invalid_argument);
    HistogramSpec spec = HistogramSpec::uniform(4, 1.0);
    spec.boundaries[1] = spec.boundaries[2];  // not strictly increasing
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  }
}

TEST_CASE("pairwise distances") {
  SUBCASE("identical vectors give the zero matrix") {
    std::vector<CharacterizationVector> vs(3, on_simplex({0.5, 0.5}));
    const Eigen::MatrixXd d = pairwise_distances(vs);
    CHECK(d.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("orthogonal unit masses are sqrt(2) apart") {
    std::vector<CharacterizationVector> vs{on_simplex({1.0, 0.0}), on_simplex({0.0, 1.0})};
    const Eigen::MatrixXd d = pairwise_distances(vs);
    CHECK(d(0, 1) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
    CHECK(d(1, 0) == d(0, 1));
  }
  SUBCASE("random pairs match the dot-product oracle") {
    Rng rng(17);
    for (int t = 0; t < 100; ++t) {
      std::vector<CharacterizationVector> vs;
      for (int k = 0; k < 6; ++k) {
        std::vector<double> m(8);
        double sum = 0.0;
        for (auto& x : m) {
          x = rng.uniform(0.0, 1.0);
          sum += x;
        }
        for (auto& x : m) x /= sum;
        vs.push_back(on_simplex(std::move(m)));
      }
      const Eigen::MatrixXd d = pairwise_distances(vs);
      for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) {
          const double expected =
              oracle::dot_identity_distance(vs[static_cast<std::size_t>(i)].mass,
                                            vs[static_cast<std::size_t>(j)].mass);
          CHECK(std::abs(d(i, j) - expected) < 1e-12);
        }
      // triangle inequality
      for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j)
          for (int k = 0; k < 6; ++k) CHECK(d(i, j) <= d(i, k) + d(k, j) + 1e-12);
    }
  }
  SUBCASE("mixed bin counts throw") {
    std::vector<CharacterizationVector> vs{on_simplex({1.0, 0.0}), on_simplex({1.0, 0.0, 0.0})};
    CHECK_THROWS_AS(pairwise_distances(vs), std::invalid_argument);
  }
}

TEST_CASE("maliciousness scores") {
  SUBCASE("equidistant configuration gives (n_benign - 1) * d") {
    std::vector<CharacterizationVector> vs{
        on_simplex({1.0, 0.0, 0.0}), on_simplex({0.0, 1.0, 0.0}), on_simplex({0.0, 0.0, 1.0})};
    const auto m = maliciousness_scores(pairwise_distances(vs), 3);
    for (double v : m) CHECK(v == doctest::Approx(2.0 * std::sqrt(2.0)).epsilon(1e-12));
  }
  SUBCASE("three clients, hand-computed farthest sums") {
    // d12=1, d13=3, d23=2, n_benign=2 -> each row keeps its single largest
    Eigen::MatrixXd d(3, 3);
    d << 0, 1, 3, 1, 0, 2, 3, 2, 0;
    const auto m = maliciousness_scores(d, 2);
    CHECK(m[0] == doctest::Approx(3.0));
    CHECK(m[1] == doctest::Approx(2.0));
    CHECK(m[2] == doctest::Approx(3.0));
  }
  SUBCASE("matches brute force on random instances") {
    Rng rng(23);
    for (int t = 0; t < 50; ++t) {
      const int n = 3 + static_cast<int>(rng.below(18));  // up to 20 clients
      std::vector<std::vector<double>> raw(static_cast<std::size_t>(n),
                                           std::vector<double>(static_cast<std::size_t>(n), 0.0));
      Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
      for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
          const double v = rng.uniform(0.0, 2.0);
          raw[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = v;
          raw[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] = v;
          d(i, j) = v;
          d(j, i) = v;
        }
      const int n_benign = 2 + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - 1)));
      const auto mine = maliciousness_scores(d, n_benign);
      const auto expected = oracle::brute_force_maliciousness(raw, n_benign);
      for (int k = 0; k < n; ++k)
        CHECK(std::abs(mine[static_cast<std::size_t>(k)] -
                       expected[static_cast<std::size_t>(k)]) <= 1e-12);
    }
  }
  SUBCASE("permutation equivariance") {
    Rng rng(29);
    const int n = 8;
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) d(i, j) = d(j, i) = rng.uniform(0.0, 1.0);
    const auto base = maliciousness_scores(d, 5);

    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::swap(perm[0], perm[5]);
    std::swap(perm[2], perm[7]);
    Eigen::MatrixXd pd(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        pd(i, j) = d(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
    const auto permuted = maliciousness_scores(pd, 5);
    for (int i = 0; i < n; ++i)
      CHECK(permuted[static_cast<std::size_t>(i)] ==
            doctest::Approx(base[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])])
                .epsilon(1e-15));
  }
  SUBCASE("out-of-range n_benign throws") {
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(3, 3);
    CHECK_THROWS_AS(maliciousness_scores(d, 1), std::invalid_argument);
    CHECK_THROWS_AS(maliciousness_scores(d, 4), std::invalid_argument);
  }
}

TEST_CASE("top-B filter") {
  SUBCASE("B=0 flags nobody") {
    const auto out = filter_top_b({1.0, 2.0, 3.0}, 0);
    CHECK(out.flagged.empty());
    CHECK(out.benign.size() == 3);
  }
  SUBCASE("scores {5,1,2,9}, B=2 flags indices 3 and 0") {
    const auto out = filter_top_b({5.0, 1.0, 2.0, 9.0}, 2);
    REQUIRE(out.flagged.size() == 2);
    CHECK(out.flagged[0] == 0);
    CHECK(out.flagged[1] == 3);
    CHECK(out.benign == std::vector<int>{1, 2});
  }
  SUBCASE("ties flag the lower index first") {
    const auto out = filter_top_b({7.0, 7.0, 7.0, 1.0}, 2);
    CHECK(out.flagged == std::vector<int>{0, 1});
  }
  SUBCASE("B >= n_clients throws") {
    CHECK_THROWS_AS(filter_top_b({1.0, 2.0}, 2), std::invalid_argument);
  }
  SUBCASE("ground-truth annotation counts confusion") {
    auto out = filter_top_b({5.0, 1.0, 2.0, 9.0}, 2);
    annotate_detection(out, {true, false, false, false});
    CHECK(out.true_positives == 1);
    CHECK(out.false_positives == 1);
  }
}

TEST_CASE("MAD filter") {
  SUBCASE("identical vectors flag nobody") {
    std::vector<CharacterizationVector> vs(10, on_simplex({0.3, 0.7}));
    const auto out = filter_mad(vs);
    CHECK(out.flagged.empty());
  }
  SUBCASE("single outlier among identical vectors is flagged via the epsilon rule") {
    std::vector<CharacterizationVector> vs(9, on_simplex({1.0, 0.0}));
    vs.push_back(on_simplex({0.0, 1.0}));
    const auto out = filter_mad(vs);
    REQUIRE(out.flagged.size() == 1);
    CHECK(out.flagged[0] == 9);
  }
  SUBCASE("fewer than 3 clients throws") {
    std::vector<CharacterizationVector> vs(2, on_simplex({1.0, 0.0}));
    CHECK_THROWS_AS(filter_mad(vs), std::invalid_argument);
  }
}

TEST_CASE("histogram concentration around the population vector") {
  // 500 clients with 1000 samples each from a fixed half-normal law; the
  // fraction whose empirical histogram strays beyond the sqrt(3 log(2H/d)/N)
  // radius must stay below d=0.05 plus slack.
  const int n_clients = 500, n_samples = 1000, n_bins = 30;
  const double sigma = 0.12;
  const auto spec = HistogramSpec::uniform(n_bins, 1.0);

  std::vector<double> population(n_bins);
  for (int h = 0; h < n_bins; ++h)
    population[static_cast<std::size_t>(h)] =
        oracle::half_normal_cdf(spec.boundaries[static_cast<std::size_t>(h + 1)], sigma) -
        oracle::half_normal_cdf(spec.boundaries[static_cast<std::size_t>(h)], sigma);
  // clipping mass above 1 into the last bin
  population[static_cast<std::size_t>(n_bins - 1)] +=
      1.0 - oracle::half_normal_cdf(1.0, sigma);

  const double radius = std::sqrt(3.0) * std::sqrt(std::log(2.0 * n_bins / 0.05) / n_samples);
  Rng rng(53);
  int violations = 0;
  for (int k = 0; k < n_clients; ++k) {
    conformal::ScoreSet scores;
    for (int i = 0; i < n_samples; ++i) scores.scores.push_back(std::abs(rng.gaussian(0, sigma)));
    const auto v = characterize(scores, spec);
    double dist2 = 0.0;
    for (int h = 0; h < n_bins; ++h) {
      const double d = v.mass[static_cast<std::size_t>(h)] - population[static_cast<std::size_t>(h)];
      dist2 += d * d;
    }
    if (std::sqrt(dist2) > radius) ++violations;
  }
  CHECK(static_cast<double>(violations) / n_clients <= 0.05 + 0.02);
}

TEST_CASE("separation diagnostics") {
  SUBCASE("two point clusters: min cross distance equals the separation") {
    std::vector<CharacterizationVector> vs;
    std::vector<bool> byz;
    for (int i = 0; i < 4; ++i) {
      vs.push_back(on_simplex({1.0, 0.0}));
      byz.push_back(false);
    }
    for (int i = 0; i < 2; ++i) {
      vs.push_back(on_simplex({0.0, 1.0}));
      byz.push_back(true);
    }
    const auto rep = separation_diagnostics(vs, byz);
    CHECK(rep.separation == doctest::Approx(std::sqrt(2.0)));
    CHECK(rep.benign_radius == 0.0);
    CHECK(rep.adversary_radius == 0.0);
    CHECK(rep.min_cross_distance == doctest::Approx(rep.separation));
    CHECK(rep.condition_holds);
  }
  SUBCASE("inflating the benign radius past the separation kills the condition") {
    // benign cloud spread across the whole simplex, adversaries at a corner
    std::vector<CharacterizationVector> vs{
        on_simplex({1.0, 0.0}), on_simplex({0.0, 1.0}), on_simplex({0.5, 0.5}),
        on_simplex({0.45, 0.55}), on_simplex({0.0, 1.0})};
    std::vector<bool> byz{false, false, false, false, true};
    const auto rep = separation_diagnostics(vs, byz);
    CHECK_FALSE(rep.condition_holds);
  }
  SUBCASE("empty group throws") {
    std::vector<CharacterizationVector> vs{on_simplex({1.0, 0.0}), on_simplex({0.0, 1.0})};
    CHECK_THROWS_AS(separation_diagnostics(vs, {false, false}), std::invalid_argument);
  }
  SUBCASE("triangle-inequality lower bound holds on random clouds") {
    Rng rng(31);
    for (int t = 0; t < 100; ++t) {
      std::vector<CharacterizationVector> vs;
      std::vector<bool> byz;
      const int n = 6 + static_cast<int>(rng.below(10));
      for (int k = 0; k < n; ++k) {
        std::vector<double> m(5);
        double sum = 0.0;
        for (auto& x : m) {
          x = rng.uniform(0.0, 1.0);
          sum += x;
        }
        for (auto& x : m) x /= sum;
        vs.push_back(on_simplex(std::move(m)));
        byz.push_back(k < 2);
      }
      const auto rep = separation_diagnostics(vs, byz);
      CHECK(rep.min_cross_distance >=
            rep.separation - rep.adversary_radius - rep.benign_radius - 1e-12);
    }
  }
  SUBCASE("whenever the condition holds, top-B filtering is exact") {
    Rng rng(37);
    int condition_count = 0;
    for (int t = 0; t < 300; ++t) {
      const int n = 10, n_byz = 2;
      const double spread = rng.uniform(0.0, 0.6);
      std::vector<CharacterizationVector> vs;
      std::vector<bool> byz;
      for (int k = 0; k < n; ++k) {
        const bool is_b = k < n_byz;
        std::vector<double> m(3, 0.0);
        const double noise = rng.uniform(0.0, spread);
        if (is_b) {
          m = {noise / 2, noise / 2, 1.0 - noise};
        } else {
          m = {1.0 - noise, noise / 2, noise / 2};
        }
        vs.push_back(on_simplex(std::move(m)));
        byz.push_back(is_b);
      }
      const auto rep = separation_diagnostics(vs, byz);
      if (!rep.condition_holds) continue;
      ++condition_count;
      auto out = filter_top_b(maliciousness_scores(pairwise_distances(vs), n - n_byz), n_byz);
      annotate_detection(out, byz);
      CHECK(out.true_positives == n_byz);
      CHECK(out.false_positives == 0);
    }
    CHECK(condition_count > 0);  // the property must actually have been exercised
  }
}

}  // TEST_SUITE
