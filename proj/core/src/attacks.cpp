#include <prism/attacks.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace prism::attacks {

void TrainingAttackConfig::validate() const {
  if (!(attack_probability >= 0.0 && attack_probability <= 1.0))
    throw std::invalid_argument("TrainingAttackConfig: attack_probability outside [0,1]");
  if (perturbation_variance < 0.0)
    throw std::invalid_argument("TrainingAttackConfig: negative perturbation_variance");
}

void CalibAttackSpec::validate() const {
  if (!(coverage_multiplier > 1.0))
    throw std::invalid_argument("CalibAttackSpec: coverage_multiplier must exceed 1");
  if (random_variance < 0.0)
    throw std::invalid_argument("CalibAttackSpec: negative random_variance");
}

std::string to_string(CalibAttackKind kind) {
  switch (kind) {
    case CalibAttackKind::None: return "none";
    case CalibAttackKind::Efficiency: return "efficiency";
    case CalibAttackKind::Coverage: return "coverage";
    case CalibAttackKind::Random: return "random";
  }
  return "unknown";
}

CalibAttackKind calib_attack_kind_from_string(std::string_view name) {
  if (name == "none") return CalibAttackKind::None;
  if (name == "efficiency") return CalibAttackKind::Efficiency;
  if (name == "coverage") return CalibAttackKind::Coverage;
  if (name == "random") return CalibAttackKind::Random;
  throw std::invalid_argument("unknown calibration attack kind: " + std::string(name));
}

std::optional<ModelVector> training_perturbation(const TrainingAttackConfig& config,
                                                 int dimension, Rng& rng) {
  if (!rng.bernoulli(config.attack_probability)) return std::nullopt;
  const double stddev = std::sqrt(config.perturbation_variance);
  ModelVector delta(dimension);
  for (int d = 0; d < dimension; ++d) delta[d] = rng.gaussian(0.0, stddev);
  return delta;
}

conformal::ScoreSet corrupt_scores(const CalibAttackSpec& spec,
                                   const conformal::ScoreSet& true_scores, double benign_mean,
                                   Rng& rng) {
  for (double r : true_scores.scores)
    if (r < 0.0) throw std::invalid_argument("corrupt_scores: negative input score");

  conformal::ScoreSet out;
  out.client_id = true_scores.client_id;
  out.scores.reserve(true_scores.scores.size());

  switch (spec.kind) {
    case CalibAttackKind::None:
      out.scores = true_scores.scores;
      break;
    case CalibAttackKind::Efficiency:
      out.scores.assign(true_scores.scores.size(), 0.0);
      break;
    case CalibAttackKind::Coverage:
      out.scores.assign(true_scores.scores.size(), spec.coverage_multiplier * benign_mean);
      break;
    case CalibAttackKind::Random: {
      const double stddev = std::sqrt(spec.random_variance);
      for (double r : true_scores.scores)
        out.scores.push_back(std::max(0.0, r + rng.gaussian(0.0, stddev)));
      break;
    }
  }
  return out;
}

}  // namespace prism::attacks
