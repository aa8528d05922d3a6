// Adversarial behavior models: the stochastic training-phase model-update
// perturbation and the three calibration-phase score-submission attacks.

#pragma once

#include <optional>
#include <string>
#include <string_view>

#include <prism/conformal.hpp>
#include <prism/rng.hpp>
#include <prism/types.hpp>

namespace prism::attacks {

struct TrainingAttackConfig {
  double attack_probability = 0.0;    // chance a Byzantine uplink is perturbed
  double perturbation_variance = 0.0; // per-coordinate Gaussian variance
  void validate() const;
};

enum class CalibAttackKind { None, Efficiency, Coverage, Random };

std::string to_string(CalibAttackKind kind);
CalibAttackKind calib_attack_kind_from_string(std::string_view name);

struct CalibAttackSpec {
  CalibAttackKind kind = CalibAttackKind::None;
  double coverage_multiplier = 10.0;  // coverage attack: score = multiplier * benign mean
  double random_variance = 0.5;       // random attack: additive Gaussian variance
  void validate() const;
};

/// With probability `attack_probability`, a zero-mean white Gaussian
/// perturbation of the given dimension; otherwise absent.
std::optional<ModelVector> training_perturbation(const TrainingAttackConfig& config,
                                                 int dimension, Rng& rng);

/// Applies the calibration attack to one client's honest scores.
/// `benign_mean` is the mean of the attacker's own uncorrupted scores (the
/// only mean an attacker can observe). Never produces negative scores.
conformal::ScoreSet corrupt_scores(const CalibAttackSpec& spec,
                                   const conformal::ScoreSet& true_scores, double benign_mean,
                                   Rng& rng);

}  // namespace prism::attacks
