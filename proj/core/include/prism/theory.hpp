// Calculators for the analytical bounds: quantile stability, interval-width
// perturbation, injected-energy accounting, histogram concentration radii,
// the score-separation condition, and certified coverage bounds. All pure
// functions of their inputs; nothing here touches the simulator.

#pragma once

#include <vector>

namespace prism::theory {

/// Inputs shared by the bound calculators. Field names describe roles:
///   density_floor / density_ceiling: bounds on the benign residual density
///       near the target quantile / at the bin edges
///   cdf_lipschitz:   local Lipschitz constant of the benign residual CDF
///   feature_rms:     sqrt(E |x|^2)
///   feature_trace:   trace of the feature covariance
///   model_error_rms: upper bound on benign parameter error
///   separation:      distance between the adversarial and benign
///       population histograms
struct BoundInputs {
  double density_floor = 1.0;
  double density_ceiling = 1.0;
  double cdf_lipschitz = 1.0;
  double feature_rms = 1.0;
  double feature_trace = 1.0;
  double model_error_rms = 0.0;
  int n_bins = 2;
  int n_clients = 2;
  int n_benign = 2;
  int n_byzantine = 0;
  int n_calib = 1;
  double filter_failure_rate = 0.0;  // epsilon
  double confidence = 0.05;          // beta
  double alpha = 0.1;
  double separation = 0.0;
  double adversary_radius = 0.0;
  double benign_radius = 0.0;
  double mse_noise_dynamics = 0.0;
  double mse_byzantine = 0.0;
  double mse_irreducible = 0.0;
};

/// |q - q*| <= (2 sqrt(2L) / f_min) * sqrt(E|X - Y|).
double quantile_stability_bound(const BoundInputs& in, double expected_abs_residual_gap);

/// |q - q*| <= (2 sqrt(2L) / f_min) * sqrt(L_x) * mse^{1/4}.
double quantile_mse_bound(const BoundInputs& in, double mse);

/// |width - width*| <= (4 sqrt(2L) / f_min) * trace^{1/4} * mse^{1/4}.
double width_bound(const BoundInputs& in, double mse);

/// Expected injected perturbation energy per uplink:
/// byzantine * attack_probability * n_shared * perturbation_variance.
double attack_energy(int byzantine, double attack_probability, int n_shared,
                     double perturbation_variance);

/// Benign histogram radius: concentration term sqrt(3 log(2 H K_b / delta) / n)
/// plus drift term 2 sqrt(2(H+1)) * f_max * L_x * e_rms.
double benign_radius(const BoundInputs& in, double delta, int n_min);

struct SeparationCheck {
  bool holds = false;
  double slack = 0.0;  // LHS - RHS
};

/// Evaluates (K_b - 1) (D - r_a - r_b) > B (D + r_a + r_b) + (K_b - 1 - B) 2 r_b
/// from the radii stored in `in`. Requires n_byzantine < n_benign - 1.
SeparationCheck score_separation_holds(const BoundInputs& in);

struct CoverageBounds {
  double delta_lower = 0.0;
  double delta_upper = 0.0;
  double certified_low(double alpha) const { return 1.0 - alpha - delta_lower; }
  double certified_high(double alpha) const { return 1.0 - alpha + delta_upper; }
};

/// Certified slack around 1 - alpha for the post-filtering empirical
/// coverage, at confidence 1 - beta. Requires (K - K_b)/K_b < 1.
CoverageBounds coverage_bounds(const BoundInputs& in);

/// Standard normal quantile function, |Phi(z) - p| < 1e-9 over (0,1).
double inverse_normal_cdf(double p);

/// Density bounds estimated from an empirical CDF by central differences on
/// a grid of half-width `window` around `quantile`. Estimation mode for real
/// data where the residual law is unknown.
struct DensityBounds {
  double density_floor = 0.0;
  double density_ceiling = 0.0;
  double cdf_lipschitz = 0.0;
};
DensityBounds estimate_density_bounds(std::vector<double> scores, double quantile, double window);

/// Residual law of the synthetic generator: an equal-weight mixture of
/// half-normal distributions, one component per client noise scale.
class HalfNormalMixture {
 public:
  explicit HalfNormalMixture(std::vector<double> sigmas);
  double cdf(double r) const;
  double pdf(double r) const;
  double quantile(double p) const;  // bisection on the cdf

 private:
  std::vector<double> sigmas_;
};

}  // namespace prism::theory
