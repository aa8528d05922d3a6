#include <prism/theory.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace prism::theory {

double quantile_stability_bound(const BoundInputs& in, double expected_abs_residual_gap) {
  if (!(in.density_floor > 0.0))
    throw std::invalid_argument("quantile_stability_bound: density_floor must be > 0");
  if (expected_abs_residual_gap < 0.0)
    throw std::invalid_argument("quantile_stability_bound: negative residual gap");
  return 2.0 * std::sqrt(2.0 * in.cdf_lipschitz) / in.density_floor *
         std::sqrt(expected_abs_residual_gap);
}

double quantile_mse_bound(const BoundInputs& in, double mse) {
  if (!(in.density_floor > 0.0))
    throw std::invalid_argument("quantile_mse_bound: density_floor must be > 0");
  if (mse < 0.0) throw std::invalid_argument("quantile_mse_bound: negative mse");
  return 2.0 * std::sqrt(2.0 * in.cdf_lipschitz) / in.density_floor * std::sqrt(in.feature_rms) *
         std::pow(mse, 0.25);
}

double width_bound(const BoundInputs& in, double mse) {
  if (!(in.density_floor > 0.0))
    throw std::invalid_argument("width_bound: density_floor must be > 0");
  if (!(in.feature_trace > 0.0))
    throw std::invalid_argument("width_bound: feature_trace must be > 0");
  if (mse < 0.0) throw std::invalid_argument("width_bound: negative mse");
  const double k_width =
      4.0 * std::sqrt(2.0 * in.cdf_lipschitz) / in.density_floor * std::pow(in.feature_trace, 0.25);
  return k_width * std::pow(mse, 0.25);
}

double attack_energy(int byzantine, double attack_probability, int n_shared,
                     double perturbation_variance) {
  if (byzantine != 0 && byzantine != 1)
    throw std::invalid_argument("attack_energy: byzantine flag must be 0 or 1");
  if (!(attack_probability >= 0.0 && attack_probability <= 1.0))
    throw std::invalid_argument("attack_energy: attack_probability outside [0,1]");
  if (n_shared < 0 || perturbation_variance < 0.0)
    throw std::invalid_argument("attack_energy: negative inputs");
  return byzantine * attack_probability * n_shared * perturbation_variance;
}

double benign_radius(const BoundInputs& in, double delta, int n_min) {
  if (!(delta > 0.0 && delta < 1.0))
    throw std::invalid_argument("benign_radius: delta must lie in (0,1)");
  if (n_min < 1) throw std::invalid_argument("benign_radius: n_min must be >= 1");
  const double concentration =
      std::sqrt(3.0) * std::sqrt(std::log(2.0 * in.n_bins * in.n_benign / delta) / n_min);
  const double drift = 2.0 * std::sqrt(2.0 * (in.n_bins + 1)) * in.density_ceiling *
                       in.feature_rms * in.model_error_rms;
  return concentration + drift;
}

SeparationCheck score_separation_holds(const BoundInputs& in) {
  if (!(in.n_byzantine < in.n_benign - 1))
    throw std::invalid_argument("score_separation_holds: requires n_byzantine < n_benign - 1");
  const double margin_low = in.separation - in.adversary_radius - in.benign_radius;
  const double margin_high = in.separation + in.adversary_radius + in.benign_radius;
  const double lhs = (in.n_benign - 1) * margin_low;
  const double rhs = in.n_byzantine * margin_high +
                     (in.n_benign - 1 - in.n_byzantine) * 2.0 * in.benign_radius;
  return SeparationCheck{lhs > rhs, lhs - rhs};
}

CoverageBounds coverage_bounds(const BoundInputs& in) {
  if (in.n_calib < 1) throw std::invalid_argument("coverage_bounds: n_calib must be >= 1");
  if (!(in.confidence > 0.0 && in.confidence < 1.0))
    throw std::invalid_argument("coverage_bounds: confidence must lie in (0,1)");
  if (in.n_benign < 1) throw std::invalid_argument("coverage_bounds: n_benign must be >= 1");
  const double ratio = static_cast<double>(in.n_clients - in.n_benign) / in.n_benign;
  if (!(ratio < 1.0))
    throw std::invalid_argument("coverage_bounds: Byzantine/benign ratio must be < 1");

  const double n_b = static_cast<double>(in.n_calib);
  const double k_b = static_cast<double>(in.n_benign);
  const double eps = in.filter_failure_rate;
  const double z = inverse_normal_cdf(1.0 - in.confidence / (2.0 * in.n_bins * k_b));
  const double fluctuation =
      in.n_bins * z / (2.0 * std::sqrt(n_b)) * (1.0 + ratio) / (1.0 - ratio);

  CoverageBounds out;
  out.delta_lower = (eps * n_b + 1.0) / (n_b + k_b) + fluctuation;
  out.delta_upper = eps + k_b / (n_b + k_b) + fluctuation;
  return out;
}

double inverse_normal_cdf(double p) {
  // ALGORITHM AS241, Appl. Statist. (1988) vol. 37 no. 3 (PPND16): rational
  // approximations on three regimes, accurate to ~1 part in 1e16.
  if (!(p > 0.0 && p < 1.0))
    throw std::invalid_argument("inverse_normal_cdf: p must lie in (0,1)");

  const double q = p - 0.5;
  if (std::abs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q *
           (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r +
                 6.7265770927008700853e+4) * r + 4.5921953931549871457e+4) * r +
               1.3731693765509461125e+4) * r + 1.9715909503065514427e+3) * r +
             1.3314166789178437745e+2) * r + 3.3871328727963666080e+0) /
           (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r +
                 3.9307895800092710610e+4) * r + 2.1213794301586595867e+4) * r +
               5.3941960214247511077e+3) * r + 6.8718700749205790830e+2) * r +
             4.2313330701600911252e+1) * r + 1.0);
  }

  double r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double value;
  if (r <= 5.0) {
    r -= 1.6;
    value = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                  2.41780725177450611770e-1) * r + 1.27045825245236838258e+0) * r +
                3.64784832476320460504e+0) * r + 5.76949722146069140550e+0) * r +
              4.63033784615654529590e+0) * r + 1.42343711074968357734e+0) /
            (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                  1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
                6.89767334985100004550e-1) * r + 1.67638483018380384940e+0) * r +
              2.05319162663775882187e+0) * r + 1.0);
  } else {
    r -= 5.0;
    value = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                  1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
                2.96560571828504891230e-1) * r + 1.78482653991729133580e+0) * r +
              5.46378491116411436990e+0) * r + 6.65790464350110377720e+0) /
            (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                  1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
                1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
              5.99832206555887937690e-1) * r + 1.0);
  }
  return q < 0.0 ? -value : value;
}

DensityBounds estimate_density_bounds(std::vector<double> scores, double quantile, double window) {
  if (scores.empty()) throw std::invalid_argument("estimate_density_bounds: empty scores");
  if (!(window > 0.0)) throw std::invalid_argument("estimate_density_bounds: window must be > 0");
  std::sort(scores.begin(), scores.end());
  const double n = static_cast<double>(scores.size());

  auto ecdf = [&](double t) {
    auto it = std::upper_bound(scores.begin(), scores.end(), t);
    return static_cast<double>(it - scores.begin()) / n;
  };

  // Central differences at 9 grid points across [quantile - window, + window].
  const double h = window / 4.0;
  DensityBounds out;
  out.density_floor = std::numeric_limits<double>::infinity();
  for (int i = -4; i <= 4; ++i) {
    const double t = quantile + i * h;
    const double f = (ecdf(t + h) - ecdf(t - h)) / (2.0 * h);
    out.density_floor = std::min(out.density_floor, f);
    out.density_ceiling = std::max(out.density_ceiling, f);
  }
  out.cdf_lipschitz = out.density_ceiling;
  return out;
}

HalfNormalMixture::HalfNormalMixture(std::vector<double> sigmas) : sigmas_(std::move(sigmas)) {
  if (sigmas_.empty()) throw std::invalid_argument("HalfNormalMixture: no components");
  for (double s : sigmas_)
    if (!(s > 0.0)) throw std::invalid_argument("HalfNormalMixture: scales must be > 0");
}

double HalfNormalMixture::cdf(double r) const {
  if (r <= 0.0) return 0.0;
  double acc = 0.0;
  for (double s : sigmas_) acc += std::erf(r / (s * std::sqrt(2.0)));
  return acc / static_cast<double>(sigmas_.size());
}

double HalfNormalMixture::pdf(double r) const {
  if (r < 0.0) return 0.0;
  double acc = 0.0;
  for (double s : sigmas_) acc += std::sqrt(2.0 / M_PI) / s * std::exp(-r * r / (2.0 * s * s));
  return acc / static_cast<double>(sigmas_.size());
}

double HalfNormalMixture::quantile(double p) const {
  if (!(p > 0.0 && p < 1.0))
    throw std::invalid_argument("HalfNormalMixture::quantile: p must lie in (0,1)");
  double lo = 0.0;
  double hi = 100.0 * *std::max_element(sigmas_.begin(), sigmas_.end());
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (cdf(mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace prism::theory
