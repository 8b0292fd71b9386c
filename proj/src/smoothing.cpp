#include "safecert/smoothing.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "safecert/errors.hpp"
#include "safecert/rng.hpp"

namespace safecert {

double phi(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

namespace {

// Acklam's rational approximation for the inverse normal CDF.
double phi_inv_approx(double p) {
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double p_low = 0.02425;
  if (p < p_low) {
    double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p > 1.0 - p_low) {
    double q = std::sqrt(-2.0 * std::log(1.0 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  double q = p - 0.5;
  double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

}  // namespace

double phi_inv(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw std::invalid_argument("phi_inv: p must lie in (0, 1)");
  double x = phi_inv_approx(p);
  // Two Halley refinement steps against erfc push the absolute error well
  // below the 1e-9 contract.
  for (int it = 0; it < 2; ++it) {
    const double e = phi(x) - p;
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
    if (pdf <= 0.0) break;
    const double u = e / pdf;
    x -= u / (1.0 + 0.5 * x * u);
  }
  return x;
}

SmoothingCache::SmoothingCache(const MlpParams& g, std::span<const double> obs,
                               const SmoothingConfig& cfg)
    : cfg_(cfg) {
  if (cfg.sigma <= 0.0) throw std::invalid_argument("smoothing: sigma must be positive");
  if (cfg.n_samples < 100)
    throw std::invalid_argument("smoothing: need at least 100 samples");
  const int dim_out = g.output_dim();
  sorted_.assign(dim_out, std::vector<double>(cfg.n_samples));
  std::vector<double> noisy(obs.size());
  for (int i = 0; i < cfg.n_samples; ++i) {
    Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(i)));
    for (std::size_t k = 0; k < obs.size(); ++k)
      noisy[k] = obs[k] + cfg.sigma * rng.normal();
    const std::vector<double> y = forward(g, noisy);
    for (int k = 0; k < dim_out; ++k) sorted_[k][i] = y[k];
  }
  for (auto& col : sorted_) std::sort(col.begin(), col.end());
}

BoxBounds SmoothingCache::bounds(double eps) const {
  if (eps < 0.0) throw std::invalid_argument("smoothing: eps must be non-negative");
  const int n = cfg_.n_samples;
  const double shift = eps / cfg_.sigma;
  const double p_lo = phi(-shift);
  const double p_hi = phi(shift);
  if (!(p_lo > 0.0) || !(p_hi < 1.0))
    throw SmoothingRangeError("smoothing range exceeded at eps=" + std::to_string(eps));

  long lo_raw = static_cast<long>(std::floor(n * p_lo)) - cfg_.index_margin;
  long hi_raw = static_cast<long>(std::ceil(n * p_hi)) - 1 + cfg_.index_margin;
  lo_raw = std::clamp(lo_raw, 0L, static_cast<long>(n - 1));
  hi_raw = std::clamp(hi_raw, 0L, static_cast<long>(n - 1));
  // At eps=0 both percentiles are 0.5 and the raw indices straddle the
  // median; order them so lower <= upper.
  const int lo = static_cast<int>(std::min(lo_raw, hi_raw));
  const int hi = static_cast<int>(std::max(lo_raw, hi_raw));

  BoxBounds out;
  out.lower.resize(sorted_.size());
  out.upper.resize(sorted_.size());
  for (std::size_t k = 0; k < sorted_.size(); ++k) {
    out.lower[k] = sorted_[k][lo];
    out.upper[k] = sorted_[k][hi];
  }
  return out;
}

BoxBounds median_smooth_bounds(const MlpParams& g, std::span<const double> obs,
                               double eps, const SmoothingConfig& cfg) {
  return SmoothingCache(g, obs, cfg).bounds(eps);
}

}  // namespace safecert
