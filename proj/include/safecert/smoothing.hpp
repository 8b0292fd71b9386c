#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "safecert/bounds.hpp"
#include "safecert/nn.hpp"

namespace safecert {

// Standard normal CDF and its inverse. Absolute error below 1e-9 over the
// working range; phi_inv throws std::invalid_argument outside (0, 1).
double phi(double x);
double phi_inv(double p);

struct SmoothingConfig {
  double sigma = 0.05;
  int n_samples = 2000;
  std::uint64_t seed = 0;
  // Optional conservative widening of the selected order statistics
  // (lower index - margin, upper index + margin). 0 follows the plain
  // empirical-percentile procedure.
  int index_margin = 0;
};

// Holds the sorted per-coordinate sample values of g(obs + sigma * G) so an
// epsilon scan can reuse one sample set; bounds for any eps are then index
// lookups. Sample i draws from a deterministic function of (seed, i).
class SmoothingCache {
 public:
  SmoothingCache(const MlpParams& g, std::span<const double> obs,
                 const SmoothingConfig& cfg);

  // Median bounds under an l2 perturbation of magnitude eps: order statistics
  // at floor(n * p_lo) and ceil(n * p_hi) - 1 for the shifted percentiles
  // p_lo = Phi(-eps/sigma), p_hi = Phi(eps/sigma). Throws SmoothingRangeError
  // when the shifted percentile saturates in double precision.
  BoxBounds bounds(double eps) const;

  int output_dim() const { return static_cast<int>(sorted_.size()); }

 private:
  SmoothingConfig cfg_;
  std::vector<std::vector<double>> sorted_;  // [coord][sample], ascending
};

BoxBounds median_smooth_bounds(const MlpParams& g, std::span<const double> obs,
                               double eps, const SmoothingConfig& cfg);

}  // namespace safecert
