#pragma once

#include <span>
#include <vector>

#include "safecert/nn.hpp"

namespace safecert {

// Per-coordinate interval vector.
struct BoxBounds {
  std::vector<double> lower;
  std::vector<double> upper;

  BoxBounds() = default;
  BoxBounds(std::vector<double> lo, std::vector<double> hi);

  int dim() const { return static_cast<int>(lower.size()); }
  bool contains(std::span<const double> x) const;
  double width(int i) const { return upper[i] - lower[i]; }

  static BoxBounds degenerate(std::span<const double> x);
  static BoxBounds intersect(const BoxBounds& a, const BoxBounds& b);
};

// Interval bound propagation. Sound; exact for a degenerate (zero-width) box.
BoxBounds ibp_bounds(const MlpParams& p, const BoxBounds& input);

// Backward linear relaxation bounds. Unstable ReLUs get the chord upper bound
// and a lower line of slope 0 or 1 (whichever has smaller relaxation area,
// slope 1 on ties). The result is intersected with IBP, so widths never exceed
// IBP's.
BoxBounds crown_bounds(const MlpParams& p, const BoxBounds& input);

// Feature bounds of g under an l_inf observation perturbation: the input box
// [o - eps, o + eps] clipped to the [0, 1] pixel domain, pushed through
// crown_bounds. Throws std::invalid_argument for eps < 0.
BoxBounds composite_feature_bounds(const MlpParams& g, std::span<const double> obs,
                                   double eps);

}  // namespace safecert
