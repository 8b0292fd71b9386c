#include "safecert/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace safecert {

BoxBounds::BoxBounds(std::vector<double> lo, std::vector<double> hi)
    : lower(std::move(lo)), upper(std::move(hi)) {
  if (lower.size() != upper.size())
    throw std::invalid_argument("BoxBounds: lower/upper length mismatch");
  for (std::size_t i = 0; i < lower.size(); ++i)
    if (!(lower[i] <= upper[i]))
      throw std::invalid_argument("BoxBounds: lower exceeds upper");
}

bool BoxBounds::contains(std::span<const double> x) const {
  if (x.size() != lower.size()) return false;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x[i] < lower[i] || x[i] > upper[i]) return false;
  return true;
}

BoxBounds BoxBounds::degenerate(std::span<const double> x) {
  std::vector<double> v(x.begin(), x.end());
  return BoxBounds(v, v);
}

BoxBounds BoxBounds::intersect(const BoxBounds& a, const BoxBounds& b) {
  if (a.dim() != b.dim()) throw std::invalid_argument("intersect: dimension mismatch");
  BoxBounds out;
  out.lower.resize(a.dim());
  out.upper.resize(a.dim());
  for (int i = 0; i < a.dim(); ++i) {
    out.lower[i] = std::max(a.lower[i], b.lower[i]);
    out.upper[i] = std::min(a.upper[i], b.upper[i]);
    if (out.lower[i] > out.upper[i]) {  // float noise on touching boxes; keep a
      out.lower[i] = a.lower[i];
      out.upper[i] = a.upper[i];
    }
  }
  return out;
}

namespace {

void check_input(const MlpParams& p, const BoxBounds& input) {
  if (input.dim() != p.input_dim())
    throw std::invalid_argument("bounds: input dimension mismatch");
}

// Affine image of a box via center/radius; with a zero-width box this
// reproduces forward()'s accumulation order exactly.
void affine_interval(const LinearLayer& layer, const std::vector<double>& lo,
                     const std::vector<double>& hi, std::vector<double>& out_lo,
                     std::vector<double>& out_hi) {
  const int n = layer.in_dim();
  std::vector<double> mid(n), rad(n);
  for (int j = 0; j < n; ++j) {
    mid[j] = 0.5 * (lo[j] + hi[j]);
    rad[j] = 0.5 * (hi[j] - lo[j]);
  }
  out_lo.resize(layer.out_dim());
  out_hi.resize(layer.out_dim());
  for (int i = 0; i < layer.out_dim(); ++i) {
    double c = layer.b[i];
    for (int j = 0; j < n; ++j) c += layer.w(i, j) * mid[j];
    double r = 0.0;
    for (int j = 0; j < n; ++j) r += std::abs(layer.w(i, j)) * rad[j];
    out_lo[i] = c - r;
    out_hi[i] = c + r;
  }
}

struct PreactBoxes {
  // pre-activation bounds per layer (layer l's affine output before ReLU)
  std::vector<std::vector<double>> lo, hi;
};

PreactBoxes ibp_preact(const MlpParams& p, const BoxBounds& input) {
  PreactBoxes out;
  out.lo.resize(p.layer_count());
  out.hi.resize(p.layer_count());
  std::vector<double> lo(input.lower), hi(input.upper);
  for (int l = 0; l < p.layer_count(); ++l) {
    affine_interval(p.layers[l], lo, hi, out.lo[l], out.hi[l]);
    lo = out.lo[l];
    hi = out.hi[l];
    if (l + 1 < p.layer_count())
      for (std::size_t i = 0; i < lo.size(); ++i) {
        lo[i] = std::max(lo[i], 0.0);
        hi[i] = std::max(hi[i], 0.0);
      }
  }
  return out;
}

// Backward linear-relaxation bounds for the pre-activation of layer `target`
// (0-based), given refined pre-activation boxes for all earlier layers.
void crown_backward(const MlpParams& p, const BoxBounds& input,
                    const PreactBoxes& pre, int target, std::vector<double>& out_lo,
                    std::vector<double>& out_hi) {
  const int rows = p.layers[target].out_dim();

  // One pass per bound direction: propagate out = A * z + c backwards.
  for (int dir = 0; dir < 2; ++dir) {
    const bool upper = dir == 1;
    Matrix A = p.layers[target].w;
    std::vector<double> c = p.layers[target].b;

    for (int l = target - 1; l >= 0; --l) {
      const int width = p.layers[l].out_dim();
      // substitute z_l = relu(zhat_l) by a per-sign linear relaxation
      Matrix At(rows, width);
      for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < width; ++j) {
          const double a = A(i, j);
          if (a == 0.0) continue;
          const double lj = pre.lo[l][j];
          const double uj = pre.hi[l][j];
          double coef, icept = 0.0;
          if (lj >= 0.0) {
            coef = 1.0;
          } else if (uj <= 0.0) {
            coef = 0.0;
          } else {
            const double slope = uj / (uj - lj);
            const bool want_upper_relax = upper ? (a > 0.0) : (a < 0.0);
            if (want_upper_relax) {
              coef = slope;
              icept = -slope * lj;
            } else {
              coef = uj >= -lj ? 1.0 : 0.0;  // area tie resolves to slope 1
            }
          }
          At(i, j) = a * coef;
          c[i] += a * icept;
        }
      }
      // pre-multiply through the affine layer l
      const LinearLayer& layer = p.layers[l];
      Matrix Anew(rows, layer.in_dim());
      for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < width; ++j) {
          const double a = At(i, j);
          if (a == 0.0) continue;
          c[i] += a * layer.b[j];
          for (int k = 0; k < layer.in_dim(); ++k) Anew(i, k) += a * layer.w(j, k);
        }
      }
      A = std::move(Anew);
    }

    // optimize the final linear function over the input box
    std::vector<double>& out = upper ? out_hi : out_lo;
    out.resize(rows);
    for (int i = 0; i < rows; ++i) {
      double v = c[i];
      for (int j = 0; j < input.dim(); ++j) {
        const double a = A(i, j);
        if (upper)
          v += a >= 0.0 ? a * input.upper[j] : a * input.lower[j];
        else
          v += a >= 0.0 ? a * input.lower[j] : a * input.upper[j];
      }
      out[i] = v;
    }
  }
}

}  // namespace

BoxBounds ibp_bounds(const MlpParams& p, const BoxBounds& input) {
  check_input(p, input);
  PreactBoxes pre = ibp_preact(p, input);
  return BoxBounds(pre.lo.back(), pre.hi.back());
}

BoxBounds crown_bounds(const MlpParams& p, const BoxBounds& input) {
  check_input(p, input);
  const int L = p.layer_count();
  // Refined pre-activation boxes: IBP first, then tightened layer by layer
  // with a backward pass so later relaxations use the best available boxes.
  PreactBoxes pre = ibp_preact(p, input);
  for (int l = 0; l < L - 1; ++l) {
    std::vector<double> lo, hi;
    crown_backward(p, input, pre, l, lo, hi);
    for (std::size_t i = 0; i < lo.size(); ++i) {
      const double ibp_lo = pre.lo[l][i];
      const double ibp_hi = pre.hi[l][i];
      pre.lo[l][i] = std::max(ibp_lo, lo[i]);
      pre.hi[l][i] = std::min(ibp_hi, hi[i]);
      if (pre.lo[l][i] > pre.hi[l][i]) {  // float noise; keep the IBP box
        pre.lo[l][i] = ibp_lo;
        pre.hi[l][i] = ibp_hi;
      }
    }
  }
  std::vector<double> lo, hi;
  crown_backward(p, input, pre, L - 1, lo, hi);
  return BoxBounds::intersect(BoxBounds(pre.lo.back(), pre.hi.back()),
                              BoxBounds(std::move(lo), std::move(hi)));
}

BoxBounds composite_feature_bounds(const MlpParams& g, std::span<const double> obs,
                                   double eps) {
  if (eps < 0.0) throw std::invalid_argument("composite_feature_bounds: negative eps");
  BoxBounds in;
  in.lower.resize(obs.size());
  in.upper.resize(obs.size());
  for (std::size_t i = 0; i < obs.size(); ++i) {
    in.lower[i] = std::clamp(obs[i] - eps, 0.0, 1.0);
    in.upper[i] = std::clamp(obs[i] + eps, 0.0, 1.0);
  }
  return crown_bounds(g, in);
}

}  // namespace safecert
