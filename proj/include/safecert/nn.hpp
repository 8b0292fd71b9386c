#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace safecert {

struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;  // row-major

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}

  double& operator()(int i, int j) { return a[static_cast<std::size_t>(i) * cols + j]; }
  double operator()(int i, int j) const { return a[static_cast<std::size_t>(i) * cols + j]; }
};

struct LinearLayer {
  Matrix w;               // out x in
  std::vector<double> b;  // out

  int out_dim() const { return w.rows; }
  int in_dim() const { return w.cols; }
};

// Fully-connected net: ReLU on all hidden layers, identity on the output.
struct MlpParams {
  std::vector<LinearLayer> layers;

  int input_dim() const { return layers.empty() ? 0 : layers.front().in_dim(); }
  int output_dim() const { return layers.empty() ? 0 : layers.back().out_dim(); }
  int layer_count() const { return static_cast<int>(layers.size()); }

  // throws FormatError if adjacent dimensions do not chain or entries are not finite
  void validate() const;
};

std::vector<double> forward(const MlpParams& p, std::span<const double> x);

// Gradients of upstream . forward(p, x) w.r.t. every parameter and x.
struct GradientSet {
  std::vector<LinearLayer> layers;  // shape-congruent with the MlpParams
  std::vector<double> input;
};

GradientSet backward(const MlpParams& p, std::span<const double> x,
                     std::span<const double> upstream);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<LinearLayer> m;
  std::vector<LinearLayer> v;
  long t = 0;
};

// One Adam update in place. Lazily sizes the state; throws TrainingFault on
// non-finite gradients.
void optimize_step(MlpParams& p, const GradientSet& g, AdamState& st,
                   const AdamConfig& cfg = {});

// MLPv1 text format: header "MLPv1 <n_layers>", then per layer a "<out> <in>"
// line, <out> weight rows and one bias row. ASCII decimal (17 significant
// digits), LF line endings; round-trips bit-exactly.
std::string params_to_text(const MlpParams& p);
MlpParams params_from_text(const std::string& text);
void save_params(const MlpParams& p, const std::string& path);
MlpParams load_params(const std::string& path);

// Deterministic He-style initialization.
MlpParams make_mlp(const std::vector<int>& dims, std::uint64_t seed);

}  // namespace safecert
