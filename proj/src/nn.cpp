#include "safecert/nn.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "safecert/errors.hpp"
#include "safecert/rng.hpp"

namespace safecert {

namespace {

void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void MlpParams::validate() const {
  if (layers.empty()) throw FormatError("empty network");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const LinearLayer& layer = layers[l];
    if (layer.w.rows <= 0 || layer.w.cols <= 0 ||
        layer.b.size() != static_cast<std::size_t>(layer.w.rows))
      throw FormatError("layer " + std::to_string(l) + " has inconsistent shape");
    if (l > 0 && layers[l - 1].out_dim() != layer.in_dim())
      throw FormatError("layer dimensions do not chain at layer " + std::to_string(l));
    for (double v : layer.w.a)
      if (!std::isfinite(v)) throw FormatError("non-finite weight");
    for (double v : layer.b)
      if (!std::isfinite(v)) throw FormatError("non-finite bias");
  }
}

std::vector<double> forward(const MlpParams& p, std::span<const double> x) {
  require(!p.layers.empty(), "forward: empty network");
  require(static_cast<int>(x.size()) == p.input_dim(), "forward: input dimension mismatch");
  std::vector<double> cur(x.begin(), x.end());
  for (int l = 0; l < p.layer_count(); ++l) {
    const LinearLayer& layer = p.layers[l];
    std::vector<double> next(layer.out_dim());
    for (int i = 0; i < layer.out_dim(); ++i) {
      double acc = layer.b[i];
      for (int j = 0; j < layer.in_dim(); ++j) acc += layer.w(i, j) * cur[j];
      next[i] = acc;
    }
    if (l + 1 < p.layer_count())
      for (double& v : next) v = v > 0.0 ? v : 0.0;
    cur = std::move(next);
  }
  return cur;
}

GradientSet backward(const MlpParams& p, std::span<const double> x,
                     std::span<const double> upstream) {
  require(static_cast<int>(x.size()) == p.input_dim(), "backward: input dimension mismatch");
  require(static_cast<int>(upstream.size()) == p.output_dim(),
          "backward: upstream dimension mismatch");

  const int L = p.layer_count();
  // forward pass keeping pre-activations
  std::vector<std::vector<double>> inputs(L);   // input of each layer
  std::vector<std::vector<double>> preact(L);
  std::vector<double> cur(x.begin(), x.end());
  for (int l = 0; l < L; ++l) {
    inputs[l] = cur;
    const LinearLayer& layer = p.layers[l];
    std::vector<double> z(layer.out_dim());
    for (int i = 0; i < layer.out_dim(); ++i) {
      double acc = layer.b[i];
      for (int j = 0; j < layer.in_dim(); ++j) acc += layer.w(i, j) * cur[j];
      z[i] = acc;
    }
    preact[l] = z;
    if (l + 1 < L)
      for (double& v : z) v = v > 0.0 ? v : 0.0;
    cur = std::move(z);
  }

  GradientSet g;
  g.layers.resize(L);
  std::vector<double> delta(upstream.begin(), upstream.end());
  for (int l = L - 1; l >= 0; --l) {
    const LinearLayer& layer = p.layers[l];
    if (l + 1 < L)  // ReLU backward; subgradient at exactly 0 is 0
      for (int i = 0; i < layer.out_dim(); ++i)
        if (preact[l][i] <= 0.0) delta[i] = 0.0;
    LinearLayer& gl = g.layers[l];
    gl.w = Matrix(layer.out_dim(), layer.in_dim());
    gl.b = delta;
    for (int i = 0; i < layer.out_dim(); ++i)
      for (int j = 0; j < layer.in_dim(); ++j)
        gl.w(i, j) = delta[i] * inputs[l][j];
    std::vector<double> prev(layer.in_dim(), 0.0);
    for (int i = 0; i < layer.out_dim(); ++i)
      for (int j = 0; j < layer.in_dim(); ++j)
        prev[j] += layer.w(i, j) * delta[i];
    delta = std::move(prev);
  }
  g.input = std::move(delta);
  return g;
}

void optimize_step(MlpParams& p, const GradientSet& g, AdamState& st,
                   const AdamConfig& cfg) {
  require(g.layers.size() == p.layers.size(), "optimize_step: shape mismatch");
  if (st.m.empty()) {
    st.m.resize(p.layers.size());
    st.v.resize(p.layers.size());
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
      st.m[l].w = Matrix(p.layers[l].w.rows, p.layers[l].w.cols);
      st.m[l].b.assign(p.layers[l].b.size(), 0.0);
      st.v[l].w = Matrix(p.layers[l].w.rows, p.layers[l].w.cols);
      st.v[l].b.assign(p.layers[l].b.size(), 0.0);
    }
  }
  for (const LinearLayer& gl : g.layers) {
    for (double v : gl.w.a)
      if (!std::isfinite(v)) throw TrainingFault("non-finite gradient");
    for (double v : gl.b)
      if (!std::isfinite(v)) throw TrainingFault("non-finite gradient");
  }
  st.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.t));
  auto update = [&](double& param, double grad, double& m, double& v) {
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad * grad;
    param -= cfg.lr * (m / bc1) / (std::sqrt(v / bc2) + cfg.eps);
  };
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    LinearLayer& layer = p.layers[l];
    const LinearLayer& gl = g.layers[l];
    require(gl.w.rows == layer.w.rows && gl.w.cols == layer.w.cols &&
                gl.b.size() == layer.b.size(),
            "optimize_step: layer shape mismatch");
    for (std::size_t k = 0; k < layer.w.a.size(); ++k)
      update(layer.w.a[k], gl.w.a[k], st.m[l].w.a[k], st.v[l].w.a[k]);
    for (std::size_t k = 0; k < layer.b.size(); ++k)
      update(layer.b[k], gl.b[k], st.m[l].b[k], st.v[l].b[k]);
  }
}

std::string params_to_text(const MlpParams& p) {
  std::string out = "MLPv1 " + std::to_string(p.layer_count()) + "\n";
  for (const LinearLayer& layer : p.layers) {
    out += std::to_string(layer.out_dim()) + " " + std::to_string(layer.in_dim()) + "\n";
    for (int i = 0; i < layer.out_dim(); ++i) {
      for (int j = 0; j < layer.in_dim(); ++j) {
        if (j) out += ' ';
        out += fmt17(layer.w(i, j));
      }
      out += '\n';
    }
    for (int i = 0; i < layer.out_dim(); ++i) {
      if (i) out += ' ';
      out += fmt17(layer.b[i]);
    }
    out += '\n';
  }
  return out;
}

MlpParams params_from_text(const std::string& text) {
  std::istringstream in(text);
  std::string magic;
  int n_layers = 0;
  if (!(in >> magic) || magic != "MLPv1")
    throw FormatError("weight file version mismatch (expected MLPv1 header)");
  if (!(in >> n_layers) || n_layers <= 0)
    throw FormatError("malformed weight file: bad layer count");
  MlpParams p;
  for (int l = 0; l < n_layers; ++l) {
    int out = 0, inn = 0;
    if (!(in >> out >> inn) || out <= 0 || inn <= 0)
      throw FormatError("malformed weight file: bad layer shape");
    LinearLayer layer;
    layer.w = Matrix(out, inn);
    layer.b.resize(out);
    for (double& v : layer.w.a)
      if (!(in >> v)) throw FormatError("malformed weight file: truncated weights");
    for (double& v : layer.b)
      if (!(in >> v)) throw FormatError("malformed weight file: truncated biases");
    p.layers.push_back(std::move(layer));
  }
  double extra;
  if (in >> extra) throw FormatError("malformed weight file: trailing data");
  p.validate();
  return p;
}

void save_params(const MlpParams& p, const std::string& path) {
  std::ofstream out(path, std::ios::binary);  // binary keeps LF endings
  if (!out) throw FormatError("cannot open for writing: " + path);
  out << params_to_text(p);
  if (!out) throw FormatError("write failed: " + path);
}

MlpParams load_params(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return params_from_text(buf.str());
}

MlpParams make_mlp(const std::vector<int>& dims, std::uint64_t seed) {
  require(dims.size() >= 2, "make_mlp: need at least input and output dims");
  Rng rng(mix_seed(fnv1a("mlp-init"), seed));
  MlpParams p;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    LinearLayer layer;
    layer.w = Matrix(dims[l + 1], dims[l]);
    layer.b.assign(dims[l + 1], 0.0);
    const double scale = std::sqrt(2.0 / dims[l]);
    for (double& v : layer.w.a) v = scale * rng.normal();
    p.layers.push_back(std::move(layer));
  }
  return p;
}

}  // namespace safecert
