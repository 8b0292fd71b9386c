#include "safecert/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <stdexcept>

#include "safecert/errors.hpp"

namespace safecert {

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::Vanilla: return "vanilla";
    case Variant::AT: return "at";
    case Variant::Radial: return "radial";
    case Variant::PsrlAT: return "psrl_at";
    case Variant::PsrlHybrid: return "psrl_hybrid";
  }
  return "vanilla";
}

Variant variant_from_name(const std::string& s) {
  if (s == "vanilla") return Variant::Vanilla;
  if (s == "at") return Variant::AT;
  if (s == "radial") return Variant::Radial;
  if (s == "psrl_at") return Variant::PsrlAT;
  if (s == "psrl_hybrid") return Variant::PsrlHybrid;
  throw std::invalid_argument("unknown training variant: " + s);
}

std::string train_log_csv(const std::vector<TrainLogRow>& rows) {
  std::string out = "step,td_loss,g_loss,adv_loss,eval_reward\n";
  char buf[160];
  for (const TrainLogRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%ld,%.17g,%.17g,%.17g,%.17g\n", r.step, r.td_loss,
                  r.g_loss, r.adv_loss, r.eval_reward);
    out += buf;
  }
  return out;
}

double epsilon_ramp(long t, long ramp_steps, double target) {
  if (ramp_steps <= 0) return target;
  const double f = static_cast<double>(t) / static_cast<double>(ramp_steps);
  return target * std::min(1.0, f);
}

namespace {

int argmax(std::span<const double> v) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

std::vector<double> softmax(std::span<const double> v) {
  double m = v[0];
  for (double x : v) m = std::max(m, x);
  std::vector<double> out(v.size());
  double z = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - m);
    z += out[i];
  }
  for (double& x : out) x /= z;
  return out;
}

GradientSet zero_grads(const MlpParams& p) {
  GradientSet g;
  g.layers.resize(p.layers.size());
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    g.layers[l].w = Matrix(p.layers[l].w.rows, p.layers[l].w.cols);
    g.layers[l].b.assign(p.layers[l].b.size(), 0.0);
  }
  g.input.assign(p.input_dim(), 0.0);
  return g;
}

void accumulate(GradientSet& acc, const GradientSet& g) {
  for (std::size_t l = 0; l < acc.layers.size(); ++l) {
    for (std::size_t k = 0; k < acc.layers[l].w.a.size(); ++k)
      acc.layers[l].w.a[k] += g.layers[l].w.a[k];
    for (std::size_t k = 0; k < acc.layers[l].b.size(); ++k)
      acc.layers[l].b[k] += g.layers[l].b[k];
  }
}

void accumulate(GradientSet& acc, const IbpGrads& g) {
  for (std::size_t l = 0; l < acc.layers.size(); ++l) {
    for (std::size_t k = 0; k < acc.layers[l].w.a.size(); ++k)
      acc.layers[l].w.a[k] += g.layers[l].w.a[k];
    for (std::size_t k = 0; k < acc.layers[l].b.size(); ++k)
      acc.layers[l].b[k] += g.layers[l].b[k];
  }
}

BoxBounds eps_box(std::span<const double> center, double eps, bool clip) {
  BoxBounds b;
  b.lower.resize(center.size());
  b.upper.resize(center.size());
  for (std::size_t i = 0; i < center.size(); ++i) {
    b.lower[i] = clip ? std::clamp(center[i] - eps, 0.0, 1.0) : center[i] - eps;
    b.upper[i] = clip ? std::clamp(center[i] + eps, 0.0, 1.0) : center[i] + eps;
  }
  return b;
}

// Sliding replay buffer with deterministic sampling.
class Replay {
 public:
  explicit Replay(int capacity) : capacity_(capacity) {}

  void push(ReplayTransition tr) {
    if (static_cast<int>(data_.size()) == capacity_) {
      data_[head_] = std::move(tr);
      head_ = (head_ + 1) % capacity_;
    } else {
      data_.push_back(std::move(tr));
    }
  }

  int size() const { return static_cast<int>(data_.size()); }

  std::vector<ReplayTransition> sample(int n, Rng& rng) const {
    std::vector<ReplayTransition> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) out.push_back(data_[rng.uniform_int(size())]);
    return out;
  }

 private:
  int capacity_;
  int head_ = 0;
  std::vector<ReplayTransition> data_;
};

double explore_at(const TrainConfig& cfg, long t, long total) {
  const long decay = std::max<long>(1, std::lround(cfg.explore_frac * total));
  const double f = std::min(1.0, static_cast<double>(t) / decay);
  return cfg.explore_hi + (cfg.explore_lo - cfg.explore_hi) * f;
}

// Greedy semantic-policy rollout reward (Q over true features).
double eval_reward_features(const MlpParams& q, const ScenarioPreset& preset,
                            int episodes) {
  double total = 0.0;
  for (int e = 0; e < episodes; ++e) {
    SemState s = reset(preset, mix_seed(fnv1a("train-eval"), e));
    for (int t = 0; t < preset.horizon; ++t) {
      const int a = argmax(forward(q, true_features(s)));
      StepOutcome out = step(s, a);
      total += out.reward;
      if (out.unsafe) break;
      s = std::move(out.next);
    }
  }
  return total / episodes;
}

double eval_reward_composite(const MlpParams& g, const MlpParams& q,
                             const ScenarioPreset& preset, int episodes) {
  double total = 0.0;
  for (int e = 0; e < episodes; ++e) {
    SemState s = reset(preset, mix_seed(fnv1a("train-eval"), e));
    for (int t = 0; t < preset.horizon; ++t) {
      const int a = argmax(forward(q, forward(g, observe(s))));
      StepOutcome out = step(s, a);
      total += out.reward;
      if (out.unsafe) break;
      s = std::move(out.next);
    }
  }
  return total / episodes;
}

}  // namespace

double ddqn_target(const MlpParams& online, const MlpParams& target,
                   std::span<const double> next_features, double reward, bool done,
                   double discount) {
  if (done) return reward;
  const int a_star = argmax(forward(online, next_features));
  return reward + discount * forward(target, next_features)[a_star];
}

MlpParams train_q_ddqn(const ScenarioPreset& preset, const TrainConfig& cfg,
                       std::vector<TrainLogRow>* log) {
  std::vector<int> dims = {preset.feature_dim()};
  dims.insert(dims.end(), cfg.q_hidden.begin(), cfg.q_hidden.end());
  dims.push_back(preset.action_count);
  MlpParams q = make_mlp(dims, mix_seed(cfg.seed, fnv1a("q-init")));
  MlpParams q_target = q;
  AdamState opt;
  Replay buffer(cfg.buffer_size);

  Rng explore_rng(mix_seed(cfg.seed, fnv1a("ddqn-explore")));
  Rng sample_rng(mix_seed(cfg.seed, fnv1a("ddqn-sample")));

  long episode = 0;
  SemState s = reset(preset, mix_seed(cfg.seed, episode));
  int ep_steps = 0;
  long updates = 0;
  double loss_acc = 0.0;
  long loss_n = 0;

  for (long t = 0; t < cfg.q_steps; ++t) {
    const std::vector<double> feats = true_features(s);
    int a;
    if (explore_rng.uniform() < explore_at(cfg, t, cfg.q_steps))
      a = explore_rng.uniform_int(preset.action_count);
    else
      a = argmax(forward(q, feats));
    StepOutcome out = step(s, a);
    ep_steps += 1;
    ReplayTransition tr;
    tr.features_true = feats;
    tr.action = a;
    tr.reward = out.reward;
    tr.next_features_true = true_features(out.next);
    tr.done = out.unsafe;
    buffer.push(std::move(tr));

    if (out.unsafe || ep_steps >= preset.horizon) {
      episode += 1;
      s = reset(preset, mix_seed(cfg.seed, episode));
      ep_steps = 0;
    } else {
      s = std::move(out.next);
    }

    if (buffer.size() >= std::max(cfg.batch, std::min(cfg.warmup, cfg.buffer_size))) {
      const auto batch = buffer.sample(cfg.batch, sample_rng);
      GradientSet acc = zero_grads(q);
      double loss = 0.0;
      for (const ReplayTransition& b : batch) {
        const std::vector<double> qv = forward(q, b.features_true);
        const double y =
            ddqn_target(q, q_target, b.next_features_true, b.reward, b.done, cfg.discount);
        const double diff = qv[b.action] - y;
        loss += diff * diff;
        std::vector<double> upstream(preset.action_count, 0.0);
        upstream[b.action] = 2.0 * diff / cfg.batch;
        accumulate(acc, backward(q, b.features_true, upstream));
      }
      loss /= cfg.batch;
      if (!std::isfinite(loss)) throw TrainingFault("ddqn: non-finite loss");
      optimize_step(q, acc, opt, AdamConfig{cfg.lr});
      updates += 1;
      loss_acc += loss;
      loss_n += 1;
      if (updates % cfg.target_sync == 0) q_target = q;
    }

    if (log && (t + 1) % cfg.eval_every == 0) {
      TrainLogRow row;
      row.step = t + 1;
      row.td_loss = loss_n ? loss_acc / loss_n : 0.0;
      row.eval_reward = eval_reward_features(q, preset, cfg.eval_episodes);
      log->push_back(row);
      loss_acc = 0.0;
      loss_n = 0;
    }
  }
  return q;
}

std::vector<std::pair<std::vector<double>, std::vector<double>>> collect_g_dataset(
    const MlpParams& q, const ScenarioPreset& preset, const TrainConfig& cfg) {
  Rng roll_rng(mix_seed(cfg.seed, fnv1a("g-rollout")));
  Rng noise_rng(mix_seed(cfg.seed, fnv1a("g-noise")));
  std::vector<std::pair<std::vector<double>, std::vector<double>>> data;
  const int target_frames = cfg.buffer_size;
  long episode = 0;
  while (static_cast<int>(data.size()) < target_frames) {
    SemState s = reset(preset, mix_seed(cfg.seed ^ fnv1a("g-episodes"), episode));
    episode += 1;
    for (int t = 0; t < preset.horizon; ++t) {
      std::vector<double> obs = observe(s);
      const std::vector<double> feats = true_features(s);
      if (cfg.norm == Norm::L2) {
        std::vector<double> noisy = obs;
        for (double& v : noisy) v += cfg.sigma * noise_rng.normal();
        data.emplace_back(std::move(noisy), feats);
      }
      data.emplace_back(std::move(obs), feats);
      const double explore =
          explore_at(cfg, static_cast<long>(data.size()), target_frames);
      int a;
      if (roll_rng.uniform() < explore)
        a = roll_rng.uniform_int(preset.action_count);
      else
        a = argmax(forward(q, true_features(s)));
      StepOutcome out = step(s, a);
      if (out.unsafe) break;
      s = std::move(out.next);
    }
  }
  return data;
}

MlpParams train_g_supervised(const MlpParams& q, const ScenarioPreset& preset,
                             const TrainConfig& cfg, std::vector<TrainLogRow>* log) {
  std::vector<int> dims = {preset.obs_dim()};
  dims.insert(dims.end(), cfg.g_hidden.begin(), cfg.g_hidden.end());
  dims.push_back(preset.feature_dim());
  MlpParams g = make_mlp(dims, mix_seed(cfg.seed, fnv1a("g-init")));

  const auto data = collect_g_dataset(q, preset, cfg);

  Rng sample_rng(mix_seed(cfg.seed, fnv1a("g-sample")));
  AdamState opt;
  double loss_acc = 0.0;
  long loss_n = 0;
  for (long t = 0; t < cfg.g_steps; ++t) {
    GradientSet acc = zero_grads(g);
    double loss = 0.0;
    for (int i = 0; i < cfg.batch; ++i) {
      const auto& [obs, feats] = data[sample_rng.uniform_int(static_cast<int>(data.size()))];
      const std::vector<double> pred = forward(g, obs);
      std::vector<double> upstream(pred.size());
      for (std::size_t k = 0; k < pred.size(); ++k) {
        const double d = pred[k] - feats[k];
        loss += d * d;
        upstream[k] = 2.0 * d / cfg.batch;
      }
      accumulate(acc, backward(g, obs, upstream));
    }
    loss /= cfg.batch;
    if (!std::isfinite(loss)) throw TrainingFault("g: non-finite loss");
    optimize_step(g, acc, opt, AdamConfig{cfg.lr});
    loss_acc += loss;
    loss_n += 1;
    if (log && (t + 1) % cfg.eval_every == 0) {
      TrainLogRow row;
      row.step = t + 1;
      row.g_loss = loss_acc / loss_n;
      row.eval_reward = eval_reward_composite(g, q, preset, cfg.eval_episodes);
      log->push_back(row);
      loss_acc = 0.0;
      loss_n = 0;
    }
  }
  return g;
}

std::vector<double> fgsm_perturb(const CompositePolicy& p, std::span<const double> obs,
                                 double eps, Norm norm, Rng& rng) {
  std::vector<double> adv(obs.begin(), obs.end());
  if (eps <= 0.0) return adv;
  const int n = static_cast<int>(obs.size());

  // random start inside the ball
  std::vector<double> delta(n);
  if (norm == Norm::LInf) {
    for (double& d : delta) d = rng.uniform(-eps, eps);
  } else {
    double norm2 = 0.0;
    for (double& d : delta) {
      d = rng.normal();
      norm2 += d * d;
    }
    const double scale = eps * rng.uniform() / std::max(1e-12, std::sqrt(norm2));
    for (double& d : delta) d *= scale;
  }
  std::vector<double> start(n);
  for (int i = 0; i < n; ++i) start[i] = std::clamp(obs[i] + delta[i], 0.0, 1.0);

  // gradient of sum_a softmax(Q(o))_a Q(o+d)_a at the random start
  const std::vector<double> pi = softmax(forward(p.q, forward(p.g, obs)));
  const std::vector<double> feats = forward(p.g, start);
  GradientSet gq = backward(p.q, feats, pi);
  GradientSet gg = backward(p.g, start, gq.input);

  if (norm == Norm::LInf) {
    for (int i = 0; i < n; ++i) {
      double d = start[i] - obs[i] - eps * (gg.input[i] > 0.0 ? 1.0 : (gg.input[i] < 0.0 ? -1.0 : 0.0));
      d = std::clamp(d, -eps, eps);
      adv[i] = std::clamp(obs[i] + d, 0.0, 1.0);
    }
  } else {
    double gnorm = 0.0;
    for (double v : gg.input) gnorm += v * v;
    gnorm = std::sqrt(gnorm);
    std::vector<double> d(n);
    double dnorm2 = 0.0;
    for (int i = 0; i < n; ++i) {
      d[i] = start[i] - obs[i] - (gnorm > 0.0 ? eps * gg.input[i] / gnorm : 0.0);
      dnorm2 += d[i] * d[i];
    }
    const double dn = std::sqrt(dnorm2);
    const double scale = dn > eps ? eps / dn : 1.0;
    for (int i = 0; i < n; ++i) adv[i] = std::clamp(obs[i] + d[i] * scale, 0.0, 1.0);
  }
  return adv;
}

IbpTape ibp_forward_tape(const MlpParams& p, const BoxBounds& input) {
  if (input.dim() != p.input_dim())
    throw std::invalid_argument("ibp_forward_tape: input dimension mismatch");
  IbpTape tape;
  tape.input = input;
  const int L = p.layer_count();
  tape.pre_lo.resize(L);
  tape.pre_hi.resize(L);
  tape.post_lo.resize(L);
  tape.post_hi.resize(L);
  std::vector<double> lo = input.lower, hi = input.upper;
  for (int l = 0; l < L; ++l) {
    const LinearLayer& layer = p.layers[l];
    std::vector<double> nlo(layer.out_dim()), nhi(layer.out_dim());
    for (int i = 0; i < layer.out_dim(); ++i) {
      double accL = layer.b[i], accH = layer.b[i];
      for (int j = 0; j < layer.in_dim(); ++j) {
        const double w = layer.w(i, j);
        if (w >= 0.0) {
          accL += w * lo[j];
          accH += w * hi[j];
        } else {
          accL += w * hi[j];
          accH += w * lo[j];
        }
      }
      nlo[i] = accL;
      nhi[i] = accH;
    }
    tape.pre_lo[l] = nlo;
    tape.pre_hi[l] = nhi;
    if (l + 1 < L) {
      for (double& v : nlo) v = std::max(v, 0.0);
      for (double& v : nhi) v = std::max(v, 0.0);
    }
    tape.post_lo[l] = nlo;
    tape.post_hi[l] = nhi;
    lo = std::move(nlo);
    hi = std::move(nhi);
  }
  return tape;
}

BoxBounds IbpTape::out() const { return BoxBounds(pre_lo.back(), pre_hi.back()); }

IbpGrads ibp_backward(const MlpParams& p, const IbpTape& tape,
                      std::span<const double> g_lower, std::span<const double> g_upper) {
  const int L = p.layer_count();
  IbpGrads out;
  out.layers.resize(L);
  std::vector<double> gl(g_lower.begin(), g_lower.end());
  std::vector<double> gu(g_upper.begin(), g_upper.end());
  for (int l = L - 1; l >= 0; --l) {
    const LinearLayer& layer = p.layers[l];
    const std::vector<double>& in_lo = l == 0 ? tape.input.lower : tape.post_lo[l - 1];
    const std::vector<double>& in_hi = l == 0 ? tape.input.upper : tape.post_hi[l - 1];
    LinearLayer& grad = out.layers[l];
    grad.w = Matrix(layer.out_dim(), layer.in_dim());
    grad.b.assign(layer.out_dim(), 0.0);
    std::vector<double> ngl(layer.in_dim(), 0.0), ngu(layer.in_dim(), 0.0);
    for (int i = 0; i < layer.out_dim(); ++i) {
      grad.b[i] = gl[i] + gu[i];
      for (int j = 0; j < layer.in_dim(); ++j) {
        const double w = layer.w(i, j);
        if (w >= 0.0) {
          grad.w(i, j) = gl[i] * in_lo[j] + gu[i] * in_hi[j];
          ngl[j] += w * gl[i];
          ngu[j] += w * gu[i];
        } else {
          grad.w(i, j) = gl[i] * in_hi[j] + gu[i] * in_lo[j];
          ngl[j] += w * gu[i];
          ngu[j] += w * gl[i];
        }
      }
    }
    if (l > 0) {  // ReLU: bound channels pass where the pre-activation is positive
      for (int j = 0; j < layer.in_dim(); ++j) {
        if (tape.pre_lo[l - 1][j] <= 0.0) ngl[j] = 0.0;
        if (tape.pre_hi[l - 1][j] <= 0.0) ngu[j] = 0.0;
      }
    }
    gl = std::move(ngl);
    gu = std::move(ngu);
  }
  out.input_lower = std::move(gl);
  out.input_upper = std::move(gu);
  return out;
}

namespace {

// TD loss and gradients through the composite q(g(o)); targets come from the
// clean next observation and the target nets (double-Q rule).
double td_composite(const AdvNets& nets, const std::vector<ReplayTransition>& batch,
                    double weight, bool use_noisy,
                    const std::vector<std::vector<double>>* obs_override,
                    double discount, GradientSet& gg_acc, GradientSet& gq_acc) {
  if (weight == 0.0) return 0.0;
  double loss = 0.0;
  const int n = static_cast<int>(batch.size());
  for (int i = 0; i < n; ++i) {
    const ReplayTransition& b = batch[i];
    const std::vector<double>& o =
        obs_override ? (*obs_override)[i] : (use_noisy && !b.noisy_obs.empty() ? b.noisy_obs : b.obs);
    const std::vector<double> feats = forward(nets.g, o);
    const std::vector<double> qv = forward(nets.q, feats);

    const std::vector<double> nf_on = forward(nets.g, b.next_obs);
    const int a_star = argmax(forward(nets.q, nf_on));
    const std::vector<double> nf_tg = forward(nets.g_target, b.next_obs);
    const double y =
        b.reward + (b.done ? 0.0 : discount * forward(nets.q_target, nf_tg)[a_star]);

    const double diff = qv[b.action] - y;
    loss += diff * diff;
    std::vector<double> upstream(qv.size(), 0.0);
    upstream[b.action] = 2.0 * diff * weight / n;
    GradientSet gq = backward(nets.q, feats, upstream);
    accumulate(gq_acc, gq);
    accumulate(gg_acc, backward(nets.g, o, gq.input));
  }
  return loss / n;
}

// TD on true features through q alone (the supervised-composition premise).
double td_features(const AdvNets& nets, const std::vector<ReplayTransition>& batch,
                   double weight, double discount, GradientSet& gq_acc) {
  if (weight == 0.0) return 0.0;
  double loss = 0.0;
  const int n = static_cast<int>(batch.size());
  for (const ReplayTransition& b : batch) {
    const std::vector<double> qv = forward(nets.q, b.features_true);
    const double y = ddqn_target(nets.q, nets.q_target, b.next_features_true, b.reward,
                                 b.done, discount);
    const double diff = qv[b.action] - y;
    loss += diff * diff;
    std::vector<double> upstream(qv.size(), 0.0);
    upstream[b.action] = 2.0 * diff * weight / n;
    accumulate(gq_acc, backward(nets.q, b.features_true, upstream));
  }
  return loss / n;
}

struct HingeSeeds {
  std::vector<double> gl, gu;
  double loss = 0.0;
};

// sum over a != a* of max(0, ub(a) - lb(a*)) with upstream weight applied.
HingeSeeds radial_hinge(const BoxBounds& qb, int a_star, double weight) {
  HingeSeeds seeds;
  seeds.gl.assign(qb.dim(), 0.0);
  seeds.gu.assign(qb.dim(), 0.0);
  for (int a = 0; a < qb.dim(); ++a) {
    if (a == a_star) continue;
    const double v = qb.upper[a] - qb.lower[a_star];
    if (v > 0.0) {
      seeds.loss += v;
      seeds.gu[a] += weight;
      seeds.gl[a_star] -= weight;
    }
  }
  return seeds;
}

}  // namespace

AdvLosses adv_update_minibatch(AdvNets& nets, const std::vector<ReplayTransition>& batch,
                               double eps_t, const TrainConfig& cfg, Rng& fgsm_rng,
                               AdvStats* stats) {
  AdvLosses losses;
  const int n = static_cast<int>(batch.size());
  const double kappa = cfg.kappa;
  const bool l2 = cfg.norm == Norm::L2;
  const AdamConfig adam{cfg.lr};

  GradientSet gg = zero_grads(nets.g);
  GradientSet gq = zero_grads(nets.q);
  int phases = 0;

  auto obs_center = [&](const ReplayTransition& b) -> const std::vector<double>& {
    return l2 && !b.noisy_obs.empty() ? b.noisy_obs : b.obs;
  };

  switch (cfg.variant) {
    case Variant::Vanilla:
      throw std::invalid_argument("adv_update_minibatch: vanilla has no adversarial phase");

    case Variant::AT: {
      losses.td = td_composite(nets, batch, 1.0 - kappa, l2, nullptr, cfg.discount,
                               gg, gq);
      if (kappa > 0.0) {
        std::vector<std::vector<double>> adv(n);
        CompositePolicy pol{nets.g, nets.q, nets.q.output_dim()};
        for (int i = 0; i < n; ++i)
          adv[i] = fgsm_perturb(pol, obs_center(batch[i]), eps_t, cfg.norm, fgsm_rng);
        losses.adv =
            td_composite(nets, batch, kappa, false, &adv, cfg.discount, gg, gq);
      }
      optimize_step(nets.g, gg, nets.g_state, adam);
      optimize_step(nets.q, gq, nets.q_state, adam);
      phases = 1;
      break;
    }

    case Variant::Radial:
    case Variant::PsrlHybrid: {
      losses.td = td_composite(nets, batch, 1.0 - kappa, l2, nullptr, cfg.discount,
                               gg, gq);
      if (kappa > 0.0) {
        for (const ReplayTransition& b : batch) {
          const std::vector<double>& center = obs_center(b);
          const IbpTape tg = ibp_forward_tape(nets.g, eps_box(center, eps_t, !l2));
          const IbpTape tq = ibp_forward_tape(nets.q, tg.out());
          const int a_star = argmax(forward(nets.q, forward(nets.g, b.obs)));
          const HingeSeeds seeds = radial_hinge(tq.out(), a_star, kappa / n);
          losses.adv += seeds.loss / n;
          const IbpGrads q_grads = ibp_backward(nets.q, tq, seeds.gl, seeds.gu);
          accumulate(gq, q_grads);
          accumulate(gg, ibp_backward(nets.g, tg, q_grads.input_lower,
                                      q_grads.input_upper));
        }
      }
      optimize_step(nets.g, gg, nets.g_state, adam);
      optimize_step(nets.q, gq, nets.q_state, adam);
      phases = 1;

      if (cfg.variant == Variant::PsrlHybrid && kappa > 0.0) {
        // second pass on the same minibatch: adversarial supervised loss only
        GradientSet gg2 = zero_grads(nets.g);
        for (const ReplayTransition& b : batch) {
          const IbpTape tg =
              ibp_forward_tape(nets.g, eps_box(obs_center(b), eps_t, !l2));
          const BoxBounds fb = tg.out();
          std::vector<double> gl(fb.dim()), gu(fb.dim());
          for (int k = 0; k < fb.dim(); ++k) {
            const double dl = fb.lower[k] - b.features_true[k];
            const double du = fb.upper[k] - b.features_true[k];
            losses.g_adv += (dl * dl + du * du) / n;
            gl[k] = 2.0 * dl * kappa / n;
            gu[k] = 2.0 * du * kappa / n;
          }
          accumulate(gg2, ibp_backward(nets.g, tg, gl, gu));
        }
        optimize_step(nets.g, gg2, nets.g_state, adam);
        phases += 1;
      }
      break;
    }

    case Variant::PsrlAT: {
      // supervised loss on g: (1-kappa) clean + kappa on the bound ends
      for (const ReplayTransition& b : batch) {
        const std::vector<double>& center = obs_center(b);
        const std::vector<double> pred = forward(nets.g, b.obs);
        std::vector<double> upstream(pred.size());
        for (std::size_t k = 0; k < pred.size(); ++k) {
          const double d = pred[k] - b.features_true[k];
          losses.g_clean += d * d / n;
          upstream[k] = 2.0 * d * (1.0 - kappa) / n;
        }
        accumulate(gg, backward(nets.g, b.obs, upstream));

        if (kappa > 0.0) {
          const IbpTape tg = ibp_forward_tape(nets.g, eps_box(center, eps_t, !l2));
          const BoxBounds fb = tg.out();
          std::vector<double> gl(fb.dim()), gu(fb.dim());
          for (int k = 0; k < fb.dim(); ++k) {
            const double dl = fb.lower[k] - b.features_true[k];
            const double du = fb.upper[k] - b.features_true[k];
            losses.g_adv += (dl * dl + du * du) / n;
            gl[k] = 2.0 * dl * kappa / n;
            gu[k] = 2.0 * du * kappa / n;
          }
          accumulate(gg, ibp_backward(nets.g, tg, gl, gu));

          // RADIAL-form loss on q alone, feature box treated as constants
          const IbpTape tq = ibp_forward_tape(nets.q, tg.out());
          const int a_star = argmax(forward(nets.q, forward(nets.g, b.obs)));
          const HingeSeeds seeds = radial_hinge(tq.out(), a_star, kappa / n);
          losses.adv += seeds.loss / n;
          accumulate(gq, ibp_backward(nets.q, tq, seeds.gl, seeds.gu));
        }
      }
      losses.td = td_features(nets, batch, 1.0 - kappa, cfg.discount, gq);
      optimize_step(nets.g, gg, nets.g_state, adam);
      optimize_step(nets.q, gq, nets.q_state, adam);
      phases = 1;
      break;
    }
  }

  if (!std::isfinite(losses.td + losses.adv + losses.g_clean + losses.g_adv))
    throw TrainingFault("adv_train: non-finite loss");
  if (stats) {
    stats->minibatches += 1;
    stats->optimizer_phases += phases;
  }
  return losses;
}

std::pair<MlpParams, MlpParams> adv_train(const MlpParams& g, const MlpParams& q,
                                          const ScenarioPreset& preset,
                                          const TrainConfig& cfg,
                                          std::vector<TrainLogRow>* log,
                                          AdvStats* stats) {
  AdvNets nets{g, q, g, q, {}, {}};
  Replay buffer(cfg.buffer_size);
  Rng roll_rng(mix_seed(cfg.seed, fnv1a("adv-rollout")));
  Rng sample_rng(mix_seed(cfg.seed, fnv1a("adv-sample")));
  Rng fgsm_rng(mix_seed(cfg.seed, fnv1a("adv-fgsm")));
  Rng noise_rng(mix_seed(cfg.seed, fnv1a("adv-noise")));

  const long ramp_steps = std::lround(cfg.ramp_fraction * cfg.adv_steps);
  const int warm = std::max(cfg.batch, std::min(cfg.warmup, cfg.adv_steps / 4));

  long episode = 0;
  SemState s = reset(preset, mix_seed(cfg.seed ^ fnv1a("adv-episodes"), episode));
  int ep_steps = 0;
  long updates = 0;
  double td_acc = 0.0, adv_acc = 0.0, g_acc = 0.0;
  long acc_n = 0;

  for (long t = 0; t < cfg.adv_steps; ++t) {
    std::vector<double> obs = observe(s);
    int a;
    if (roll_rng.uniform() < cfg.explore_lo)
      a = roll_rng.uniform_int(preset.action_count);
    else
      a = argmax(forward(nets.q, forward(nets.g, obs)));
    StepOutcome out = step(s, a);
    ep_steps += 1;

    ReplayTransition tr;
    tr.features_true = true_features(s);
    tr.action = a;
    tr.reward = out.reward;
    tr.next_obs = observe(out.next);
    tr.next_features_true = true_features(out.next);
    tr.done = out.unsafe;
    if (cfg.norm == Norm::L2) {
      tr.noisy_obs = obs;
      for (double& v : tr.noisy_obs) v += cfg.sigma * noise_rng.normal();
    }
    tr.obs = std::move(obs);
    buffer.push(std::move(tr));

    if (out.unsafe || ep_steps >= preset.horizon) {
      episode += 1;
      s = reset(preset, mix_seed(cfg.seed ^ fnv1a("adv-episodes"), episode));
      ep_steps = 0;
    } else {
      s = std::move(out.next);
    }

    if (buffer.size() >= warm) {
      const double eps_t = epsilon_ramp(updates, ramp_steps, cfg.target_eps);
      const auto batch = buffer.sample(cfg.batch, sample_rng);
      const AdvLosses losses = adv_update_minibatch(nets, batch, eps_t, cfg, fgsm_rng, stats);
      updates += 1;
      td_acc += losses.td;
      adv_acc += losses.adv + losses.g_adv;
      g_acc += losses.g_clean;
      acc_n += 1;
      if (updates % cfg.target_sync == 0) {
        nets.g_target = nets.g;
        nets.q_target = nets.q;
      }
    }

    if (log && (t + 1) % cfg.eval_every == 0) {
      TrainLogRow row;
      row.step = t + 1;
      row.td_loss = acc_n ? td_acc / acc_n : 0.0;
      row.g_loss = acc_n ? g_acc / acc_n : 0.0;
      row.adv_loss = acc_n ? adv_acc / acc_n : 0.0;
      row.eval_reward = eval_reward_composite(nets.g, nets.q, preset, cfg.eval_episodes);
      log->push_back(row);
      td_acc = adv_acc = g_acc = 0.0;
      acc_n = 0;
    }
  }
  return {std::move(nets.g), std::move(nets.q)};
}

}  // namespace safecert
