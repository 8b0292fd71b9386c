#include "safecert/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "safecert/bounds.hpp"
#include "safecert/rng.hpp"

namespace safecert {

namespace {

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

int argmax(std::span<const double> v) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

}  // namespace

std::vector<double> pgd_attack(const CompositePolicy& p, std::span<const double> obs,
                               const AttackConfig& cfg) {
  std::vector<double> best(obs.begin(), obs.end());
  if (cfg.eps <= 0.0) return best;
  const int n = static_cast<int>(obs.size());
  const double step = cfg.step_size > 0.0 ? cfg.step_size : cfg.eps / 8.0;
  const std::vector<double> pi = softmax(forward(p.q, forward(p.g, obs)));
  Rng rng(mix_seed(cfg.seed, fnv1a("pgd")));

  auto objective = [&](const std::vector<double>& o_adv) {
    const std::vector<double> qv = forward(p.q, forward(p.g, o_adv));
    double v = 0.0;
    for (std::size_t a = 0; a < qv.size(); ++a) v += pi[a] * qv[a];
    return v;
  };

  double best_obj = objective(best);
  for (int r = 0; r < cfg.restarts; ++r) {
    // random start within the ball
    std::vector<double> delta(n);
    if (cfg.norm == Norm::LInf) {
      for (double& d : delta) d = rng.uniform(-cfg.eps, cfg.eps);
    } else {
      double norm2 = 0.0;
      for (double& d : delta) {
        d = rng.normal();
        norm2 += d * d;
      }
      const double scale = cfg.eps * rng.uniform() / std::max(1e-12, std::sqrt(norm2));
      for (double& d : delta) d *= scale;
    }
    std::vector<double> cur(n);
    for (int i = 0; i < n; ++i) cur[i] = std::clamp(obs[i] + delta[i], 0.0, 1.0);

    for (int it = 0; it < cfg.pgd_steps; ++it) {
      const std::vector<double> feats = forward(p.g, cur);
      GradientSet gq = backward(p.q, feats, pi);
      GradientSet gg = backward(p.g, cur, gq.input);
      if (cfg.norm == Norm::LInf) {
        for (int i = 0; i < n; ++i) {
          const double gsign =
              gg.input[i] > 0.0 ? 1.0 : (gg.input[i] < 0.0 ? -1.0 : 0.0);
          double d = cur[i] - step * gsign - obs[i];
          d = std::clamp(d, -cfg.eps, cfg.eps);
          cur[i] = std::clamp(obs[i] + d, 0.0, 1.0);
        }
      } else {
        double gnorm = 0.0;
        for (double v : gg.input) gnorm += v * v;
        gnorm = std::sqrt(gnorm);
        if (gnorm <= 0.0) break;
        double dnorm2 = 0.0;
        std::vector<double> d(n);
        for (int i = 0; i < n; ++i) {
          d[i] = cur[i] - step * gg.input[i] / gnorm - obs[i];
          dnorm2 += d[i] * d[i];
        }
        const double dn = std::sqrt(dnorm2);
        const double scale = dn > cfg.eps ? cfg.eps / dn : 1.0;
        for (int i = 0; i < n; ++i) cur[i] = std::clamp(obs[i] + d[i] * scale, 0.0, 1.0);
      }
    }
    const double obj = objective(cur);
    if (obj < best_obj) {
      best_obj = obj;
      best = cur;
    }
  }
  return best;
}

RolloutResult attacked_rollout(const CompositePolicy& p, const ScenarioPreset& preset,
                               std::uint64_t seed, const AttackConfig& cfg,
                               int horizon) {
  const int h = horizon < 0 ? preset.horizon : horizon;
  RolloutResult out;
  SemState s = reset(preset, seed);
  out.trajectory.push_back(s);
  if (is_unsafe(s)) {
    out.unsafe_reached = true;
    return out;
  }
  for (int t = 0; t < h; ++t) {
    AttackConfig step_cfg = cfg;
    step_cfg.seed = mix_seed(cfg.seed, mix_seed(seed, static_cast<std::uint64_t>(t)));
    const std::vector<double> obs = observe(s);
    const std::vector<double> adv = pgd_attack(p, obs, step_cfg);
    const int a = act(p, adv);
    StepOutcome res = step(s, a);
    out.reward += res.reward;
    out.trajectory.push_back(res.next);
    if (res.unsafe) {
      out.unsafe_reached = true;
      break;
    }
    s = std::move(res.next);
  }
  return out;
}

std::string EvalReport::csv_header() {
  return "episodes,reward_mean,reward_sem,false_action_rate,avg_err,avg_err_ub,"
         "avg_err_lb,attack_success_rate";
}

std::string EvalReport::csv_row() const {
  char buf[300];
  std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g",
                episodes, reward_mean, reward_sem, false_action_rate, avg_err,
                avg_err_ub, avg_err_lb, attack_success_rate);
  return buf;
}

std::string EvalReport::summary() const {
  char buf[400];
  std::snprintf(buf, sizeof buf,
                "episodes = %d\nreward = %.4f +- %.4f (sem)\nfalse action rate = %.4f\n"
                "avg err = %.6f\navg err (ub) = %.6f\navg err (lb) = %.6f\n",
                episodes, reward_mean, reward_sem, false_action_rate, avg_err,
                avg_err_ub, avg_err_lb);
  std::string out = buf;
  if (attack_success_rate >= 0.0) {
    std::snprintf(buf, sizeof buf, "attack success rate = %.4f\n", attack_success_rate);
    out += buf;
  }
  return out;
}

EvalReport evaluate(const CompositePolicy& p, const ScenarioPreset& preset,
                    const std::vector<std::uint64_t>& seeds, double eps_for_mse) {
  EvalReport rep;
  rep.episodes = static_cast<int>(seeds.size());
  std::vector<double> rewards;
  long steps = 0, false_actions = 0;
  double err = 0.0, err_ub = 0.0, err_lb = 0.0;

  for (std::uint64_t seed : seeds) {
    SemState s = reset(preset, seed);
    double total = 0.0;
    for (int t = 0; t < preset.horizon; ++t) {
      const std::vector<double> obs = observe(s);
      const std::vector<double> feats_true = true_features(s);
      const std::vector<double> feats_pred = forward(p.g, obs);
      const int a_pred = argmax(forward(p.q, feats_pred));
      const int a_true = argmax(forward(p.q, feats_true));
      if (a_pred != a_true) false_actions += 1;

      const BoxBounds fb = composite_feature_bounds(p.g, obs, eps_for_mse);
      double e = 0.0, e_ub = 0.0, e_lb = 0.0;
      for (std::size_t k = 0; k < feats_true.size(); ++k) {
        const double d = feats_pred[k] - feats_true[k];
        e += d * d;
        const double dl = fb.lower[k] - feats_true[k];
        const double du = fb.upper[k] - feats_true[k];
        // worst / best error attainable inside the certified box
        e_ub += std::max(dl * dl, du * du);
        if (feats_true[k] < fb.lower[k])
          e_lb += dl * dl;
        else if (feats_true[k] > fb.upper[k])
          e_lb += du * du;
      }
      const double dim = static_cast<double>(feats_true.size());
      err += e / dim;
      err_ub += e_ub / dim;
      err_lb += e_lb / dim;
      steps += 1;

      StepOutcome out = step(s, a_pred);
      total += out.reward;
      if (out.unsafe) break;
      s = std::move(out.next);
    }
    rewards.push_back(total);
  }

  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= rewards.size();
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var = rewards.size() > 1 ? var / (rewards.size() - 1) : 0.0;
  rep.reward_mean = mean;
  rep.reward_sem = rewards.size() > 1 ? std::sqrt(var / rewards.size()) : 0.0;
  rep.false_action_rate = steps ? static_cast<double>(false_actions) / steps : 0.0;
  rep.avg_err = steps ? err / steps : 0.0;
  rep.avg_err_ub = steps ? err_ub / steps : 0.0;
  rep.avg_err_lb = steps ? err_lb / steps : 0.0;
  return rep;
}

}  // namespace safecert
