#include <doctest.h>

#include <cmath>

#include "safecert/errors.hpp"
#include "safecert/eval.hpp"
#include "safecert/rng.hpp"
#include "safecert/train.hpp"

using namespace safecert;

namespace {

MlpParams layer_from(std::vector<std::vector<double>> w, std::vector<double> b) {
  MlpParams p;
  LinearLayer l;
  l.w = Matrix(static_cast<int>(w.size()), static_cast<int>(w[0].size()));
  for (int i = 0; i < l.w.rows; ++i)
    for (int j = 0; j < l.w.cols; ++j) l.w(i, j) = w[i][j];
  l.b = std::move(b);
  p.layers = {l};
  return p;
}

std::string weights_text(const MlpParams& g, const MlpParams& q) {
  return params_to_text(g) + "|" + params_to_text(q);
}

// minibatch of lane-world transitions for update tests
std::vector<ReplayTransition> toy_batch(const ScenarioPreset& preset, int n,
                                        std::uint64_t seed) {
  std::vector<ReplayTransition> batch;
  Rng rng(seed);
  SemState s = reset(preset, seed);
  for (int i = 0; i < n; ++i) {
    const int a = rng.uniform_int(preset.action_count);
    StepOutcome out = step(s, a);
    ReplayTransition tr;
    tr.obs = observe(s);
    tr.features_true = true_features(s);
    tr.action = a;
    tr.reward = out.reward;
    tr.next_obs = observe(out.next);
    tr.next_features_true = true_features(out.next);
    tr.done = out.unsafe;
    batch.push_back(std::move(tr));
    s = out.unsafe ? reset(preset, seed + i + 1) : out.next;
  }
  return batch;
}

AdvNets fresh_nets(const ScenarioPreset& preset, std::uint64_t seed) {
  AdvNets nets;
  nets.g = make_mlp({preset.obs_dim(), 8, preset.feature_dim()}, mix_seed(seed, 1));
  nets.q = make_mlp({preset.feature_dim(), 8, preset.action_count}, mix_seed(seed, 2));
  nets.g_target = nets.g;
  nets.q_target = nets.q;
  return nets;
}

}  // namespace

TEST_CASE("epsilon ramp is linear then flat") {
  const double target = 3.0 / 255;
  CHECK(epsilon_ramp(0, 100, target) == 0.0);
  CHECK(epsilon_ramp(50, 100, target) == doctest::Approx(target / 2));
  CHECK(epsilon_ramp(100, 100, target) == doctest::Approx(target));
  CHECK(epsilon_ramp(5000, 100, target) == doctest::Approx(target));
}

TEST_CASE("ddqn_target follows the double-Q rule") {
  // online net prefers action 1, target net values it differently
  MlpParams online = layer_from({{1.0}, {2.0}}, {0.0, 0.0});   // argmax -> a1
  MlpParams target = layer_from({{5.0}, {-1.0}}, {0.0, 0.0});  // value of a1 is -f
  const std::vector<double> next_feat = {1.0};
  // online argmax = a1 (2 > 1); target value of a1 = -1
  CHECK(ddqn_target(online, target, next_feat, 0.5, false, 0.8) ==
        doctest::Approx(0.5 + 0.8 * -1.0));
  // done cuts the bootstrap
  CHECK(ddqn_target(online, target, next_feat, 0.5, true, 0.8) == 0.5);
}

TEST_CASE("ddqn_target honors the discount on a one-step toy") {
  MlpParams net = layer_from({{2.0}, {1.0}}, {0.0, 0.0});
  // online == target -> plain r + 0.8 * max
  CHECK(ddqn_target(net, net, std::vector<double>{1.5}, 1.0, false, 0.8) ==
        doctest::Approx(1.0 + 0.8 * 3.0));
}

TEST_CASE("ibp tape agrees with the bounds module") {
  for (int trial = 0; trial < 10; ++trial) {
    MlpParams p = make_mlp({3, 7, 4}, 800 + trial);
    Rng rng(trial);
    BoxBounds in;
    in.lower.resize(3);
    in.upper.resize(3);
    for (int i = 0; i < 3; ++i) {
      const double c = rng.uniform(-1.0, 1.0), r = rng.uniform(0.0, 0.3);
      in.lower[i] = c - r;
      in.upper[i] = c + r;
    }
    const BoxBounds a = ibp_bounds(p, in);
    const BoxBounds b = ibp_forward_tape(p, in).out();
    for (int i = 0; i < a.dim(); ++i) {
      CHECK(a.lower[i] == doctest::Approx(b.lower[i]).epsilon(1e-12));
      CHECK(a.upper[i] == doctest::Approx(b.upper[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("ibp_backward matches finite differences") {
  const double h = 1e-5;
  MlpParams p = make_mlp({3, 5, 2}, 4242);
  BoxBounds in({-0.3, 0.1, -0.2}, {0.2, 0.5, 0.4});
  Rng rng(99);
  std::vector<double> gl(2), gu(2);
  for (double& v : gl) v = rng.uniform(-1.0, 1.0);
  for (double& v : gu) v = rng.uniform(-1.0, 1.0);

  const IbpGrads grads = ibp_backward(p, ibp_forward_tape(p, in), gl, gu);
  auto scalar = [&](const MlpParams& q) {
    const BoxBounds out = ibp_forward_tape(q, in).out();
    double s = 0.0;
    for (int i = 0; i < out.dim(); ++i) s += gl[i] * out.lower[i] + gu[i] * out.upper[i];
    return s;
  };
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    for (std::size_t k = 0; k < p.layers[l].w.a.size(); ++k) {
      MlpParams plus = p, minus = p;
      plus.layers[l].w.a[k] += h;
      minus.layers[l].w.a[k] -= h;
      const double fd = (scalar(plus) - scalar(minus)) / (2 * h);
      CHECK(std::abs(grads.layers[l].w.a[k] - fd) < 1e-6);
    }
    for (std::size_t k = 0; k < p.layers[l].b.size(); ++k) {
      MlpParams plus = p, minus = p;
      plus.layers[l].b[k] += h;
      minus.layers[l].b[k] -= h;
      const double fd = (scalar(plus) - scalar(minus)) / (2 * h);
      CHECK(std::abs(grads.layers[l].b[k] - fd) < 1e-6);
    }
  }
}

TEST_CASE("fgsm perturbation equals the signed gradient step from its start") {
  const ScenarioPreset& hw = preset("highway");
  CompositePolicy p;
  p.g = make_mlp({hw.obs_dim(), 8, 6}, 3);
  p.q = make_mlp({6, 8, 5}, 4);
  p.action_count = 5;

  SemState s = reset(hw, 2);
  std::vector<double> obs = observe(s);
  // keep the observation strictly interior so no clipping interferes
  for (double& v : obs) v = 0.3 + 0.4 * v;

  const double eps = 1.0 / 255;
  Rng rng(1000);
  const auto adv = fgsm_perturb(p, obs, eps, Norm::LInf, rng);

  // replay the construction: the same rng stream gives the same start
  Rng replay(1000);
  std::vector<double> delta(obs.size());
  for (double& d : delta) d = replay.uniform(-eps, eps);
  std::vector<double> start(obs.size());
  for (std::size_t i = 0; i < obs.size(); ++i)
    start[i] = std::clamp(obs[i] + delta[i], 0.0, 1.0);
  // softmax of the clean Q is the objective weighting
  const auto qv = forward(p.q, forward(p.g, obs));
  double m = qv[0];
  for (double v : qv) m = std::max(m, v);
  std::vector<double> pi(qv.size());
  double z = 0.0;
  for (std::size_t a = 0; a < qv.size(); ++a) z += pi[a] = std::exp(qv[a] - m);
  for (double& v : pi) v /= z;
  GradientSet gq = backward(p.q, forward(p.g, start), pi);
  GradientSet gg = backward(p.g, start, gq.input);

  for (std::size_t i = 0; i < obs.size(); ++i) {
    const double sign = gg.input[i] > 0 ? 1.0 : (gg.input[i] < 0 ? -1.0 : 0.0);
    const double want = std::clamp(std::clamp(start[i] - obs[i] - eps * sign, -eps, eps) + obs[i], 0.0, 1.0);
    CHECK(adv[i] == doctest::Approx(want).epsilon(1e-12));
  }
  // ball projection invariant
  for (std::size_t i = 0; i < obs.size(); ++i)
    CHECK(std::abs(adv[i] - obs[i]) <= eps + 1e-15);
}

TEST_CASE("kappa=0 reduces every composite variant to the same nominal update") {
  const ScenarioPreset& hw = preset("highway");
  const auto batch = toy_batch(hw, 8, 5);
  TrainConfig cfg;
  cfg.kappa = 0.0;
  cfg.lr = 1e-3;

  std::string results[3];
  int i = 0;
  for (Variant v : {Variant::AT, Variant::Radial, Variant::PsrlHybrid}) {
    AdvNets nets = fresh_nets(hw, 77);
    cfg.variant = v;
    Rng rng(1);
    AdvLosses losses = adv_update_minibatch(nets, batch, 2.0 / 255, cfg, rng);
    CHECK(losses.adv == 0.0);
    CHECK(losses.g_adv == 0.0);
    results[i++] = weights_text(nets.g, nets.q);
  }
  CHECK(results[0] == results[1]);
  CHECK(results[1] == results[2]);
}

TEST_CASE("kappa=0 psrl_at equals the manual nominal update") {
  const ScenarioPreset& hw = preset("highway");
  const auto batch = toy_batch(hw, 6, 9);
  TrainConfig cfg;
  cfg.variant = Variant::PsrlAT;
  cfg.kappa = 0.0;

  AdvNets nets = fresh_nets(hw, 31);
  AdvNets manual = nets;
  Rng rng(1);
  adv_update_minibatch(nets, batch, 2.0 / 255, cfg, rng);

  // manual reference: clean supervised step on g, feature TD step on q
  const int n = static_cast<int>(batch.size());
  GradientSet gg;
  gg.layers.resize(manual.g.layers.size());
  for (std::size_t l = 0; l < manual.g.layers.size(); ++l) {
    gg.layers[l].w = Matrix(manual.g.layers[l].w.rows, manual.g.layers[l].w.cols);
    gg.layers[l].b.assign(manual.g.layers[l].b.size(), 0.0);
  }
  GradientSet gq = gg;
  gq.layers.resize(manual.q.layers.size());
  for (std::size_t l = 0; l < manual.q.layers.size(); ++l) {
    gq.layers[l].w = Matrix(manual.q.layers[l].w.rows, manual.q.layers[l].w.cols);
    gq.layers[l].b.assign(manual.q.layers[l].b.size(), 0.0);
  }
  auto add = [](GradientSet& acc, const GradientSet& g) {
    for (std::size_t l = 0; l < acc.layers.size(); ++l) {
      for (std::size_t k = 0; k < acc.layers[l].w.a.size(); ++k)
        acc.layers[l].w.a[k] += g.layers[l].w.a[k];
      for (std::size_t k = 0; k < acc.layers[l].b.size(); ++k)
        acc.layers[l].b[k] += g.layers[l].b[k];
    }
  };
  for (const ReplayTransition& b : batch) {
    const auto pred = forward(manual.g, b.obs);
    std::vector<double> up(pred.size());
    for (std::size_t k = 0; k < pred.size(); ++k)
      up[k] = 2.0 * (pred[k] - b.features_true[k]) / n;
    add(gg, backward(manual.g, b.obs, up));

    const auto qv = forward(manual.q, b.features_true);
    const double y = ddqn_target(manual.q, manual.q_target, b.next_features_true,
                                 b.reward, b.done, cfg.discount);
    std::vector<double> uq(qv.size(), 0.0);
    uq[b.action] = 2.0 * (qv[b.action] - y) / n;
    add(gq, backward(manual.q, b.features_true, uq));
  }
  optimize_step(manual.g, gg, manual.g_state, AdamConfig{cfg.lr});
  optimize_step(manual.q, gq, manual.q_state, AdamConfig{cfg.lr});

  CHECK(weights_text(nets.g, nets.q) == weights_text(manual.g, manual.q));
}

TEST_CASE("radial adversarial term vanishes at the ramp start") {
  const ScenarioPreset& hw = preset("highway");
  const auto batch = toy_batch(hw, 4, 13);
  TrainConfig cfg;
  cfg.variant = Variant::Radial;
  cfg.kappa = 0.5;
  AdvNets nets = fresh_nets(hw, 51);
  Rng rng(1);
  AdvLosses losses = adv_update_minibatch(nets, batch, epsilon_ramp(0, 100, 2.0 / 255),
                                          cfg, rng);
  CHECK(losses.adv == 0.0);  // degenerate boxes, strict argmax
}

TEST_CASE("psrl_hybrid performs two optimizer phases per minibatch") {
  const ScenarioPreset& hw = preset("highway");
  const auto batch = toy_batch(hw, 4, 17);
  TrainConfig cfg;
  cfg.kappa = 0.5;
  for (Variant v : {Variant::AT, Variant::Radial, Variant::PsrlAT, Variant::PsrlHybrid}) {
    AdvNets nets = fresh_nets(hw, 61);
    cfg.variant = v;
    AdvStats stats;
    Rng rng(1);
    adv_update_minibatch(nets, batch, 1.0 / 255, cfg, rng, &stats);
    CHECK(stats.minibatches == 1);
    CHECK(stats.optimizer_phases == (v == Variant::PsrlHybrid ? 2 : 1));
  }
}

TEST_CASE("train_q_ddqn beats a uniform random policy") {
  const ScenarioPreset& hw = preset("highway");
  TrainConfig cfg;
  cfg.seed = 0;
  cfg.q_steps = 8000;
  MlpParams q = train_q_ddqn(hw, cfg);

  auto greedy_reward = [&](int episodes) {
    double total = 0;
    for (int e = 0; e < episodes; ++e) {
      SemState s = reset(hw, mix_seed(fnv1a("ddqn-test-eval"), e));
      for (int t = 0; t < hw.horizon; ++t) {
        const auto qv = forward(q, true_features(s));
        int a = 0;
        for (int i = 1; i < 5; ++i)
          if (qv[i] > qv[a]) a = i;
        StepOutcome out = step(s, a);
        total += out.reward;
        if (out.unsafe) break;
        s = std::move(out.next);
      }
    }
    return total / episodes;
  };
  auto random_reward = [&](int episodes) {
    Rng rng(7);
    double total = 0;
    for (int e = 0; e < episodes; ++e) {
      SemState s = reset(hw, mix_seed(fnv1a("ddqn-test-eval"), e));
      for (int t = 0; t < hw.horizon; ++t) {
        StepOutcome out = step(s, rng.uniform_int(5));
        total += out.reward;
        if (out.unsafe) break;
        s = std::move(out.next);
      }
    }
    return total / episodes;
  };
  const double trained = greedy_reward(20);
  const double rnd = random_reward(20);
  CHECK(trained >= 3.0 * rnd);
}

TEST_CASE("train_g converges to the default feature vector on an empty road") {
  const ScenarioPreset& empty = preset("highway_empty");
  TrainConfig cfg;
  cfg.seed = 1;
  cfg.buffer_size = 400;
  cfg.g_steps = 600;
  cfg.g_hidden = {8};
  MlpParams q = make_mlp({empty.feature_dim(), 4, empty.action_count}, 2);
  MlpParams g = train_g_supervised(q, empty, cfg);
  const SemState s = reset(empty, 5);
  const auto pred = forward(g, observe(s));
  for (double v : pred) CHECK(v == doctest::Approx(-1.0).epsilon(0.05));
}

TEST_CASE("g dataset in l2 mode holds clean and noisy pairs") {
  const ScenarioPreset& empty = preset("highway_empty");
  TrainConfig cfg;
  cfg.seed = 3;
  cfg.buffer_size = 40;
  cfg.norm = Norm::L2;
  cfg.sigma = 0.05;
  MlpParams q = make_mlp({empty.feature_dim(), 4, empty.action_count}, 2);
  const auto data = collect_g_dataset(q, empty, cfg);
  REQUIRE(data.size() >= 40);
  REQUIRE(data.size() % 2 == 0);
  for (std::size_t i = 0; i + 1 < data.size(); i += 2) {
    CHECK(data[i].second == data[i + 1].second);  // same target
    CHECK(data[i].first != data[i + 1].first);    // noisy vs clean frame
    double max_diff = 0.0;
    for (std::size_t k = 0; k < data[i].first.size(); ++k)
      max_diff = std::max(max_diff, std::abs(data[i].first[k] - data[i + 1].first[k]));
    CHECK(max_diff < 0.5);  // noise scale, not a different frame
  }

  TrainConfig clean = cfg;
  clean.norm = Norm::LInf;
  const auto base = collect_g_dataset(q, empty, clean);
  CHECK(base.size() < data.size());
}

TEST_CASE("g loss decreases over checkpoints on held-out rollouts") {
  const ScenarioPreset& hw = preset("highway");
  TrainConfig cfg;
  cfg.seed = 4;
  cfg.buffer_size = 1500;
  cfg.g_hidden = {32};
  MlpParams q = make_mlp({hw.feature_dim(), 8, hw.action_count}, 6);

  auto holdout_mse = [&](const MlpParams& g) {
    double err = 0.0;
    long n = 0;
    for (int e = 0; e < 4; ++e) {
      SemState s = reset(hw, mix_seed(fnv1a("g-holdout"), e));
      for (int t = 0; t < 20; ++t) {
        const auto pred = forward(g, observe(s));
        const auto feats = true_features(s);
        for (std::size_t k = 0; k < feats.size(); ++k)
          err += (pred[k] - feats[k]) * (pred[k] - feats[k]);
        n += 1;
        StepOutcome out = step(s, kIdle);
        if (out.unsafe) break;
        s = std::move(out.next);
      }
    }
    return err / n;
  };

  double prev = 1e100;
  for (int steps : {200, 1000, 3000}) {
    TrainConfig c = cfg;
    c.g_steps = steps;
    const double mse = holdout_mse(train_g_supervised(q, hw, c));
    CHECK(mse < prev);
    prev = mse;
  }
}

TEST_CASE("training reproducibility: identical seed, identical weights") {
  const ScenarioPreset& hw = preset("highway");
  TrainConfig cfg;
  cfg.seed = 11;
  cfg.q_steps = 600;
  cfg.g_steps = 200;
  cfg.buffer_size = 500;
  cfg.adv_steps = 120;
  cfg.variant = Variant::Radial;
  cfg.kappa = 0.3;

  MlpParams q1 = train_q_ddqn(hw, cfg);
  MlpParams q2 = train_q_ddqn(hw, cfg);
  CHECK(params_to_text(q1) == params_to_text(q2));

  MlpParams g1 = train_g_supervised(q1, hw, cfg);
  MlpParams g2 = train_g_supervised(q2, hw, cfg);
  CHECK(params_to_text(g1) == params_to_text(g2));

  auto [ga, qa] = adv_train(g1, q1, hw, cfg);
  auto [gb, qb] = adv_train(g1, q1, hw, cfg);
  CHECK(weights_text(ga, qa) == weights_text(gb, qb));
}

TEST_CASE("adv_update_minibatch rejects the vanilla variant") {
  const ScenarioPreset& hw = preset("highway");
  AdvNets nets = fresh_nets(hw, 1);
  TrainConfig cfg;
  cfg.variant = Variant::Vanilla;
  Rng rng(1);
  CHECK_THROWS_AS(adv_update_minibatch(nets, toy_batch(hw, 2, 1), 0.0, cfg, rng),
                  std::invalid_argument);
}

TEST_CASE("variant names round trip") {
  for (Variant v : {Variant::Vanilla, Variant::AT, Variant::Radial, Variant::PsrlAT,
                    Variant::PsrlHybrid})
    CHECK(variant_from_name(variant_name(v)) == v);
  CHECK_THROWS_AS(variant_from_name("nope"), std::invalid_argument);
}
