#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "safecert/bounds.hpp"
#include "safecert/env.hpp"
#include "safecert/nn.hpp"
#include "safecert/policy.hpp"
#include "safecert/rng.hpp"

namespace safecert {

enum class Variant { Vanilla, AT, Radial, PsrlAT, PsrlHybrid };

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& s);

struct ReplayTransition {
  std::vector<double> obs;
  std::vector<double> features_true;
  int action = 0;
  double reward = 0.0;
  std::vector<double> next_obs;
  std::vector<double> next_features_true;
  bool done = false;
  std::vector<double> noisy_obs;  // l2 mode only
};

struct TrainConfig {
  int buffer_size = 10000;
  int batch = 32;
  double discount = 0.8;

  int q_steps = 8000;
  int g_steps = 4000;
  int adv_steps = 2000;

  double target_eps = 2.0 / 255;
  double ramp_fraction = 25000.0 / 40000.0;
  double kappa = 0.5;
  Variant variant = Variant::Vanilla;
  Norm norm = Norm::LInf;
  double sigma = 0.05;
  std::uint64_t seed = 0;

  double lr = 1e-3;
  int target_sync = 50;
  std::vector<int> g_hidden = {64, 64};
  std::vector<int> q_hidden = {32, 32};

  double explore_hi = 1.0;
  double explore_lo = 0.05;
  double explore_frac = 0.6;  // fraction of steps over which exploration decays
  int warmup = 500;
  int eval_every = 500;
  int eval_episodes = 3;
};

// One CSV row of the training log: step, loss terms, eval reward.
struct TrainLogRow {
  long step = 0;
  double td_loss = 0.0;
  double g_loss = 0.0;
  double adv_loss = 0.0;
  double eval_reward = 0.0;
};

std::string train_log_csv(const std::vector<TrainLogRow>& rows);

// epsilon schedule: target * min(1, t / ramp_steps)
double epsilon_ramp(long t, long ramp_steps, double target);

// Double-Q target: reward + discount * q_target(next)[argmax q_online(next)].
double ddqn_target(const MlpParams& online, const MlpParams& target,
                   std::span<const double> next_features, double reward, bool done,
                   double discount);

// DDQN on true features with epsilon-greedy exploration and periodic target
// sync. Deterministic given cfg.seed.
MlpParams train_q_ddqn(const ScenarioPreset& preset, const TrainConfig& cfg,
                       std::vector<TrainLogRow>* log = nullptr);

// Gamma-greedy rollout frames for the supervised stage: (observation, true
// feature) pairs. In l2 mode each frame is pushed twice, noisy copy first.
std::vector<std::pair<std::vector<double>, std::vector<double>>> collect_g_dataset(
    const MlpParams& q, const ScenarioPreset& preset, const TrainConfig& cfg);

// Supervised regression of g(observe(s)) onto true_features(s) over
// gamma-greedy rollouts of the learned policy. In l2 mode each frame is pushed
// clean and Gaussian-noised.
MlpParams train_g_supervised(const MlpParams& q, const ScenarioPreset& preset,
                             const TrainConfig& cfg,
                             std::vector<TrainLogRow>* log = nullptr);

struct AdvStats {
  long minibatches = 0;
  long optimizer_phases = 0;  // PsrlHybrid performs 2 per minibatch, others 1
};

// Online/target copies plus optimizer state for the adversarial phase.
struct AdvNets {
  MlpParams g, q;
  MlpParams g_target, q_target;
  AdamState g_state, q_state;
};

struct AdvLosses {
  double td = 0.0;
  double adv = 0.0;
  double g_clean = 0.0;
  double g_adv = 0.0;
};

// One variant-specific update on a fixed minibatch at perturbation budget
// eps_t. kappa = 0 reduces every variant to its nominal update exactly.
AdvLosses adv_update_minibatch(AdvNets& nets, const std::vector<ReplayTransition>& batch,
                               double eps_t, const TrainConfig& cfg, Rng& fgsm_rng,
                               AdvStats* stats = nullptr);

// Adversarial fine-tuning of (g, q) by variant; epsilon ramps linearly over
// the first ramp_fraction of steps.
std::pair<MlpParams, MlpParams> adv_train(const MlpParams& g, const MlpParams& q,
                                          const ScenarioPreset& preset,
                                          const TrainConfig& cfg,
                                          std::vector<TrainLogRow>* log = nullptr,
                                          AdvStats* stats = nullptr);

// One FGSM step with a random start against sum_a softmax(Q(o))_a * Q(o+d)_a,
// projected to the eps ball and the [0,1] pixel domain. Returns the perturbed
// observation.
std::vector<double> fgsm_perturb(const CompositePolicy& p, std::span<const double> obs,
                                 double eps, Norm norm, Rng& rng);

// --- differentiable interval propagation (training losses) ---

struct IbpTape {
  std::vector<std::vector<double>> pre_lo, pre_hi;    // per layer, pre-activation
  std::vector<std::vector<double>> post_lo, post_hi;  // per layer, post-activation
  BoxBounds input;
  BoxBounds out() const;
};

IbpTape ibp_forward_tape(const MlpParams& p, const BoxBounds& input);

struct IbpGrads {
  std::vector<LinearLayer> layers;  // parameter gradients
  std::vector<double> input_lower;  // gradients w.r.t. the input box
  std::vector<double> input_upper;
};

// Reverse pass through the interval propagation given upstream gradients on
// the output bounds.
IbpGrads ibp_backward(const MlpParams& p, const IbpTape& tape,
                      std::span<const double> g_lower, std::span<const double> g_upper);

}  // namespace safecert
