#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "safecert/env.hpp"
#include "safecert/policy.hpp"

namespace safecert {

struct AttackConfig {
  double eps = 0.0;
  Norm norm = Norm::LInf;
  int pgd_steps = 20;
  double step_size = 0.0;  // 0 selects eps / 8
  int restarts = 5;
  std::uint64_t seed = 0;
};

// Projected gradient descent on sum_a softmax(Q(o))_a * Q(o + d)_a within the
// eps ball, clipped to [0, 1]; best objective over restarts.
std::vector<double> pgd_attack(const CompositePolicy& p, std::span<const double> obs,
                               const AttackConfig& cfg);

struct RolloutResult {
  bool unsafe_reached = false;
  double reward = 0.0;
  std::vector<SemState> trajectory;  // visited true states, s0 first
};

// Attacks every step's observation; stops at the first unsafe state or after
// `horizon` steps (horizon < 0 selects the preset's evaluation horizon).
RolloutResult attacked_rollout(const CompositePolicy& p, const ScenarioPreset& preset,
                               std::uint64_t seed, const AttackConfig& cfg,
                               int horizon = -1);

struct EvalReport {
  double reward_mean = 0.0;
  double reward_sem = 0.0;
  double false_action_rate = 0.0;
  double avg_err = 0.0;     // MSE of g(o) vs true features on the nominal path
  double avg_err_ub = 0.0;  // worst-case MSE over the certified feature box
  double avg_err_lb = 0.0;  // best-case MSE over the certified feature box
  double attack_success_rate = -1.0;  // negative until an attack sweep fills it
  int episodes = 0;

  static std::string csv_header();
  std::string csv_row() const;
  std::string summary() const;
};

// Nominal rollouts over the given seeds: reward mean/SEM, false action rate,
// and prediction-error metrics with certified bounds at eps_for_mse.
EvalReport evaluate(const CompositePolicy& p, const ScenarioPreset& preset,
                    const std::vector<std::uint64_t>& seeds,
                    double eps_for_mse = 1.0 / 255);

}  // namespace safecert
