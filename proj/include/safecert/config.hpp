#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "safecert/env.hpp"
#include "safecert/errors.hpp"
#include "safecert/eval.hpp"
#include "safecert/policy.hpp"
#include "safecert/train.hpp"

namespace safecert {

// Epsilon values in user-facing text are "k/255" strings to avoid
// float-formatting drift.
std::string format_eps(double eps);
double parse_eps(const std::string& text);  // accepts "k/255" or a decimal

struct RunConfig {
  std::string preset_name;  // required
  Norm norm = Norm::LInf;
  std::vector<std::uint64_t> seeds = {0};
  std::string out_dir = "out";

  TrainConfig train;
  SmoothingConfig smoothing;
  EpsGrid grid;          // defaulted by norm unless grid.max was set
  bool grid_max_set = false;
  int t_v = 5;
  long node_budget = 500;
  AttackConfig attack;
  double eval_eps_mse = 1.0 / 255;

  ScenarioPreset scenario;  // preset with config overrides applied

  EpsGrid effective_grid() const;
  CertSettings cert_settings() const;
};

// Flat "section.key = value" format; '#' starts a comment. Unknown keys are
// hard errors with the offending line/column.
RunConfig parse_config_text(const std::string& text, const std::string& origin);
RunConfig parse_config_file(const std::string& path);

}  // namespace safecert
