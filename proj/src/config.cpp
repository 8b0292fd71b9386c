#include "safecert/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace safecert {

std::string format_eps(double eps) {
  const long k = std::lround(eps * 255.0);
  if (std::abs(eps - static_cast<double>(k) / 255.0) < 1e-12)
    return std::to_string(k) + "/255";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", eps);
  return buf;
}

double parse_eps(const std::string& text) {
  const auto slash = text.find('/');
  if (slash != std::string::npos) {
    const double num = std::stod(text.substr(0, slash));
    const double den = std::stod(text.substr(slash + 1));
    return num / den;
  }
  return std::stod(text);
}

EpsGrid RunConfig::effective_grid() const {
  if (grid_max_set) return grid;
  return EpsGrid::for_norm(norm);
}

CertSettings RunConfig::cert_settings() const {
  CertSettings s;
  s.norm = norm;
  s.smoothing = smoothing;
  return s;
}

namespace {

std::vector<std::uint64_t> parse_seed_list(const std::string& v) {
  std::vector<std::uint64_t> seeds;
  std::string tok;
  std::istringstream in(v);
  while (std::getline(in, tok, ',')) {
    if (!tok.empty()) seeds.push_back(std::stoull(tok));
  }
  if (seeds.empty()) throw std::invalid_argument("empty seed list");
  return seeds;
}

}  // namespace

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  bool have_preset = false;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;

  // scenario field overrides are applied after the preset is known
  std::vector<std::pair<std::string, std::pair<std::string, std::pair<int, int>>>> scenario_over;

  while (std::getline(in, line)) {
    line_no += 1;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const int col = static_cast<int>(first) + 1;

    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin, line_no, col, "expected 'section.key = value'");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError(origin, line_no, col, "expected 'section.key = value'");

    try {
      if (key == "scenario.preset") {
        cfg.preset_name = value;
        have_preset = true;
      } else if (key.rfind("scenario.", 0) == 0) {
        scenario_over.push_back({key.substr(9), {value, {line_no, col}}});
      } else if (key == "run.norm") {
        cfg.norm = norm_from_name(value);
        cfg.train.norm = cfg.norm;
        cfg.attack.norm = cfg.norm;
      } else if (key == "run.seeds") {
        cfg.seeds = parse_seed_list(value);
      } else if (key == "run.out") {
        cfg.out_dir = value;
      } else if (key == "train.variant") {
        cfg.train.variant = variant_from_name(value);
      } else if (key == "train.buffer_size") {
        cfg.train.buffer_size = std::stoi(value);
      } else if (key == "train.batch") {
        cfg.train.batch = std::stoi(value);
      } else if (key == "train.discount") {
        cfg.train.discount = std::stod(value);
      } else if (key == "train.q_steps") {
        cfg.train.q_steps = std::stoi(value);
      } else if (key == "train.g_steps") {
        cfg.train.g_steps = std::stoi(value);
      } else if (key == "train.adv_steps") {
        cfg.train.adv_steps = std::stoi(value);
      } else if (key == "train.target_eps") {
        cfg.train.target_eps = parse_eps(value);
      } else if (key == "train.ramp_fraction") {
        cfg.train.ramp_fraction = std::stod(value);
      } else if (key == "train.kappa") {
        cfg.train.kappa = std::stod(value);
      } else if (key == "train.sigma") {
        cfg.train.sigma = std::stod(value);
      } else if (key == "train.lr") {
        cfg.train.lr = std::stod(value);
      } else if (key == "train.target_sync") {
        cfg.train.target_sync = std::stoi(value);
      } else if (key == "train.warmup") {
        cfg.train.warmup = std::stoi(value);
      } else if (key == "train.eval_every") {
        cfg.train.eval_every = std::stoi(value);
      } else if (key == "train.g_hidden" || key == "train.q_hidden") {
        std::vector<int> dims;
        std::istringstream ds(value);
        std::string tok;
        while (std::getline(ds, tok, ',')) dims.push_back(std::stoi(tok));
        if (dims.empty()) throw std::invalid_argument("empty layer list");
        (key == "train.g_hidden" ? cfg.train.g_hidden : cfg.train.q_hidden) = dims;
      } else if (key == "grid.max") {
        cfg.grid.max_idx = static_cast<int>(std::lround(parse_eps(value) * cfg.grid.denom));
        cfg.grid_max_set = true;
      } else if (key == "smoothing.sigma") {
        cfg.smoothing.sigma = std::stod(value);
      } else if (key == "smoothing.samples") {
        cfg.smoothing.n_samples = std::stoi(value);
      } else if (key == "smoothing.seed") {
        cfg.smoothing.seed = std::stoull(value);
      } else if (key == "certify.tv") {
        cfg.t_v = std::stoi(value);
      } else if (key == "certify.budget") {
        cfg.node_budget = std::stol(value);
      } else if (key == "attack.eps") {
        cfg.attack.eps = parse_eps(value);
      } else if (key == "attack.pgd_steps") {
        cfg.attack.pgd_steps = std::stoi(value);
      } else if (key == "attack.step_size") {
        cfg.attack.step_size = parse_eps(value);
      } else if (key == "attack.restarts") {
        cfg.attack.restarts = std::stoi(value);
      } else if (key == "eval.eps_mse") {
        cfg.eval_eps_mse = parse_eps(value);
      } else {
        throw ConfigError(origin, line_no, col, "unknown key '" + key + "'");
      }
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(origin, line_no, col,
                        "bad value for '" + key + "': " + e.what());
    }
  }

  if (!have_preset)
    throw ConfigError(origin, line_no, 1, "missing required key 'scenario.preset'");
  cfg.scenario = preset(cfg.preset_name);

  for (const auto& [field, vp] : scenario_over) {
    const auto& [value, pos] = vp;
    try {
      if (field == "lanes") cfg.scenario.lanes = std::stoi(value);
      else if (field == "window") cfg.scenario.window = std::stoi(value);
      else if (field == "cell") cfg.scenario.cell = std::stod(value);
      else if (field == "vehicles") cfg.scenario.vehicles = std::stoi(value);
      else if (field == "horizon") cfg.scenario.horizon = std::stoi(value);
      else if (field == "v_min") cfg.scenario.v_min = std::stod(value);
      else if (field == "v_max") cfg.scenario.v_max = std::stod(value);
      else if (field == "accel") cfg.scenario.accel = std::stod(value);
      else if (field == "w_right") cfg.scenario.w_right = std::stod(value);
      else if (field == "w_speed") cfg.scenario.w_speed = std::stod(value);
      else if (field == "default_feature") cfg.scenario.default_feature = std::stod(value);
      else
        throw ConfigError(origin, pos.first, pos.second,
                          "unknown key 'scenario." + field + "'");
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(origin, pos.first, pos.second,
                        "bad value for 'scenario." + field + "': " + e.what());
    }
  }

  cfg.train.norm = cfg.norm;
  cfg.attack.norm = cfg.norm;
  return cfg;
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path, 0, 0, "cannot open config file");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path);
}

}  // namespace safecert
