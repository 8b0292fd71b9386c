#include "safecert/env.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <stdexcept>

#include "safecert/errors.hpp"
#include "safecert/rng.hpp"

namespace safecert {

namespace {

std::map<std::string, ScenarioPreset> build_presets() {
  std::map<std::string, ScenarioPreset> m;

  ScenarioPreset highway;
  highway.name = "highway";
  highway.vehicles = 4;
  highway.other_v_lo = 0.3;
  highway.other_v_hi = 0.5;
  m[highway.name] = highway;

  ScenarioPreset twoway = highway;
  twoway.name = "twoway";
  twoway.lanes = 2;
  twoway.vehicles = 3;  // same lane as the ego
  twoway.oncoming = 2;
  twoway.start_lane = 1;
  twoway.w_right = 0.0;
  twoway.horizon = 20;
  m[twoway.name] = twoway;

  ScenarioPreset exit = highway;
  exit.name = "exit";
  exit.default_feature = 0.0;
  exit.horizon = 15;
  exit.exit_bonus = 1.0;
  exit.exit_window = 3;
  m[exit.name] = exit;

  ScenarioPreset empty = highway;  // open road, no unsafe states
  empty.name = "highway_empty";
  empty.vehicles = 0;
  m[empty.name] = empty;

  ScenarioPreset hires = highway;  // paper-scale frame resolution
  hires.name = "highway_hires";
  hires.window = 100;
  hires.cell = 0.2;
  m[hires.name] = hires;

  ScenarioPreset toy;
  toy.name = "toy1d";
  toy.toy = true;
  toy.lanes = 1;
  toy.window = 1;
  toy.vehicles = 0;
  toy.action_count = 2;
  toy.horizon = 5;
  m[toy.name] = toy;

  ScenarioPreset stoch = highway;
  stoch.name = "stoch_test";
  stoch.vehicles = 1;
  stoch.stochastic = true;
  m[stoch.name] = stoch;

  return m;
}

const std::map<std::string, ScenarioPreset>& presets() {
  static const std::map<std::string, ScenarioPreset> m = build_presets();
  return m;
}

double ego_anchor_cell(const ScenarioPreset& p) {
  return std::floor(p.ego_frac * p.window);
}

// Paint a unit-length vehicle centered at `pos` into one lane row; cells get
// their covered fraction, clamped to [0, 1].
void paint(std::vector<double>& grid, const ScenarioPreset& p, int frame, int lane,
           double rel_pos) {
  if (lane < 0 || lane >= p.lanes) return;
  const double anchor = -0.5 - ego_anchor_cell(p) * p.cell;  // cell 0 left edge, ego-relative
  const double lo = rel_pos - 0.5;
  const double hi = rel_pos + 0.5;
  int first = static_cast<int>(std::floor((lo - anchor) / p.cell));
  int last = static_cast<int>(std::floor((hi - anchor) / p.cell));
  first = std::max(first, 0);
  last = std::min(last, p.window - 1);
  for (int j = first; j <= last; ++j) {
    const double cell_lo = anchor + j * p.cell;
    const double overlap = std::min(hi, cell_lo + p.cell) - std::max(lo, cell_lo);
    if (overlap <= 0.0) continue;
    double& v = grid[(static_cast<std::size_t>(frame) * p.lanes + lane) * p.window + j];
    v = std::min(1.0, v + overlap / p.cell);
  }
}

const ScenarioPreset& preset_of(const SemState& s) { return preset(s.scenario); }

SemState toy_step(const SemState& s, int action) {
  SemState next = s;
  next.step_count += 1;
  if (action == 1)  // swerve: collide with a phantom vehicle at the ego position
    next.others = {VehicleState{next.ego.lane, next.ego.pos, 0.0}};
  return next;
}

}  // namespace

const ScenarioPreset& preset(const std::string& name) {
  auto it = presets().find(name);
  if (it == presets().end())
    throw std::invalid_argument("unknown scenario preset: " + name);
  return it->second;
}

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (const auto& [k, v] : presets()) names.push_back(k);
  return names;
}

std::string state_to_text(const SemState& s) {
  std::ostringstream out;
  auto num = [&](double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << buf;
  };
  out << s.scenario << " " << s.step_count << " " << s.ego.lane << " ";
  num(s.ego.pos);
  out << " ";
  num(s.ego.speed);
  out << " " << s.others.size();
  for (const VehicleState& v : s.others) {
    out << " " << v.lane << " ";
    num(v.pos);
    out << " ";
    num(v.speed);
  }
  return out.str();
}

SemState state_from_text(const std::string& text) {
  std::istringstream in(text);
  SemState s;
  std::size_t n = 0;
  if (!(in >> s.scenario >> s.step_count >> s.ego.lane >> s.ego.pos >> s.ego.speed >> n))
    throw FormatError("malformed state snapshot");
  s.others.resize(n);
  for (VehicleState& v : s.others)
    if (!(in >> v.lane >> v.pos >> v.speed))
      throw FormatError("malformed state snapshot");
  preset(s.scenario);  // validates the id
  return s;
}

SemState reset(const ScenarioPreset& p, std::uint64_t seed) {
  SemState s;
  s.scenario = p.name;
  s.step_count = 0;
  if (p.toy) {
    s.ego = {0, 0.7, 0.0};
    return s;
  }
  s.ego.lane = std::min(p.start_lane, p.lanes - 1);
  s.ego.pos = 0.0;
  s.ego.speed = p.start_speed;

  Rng rng(mix_seed(fnv1a(p.name.c_str()), seed));
  const double span = p.window * p.cell;
  const double hi = std::max(4.0, 0.7 * span);
  auto far_enough = [&](double pos, double min_gap) {
    if (std::abs(pos - s.ego.pos) < 3.0) return false;
    for (const VehicleState& v : s.others)
      if (std::abs(pos - v.pos) < min_gap) return false;
    return true;
  };
  auto place = [&](int forced_lane, double speed) {
    for (int attempt = 0; attempt < 100; ++attempt) {
      const int lane = forced_lane >= 0 ? forced_lane : rng.uniform_int(p.lanes);
      const double pos = rng.uniform(3.0, hi);
      if (far_enough(pos, 1.5)) {
        s.others.push_back({lane, pos, speed});
        return;
      }
    }
    // dense board fallback: drop it past the farthest placed vehicle
    double far = 3.0;
    for (const VehicleState& v : s.others) far = std::max(far, v.pos);
    s.others.push_back({forced_lane >= 0 ? forced_lane : 0, far + 2.0, speed});
  };

  for (int i = 0; i < p.vehicles; ++i) {
    const double speed = rng.uniform(p.other_v_lo, p.other_v_hi);
    place(p.oncoming > 0 ? s.ego.lane : -1, speed);
  }
  for (int i = 0; i < p.oncoming; ++i) {
    const double speed = -rng.uniform(p.other_v_lo, p.other_v_hi);
    place(p.lanes - 1 - s.ego.lane, speed);
  }
  return s;
}

StepOutcome step(const SemState& s, int action) {
  const ScenarioPreset& p = preset_of(s);
  if (action < 0 || action >= p.action_count)
    throw std::invalid_argument("invalid action id " + std::to_string(action));
  if (p.toy) {
    SemState next = toy_step(s, action);
    return {next, 0.0, is_unsafe(next)};
  }

  SemState next = s;
  switch (action) {
    case kLaneLeft:
      next.ego.lane = std::max(0, next.ego.lane - 1);
      break;
    case kLaneRight:
      next.ego.lane = std::min(p.lanes - 1, next.ego.lane + 1);
      break;
    case kFaster:
      next.ego.speed = std::min(p.v_max, next.ego.speed + p.accel);
      break;
    case kSlower:
      next.ego.speed = std::max(p.v_min, next.ego.speed - p.accel);
      break;
    default:
      break;  // kIdle
  }
  next.ego.pos += next.ego.speed;
  const double span = p.window * p.cell;
  for (VehicleState& v : next.others) {
    v.pos += v.speed;
    // circular traffic stream: vehicles that drop well behind the window
    // re-enter ahead, keeping the scene populated
    if (v.pos - next.ego.pos < -2.0 * p.cell - 2.0) v.pos += span;
  }
  next.step_count += 1;

  const bool unsafe = is_unsafe(next);
  double reward = 0.0;
  if (next.ego.lane == p.lanes - 1) reward += p.w_right;
  if (next.ego.speed >= p.high_speed_lo && next.ego.speed <= p.high_speed_hi)
    reward += p.w_speed;
  if (p.exit_bonus > 0.0 && next.step_count >= p.horizon - p.exit_window &&
      next.ego.lane == p.lanes - 1)
    reward += p.exit_bonus;
  if (unsafe) reward -= 1.0;
  return {std::move(next), reward, unsafe};
}

std::vector<SemState> successors(const SemState& s, int action) {
  const ScenarioPreset& p = preset_of(s);
  std::vector<SemState> out;
  out.push_back(step(s, action).next);
  if (p.stochastic && !s.others.empty()) {
    // braking event: the first vehicle advances at half speed this step
    SemState braked = out.front();
    braked.others[0].pos = s.others[0].pos + 0.5 * s.others[0].speed;
    out.push_back(std::move(braked));
  }
  return out;
}

std::vector<double> observe(const SemState& s) {
  const ScenarioPreset& p = preset_of(s);
  if (p.toy) return {s.ego.pos};

  std::vector<double> grid(p.obs_dim(), 0.0);
  // current frame (1), previous frame (0) reconstructed kinematically and
  // anchored at the previous ego position
  paint(grid, p, 1, s.ego.lane, 0.0);
  paint(grid, p, 0, s.ego.lane, 0.0);
  for (const VehicleState& v : s.others) {
    paint(grid, p, 1, v.lane, v.pos - s.ego.pos);
    paint(grid, p, 0, v.lane,
          (v.pos - v.speed) - (s.ego.pos - s.ego.speed));
  }
  return grid;
}

bool is_unsafe(const SemState& s) {
  for (const VehicleState& v : s.others)
    if (v.lane == s.ego.lane && std::abs(v.pos - s.ego.pos) < 1.0) return true;
  return false;
}

std::vector<double> true_features(const SemState& s) {
  const ScenarioPreset& p = preset_of(s);
  if (p.toy) return {s.ego.pos};

  std::vector<int> order(s.others.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    const double da = std::abs(s.others[a].pos - s.ego.pos);
    const double db = std::abs(s.others[b].pos - s.ego.pos);
    if (da != db) return da < db;
    return s.others[a].lane < s.others[b].lane;
  });

  std::vector<double> f(6, p.default_feature);
  for (int slot = 0; slot < 2 && slot < static_cast<int>(order.size()); ++slot) {
    const VehicleState& v = s.others[order[slot]];
    f[3 * slot + 0] = v.pos - s.ego.pos;
    f[3 * slot + 1] = v.lane - s.ego.lane;
    f[3 * slot + 2] = v.speed - s.ego.speed;
  }
  return f;
}

}  // namespace safecert
