#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace safecert {

// Lane-world actions. The analytic toy preset uses ids {0, 1} only.
enum Action : int {
  kLaneLeft = 0,
  kIdle = 1,
  kLaneRight = 2,
  kFaster = 3,
  kSlower = 4,
};

struct ScenarioPreset {
  std::string name;

  int lanes = 3;
  int window = 20;        // cells per frame
  double cell = 1.0;      // longitudinal units per cell
  double ego_frac = 0.1;  // ego anchor cell = floor(ego_frac * window)

  int vehicles = 3;   // same-direction traffic
  int oncoming = 0;   // opposite-direction traffic (twoway)

  double v_min = 0.25;
  double v_max = 1.25;
  double accel = 0.25;
  double start_speed = 0.75;
  int start_lane = 1;
  double other_v_lo = 0.35;
  double other_v_hi = 0.65;

  double w_right = 0.1;       // reward for the rightmost lane
  double w_speed = 0.5;       // reward for the high speed band
  double high_speed_lo = 1.0;
  double high_speed_hi = 1.25;
  double exit_bonus = 0.0;    // right-lane bonus over the last exit_window steps
  int exit_window = 0;

  double default_feature = -1.0;  // fill for missing nearest vehicles
  int horizon = 40;               // evaluation episode length
  int action_count = 5;

  bool toy = false;         // 1-D analytic environment
  bool stochastic = false;  // finite-support branching transitions (test preset)

  int obs_dim() const { return toy ? 1 : 2 * lanes * window; }
  int feature_dim() const { return toy ? 1 : 6; }
};

// Named presets: highway, twoway, exit, highway_empty, highway_hires, toy1d,
// stoch_test. Throws std::invalid_argument for unknown names.
const ScenarioPreset& preset(const std::string& name);
std::vector<std::string> preset_names();

struct VehicleState {
  int lane = 0;
  double pos = 0.0;
  double speed = 0.0;
};

// Full semantic simulator state; sufficient to restore the simulator.
struct SemState {
  VehicleState ego;
  std::vector<VehicleState> others;
  std::string scenario;
  int step_count = 0;

  bool operator==(const SemState&) const = default;
};

// One-line text snapshot / restore.
std::string state_to_text(const SemState& s);
SemState state_from_text(const std::string& text);

struct StepOutcome {
  SemState next;
  double reward = 0.0;
  bool unsafe = false;
};

// Deterministic initial state draw; other vehicles placed without overlap and
// the ego safe at t=0.
SemState reset(const ScenarioPreset& p, std::uint64_t seed);

// Pure transition. Throws std::invalid_argument on an invalid action id.
StepOutcome step(const SemState& s, int action);

// Finite transition support. Deterministic presets return the singleton
// {step(s, a).next}; the stochastic test preset enumerates both outcomes in a
// stable order (nominal first).
std::vector<SemState> successors(const SemState& s, int action);

// Two stacked occupancy frames (previous then current), flattened lane-major,
// every entry in [0, 1]. The previous frame is reconstructed from
// constant-speed kinematics so the observation is a pure function of state.
std::vector<double> observe(const SemState& s);

// True iff the ego is within 1 longitudinal unit (strict) of another vehicle
// in the same lane.
bool is_unsafe(const SemState& s);

// Ego-relative (position, lane, speed) of the two nearest vehicles by
// |relative position| (nearest first, ties by lower lane index); missing
// vehicles filled with the preset's default feature value.
std::vector<double> true_features(const SemState& s);

}  // namespace safecert
