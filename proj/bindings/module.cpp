#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "safecert/cert_tree.hpp"
#include "safecert/config.hpp"
#include "safecert/env.hpp"
#include "safecert/eval.hpp"
#include "safecert/train.hpp"

namespace py = pybind11;
using namespace safecert;

PYBIND11_MODULE(_core, m) {
  m.doc() = "Safety certification of perception-based lane-world RL policies";

  // --- environment ---
  py::class_<ScenarioPreset>(m, "ScenarioPreset")
      .def_readonly("name", &ScenarioPreset::name)
      .def_readonly("lanes", &ScenarioPreset::lanes)
      .def_readonly("window", &ScenarioPreset::window)
      .def_readonly("vehicles", &ScenarioPreset::vehicles)
      .def_readonly("horizon", &ScenarioPreset::horizon)
      .def_readonly("action_count", &ScenarioPreset::action_count)
      .def("obs_dim", &ScenarioPreset::obs_dim)
      .def("feature_dim", &ScenarioPreset::feature_dim);

  py::class_<VehicleState>(m, "VehicleState")
      .def_readwrite("lane", &VehicleState::lane)
      .def_readwrite("pos", &VehicleState::pos)
      .def_readwrite("speed", &VehicleState::speed);

  py::class_<SemState>(m, "SemState")
      .def_readwrite("ego", &SemState::ego)
      .def_readwrite("others", &SemState::others)
      .def_readwrite("scenario", &SemState::scenario)
      .def_readwrite("step_count", &SemState::step_count)
      .def("__repr__", &state_to_text);

  py::class_<StepOutcome>(m, "StepOutcome")
      .def_readonly("next", &StepOutcome::next)
      .def_readonly("reward", &StepOutcome::reward)
      .def_readonly("unsafe", &StepOutcome::unsafe);

  m.def("preset", &preset, py::return_value_policy::reference);
  m.def("preset_names", &preset_names);
  m.def("reset", &reset);
  m.def("step", &step);
  m.def("successors", &successors);
  m.def("observe", [](const SemState& s) { return observe(s); });
  m.def("is_unsafe", &is_unsafe);
  m.def("true_features", [](const SemState& s) { return true_features(s); });
  m.def("state_to_text", &state_to_text);
  m.def("state_from_text", &state_from_text);

  // --- networks ---
  py::class_<MlpParams>(m, "MlpParams")
      .def("input_dim", &MlpParams::input_dim)
      .def("output_dim", &MlpParams::output_dim)
      .def("layer_count", &MlpParams::layer_count);

  m.def("make_mlp", &make_mlp);
  m.def("forward",
        [](const MlpParams& p, const std::vector<double>& x) { return forward(p, x); });
  m.def("save_params", &save_params);
  m.def("load_params", &load_params);
  m.def("params_to_text", &params_to_text);
  m.def("params_from_text", &params_from_text);

  // --- bounds & smoothing ---
  py::class_<BoxBounds>(m, "BoxBounds")
      .def(py::init<std::vector<double>, std::vector<double>>())
      .def_readonly("lower", &BoxBounds::lower)
      .def_readonly("upper", &BoxBounds::upper);

  m.def("ibp_bounds", &ibp_bounds);
  m.def("crown_bounds", &crown_bounds);
  m.def("composite_feature_bounds",
        [](const MlpParams& g, const std::vector<double>& obs, double eps) {
          return composite_feature_bounds(g, obs, eps);
        });
  m.def("phi", &phi);
  m.def("phi_inv", &phi_inv);

  py::class_<SmoothingConfig>(m, "SmoothingConfig")
      .def(py::init<>())
      .def_readwrite("sigma", &SmoothingConfig::sigma)
      .def_readwrite("n_samples", &SmoothingConfig::n_samples)
      .def_readwrite("seed", &SmoothingConfig::seed)
      .def_readwrite("index_margin", &SmoothingConfig::index_margin);

  m.def("median_smooth_bounds",
        [](const MlpParams& g, const std::vector<double>& obs, double eps,
           const SmoothingConfig& cfg) { return median_smooth_bounds(g, obs, eps, cfg); });

  // --- policy & certification ---
  py::enum_<Norm>(m, "Norm").value("LInf", Norm::LInf).value("L2", Norm::L2);

  py::class_<CompositePolicy>(m, "CompositePolicy")
      .def(py::init<>())
      .def_readwrite("g", &CompositePolicy::g)
      .def_readwrite("q", &CompositePolicy::q)
      .def_readwrite("action_count", &CompositePolicy::action_count)
      .def("validate", &CompositePolicy::validate);

  py::class_<CertSettings>(m, "CertSettings")
      .def(py::init<>())
      .def_readwrite("norm", &CertSettings::norm)
      .def_readwrite("smoothing", &CertSettings::smoothing);

  py::class_<EpsGrid>(m, "EpsGrid")
      .def(py::init<>())
      .def_readwrite("denom", &EpsGrid::denom)
      .def_readwrite("max_idx", &EpsGrid::max_idx)
      .def("value", &EpsGrid::value)
      .def_static("for_norm", &EpsGrid::for_norm);

  m.def("act",
        [](const CompositePolicy& p, const std::vector<double>& obs) { return act(p, obs); });
  m.def("cert_action_set",
        [](const CompositePolicy& p, const std::vector<double>& obs, double eps,
           const CertSettings& cfg) { return cert_action_set(p, obs, eps, cfg).to_vector(); });

  py::class_<Certificate>(m, "Certificate")
      .def_readonly("eps_idx", &Certificate::eps_idx)
      .def_readonly("horizon", &Certificate::horizon)
      .def_readonly("nodes_explored", &Certificate::nodes_explored)
      .def_readonly("truncated", &Certificate::truncated)
      .def_readonly("nodes_per_depth", &Certificate::nodes_per_depth)
      .def_readonly("wall_seconds", &Certificate::wall_seconds)
      .def("eps_safety", &Certificate::eps_safety);

  py::class_<CertifyOptions>(m, "CertifyOptions")
      .def(py::init<>())
      .def_readwrite("t_v", &CertifyOptions::t_v)
      .def_readwrite("node_budget", &CertifyOptions::node_budget)
      .def_readwrite("grid", &CertifyOptions::grid)
      .def_readwrite("cert", &CertifyOptions::cert);

  m.def("certify", [](const CompositePolicy& p, const SemState& s0,
                      const CertifyOptions& opt) { return certify(p, s0, opt).certificate; });
  m.def("certificate_report", &certificate_report, py::arg("certificate"), py::arg("grid"),
        py::arg("include_timing") = false);

  // --- training & evaluation ---
  py::enum_<Variant>(m, "Variant")
      .value("Vanilla", Variant::Vanilla)
      .value("AT", Variant::AT)
      .value("Radial", Variant::Radial)
      .value("PsrlAT", Variant::PsrlAT)
      .value("PsrlHybrid", Variant::PsrlHybrid);

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("buffer_size", &TrainConfig::buffer_size)
      .def_readwrite("batch", &TrainConfig::batch)
      .def_readwrite("discount", &TrainConfig::discount)
      .def_readwrite("q_steps", &TrainConfig::q_steps)
      .def_readwrite("g_steps", &TrainConfig::g_steps)
      .def_readwrite("adv_steps", &TrainConfig::adv_steps)
      .def_readwrite("target_eps", &TrainConfig::target_eps)
      .def_readwrite("ramp_fraction", &TrainConfig::ramp_fraction)
      .def_readwrite("kappa", &TrainConfig::kappa)
      .def_readwrite("variant", &TrainConfig::variant)
      .def_readwrite("norm", &TrainConfig::norm)
      .def_readwrite("sigma", &TrainConfig::sigma)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("lr", &TrainConfig::lr)
      .def_readwrite("g_hidden", &TrainConfig::g_hidden)
      .def_readwrite("q_hidden", &TrainConfig::q_hidden);

  m.def("train_q_ddqn", [](const ScenarioPreset& p, const TrainConfig& cfg) {
    return train_q_ddqn(p, cfg);
  });
  m.def("train_g_supervised", [](const MlpParams& q, const ScenarioPreset& p,
                                 const TrainConfig& cfg) {
    return train_g_supervised(q, p, cfg);
  });
  m.def("adv_train", [](const MlpParams& g, const MlpParams& q, const ScenarioPreset& p,
                        const TrainConfig& cfg) { return adv_train(g, q, p, cfg); });

  py::class_<AttackConfig>(m, "AttackConfig")
      .def(py::init<>())
      .def_readwrite("eps", &AttackConfig::eps)
      .def_readwrite("norm", &AttackConfig::norm)
      .def_readwrite("pgd_steps", &AttackConfig::pgd_steps)
      .def_readwrite("step_size", &AttackConfig::step_size)
      .def_readwrite("restarts", &AttackConfig::restarts)
      .def_readwrite("seed", &AttackConfig::seed);

  py::class_<RolloutResult>(m, "RolloutResult")
      .def_readonly("unsafe_reached", &RolloutResult::unsafe_reached)
      .def_readonly("reward", &RolloutResult::reward)
      .def_readonly("trajectory", &RolloutResult::trajectory);

  py::class_<EvalReport>(m, "EvalReport")
      .def_readonly("reward_mean", &EvalReport::reward_mean)
      .def_readonly("reward_sem", &EvalReport::reward_sem)
      .def_readonly("false_action_rate", &EvalReport::false_action_rate)
      .def_readonly("avg_err", &EvalReport::avg_err)
      .def_readonly("avg_err_ub", &EvalReport::avg_err_ub)
      .def_readonly("avg_err_lb", &EvalReport::avg_err_lb)
      .def_readonly("episodes", &EvalReport::episodes)
      .def("summary", &EvalReport::summary);

  m.def("pgd_attack", [](const CompositePolicy& p, const std::vector<double>& obs,
                         const AttackConfig& cfg) { return pgd_attack(p, obs, cfg); });
  m.def("attacked_rollout", &attacked_rollout, py::arg("policy"), py::arg("preset"),
        py::arg("seed"), py::arg("cfg"), py::arg("horizon") = -1);
  m.def("evaluate", &evaluate, py::arg("policy"), py::arg("preset"), py::arg("seeds"),
        py::arg("eps_for_mse") = 1.0 / 255);

  m.def("format_eps", &format_eps);
  m.def("parse_eps", &parse_eps);
}
