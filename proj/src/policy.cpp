#include "safecert/policy.hpp"

#include <algorithm>
#include <stdexcept>

#include "safecert/errors.hpp"

namespace safecert {

std::string norm_name(Norm n) { return n == Norm::LInf ? "linf" : "l2"; }

Norm norm_from_name(const std::string& s) {
  if (s == "linf") return Norm::LInf;
  if (s == "l2") return Norm::L2;
  throw std::invalid_argument("unknown norm: " + s + " (expected linf or l2)");
}

std::vector<int> ActionSet::to_vector() const {
  std::vector<int> v;
  for (int a = 0; a < 32; ++a)
    if (contains(a)) v.push_back(a);
  return v;
}

std::string ActionSet::to_string() const {
  std::string out = "{";
  bool first = true;
  for (int a : to_vector()) {
    if (!first) out += ',';
    out += std::to_string(a);
    first = false;
  }
  return out + "}";
}

void CompositePolicy::validate() const {
  g.validate();
  q.validate();
  if (g.output_dim() != q.input_dim())
    throw FormatError("policy: g output dim != q input dim");
  if (q.output_dim() != action_count)
    throw FormatError("policy: q output dim != action count");
}

int act(const CompositePolicy& p, std::span<const double> obs) {
  const std::vector<double> qv = forward(p.q, forward(p.g, obs));
  int best = 0;
  for (int a = 1; a < static_cast<int>(qv.size()); ++a)
    if (qv[a] > qv[best]) best = a;
  return best;
}

QBounds q_bounds_from_feature_box(const MlpParams& q, const BoxBounds& feat) {
  const BoxBounds b = crown_bounds(q, feat);
  return QBounds{b.lower, b.upper};
}

ActionSet actions_from_q_bounds(const QBounds& qb) {
  double best_lb = qb.lb[0];
  for (double v : qb.lb) best_lb = std::max(best_lb, v);
  ActionSet set;
  for (int a = 0; a < static_cast<int>(qb.ub.size()); ++a)
    if (qb.ub[a] >= best_lb) set.add(a);
  return set;
}

ActionCertifier::ActionCertifier(const CompositePolicy& p, std::span<const double> obs,
                                 const CertSettings& cfg)
    : policy_(&p), obs_(obs.begin(), obs.end()), cfg_(cfg) {
  if (cfg_.norm == Norm::L2)
    cache_ = std::make_unique<SmoothingCache>(p.g, obs_, cfg_.smoothing);
}

ActionSet ActionCertifier::at(double eps) const {
  if (eps < 0.0) throw std::invalid_argument("cert_action_set: negative eps");
  const BoxBounds feat = cfg_.norm == Norm::LInf
                             ? composite_feature_bounds(policy_->g, obs_, eps)
                             : cache_->bounds(eps);
  return actions_from_q_bounds(q_bounds_from_feature_box(policy_->q, feat));
}

ActionSet cert_action_set(const CompositePolicy& p, std::span<const double> obs,
                          double eps, const CertSettings& cfg) {
  return ActionCertifier(p, obs, cfg).at(eps);
}

ScanResult robust_epsilon_scan(const ActionCertifier& cert, ActionSet current_set,
                               const EpsGrid& grid, int start_idx) {
  if (start_idx < 0 || start_idx > grid.max_idx)
    throw std::invalid_argument("robust_epsilon_scan: start index outside the grid");
  const ActionSet all = ActionSet::full(cert.action_count());
  for (int k = start_idx; k <= grid.max_idx; ++k) {
    if (current_set == all) break;  // a full set cannot grow; skip to the cap
    const ActionSet at_k = cert.at(grid.value(k));
    if (at_k == current_set) continue;
    if (k == start_idx && !at_k.subset_of(current_set))
      throw std::invalid_argument(
          "robust_epsilon_scan: certified set at start exceeds current_set");
    return ScanResult{k - 1, at_k.minus(current_set)};
  }
  return ScanResult{grid.max_idx, ActionSet{}};
}

}  // namespace safecert
