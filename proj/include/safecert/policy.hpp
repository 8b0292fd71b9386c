#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "safecert/bounds.hpp"
#include "safecert/nn.hpp"
#include "safecert/smoothing.hpp"

namespace safecert {

enum class Norm { LInf, L2 };

std::string norm_name(Norm n);
Norm norm_from_name(const std::string& s);

// Small bitmask over action ids.
struct ActionSet {
  std::uint32_t bits = 0;

  static ActionSet single(int a) { return ActionSet{1u << a}; }
  static ActionSet full(int n) { return ActionSet{(1u << n) - 1u}; }

  void add(int a) { bits |= 1u << a; }
  bool contains(int a) const { return (bits >> a) & 1u; }
  bool empty() const { return bits == 0; }
  int count() const { return __builtin_popcount(bits); }
  bool subset_of(ActionSet o) const { return (bits & ~o.bits) == 0; }

  ActionSet operator|(ActionSet o) const { return ActionSet{bits | o.bits}; }
  ActionSet minus(ActionSet o) const { return ActionSet{bits & ~o.bits}; }
  bool operator==(const ActionSet&) const = default;

  std::vector<int> to_vector() const;
  std::string to_string() const;  // e.g. "{0,3}"
};

// Observation -> feature predictor g composed with a feature -> Q-value net.
struct CompositePolicy {
  MlpParams g;
  MlpParams q;
  int action_count = 5;

  void validate() const;  // dims chain; q output == action_count
};

// argmax of q(g(obs)); ties broken by lowest action id.
int act(const CompositePolicy& p, std::span<const double> obs);

struct QBounds {
  std::vector<double> lb;
  std::vector<double> ub;
};

// Per-action Q intervals over a feature box (crown intersected with IBP).
QBounds q_bounds_from_feature_box(const MlpParams& q, const BoxBounds& feat);

// Actions whose Q upper bound reaches the best lower bound (ties included).
ActionSet actions_from_q_bounds(const QBounds& qb);

struct CertSettings {
  Norm norm = Norm::LInf;
  SmoothingConfig smoothing;
};

// Certified action set at budget eps: every action the adversary could
// possibly induce. Always contains act(p, obs).
ActionSet cert_action_set(const CompositePolicy& p, std::span<const double> obs,
                          double eps, const CertSettings& cfg);

// Binds (policy, observation) for an epsilon scan. The l2 path draws its
// smoothing samples once and reuses them; results are identical to fresh
// median_smooth_bounds calls.
class ActionCertifier {
 public:
  ActionCertifier(const CompositePolicy& p, std::span<const double> obs,
                  const CertSettings& cfg);

  ActionSet at(double eps) const;
  int action_count() const { return policy_->action_count; }

 private:
  const CompositePolicy* policy_;
  std::vector<double> obs_;
  CertSettings cfg_;
  std::unique_ptr<SmoothingCache> cache_;
};

// Certification grid: values {0, 1/denom, ..., max_idx/denom}.
struct EpsGrid {
  int denom = 255;
  int max_idx = 255;  // l_inf cap 255/255; l2 cap 20/255

  double value(int k) const { return static_cast<double>(k) / denom; }
  static EpsGrid for_norm(Norm n) {
    return n == Norm::LInf ? EpsGrid{255, 255} : EpsGrid{255, 20};
  }
};

struct ScanResult {
  int robust_idx = 0;     // largest grid index with an unchanged certified set
  ActionSet action_next;  // additions at the following grid value (empty at cap)
};

// Scans the grid upward from start_idx. Requires the certified set at
// grid[start_idx] to be contained in current_set.
ScanResult robust_epsilon_scan(const ActionCertifier& cert, ActionSet current_set,
                               const EpsGrid& grid, int start_idx);

}  // namespace safecert
