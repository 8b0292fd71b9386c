#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "safecert/env.hpp"
#include "safecert/policy.hpp"

namespace safecert {

// Reads as 255.0 with the 1/255 grid; "sufficiently large" placeholder for
// nodes without certified descendants.
inline constexpr int kSafetySentinelIdx = 255 * 255;

struct CertNode {
  SemState state;
  std::vector<std::unique_ptr<CertNode>> children;
  int step_level = 0;
  ActionSet action_taken;                    // certified set at the current grid value
  int robust_idx = kSafetySentinelIdx;       // largest grid index with this exact set
  ActionSet action_next;                     // additions at robust_idx + 1
  int max_safety_idx = kSafetySentinelIdx;   // min(robust, children's max safety)
  int via_action = -1;                       // edge action from the parent (-1 at root)

  double robust_epsilon(const EpsGrid& g) const;
  double max_safety_epsilon(const EpsGrid& g) const;

  // materialized nodes in this subtree, per depth
  void count_nodes(std::vector<long>& per_depth) const;
  long tree_size() const;
};

struct Certificate {
  int eps_idx = 0;
  Norm norm = Norm::LInf;
  int horizon = 0;
  long nodes_explored = 0;  // certified decision nodes + unsafe nodes found
  bool truncated = false;
  std::vector<long> nodes_per_depth;
  double wall_seconds = 0.0;

  double eps_safety(const EpsGrid& g) const { return g.value(eps_idx); }
};

// Structured-text report. Timing is opt-in so reruns stay byte-identical.
std::string certificate_report(const Certificate& c, const EpsGrid& grid,
                               bool include_timing = false);
Certificate certificate_from_report(const std::string& text);

struct CertifyOptions {
  int t_v = 5;
  long node_budget = 500;
  EpsGrid grid;
  CertSettings cert;
};

enum class GrowStatus { Ok, Unsafe, Budget };

// Post-order recompute of max_safety_idx (min of own robust and children's
// max safety; childless nodes get min(robust, sentinel)).
void update_max_safety(CertNode& node);

// One expansion wave at grid index eps_idx: skips subtrees whose max safety
// exceeds eps_idx, recurses into children first, then grows children whose
// robust index equals eps_idx. Children at depth t_v are never grown. The
// root itself is the caller's responsibility.
GrowStatus tree_expand(CertNode& node, int eps_idx, int t_v,
                       const std::function<GrowStatus(CertNode&, int)>& grow);

// Tree construction/expansion machinery shared by certify() and the tests.
class TreeCertifier {
 public:
  TreeCertifier(const CompositePolicy& policy, const CertifyOptions& opt);

  // Nominal tree from s0 (certified at grid index 0). Unsafe or Budget aborts.
  GrowStatus build_nominal(const SemState& s0);

  // Expands node's action_next children and re-certifies the subtree frontier
  // at eps_idx + 1, depth-first. Requires node.robust_idx == eps_idx.
  GrowStatus grow_tree(CertNode& node, int eps_idx);

  GrowStatus wave(int eps_idx);  // tree_expand from the root + root growth

  CertNode& root() { return *root_; }
  std::unique_ptr<CertNode> take_root() { return std::move(root_); }
  long nodes_explored() const { return nodes_explored_; }

 private:
  GrowStatus certify_node(CertNode& node, int at_idx);
  std::unique_ptr<CertNode> make_child(CertNode& parent, int action, SemState s);

  const CompositePolicy* policy_;
  CertifyOptions opt_;
  std::unique_ptr<CertNode> root_;
  long nodes_explored_ = 0;
};

struct CertifyResult {
  Certificate certificate;
  std::unique_ptr<CertNode> root;
};

// Full certification: largest grid value for which no unsafe state is
// reachable within t_v steps under per-step observation perturbations.
CertifyResult certify(const CompositePolicy& policy, const SemState& s0,
                      const CertifyOptions& opt);

}  // namespace safecert
