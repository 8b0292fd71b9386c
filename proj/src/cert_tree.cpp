#include "safecert/cert_tree.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "safecert/errors.hpp"

namespace safecert {

double CertNode::robust_epsilon(const EpsGrid& g) const {
  return robust_idx >= kSafetySentinelIdx ? 255.0 : g.value(robust_idx);
}

double CertNode::max_safety_epsilon(const EpsGrid& g) const {
  return max_safety_idx >= kSafetySentinelIdx ? 255.0 : g.value(max_safety_idx);
}

void CertNode::count_nodes(std::vector<long>& per_depth) const {
  if (static_cast<int>(per_depth.size()) <= step_level)
    per_depth.resize(step_level + 1, 0);
  per_depth[step_level] += 1;
  for (const auto& c : children) c->count_nodes(per_depth);
}

long CertNode::tree_size() const {
  long n = 1;
  for (const auto& c : children) n += c->tree_size();
  return n;
}

std::string certificate_report(const Certificate& c, const EpsGrid& grid,
                               bool include_timing) {
  std::ostringstream out;
  out << "eps_safety = " << c.eps_idx << "/" << grid.denom << "\n";
  out << "norm = " << norm_name(c.norm) << "\n";
  out << "horizon = " << c.horizon << "\n";
  out << "nodes_explored = " << c.nodes_explored << "\n";
  out << "truncated = " << (c.truncated ? "true" : "false") << "\n";
  for (std::size_t d = 0; d < c.nodes_per_depth.size(); ++d)
    out << "nodes_depth_" << d << " = " << c.nodes_per_depth[d] << "\n";
  if (include_timing) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.3f", c.wall_seconds);
    out << "wall_seconds = " << buf << "\n";
  }
  return out.str();
}

Certificate certificate_from_report(const std::string& text) {
  Certificate c;
  std::istringstream in(text);
  std::string line;
  bool saw_eps = false;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string key, eq, value;
    if (!(ls >> key >> eq >> value) || eq != "=") continue;
    if (key == "eps_safety") {
      const auto slash = value.find('/');
      if (slash == std::string::npos) throw FormatError("bad eps_safety: " + value);
      c.eps_idx = std::stoi(value.substr(0, slash));
      saw_eps = true;
    } else if (key == "norm") {
      c.norm = norm_from_name(value);
    } else if (key == "horizon") {
      c.horizon = std::stoi(value);
    } else if (key == "nodes_explored") {
      c.nodes_explored = std::stol(value);
    } else if (key == "truncated") {
      c.truncated = value == "true";
    } else if (key.rfind("nodes_depth_", 0) == 0) {
      const std::size_t d = std::stoul(key.substr(12));
      if (c.nodes_per_depth.size() <= d) c.nodes_per_depth.resize(d + 1, 0);
      c.nodes_per_depth[d] = std::stol(value);
    } else if (key == "wall_seconds") {
      c.wall_seconds = std::stod(value);
    } else {
      throw FormatError("unknown certificate field: " + key);
    }
  }
  if (!saw_eps) throw FormatError("certificate report missing eps_safety");
  return c;
}

void update_max_safety(CertNode& node) {
  int m = std::min(node.robust_idx, kSafetySentinelIdx);
  for (auto& c : node.children) {
    update_max_safety(*c);
    m = std::min(m, c->max_safety_idx);
  }
  node.max_safety_idx = m;
}

GrowStatus tree_expand(CertNode& node, int eps_idx, int t_v,
                       const std::function<GrowStatus(CertNode&, int)>& grow) {
  if (node.max_safety_idx > eps_idx) return GrowStatus::Ok;  // subtree certified beyond eps
  for (std::size_t i = 0; i < node.children.size(); ++i) {
    CertNode& child = *node.children[i];
    GrowStatus st = tree_expand(child, eps_idx, t_v, grow);
    if (st != GrowStatus::Ok) return st;
    if (child.step_level == t_v) continue;
    if (child.robust_idx == eps_idx) {
      st = grow(child, eps_idx);
      if (st != GrowStatus::Ok) return st;
    }
  }
  return GrowStatus::Ok;
}

TreeCertifier::TreeCertifier(const CompositePolicy& policy, const CertifyOptions& opt)
    : policy_(&policy), opt_(opt) {}

std::unique_ptr<CertNode> TreeCertifier::make_child(CertNode& parent, int action,
                                                    SemState s) {
  auto child = std::make_unique<CertNode>();
  child->state = std::move(s);
  child->step_level = parent.step_level + 1;
  child->via_action = action;
  return child;
}

// Certifies the node's action set at grid index at_idx, materializes one child
// per (action, successor) and recurses depth-first over the new frontier.
// Any unsafe successor aborts; the node budget counts certified and unsafe
// nodes.
GrowStatus TreeCertifier::certify_node(CertNode& node, int at_idx) {
  std::vector<CertNode*> stack = {&node};
  while (!stack.empty()) {
    CertNode* cur = stack.back();
    stack.pop_back();
    if (nodes_explored_ >= opt_.node_budget) return GrowStatus::Budget;
    nodes_explored_ += 1;

    const std::vector<double> obs = observe(cur->state);
    ActionCertifier cert(*policy_, obs, opt_.cert);
    cur->action_taken = cert.at(opt_.grid.value(at_idx));
    const ScanResult scan =
        robust_epsilon_scan(cert, cur->action_taken, opt_.grid, at_idx);
    cur->robust_idx = scan.robust_idx;
    cur->action_next = scan.action_next;

    // FILO expansion: push children in reverse action order so the lowest
    // action id is processed first.
    std::vector<CertNode*> fresh;
    for (int a : cur->action_taken.to_vector()) {
      for (SemState& succ : successors(cur->state, a)) {
        auto child = make_child(*cur, a, std::move(succ));
        CertNode* raw = child.get();
        cur->children.push_back(std::move(child));
        if (is_unsafe(raw->state)) {
          nodes_explored_ += 1;
          return GrowStatus::Unsafe;
        }
        if (raw->step_level < opt_.t_v) fresh.push_back(raw);
      }
    }
    for (auto it = fresh.rbegin(); it != fresh.rend(); ++it) stack.push_back(*it);
  }
  return GrowStatus::Ok;
}

GrowStatus TreeCertifier::build_nominal(const SemState& s0) {
  root_ = std::make_unique<CertNode>();
  root_->state = s0;
  root_->step_level = 0;
  if (is_unsafe(s0)) {
    nodes_explored_ += 1;
    return GrowStatus::Unsafe;
  }
  if (opt_.t_v < 1) throw std::invalid_argument("certify: t_v must be >= 1");
  GrowStatus st = certify_node(*root_, 0);
  if (st == GrowStatus::Ok) update_max_safety(*root_);
  return st;
}

GrowStatus TreeCertifier::grow_tree(CertNode& node, int eps_idx) {
  if (node.robust_idx != eps_idx)
    throw std::invalid_argument("grow_tree: node not at the target epsilon");
  const int child_idx = eps_idx + 1;
  if (child_idx > opt_.grid.max_idx) return GrowStatus::Ok;

  // Children for the actions entering at eps + 1/255, then refresh this
  // node's own certificate from there.
  std::vector<CertNode*> fresh;
  for (int a : node.action_next.to_vector()) {
    for (SemState& succ : successors(node.state, a)) {
      auto child = make_child(node, a, std::move(succ));
      CertNode* raw = child.get();
      node.children.push_back(std::move(child));
      if (is_unsafe(raw->state)) {
        nodes_explored_ += 1;
        return GrowStatus::Unsafe;
      }
      if (raw->step_level < opt_.t_v) fresh.push_back(raw);
    }
  }

  node.action_taken = node.action_taken | node.action_next;
  const std::vector<double> obs = observe(node.state);
  ActionCertifier cert(*policy_, obs, opt_.cert);
  const ScanResult scan =
      robust_epsilon_scan(cert, node.action_taken, opt_.grid, child_idx);
  node.robust_idx = scan.robust_idx;
  node.action_next = scan.action_next;

  for (auto it = fresh.rbegin(); it != fresh.rend(); ++it) {
    GrowStatus st = certify_node(**it, child_idx);
    if (st != GrowStatus::Ok) return st;
  }
  return GrowStatus::Ok;
}

GrowStatus TreeCertifier::wave(int eps_idx) {
  auto grow = [this](CertNode& n, int idx) { return grow_tree(n, idx); };
  GrowStatus st = tree_expand(*root_, eps_idx, opt_.t_v, grow);
  if (st != GrowStatus::Ok) return st;
  if (root_->robust_idx == eps_idx) {
    // Algorithm boundary case: the expansion pass only grows children, so the
    // driver grows the root itself.
    st = grow_tree(*root_, eps_idx);
  }
  if (st == GrowStatus::Ok) update_max_safety(*root_);
  return st;
}

CertifyResult certify(const CompositePolicy& policy, const SemState& s0,
                      const CertifyOptions& opt) {
  if (opt.t_v < 1) throw std::invalid_argument("certify: t_v must be >= 1");
  if (opt.node_budget < opt.t_v + 1)
    throw std::invalid_argument("certify: node budget below t_v + 1");
  const auto t_start = std::chrono::steady_clock::now();

  TreeCertifier tc(policy, opt);
  Certificate c;
  c.norm = opt.cert.norm;
  c.horizon = opt.t_v;

  GrowStatus st = tc.build_nominal(s0);
  if (st == GrowStatus::Ok) {
    while (true) {
      const int eps_next = tc.root().max_safety_idx;
      if (eps_next >= opt.grid.max_idx) {
        c.eps_idx = opt.grid.max_idx;  // certified through the cap
        break;
      }
      st = tc.wave(eps_next);
      if (st == GrowStatus::Unsafe) {
        c.eps_idx = eps_next;  // eps_next was fully verified; eps_next+1 failed
        break;
      }
      if (st == GrowStatus::Budget) {
        c.eps_idx = eps_next;
        c.truncated = true;
        break;
      }
    }
  } else {
    // Nominal growth already failed: unsafe gives the paper's eps = 0; budget
    // exhaustion means nothing was verified at all.
    c.eps_idx = 0;
    c.truncated = st == GrowStatus::Budget;
  }

  c.nodes_explored = tc.nodes_explored();
  tc.root().count_nodes(c.nodes_per_depth);
  c.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return CertifyResult{std::move(c), tc.take_root()};
}

}  // namespace safecert
