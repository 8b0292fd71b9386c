#include <doctest.h>

#include <cmath>

#include "safecert/policy.hpp"
#include "safecert/rng.hpp"

using namespace safecert;

namespace {

MlpParams layer_from(std::vector<std::vector<double>> w, std::vector<double> b) {
  MlpParams p;
  LinearLayer l;
  l.w = Matrix(static_cast<int>(w.size()), static_cast<int>(w[0].size()));
  for (int i = 0; i < l.w.rows; ++i)
    for (int j = 0; j < l.w.cols; ++j) l.w(i, j) = w[i][j];
  l.b = std::move(b);
  p.layers = {l};
  return p;
}

// the 1-D analytic policy: Q(a0) = x, Q(a1) = 1 - x through an identity g
CompositePolicy toy_policy() {
  CompositePolicy p;
  p.g = layer_from({{1.0}}, {0.0});
  p.q = layer_from({{1.0}, {-1.0}}, {0.0, 1.0});
  p.action_count = 2;
  return p;
}

CompositePolicy fixed_q_policy(std::vector<double> qvals) {
  CompositePolicy p;
  p.g = layer_from({{1.0}}, {0.0});
  const int n = static_cast<int>(qvals.size());
  LinearLayer l;
  l.w = Matrix(n, 1);
  l.b = std::move(qvals);
  p.q.layers = {l};
  p.action_count = n;
  return p;
}

}  // namespace

TEST_CASE("ActionSet bit operations") {
  ActionSet s;
  CHECK(s.empty());
  s.add(0);
  s.add(3);
  CHECK(s.count() == 2);
  CHECK(s.contains(3));
  CHECK_FALSE(s.contains(1));
  CHECK(s.to_vector() == std::vector<int>{0, 3});
  CHECK(s.to_string() == "{0,3}");
  CHECK(s.subset_of(ActionSet::full(5)));
  CHECK(ActionSet::full(5).minus(s).to_vector() == std::vector<int>{1, 2, 4});
  CHECK((s | ActionSet::single(1)).count() == 3);
}

TEST_CASE("act: argmax with lowest-id ties") {
  CompositePolicy p = fixed_q_policy({0.1, 0.9, 0.3, 0.0, 0.0});
  CHECK(act(p, std::vector<double>{0.0}) == 1);
  CompositePolicy tie = fixed_q_policy({0.5, 0.5, 0.2});
  CHECK(act(tie, std::vector<double>{0.0}) == 0);
}

TEST_CASE("q bounds over a feature box") {
  // degenerate box -> exact Q
  CompositePolicy p = toy_policy();
  BoxBounds feat({0.7}, {0.7});
  QBounds qb = q_bounds_from_feature_box(p.q, feat);
  CHECK(qb.lb[0] == doctest::Approx(0.7));
  CHECK(qb.ub[0] == doctest::Approx(0.7));
  CHECK(qb.lb[1] == doctest::Approx(0.3));

  // widening the box only widens every action interval
  QBounds prev = qb;
  for (double r = 0.05; r < 0.4; r += 0.05) {
    QBounds cur = q_bounds_from_feature_box(p.q, BoxBounds({0.7 - r}, {0.7 + r}));
    for (int a = 0; a < 2; ++a) {
      CHECK(cur.lb[a] <= prev.lb[a] + 1e-12);
      CHECK(cur.ub[a] >= prev.ub[a] - 1e-12);
    }
    prev = cur;
  }

  // Monte Carlo containment
  Rng rng(5);
  MlpParams q = make_mlp({3, 6, 4}, 2);
  BoxBounds box({0.1, -0.2, 0.4}, {0.3, 0.1, 0.9});
  QBounds bounds = q_bounds_from_feature_box(q, box);
  for (int s = 0; s < 2000; ++s) {
    std::vector<double> x(3);
    for (int i = 0; i < 3; ++i) x[i] = rng.uniform(box.lower[i], box.upper[i]);
    const auto qv = forward(q, x);
    for (int a = 0; a < 4; ++a) {
      CHECK(qv[a] >= bounds.lb[a]);
      CHECK(qv[a] <= bounds.ub[a]);
    }
  }
}

TEST_CASE("action-set rule: upper bound reaching the best lower bound") {
  QBounds qb;
  qb.lb = {0.5, 0.6, 0.1};
  qb.ub = {0.9, 0.7, 0.3};
  CHECK(actions_from_q_bounds(qb).to_vector() == std::vector<int>{0, 1});

  // ties are included
  QBounds tie;
  tie.lb = {0.5, 0.2};
  tie.ub = {0.9, 0.5};
  CHECK(actions_from_q_bounds(tie).to_vector() == std::vector<int>{0, 1});
}

TEST_CASE("cert_action_set: eps=0 gives the strict-argmax singleton") {
  CompositePolicy p = toy_policy();
  CertSettings cfg;
  const std::vector<double> obs = {0.7};
  CHECK(cert_action_set(p, obs, 0.0, cfg).to_vector() == std::vector<int>{0});
  CHECK_THROWS_AS(cert_action_set(p, obs, -0.01, cfg), std::invalid_argument);
}

TEST_CASE("cert_action_set grows monotonically and contains the nominal action") {
  CompositePolicy p;
  p.g = make_mlp({4, 8, 3}, 11);
  p.q = make_mlp({3, 6, 5}, 12);
  p.action_count = 5;
  CertSettings cfg;
  const std::vector<double> obs = {0.2, 0.5, 0.8, 0.3};
  const int nominal = act(p, obs);
  ActionSet prev;
  for (int k = 0; k <= 40; k += 4) {
    const ActionSet cur = cert_action_set(p, obs, k / 255.0, cfg);
    CHECK(cur.contains(nominal));
    CHECK(prev.subset_of(cur));
    prev = cur;
  }
}

TEST_CASE("cert_action_set: brute-force adversary stays inside the certified set") {
  // tiny 2-pixel observation; enumerate the perturbation corners and a grid
  CompositePolicy p;
  p.g = make_mlp({2, 4, 2}, 21);
  p.q = make_mlp({2, 4, 3}, 22);
  p.action_count = 3;
  CertSettings cfg;
  const std::vector<double> obs = {0.4, 0.6};
  for (double eps : {0.01, 0.05, 0.1, 0.2}) {
    const ActionSet cert = cert_action_set(p, obs, eps, cfg);
    for (int i = -4; i <= 4; ++i) {
      for (int j = -4; j <= 4; ++j) {
        std::vector<double> adv = {
            std::clamp(obs[0] + eps * i / 4.0, 0.0, 1.0),
            std::clamp(obs[1] + eps * j / 4.0, 0.0, 1.0)};
        CHECK(cert.contains(act(p, adv)));
      }
    }
  }
}

TEST_CASE("l2 cert path equals fresh median smoothing per scan point") {
  CompositePolicy p;
  p.g = make_mlp({3, 6, 2}, 31);
  p.q = make_mlp({2, 4, 3}, 32);
  p.action_count = 3;
  CertSettings cfg;
  cfg.norm = Norm::L2;
  cfg.smoothing.n_samples = 300;
  cfg.smoothing.seed = 9;
  const std::vector<double> obs = {0.3, 0.5, 0.7};

  ActionCertifier cached(p, obs, cfg);
  for (int k = 0; k <= 10; k += 2) {
    const double eps = k / 255.0;
    // naive recomputation through a fresh certifier
    const ActionSet naive = cert_action_set(p, obs, eps, cfg);
    CHECK(cached.at(eps) == naive);
  }
}

TEST_CASE("robust_epsilon_scan on the analytic toy") {
  CompositePolicy p = toy_policy();
  CertSettings cfg;
  const std::vector<double> obs = {0.7};
  ActionCertifier cert(p, obs, cfg);
  const EpsGrid grid = EpsGrid::for_norm(Norm::LInf);

  // a1 enters exactly at 51/255 = 0.2 (0.3 + eps >= 0.7 - eps)
  const ScanResult scan = robust_epsilon_scan(cert, ActionSet::single(0), grid, 0);
  CHECK(scan.robust_idx == 50);
  CHECK(scan.action_next.to_vector() == std::vector<int>{1});

  // resuming past the growth point with the grown set reaches the cap
  const ScanResult rest =
      robust_epsilon_scan(cert, ActionSet::full(2), grid, scan.robust_idx + 1);
  CHECK(rest.robust_idx == grid.max_idx);
  CHECK(rest.action_next.empty());
}

TEST_CASE("robust_epsilon_scan: insensitive policy reaches the grid cap") {
  CompositePolicy p = fixed_q_policy({1.0, 0.0, 0.0});
  CertSettings cfg;
  ActionCertifier cert(p, std::vector<double>{0.5}, cfg);
  const EpsGrid grid{255, 30};
  const ScanResult scan = robust_epsilon_scan(cert, ActionSet::single(0), grid, 0);
  CHECK(scan.robust_idx == 30);
  CHECK(scan.action_next.empty());
}

TEST_CASE("robust_epsilon_scan: nested certified sets along the scan") {
  CompositePolicy p;
  p.g = make_mlp({2, 5, 2}, 41);
  p.q = make_mlp({2, 5, 4}, 42);
  p.action_count = 4;
  CertSettings cfg;
  const std::vector<double> obs = {0.45, 0.55};
  ActionCertifier cert(p, obs, cfg);
  ActionSet prev = cert.at(0.0);
  for (int k = 1; k <= 60; ++k) {
    const ActionSet cur = cert.at(k / 255.0);
    CHECK(prev.subset_of(cur));
    prev = cur;
  }
}

TEST_CASE("norm names") {
  CHECK(norm_name(Norm::LInf) == "linf");
  CHECK(norm_from_name("l2") == Norm::L2);
  CHECK_THROWS_AS(norm_from_name("l1"), std::invalid_argument);
}
