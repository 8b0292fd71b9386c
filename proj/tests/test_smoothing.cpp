#include <doctest.h>

#include <cmath>

#include "safecert/errors.hpp"
#include "safecert/rng.hpp"
#include "safecert/smoothing.hpp"

using namespace safecert;

namespace {

MlpParams identity_1d() {
  MlpParams p;
  LinearLayer l;
  l.w = Matrix(1, 1);
  l.w(0, 0) = 1.0;
  l.b = {0.0};
  p.layers = {l};
  return p;
}

// high-precision CDF oracle via an erf series evaluated independently
double phi_series(double x) {
  // Phi(x) = 1/2 + phi-density-series; Taylor of erf around 0, valid for |x| small
  const double z = x / std::sqrt(2.0);
  double term = z, sum = z;
  for (int n = 1; n < 60; ++n) {
    term *= -z * z / n;
    sum += term / (2 * n + 1);
  }
  return 0.5 + sum / std::sqrt(M_PI);
}

}  // namespace

TEST_CASE("phi basics") {
  CHECK(phi(0.0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(phi(1.0) == doctest::Approx(0.841344746069).epsilon(1e-9));
  CHECK(phi(1.0) == doctest::Approx(phi_series(1.0)).epsilon(1e-12));
  CHECK(phi(-1.3) == doctest::Approx(phi_series(-1.3)).epsilon(1e-12));
  CHECK(phi(2.0) + phi(-2.0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("phi_inv round trip on a grid") {
  for (double x = -6.0; x <= 6.0; x += 0.25)
    CHECK(std::abs(phi_inv(phi(x)) - x) < 1e-8);
  for (double p = 1e-8; p < 1.0; p += 0.037)
    CHECK(std::abs(phi(phi_inv(p)) - p) < 1e-9);
  CHECK_THROWS_AS(phi_inv(0.0), std::invalid_argument);
  CHECK_THROWS_AS(phi_inv(1.0), std::invalid_argument);
  CHECK_THROWS_AS(phi_inv(-0.5), std::invalid_argument);
}

TEST_CASE("median smoothing: eps=0 collapses to the empirical median") {
  MlpParams g = identity_1d();
  SmoothingConfig cfg;
  cfg.sigma = 0.05;
  cfg.n_samples = 2000;
  cfg.seed = 3;
  std::vector<double> obs = {0.4};
  BoxBounds b = median_smooth_bounds(g, obs, 0.0, cfg);
  CHECK(b.lower[0] <= b.upper[0]);
  CHECK(b.upper[0] - b.lower[0] < 0.01);  // adjacent order statistics
  CHECK(b.lower[0] == doctest::Approx(0.4).epsilon(0.01));
}

TEST_CASE("median smoothing: identity predictor analytic shift") {
  MlpParams g = identity_1d();
  SmoothingConfig cfg;
  cfg.sigma = 0.05;
  cfg.n_samples = 2000;
  cfg.seed = 12;
  std::vector<double> obs = {0.3};
  BoxBounds b = median_smooth_bounds(g, obs, 0.05, cfg);
  CHECK(std::abs(b.upper[0] - 0.35) < 0.01);
  CHECK(std::abs(b.lower[0] - 0.25) < 0.01);
}

TEST_CASE("median smoothing invariants") {
  MlpParams g = make_mlp({3, 6, 2}, 21);
  SmoothingConfig cfg;
  cfg.sigma = 0.05;
  cfg.n_samples = 500;
  cfg.seed = 5;
  std::vector<double> obs = {0.2, 0.6, 0.9};
  SmoothingCache cache(g, obs, cfg);

  const BoxBounds med = cache.bounds(0.0);
  BoxBounds prev = med;
  for (int k = 1; k <= 10; ++k) {
    const BoxBounds cur = cache.bounds(k / 255.0);
    for (int i = 0; i < cur.dim(); ++i) {
      // ordering around the median and monotone widening in eps
      CHECK(cur.lower[i] <= med.upper[i]);
      CHECK(cur.upper[i] >= med.lower[i]);
      CHECK(cur.lower[i] <= prev.lower[i]);
      CHECK(cur.upper[i] >= prev.upper[i]);
    }
    prev = cur;
  }

  // determinism: a fresh cache reproduces identical bounds
  SmoothingCache cache2(g, obs, cfg);
  const BoxBounds a = cache.bounds(3.0 / 255);
  const BoxBounds b = cache2.bounds(3.0 / 255);
  CHECK(a.lower == b.lower);
  CHECK(a.upper == b.upper);
}

TEST_CASE("median smoothing: saturated percentile raises range error") {
  MlpParams g = identity_1d();
  SmoothingConfig cfg;
  cfg.sigma = 0.05;
  cfg.n_samples = 200;
  std::vector<double> obs = {0.5};
  CHECK_THROWS_AS(median_smooth_bounds(g, obs, 1.0, cfg), SmoothingRangeError);
  // the l2 certification cap stays well inside the working range
  CHECK_NOTHROW(median_smooth_bounds(g, obs, 20.0 / 255, cfg));
}

TEST_CASE("median smoothing config validation") {
  MlpParams g = identity_1d();
  std::vector<double> obs = {0.5};
  SmoothingConfig bad_sigma;
  bad_sigma.sigma = 0.0;
  CHECK_THROWS_AS(median_smooth_bounds(g, obs, 0.01, bad_sigma), std::invalid_argument);
  SmoothingConfig few;
  few.n_samples = 10;
  CHECK_THROWS_AS(median_smooth_bounds(g, obs, 0.01, few), std::invalid_argument);
}

TEST_CASE("conservative index margin only widens") {
  MlpParams g = make_mlp({2, 5, 2}, 8);
  std::vector<double> obs = {0.5, 0.1};
  SmoothingConfig cfg;
  cfg.n_samples = 400;
  cfg.seed = 17;
  SmoothingConfig wide = cfg;
  wide.index_margin = 5;
  const BoxBounds a = median_smooth_bounds(g, obs, 2.0 / 255, cfg);
  const BoxBounds b = median_smooth_bounds(g, obs, 2.0 / 255, wide);
  for (int i = 0; i < a.dim(); ++i) {
    CHECK(b.lower[i] <= a.lower[i]);
    CHECK(b.upper[i] >= a.upper[i]);
  }
}
