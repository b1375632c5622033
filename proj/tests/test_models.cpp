#include "stostl/models.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

using namespace stostl;

namespace {

// Oracle CDF built from the erf power series (long double, 200 terms),
// independent of the implementation's erfc-based route.
long double erf_series(long double x) {
  long double sum = 0.0L, term = x;
  for (int n = 0; n < 200; ++n) {
    sum += term / (2 * n + 1);
    term *= -x * x / (n + 1);
  }
  return sum * 2.0L / std::sqrt(M_PIl);
}

long double oracle_cdf(long double x) {
  return 0.5L * (1.0L + erf_series(x / std::sqrt(2.0L)));
}

double oracle_quantile(double p) {
  long double lo = -10.0L, hi = 10.0L;
  for (int it = 0; it < 80; ++it) {
    long double mid = 0.5L * (lo + hi);
    if (oracle_cdf(mid) < p)
      lo = mid;
    else
      hi = mid;
  }
  return static_cast<double>(0.5L * (lo + hi));
}

// Example 1 dynamics: A = [1 1; 0 1], B_k = I + 0.3 w1 I - 0.2 w2 J.
LinearGaussianSystem example1_system() {
  LinearGaussianSystem s;
  s.a = Mat{{1, 1}, {0, 1}};
  s.b_bar = Mat{{1, 0}, {0, 1}};
  s.zeta_bar = Vec::Zero(2);
  s.b_tilde = {Mat{{0.3, 0}, {0, 0.3}}, Mat{{0, -0.2}, {-0.2, 0}}};
  s.zeta_tilde = {Vec::Zero(2), Vec::Zero(2)};
  s.w_bar = Vec::Zero(2);
  s.theta = Mat::Identity(2, 2);
  s.x0 = InitialState::at(Vec{{1.5, 0.0}});
  return s;
}

}  // namespace

TEST_CASE("inv_norm_cdf hits frozen oracle values") {
  CHECK(inv_norm_cdf(0.5) == Catch::Approx(0.0).margin(1e-12));
  // Frozen from the bisection oracle on the erf series.
  CHECK(inv_norm_cdf(0.7) == Catch::Approx(0.52440051270804078).margin(1e-9));
  CHECK(inv_norm_cdf(0.95) == Catch::Approx(1.6448536269514722).margin(1e-9));
  CHECK(inv_norm_cdf(0.05) == Catch::Approx(-1.6448536269514722).margin(1e-9));
}

TEST_CASE("inv_norm_cdf agrees with bisection across a grid") {
  for (int i = 1; i <= 40; ++i) {
    double p = i / 41.0;
    CHECK(inv_norm_cdf(p) == Catch::Approx(oracle_quantile(p)).margin(1e-9));
  }
}

TEST_CASE("inv_norm_cdf is strictly increasing") {
  double prev = -1e18;
  for (int i = 1; i < 1000; ++i) {
    double v = inv_norm_cdf(i / 1000.0);
    CHECK(v > prev);
    prev = v;
  }
}

TEST_CASE("inv_norm_cdf rejects the endpoints") {
  CHECK_THROWS_AS(inv_norm_cdf(0.0), ModelError);
  CHECK_THROWS_AS(inv_norm_cdf(1.0), ModelError);
}

TEST_CASE("psd_sqrt basic shapes") {
  Mat i3 = Mat::Identity(3, 3);
  CHECK((psd_sqrt(i3) - i3).norm() < 1e-12);

  Mat d = Vec{{4.0, 9.0}}.asDiagonal();
  Mat s = psd_sqrt(d);
  CHECK((s.transpose() * s - d).norm() < 1e-8);
}

TEST_CASE("psd_sqrt on random Gram matrices") {
  std::mt19937_64 gen(9);
  std::normal_distribution<double> nd;
  for (int it = 0; it < 20; ++it) {
    Mat w(6, 6);
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j) w(i, j) = nd(gen);
    Mat m = w.transpose() * w;
    Mat s = psd_sqrt(m);
    CHECK((s.transpose() * s - m).norm() < 1e-8 * std::max(1.0, m.norm()));
  }
}

TEST_CASE("psd_sqrt rejects bad inputs") {
  Mat asym{{1, 2}, {0, 1}};
  CHECK_THROWS_AS(psd_sqrt(asym), ModelError);
  Mat indef{{1, 0}, {0, -1}};
  CHECK_THROWS_AS(psd_sqrt(indef), ModelError);
}

TEST_CASE("simulate: zero covariance reduces to the mean recursion") {
  auto s = example1_system();
  s.theta = Mat::Zero(2, 2);
  s.w_bar = Vec{{0.4, -0.2}};
  SystemModel sys(s);
  std::vector<Vec> u(4, Vec{{0.5, -1.0}});
  Rng rng(123);
  auto traj = simulate(sys, u, 4, rng);

  Vec x = s.x0.value;
  for (int k = 0; k < 4; ++k) {
    Mat bk = s.b_bar.at(k);
    Vec zk = s.zeta_bar.at(k);
    for (int l = 0; l < 2; ++l) {
      bk += s.b_tilde[l] * s.w_bar.at(k)[l];
      zk += s.zeta_tilde[l] * s.w_bar.at(k)[l];
    }
    x = s.a * x + bk * u[k] + zk;
    CHECK((traj.states[k + 1] - x).norm() < 1e-12);
  }
}

TEST_CASE("simulate: zero input leaves only the A-power recursion") {
  auto sys = SystemModel(example1_system());
  std::vector<Vec> u(3, Vec::Zero(2));
  Rng rng(77);
  auto traj = simulate(sys, u, 3, rng);
  auto pw = matrix_powers(sys.linear_gaussian().a, 3);
  for (int k = 0; k <= 3; ++k)
    CHECK((traj.states[k] - pw[k] * sys.x0().value).norm() < 1e-12);
}

TEST_CASE("simulate is deterministic given the seed") {
  auto sys = SystemModel(example1_system());
  std::vector<Vec> u(5, Vec{{0.3, 0.1}});
  Rng r1(2021), r2(2021);
  auto t1 = simulate(sys, u, 5, r1);
  auto t2 = simulate(sys, u, 5, r2);
  for (int k = 0; k <= 5; ++k) CHECK(t1.states[k] == t2.states[k]);
}

TEST_CASE("Markov jump mode marginals match the chain") {
  MarkovJumpSystem s;
  s.modes.resize(2);
  s.modes[0] = {Mat{{0.9}}, Mat{{1.0}}, Vec{{0.0}}};
  s.modes[1] = {Mat{{1.1}}, Mat{{0.5}}, Vec{{0.1}}};
  s.initial_dist = Vec{{0.75, 0.25}};
  s.transition = Mat{{0.6, 0.4}, {0.2, 0.8}};
  s.x0 = InitialState::at(Vec{{1.0}});
  SystemModel sys(s);
  sys.validate();

  const int runs = 100000, steps = 4;
  std::vector<Vec> u(steps, Vec::Zero(1));
  Mat counts = Mat::Zero(steps, 2);
  for (int r = 0; r < runs; ++r) {
    Rng rng(Rng::derive_seed(5150, r));
    auto traj = simulate(sys, u, steps, rng);
    for (int k = 0; k < steps; ++k) counts(k, traj.modes[k]) += 1.0;
  }
  counts /= runs;

  Eigen::RowVectorXd marginal = s.initial_dist.transpose();
  for (int k = 0; k < steps; ++k) {
    CHECK(std::abs(counts(k, 0) - marginal[0]) < 1e-2);
    CHECK(std::abs(counts(k, 1) - marginal[1]) < 1e-2);
    marginal = marginal * s.transition;
  }
}

TEST_CASE("model validation catches dimension errors") {
  auto s = example1_system();
  s.b_tilde[1] = Mat::Zero(3, 2);
  CHECK_THROWS_AS(SystemModel(s).validate(), ModelError);

  MarkovJumpSystem mj;
  mj.modes.resize(2);
  mj.modes[0] = {Mat{{1.0}}, Mat{{1.0}}, Vec{{0.0}}};
  mj.modes[1] = {Mat{{1.0}}, Mat{{1.0}}, Vec{{0.0}}};
  mj.initial_dist = Vec{{0.5, 0.5}};
  mj.transition = Mat{{0.7, 0.2}, {0.5, 0.5}};  // first row sums to 0.9
  mj.x0 = InitialState::at(Vec{{0.0}});
  CHECK_THROWS_AS(SystemModel(mj).validate(), ModelError);
}
