#pragma once

// The three stochastic system classes, trajectory simulation and the shared
// numerical kernels (inverse normal CDF, PSD square root, matrix powers).

#include "stostl/core.hpp"

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

namespace stostl {

// ---------------------------------------------------------------------------
// Numerical kernels
// ---------------------------------------------------------------------------

namespace detail {

// Acklam's rational approximation of the standard normal quantile,
// good to ~1.15e-9 relative error before refinement.
inline double inv_norm_cdf_estimate(double p) {
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  if (p < plow) {
    double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q +
            c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p > 1.0 - plow) {
    double q = std::sqrt(-2.0 * std::log(1.0 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q +
             c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  double q = p - 0.5;
  double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) *
         q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

}  // namespace detail

inline double norm_cdf(double x) {
  return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

// F^{-1}: inverse cumulative distribution function of a standard normal.
// Rational estimate refined by Halley steps on the erfc-based CDF; absolute
// error well below 1e-9 across (0,1).
inline double inv_norm_cdf(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw ModelError("inv_norm_cdf requires p in the open interval (0,1)");
  double x = detail::inv_norm_cdf_estimate(p);
  for (int it = 0; it < 3; ++it) {
    double err = norm_cdf(x) - p;
    double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
    if (pdf <= 0.0) break;
    double u = err / pdf;
    x -= u / (1.0 + 0.5 * x * u);  // Halley
  }
  return x;
}

// S with S^T S = M for symmetric PSD M (eigendecomposition route). Small
// negative eigenvalues down to -kPsdTolerance are clamped to zero.
inline Mat psd_sqrt(const Mat& m) {
  if (m.rows() != m.cols()) throw ModelError("psd_sqrt: matrix not square");
  if (m.rows() == 0) return m;
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-8)
    throw ModelError("psd_sqrt: matrix not symmetric");
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + m.transpose()));
  Vec ev = es.eigenvalues();
  for (int i = 0; i < ev.size(); ++i) {
    if (ev[i] < -kPsdTolerance * std::max(1.0, ev.cwiseAbs().maxCoeff()))
      throw ModelError("psd_sqrt: matrix is indefinite beyond tolerance");
    if (ev[i] < 0.0) ev[i] = 0.0;
  }
  return ev.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

// Powers A^0..A^n, computed once and reused by the encoders.
inline std::vector<Mat> matrix_powers(const Mat& a, int n) {
  std::vector<Mat> pw;
  pw.reserve(n + 1);
  pw.push_back(Mat::Identity(a.rows(), a.cols()));
  for (int i = 1; i <= n; ++i) pw.push_back(pw.back() * a);
  return pw;
}

// ---------------------------------------------------------------------------
// Random sampling. Box-Muller on a mt19937_64 stream keeps runs reproducible
// independently of the standard library's distribution implementations.
// ---------------------------------------------------------------------------

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double uniform() {
    return (gen_() >> 11) * (1.0 / 9007199254740992.0);  // [0,1)
  }

  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * M_PI * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * M_PI * u2);
  }

  Vec gaussian_vec(int n) {
    Vec v(n);
    for (int i = 0; i < n; ++i) v[i] = gaussian();
    return v;
  }

  // Index sampled from a discrete distribution (weights sum to ~1).
  int discrete(const Vec& weights) {
    double u = uniform();
    double acc = 0.0;
    for (int i = 0; i < weights.size(); ++i) {
      acc += weights[i];
      if (u < acc) return i;
    }
    return static_cast<int>(weights.size()) - 1;
  }

  // Decorrelated child stream for run `index` (splitmix64 over the seed).
  static std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// ---------------------------------------------------------------------------
// System classes (Table 1)
// ---------------------------------------------------------------------------

// Parameter that is either constant over time or a per-step list.
template <typename T>
class TimeVarying {
 public:
  TimeVarying() = default;
  TimeVarying(T constant) : values_{std::move(constant)} {}  // NOLINT
  template <typename U,
            typename = std::enable_if_t<std::is_constructible_v<T, const U&> &&
                                        !std::is_same_v<U, TimeVarying>>>
  TimeVarying(const U& constant) : values_{T(constant)} {}  // NOLINT
  explicit TimeVarying(std::vector<T> per_step) : values_(std::move(per_step)) {
    if (values_.empty()) throw ModelError("empty time-varying parameter");
  }

  const T& at(int k) const {
    if (values_.size() == 1) return values_[0];
    if (k < 0 || k >= static_cast<int>(values_.size()))
      throw ModelError("time-varying parameter index out of range");
    return values_[static_cast<size_t>(k)];
  }

  bool constant() const { return values_.size() == 1; }

 private:
  std::vector<T> values_;
};

// Bounds and (optional) fixed value for the initial state.
struct InitialState {
  Vec value;           // used when fixed
  bool fixed = true;   // free initial state ranges over [lower, upper]
  Vec lower, upper;    // per-component bounds when free

  static InitialState at(Vec v) {
    InitialState s;
    s.value = std::move(v);
    return s;
  }
  static InitialState free(Vec lower, Vec upper) {
    InitialState s;
    s.fixed = false;
    s.lower = std::move(lower);
    s.upper = std::move(upper);
    return s;
  }
  static InitialState free(int n, double bound = kDefaultBound) {
    return free(Vec::Constant(n, -bound), Vec::Constant(n, bound));
  }
};

// x_{k+1} = A x_k + B_k u_k + zeta_k,
// [B_k, zeta_k] = [Bbar_k, zetabar_k] + sum_l [Btilde_l, zetatilde_l] w_{k,l},
// w_k ~ N(wbar_k, Theta_k).
struct LinearGaussianSystem {
  Mat a;
  TimeVarying<Mat> b_bar;
  TimeVarying<Vec> zeta_bar;
  std::vector<Mat> b_tilde;     // one per noise component l = 1..N
  std::vector<Vec> zeta_tilde;  // one per noise component
  TimeVarying<Vec> w_bar;
  TimeVarying<Mat> theta;
  InitialState x0;

  int nx() const { return static_cast<int>(a.rows()); }
  int nu() const { return static_cast<int>(b_bar.at(0).cols()); }
  int noise_dim() const { return static_cast<int>(b_tilde.size()); }

  void validate() const {
    int n = nx(), m = nu(), nw = noise_dim();
    if (a.cols() != n) throw ModelError("A must be square");
    if (b_bar.at(0).rows() != n) throw ModelError("Bbar row count != nx");
    if (zeta_bar.at(0).size() != n) throw ModelError("zetabar size != nx");
    if (static_cast<int>(zeta_tilde.size()) != nw)
      throw ModelError("zetatilde count != Btilde count");
    for (const auto& bt : b_tilde)
      if (bt.rows() != n || bt.cols() != m)
        throw ModelError("Btilde dimension mismatch");
    for (const auto& zt : zeta_tilde)
      if (zt.size() != n) throw ModelError("zetatilde dimension mismatch");
    if (w_bar.at(0).size() != nw) throw ModelError("wbar size != noise dim");
    const Mat& th = theta.at(0);
    if (th.rows() != nw || th.cols() != nw)
      throw ModelError("Theta dimension mismatch");
    psd_sqrt(th);  // throws when not PSD
    if (x0.fixed && x0.value.size() != n)
      throw ModelError("x0 dimension mismatch");
  }
};

// x_{k+1} = A(w_k) x_k + B(w_k) u_k + zeta(w_k) with w_k a finite Markov chain.
struct MarkovJumpSystem {
  struct Mode {
    Mat a;
    Mat b;
    Vec zeta;
  };
  std::vector<Mode> modes;  // w^0 .. w^N
  Vec initial_dist;         // distribution of w_0
  Mat transition;           // row-stochastic
  InitialState x0;

  int nx() const { return static_cast<int>(modes.at(0).a.rows()); }
  int nu() const { return static_cast<int>(modes.at(0).b.cols()); }
  int mode_count() const { return static_cast<int>(modes.size()); }

  void validate() const {
    if (modes.empty()) throw ModelError("Markov jump system needs >= 1 mode");
    int n = nx(), m = nu(), nm = mode_count();
    for (const auto& md : modes) {
      if (md.a.rows() != n || md.a.cols() != n || md.b.rows() != n ||
          md.b.cols() != m || md.zeta.size() != n)
        throw ModelError("mode matrices must share dimensions");
    }
    if (initial_dist.size() != nm)
      throw ModelError("initial mode distribution size mismatch");
    if (std::abs(initial_dist.sum() - 1.0) > 1e-9)
      throw ModelError("initial mode distribution must sum to 1");
    if (transition.rows() != nm || transition.cols() != nm)
      throw ModelError("transition matrix dimension mismatch");
    for (int i = 0; i < nm; ++i)
      if (std::abs(transition.row(i).sum() - 1.0) > 1e-9)
        throw ModelError("transition matrix rows must sum to 1");
    if (x0.fixed && x0.value.size() != n)
      throw ModelError("x0 dimension mismatch");
  }
};

// Deterministic plant x_{k+1} = A x_k + B u_k; chance constraints act on
// noisy coefficients w_k ~ N(wbar_k, Theta_k) applied to xi_k = [x_k; u_k].
struct MeasurementNoiseSystem {
  Mat a;
  Mat b;
  TimeVarying<Vec> w_bar;    // dimension nx + nu
  TimeVarying<Mat> theta;    // (nx+nu) x (nx+nu)
  InitialState x0;

  int nx() const { return static_cast<int>(a.rows()); }
  int nu() const { return static_cast<int>(b.cols()); }
  int xi_dim() const { return nx() + nu(); }

  void validate() const {
    int n = nx();
    if (a.cols() != n || b.rows() != n) throw ModelError("A/B dimensions");
    if (w_bar.at(0).size() != xi_dim())
      throw ModelError("wbar size != nx + nu");
    const Mat& th = theta.at(0);
    if (th.rows() != xi_dim() || th.cols() != xi_dim())
      throw ModelError("Theta dimension mismatch");
    psd_sqrt(th);
    if (x0.fixed && x0.value.size() != n)
      throw ModelError("x0 dimension mismatch");
  }
};

struct SystemModel {
  std::variant<LinearGaussianSystem, MarkovJumpSystem, MeasurementNoiseSystem>
      model;
  Vec input_lower, input_upper;  // per-component input box (finite)

  SystemModel() = default;
  SystemModel(LinearGaussianSystem s) : model(std::move(s)) { init_bounds(); }
  SystemModel(MarkovJumpSystem s) : model(std::move(s)) { init_bounds(); }
  SystemModel(MeasurementNoiseSystem s) : model(std::move(s)) { init_bounds(); }

  int nx() const {
    return std::visit([](const auto& s) { return s.nx(); }, model);
  }
  int nu() const {
    return std::visit([](const auto& s) { return s.nu(); }, model);
  }
  const InitialState& x0() const {
    return std::visit([](const auto& s) -> const InitialState& { return s.x0; },
                      model);
  }

  bool is_linear_gaussian() const {
    return std::holds_alternative<LinearGaussianSystem>(model);
  }
  bool is_markov_jump() const {
    return std::holds_alternative<MarkovJumpSystem>(model);
  }
  bool is_measurement_noise() const {
    return std::holds_alternative<MeasurementNoiseSystem>(model);
  }

  const LinearGaussianSystem& linear_gaussian() const {
    return std::get<LinearGaussianSystem>(model);
  }
  const MarkovJumpSystem& markov_jump() const {
    return std::get<MarkovJumpSystem>(model);
  }
  const MeasurementNoiseSystem& measurement_noise() const {
    return std::get<MeasurementNoiseSystem>(model);
  }

  void validate() const {
    std::visit([](const auto& s) { s.validate(); }, model);
    if (input_lower.size() != nu() || input_upper.size() != nu())
      throw ModelError("input bounds dimension mismatch");
    for (int i = 0; i < nu(); ++i)
      if (!(input_lower[i] < input_upper[i]))
        throw ModelError("input bounds must satisfy lower < upper");
  }

 private:
  void init_bounds() {
    input_lower = Vec::Constant(nu(), -kDefaultBound);
    input_upper = Vec::Constant(nu(), kDefaultBound);
  }
};

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

struct Trajectory {
  std::vector<Vec> states;        // x_0 .. x_H
  std::vector<Vec> noises;        // sampled w_k (Gaussian classes)
  std::vector<int> modes;         // Markov jump only: w_0 .. w_{H-1}
};

namespace detail {

inline Vec sample_gaussian(const Vec& mean, const Mat& theta_sqrt, Rng& rng) {
  return mean + theta_sqrt.transpose() * rng.gaussian_vec(theta_sqrt.rows());
}

}  // namespace detail

// Live plant for step-by-step simulation (closed-loop control).
struct PlantState {
  Vec x;
  int mode = -1;  // Markov jump only
};

// Caches the noise factorization so repeated runs stay cheap.
class PlantSimulator {
 public:
  explicit PlantSimulator(const SystemModel& sys) : sys_(sys) {
    const TimeVarying<Mat>* theta = nullptr;
    if (sys.is_linear_gaussian()) theta = &sys.linear_gaussian().theta;
    if (sys.is_measurement_noise()) theta = &sys.measurement_noise().theta;
    if (theta && theta->constant()) {
      sqrt_cache_ = psd_sqrt(theta->at(0));
      cached_ = true;
    }
  }

  const SystemModel& system() const { return sys_; }

  PlantState init(Rng& rng,
                  std::optional<Vec> x0_override = std::nullopt) const {
    PlantState st;
    if (x0_override) {
      st.x = *x0_override;
    } else if (sys_.x0().fixed) {
      st.x = sys_.x0().value;
    } else {
      throw ModelError(
          "simulation from a free initial state needs an explicit x0");
    }
    if (st.x.size() != sys_.nx()) throw ModelError("x0 dimension mismatch");
    if (sys_.is_markov_jump())
      st.mode = rng.discrete(sys_.markov_jump().initial_dist);
    return st;
  }

  // One step at absolute time k; returns the sampled noise vector (empty
  // for Markov jump, where st.mode advances instead).
  Vec step(PlantState& st, const Vec& u, int k, Rng& rng) const {
    if (u.size() != sys_.nu()) throw ModelError("plant step input dimension");
    if (sys_.is_linear_gaussian()) {
      const auto& s = sys_.linear_gaussian();
      Vec w = detail::sample_gaussian(s.w_bar.at(k), theta_sqrt(s.theta, k),
                                      rng);
      Mat bk = s.b_bar.at(k);
      Vec zk = s.zeta_bar.at(k);
      for (int l = 0; l < s.noise_dim(); ++l) {
        bk += s.b_tilde[l] * w[l];
        zk += s.zeta_tilde[l] * w[l];
      }
      st.x = s.a * st.x + bk * u + zk;
      return w;
    }
    if (sys_.is_markov_jump()) {
      const auto& s = sys_.markov_jump();
      const auto& md = s.modes.at(st.mode);
      st.x = md.a * st.x + md.b * u + md.zeta;
      st.mode = rng.discrete(s.transition.row(st.mode).transpose());
      return Vec(0);
    }
    const auto& s = sys_.measurement_noise();
    Vec w =
        detail::sample_gaussian(s.w_bar.at(k), theta_sqrt(s.theta, k), rng);
    st.x = s.a * st.x + s.b * u;
    return w;
  }

 private:
  const Mat& theta_sqrt(const TimeVarying<Mat>& theta, int k) const {
    if (cached_) return sqrt_cache_;
    scratch_ = psd_sqrt(theta.at(k));
    return scratch_;
  }

  const SystemModel& sys_;
  Mat sqrt_cache_;
  mutable Mat scratch_;
  bool cached_ = false;
};

// Simulates `steps` steps under inputs u_0..u_{steps-1}; the initial state
// must be fixed (or supplied explicitly via the x0 override).
inline Trajectory simulate(const SystemModel& sys,
                           const std::vector<Vec>& inputs, int steps, Rng& rng,
                           std::optional<Vec> x0_override = std::nullopt) {
  if (static_cast<int>(inputs.size()) < steps)
    throw ModelError("simulate: input trajectory shorter than horizon");

  PlantSimulator sim(sys);
  PlantState st = sim.init(rng, std::move(x0_override));
  Trajectory traj;
  traj.states.push_back(st.x);
  for (int k = 0; k < steps; ++k) {
    if (sys.is_markov_jump()) traj.modes.push_back(st.mode);
    Vec w = sim.step(st, inputs[k], k, rng);
    if (!sys.is_markov_jump()) traj.noises.push_back(w);
    traj.states.push_back(st.x);
  }
  return traj;
}

// Variant reusing a prebuilt simulator (hot loops in the Monte Carlo oracle).
inline Trajectory simulate(const PlantSimulator& sim,
                           const std::vector<Vec>& inputs, int steps, Rng& rng,
                           std::optional<Vec> x0_override = std::nullopt) {
  PlantState st = sim.init(rng, std::move(x0_override));
  Trajectory traj;
  traj.states.push_back(st.x);
  for (int k = 0; k < steps; ++k) {
    if (sim.system().is_markov_jump()) traj.modes.push_back(st.mode);
    Vec w = sim.step(st, inputs[k], k, rng);
    if (!sim.system().is_markov_jump()) traj.noises.push_back(w);
    traj.states.push_back(st.x);
  }
  return traj;
}

}  // namespace stostl
