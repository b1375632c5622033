#pragma once

// Translation of a single chance predicate at absolute step k into exact,
// under-approximating and over-approximating deterministic constraint
// fragments over (x_0, u_0..u_k), for the three system classes.

#include "stostl/core.hpp"
#include "stostl/formula.hpp"
#include "stostl/milp.hpp"
#include "stostl/models.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace stostl {

// A decision slot is either a solver variable or a fixed number (e.g. the
// measured initial state in MPC).
struct DecisionSlot {
  bool fixed = false;
  VarId var = -1;
  double value = 0.0;

  static DecisionSlot of_var(VarId v) { return {false, v, 0.0}; }
  static DecisionSlot of_value(double x) { return {true, -1, x}; }
};

struct DecisionVars {
  std::vector<DecisionSlot> x0;               // nx slots
  std::vector<std::vector<DecisionSlot>> u;   // [t][j], t = 0..H

  int input_steps() const { return static_cast<int>(u.size()); }
};

// All-fixed decision set (used for pointwise fragment evaluation).
inline DecisionVars fixed_decisions(const Vec& x0, const std::vector<Vec>& u) {
  DecisionVars dec;
  for (int i = 0; i < x0.size(); ++i)
    dec.x0.push_back(DecisionSlot::of_value(x0[i]));
  for (const auto& ut : u) {
    std::vector<DecisionSlot> step;
    for (int j = 0; j < ut.size(); ++j)
      step.push_back(DecisionSlot::of_value(ut[j]));
    dec.u.push_back(std::move(step));
  }
  return dec;
}

namespace detail {

inline void accumulate(Affine& a, const DecisionSlot& s, double coeff) {
  if (coeff == 0.0) return;
  if (s.fixed)
    a.constant += coeff * s.value;
  else
    a.add(s.var, coeff);
}

}  // namespace detail

struct ApproxLevel {
  enum class Mode { Exact, Under, Over };
  Mode mode = Mode::Under;
  int segments = 1;  // piecewise refinement count for the L1 lower bound

  static ApproxLevel exact() { return {Mode::Exact, 1}; }
  static ApproxLevel under(int segments = 1) { return {Mode::Under, segments}; }
  static ApproxLevel over(int segments = 1) { return {Mode::Over, segments}; }
};

// ---------------------------------------------------------------------------
// Constraint fragments
// ---------------------------------------------------------------------------

enum class FragmentKind {
  AffineLeq,          // affine <= 0
  AffinePlusL2Leq,    // affine + mult * ||rows||_2 <= 0 (exact, nonlinear)
  AffinePlusL1Leq,    // affine + mult * sum_j |row_j| <= 0
  AffineMaxGroupLeq,  // affine + mult * max_g sum_{j in g} |row_j| / sqrt(d_g) <= 0
  ScenarioIndicator,  // Markov jump: per-scenario affine + probability mass
};

struct NormGroup {
  std::vector<int> rows;  // indices into norm_rows
  double divisor = 1.0;   // sqrt(d_g) scaling certified for the group
};

struct Scenario {
  double prob = 0.0;
  Affine lambda;  // scenario constraint lambda <= 0
};

struct ConstraintFragment {
  FragmentKind kind = FragmentKind::AffineLeq;
  Affine affine;                  // lambda1 / wbar^T xi + c / scenario-free part
  std::vector<Affine> norm_rows;  // rows of the scaled norm argument
  double multiplier = 0.0;        // F^{-1}(p) (or F^{-1}(p)/sqrt(d) folded into groups)
  std::vector<NormGroup> groups;  // AffineMaxGroupLeq only
  std::vector<Scenario> scenarios;
  double threshold = 0.0;         // ScenarioIndicator: required probability mass

  // Fragment value at a point; <= 0 means the encoded condition holds.
  double value(const std::vector<double>& assignment) const {
    switch (kind) {
      case FragmentKind::AffineLeq:
        return affine.value(assignment);
      case FragmentKind::AffinePlusL2Leq: {
        double sq = 0.0;
        for (const auto& r : norm_rows) {
          double v = r.value(assignment);
          sq += v * v;
        }
        return affine.value(assignment) + multiplier * std::sqrt(sq);
      }
      case FragmentKind::AffinePlusL1Leq: {
        double sum = 0.0;
        for (const auto& r : norm_rows) sum += std::abs(r.value(assignment));
        return affine.value(assignment) + multiplier * sum;
      }
      case FragmentKind::AffineMaxGroupLeq: {
        double best = 0.0;
        for (const auto& g : groups) {
          double sum = 0.0;
          for (int j : g.rows) sum += std::abs(norm_rows[j].value(assignment));
          best = std::max(best, sum / g.divisor);
        }
        return affine.value(assignment) + multiplier * best;
      }
      case FragmentKind::ScenarioIndicator: {
        double mass = 0.0;
        for (const auto& s : scenarios)
          if (s.lambda.value(assignment) <= 0.0) mass += s.prob;
        return threshold - mass;
      }
    }
    return 0.0;
  }
};

// ---------------------------------------------------------------------------
// Linear systems with additive and control-dependent noise (class 1)
// ---------------------------------------------------------------------------

namespace detail {

struct MuCoefficients {
  Vec a;     // state coefficients
  Vec b;     // input coefficients
  Vec d;     // noise coefficients (class 3 only)
  double c = 0.0;
};

inline MuCoefficients split_mu(const LinExpr& mu, int nx, int nu, int nw,
                               bool allow_noise) {
  MuCoefficients out;
  out.a = Vec::Zero(nx);
  out.b = Vec::Zero(nu);
  out.d = Vec::Zero(std::max(nw, 0));
  out.c = mu.constant;
  for (const auto& t : mu.terms) {
    switch (t.ref.kind) {
      case SignalKind::State:
        if (t.ref.index < 0 || t.ref.index >= nx)
          throw EncodeError("state index out of range in predicate");
        out.a[t.ref.index] += t.coeff;
        break;
      case SignalKind::Input:
        if (t.ref.index < 0 || t.ref.index >= nu)
          throw EncodeError("input index out of range in predicate");
        out.b[t.ref.index] += t.coeff;
        break;
      case SignalKind::Noise:
        if (!allow_noise)
          throw EncodeError(
              "noise references are only supported for measurement-noise "
              "systems");
        if (t.ref.index < 0 || t.ref.index >= nw)
          throw EncodeError("noise index out of range in predicate");
        out.d[t.ref.index] += t.coeff;
        break;
    }
  }
  return out;
}

inline const DecisionSlot& input_slot(const DecisionVars& dec, int t, int j) {
  if (t >= dec.input_steps())
    throw EncodeError("encoding horizon too short: needs input step " +
                      std::to_string(t));
  return dec.u[t][j];
}

// Rows of S [u_{[0,k-1]}; 1] as affine forms, with near-zero rows pruned
// (they contribute nothing to any norm).
inline std::vector<Affine> norm_rows_from_sqrt(const Mat& s,
                                               const DecisionVars& dec, int k,
                                               int nu) {
  std::vector<Affine> rows;
  double scale = std::max(1.0, s.cwiseAbs().maxCoeff());
  for (int j = 0; j < s.rows(); ++j) {
    if (s.row(j).cwiseAbs().maxCoeff() <= 1e-11 * scale) continue;
    Affine row;
    for (int t = 0; t < k; ++t)
      for (int i = 0; i < nu; ++i)
        accumulate(row, input_slot(dec, t, i), s(j, t * nu + i));
    row.constant += s(j, k * nu);  // homogenizing trailing 1
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace detail

struct LambdaPair {
  Affine lambda1;    // E[mu(z_k)] as an affine form over (x0, u_0..u_k)
  Mat lambda_sqrt;   // (k nu + 1)^2 square root of Lambda_{k-1}
  int nominal_dim;   // k nu + 1
};

// Mean and deviation data of mu(z_k) for the linear-Gaussian class.
inline LambdaPair lambda_pair(const LinearGaussianSystem& sys,
                              const LinExpr& mu, int k,
                              const DecisionVars& dec) {
  const int nx = sys.nx(), nu = sys.nu(), nw = sys.noise_dim();
  auto co = detail::split_mu(mu, nx, nu, 0, /*allow_noise=*/false);
  auto pw = matrix_powers(sys.a, k);

  LambdaPair out;
  out.nominal_dim = k * nu + 1;

  // lambda1 (the expectation):
  Affine& l1 = out.lambda1;
  l1.constant = co.c;
  Eigen::RowVectorXd aT = co.a.transpose();
  Eigen::RowVectorXd a_pow_k = aT * pw[k];
  for (int i = 0; i < nx; ++i)
    detail::accumulate(l1, dec.x0[i], a_pow_k[i]);
  for (int j = 0; j < nu; ++j)
    detail::accumulate(l1, detail::input_slot(dec, k, j), co.b[j]);
  for (int t = 1; t <= k; ++t) {
    Eigen::RowVectorXd r = aT * pw[k - t];
    const Vec& wbar = sys.w_bar.at(t - 1);
    l1.constant += r.dot(sys.zeta_bar.at(t - 1));
    Eigen::RowVectorXd ucoef = r * sys.b_bar.at(t - 1);
    for (int l = 0; l < nw; ++l) {
      l1.constant += r.dot(sys.zeta_tilde[l]) * wbar[l];
      ucoef += (r * sys.b_tilde[l]) * wbar[l];
    }
    for (int j = 0; j < nu; ++j)
      detail::accumulate(l1, detail::input_slot(dec, t - 1, j), ucoef[j]);
  }

  // Lambda_{k-1}, assembled blockwise.
  const int dim = k * nu + 1;
  Mat lam = Mat::Zero(dim, dim);
  if (k > 0 && nw > 0) {
    // Per-step row vectors a^T A^tau Btilde_l and scalars a^T A^tau zetatilde_l.
    for (int t = 1; t <= k; ++t) {
      // Block for u_{t-1} uses tau = k - t; covariance Theta_{t-1}.
      Eigen::RowVectorXd r = aT * pw[k - t];
      const Mat& th = sys.theta.at(t - 1);
      std::vector<Eigen::RowVectorXd> rb(nw);
      std::vector<double> rz(nw);
      for (int l = 0; l < nw; ++l) {
        rb[l] = r * sys.b_tilde[l];
        rz[l] = r.dot(sys.zeta_tilde[l]);
      }
      int off = (t - 1) * nu;
      for (int l1 = 0; l1 < nw; ++l1) {
        for (int l2 = 0; l2 < nw; ++l2) {
          double thv = th(l1, l2);
          if (thv == 0.0) continue;
          // alpha block (u,u), beta block (u,1), and the scalar corner.
          lam.block(off, off, nu, nu) += rb[l1].transpose() * rb[l2] * thv;
          lam.block(off, dim - 1, nu, 1) +=
              rb[l2].transpose() * (rz[l1] * thv);
          lam(dim - 1, dim - 1) += rz[l1] * rz[l2] * thv;
        }
      }
    }
    // Mirror the beta column into the bottom row.
    for (int i = 0; i + 1 < dim; ++i) lam(dim - 1, i) = lam(i, dim - 1);
  }
  out.lambda_sqrt = psd_sqrt(lam);
  return out;
}

namespace detail {

// Contiguous near-equal partition of {0..n-1} into parts pieces.
inline std::vector<std::vector<int>> partition_indices(int n, int parts) {
  parts = std::min(parts, n);
  std::vector<std::vector<int>> out(parts);
  for (int i = 0; i < n; ++i) out[i * parts / n].push_back(i);
  return out;
}

// Group family for the lower bound at a given refinement level: the full set
// with the paper's sqrt(nominal_dim) divisor, refined by per-group
// sqrt(group size) pieces at segments >= 2 (cumulative, hence monotone).
inline std::vector<NormGroup> lower_bound_groups(int nrows, int nominal_dim,
                                                 int segments) {
  std::vector<NormGroup> out;
  NormGroup full;
  for (int j = 0; j < nrows; ++j) full.rows.push_back(j);
  full.divisor = std::sqrt(static_cast<double>(nominal_dim));
  out.push_back(std::move(full));
  for (int s = 2; s <= segments; ++s) {
    for (auto& part : partition_indices(nrows, s)) {
      NormGroup g;
      g.divisor = std::sqrt(static_cast<double>(part.size()));
      g.rows = std::move(part);
      bool dup = false;
      for (const auto& seen : out)
        if (seen.rows == g.rows && seen.divisor <= g.divisor) dup = true;
      if (!dup) out.push_back(std::move(g));
    }
  }
  return out;
}

// Assembles the Gaussian fragment shared by classes 1 and 3.
inline ConstraintFragment gaussian_fragment(Affine lambda1,
                                            std::vector<Affine> rows,
                                            int nominal_dim, double p,
                                            ApproxLevel level) {
  if (!(p > 0.0 && p < 1.0))
    throw EncodeError("chance probability must lie strictly inside (0,1)");
  ConstraintFragment f;
  f.affine = std::move(lambda1);
  if (rows.empty()) {
    f.kind = FragmentKind::AffineLeq;  // noiseless degenerate
    return f;
  }
  double m = inv_norm_cdf(p);
  if (std::abs(m) < 1e-12) {
    f.kind = FragmentKind::AffineLeq;  // F^{-1}(0.5) = 0
    return f;
  }
  f.norm_rows = std::move(rows);
  f.multiplier = m;
  const int nrows = static_cast<int>(f.norm_rows.size());
  const bool upper_bound_side =
      (level.mode == ApproxLevel::Mode::Under) == (p >= 0.5);
  switch (level.mode) {
    case ApproxLevel::Mode::Exact:
      f.kind = FragmentKind::AffinePlusL2Leq;
      break;
    case ApproxLevel::Mode::Under:
    case ApproxLevel::Mode::Over:
      if (upper_bound_side) {
        f.kind = FragmentKind::AffinePlusL1Leq;
      } else {
        f.kind = FragmentKind::AffineMaxGroupLeq;
        f.groups = lower_bound_groups(nrows, nominal_dim, level.segments);
      }
      break;
  }
  return f;
}

}  // namespace detail

// Under/over/exact encoding of P{mu(z_k) <= 0} >= p for class 1.
inline ConstraintFragment encode_linear_gaussian(
    const LinearGaussianSystem& sys, const LinExpr& mu, double p, int k,
    ApproxLevel level, const DecisionVars& dec) {
  auto lp = lambda_pair(sys, mu, k, dec);
  auto rows = detail::norm_rows_from_sqrt(lp.lambda_sqrt, dec, k, sys.nu());
  return detail::gaussian_fragment(std::move(lp.lambda1), std::move(rows),
                                   lp.nominal_dim, p, level);
}

// ---------------------------------------------------------------------------
// Markovian jump linear systems (class 2)
// ---------------------------------------------------------------------------

inline constexpr int kDefaultScenarioCap = 4096;

// Scenario probabilities and per-scenario affine constraints for mu at step k.
// The encoding is simultaneously exact, under and over.
inline ConstraintFragment encode_markov_jump(const MarkovJumpSystem& sys,
                                             const LinExpr& mu, double p,
                                             int k, const DecisionVars& dec,
                                             int scenario_cap = kDefaultScenarioCap) {
  if (!(p >= 0.0 && p <= 1.0))
    throw EncodeError("chance probability outside [0,1]");
  const int nx = sys.nx(), nu = sys.nu(), nm = sys.mode_count();
  auto co = detail::split_mu(mu, nx, nu, 0, /*allow_noise=*/false);

  double count = std::pow(static_cast<double>(nm), k);
  if (count > static_cast<double>(scenario_cap))
    throw EncodeError("scenario count " + std::to_string((long long)count) +
                      " exceeds cap " + std::to_string(scenario_cap) +
                      "; reduce the step or raise the cap");

  ConstraintFragment f;
  f.kind = FragmentKind::ScenarioIndicator;
  f.threshold = p;

  std::vector<int> seq(k, 0);
  while (true) {
    // Probability of the mode sequence.
    double prob = k > 0 ? sys.initial_dist[seq[0]] : 1.0;
    for (int t = 1; t < k; ++t) prob *= sys.transition(seq[t - 1], seq[t]);

    if (prob > 1e-15) {
      // Backward accumulation of a^T x_k over the scenario.
      Scenario sc;
      sc.prob = prob;
      Eigen::RowVectorXd r = co.a.transpose();
      sc.lambda.constant = co.c;
      for (int j = 0; j < nu; ++j)
        detail::accumulate(sc.lambda, detail::input_slot(dec, k, j), co.b[j]);
      for (int t = k - 1; t >= 0; --t) {
        const auto& md = sys.modes[seq[t]];
        Eigen::RowVectorXd ucoef = r * md.b;
        for (int j = 0; j < nu; ++j)
          detail::accumulate(sc.lambda, detail::input_slot(dec, t, j),
                             ucoef[j]);
        sc.lambda.constant += r.dot(md.zeta);
        r = r * md.a;
      }
      for (int i = 0; i < nx; ++i)
        detail::accumulate(sc.lambda, dec.x0[i], r[i]);
      f.scenarios.push_back(std::move(sc));
    }

    // Odometer over mode sequences.
    int pos = k - 1;
    while (pos >= 0 && ++seq[pos] == nm) seq[pos--] = 0;
    if (pos < 0) break;
  }
  return f;
}

// ---------------------------------------------------------------------------
// Deterministic systems with measurement noise (class 3)
// ---------------------------------------------------------------------------

// xi_k = [x_k; u_k] with x_k eliminated through the deterministic recursion.
inline std::vector<Affine> xi_affine(const MeasurementNoiseSystem& sys, int k,
                                     const DecisionVars& dec) {
  const int nx = sys.nx(), nu = sys.nu();
  auto pw = matrix_powers(sys.a, k);
  std::vector<Affine> xi(nx + nu);
  for (int i = 0; i < nx; ++i) {
    Affine& e = xi[i];
    for (int j = 0; j < nx; ++j)
      detail::accumulate(e, dec.x0[j], pw[k](i, j));
    for (int t = 0; t < k; ++t) {
      Mat coef = pw[k - 1 - t] * sys.b;
      for (int j = 0; j < nu; ++j)
        detail::accumulate(e, detail::input_slot(dec, t, j), coef(i, j));
    }
  }
  for (int j = 0; j < nu; ++j)
    detail::accumulate(xi[nx + j], detail::input_slot(dec, k, j), 1.0);
  return xi;
}

// Encoding of P{mu(z_k) <= 0} >= p where mu = g^T xi + (D w_k)^T xi + c and
// w[i] terms denote the noisy coefficient applied to xi_i.
inline ConstraintFragment encode_measurement_noise(
    const MeasurementNoiseSystem& sys, const LinExpr& mu, double p, int k,
    ApproxLevel level, const DecisionVars& dec) {
  const int nxi = sys.xi_dim();
  auto co = detail::split_mu(mu, sys.nx(), sys.nu(), nxi,
                             /*allow_noise=*/true);
  auto xi = xi_affine(sys, k, dec);

  // Mean part: deterministic coefficients plus wbar through D.
  Affine l1(co.c);
  const Vec& wbar = sys.w_bar.at(k);
  for (int i = 0; i < sys.nx(); ++i)
    if (co.a[i] != 0.0) l1 += co.a[i] * xi[i];
  for (int j = 0; j < sys.nu(); ++j)
    if (co.b[j] != 0.0) l1 += co.b[j] * xi[sys.nx() + j];
  for (int i = 0; i < nxi; ++i)
    if (co.d[i] != 0.0) l1 += (co.d[i] * wbar[i]) * Affine(xi[i]);

  // Deviation part: rows of Theta^{1/2} D xi.
  Mat s = psd_sqrt(sys.theta.at(k));
  std::vector<Affine> rows;
  double scale = std::max(1.0, s.cwiseAbs().maxCoeff()) *
                 std::max(1.0, co.d.cwiseAbs().maxCoeff());
  for (int j = 0; j < nxi; ++j) {
    Affine row;
    bool nonzero = false;
    for (int i = 0; i < nxi; ++i) {
      double coef = s(j, i) * co.d[i];
      if (std::abs(coef) > 1e-11 * scale) nonzero = true;
      if (coef != 0.0) row += coef * Affine(xi[i]);
    }
    if (nonzero) rows.push_back(std::move(row));
  }

  if (rows.empty()) {
    ConstraintFragment f;
    f.kind = FragmentKind::AffineLeq;
    f.affine = std::move(l1);
    return f;
  }
  return detail::gaussian_fragment(std::move(l1), std::move(rows), nxi, p,
                                   level);
}

// ---------------------------------------------------------------------------
// Class dispatch used by the formula encoder
// ---------------------------------------------------------------------------

// Fragment for a positive chance atom of any class.
inline ConstraintFragment encode_chance_atom(const SystemModel& sys,
                                             const LinExpr& mu, double p,
                                             int k, ApproxLevel level,
                                             const DecisionVars& dec,
                                             int scenario_cap = kDefaultScenarioCap) {
  if (sys.is_linear_gaussian())
    return encode_linear_gaussian(sys.linear_gaussian(), mu, p, k, level, dec);
  if (sys.is_markov_jump())
    return encode_markov_jump(sys.markov_jump(), mu, p, k, dec, scenario_cap);
  return encode_measurement_noise(sys.measurement_noise(), mu, p, k, level,
                                  dec);
}

// Fragment for a deterministic atom (mu <= 0 with no noise dependence at
// step k). Rejects atoms whose value is genuinely random under the class.
inline ConstraintFragment encode_deterministic_atom(const SystemModel& sys,
                                                    const LinExpr& mu, int k,
                                                    const DecisionVars& dec) {
  ConstraintFragment f;
  f.kind = FragmentKind::AffineLeq;
  if (sys.is_linear_gaussian()) {
    auto lp = lambda_pair(sys.linear_gaussian(), mu, k, dec);
    auto rows =
        detail::norm_rows_from_sqrt(lp.lambda_sqrt, dec, k, sys.nu());
    if (!rows.empty())
      throw EncodeError(
          "deterministic atom depends on noise at step " + std::to_string(k));
    f.affine = std::move(lp.lambda1);
    return f;
  }
  if (sys.is_markov_jump()) {
    auto frag = encode_markov_jump(sys.markov_jump(), mu, 1.0, k, dec);
    for (const auto& sc : frag.scenarios) {
      Affine diff = sc.lambda;
      diff.scale(-1.0);
      diff += frag.scenarios[0].lambda;
      double spread = std::abs(diff.constant);
      for (const auto& [v, c] : diff.terms) spread += std::abs(c);
      if (spread > 1e-9)
        throw EncodeError("deterministic atom depends on the mode at step " +
                          std::to_string(k));
    }
    f.affine = frag.scenarios.at(0).lambda;
    return f;
  }
  const auto& mn = sys.measurement_noise();
  auto co = detail::split_mu(mu, mn.nx(), mn.nu(), mn.xi_dim(), true);
  if (co.d.cwiseAbs().maxCoeff() > 0.0)
    throw EncodeError("deterministic atom references noisy coefficients");
  auto frag = encode_measurement_noise(mn, mu, 0.5, k, ApproxLevel::exact(),
                                       dec);
  return frag;  // no w terms: reduces to AffineLeq
}

}  // namespace stostl
