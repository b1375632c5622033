#pragma once

// Statistical oracle: chance-predicate probabilities and formula
// satisfaction rates estimated by seeded simulation. This is the independent
// check behind the encoder soundness claims.

#include "stostl/core.hpp"
#include "stostl/formula.hpp"
#include "stostl/models.hpp"

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

namespace stostl {

struct EstimationEntry {
  std::string label;
  double estimate = 0.0;
  double half_width = 0.0;  // 99% confidence, normal approximation
  std::int64_t samples = 0;
};

struct EstimationReport {
  std::vector<EstimationEntry> entries;
  std::uint64_t seed = 0;

  std::string to_csv() const {
    std::ostringstream os;
    os.precision(12);
    os << "label,estimate,half_width_99,samples\n";
    for (const auto& e : entries)
      os << e.label << "," << e.estimate << "," << e.half_width << ","
         << e.samples << "\n";
    return os.str();
  }
};

inline double confidence_half_width(double rate, std::int64_t n) {
  return 2.576 * std::sqrt(rate * (1.0 - rate) / static_cast<double>(n));
}

// Value of mu(z_k) on a simulated trajectory. Noise references follow the
// measurement-noise reading: w[i] multiplies xi_i = [x_k; u_k]_i.
inline double atom_value_on_trajectory(const SystemModel& sys,
                                       const LinExpr& mu,
                                       const Trajectory& traj,
                                       const std::vector<Vec>& inputs, int k) {
  double v = mu.constant;
  for (const auto& t : mu.terms) {
    switch (t.ref.kind) {
      case SignalKind::State:
        v += t.coeff * traj.states[k][t.ref.index];
        break;
      case SignalKind::Input:
        v += t.coeff * inputs[k][t.ref.index];
        break;
      case SignalKind::Noise: {
        if (!sys.is_measurement_noise())
          throw ModelError("noise atom over a non-measurement-noise system");
        int nx = sys.nx();
        double xi = t.ref.index < nx
                        ? traj.states[k][t.ref.index]
                        : inputs[k][t.ref.index - nx];
        v += t.coeff * traj.noises[k][t.ref.index] * xi;
        break;
      }
    }
  }
  return v;
}

// Estimates P{mu(z_k) <= 0} over n simulated runs from x0 under the fixed
// input sequence. Deterministic given the seed.
inline EstimationEntry estimate_atom(const SystemModel& sys, const Vec& x0,
                                     const std::vector<Vec>& inputs,
                                     const ChancePredicate& atom, int k,
                                     std::int64_t n, std::uint64_t seed) {
  if (n < 100) throw ModelError("estimate_atom needs n >= 100");
  if (static_cast<int>(inputs.size()) < k + 1)
    throw ModelError("estimate_atom: inputs shorter than k+1");
  // Step k needs the noise sample at k for measurement-noise atoms.
  const int steps = sys.is_measurement_noise() ? k + 1 : k;
  PlantSimulator sim(sys);
  std::int64_t hits = 0;
  for (std::int64_t r = 0; r < n; ++r) {
    Rng rng(Rng::derive_seed(seed, static_cast<std::uint64_t>(r)));
    auto traj = simulate(sim, inputs, steps, rng, x0);
    if (atom_value_on_trajectory(sys, atom.mu, traj, inputs, k) <= 0.0) ++hits;
  }
  EstimationEntry e;
  e.label = to_string(atom) + " @k=" + std::to_string(k);
  e.samples = n;
  e.estimate = static_cast<double>(hits) / static_cast<double>(n);
  e.half_width = confidence_half_width(e.estimate, n);
  return e;
}

// Per-run satisfaction rate of the formula, with atoms evaluated as
// deterministic events on each sampled trajectory. For chance atoms this is
// a diagnostic; the per-atom estimate is the authoritative probability.
inline double estimate_formula(const SystemModel& sys, const Vec& x0,
                               const std::vector<Vec>& inputs,
                               const FormulaPtr& f, std::int64_t n,
                               std::uint64_t seed) {
  auto atoms = collect_atoms(*f);
  const int h = horizon(*f);
  if (static_cast<int>(inputs.size()) < h + 1)
    throw ModelError("estimate_formula: inputs shorter than horizon+1");
  const int steps = sys.is_measurement_noise() ? h + 1 : h;
  PlantSimulator sim(sys);
  std::int64_t hits = 0;
  for (std::int64_t r = 0; r < n; ++r) {
    Rng rng(Rng::derive_seed(seed, static_cast<std::uint64_t>(r)));
    auto traj = simulate(sim, inputs, steps, rng, x0);
    TruthTrace trace(h + 1, std::vector<bool>(atoms.size()));
    for (int k = 0; k <= h; ++k)
      for (size_t a = 0; a < atoms.size(); ++a)
        trace[k][a] =
            atom_value_on_trajectory(sys, atoms[a].mu, traj, inputs, k) <= 0.0;
    if (eval_on_trace(*f, atoms, trace, 0)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

}  // namespace stostl
