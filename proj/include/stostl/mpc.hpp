#pragma once

// Controller synthesis from a contract: open-loop stochastic optimization
// over the under-approximation of the canonical guarantee, executed in a
// receding-horizon loop against the simulated plant.

#include "stostl/contracts.hpp"
#include "stostl/encoder.hpp"
#include "stostl/models.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace stostl {

struct MpcProblem {
  Contract contract;
  int horizon = -1;                // prediction window; -1: guarantee horizon
  std::string objective = "none";  // none | min_input_l1
  int replan_period = 1;
  int total_steps = 0;             // closed-loop length
  std::vector<int> ladder = {1, 2, 4, 8};
  SolveBudget budget;
  int scenario_cap = kDefaultScenarioCap;
  std::function<void(const std::string&, const MipModel&)> model_sink;
};

struct OpenLoopPlan {
  SolveStatus status = SolveStatus::Infeasible;
  std::vector<Vec> inputs;  // u_0 .. u_H when feasible
  std::optional<double> objective;
  bool vacuous = false;  // x0 violates the (polyhedral) assumption
  int level = 1;
  SolveStats stats;
};

namespace detail {

// True when f is a conjunction of deterministic atoms over the state only
// (the polyhedral assumption class); fills the atom list.
inline bool polyhedral_atoms(const Formula& f,
                             std::vector<const ChancePredicate*>& atoms) {
  if (f.kind == FormulaKind::Atom) {
    if (!f.pred.deterministic) return false;
    for (const auto& t : f.pred.mu.terms)
      if (t.ref.kind != SignalKind::State) return false;
    atoms.push_back(&f.pred);
    return true;
  }
  if (f.kind == FormulaKind::And)
    return polyhedral_atoms(*f.children[0], atoms) &&
           polyhedral_atoms(*f.children[1], atoms);
  return false;
}

inline bool assumption_holds_at(const Formula& assumption, const Vec& x0) {
  std::vector<const ChancePredicate*> atoms;
  if (!polyhedral_atoms(assumption, atoms)) return true;  // not checkable
  for (const auto* p : atoms) {
    double v = p->mu.constant;
    for (const auto& t : p->mu.terms) v += t.coeff * x0[t.ref.index];
    if (v > 1e-9) return false;
  }
  return true;
}

}  // namespace detail

// Solves min J_H(u) s.t. C^S_0(canonical guarantee) with x_0 fixed at x0.
// The segment ladder retries infeasible encodings at finer approximations.
inline OpenLoopPlan synthesize_open_loop(const SystemModel& sys,
                                         const MpcProblem& p, const Vec& x0) {
  Contract cc = canonicalize(p.contract);
  auto nnf = to_nnf(cc.guarantee);
  int h = std::max(p.horizon, horizon(*nnf));

  OpenLoopPlan plan;
  plan.vacuous = !detail::assumption_holds_at(*p.contract.assumption, x0);

  for (int seg : p.ladder) {
    plan.level = seg;
    EncodeOptions eo;
    eo.segments = seg;
    eo.scenario_cap = p.scenario_cap;
    eo.fixed_x0 = x0;
    EncodedFormula enc(sys, h, EncodingSide::Under, eo, nnf, 0);
    auto& model = enc.encoder.model();

    if (p.objective == "min_input_l1") {
      Affine obj;
      for (const auto& step : enc.encoder.decisions().u)
        for (const auto& slot : step) {
          if (slot.fixed) continue;
          const auto& var = model.variables()[slot.var];
          VarId t = model.add_continuous(
              "c_" + var.name,
              0.0, std::max(std::abs(var.lower), std::abs(var.upper)));
          model.add_row(Affine().add(slot.var, 1.0).add(t, -1.0),
                        RowSense::Leq, 0.0);
          model.add_row(Affine().add(slot.var, -1.0).add(t, -1.0),
                        RowSense::Leq, 0.0);
          obj.add(t, 1.0);
        }
      model.set_objective(obj, /*minimize=*/true);
    }
    if (p.model_sink)
      p.model_sink("mpc_S_s" + std::to_string(seg), model);

    auto res = solve(model, p.budget);
    plan.stats.nodes += res.stats.nodes;
    plan.stats.lp_iterations += res.stats.lp_iterations;
    plan.stats.wall_seconds += res.stats.wall_seconds;
    if (res.status == SolveStatus::CapExceeded) {
      plan.status = res.status;
      return plan;
    }
    if (res.status == SolveStatus::Feasible) {
      plan.status = res.status;
      plan.objective = res.objective;
      plan.inputs = enc.encoder.extract_witness(res.assignment).inputs;
      return plan;
    }
    if (!enc.encoder.used_grouped_bounds()) break;  // ladder is inert
  }
  plan.status = SolveStatus::Infeasible;
  return plan;
}

// ---------------------------------------------------------------------------
// Receding horizon
// ---------------------------------------------------------------------------

struct ClosedLoopStep {
  Vec state;   // state the controller measured at this step
  Vec input;   // applied input
  Vec noise;   // sampled disturbance (Gaussian classes)
  int mode = -1;
  std::string status;  // planned | vacuous | reused | fallback_zero
  double objective = std::numeric_limits<double>::quiet_NaN();
  std::vector<Vec> plan;  // the full window when this step replanned
};

struct ClosedLoopTrace {
  std::vector<ClosedLoopStep> steps;
  Vec final_state;
  std::uint64_t seed = 0;
  int solves = 0;
  int infeasible_solves = 0;
  SolveStats stats;
};

// Runs the plant for total_steps, re-solving the window every replan_period
// steps from the measured state. Bounded spec windows re-anchor at each
// replan instant; for Markov plants the replan conditions the chain on the
// observed mode. Infeasible solves fall back to the previous plan's tail.
inline ClosedLoopTrace run_receding_horizon(const SystemModel& sys,
                                            const MpcProblem& p,
                                            std::uint64_t plant_seed) {
  ClosedLoopTrace trace;
  trace.seed = plant_seed;
  Rng rng(plant_seed);
  PlantSimulator sim(sys);
  PlantState st = sim.init(rng);

  std::vector<Vec> pending;
  size_t pos = 0;
  Vec zero_input = Vec::Zero(sys.nu());
  for (int j = 0; j < sys.nu(); ++j)
    zero_input[j] = std::clamp(0.0, sys.input_lower[j], sys.input_upper[j]);

  for (int t = 0; t < p.total_steps; ++t) {
    ClosedLoopStep step;
    step.state = st.x;
    step.mode = st.mode;

    if (t % std::max(1, p.replan_period) == 0) {
      SystemModel local = sys;
      if (local.is_markov_jump() && st.mode >= 0) {
        auto& mj = std::get<MarkovJumpSystem>(local.model);
        mj.initial_dist = Vec::Zero(mj.mode_count());
        mj.initial_dist[st.mode] = 1.0;
      }
      auto plan = synthesize_open_loop(local, p, st.x);
      ++trace.solves;
      trace.stats.nodes += plan.stats.nodes;
      trace.stats.lp_iterations += plan.stats.lp_iterations;
      trace.stats.wall_seconds += plan.stats.wall_seconds;
      if (plan.status == SolveStatus::Feasible) {
        pending = plan.inputs;
        pos = 0;
        step.status = plan.vacuous ? "vacuous" : "planned";
        step.objective = plan.objective.value_or(
            std::numeric_limits<double>::quiet_NaN());
        step.plan = plan.inputs;
      } else {
        ++trace.infeasible_solves;
        step.status = pos < pending.size() ? "reused" : "fallback_zero";
      }
    } else {
      step.status = pos < pending.size() ? "open_loop" : "fallback_zero";
    }

    step.input = pos < pending.size() ? pending[pos] : zero_input;
    ++pos;
    step.noise = sim.step(st, step.input, t, rng);
    trace.steps.push_back(std::move(step));
  }
  trace.final_state = st.x;
  return trace;
}

// CSV rows: step, state..., input..., status, objective, then the sampled
// noise (or mode) driving the transition.
inline std::string to_csv(const ClosedLoopTrace& trace, int nx, int nu) {
  std::ostringstream os;
  os.precision(12);
  os << "step";
  for (int i = 0; i < nx; ++i) os << ",x" << i + 1;
  for (int j = 0; j < nu; ++j) os << ",u" << j + 1;
  os << ",status,objective";
  if (!trace.steps.empty() && trace.steps[0].mode >= 0)
    os << ",mode";
  else if (!trace.steps.empty())
    for (int l = 0; l < trace.steps[0].noise.size(); ++l) os << ",w" << l + 1;
  os << "\n";
  for (size_t t = 0; t < trace.steps.size(); ++t) {
    const auto& s = trace.steps[t];
    os << t;
    for (int i = 0; i < nx; ++i) os << "," << s.state[i];
    for (int j = 0; j < nu; ++j) os << "," << s.input[j];
    os << "," << s.status << ",";
    if (std::isnan(s.objective))
      os << "";
    else
      os << s.objective;
    if (s.mode >= 0)
      os << "," << s.mode;
    else
      for (int l = 0; l < s.noise.size(); ++l) os << "," << s.noise[l];
    os << "\n";
  }
  return os.str();
}

}  // namespace stostl
