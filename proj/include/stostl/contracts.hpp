#pragma once

// Assume-guarantee contracts over a stochastic system, canonicalization and
// the three-valued decision procedures for compatibility, consistency and
// refinement, including the approximation-tightening ladder.

#include "stostl/encoder.hpp"
#include "stostl/formula.hpp"

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace stostl {

struct Contract {
  std::string name;
  std::string system;
  FormulaPtr assumption;
  FormulaPtr guarantee;
  bool canonical = false;
};

// Canonical form: guarantee becomes (not assumption) or guarantee.
inline Contract canonicalize(const Contract& c) {
  if (c.canonical) return c;
  Contract out = c;
  out.guarantee =
      Formula::disj(Formula::negation(c.assumption), c.guarantee);
  out.canonical = true;
  return out;
}

struct CheckOptions {
  std::vector<int> ladder = {1, 2, 4, 8};
  SolveBudget budget;  // applied per solver call
  int scenario_cap = kDefaultScenarioCap;
  double epsilon = kEpsilon;
  int horizon = -1;  // -1: derived from the formulas
  // Observer for every solved model (LP dumps); name is a stable tag.
  std::function<void(const std::string&, const MipModel&)> model_sink;
};

struct Verdict {
  Outcome outcome = Outcome::Unknown;
  int level = 0;  // segments in use when decided (last tried if Unknown)
  std::optional<Witness> witness;
  SolveStats stats;
  std::string detail;
};

namespace detail {

struct SideResult {
  SolveStatus status;
  std::optional<Witness> witness;
  bool used_groups = false;
};

inline SideResult solve_side(const SystemModel& sys, const NnfPtr& psi,
                             EncodingSide side, int segments, int horizon,
                             const CheckOptions& opts, const std::string& tag,
                             SolveStats& stats) {
  EncodeOptions eo;
  eo.segments = segments;
  eo.scenario_cap = opts.scenario_cap;
  eo.epsilon = opts.epsilon;
  EncodedFormula enc(sys, horizon, side, eo, psi, 0);
  if (opts.model_sink) opts.model_sink(tag, enc.encoder.model());
  auto res = solve(enc.encoder.model(), opts.budget);
  stats.nodes += res.stats.nodes;
  stats.lp_iterations += res.stats.lp_iterations;
  stats.wall_seconds += res.stats.wall_seconds;
  SideResult out;
  out.status = res.status;
  if (res.status == SolveStatus::Feasible)
    out.witness = enc.encoder.extract_witness(res.assignment);
  out.used_groups = enc.encoder.used_grouped_bounds();
  return out;
}

inline int effective_horizon(const CheckOptions& opts, int formula_horizon) {
  return opts.horizon >= 0 ? std::max(opts.horizon, formula_horizon)
                           : formula_horizon;
}

}  // namespace detail

// Compatibility: satisfiability of the assumption. C^S feasible -> Holds;
// C^N infeasible -> Fails; otherwise refine the approximation and retry.
inline Verdict check_compatibility(const SystemModel& sys, const Contract& c,
                                   CheckOptions opts = {}) {
  Verdict v;
  auto nnf = to_nnf(c.assumption);
  int h = detail::effective_horizon(opts, horizon(*nnf));
  for (int seg : opts.ladder) {
    v.level = seg;
    auto under = detail::solve_side(sys, nnf, EncodingSide::Under, seg, h,
                                    opts, "compat_S_s" + std::to_string(seg),
                                    v.stats);
    if (under.status == SolveStatus::CapExceeded) {
      v.detail = "solver budget exhausted on C^S(assumption)";
      return v;
    }
    if (under.status == SolveStatus::Feasible) {
      v.outcome = Outcome::Holds;
      v.witness = under.witness;
      v.detail = "C^S(assumption) feasible";
      return v;
    }
    auto over = detail::solve_side(sys, nnf, EncodingSide::Over, seg, h, opts,
                                   "compat_N_s" + std::to_string(seg),
                                   v.stats);
    if (over.status == SolveStatus::CapExceeded) {
      v.detail = "solver budget exhausted on C^N(assumption)";
      return v;
    }
    if (over.status == SolveStatus::Infeasible) {
      v.outcome = Outcome::Fails;
      v.detail = "C^N(assumption) infeasible";
      return v;
    }
    if (!under.used_groups && !over.used_groups) break;  // ladder is inert
  }
  v.detail = "approximation ladder exhausted";
  return v;
}

// Consistency: satisfiability of the canonical guarantee.
inline Verdict check_consistency(const SystemModel& sys, const Contract& c,
                                 CheckOptions opts = {}) {
  Contract cc = canonicalize(c);
  Verdict v;
  auto nnf = to_nnf(cc.guarantee);
  int h = detail::effective_horizon(opts, horizon(*nnf));
  for (int seg : opts.ladder) {
    v.level = seg;
    auto under = detail::solve_side(sys, nnf, EncodingSide::Under, seg, h,
                                    opts, "consis_S_s" + std::to_string(seg),
                                    v.stats);
    if (under.status == SolveStatus::CapExceeded) {
      v.detail = "solver budget exhausted on C^S(guarantee)";
      return v;
    }
    if (under.status == SolveStatus::Feasible) {
      v.outcome = Outcome::Holds;
      v.witness = under.witness;
      v.detail = "C^S(canonical guarantee) feasible";
      return v;
    }
    auto over = detail::solve_side(sys, nnf, EncodingSide::Over, seg, h, opts,
                                   "consis_N_s" + std::to_string(seg),
                                   v.stats);
    if (over.status == SolveStatus::CapExceeded) {
      v.detail = "solver budget exhausted on C^N(guarantee)";
      return v;
    }
    if (over.status == SolveStatus::Infeasible) {
      v.outcome = Outcome::Fails;
      v.detail = "C^N(canonical guarantee) infeasible";
      return v;
    }
    if (!under.used_groups && !over.used_groups) break;
  }
  v.detail = "approximation ladder exhausted";
  return v;
}

// Refinement c1 <= c2: psi1 = not A2 or A1 and psi2 = (A1 and not G1) or
// (not A2 or G2) must be valid, decided through their negations.
inline Verdict check_refinement(const SystemModel& sys, const Contract& c1_in,
                                const Contract& c2_in, CheckOptions opts = {}) {
  Contract c1 = canonicalize(c1_in);
  Contract c2 = canonicalize(c2_in);
  FormulaPtr psi1 =
      Formula::disj(Formula::negation(c2.assumption), c1.assumption);
  FormulaPtr psi2 = Formula::disj(
      Formula::conj(c1.assumption, Formula::negation(c1.guarantee)),
      Formula::disj(Formula::negation(c2.assumption), c2.guarantee));
  auto n1 = to_nnf(Formula::negation(psi1));
  auto n2 = to_nnf(Formula::negation(psi2));
  int h = detail::effective_horizon(
      opts, std::max(horizon(*n1), horizon(*n2)));

  Verdict v;
  for (int seg : opts.ladder) {
    v.level = seg;
    bool any_groups = false;
    // Counterexample side first: a feasible under-encoding of either negated
    // validity formula disproves the refinement.
    struct Probe {
      const NnfPtr& psi;
      const char* tag;
      const char* what;
    } probes[] = {{n1, "refine_notpsi1", "assumption weakening (psi1)"},
                  {n2, "refine_notpsi2", "guarantee strengthening (psi2)"}};
    bool undecided = false;
    for (const auto& probe : probes) {
      auto under = detail::solve_side(
          sys, probe.psi, EncodingSide::Under, seg, h, opts,
          std::string(probe.tag) + "_S_s" + std::to_string(seg), v.stats);
      if (under.status == SolveStatus::CapExceeded) {
        v.detail = "solver budget exhausted";
        return v;
      }
      any_groups |= under.used_groups;
      if (under.status == SolveStatus::Feasible) {
        v.outcome = Outcome::Fails;
        v.witness = under.witness;
        v.detail = std::string("counterexample to ") + probe.what;
        return v;
      }
    }
    bool holds = true;
    for (const auto& probe : probes) {
      auto over = detail::solve_side(
          sys, probe.psi, EncodingSide::Over, seg, h, opts,
          std::string(probe.tag) + "_N_s" + std::to_string(seg), v.stats);
      if (over.status == SolveStatus::CapExceeded) {
        v.detail = "solver budget exhausted";
        return v;
      }
      any_groups |= over.used_groups;
      if (over.status != SolveStatus::Infeasible) {
        holds = false;
        undecided = true;
      }
    }
    if (holds) {
      v.outcome = Outcome::Holds;
      v.detail = "both over-approximations infeasible";
      return v;
    }
    if (!any_groups && undecided) break;  // ladder cannot move the answer
  }
  v.detail = "approximation ladder exhausted";
  return v;
}

}  // namespace stostl
