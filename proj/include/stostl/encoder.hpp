#pragma once

// Recursive translation of NNF StSTL formulas into mixed-integer constraint
// sets: C^S (under-approximation, feasibility certifies satisfiability) and
// C^N (over-approximation, infeasibility certifies unsatisfiability).

#include "stostl/chance.hpp"
#include "stostl/core.hpp"
#include "stostl/formula.hpp"
#include "stostl/milp.hpp"
#include "stostl/models.hpp"

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace stostl {

enum class EncodingSide { Under, Over };

struct EncodeOptions {
  int segments = 1;
  int scenario_cap = kDefaultScenarioCap;
  double epsilon = kEpsilon;
  std::optional<Vec> fixed_x0;  // overrides the system's initial state
};

// A satisfying point extracted from a feasible under-encoding.
struct Witness {
  Vec x0;
  std::vector<Vec> inputs;  // u_0 .. u_H
  struct Literal {
    ChancePredicate pred;
    int step = 0;
    bool negated = false;
    bool asserted = false;  // binary value in the solution
  };
  std::vector<Literal> literals;
};

class FormulaEncoder {
 public:
  FormulaEncoder(const SystemModel& sys, int horizon, EncodingSide side,
                 EncodeOptions opts = {})
      : sys_(sys), horizon_(horizon), side_(side), opts_(opts) {
    if (horizon_ < 0) throw EncodeError("negative encoding horizon");
    const int nx = sys.nx(), nu = sys.nu();
    if (opts_.fixed_x0) {
      if (opts_.fixed_x0->size() != nx)
        throw EncodeError("fixed x0 dimension mismatch");
      for (int i = 0; i < nx; ++i)
        dec_.x0.push_back(DecisionSlot::of_value((*opts_.fixed_x0)[i]));
    } else if (sys.x0().fixed) {
      for (int i = 0; i < nx; ++i)
        dec_.x0.push_back(DecisionSlot::of_value(sys.x0().value[i]));
    } else {
      for (int i = 0; i < nx; ++i) {
        VarId v = model_.add_continuous("x0_" + std::to_string(i),
                                        sys.x0().lower[i], sys.x0().upper[i]);
        dec_.x0.push_back(DecisionSlot::of_var(v));
      }
    }
    for (int t = 0; t <= horizon_; ++t) {
      std::vector<DecisionSlot> step;
      for (int j = 0; j < nu; ++j) {
        VarId v = model_.add_continuous(
            "u" + std::to_string(t) + "_" + std::to_string(j),
            sys.input_lower[j], sys.input_upper[j]);
        step.push_back(DecisionSlot::of_var(v));
      }
      dec_.u.push_back(std::move(step));
    }
  }

  MipModel& model() { return model_; }
  const MipModel& model() const { return model_; }
  const DecisionVars& decisions() const { return dec_; }
  const SystemModel& system() const { return sys_; }
  int horizon() const { return horizon_; }

  // Returns the binary b_k(psi); rows are added on first encounter only.
  VarId encode(const NnfPtr& psi, int k) {
    if (k + stostl::horizon(*psi) > horizon_)
      throw EncodeError("horizon too short: formula reads past step " +
                        std::to_string(horizon_));
    auto key = std::make_pair(psi.get(), k);
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    VarId b = encode_uncached(psi, k);
    memo_[key] = b;
    return b;
  }

  // Pins the top-level satisfaction variable: b = 1.
  void assert_root(VarId b) {
    model_.add_row(Affine().add(b, 1.0), RowSense::Eq, 1.0, "root");
  }

  // Distinct (node, step) entries; one binary each by construction.
  size_t registry_size() const { return memo_.size(); }

  // True when some fragment used the grouped lower bound, i.e. the segment
  // ladder can actually move this encoding.
  bool used_grouped_bounds() const { return used_grouped_bounds_; }

  Witness extract_witness(const std::vector<double>& assignment) const {
    Witness w;
    w.x0 = Vec(sys_.nx());
    for (int i = 0; i < sys_.nx(); ++i) {
      const auto& s = dec_.x0[i];
      w.x0[i] = s.fixed ? s.value : assignment[s.var];
    }
    for (const auto& step : dec_.u) {
      Vec u(sys_.nu());
      for (int j = 0; j < sys_.nu(); ++j)
        u[j] = step[j].fixed ? step[j].value : assignment[step[j].var];
      w.inputs.push_back(std::move(u));
    }
    for (const auto& [key, var] : memo_) {
      const NnfFormula* node = key.first;
      if (node->kind != NnfKind::Atom) continue;
      w.literals.push_back({node->pred, key.second, node->negated,
                            assignment[var] > 0.5});
    }
    return w;
  }

 private:
  VarId fresh_binary(const std::string& name) {
    return model_.add_binary(name);
  }

  // Junction indicators are forced to {0,1} by their rows once the atom
  // binaries are integral, so they stay continuous to keep the tree small.
  VarId fresh_junction(const std::string& name) {
    return model_.add_continuous(name, 0.0, 1.0);
  }

  VarId encode_uncached(const NnfPtr& psi, int k) {
    switch (psi->kind) {
      case NnfKind::Atom:
        return encode_atom(*psi, k);
      case NnfKind::And:
      case NnfKind::Or: {
        VarId c0 = encode(psi->children[0], k);
        VarId c1 = encode(psi->children[1], k);
        VarId b = fresh_junction(psi->kind == NnfKind::And ? "and" : "or");
        link_junction(b, {c0, c1}, psi->kind == NnfKind::And);
        return b;
      }
      case NnfKind::Globally: {
        std::vector<VarId> window;
        for (int i = psi->t1; i <= psi->t2; ++i)
          window.push_back(encode(psi->children[0], k + i));
        if (window.size() == 1) return window[0];
        VarId b = fresh_junction("glob");
        link_junction(b, window, /*conjunction=*/true);
        return b;
      }
      case NnfKind::Until: {
        // b <-> OR_i (phi2 at k+i AND phi1 on [k+t1 .. k+i-1])
        std::vector<VarId> disjuncts;
        for (int i = psi->t1; i <= psi->t2; ++i) {
          std::vector<VarId> conj;
          conj.push_back(encode(psi->children[1], k + i));
          for (int j = psi->t1; j < i; ++j)
            conj.push_back(encode(psi->children[0], k + j));
          if (conj.size() == 1) {
            disjuncts.push_back(conj[0]);
          } else {
            VarId d = fresh_junction("until_arm");
            link_junction(d, conj, /*conjunction=*/true);
            disjuncts.push_back(d);
          }
        }
        if (disjuncts.size() == 1) return disjuncts[0];
        VarId b = fresh_junction("until");
        link_junction(b, disjuncts, /*conjunction=*/false);
        return b;
      }
    }
    throw EncodeError("unreachable NNF kind");
  }

  // Standard biconditional linearization of b <-> AND/OR of literals.
  void link_junction(VarId b, const std::vector<VarId>& lits,
                     bool conjunction) {
    const double n = static_cast<double>(lits.size());
    if (conjunction) {
      for (VarId l : lits)
        model_.add_row(Affine().add(b, 1.0).add(l, -1.0), RowSense::Leq, 0.0);
      Affine sum;
      for (VarId l : lits) sum.add(l, 1.0);
      sum.add(b, -1.0);
      model_.add_row(sum, RowSense::Leq, n - 1.0);
    } else {
      for (VarId l : lits)
        model_.add_row(Affine().add(l, 1.0).add(b, -1.0), RowSense::Leq, 0.0);
      Affine sum = Affine().add(b, 1.0);
      for (VarId l : lits) sum.add(l, -1.0);
      model_.add_row(sum, RowSense::Leq, 0.0);
    }
  }

  // ----- atoms -------------------------------------------------------------

  VarId encode_atom(const NnfFormula& atom, int k) {
    const ChancePredicate& pred = atom.pred;
    std::string name = std::string(atom.negated ? "nb" : "b") + "_k" +
                       std::to_string(k) + "_" +
                       std::to_string(memo_.size());
    VarId b = fresh_binary(name);

    if (sys_.is_markov_jump() && !pred.deterministic) {
      encode_markov_atom(pred, atom.negated, k, b);
      return b;
    }

    ConstraintFragment frag;
    if (pred.deterministic) {
      // Deterministic negation is exact under the tool-wide strictness
      // margin: not(mu <= 0) reads as -mu + eps <= 0 on both sides.
      frag = encode_deterministic_atom(sys_, pred.mu, k, dec_);
      if (atom.negated) {
        frag.affine.scale(-1.0);
        frag.affine.constant += opts_.epsilon;
      }
    } else if (!atom.negated) {
      frag = encode_chance_atom(sys_, pred.mu, pred.p, k, level(), dec_,
                                opts_.scenario_cap);
    } else {
      // not P{mu <= 0} >= p, rewritten through the complementary predicate:
      // under: P{-mu + eps <= 0} >= 1 - p + eps; over: P{-mu <= 0} >= 1 - p.
      LinExpr neg;
      neg.constant = -pred.mu.constant;
      for (const auto& t : pred.mu.terms)
        neg.add(t.ref.kind, t.ref.index, -t.coeff);
      double p2;
      if (side_ == EncodingSide::Under) {
        neg.constant += opts_.epsilon;
        p2 = 1.0 - pred.p + opts_.epsilon;
      } else {
        p2 = 1.0 - pred.p;
      }
      if (p2 >= 1.0) {
        // No sufficient certificate exists for the negation (p ~ 0):
        // an always-violated fragment keeps the encoding sound.
        frag.kind = FragmentKind::AffineLeq;
        frag.affine = Affine(1.0);
      } else {
        frag = encode_chance_atom(sys_, neg, p2, k, level(), dec_,
                                  opts_.scenario_cap);
      }
    }
    emit_fragment(frag, b);
    return b;
  }

  ApproxLevel level() const {
    return side_ == EncodingSide::Under ? ApproxLevel::under(opts_.segments)
                                        : ApproxLevel::over(opts_.segments);
  }

  // ----- Markov scenario machinery ------------------------------------------

  struct ScenarioBlock {
    std::vector<VarId> vars;
    std::vector<double> probs;
  };

  // One block of scenario binaries per (mu, k), shared by both polarities.
  const ScenarioBlock& scenario_block(const LinExpr& mu, int k) {
    for (const auto& [key, block] : scenario_cache_)
      if (key.second == k && key.first == mu) return block;

    auto frag = encode_markov_jump(sys_.markov_jump(), mu, 0.5, k, dec_,
                                   opts_.scenario_cap);
    ScenarioBlock block;
    int idx = 0;
    for (const auto& sc : frag.scenarios) {
      VarId bs = fresh_binary("sc_k" + std::to_string(k) + "_" +
                              std::to_string(scenario_cache_.size()) + "_" +
                              std::to_string(idx++));
      // Paired big-M rows with the epsilon margin:
      //   b = 1 -> lambda <= 0;   b = 0 -> lambda >= eps.
      model_.add_indicator(bs, sc.lambda, model_.big_m_for(sc.lambda));
      Affine rev = sc.lambda;
      rev.scale(-1.0);
      rev.constant += opts_.epsilon;  // eps - lambda <= b * M
      double m2 = model_.big_m_for(rev);
      rev.add(bs, -m2);
      model_.add_row(rev, RowSense::Leq, 0.0);
      block.vars.push_back(bs);
      block.probs.push_back(sc.prob);
    }
    scenario_cache_.emplace_back(std::make_pair(mu, k), std::move(block));
    return scenario_cache_.back().second;
  }

  void encode_markov_atom(const ChancePredicate& pred, bool negated, int k,
                          VarId b) {
    const auto& block = scenario_block(pred.mu, k);
    Affine mass;
    for (size_t s = 0; s < block.vars.size(); ++s)
      mass.add(block.vars[s], block.probs[s]);
    if (!negated) {
      // b = 1 -> sum prob * b_s >= p.
      Affine row = mass;
      row.add(b, -pred.p);
      model_.add_row(row, RowSense::Geq, 0.0);
    } else {
      // b = 1 -> sum prob * b_s <= p - eps (under) / <= p (over).
      double cap = side_ == EncodingSide::Under ? pred.p - opts_.epsilon
                                                : pred.p;
      Affine row = mass;
      row.add(b, 1.0 - cap);
      model_.add_row(row, RowSense::Leq, 1.0);
    }
  }

  // ----- fragment emission ---------------------------------------------------

  // Upper-bounding aux: a_j >= |row_j| (exact at the solver's optimum when
  // the aux carries a positive cost pressure, which Leq rows provide).
  VarId abs_aux_upper(const Affine& row) {
    auto [lo, hi] = model_.range(row);
    double cap = std::max({std::abs(lo), std::abs(hi), 1.0});
    VarId a = model_.add_continuous("abs" + std::to_string(aux_count_++), 0.0,
                                    cap);
    Affine r1 = row;
    r1.add(a, -1.0);
    model_.add_row(r1, RowSense::Leq, 0.0);  // row - a <= 0
    Affine r2 = row;
    r2.scale(-1.0);
    r2.add(a, -1.0);
    model_.add_row(r2, RowSense::Leq, 0.0);  // -row - a <= 0
    return a;
  }

  // Lower-bounding aux: a_j <= |row_j| via a sign-selection binary.
  VarId abs_aux_lower(const Affine& row) {
    auto [lo, hi] = model_.range(row);
    double cap = std::max({std::abs(lo), std::abs(hi), 1.0});
    VarId a = model_.add_continuous("absl" + std::to_string(aux_count_++), 0.0,
                                    cap);
    VarId s = model_.add_binary("sgn" + std::to_string(aux_count_++));
    // a <= row + M (1 - s)   and   a <= -row + M s
    Affine r1 = Affine().add(a, 1.0);
    r1 += -1.0 * Affine(row);
    double m1 = model_.big_m_for(r1);
    r1.add(s, m1);
    model_.add_row(r1, RowSense::Leq, m1);
    Affine r2 = Affine().add(a, 1.0);
    r2 += Affine(row);
    double m2 = model_.big_m_for(r2);
    r2.add(s, -m2);
    model_.add_row(r2, RowSense::Leq, 0.0);
    return a;
  }

  void emit_fragment(const ConstraintFragment& frag, VarId b) {
    switch (frag.kind) {
      case FragmentKind::AffineLeq: {
        model_.add_indicator(b, frag.affine, model_.big_m_for(frag.affine));
        return;
      }
      case FragmentKind::AffinePlusL1Leq: {
        Affine main = frag.affine;
        if (frag.multiplier > 0) {
          for (const auto& row : frag.norm_rows)
            main.add(abs_aux_upper(row), frag.multiplier);
        } else {
          for (const auto& row : frag.norm_rows)
            main.add(abs_aux_lower(row), frag.multiplier);
        }
        model_.add_indicator(b, main, model_.big_m_for(main));
        return;
      }
      case FragmentKind::AffineMaxGroupLeq: {
        used_grouped_bounds_ = true;
        if (frag.multiplier > 0) {
          // Necessary side: every group row must hold (conjunction).
          std::vector<VarId> aux;
          for (const auto& row : frag.norm_rows)
            aux.push_back(abs_aux_upper(row));
          for (const auto& g : frag.groups) {
            Affine main = frag.affine;
            for (int j : g.rows)
              main.add(aux[j], frag.multiplier / g.divisor);
            model_.add_indicator(b, main, model_.big_m_for(main));
          }
        } else {
          // Sufficient side: any one group row suffices (selection).
          std::vector<VarId> aux;
          for (const auto& row : frag.norm_rows)
            aux.push_back(abs_aux_lower(row));
          Affine pick;
          std::vector<VarId> selectors;
          for (size_t gi = 0; gi < frag.groups.size(); ++gi) {
            VarId y = model_.add_binary("grp" + std::to_string(aux_count_++));
            selectors.push_back(y);
            pick.add(y, 1.0);
          }
          model_.add_row(pick, RowSense::Geq, 1.0);
          for (size_t gi = 0; gi < frag.groups.size(); ++gi) {
            const auto& g = frag.groups[gi];
            Affine main = frag.affine;
            for (int j : g.rows)
              main.add(aux[j], frag.multiplier / g.divisor);
            // main <= (1-b) M1 + (1-y) M2
            double m = model_.big_m_for(main);
            main.add(b, m);
            main.add(selectors[gi], m);
            model_.add_row(main, RowSense::Leq, 2.0 * m);
          }
        }
        return;
      }
      case FragmentKind::AffinePlusL2Leq:
        throw EncodeError("exact L2 fragments are not MIP-linear");
      case FragmentKind::ScenarioIndicator:
        throw EncodeError("scenario fragments are emitted via the atom path");
    }
  }

  const SystemModel& sys_;
  int horizon_;
  EncodingSide side_;
  EncodeOptions opts_;
  MipModel model_;
  DecisionVars dec_;
  std::map<std::pair<const NnfFormula*, int>, VarId> memo_;
  std::vector<std::pair<std::pair<LinExpr, int>, ScenarioBlock>>
      scenario_cache_;
  int aux_count_ = 0;
  bool used_grouped_bounds_ = false;
};

// ---------------------------------------------------------------------------
// Whole-formula entry points (C^S_k and C^N_k)
// ---------------------------------------------------------------------------

struct EncodedFormula {
  FormulaEncoder encoder;
  VarId root;

  EncodedFormula(const SystemModel& sys, int horizon, EncodingSide side,
                 EncodeOptions opts, const NnfPtr& psi, int k)
      : encoder(sys, horizon, side, opts), root(encoder.encode(psi, k)) {
    encoder.assert_root(root);
  }
};

// C^S_k(psi): feasibility is sufficient for satisfiability of psi at step k.
inline EncodedFormula encode_under(const SystemModel& sys, const NnfPtr& psi,
                                   int k, int horizon, EncodeOptions opts = {}) {
  return EncodedFormula(sys, horizon, EncodingSide::Under, opts, psi, k);
}

// C^N_k(psi): infeasibility proves psi unsatisfiable at step k.
inline EncodedFormula encode_over(const SystemModel& sys, const NnfPtr& psi,
                                  int k, int horizon, EncodeOptions opts = {}) {
  return EncodedFormula(sys, horizon, EncodingSide::Over, opts, psi, k);
}

// Affine substitution of the atom mean through the system dynamics: mu(z_k)
// rewritten over (x0, u_0..u_k). Gaussian classes only; the Markov class
// binds through scenario fragments instead.
inline Affine bind_trajectory_mean(const SystemModel& sys, const LinExpr& mu,
                                   int k, const DecisionVars& dec) {
  if (sys.is_linear_gaussian())
    return lambda_pair(sys.linear_gaussian(), mu, k, dec).lambda1;
  if (sys.is_measurement_noise()) {
    auto frag = encode_measurement_noise(sys.measurement_noise(), mu, 0.5, k,
                                         ApproxLevel::exact(), dec);
    return frag.affine;
  }
  throw EncodeError("mean substitution is not defined for Markov systems");
}

}  // namespace stostl
