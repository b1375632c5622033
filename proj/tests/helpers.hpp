#pragma once

// Shared test utilities: distinct dummy atoms, random formula generation and
// an evaluator written independently from the recursive semantics, used as
// the oracle for the implementation under test.

#include "stostl/formula.hpp"

#include <functional>
#include <random>
#include <vector>

namespace testutil {

using namespace stostl;

// Distinct deterministic atoms a0, a1, ... (distinguished by the constant).
inline ChancePredicate test_atom(int i) {
  LinExpr e = state_term(0);
  e.constant = -static_cast<double>(i + 1);
  return deterministic(e);
}

inline FormulaPtr atom_f(int i) { return Formula::atom(test_atom(i)); }

// Random bounded formula over `natoms` distinct atoms.
inline FormulaPtr random_formula(std::mt19937_64& gen, int depth, int natoms,
                                 int max_interval) {
  std::uniform_int_distribution<int> kind_dist(0, 8);
  std::uniform_int_distribution<int> atom_dist(0, natoms - 1);
  std::uniform_int_distribution<int> t_dist(0, max_interval);
  if (depth <= 0) return atom_f(atom_dist(gen));
  int k = kind_dist(gen);
  auto sub = [&] { return random_formula(gen, depth - 1, natoms, max_interval); };
  auto interval = [&] {
    int a = t_dist(gen), b = t_dist(gen);
    return std::pair<int, int>{std::min(a, b), std::max(a, b)};
  };
  switch (k) {
    case 0:
      return atom_f(atom_dist(gen));
    case 1:
      return Formula::negation(sub());
    case 2:
      return Formula::conj(sub(), sub());
    case 3:
      return Formula::disj(sub(), sub());
    case 4:
      return Formula::implies(sub(), sub());
    case 5: {
      auto [a, b] = interval();
      return Formula::globally(a, b, sub());
    }
    case 6: {
      auto [a, b] = interval();
      return Formula::eventually(a, b, sub());
    }
    case 7: {
      auto [a, b] = interval();
      return Formula::until(a, b, sub(), sub());
    }
    default: {
      auto [a, b] = interval();
      return Formula::weak_until(a, b, sub(), sub());
    }
  }
}

// Oracle evaluator, coded directly from the recursive semantics: atoms are
// looked up through a callback, temporal operators by explicit quantifier
// loops. Kept independent of eval_on_trace on purpose.
inline bool oracle_eval(const Formula& f,
                        const std::function<bool(const ChancePredicate&, int)>& atom_truth,
                        int k) {
  using K = FormulaKind;
  if (f.kind == K::Atom) return atom_truth(f.pred, k);
  if (f.kind == K::Not) return !oracle_eval(*f.children[0], atom_truth, k);
  if (f.kind == K::And)
    return oracle_eval(*f.children[0], atom_truth, k) &&
           oracle_eval(*f.children[1], atom_truth, k);
  if (f.kind == K::Or)
    return oracle_eval(*f.children[0], atom_truth, k) ||
           oracle_eval(*f.children[1], atom_truth, k);
  if (f.kind == K::Implies)
    return !oracle_eval(*f.children[0], atom_truth, k) ||
           oracle_eval(*f.children[1], atom_truth, k);
  if (f.kind == K::Globally) {
    for (int i = k + f.t1; i <= k + f.t2; ++i)
      if (!oracle_eval(*f.children[0], atom_truth, i)) return false;
    return true;
  }
  if (f.kind == K::Eventually) {
    for (int i = k + f.t1; i <= k + f.t2; ++i)
      if (oracle_eval(*f.children[0], atom_truth, i)) return true;
    return false;
  }
  if (f.kind == K::Until) {
    for (int i = k + f.t1; i <= k + f.t2; ++i) {
      bool ok = oracle_eval(*f.children[1], atom_truth, i);
      for (int j = k + f.t1; ok && j <= i - 1; ++j)
        ok = oracle_eval(*f.children[0], atom_truth, j);
      if (ok) return true;
    }
    return false;
  }
  // Weak until: until or globally-first-argument.
  bool glob = true;
  for (int i = k + f.t1; i <= k + f.t2; ++i)
    if (!oracle_eval(*f.children[0], atom_truth, i)) {
      glob = false;
      break;
    }
  if (glob) return true;
  for (int i = k + f.t1; i <= k + f.t2; ++i) {
    bool ok = oracle_eval(*f.children[1], atom_truth, i);
    for (int j = k + f.t1; ok && j <= i - 1; ++j)
      ok = oracle_eval(*f.children[0], atom_truth, j);
    if (ok) return true;
  }
  return false;
}

// Random truth trace for `natoms` atoms over `steps` steps.
inline TruthTrace random_trace(std::mt19937_64& gen, int steps, int natoms) {
  TruthTrace t(steps, std::vector<bool>(natoms));
  std::bernoulli_distribution coin(0.5);
  for (auto& row : t)
    for (int j = 0; j < natoms; ++j) row[j] = coin(gen);
  return t;
}

}  // namespace testutil
