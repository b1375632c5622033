#pragma once

// StSTL abstract syntax: chance-predicate atoms, boolean connectives, and
// bounded temporal operators, plus negation normal form, horizon computation
// and trace evaluation. Formulas are immutable DAGs of shared nodes.

#include "stostl/core.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace stostl {

enum class SignalKind { State, Input, Noise };

struct SignalRef {
  SignalKind kind = SignalKind::State;
  int index = 0;  // 0-based component index

  friend bool operator==(const SignalRef&, const SignalRef&) = default;
};

// Affine expression over signal components at the node's implicit time step.
struct LinExpr {
  struct Term {
    SignalRef ref;
    double coeff = 0.0;
    friend bool operator==(const Term&, const Term&) = default;
  };
  std::vector<Term> terms;
  double constant = 0.0;

  LinExpr() = default;
  explicit LinExpr(double c) : constant(c) {}

  LinExpr& add(SignalKind kind, int index, double coeff) {
    for (auto& t : terms) {
      if (t.ref.kind == kind && t.ref.index == index) {
        t.coeff += coeff;
        return *this;
      }
    }
    terms.push_back({{kind, index}, coeff});
    return *this;
  }

  bool references(SignalKind kind) const {
    return std::any_of(terms.begin(), terms.end(), [&](const Term& t) {
      return t.ref.kind == kind && t.coeff != 0.0;
    });
  }

  friend bool operator==(const LinExpr&, const LinExpr&) = default;
};

inline LinExpr state_term(int index, double coeff = 1.0) {
  LinExpr e;
  e.add(SignalKind::State, index, coeff);
  return e;
}

inline LinExpr input_term(int index, double coeff = 1.0) {
  LinExpr e;
  e.add(SignalKind::Input, index, coeff);
  return e;
}

// Atomic predicate P{mu(z_k) <= 0} >= p. When `deterministic` is set the
// predicate reads "mu <= 0" and p is ignored.
struct ChancePredicate {
  LinExpr mu;
  double p = 1.0;
  bool deterministic = false;

  friend bool operator==(const ChancePredicate&, const ChancePredicate&) = default;
};

inline ChancePredicate chance(LinExpr mu, double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw ModelError("probability outside [0,1]");
  return ChancePredicate{std::move(mu), p, false};
}

inline ChancePredicate deterministic(LinExpr mu) {
  return ChancePredicate{std::move(mu), 1.0, true};
}

inline ChancePredicate true_predicate() { return deterministic(LinExpr(0.0)); }
inline ChancePredicate false_predicate() { return deterministic(LinExpr(1.0)); }

enum class FormulaKind {
  Atom,
  Not,
  And,
  Or,
  Implies,
  Globally,
  Eventually,
  Until,
  WeakUntil,
};

struct Formula;
using FormulaPtr = std::shared_ptr<const Formula>;

struct Formula {
  FormulaKind kind = FormulaKind::Atom;
  ChancePredicate pred;              // Atom only
  std::vector<FormulaPtr> children;  // arity checked on construction
  int t1 = 0, t2 = 0;                // temporal operators only

  static FormulaPtr atom(ChancePredicate p) {
    auto f = std::make_shared<Formula>();
    f->kind = FormulaKind::Atom;
    f->pred = std::move(p);
    return f;
  }
  static FormulaPtr negation(FormulaPtr a) {
    return node(FormulaKind::Not, {std::move(a)});
  }
  static FormulaPtr conj(FormulaPtr a, FormulaPtr b) {
    return node(FormulaKind::And, {std::move(a), std::move(b)});
  }
  static FormulaPtr disj(FormulaPtr a, FormulaPtr b) {
    return node(FormulaKind::Or, {std::move(a), std::move(b)});
  }
  static FormulaPtr implies(FormulaPtr a, FormulaPtr b) {
    return node(FormulaKind::Implies, {std::move(a), std::move(b)});
  }
  static FormulaPtr globally(int t1, int t2, FormulaPtr a) {
    return temporal(FormulaKind::Globally, t1, t2, {std::move(a)});
  }
  static FormulaPtr eventually(int t1, int t2, FormulaPtr a) {
    return temporal(FormulaKind::Eventually, t1, t2, {std::move(a)});
  }
  static FormulaPtr until(int t1, int t2, FormulaPtr a, FormulaPtr b) {
    return temporal(FormulaKind::Until, t1, t2, {std::move(a), std::move(b)});
  }
  static FormulaPtr weak_until(int t1, int t2, FormulaPtr a, FormulaPtr b) {
    return temporal(FormulaKind::WeakUntil, t1, t2, {std::move(a), std::move(b)});
  }

 private:
  static FormulaPtr node(FormulaKind k, std::vector<FormulaPtr> ch) {
    auto f = std::make_shared<Formula>();
    f->kind = k;
    f->children = std::move(ch);
    return f;
  }
  static FormulaPtr temporal(FormulaKind k, int t1, int t2,
                             std::vector<FormulaPtr> ch) {
    if (t1 < 0 || t2 < t1)
      throw ModelError("temporal interval must satisfy 0 <= t1 <= t2");
    auto f = node(k, std::move(ch));
    auto* m = const_cast<Formula*>(f.get());
    m->t1 = t1;
    m->t2 = t2;
    return f;
  }
};

inline FormulaPtr formula_true() { return Formula::atom(true_predicate()); }
inline FormulaPtr formula_false() { return Formula::atom(false_predicate()); }

// Smallest K (by the structural interval-sum rule) such that satisfaction at
// step 0 reads only z_0..z_K.
inline int horizon(const Formula& f) {
  switch (f.kind) {
    case FormulaKind::Atom:
      return 0;
    case FormulaKind::Not:
      return horizon(*f.children[0]);
    case FormulaKind::And:
    case FormulaKind::Or:
    case FormulaKind::Implies:
      return std::max(horizon(*f.children[0]), horizon(*f.children[1]));
    case FormulaKind::Globally:
    case FormulaKind::Eventually:
      return f.t2 + horizon(*f.children[0]);
    case FormulaKind::Until:
    case FormulaKind::WeakUntil:
      return f.t2 +
             std::max(horizon(*f.children[0]), horizon(*f.children[1]));
  }
  return 0;
}

// --------------------------------------------------------------------------
// Negation normal form: negations only on atoms (as a polarity flag),
// Implies/Eventually/WeakUntil desugared away.
// --------------------------------------------------------------------------

enum class NnfKind { Atom, And, Or, Globally, Until };

struct NnfFormula;
using NnfPtr = std::shared_ptr<const NnfFormula>;

struct NnfFormula {
  NnfKind kind = NnfKind::Atom;
  ChancePredicate pred;  // Atom only
  bool negated = false;  // Atom only: polarity of the literal
  std::vector<NnfPtr> children;
  int t1 = 0, t2 = 0;

  static NnfPtr atom(ChancePredicate p, bool negated) {
    auto f = std::make_shared<NnfFormula>();
    f->pred = std::move(p);
    f->negated = negated;
    return f;
  }
  static NnfPtr conj(NnfPtr a, NnfPtr b) {
    return node(NnfKind::And, {std::move(a), std::move(b)});
  }
  static NnfPtr disj(NnfPtr a, NnfPtr b) {
    return node(NnfKind::Or, {std::move(a), std::move(b)});
  }
  static NnfPtr globally(int t1, int t2, NnfPtr a) {
    auto f = node(NnfKind::Globally, {std::move(a)});
    auto* m = const_cast<NnfFormula*>(f.get());
    m->t1 = t1;
    m->t2 = t2;
    return f;
  }
  static NnfPtr until(int t1, int t2, NnfPtr a, NnfPtr b) {
    auto f = node(NnfKind::Until, {std::move(a), std::move(b)});
    auto* m = const_cast<NnfFormula*>(f.get());
    m->t1 = t1;
    m->t2 = t2;
    return f;
  }

 private:
  static NnfPtr node(NnfKind k, std::vector<NnfPtr> ch) {
    auto f = std::make_shared<NnfFormula>();
    f->kind = k;
    f->children = std::move(ch);
    return f;
  }
};

inline NnfPtr nnf_true() { return NnfFormula::atom(true_predicate(), false); }

namespace detail {

inline NnfPtr to_nnf_pos(const FormulaPtr& f);
inline NnfPtr to_nnf_neg(const FormulaPtr& f);

inline NnfPtr to_nnf_pos(const FormulaPtr& f) {
  switch (f->kind) {
    case FormulaKind::Atom:
      return NnfFormula::atom(f->pred, false);
    case FormulaKind::Not:
      return to_nnf_neg(f->children[0]);
    case FormulaKind::And:
      return NnfFormula::conj(to_nnf_pos(f->children[0]),
                              to_nnf_pos(f->children[1]));
    case FormulaKind::Or:
      return NnfFormula::disj(to_nnf_pos(f->children[0]),
                              to_nnf_pos(f->children[1]));
    case FormulaKind::Implies:
      return NnfFormula::disj(to_nnf_neg(f->children[0]),
                              to_nnf_pos(f->children[1]));
    case FormulaKind::Globally:
      return NnfFormula::globally(f->t1, f->t2, to_nnf_pos(f->children[0]));
    case FormulaKind::Eventually:
      return NnfFormula::until(f->t1, f->t2, nnf_true(),
                               to_nnf_pos(f->children[0]));
    case FormulaKind::Until:
      return NnfFormula::until(f->t1, f->t2, to_nnf_pos(f->children[0]),
                               to_nnf_pos(f->children[1]));
    case FormulaKind::WeakUntil:
      // a W b  ==  (a U b) or G a
      return NnfFormula::disj(
          NnfFormula::until(f->t1, f->t2, to_nnf_pos(f->children[0]),
                            to_nnf_pos(f->children[1])),
          NnfFormula::globally(f->t1, f->t2, to_nnf_pos(f->children[0])));
  }
  throw Error("unreachable formula kind");
}

inline NnfPtr to_nnf_neg(const FormulaPtr& f) {
  switch (f->kind) {
    case FormulaKind::Atom:
      return NnfFormula::atom(f->pred, true);
    case FormulaKind::Not:
      return to_nnf_pos(f->children[0]);
    case FormulaKind::And:
      return NnfFormula::disj(to_nnf_neg(f->children[0]),
                              to_nnf_neg(f->children[1]));
    case FormulaKind::Or:
      return NnfFormula::conj(to_nnf_neg(f->children[0]),
                              to_nnf_neg(f->children[1]));
    case FormulaKind::Implies:
      return NnfFormula::conj(to_nnf_pos(f->children[0]),
                              to_nnf_neg(f->children[1]));
    case FormulaKind::Globally:
      // not G[a,b] phi  ==  disjunction of not-phi over the window,
      // i.e. true U[a,b] not-phi
      return NnfFormula::until(f->t1, f->t2, nnf_true(),
                               to_nnf_neg(f->children[0]));
    case FormulaKind::Eventually:
      return NnfFormula::globally(f->t1, f->t2, to_nnf_neg(f->children[0]));
    case FormulaKind::Until: {
      // not (a U[t1,t2] b)  ==  G[t1,t2] not-b  or
      //                         not-b U[t1,t2] (not-a and not-b)
      auto na = to_nnf_neg(f->children[0]);
      auto nb = to_nnf_neg(f->children[1]);
      return NnfFormula::disj(
          NnfFormula::globally(f->t1, f->t2, nb),
          NnfFormula::until(f->t1, f->t2, nb, NnfFormula::conj(na, nb)));
    }
    case FormulaKind::WeakUntil: {
      // not (a W b) == not (a U b) and not G a
      auto na = to_nnf_neg(f->children[0]);
      auto nb = to_nnf_neg(f->children[1]);
      auto not_until = NnfFormula::disj(
          NnfFormula::globally(f->t1, f->t2, nb),
          NnfFormula::until(f->t1, f->t2, nb, NnfFormula::conj(na, nb)));
      auto not_globally = NnfFormula::until(f->t1, f->t2, nnf_true(), na);
      return NnfFormula::conj(not_until, not_globally);
    }
  }
  throw Error("unreachable formula kind");
}

}  // namespace detail

inline NnfPtr to_nnf(const FormulaPtr& f) { return detail::to_nnf_pos(f); }

inline int horizon(const NnfFormula& f) {
  switch (f.kind) {
    case NnfKind::Atom:
      return 0;
    case NnfKind::And:
    case NnfKind::Or:
      return std::max(horizon(*f.children[0]), horizon(*f.children[1]));
    case NnfKind::Globally:
      return f.t2 + horizon(*f.children[0]);
    case NnfKind::Until:
      return f.t2 +
             std::max(horizon(*f.children[0]), horizon(*f.children[1]));
  }
  return 0;
}

// --------------------------------------------------------------------------
// Trace evaluation. A trace supplies one truth value per (step, atom); atoms
// are indexed by first structural occurrence (collect_atoms order).
// --------------------------------------------------------------------------

// [step][atom index] -> truth of the atomic predicate at that step.
using TruthTrace = std::vector<std::vector<bool>>;

inline void collect_atoms(const Formula& f, std::vector<ChancePredicate>& out) {
  if (f.kind == FormulaKind::Atom) {
    if (std::find(out.begin(), out.end(), f.pred) == out.end())
      out.push_back(f.pred);
    return;
  }
  for (const auto& c : f.children) collect_atoms(*c, out);
}

inline void collect_atoms(const NnfFormula& f,
                          std::vector<ChancePredicate>& out) {
  if (f.kind == NnfKind::Atom) {
    if (std::find(out.begin(), out.end(), f.pred) == out.end())
      out.push_back(f.pred);
    return;
  }
  for (const auto& c : f.children) collect_atoms(*c, out);
}

inline std::vector<ChancePredicate> collect_atoms(const Formula& f) {
  std::vector<ChancePredicate> out;
  collect_atoms(f, out);
  return out;
}

inline std::vector<ChancePredicate> collect_atoms(const NnfFormula& f) {
  std::vector<ChancePredicate> out;
  collect_atoms(f, out);
  return out;
}

namespace detail {

inline int atom_index(const std::vector<ChancePredicate>& atoms,
                      const ChancePredicate& p) {
  auto it = std::find(atoms.begin(), atoms.end(), p);
  if (it == atoms.end()) throw Error("atom missing from trace atom set");
  return static_cast<int>(it - atoms.begin());
}

template <typename Node>
bool eval_rec(const Node& f, const std::vector<ChancePredicate>& atoms,
              const TruthTrace& trace, int k);

template <>
inline bool eval_rec<Formula>(const Formula& f,
                              const std::vector<ChancePredicate>& atoms,
                              const TruthTrace& trace, int k) {
  switch (f.kind) {
    case FormulaKind::Atom:
      return trace[k][atom_index(atoms, f.pred)];
    case FormulaKind::Not:
      return !eval_rec(*f.children[0], atoms, trace, k);
    case FormulaKind::And:
      return eval_rec(*f.children[0], atoms, trace, k) &&
             eval_rec(*f.children[1], atoms, trace, k);
    case FormulaKind::Or:
      return eval_rec(*f.children[0], atoms, trace, k) ||
             eval_rec(*f.children[1], atoms, trace, k);
    case FormulaKind::Implies:
      return !eval_rec(*f.children[0], atoms, trace, k) ||
             eval_rec(*f.children[1], atoms, trace, k);
    case FormulaKind::Globally:
      for (int i = k + f.t1; i <= k + f.t2; ++i)
        if (!eval_rec(*f.children[0], atoms, trace, i)) return false;
      return true;
    case FormulaKind::Eventually:
      for (int i = k + f.t1; i <= k + f.t2; ++i)
        if (eval_rec(*f.children[0], atoms, trace, i)) return true;
      return false;
    case FormulaKind::Until:
      for (int i = k + f.t1; i <= k + f.t2; ++i) {
        if (!eval_rec(*f.children[1], atoms, trace, i)) continue;
        bool prefix = true;
        for (int j = k + f.t1; j < i; ++j)
          if (!eval_rec(*f.children[0], atoms, trace, j)) {
            prefix = false;
            break;
          }
        if (prefix) return true;
      }
      return false;
    case FormulaKind::WeakUntil: {
      bool all = true;
      for (int i = k + f.t1; i <= k + f.t2; ++i)
        if (!eval_rec(*f.children[0], atoms, trace, i)) {
          all = false;
          break;
        }
      if (all) return true;
      for (int i = k + f.t1; i <= k + f.t2; ++i) {
        if (!eval_rec(*f.children[1], atoms, trace, i)) continue;
        bool prefix = true;
        for (int j = k + f.t1; j < i; ++j)
          if (!eval_rec(*f.children[0], atoms, trace, j)) {
            prefix = false;
            break;
          }
        if (prefix) return true;
      }
      return false;
    }
  }
  throw Error("unreachable formula kind");
}

template <>
inline bool eval_rec<NnfFormula>(const NnfFormula& f,
                                 const std::vector<ChancePredicate>& atoms,
                                 const TruthTrace& trace, int k) {
  switch (f.kind) {
    case NnfKind::Atom: {
      bool v = trace[k][atom_index(atoms, f.pred)];
      return f.negated ? !v : v;
    }
    case NnfKind::And:
      return eval_rec(*f.children[0], atoms, trace, k) &&
             eval_rec(*f.children[1], atoms, trace, k);
    case NnfKind::Or:
      return eval_rec(*f.children[0], atoms, trace, k) ||
             eval_rec(*f.children[1], atoms, trace, k);
    case NnfKind::Globally:
      for (int i = k + f.t1; i <= k + f.t2; ++i)
        if (!eval_rec(*f.children[0], atoms, trace, i)) return false;
      return true;
    case NnfKind::Until:
      for (int i = k + f.t1; i <= k + f.t2; ++i) {
        if (!eval_rec(*f.children[1], atoms, trace, i)) continue;
        bool prefix = true;
        for (int j = k + f.t1; j < i; ++j)
          if (!eval_rec(*f.children[0], atoms, trace, j)) {
            prefix = false;
            break;
          }
        if (prefix) return true;
      }
      return false;
  }
  throw Error("unreachable formula kind");
}

}  // namespace detail

template <typename Node>
bool eval_on_trace(const Node& f, const std::vector<ChancePredicate>& atoms,
                   const TruthTrace& trace, int k) {
  if (static_cast<int>(trace.size()) < k + horizon(f) + 1)
    throw ModelError("trace too short for formula horizon");
  return detail::eval_rec(f, atoms, trace, k);
}

template <typename Node>
bool eval_on_trace(const Node& f, const TruthTrace& trace, int k) {
  return eval_on_trace(f, collect_atoms(f), trace, k);
}

// --------------------------------------------------------------------------
// Printing (concrete syntax understood by the parser).
// --------------------------------------------------------------------------

inline std::string to_string(const LinExpr& e) {
  std::ostringstream os;
  os.precision(17);
  bool first = true;
  for (const auto& t : e.terms) {
    double c = t.coeff;
    if (!first) {
      os << (c < 0 ? " - " : " + ");
      c = std::abs(c);
    } else if (c < 0) {
      os << "-";
      c = std::abs(c);
    }
    first = false;
    if (c != 1.0) os << c << " ";
    switch (t.ref.kind) {
      case SignalKind::State:
        os << "x[" << t.ref.index + 1 << "]";
        break;
      case SignalKind::Input:
        os << "u[" << t.ref.index + 1 << "]";
        break;
      case SignalKind::Noise:
        os << "w[" << t.ref.index + 1 << "]";
        break;
    }
  }
  if (first) {
    os << e.constant;
  } else if (e.constant != 0.0) {
    os << (e.constant < 0 ? " - " : " + ") << std::abs(e.constant);
  }
  return os.str();
}

inline std::string to_string(const ChancePredicate& p) {
  std::ostringstream os;
  os.precision(17);
  if (p.deterministic) {
    os << to_string(p.mu) << " <= 0";
  } else {
    os << "P{ " << to_string(p.mu) << " <= 0 } >= " << p.p;
  }
  return os.str();
}

inline std::string to_string(const Formula& f) {
  std::ostringstream os;
  switch (f.kind) {
    case FormulaKind::Atom:
      os << to_string(f.pred);
      break;
    case FormulaKind::Not:
      os << "!(" << to_string(*f.children[0]) << ")";
      break;
    case FormulaKind::And:
      os << "(" << to_string(*f.children[0]) << ") && ("
         << to_string(*f.children[1]) << ")";
      break;
    case FormulaKind::Or:
      os << "(" << to_string(*f.children[0]) << ") || ("
         << to_string(*f.children[1]) << ")";
      break;
    case FormulaKind::Implies:
      os << "(" << to_string(*f.children[0]) << ") -> ("
         << to_string(*f.children[1]) << ")";
      break;
    case FormulaKind::Globally:
      os << "G[" << f.t1 << "," << f.t2 << "](" << to_string(*f.children[0])
         << ")";
      break;
    case FormulaKind::Eventually:
      os << "F[" << f.t1 << "," << f.t2 << "](" << to_string(*f.children[0])
         << ")";
      break;
    case FormulaKind::Until:
      os << "(" << to_string(*f.children[0]) << ") U[" << f.t1 << "," << f.t2
         << "] (" << to_string(*f.children[1]) << ")";
      break;
    case FormulaKind::WeakUntil:
      os << "(" << to_string(*f.children[0]) << ") W[" << f.t1 << "," << f.t2
         << "] (" << to_string(*f.children[1]) << ")";
      break;
  }
  return os.str();
}

// Structural equality (used by the parser round-trip property).
inline bool equal(const Formula& a, const Formula& b) {
  if (a.kind != b.kind || a.t1 != b.t1 || a.t2 != b.t2) return false;
  if (a.kind == FormulaKind::Atom) return a.pred == b.pred;
  if (a.children.size() != b.children.size()) return false;
  for (size_t i = 0; i < a.children.size(); ++i)
    if (!equal(*a.children[i], *b.children[i])) return false;
  return true;
}

}  // namespace stostl
