#pragma once

// Mixed-integer linear programs: model container, LP-file export, and a
// desk-scale branch-and-bound solver over a bounded-variable primal simplex
// (two-phase, product-form inverse updates, Bland fallback for anti-cycling).

#include "stostl/core.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace stostl {

using VarId = int;

// Affine expression over solver variables.
struct Affine {
  std::vector<std::pair<VarId, double>> terms;
  double constant = 0.0;

  Affine() = default;
  explicit Affine(double c) : constant(c) {}

  Affine& add(VarId v, double coeff) {
    if (coeff == 0.0) return *this;
    for (auto& t : terms) {
      if (t.first == v) {
        t.second += coeff;
        return *this;
      }
    }
    terms.emplace_back(v, coeff);
    return *this;
  }

  Affine& operator+=(const Affine& o) {
    for (const auto& [v, c] : o.terms) add(v, c);
    constant += o.constant;
    return *this;
  }

  Affine& scale(double s) {
    for (auto& t : terms) t.second *= s;
    constant *= s;
    return *this;
  }

  double value(const std::vector<double>& assignment) const {
    double acc = constant;
    for (const auto& [v, c] : terms) acc += c * assignment[v];
    return acc;
  }

  friend Affine operator+(Affine a, const Affine& b) { return a += b; }
  friend Affine operator*(double s, Affine a) { return a.scale(s); }
};

enum class RowSense { Leq, Geq, Eq };

struct MipRow {
  Affine expr;  // constant folded into rhs on insertion
  RowSense sense = RowSense::Leq;
  double rhs = 0.0;
  std::string name;
};

enum class SolveStatus { Feasible, Infeasible, CapExceeded };

struct SolveStats {
  std::int64_t nodes = 0;
  std::int64_t lp_iterations = 0;
  double wall_seconds = 0.0;
};

struct SolveResult {
  SolveStatus status = SolveStatus::Infeasible;
  std::vector<double> assignment;   // per variable, Feasible only
  std::optional<double> objective;  // Feasible with objective only
  SolveStats stats;
};

struct SolveBudget {
  std::int64_t max_nodes = 1'000'000;
  double max_seconds = 1e9;
};

class MipModel {
 public:
  struct Variable {
    std::string name;
    bool binary = false;
    double lower = 0.0;
    double upper = 0.0;
  };

  VarId add_continuous(const std::string& name, double lower, double upper) {
    if (!(std::isfinite(lower) && std::isfinite(upper) && lower <= upper))
      throw ModelError("continuous variable needs finite ordered bounds: " +
                       name);
    vars_.push_back({name, false, lower, upper});
    return static_cast<VarId>(vars_.size()) - 1;
  }

  VarId add_binary(const std::string& name) {
    vars_.push_back({name, true, 0.0, 1.0});
    return static_cast<VarId>(vars_.size()) - 1;
  }

  int add_row(const Affine& expr, RowSense sense, double rhs,
              std::string name = {}) {
    MipRow row;
    row.expr = expr;
    row.rhs = rhs - expr.constant;
    row.expr.constant = 0.0;
    row.sense = sense;
    row.name = name.empty() ? "c" + std::to_string(rows_.size()) : name;
    for (const auto& [v, c] : row.expr.terms) {
      if (v < 0 || v >= static_cast<int>(vars_.size()))
        throw ModelError("row references undeclared variable");
      if (!std::isfinite(c)) throw ModelError("non-finite row coefficient");
    }
    rows_.push_back(std::move(row));
    return static_cast<int>(rows_.size()) - 1;
  }

  // expr <= 0
  int add_leq0(const Affine& expr, std::string name = {}) {
    return add_row(expr, RowSense::Leq, 0.0, std::move(name));
  }

  // Interval-arithmetic range of an affine expression over the variable box.
  std::pair<double, double> range(const Affine& expr) const {
    double lo = expr.constant, hi = expr.constant;
    for (const auto& [v, c] : expr.terms) {
      const auto& var = vars_[v];
      lo += c * (c >= 0 ? var.lower : var.upper);
      hi += c * (c >= 0 ? var.upper : var.lower);
    }
    return {lo, hi};
  }

  // Certified big-M for "expr <= (1-b) M": bounds expr from above over the
  // whole variable box, with a 1.1 safety factor.
  double big_m_for(const Affine& expr) const {
    double hi = range(expr).second;
    return 1.1 * std::max(1.0, hi);
  }

  // Adds expr <= (1 - b) * M. Returns the row index.
  int add_indicator(VarId b, const Affine& expr, double m,
                    std::string name = {}) {
    if (!(m > 0.0)) throw ModelError("indicator big-M must be positive");
    if (!vars_.at(b).binary)
      throw ModelError("indicator variable must be binary");
    Affine row = expr;
    row.add(b, m);
    int idx = add_row(row, RowSense::Leq, m, std::move(name));
    big_m_registry_.push_back({idx, b, m});
    return idx;
  }

  void set_objective(Affine obj, bool minimize) {
    objective_ = std::move(obj);
    minimize_ = minimize;
  }

  bool has_objective() const { return objective_.has_value(); }
  const std::vector<Variable>& variables() const { return vars_; }
  const std::vector<MipRow>& rows() const { return rows_; }
  const std::optional<Affine>& objective() const { return objective_; }
  bool minimize() const { return minimize_; }

  // True when the assignment satisfies every row and bound within tol.
  bool check_assignment(const std::vector<double>& x, double tol = 1e-6) const {
    if (x.size() != vars_.size()) return false;
    for (size_t i = 0; i < vars_.size(); ++i) {
      if (x[i] < vars_[i].lower - tol || x[i] > vars_[i].upper + tol)
        return false;
      if (vars_[i].binary && std::abs(x[i] - std::round(x[i])) > tol)
        return false;
    }
    for (const auto& row : rows_) {
      double v = row.expr.value(x);
      switch (row.sense) {
        case RowSense::Leq:
          if (v > row.rhs + tol) return false;
          break;
        case RowSense::Geq:
          if (v < row.rhs - tol) return false;
          break;
        case RowSense::Eq:
          if (std::abs(v - row.rhs) > tol) return false;
          break;
      }
    }
    return true;
  }

 private:
  struct BigMEntry {
    int row;
    VarId indicator;
    double m;
  };

  std::vector<Variable> vars_;
  std::vector<MipRow> rows_;
  std::optional<Affine> objective_;
  bool minimize_ = true;
  std::vector<BigMEntry> big_m_registry_;
};

// ---------------------------------------------------------------------------
// LP text export (Minimize / Subject To / Bounds / Binaries / End).
// ---------------------------------------------------------------------------

namespace detail {

inline std::string sanitize_name(const std::string& s) {
  std::string out;
  for (char c : s)
    out += (std::isalnum(static_cast<unsigned char>(c)) || c == '_') ? c : '_';
  if (out.empty() || std::isdigit(static_cast<unsigned char>(out[0])))
    out = "v" + out;
  return out;
}

inline std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

inline std::string export_lp(const MipModel& m) {
  const auto& vars = m.variables();
  std::vector<std::string> names(vars.size());
  for (size_t i = 0; i < vars.size(); ++i) {
    std::string n = detail::sanitize_name(vars[i].name);
    if (n.empty()) n = "x";
    names[i] = n + "_" + std::to_string(i);  // suffix keeps names unique
  }

  auto write_terms = [&](std::ostringstream& os,
                         const std::vector<std::pair<VarId, double>>& terms) {
    bool first = true;
    for (const auto& [v, c] : terms) {
      if (c == 0.0) continue;
      if (first) {
        if (c < 0) os << "- ";
        first = false;
      } else {
        os << (c < 0 ? " - " : " + ");
      }
      os << detail::fmt17(std::abs(c)) << " " << names[v];
    }
    if (first) os << "0";
  };

  std::ostringstream os;
  os << (m.minimize() ? "Minimize" : "Maximize") << "\n obj: ";
  if (m.has_objective()) {
    write_terms(os, m.objective()->terms);
  } else {
    os << "0";
  }
  os << "\nSubject To\n";
  for (const auto& row : m.rows()) {
    os << " " << detail::sanitize_name(row.name) << ": ";
    write_terms(os, row.expr.terms);
    switch (row.sense) {
      case RowSense::Leq:
        os << " <= ";
        break;
      case RowSense::Geq:
        os << " >= ";
        break;
      case RowSense::Eq:
        os << " = ";
        break;
    }
    os << detail::fmt17(row.rhs) << "\n";
  }
  os << "Bounds\n";
  for (size_t i = 0; i < vars.size(); ++i) {
    if (vars[i].binary) continue;
    os << " " << detail::fmt17(vars[i].lower) << " <= " << names[i]
       << " <= " << detail::fmt17(vars[i].upper) << "\n";
  }
  bool any_bin = false;
  for (const auto& v : vars) any_bin |= v.binary;
  if (any_bin) {
    os << "Binaries\n";
    for (size_t i = 0; i < vars.size(); ++i)
      if (vars[i].binary) os << " " << names[i] << "\n";
  }
  os << "End\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Bounded-variable primal simplex
// ---------------------------------------------------------------------------

namespace detail {

enum class LpStatus { Optimal, Infeasible, IterationLimit };

struct LpResult {
  LpStatus status = LpStatus::Infeasible;
  std::vector<double> x;  // structural variables only
  double objective = 0.0;
  std::int64_t iterations = 0;
};

class Simplex {
 public:
  Simplex(const MipModel& model, const std::vector<double>& lower,
          const std::vector<double>& upper)
      : nstruct_(static_cast<int>(model.variables().size())),
        m_(static_cast<int>(model.rows().size())) {
    // Columns: structural | slack per row | artificial per row. The matrix
    // is kept column-sparse; pricing and FTRAN walk the nonzeros only.
    ncols_ = nstruct_ + 2 * m_;
    cols_.resize(ncols_);
    lo_.assign(ncols_, 0.0);
    up_.assign(ncols_, 0.0);
    b_ = Vec::Zero(m_);
    for (int j = 0; j < nstruct_; ++j) {
      lo_[j] = lower[j];
      up_[j] = upper[j];
    }
    const auto& rows = model.rows();
    for (int i = 0; i < m_; ++i) {
      for (const auto& [v, c] : rows[i].expr.terms)
        if (c != 0.0) cols_[v].emplace_back(i, c);
      b_[i] = rows[i].rhs;
      int sj = nstruct_ + i;           // slack: row + slack == rhs
      int aj = nstruct_ + m_ + i;      // artificial, phase 1 only
      cols_[sj].emplace_back(i, 1.0);
      cols_[aj].emplace_back(i, 1.0);
      auto [rlo, rhi] = row_range(rows[i], lower, upper);
      switch (rows[i].sense) {
        case RowSense::Leq:
          lo_[sj] = 0.0;
          up_[sj] = std::max(1.0, (b_[i] - rlo) * 1.1);
          break;
        case RowSense::Geq:
          lo_[sj] = std::min(-1.0, (b_[i] - rhi) * 1.1);
          up_[sj] = 0.0;
          break;
        case RowSense::Eq:
          lo_[sj] = 0.0;
          up_[sj] = 0.0;
          break;
      }
    }
  }

  LpResult solve(const std::optional<Affine>& objective, bool minimize,
                 std::int64_t iteration_limit) {
    init_basis();
    LpResult res;

    // Phase 1: drive the artificials to zero. A nonzero optimum is only
    // accepted after restarting from a fresh factorization, which clears
    // any conditioning drift accumulated by the inverse updates.
    Vec cost = Vec::Zero(ncols_);
    for (int i = 0; i < m_; ++i) {
      int aj = nstruct_ + m_ + i;
      cost[aj] = (x_[aj] >= 0.0) ? 1.0 : -1.0;
    }
    double infeas = 0.0;
    for (int attempt = 0; attempt < 3; ++attempt) {
      auto st = iterate(cost, iteration_limit);
      res.iterations = iterations_;
      if (st == LpStatus::IterationLimit) {
        res.status = st;
        return res;
      }
      infeas = 0.0;
      for (int i = 0; i < m_; ++i) infeas += std::abs(x_[nstruct_ + m_ + i]);
      if (infeas <= 1e-7) break;
      // Nonzero phase-1 optimum: restart once from a fresh factorization to
      // rule out conditioning drift before declaring infeasibility.
      refactorize();
    }
    if (infeas > 1e-7) {
      res.status = LpStatus::Infeasible;
      return res;
    }
    // Pin artificials at zero for phase 2 (they may stay basic at 0).
    for (int i = 0; i < m_; ++i) {
      int aj = nstruct_ + m_ + i;
      lo_[aj] = up_[aj] = 0.0;
      if (status_[aj] != VarStatus::Basic) {
        x_[aj] = 0.0;
        status_[aj] = VarStatus::AtLower;
      }
    }

    if (objective) {
      Vec c2 = Vec::Zero(ncols_);
      for (const auto& [v, coef] : objective->terms)
        c2[v] += minimize ? coef : -coef;
      auto st = iterate(c2, iteration_limit);
      res.iterations = iterations_;
      if (st == LpStatus::IterationLimit) {
        res.status = st;
        return res;
      }
    }

    res.status = LpStatus::Optimal;
    res.x.assign(x_.begin(), x_.begin() + nstruct_);
    if (objective) {
      double obj = objective->constant;
      for (const auto& [v, coef] : objective->terms) obj += coef * x_[v];
      res.objective = obj;  // value in the caller's original sense
    }
    return res;
  }

 private:
  enum class VarStatus { Basic, AtLower, AtUpper };

  static std::pair<double, double> row_range(const MipRow& row,
                                             const std::vector<double>& lower,
                                             const std::vector<double>& upper) {
    double lo = 0.0, hi = 0.0;
    for (const auto& [v, c] : row.expr.terms) {
      lo += c * (c >= 0 ? lower[v] : upper[v]);
      hi += c * (c >= 0 ? upper[v] : lower[v]);
    }
    return {lo, hi};
  }

  void init_basis() {
    x_.assign(ncols_, 0.0);
    status_.assign(ncols_, VarStatus::AtLower);
    basis_.assign(m_, 0);
    // Structurals and slacks start at the bound nearest zero; nonbasic
    // variables must sit exactly on a bound.
    for (int j = 0; j < nstruct_ + m_; ++j) {
      if (lo_[j] == up_[j] || std::abs(lo_[j]) <= std::abs(up_[j])) {
        x_[j] = lo_[j];
        status_[j] = VarStatus::AtLower;
      } else {
        x_[j] = up_[j];
        status_[j] = VarStatus::AtUpper;
      }
    }
    // Artificial i picks up the row residual and starts basic.
    Vec resid = b_;
    for (int j = 0; j < nstruct_ + m_; ++j)
      if (x_[j] != 0.0)
        for (const auto& [i, c] : cols_[j]) resid[i] -= c * x_[j];
    for (int i = 0; i < m_; ++i) {
      double r = std::abs(resid[i]) <= 1e-9 ? 0.0 : resid[i];
      int aj = nstruct_ + m_ + i;
      lo_[aj] = std::min(0.0, r);
      up_[aj] = std::max(0.0, r);
      x_[aj] = r;
      status_[aj] = VarStatus::Basic;
      basis_[i] = aj;
    }
    binv_ = Mat::Identity(m_, m_);
    iterations_ = 0;
  }

  void refactorize() {
    if (m_ == 0) return;
    Mat bmat = Mat::Zero(m_, m_);
    for (int i = 0; i < m_; ++i)
      for (const auto& [r, c] : cols_[basis_[i]]) bmat(r, i) = c;
    binv_ = bmat.partialPivLu().inverse();
    recompute_basics();
  }

  void recompute_basics() {
    Vec rhs = b_;
    for (int j = 0; j < ncols_; ++j) {
      if (status_[j] == VarStatus::Basic || x_[j] == 0.0) continue;
      for (const auto& [i, c] : cols_[j]) rhs[i] -= c * x_[j];
    }
    Vec xb = binv_ * rhs;
    for (int i = 0; i < m_; ++i) x_[basis_[i]] = xb[i];
  }

  double column_dot(const Vec& y, int j) const {
    double acc = 0.0;
    for (const auto& [i, c] : cols_[j]) acc += y[i] * c;
    return acc;
  }

  LpStatus iterate(const Vec& cost, std::int64_t iteration_limit) {
    int degenerate_streak = 0;
    bool bland = false;
    const double dual_tol = 1e-7;
    const double pivot_tol = 1e-9;
    Vec y(m_), cb(m_), alpha(m_);

    while (true) {
      if (iterations_ >= iteration_limit) return LpStatus::IterationLimit;

      if (m_ > 0) {
        for (int i = 0; i < m_; ++i) cb[i] = cost[basis_[i]];
        y.noalias() = binv_.transpose() * cb;
      }

      // Pricing: Dantzig by default, Bland (lowest index) when stalled.
      int enter = -1;
      int dir = +1;  // +1 increase from lower, -1 decrease from upper
      double best = dual_tol;
      for (int j = 0; j < ncols_; ++j) {
        if (status_[j] == VarStatus::Basic || up_[j] - lo_[j] <= 1e-12)
          continue;
        double d = cost[j] - (m_ > 0 ? column_dot(y, j) : 0.0);
        int want = 0;
        if (status_[j] == VarStatus::AtLower && d < -dual_tol) want = +1;
        if (status_[j] == VarStatus::AtUpper && d > dual_tol) want = -1;
        if (want == 0) continue;
        if (bland) {
          enter = j;
          dir = want;
          break;
        }
        if (std::abs(d) > best) {
          best = std::abs(d);
          enter = j;
          dir = want;
        }
      }
      if (enter < 0) return LpStatus::Optimal;

      // Harris-style two-pass ratio test. Pass 1 finds the step limit with a
      // feasibility-tolerance expansion scaled per blocker; pass 2 picks the
      // largest pivot magnitude among blockers within the limit (Bland mode:
      // lowest variable index). The chosen blocker leaves exactly at its
      // bound; near-tied ones overshoot by at most feas_tol regardless of
      // their pivot size.
      if (m_ > 0) {
        alpha.setZero();
        for (const auto& [i, c] : cols_[enter])
          alpha.noalias() += c * binv_.col(i);
      }
      const double tmax = up_[enter] - lo_[enter];
      const double feas_tol = 1e-9;
      double t_limit = tmax;
      for (int i = 0; i < m_; ++i) {
        double delta = -dir * alpha[i];  // basic change per unit step
        int bi = basis_[i];
        double room;
        if (delta > pivot_tol) {
          room = up_[bi] - x_[bi];
        } else if (delta < -pivot_tol) {
          room = x_[bi] - lo_[bi];
        } else {
          continue;
        }
        room = std::max(room, 0.0);
        t_limit = std::min(t_limit, (room + feas_tol) / std::abs(delta));
      }
      int leave = -1;
      int leave_dir = 0;  // +1 leaving at upper bound, -1 at lower
      double best_pivot = 0.0;
      double tstar = tmax;
      for (int i = 0; i < m_; ++i) {
        double delta = -dir * alpha[i];
        int bi = basis_[i];
        double room;
        int ldir;
        if (delta > pivot_tol) {
          room = up_[bi] - x_[bi];
          ldir = +1;
        } else if (delta < -pivot_tol) {
          room = x_[bi] - lo_[bi];
          ldir = -1;
        } else {
          continue;
        }
        double t = std::max(room, 0.0) / std::abs(delta);
        if (t > t_limit) continue;
        bool better = bland ? (leave < 0 || bi < basis_[leave])
                            : std::abs(delta) > best_pivot;
        if (better) {
          best_pivot = std::abs(delta);
          leave = i;
          leave_dir = ldir;
          tstar = t;
        }
      }

      if (leave < 0) {
        // No blocking basic: entering flips to its other bound.
        for (int i = 0; i < m_; ++i) x_[basis_[i]] -= tmax * dir * alpha[i];
        x_[enter] = (dir > 0) ? up_[enter] : lo_[enter];
        status_[enter] = (dir > 0) ? VarStatus::AtUpper : VarStatus::AtLower;
        ++iterations_;
        fresh_factor_ = false;
        continue;
      }
      if (best_pivot < 1e-7 && !fresh_factor_) {
        // Tiny pivot: refresh the inverse and retry the whole iteration
        // before committing to a near-singular basis change.
        refactorize();
        fresh_factor_ = true;
        continue;
      }
      fresh_factor_ = false;

      for (int i = 0; i < m_; ++i) x_[basis_[i]] -= tstar * dir * alpha[i];
      x_[enter] = ((dir > 0) ? lo_[enter] : up_[enter]) + dir * tstar;
      int leaving_var = basis_[leave];
      x_[leaving_var] = (leave_dir > 0) ? up_[leaving_var] : lo_[leaving_var];
      status_[leaving_var] =
          (leave_dir > 0) ? VarStatus::AtUpper : VarStatus::AtLower;
      status_[enter] = VarStatus::Basic;
      basis_[leave] = enter;

      double piv = alpha[leave];
      if (std::abs(piv) < pivot_tol) {
        refactorize();
      } else {
        // Product-form update, written column-wise so every op is a
        // contiguous axpy: new(i,j) = old(i,j) - alpha_i * old(r,j)/piv for
        // i != r, and new(r,j) = old(r,j)/piv.
        for (int j = 0; j < m_; ++j) {
          double v = binv_(leave, j) / piv;
          if (v != 0.0) binv_.col(j).noalias() -= v * alpha;
          binv_(leave, j) = v;
        }
      }

      ++iterations_;
      if (tstar <= 1e-10) {
        if (++degenerate_streak > 50) bland = true;  // anti-cycling
      } else {
        degenerate_streak = 0;
        bland = false;
      }
      if (iterations_ % 128 == 0) refactorize();
    }
  }

  int nstruct_, m_, ncols_ = 0;
  std::vector<std::vector<std::pair<int, double>>> cols_;
  Vec b_;
  std::vector<double> lo_, up_;
  std::vector<double> x_;
  std::vector<VarStatus> status_;
  std::vector<int> basis_;
  Mat binv_;
  std::int64_t iterations_ = 0;
  bool fresh_factor_ = false;
};

inline LpResult solve_lp(const MipModel& model, const std::vector<double>& lo,
                         const std::vector<double>& hi,
                         std::int64_t iteration_limit = 2'000'000) {
  Simplex s(model, lo, hi);
  return s.solve(model.objective(), model.minimize(), iteration_limit);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Branch and bound
// ---------------------------------------------------------------------------

inline double relative_gap_tol(double incumbent_obj) {
  return std::max(1e-9, 1e-6 * std::abs(incumbent_obj));
}

namespace detail {

// Iterative activity-based bound tightening. Fixed formula binaries
// propagate through indicator and junction rows, which keeps the search
// tree small and often proves infeasibility without any LP call.
// Returns false when the bounds cross (node infeasible).
inline bool tighten_bounds(const MipModel& model, std::vector<double>& lo,
                           std::vector<double>& hi) {
  const auto& vars = model.variables();
  const auto& rows = model.rows();
  for (int pass = 0; pass < 20; ++pass) {
    bool changed = false;
    for (const auto& row : rows) {
      double minact = 0.0, maxact = 0.0;
      for (const auto& [v, c] : row.expr.terms) {
        minact += c * (c >= 0 ? lo[v] : hi[v]);
        maxact += c * (c >= 0 ? hi[v] : lo[v]);
      }
      const bool need_leq =
          row.sense == RowSense::Leq || row.sense == RowSense::Eq;
      const bool need_geq =
          row.sense == RowSense::Geq || row.sense == RowSense::Eq;
      if (need_leq && minact > row.rhs + 1e-9) return false;
      if (need_geq && maxact < row.rhs - 1e-9) return false;

      for (const auto& [v, c] : row.expr.terms) {
        if (c == 0.0) continue;
        if (need_leq) {
          // c*x <= rhs - (minact - own min contribution)
          double rest = minact - c * (c >= 0 ? lo[v] : hi[v]);
          double bound = (row.rhs - rest) / c;
          if (c > 0 && bound < hi[v] - 1e-12) {
            hi[v] = bound;
            changed = true;
          } else if (c < 0 && bound > lo[v] + 1e-12) {
            lo[v] = bound;
            changed = true;
          }
        }
        if (need_geq) {
          double rest = maxact - c * (c >= 0 ? hi[v] : lo[v]);
          double bound = (row.rhs - rest) / c;
          if (c > 0 && bound > lo[v] + 1e-12) {
            lo[v] = bound;
            changed = true;
          } else if (c < 0 && bound < hi[v] - 1e-12) {
            hi[v] = bound;
            changed = true;
          }
        }
      }
    }
    // Snap binaries and detect crossed bounds.
    for (size_t v = 0; v < vars.size(); ++v) {
      if (vars[v].binary) {
        if (hi[v] < 1.0 - 1e-6 && hi[v] != 0.0) {
          hi[v] = 0.0;
          changed = true;
        }
        if (lo[v] > 1e-6 && lo[v] != 1.0) {
          lo[v] = 1.0;
          changed = true;
        }
      }
      if (lo[v] > hi[v] + 1e-9) return false;
      if (lo[v] > hi[v]) lo[v] = hi[v];
    }
    if (!changed) break;
  }
  return true;
}

}  // namespace detail

// Depth-first branch and bound on the binary variables, most-fractional
// branching with lowest-index tie-break, best-bound reorder of the open list
// every 64 nodes. Feasibility queries (no objective) stop at the first
// integral point.
inline SolveResult solve(const MipModel& model, SolveBudget budget = {}) {
  const auto& vars = model.variables();
  const int nvars = static_cast<int>(vars.size());
  const bool has_obj = model.has_objective();
  // Internally minimize; flip at the end for maximization problems.
  const bool flip = has_obj && !model.minimize();
  const auto t0 = std::chrono::steady_clock::now();

  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
  };

  struct Node {
    std::vector<std::pair<VarId, int>> fixings;  // binary -> 0/1
    double bound = -std::numeric_limits<double>::infinity();
  };

  SolveResult result;
  std::deque<Node> open;
  open.push_back({});

  std::vector<double> incumbent;
  double incumbent_obj = std::numeric_limits<double>::infinity();
  bool have_incumbent = false;

  std::vector<double> lo(nvars), hi(nvars);
  std::int64_t since_reorder = 0;

  while (!open.empty()) {
    if (result.stats.nodes >= budget.max_nodes ||
        elapsed() > budget.max_seconds) {
      result.status = SolveStatus::CapExceeded;
      result.stats.wall_seconds = elapsed();
      return result;
    }
    if (++since_reorder >= 64) {
      since_reorder = 0;
      std::stable_sort(
          open.begin(), open.end(),
          [](const Node& a, const Node& b) { return a.bound < b.bound; });
    }

    Node node = std::move(open.front());
    open.pop_front();
    ++result.stats.nodes;

    if (have_incumbent &&
        node.bound >= incumbent_obj - relative_gap_tol(incumbent_obj))
      continue;

    for (int j = 0; j < nvars; ++j) {
      lo[j] = vars[j].lower;
      hi[j] = vars[j].upper;
    }
    for (const auto& [v, val] : node.fixings) lo[v] = hi[v] = val;
    if (!detail::tighten_bounds(model, lo, hi)) continue;

    auto lp = detail::solve_lp(model, lo, hi);
    result.stats.lp_iterations += lp.iterations;
    if (lp.status == detail::LpStatus::IterationLimit) {
      result.status = SolveStatus::CapExceeded;
      result.stats.wall_seconds = elapsed();
      return result;
    }
    if (lp.status == detail::LpStatus::Infeasible) continue;

    const double node_min = has_obj ? (flip ? -lp.objective : lp.objective)
                                    : 0.0;
    if (have_incumbent &&
        node_min >= incumbent_obj - relative_gap_tol(incumbent_obj))
      continue;

    // Most fractional binary, ties by lowest index.
    int branch_var = -1;
    double best_frac = 1e-6;
    for (int j = 0; j < nvars; ++j) {
      if (!vars[j].binary) continue;
      double f = std::abs(lp.x[j] - std::round(lp.x[j]));
      if (f > best_frac + 1e-12) {
        best_frac = f;
        branch_var = j;
      }
    }

    if (branch_var < 0) {
      // Certify the incumbent: near-integral relaxations can hide row
      // violations of the same order as the integrality tolerance, so the
      // LP is re-solved with every binary pinned to its rounded value.
      std::vector<double> clo = lo, chi = hi;
      for (int j = 0; j < nvars; ++j)
        if (vars[j].binary) clo[j] = chi[j] = std::round(lp.x[j]);
      auto exact = detail::solve_lp(model, clo, chi);
      result.stats.lp_iterations += exact.iterations;
      if (exact.status == detail::LpStatus::Optimal) {
        std::vector<double> x = exact.x;
        for (int j = 0; j < nvars; ++j)
          if (vars[j].binary) x[j] = std::round(x[j]);
        if (!has_obj) {
          result.status = SolveStatus::Feasible;
          result.assignment = std::move(x);
          result.stats.wall_seconds = elapsed();
          return result;
        }
        double exact_min = flip ? -exact.objective : exact.objective;
        if (exact_min < incumbent_obj) {
          incumbent_obj = exact_min;
          incumbent = std::move(x);
          have_incumbent = true;
        }
        continue;
      }
      // Rounding failed: the relaxation sat within tolerance of an integer
      // point that is not feasible. Pin an undecided binary both ways.
      std::vector<bool> pinned(nvars, false);
      for (const auto& [v, val] : node.fixings) pinned[v] = true;
      for (int j = 0; j < nvars && branch_var < 0; ++j)
        if (vars[j].binary && !pinned[j]) branch_var = j;
      if (branch_var < 0) continue;  // everything pinned: genuinely infeasible
    }

    Node down = node, up = node;
    down.fixings.emplace_back(branch_var, 0);
    up.fixings.emplace_back(branch_var, 1);
    down.bound = up.bound = has_obj ? node_min : node.bound;
    // Depth-first, exploring the side the relaxation leans toward first.
    if (lp.x[branch_var] >= 0.5) {
      open.push_front(std::move(down));
      open.push_front(std::move(up));
    } else {
      open.push_front(std::move(up));
      open.push_front(std::move(down));
    }
  }

  result.stats.wall_seconds = elapsed();
  if (have_incumbent) {
    result.status = SolveStatus::Feasible;
    result.assignment = std::move(incumbent);
    result.objective = flip ? -incumbent_obj : incumbent_obj;
  } else {
    result.status = SolveStatus::Infeasible;
  }
  return result;
}

}  // namespace stostl
