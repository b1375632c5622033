#pragma once

// Text front-end: StSTL formulas, system declarations, contracts and task
// lists. The grammar is documented in the README; this parser is the
// normative reference.

#include "stostl/core.hpp"
#include "stostl/formula.hpp"
#include "stostl/models.hpp"

#include <cctype>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace stostl {

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

namespace detail {

struct Token {
  enum Kind { Ident, Number, Punct, End } kind = End;
  std::string text;
  int line = 1, col = 1;
};

class Lexer {
 public:
  explicit Lexer(const std::string& src) : src_(src) { advance(); }

  const Token& peek() const { return tok_; }

  Token next() {
    Token t = tok_;
    advance();
    return t;
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError(msg, tok_.line, tok_.col);
  }

  bool accept(const std::string& punct_or_word) {
    if (tok_.text == punct_or_word && tok_.kind != Token::End) {
      advance();
      return true;
    }
    return false;
  }

  void expect(const std::string& s) {
    if (!accept(s)) fail("expected '" + s + "', found '" + tok_.text + "'");
  }

  bool at_end() const { return tok_.kind == Token::End; }

 private:
  void advance() {
    // Skip whitespace and # comments.
    while (pos_ < src_.size()) {
      char c = src_[pos_];
      if (c == '\n') {
        ++line_;
        col_ = 1;
        ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++col_;
        ++pos_;
      } else if (c == '#') {
        while (pos_ < src_.size() && src_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
    tok_ = Token{Token::End, "", line_, col_};
    if (pos_ >= src_.size()) return;

    char c = src_[pos_];
    int start_col = col_;
    auto take = [&](size_t n) {
      std::string s = src_.substr(pos_, n);
      pos_ += n;
      col_ += static_cast<int>(n);
      return s;
    };

    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      size_t n = 0;
      while (pos_ + n < src_.size() &&
             (std::isalnum(static_cast<unsigned char>(src_[pos_ + n])) ||
              src_[pos_ + n] == '_'))
        ++n;
      tok_ = Token{Token::Ident, take(n), line_, start_col};
      return;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '.' && pos_ + 1 < src_.size() &&
         std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))) {
      size_t n = 0;
      bool seen_dot = false, seen_exp = false;
      while (pos_ + n < src_.size()) {
        char d = src_[pos_ + n];
        if (std::isdigit(static_cast<unsigned char>(d))) {
          ++n;
        } else if (d == '.' && !seen_dot && !seen_exp) {
          seen_dot = true;
          ++n;
        } else if ((d == 'e' || d == 'E') && !seen_exp && n > 0) {
          seen_exp = true;
          ++n;
          if (pos_ + n < src_.size() &&
              (src_[pos_ + n] == '+' || src_[pos_ + n] == '-'))
            ++n;
        } else {
          break;
        }
      }
      tok_ = Token{Token::Number, take(n), line_, start_col};
      return;
    }
    // Multi-char punctuation first.
    for (const char* p : {"&&", "||", "->", "<=", ">=", "=="}) {
      if (src_.compare(pos_, 2, p) == 0) {
        tok_ = Token{Token::Punct, take(2), line_, start_col};
        return;
      }
    }
    tok_ = Token{Token::Punct, take(1), line_, start_col};
  }

  const std::string& src_;
  size_t pos_ = 0;
  int line_ = 1, col_ = 1;
  Token tok_;
};

}  // namespace detail

// Optional name -> signal mapping for formulas written with named signals.
using SignalAliases = std::map<std::string, SignalRef>;

// ---------------------------------------------------------------------------
// Formula parser
// ---------------------------------------------------------------------------

namespace detail {

class FormulaParser {
 public:
  FormulaParser(Lexer& lex, const SignalAliases& aliases)
      : lex_(lex), aliases_(aliases) {}

  FormulaPtr parse() { return parse_implied(); }

 private:
  FormulaPtr parse_implied() {
    FormulaPtr lhs = parse_ored();
    if (lex_.accept("->")) return Formula::implies(lhs, parse_implied());
    return lhs;
  }

  FormulaPtr parse_ored() {
    FormulaPtr lhs = parse_anded();
    while (true) {
      if (lex_.accept("||")) {
        lhs = Formula::disj(lhs, parse_anded());
      } else if (lex_.peek().kind == Token::Ident &&
                 (lex_.peek().text == "U" || lex_.peek().text == "W")) {
        bool weak = lex_.next().text == "W";
        auto [t1, t2] = parse_interval();
        FormulaPtr rhs = parse_anded();
        lhs = weak ? Formula::weak_until(t1, t2, lhs, rhs)
                   : Formula::until(t1, t2, lhs, rhs);
      } else {
        return lhs;
      }
    }
  }

  FormulaPtr parse_anded() {
    FormulaPtr lhs = parse_unary();
    while (lex_.accept("&&")) lhs = Formula::conj(lhs, parse_unary());
    return lhs;
  }

  FormulaPtr parse_unary() {
    const Token& t = lex_.peek();
    if (t.text == "!") {
      lex_.next();
      return Formula::negation(parse_unary());
    }
    if (t.kind == Token::Ident && (t.text == "G" || t.text == "F")) {
      bool glob = t.text == "G";
      lex_.next();
      auto [t1, t2] = parse_interval();
      FormulaPtr sub = parse_unary();
      return glob ? Formula::globally(t1, t2, sub)
                  : Formula::eventually(t1, t2, sub);
    }
    if (t.text == "(") {
      lex_.next();
      FormulaPtr f = parse_implied();
      lex_.expect(")");
      return f;
    }
    if (t.kind == Token::Ident && t.text == "true") {
      lex_.next();
      return formula_true();
    }
    if (t.kind == Token::Ident && t.text == "false") {
      lex_.next();
      return formula_false();
    }
    return parse_atom();
  }

  std::pair<int, int> parse_interval() {
    lex_.expect("[");
    int t1 = parse_int();
    lex_.expect(",");
    int t2 = parse_int();
    lex_.expect("]");
    if (t1 < 0 || t2 < t1) lex_.fail("interval must satisfy 0 <= t1 <= t2");
    return {t1, t2};
  }

  int parse_int() {
    const Token& t = lex_.peek();
    if (t.kind != Token::Number) lex_.fail("expected integer");
    int v = std::atoi(t.text.c_str());
    lex_.next();
    return v;
  }

  double parse_number() {
    bool neg = lex_.accept("-");
    const Token& t = lex_.peek();
    if (t.kind != Token::Number) lex_.fail("expected number");
    double v = std::strtod(t.text.c_str(), nullptr);
    lex_.next();
    return neg ? -v : v;
  }

  FormulaPtr parse_atom() {
    if (lex_.peek().kind == Token::Ident && lex_.peek().text == "P") {
      lex_.next();
      lex_.expect("{");
      LinExpr mu = parse_comparison();
      lex_.expect("}");
      bool strict = false;
      if (lex_.accept(">")) {
        strict = true;
      } else {
        lex_.expect(">=");
      }
      double p = parse_number();
      if (p < 0.0 || p > 1.0) lex_.fail("probability literal outside [0,1]");
      if (strict) p = std::min(1.0, p + kEpsilon);
      return Formula::atom(chance(std::move(mu), p));
    }
    return Formula::atom(deterministic(parse_comparison()));
  }

  // linexpr (<=|<|>=|>) linexpr, normalized into "mu <= 0" form; strict
  // comparisons are rewritten with the shared epsilon margin.
  LinExpr parse_comparison() {
    LinExpr lhs = parse_linexpr();
    std::string op;
    for (const char* cand : {"<=", "<", ">=", ">"}) {
      if (lex_.accept(cand)) {
        op = cand;
        break;
      }
    }
    if (op.empty()) lex_.fail("expected comparison operator");
    LinExpr rhs = parse_linexpr();
    LinExpr mu;
    auto merge = [&](const LinExpr& e, double sign) {
      for (const auto& t : e.terms) mu.add(t.ref.kind, t.ref.index, sign * t.coeff);
      mu.constant += sign * e.constant;
    };
    if (op == "<=" || op == "<") {
      merge(lhs, 1.0);
      merge(rhs, -1.0);
    } else {
      merge(rhs, 1.0);
      merge(lhs, -1.0);
    }
    if (op == "<" || op == ">") mu.constant += kEpsilon;
    return mu;
  }

  LinExpr parse_linexpr() {
    LinExpr e;
    double sign = 1.0;
    if (lex_.accept("-")) sign = -1.0;
    parse_term(e, sign);
    while (true) {
      if (lex_.accept("+")) {
        parse_term(e, 1.0);
      } else if (lex_.accept("-")) {
        parse_term(e, -1.0);
      } else {
        return e;
      }
    }
  }

  void parse_term(LinExpr& e, double sign) {
    const Token& t = lex_.peek();
    if (t.kind == Token::Number) {
      double c = std::strtod(t.text.c_str(), nullptr);
      lex_.next();
      lex_.accept("*");
      if (lex_.peek().kind == Token::Ident && lex_.peek().text != "U" &&
          lex_.peek().text != "W") {
        SignalRef ref = parse_signal();
        e.add(ref.kind, ref.index, sign * c);
      } else {
        e.constant += sign * c;
      }
      return;
    }
    if (t.kind == Token::Ident) {
      SignalRef ref = parse_signal();
      e.add(ref.kind, ref.index, sign);
      return;
    }
    lex_.fail("expected term");
  }

  SignalRef parse_signal() {
    Token t = lex_.next();
    std::string name = t.text;
    if (lex_.accept("[")) {
      int idx = parse_int();
      lex_.expect("]");
      if (idx < 1) lex_.fail("signal indices are 1-based");
      SignalKind kind;
      if (name == "x")
        kind = SignalKind::State;
      else if (name == "u")
        kind = SignalKind::Input;
      else if (name == "w")
        kind = SignalKind::Noise;
      else
        lex_.fail("unknown signal family '" + name + "'");
      return {kind, idx - 1};
    }
    if (auto it = aliases_.find(name); it != aliases_.end()) return it->second;
    // Sugar: x3 == x[3], u1 == u[1], w2 == w[2]; other alphabetic prefixes
    // with a digit suffix read as state components (B1 == x[1]).
    size_t d = name.find_first_of("0123456789");
    if (d != std::string::npos && d > 0) {
      int idx = std::atoi(name.c_str() + d);
      if (idx < 1) lex_.fail("signal indices are 1-based");
      std::string prefix = name.substr(0, d);
      if (prefix == "u") return {SignalKind::Input, idx - 1};
      if (prefix == "w") return {SignalKind::Noise, idx - 1};
      return {SignalKind::State, idx - 1};
    }
    lex_.fail("unknown signal name '" + name + "'");
  }

  Lexer& lex_;
  const SignalAliases& aliases_;
};

}  // namespace detail

inline FormulaPtr parse_formula(const std::string& text,
                                const SignalAliases& aliases = {}) {
  detail::Lexer lex(text);
  detail::FormulaParser p(lex, aliases);
  FormulaPtr f = p.parse();
  if (!lex.at_end())
    throw ParseError("trailing input after formula: '" + lex.peek().text + "'",
                     lex.peek().line, lex.peek().col);
  return f;
}

// ---------------------------------------------------------------------------
// Project files
// ---------------------------------------------------------------------------

struct ContractDecl {
  std::string name;
  std::string system;
  FormulaPtr assumption;
  FormulaPtr guarantee;
};

struct TaskDecl {
  enum class Kind {
    CheckCompatibility,
    CheckConsistency,
    CheckRefinement,
    Synthesize,
    Simulate,
  };
  Kind kind = Kind::CheckCompatibility;
  std::string name;          // t<index>_<kind>_<contract>
  std::string contract;      // primary contract
  std::string contract2;     // refinement only: checks contract <= contract2
  int horizon = -1;          // synthesize/simulate window (-1: formula horizon)
  int steps = -1;            // simulate closed-loop length (-1: horizon)
  int runs = 0;              // simulate
  std::uint64_t seed = 0;    // simulate
  std::string objective = "none";  // none | min_input_l1
  std::optional<Vec> x0;     // synthesize/simulate initial state override
  std::optional<Outcome> expect;
};

struct ProjectFile {
  std::vector<std::pair<std::string, SystemModel>> systems;
  std::vector<ContractDecl> contracts;
  std::vector<TaskDecl> tasks;
  std::map<std::string, SignalAliases> aliases;  // per system

  const SystemModel& system(const std::string& name) const {
    for (const auto& [n, s] : systems)
      if (n == name) return s;
    throw ModelError("undeclared system '" + name + "'");
  }
  const ContractDecl& contract(const std::string& name) const {
    for (const auto& c : contracts)
      if (c.name == name) return c;
    throw ModelError("undeclared contract '" + name + "'");
  }
};

namespace detail {

class ProjectParser {
 public:
  explicit ProjectParser(const std::string& text) : lex_(text) {}

  ProjectFile parse() {
    ProjectFile pf;
    while (!lex_.at_end()) {
      Token t = lex_.next();
      if (t.text == "system") {
        parse_system(pf);
      } else if (t.text == "contract") {
        parse_contract(pf);
      } else if (t.text == "task") {
        parse_task(pf);
      } else {
        throw ParseError("expected 'system', 'contract' or 'task'", t.line,
                         t.col);
      }
    }
    resolve(pf);
    return pf;
  }

 private:
  using Token = detail::Token;

  std::string ident() {
    Token t = lex_.next();
    if (t.kind != Token::Ident)
      throw ParseError("expected identifier", t.line, t.col);
    return t.text;
  }

  double number() {
    bool neg = lex_.accept("-");
    Token t = lex_.next();
    if (t.kind != Token::Number)
      throw ParseError("expected number", t.line, t.col);
    double v = std::strtod(t.text.c_str(), nullptr);
    return neg ? -v : v;
  }

  int integer() { return static_cast<int>(number()); }

  // [a, b; c, d] row-major; vectors accept one row or one column.
  Mat matrix() {
    lex_.expect("[");
    std::vector<std::vector<double>> rows(1);
    while (true) {
      rows.back().push_back(number());
      if (lex_.accept(",")) continue;
      if (lex_.accept(";")) {
        rows.emplace_back();
        continue;
      }
      lex_.expect("]");
      break;
    }
    size_t cols = rows[0].size();
    for (const auto& r : rows)
      if (r.size() != cols)
        lex_.fail("ragged matrix literal");
    Mat m(rows.size(), cols);
    for (size_t i = 0; i < rows.size(); ++i)
      for (size_t j = 0; j < cols; ++j) m(i, j) = rows[i][j];
    return m;
  }

  Vec vector_literal() {
    Mat m = matrix();
    if (m.cols() == 1) return m.col(0);
    if (m.rows() == 1) return m.row(0).transpose();
    lex_.fail("expected a vector literal");
  }

  // Raw field values captured per system, resolved after the block closes.
  struct SystemFields {
    std::string cls;
    int nx = -1, nu = -1, nw = -1, modes = -1;
    std::map<std::string, Mat> mats;
    std::map<int, Mat> b_tilde, mode_a, mode_b;
    std::map<int, Vec> zeta_tilde, mode_zeta;
    std::optional<Vec> x0_value;
    bool x0_free = false;
    std::optional<Mat> x0_bounds;  // nx x 2
    std::optional<Mat> u_bounds;   // nu x 2
    SignalAliases aliases;
    int line = 0, col = 0;
  };

  void parse_system(ProjectFile& pf) {
    Token nt = lex_.peek();
    std::string name = ident();
    for (const auto& [n, s] : pf.systems)
      if (n == name)
        throw ParseError("duplicate system '" + name + "'", nt.line, nt.col);
    SystemFields f;
    f.line = nt.line;
    f.col = nt.col;
    lex_.expect("{");
    while (!lex_.accept("}")) {
      Token key = lex_.next();
      if (key.kind != Token::Ident)
        throw ParseError("expected field name", key.line, key.col);
      if (key.text == "alias") {
        std::string alias_name = ident();
        lex_.expect("=");
        std::string fam = ident();
        lex_.expect("[");
        int idx = integer();
        lex_.expect("]");
        lex_.expect(";");
        SignalKind kind = fam == "x"   ? SignalKind::State
                          : fam == "u" ? SignalKind::Input
                          : fam == "w" ? SignalKind::Noise
                                       : throw ParseError(
                                             "alias must target x/u/w",
                                             key.line, key.col);
        f.aliases[alias_name] = SignalRef{kind, idx - 1};
        continue;
      }
      if (key.text == "mode") {
        lex_.expect("[");
        int idx = integer();
        lex_.expect("]");
        lex_.expect("{");
        while (!lex_.accept("}")) {
          std::string sub = ident();
          lex_.expect(":");
          if (sub == "A")
            f.mode_a[idx] = matrix();
          else if (sub == "B")
            f.mode_b[idx] = matrix();
          else if (sub == "zeta")
            f.mode_zeta[idx] = vector_literal();
          else
            lex_.fail("unknown mode field '" + sub + "'");
          lex_.expect(";");
        }
        continue;
      }

      bool indexed = false;
      int index = 0;
      if (lex_.accept("[")) {
        indexed = true;
        index = integer();
        lex_.expect("]");
      }
      lex_.expect(":");
      if (key.text == "class") {
        f.cls = ident();
      } else if (key.text == "nx") {
        f.nx = integer();
      } else if (key.text == "nu") {
        f.nu = integer();
      } else if (key.text == "nw") {
        f.nw = integer();
      } else if (key.text == "modes") {
        f.modes = integer();
      } else if (key.text == "x0") {
        if (lex_.peek().kind == Token::Ident && lex_.peek().text == "free") {
          lex_.next();
          f.x0_free = true;
          if (lex_.accept("(")) {
            f.x0_bounds = matrix();
            lex_.expect(")");
          }
        } else {
          f.x0_value = vector_literal();
        }
      } else if (key.text == "u_bounds") {
        f.u_bounds = matrix();
      } else if (key.text == "Btilde") {
        if (!indexed) lex_.fail("Btilde requires an index");
        f.b_tilde[index] = matrix();
      } else if (key.text == "zetatilde") {
        if (!indexed) lex_.fail("zetatilde requires an index");
        f.zeta_tilde[index] = vector_literal();
      } else {
        f.mats[key.text] = matrix();
      }
      lex_.expect(";");
    }
    pf.aliases[name] = f.aliases;
    pf.systems.emplace_back(name, build_system(f));
  }

  template <typename T>
  T field_or(const SystemFields& f, const std::string& key, const T& dflt) {
    auto it = f.mats.find(key);
    if (it == f.mats.end()) return dflt;
    if constexpr (std::is_same_v<T, Vec>) {
      const Mat& m = it->second;
      if (m.cols() == 1) return Vec(m.col(0));
      if (m.rows() == 1) return Vec(m.row(0).transpose());
      throw ModelError("field '" + key + "' must be a vector");
    } else {
      return it->second;
    }
  }

  const Mat& require_mat(const SystemFields& f, const std::string& key) {
    auto it = f.mats.find(key);
    if (it == f.mats.end())
      throw ParseError("system is missing field '" + key + "'", f.line, f.col);
    return it->second;
  }

  Vec require_vec(const SystemFields& f, const std::string& key) {
    const Mat& m = require_mat(f, key);
    if (m.cols() == 1) return m.col(0);
    if (m.rows() == 1) return m.row(0).transpose();
    throw ParseError("field '" + key + "' must be a vector", f.line, f.col);
  }

  SystemModel build_system(const SystemFields& f) {
    if (f.nx <= 0 || f.nu <= 0)
      throw ParseError("system requires positive nx and nu", f.line, f.col);

    auto initial = [&](int nx) {
      if (f.x0_value) {
        if (f.x0_value->size() != nx)
          throw ParseError("x0 dimension mismatch: expected " +
                               std::to_string(nx) + " entries",
                           f.line, f.col);
        return InitialState::at(*f.x0_value);
      }
      if (f.x0_bounds) {
        if (f.x0_bounds->rows() != nx || f.x0_bounds->cols() != 2)
          throw ParseError("x0 bounds must be an nx-by-2 matrix", f.line,
                           f.col);
        return InitialState::free(f.x0_bounds->col(0), f.x0_bounds->col(1));
      }
      return InitialState::free(nx);
    };

    SystemModel sys;
    if (f.cls == "linear_gaussian") {
      int nw = f.nw;
      if (nw < 0) {
        nw = 0;
        for (const auto& [l, m] : f.b_tilde) nw = std::max(nw, l);
        for (const auto& [l, v] : f.zeta_tilde) nw = std::max(nw, l);
      }
      LinearGaussianSystem s;
      s.a = require_mat(f, "A");
      s.b_bar = field_or<Mat>(f, "Bbar", Mat::Identity(f.nx, f.nu));
      s.zeta_bar = field_or<Vec>(f, "zetabar", Vec::Zero(f.nx));
      for (int l = 1; l <= nw; ++l) {
        auto bt = f.b_tilde.find(l);
        s.b_tilde.push_back(bt != f.b_tilde.end() ? bt->second
                                                  : Mat::Zero(f.nx, f.nu));
        auto zt = f.zeta_tilde.find(l);
        s.zeta_tilde.push_back(zt != f.zeta_tilde.end() ? zt->second
                                                        : Vec::Zero(f.nx));
      }
      s.w_bar = field_or<Vec>(f, "wbar", Vec::Zero(nw));
      s.theta = field_or<Mat>(f, "Theta", Mat::Identity(nw, nw));
      s.x0 = initial(f.nx);
      sys = SystemModel(std::move(s));
    } else if (f.cls == "markov_jump") {
      if (f.modes <= 0)
        throw ParseError("markov_jump system requires 'modes'", f.line, f.col);
      MarkovJumpSystem s;
      for (int l = 0; l < f.modes; ++l) {
        auto a = f.mode_a.find(l);
        auto b = f.mode_b.find(l);
        if (a == f.mode_a.end() || b == f.mode_b.end())
          throw ParseError("mode[" + std::to_string(l) + "] needs A and B",
                           f.line, f.col);
        auto z = f.mode_zeta.find(l);
        s.modes.push_back(
            {a->second, b->second,
             z != f.mode_zeta.end() ? z->second : Vec::Zero(f.nx)});
      }
      s.transition = require_mat(f, "P");
      s.initial_dist = field_or<Vec>(
          f, "init", Vec::Unit(f.modes, 0));
      s.x0 = initial(f.nx);
      sys = SystemModel(std::move(s));
    } else if (f.cls == "measurement_noise") {
      MeasurementNoiseSystem s;
      s.a = require_mat(f, "A");
      s.b = require_mat(f, "B");
      s.w_bar = require_vec(f, "wbar");
      s.theta = require_mat(f, "Theta");
      s.x0 = initial(f.nx);
      sys = SystemModel(std::move(s));
    } else {
      throw ParseError("unknown system class '" + f.cls + "'", f.line, f.col);
    }

    if (f.u_bounds) {
      if (f.u_bounds->rows() != f.nu || f.u_bounds->cols() != 2)
        throw ParseError("u_bounds must be an nu-by-2 matrix", f.line, f.col);
      sys.input_lower = f.u_bounds->col(0);
      sys.input_upper = f.u_bounds->col(1);
    }
    try {
      sys.validate();
    } catch (const ModelError& e) {
      throw ParseError(e.what(), f.line, f.col);
    }
    if (sys.nx() != f.nx || sys.nu() != f.nu)
      throw ParseError("declared nx/nu do not match matrix shapes", f.line,
                       f.col);
    return sys;
  }

  void parse_contract(ProjectFile& pf) {
    Token nt = lex_.peek();
    ContractDecl c;
    c.name = ident();
    for (const auto& other : pf.contracts)
      if (other.name == c.name)
        throw ParseError("duplicate contract '" + c.name + "'", nt.line,
                         nt.col);
    lex_.expect("over");
    c.system = ident();
    const SignalAliases* aliases = nullptr;
    if (auto it = pf.aliases.find(c.system); it != pf.aliases.end())
      aliases = &it->second;
    else
      throw ParseError("contract references undeclared system '" + c.system +
                           "'",
                       nt.line, nt.col);
    lex_.expect("{");
    while (!lex_.accept("}")) {
      std::string key = ident();
      lex_.expect(":");
      FormulaParser fp(lex_, *aliases);
      FormulaPtr f = fp.parse();
      lex_.expect(";");
      if (key == "assume")
        c.assumption = f;
      else if (key == "guarantee")
        c.guarantee = f;
      else
        throw ParseError("unknown contract field '" + key + "'", nt.line,
                         nt.col);
    }
    if (!c.assumption || !c.guarantee)
      throw ParseError("contract needs both assume and guarantee", nt.line,
                       nt.col);
    pf.contracts.push_back(std::move(c));
  }

  void parse_task(ProjectFile& pf) {
    Token nt = lex_.peek();
    std::string kind = ident();
    TaskDecl t;
    if (kind == "check_compatibility")
      t.kind = TaskDecl::Kind::CheckCompatibility;
    else if (kind == "check_consistency")
      t.kind = TaskDecl::Kind::CheckConsistency;
    else if (kind == "check_refinement")
      t.kind = TaskDecl::Kind::CheckRefinement;
    else if (kind == "synthesize")
      t.kind = TaskDecl::Kind::Synthesize;
    else if (kind == "simulate")
      t.kind = TaskDecl::Kind::Simulate;
    else
      throw ParseError("unknown task kind '" + kind + "'", nt.line, nt.col);

    lex_.expect("(");
    t.contract = ident();
    if (t.kind == TaskDecl::Kind::CheckRefinement) {
      lex_.expect(",");
      t.contract2 = ident();
    }
    while (lex_.accept(",")) {
      std::string key = ident();
      lex_.expect("=");
      if (key == "horizon")
        t.horizon = integer();
      else if (key == "steps")
        t.steps = integer();
      else if (key == "runs")
        t.runs = integer();
      else if (key == "seed")
        t.seed = static_cast<std::uint64_t>(number());
      else if (key == "objective")
        t.objective = ident();
      else if (key == "x0")
        t.x0 = vector_literal();
      else
        throw ParseError("unknown task option '" + key + "'", nt.line, nt.col);
    }
    lex_.expect(")");
    if (lex_.accept("expect")) {
      std::string o = ident();
      if (o == "Holds")
        t.expect = Outcome::Holds;
      else if (o == "Fails")
        t.expect = Outcome::Fails;
      else if (o == "Unknown")
        t.expect = Outcome::Unknown;
      else
        throw ParseError("expected Holds/Fails/Unknown", nt.line, nt.col);
    }
    lex_.expect(";");
    if (t.objective != "none" && t.objective != "min_input_l1")
      throw ParseError("unknown objective '" + t.objective + "'", nt.line,
                       nt.col);

    t.name = "t" + std::to_string(pf.tasks.size() + 1) + "_" + kind + "_" +
             t.contract;
    if (!t.contract2.empty()) t.name += "_" + t.contract2;
    pf.tasks.push_back(std::move(t));
  }

  // Cross-reference and dimension checks.
  void resolve(ProjectFile& pf) {
    for (const auto& c : pf.contracts) {
      const SystemModel& sys = pf.system(c.system);
      check_formula_signals(*c.assumption, sys, c.name + ".assume");
      check_formula_signals(*c.guarantee, sys, c.name + ".guarantee");
    }
    for (const auto& t : pf.tasks) {
      const ContractDecl& c = pf.contract(t.contract);
      if (!t.contract2.empty()) {
        const ContractDecl& c2 = pf.contract(t.contract2);
        if (c.system != c2.system)
          throw ModelError("refinement task mixes systems: " + t.name);
      }
      if (t.kind == TaskDecl::Kind::Simulate && t.runs <= 0)
        throw ModelError("simulate task needs runs > 0: " + t.name);
      if (t.x0 && t.x0->size() != pf.system(c.system).nx())
        throw ModelError("task x0 dimension mismatch: " + t.name);
    }
  }

  void check_formula_signals(const Formula& f, const SystemModel& sys,
                             const std::string& where) {
    if (f.kind == FormulaKind::Atom) {
      for (const auto& t : f.pred.mu.terms) {
        int limit = 0;
        switch (t.ref.kind) {
          case SignalKind::State:
            limit = sys.nx();
            break;
          case SignalKind::Input:
            limit = sys.nu();
            break;
          case SignalKind::Noise:
            if (!sys.is_measurement_noise())
              throw ModelError(
                  where +
                  ": noise references require a measurement_noise system");
            limit = sys.measurement_noise().xi_dim();
            break;
        }
        if (t.ref.index < 0 || t.ref.index >= limit)
          throw ModelError(where + ": signal index out of range");
      }
      return;
    }
    for (const auto& c : f.children) check_formula_signals(*c, sys, where);
  }

  Lexer lex_;
};

}  // namespace detail

inline ProjectFile parse_project(const std::string& text) {
  detail::ProjectParser p(text);
  return p.parse();
}

// ---------------------------------------------------------------------------
// Printing (round-trip support)
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fmt_num(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

inline void print_matrix(std::ostringstream& os, const Mat& m) {
  os << "[";
  for (int i = 0; i < m.rows(); ++i) {
    if (i) os << "; ";
    for (int j = 0; j < m.cols(); ++j) {
      if (j) os << ", ";
      os << fmt_num(m(i, j));
    }
  }
  os << "]";
}

}  // namespace detail

inline std::string print_project(const ProjectFile& pf) {
  std::ostringstream os;
  for (const auto& [name, sys] : pf.systems) {
    os << "system " << name << " {\n";
    os << "  nx: " << sys.nx() << "; nu: " << sys.nu() << ";\n";
    auto pm = [&](const std::string& key, const Mat& m) {
      os << "  " << key << ": ";
      detail::print_matrix(os, m);
      os << ";\n";
    };
    if (sys.is_linear_gaussian()) {
      const auto& s = sys.linear_gaussian();
      os << "  class: linear_gaussian;\n";
      os << "  nw: " << s.noise_dim() << ";\n";
      pm("A", s.a);
      pm("Bbar", s.b_bar.at(0));
      pm("zetabar", s.zeta_bar.at(0));
      for (int l = 0; l < s.noise_dim(); ++l) {
        os << "  Btilde[" << l + 1 << "]: ";
        detail::print_matrix(os, s.b_tilde[l]);
        os << ";\n  zetatilde[" << l + 1 << "]: ";
        detail::print_matrix(os, s.zeta_tilde[l]);
        os << ";\n";
      }
      pm("wbar", s.w_bar.at(0));
      pm("Theta", s.theta.at(0));
    } else if (sys.is_markov_jump()) {
      const auto& s = sys.markov_jump();
      os << "  class: markov_jump;\n";
      os << "  modes: " << s.mode_count() << ";\n";
      for (int l = 0; l < s.mode_count(); ++l) {
        os << "  mode[" << l << "] { A: ";
        detail::print_matrix(os, s.modes[l].a);
        os << "; B: ";
        detail::print_matrix(os, s.modes[l].b);
        os << "; zeta: ";
        detail::print_matrix(os, s.modes[l].zeta);
        os << "; }\n";
      }
      pm("P", s.transition);
      pm("init", s.initial_dist);
    } else {
      const auto& s = sys.measurement_noise();
      os << "  class: measurement_noise;\n";
      pm("A", s.a);
      pm("B", s.b);
      pm("wbar", s.w_bar.at(0));
      pm("Theta", s.theta.at(0));
    }
    const auto& x0 = sys.x0();
    if (x0.fixed) {
      os << "  x0: ";
      detail::print_matrix(os, x0.value);
      os << ";\n";
    } else {
      Mat b(x0.lower.size(), 2);
      b.col(0) = x0.lower;
      b.col(1) = x0.upper;
      os << "  x0: free(";
      detail::print_matrix(os, b);
      os << ");\n";
    }
    Mat ub(sys.nu(), 2);
    ub.col(0) = sys.input_lower;
    ub.col(1) = sys.input_upper;
    os << "  u_bounds: ";
    detail::print_matrix(os, ub);
    os << ";\n}\n";
  }
  for (const auto& c : pf.contracts) {
    os << "contract " << c.name << " over " << c.system << " {\n";
    os << "  assume: " << to_string(*c.assumption) << ";\n";
    os << "  guarantee: " << to_string(*c.guarantee) << ";\n}\n";
  }
  for (const auto& t : pf.tasks) {
    os << "task ";
    switch (t.kind) {
      case TaskDecl::Kind::CheckCompatibility:
        os << "check_compatibility(" << t.contract;
        break;
      case TaskDecl::Kind::CheckConsistency:
        os << "check_consistency(" << t.contract;
        break;
      case TaskDecl::Kind::CheckRefinement:
        os << "check_refinement(" << t.contract << ", " << t.contract2;
        break;
      case TaskDecl::Kind::Synthesize:
        os << "synthesize(" << t.contract;
        break;
      case TaskDecl::Kind::Simulate:
        os << "simulate(" << t.contract;
        break;
    }
    if (t.horizon >= 0) os << ", horizon=" << t.horizon;
    if (t.steps >= 0) os << ", steps=" << t.steps;
    if (t.runs > 0) os << ", runs=" << t.runs;
    if (t.seed != 0) os << ", seed=" << t.seed;
    if (t.objective != "none") os << ", objective=" << t.objective;
    if (t.x0) {
      os << ", x0=";
      detail::print_matrix(os, *t.x0);
    }
    os << ")";
    if (t.expect) os << " expect " << to_string(*t.expect);
    os << ";\n";
  }
  return os.str();
}

}  // namespace stostl
