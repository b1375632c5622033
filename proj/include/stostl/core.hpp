#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace stostl {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Strictness margin shared by the whole tool: strict inequalities and
// negated chance atoms are rewritten as weak inequalities with this slack.
inline constexpr double kEpsilon = 1e-6;

// Default box for decision variables that carry no explicit bounds.
// Big-M soundness requires every continuous variable to be bounded.
inline constexpr double kDefaultBound = 1e4;

// Matrices are accepted as PSD when eigenvalues stay above this floor;
// anything in [-kPsdTolerance, 0) is clamped to zero.
inline constexpr double kPsdTolerance = 1e-10;

// Three-valued result of the contract decision procedures.
enum class Outcome { Holds, Fails, Unknown };

inline const char* to_string(Outcome o) {
  switch (o) {
    case Outcome::Holds:
      return "Holds";
    case Outcome::Fails:
      return "Fails";
    case Outcome::Unknown:
      return "Unknown";
  }
  return "Unknown";
}

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParseError : Error {
  int line = 0;
  int column = 0;
  ParseError(const std::string& msg, int line_, int column_)
      : Error(msg + " (line " + std::to_string(line_) + ", column " +
              std::to_string(column_) + ")"),
        line(line_),
        column(column_) {}
};

struct ModelError : Error {
  using Error::Error;
};

struct EncodeError : Error {
  using Error::Error;
};

struct SolverError : Error {
  using Error::Error;
};

}  // namespace stostl
