#include "stostl/parser.hpp"

#include "helpers.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <random>

using namespace stostl;

TEST_CASE("chance atom with implicit indexing") {
  auto f = parse_formula("P{ x1 - 1 <= 0 } >= 0.7");
  REQUIRE(f->kind == FormulaKind::Atom);
  CHECK_FALSE(f->pred.deterministic);
  CHECK(f->pred.p == Catch::Approx(0.7));
  REQUIRE(f->pred.mu.terms.size() == 1);
  CHECK(f->pred.mu.terms[0].ref.kind == SignalKind::State);
  CHECK(f->pred.mu.terms[0].ref.index == 0);
  CHECK(f->pred.mu.terms[0].coeff == Catch::Approx(1.0));
  CHECK(f->pred.mu.constant == Catch::Approx(-1.0));

  auto g = parse_formula("P{ x[1] - 1 <= 0 } >= 0.7");
  CHECK(equal(*f, *g));
}

TEST_CASE("battery-style temporal atom") {
  auto f = parse_formula("G[1,20] P{ 0.3 - B1 <= 0 } >= 0.95");
  REQUIRE(f->kind == FormulaKind::Globally);
  CHECK(f->t1 == 1);
  CHECK(f->t2 == 20);
  REQUIRE(f->children[0]->kind == FormulaKind::Atom);
  const auto& pred = f->children[0]->pred;
  CHECK(pred.p == Catch::Approx(0.95));
  REQUIRE(pred.mu.terms.size() == 1);
  CHECK(pred.mu.terms[0].ref.kind == SignalKind::State);  // B1 == x[1]
  CHECK(pred.mu.terms[0].ref.index == 0);
  CHECK(pred.mu.terms[0].coeff == Catch::Approx(-1.0));
  CHECK(pred.mu.constant == Catch::Approx(0.3));
}

TEST_CASE("negated tautology parses and evaluates") {
  auto f = parse_formula("!(x[1] <= 1) || (x[1] <= 1)");
  REQUIRE(f->kind == FormulaKind::Or);
  auto atoms = collect_atoms(*f);
  REQUIRE(atoms.size() == 1);
  for (bool v : {false, true}) {
    TruthTrace t{{v}};
    CHECK(eval_on_trace(*f, atoms, t, 0));
  }
}

TEST_CASE("operator precedence and until at the or level") {
  // ! binds tighter than &&, which binds tighter than ||, then ->.
  auto f = parse_formula("!x[1] <= 0 && x[2] <= 0 || x[1] <= 1 -> x[2] <= 2");
  REQUIRE(f->kind == FormulaKind::Implies);
  REQUIRE(f->children[0]->kind == FormulaKind::Or);
  CHECK(f->children[0]->children[0]->kind == FormulaKind::And);

  auto u = parse_formula("(x[1] <= 0) U[1,3] (x[2] <= 0)");
  REQUIRE(u->kind == FormulaKind::Until);
  CHECK(u->t1 == 1);
  CHECK(u->t2 == 3);

  auto w = parse_formula("(x[1] <= 0) W[0,2] (x[2] <= 0)");
  CHECK(w->kind == FormulaKind::WeakUntil);
}

TEST_CASE("strict comparisons pick up the epsilon margin") {
  auto f = parse_formula("x[1] < 2");
  REQUIRE(f->kind == FormulaKind::Atom);
  CHECK(f->pred.mu.constant == Catch::Approx(-2.0 + kEpsilon));
  auto g = parse_formula("x[1] > 2");  // 2 - x1 + eps <= 0
  CHECK(g->pred.mu.constant == Catch::Approx(2.0 + kEpsilon));
  CHECK(g->pred.mu.terms[0].coeff == Catch::Approx(-1.0));
}

TEST_CASE("parse errors carry location and reasons") {
  CHECK_THROWS_AS(parse_formula("P{ x[1] <= 0 } >= 1.5"), ParseError);
  CHECK_THROWS_AS(parse_formula("G[3,1] x[1] <= 0"), ParseError);
  CHECK_THROWS_AS(parse_formula("G[-1,2] x[1] <= 0"), ParseError);
  CHECK_THROWS_AS(parse_formula("x[1] <="), ParseError);
  CHECK_THROWS_AS(parse_formula("x[0] <= 1"), ParseError);
  CHECK_THROWS_AS(parse_formula("quux <= 1"), ParseError);
  try {
    parse_formula("x[1] <= 0 &&\n  (x[2] <= ) ");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line == 2);
    CHECK(e.column > 0);
  }
}

TEST_CASE("formula print/parse round-trip") {
  std::mt19937_64 gen(31);
  int done = 0;
  while (done < 500) {
    auto f = testutil::random_formula(gen, 4, 3, 3);
    ++done;
    auto printed = to_string(*f);
    INFO(printed);
    auto back = parse_formula(printed);
    REQUIRE(equal(*f, *back));
  }
}

namespace {

const char* kExample1Project = R"(
# Example contract over a 2-state system with control-dependent noise.
system plant {
  class: linear_gaussian;
  nx: 2; nu: 2; nw: 2;
  A: [1, 1; 0, 1];
  Bbar: [1, 0; 0, 1];
  Btilde[1]: [0.3, 0; 0, 0.3];
  Btilde[2]: [0, -0.2; -0.2, 0];
  wbar: [0, 0];
  Theta: [1, 0; 0, 1];
  x0: free([-10, 10; -10, 10]);
  u_bounds: [-5, 5; -5, 5];
}
contract C1 over plant {
  assume: 1 - x[1] <= 0 && x[1] - 2 <= 0;
  guarantee: !(G[2,2] P{ x[1] - 1 <= 0 } >= 0.7);
}
task check_compatibility(C1) expect Holds;
task check_consistency(C1) expect Holds;
)";

}  // namespace

TEST_CASE("Example 1 project file resolves") {
  auto pf = parse_project(kExample1Project);
  REQUIRE(pf.systems.size() == 1);
  REQUIRE(pf.contracts.size() == 1);
  REQUIRE(pf.tasks.size() == 2);
  const auto& sys = pf.system("plant");
  CHECK(sys.is_linear_gaussian());
  CHECK(sys.nx() == 2);
  CHECK(sys.linear_gaussian().noise_dim() == 2);
  CHECK_FALSE(sys.x0().fixed);
  CHECK(sys.input_upper[0] == Catch::Approx(5.0));
  CHECK(pf.tasks[0].expect == Outcome::Holds);
  CHECK(pf.tasks[0].name == "t1_check_compatibility_C1");
}

TEST_CASE("empty task list is fine") {
  auto pf = parse_project(
      "system s { class: measurement_noise; nx: 1; nu: 1;\n"
      "  A: [1]; B: [1]; wbar: [0, 0]; Theta: [0.1, 0; 0, 0.1];\n"
      "  x0: [0.5]; }\n");
  CHECK(pf.tasks.empty());
  CHECK(pf.system("s").is_measurement_noise());
}

TEST_CASE("markov jump project block") {
  auto pf = parse_project(R"(
system chain {
  class: markov_jump;
  nx: 1; nu: 1; modes: 2;
  mode[0] { A: [0.9]; B: [1]; zeta: [0]; }
  mode[1] { A: [1.1]; B: [0.5]; zeta: [0.1]; }
  P: [0.6, 0.4; 0.2, 0.8];
  init: [1, 0];
  x0: [0];
}
contract C over chain {
  assume: true;
  guarantee: G[0,2] P{ x[1] - 5 <= 0 } >= 0.8;
}
task check_consistency(C);
)");
  const auto& sys = pf.system("chain");
  REQUIRE(sys.is_markov_jump());
  CHECK(sys.markov_jump().mode_count() == 2);
  CHECK(sys.markov_jump().transition(1, 1) == Catch::Approx(0.8));
}

TEST_CASE("project cross-checks") {
  // Undeclared system.
  CHECK_THROWS_AS(parse_project("contract C over ghost { assume: true; "
                                "guarantee: true; }"),
                  ParseError);
  // Dimension mismatch in a matrix.
  CHECK_THROWS_AS(parse_project(
                      "system s { class: linear_gaussian; nx: 2; nu: 1;\n"
                      "  A: [1, 0; 0, 1]; Bbar: [1; 1];\n"
                      "  Btilde[1]: [1, 1; 1, 1]; x0: [0; 0]; }"),
                  ParseError);
  // Signal index beyond the state dimension.
  CHECK_THROWS(parse_project(
      "system s { class: linear_gaussian; nx: 1; nu: 1; A: [1]; Bbar: [1];\n"
      "  x0: [0]; }\n"
      "contract C over s { assume: x[2] <= 1; guarantee: true; }"));
  // Duplicate names.
  CHECK_THROWS_AS(
      parse_project("system s { class: measurement_noise; nx: 1; nu: 1;\n"
                    "  A: [1]; B: [1]; wbar: [0,0]; Theta: [1,0;0,1];\n"
                    "  x0: [0]; }\n"
                    "system s { class: measurement_noise; nx: 1; nu: 1;\n"
                    "  A: [1]; B: [1]; wbar: [0,0]; Theta: [1,0;0,1];\n"
                    "  x0: [0]; }"),
      ParseError);
  // Noise atoms over a non-measurement-noise system.
  CHECK_THROWS(parse_project(
      "system s { class: linear_gaussian; nx: 1; nu: 1; A: [1]; Bbar: [1];\n"
      "  x0: [0]; }\n"
      "contract C over s { assume: true; guarantee: P{ w[1] <= 0 } >= 0.5; }"));
  // Refinement across different systems.
  CHECK_THROWS(parse_project(
      "system a { class: measurement_noise; nx: 1; nu: 1; A: [1]; B: [1];\n"
      "  wbar: [0,0]; Theta: [1,0;0,1]; x0: [0]; }\n"
      "system b { class: measurement_noise; nx: 1; nu: 1; A: [1]; B: [1];\n"
      "  wbar: [0,0]; Theta: [1,0;0,1]; x0: [0]; }\n"
      "contract CA over a { assume: true; guarantee: true; }\n"
      "contract CB over b { assume: true; guarantee: true; }\n"
      "task check_refinement(CA, CB);"));
}

TEST_CASE("aliases bind names to signals") {
  auto pf = parse_project(R"(
system batt {
  class: linear_gaussian;
  nx: 2; nu: 1; nw: 1;
  alias B1 = x[1];
  alias B2 = x[2];
  A: [1, 0; 0, 1];
  Bbar: [0.1; 0.1];
  zetatilde[1]: [0.01; 0.01];
  x0: [0.5; 0.5];
}
contract C over batt {
  assume: 0.2 - B1 <= 0;
  guarantee: G[1,3] P{ 0.3 - B2 <= 0 } >= 0.95;
}
)");
  const auto& g = *pf.contracts[0].guarantee;
  REQUIRE(g.kind == FormulaKind::Globally);
  const auto& pred = g.children[0]->pred;
  CHECK(pred.mu.terms[0].ref.index == 1);  // B2 -> x[2]
}

namespace {

ProjectFile random_project(std::mt19937_64& gen) {
  std::ostringstream os;
  std::uniform_real_distribution<double> cd(-2.0, 2.0);
  os.precision(17);
  int nsys = 1 + (int)(gen() % 2);
  for (int s = 0; s < nsys; ++s) {
    int cls = (int)(gen() % 3);
    os << "system s" << s << " {\n";
    if (cls == 0) {
      os << "  class: linear_gaussian; nx: 2; nu: 1; nw: 1;\n";
      os << "  A: [" << cd(gen) << ", " << cd(gen) << "; 0, " << cd(gen)
         << "];\n";
      os << "  Bbar: [" << cd(gen) << "; " << cd(gen) << "];\n";
      os << "  Btilde[1]: [" << cd(gen) << "; 0];\n";
      os << "  Theta: [" << std::abs(cd(gen)) + 0.1 << "];\n";
    } else if (cls == 1) {
      os << "  class: markov_jump; nx: 1; nu: 1; modes: 2;\n";
      os << "  mode[0] { A: [" << cd(gen) << "]; B: [1]; zeta: [0]; }\n";
      os << "  mode[1] { A: [" << cd(gen) << "]; B: [0.5]; zeta: [0.1]; }\n";
      os << "  P: [0.5, 0.5; 0.25, 0.75];\n  init: [0.5, 0.5];\n";
    } else {
      os << "  class: measurement_noise; nx: 1; nu: 1;\n";
      os << "  A: [" << cd(gen) << "]; B: [1];\n";
      os << "  wbar: [" << cd(gen) << ", " << cd(gen) << "];\n";
      os << "  Theta: [0.3, 0.05; 0.05, 0.2];\n";
    }
    if (gen() % 2) {
      os << "  x0: [0.25" << (cls == 0 ? "; -0.5" : "") << "];\n";
    } else {
      os << "  x0: free([-3, 3" << (cls == 0 ? "; -2, 2" : "") << "]);\n";
    }
    os << "  u_bounds: [-4, 4];\n}\n";
    double shift = cd(gen);
    os << "contract C" << s << " over s" << s << " {\n";
    os << "  assume: x[1] " << (shift < 0 ? "- " : "+ ") << std::abs(shift)
       << " <= 1;\n";
    os << "  guarantee: G[0,2] P{ x[1] - " << std::abs(cd(gen)) + 1
       << " <= 0 } >= 0.8;\n}\n";
    if (gen() % 2) os << "task check_compatibility(C" << s << ");\n";
    if (gen() % 2)
      os << "task simulate(C" << s << ", runs=10, seed=7, steps=3);\n";
  }
  return parse_project(os.str());
}

}  // namespace

TEST_CASE("project print/parse round-trip is a fixed point") {
  std::mt19937_64 gen(1234);
  for (int it = 0; it < 60; ++it) {
    auto pf = random_project(gen);
    std::string once = print_project(pf);
    auto back = parse_project(once);
    std::string twice = print_project(back);
    REQUIRE(once == twice);
  }
}
