#include "stostl/formula.hpp"

#include "helpers.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <random>

using namespace stostl;
using testutil::atom_f;
using testutil::test_atom;

namespace {

// Truth lookup bridging the oracle evaluator onto a TruthTrace.
auto trace_lookup(const std::vector<ChancePredicate>& atoms,
                  const TruthTrace& trace) {
  return [&atoms, &trace](const ChancePredicate& p, int k) {
    for (size_t i = 0; i < atoms.size(); ++i)
      if (atoms[i] == p) return static_cast<bool>(trace[k][i]);
    throw std::runtime_error("unknown atom");
  };
}

}  // namespace

TEST_CASE("horizon of basic shapes") {
  auto a = atom_f(0);
  auto b = atom_f(1);
  CHECK(horizon(*a) == 0);
  CHECK(horizon(*Formula::globally(1, 3, a)) == 3);
  CHECK(horizon(*Formula::globally(1, 3, Formula::until(0, 5, a, b))) == 8);
  CHECK(horizon(*Formula::implies(Formula::eventually(0, 2, a),
                                  Formula::globally(1, 4, b))) == 4);
  CHECK(horizon(*Formula::until(2, 6, a, Formula::eventually(0, 3, b))) == 9);
}

TEST_CASE("horizon bounds semantic dependence") {
  // Perturbing the trace beyond horizon(f) never changes satisfaction.
  std::mt19937_64 gen(7);
  for (int it = 0; it < 300; ++it) {
    auto f = testutil::random_formula(gen, 3, 2, 2);
    int h = horizon(*f);
    auto atoms = collect_atoms(*f);
    auto trace = testutil::random_trace(gen, h + 4, (int)atoms.size());
    bool base = eval_on_trace(*f, atoms, trace, 0);
    auto perturbed = trace;
    for (int s = h + 1; s < (int)perturbed.size(); ++s)
      for (size_t j = 0; j < atoms.size(); ++j)
        perturbed[s][j] = !perturbed[s][j];
    CHECK(eval_on_trace(*f, atoms, perturbed, 0) == base);
  }
}

TEST_CASE("eval_on_trace matches the recursive semantics") {
  auto a = atom_f(0);
  auto b = atom_f(1);

  SECTION("globally over a window") {
    auto f = Formula::globally(0, 2, a);
    TruthTrace t{{true}, {true}, {true}};
    CHECK(eval_on_trace(*f, t, 0));
    t[1][0] = false;
    CHECK_FALSE(eval_on_trace(*f, t, 0));
  }

  SECTION("until requires the witness index") {
    // a U[1,2] b with b true only at step 2 and a true at step 1.
    auto f = Formula::until(1, 2, a, b);
    TruthTrace t{{false, false}, {true, false}, {false, true}};
    CHECK(eval_on_trace(*f, t, 0));
    t[1][0] = false;  // break the phi1 prefix
    CHECK_FALSE(eval_on_trace(*f, t, 0));
  }

  SECTION("trace too short is rejected") {
    auto f = Formula::globally(0, 3, a);
    TruthTrace t{{true}, {true}};
    CHECK_THROWS_AS(eval_on_trace(*f, t, 0), ModelError);
  }
}

TEST_CASE("eval_on_trace vs independent truth-table enumerator") {
  std::mt19937_64 gen(42);
  int cases = 0;
  while (cases < 10000) {
    auto f = testutil::random_formula(gen, 3, 2, 2);
    if (horizon(*f) > 4) continue;
    ++cases;
    auto atoms = collect_atoms(*f);
    auto trace = testutil::random_trace(gen, 5, (int)atoms.size());
    bool got = eval_on_trace(*f, atoms, trace, 0);
    bool want = testutil::oracle_eval(*f, trace_lookup(atoms, trace), 0);
    REQUIRE(got == want);
  }
}

TEST_CASE("negation flips evaluation") {
  std::mt19937_64 gen(3);
  for (int it = 0; it < 200; ++it) {
    auto f = testutil::random_formula(gen, 3, 2, 2);
    auto atoms = collect_atoms(*f);
    auto trace = testutil::random_trace(gen, horizon(*f) + 1, (int)atoms.size());
    CHECK(eval_on_trace(*Formula::negation(f), atoms, trace, 0) ==
          !eval_on_trace(*f, atoms, trace, 0));
  }
}

TEST_CASE("globally is the conjunction over offsets") {
  std::mt19937_64 gen(11);
  auto a = atom_f(0);
  auto f = Formula::globally(1, 3, a);
  auto atoms = collect_atoms(*f);
  for (int it = 0; it < 50; ++it) {
    auto trace = testutil::random_trace(gen, 4, 1);
    bool conj = trace[1][0] && trace[2][0] && trace[3][0];
    CHECK(eval_on_trace(*f, atoms, trace, 0) == conj);
  }
}

TEST_CASE("to_nnf: double negation and polarity") {
  auto a = atom_f(0);
  auto nnf = to_nnf(Formula::negation(Formula::negation(a)));
  REQUIRE(nnf->kind == NnfKind::Atom);
  CHECK_FALSE(nnf->negated);
  CHECK(nnf->pred == test_atom(0));

  auto neg = to_nnf(Formula::negation(a));
  REQUIRE(neg->kind == NnfKind::Atom);
  CHECK(neg->negated);
}

TEST_CASE("to_nnf: negated globally becomes a window disjunction") {
  auto a = atom_f(0);
  auto f = Formula::negation(Formula::globally(1, 3, a));
  auto nnf = to_nnf(f);
  // Structure: true U[1,3] (not a) — the eventually-style disjunction.
  REQUIRE(nnf->kind == NnfKind::Until);
  CHECK(nnf->t1 == 1);
  CHECK(nnf->t2 == 3);
  REQUIRE(nnf->children[0]->kind == NnfKind::Atom);
  CHECK(nnf->children[0]->pred == true_predicate());
  REQUIRE(nnf->children[1]->kind == NnfKind::Atom);
  CHECK(nnf->children[1]->negated);

  // Semantics: disjunction of not-a over offsets 1..3.
  auto atoms = collect_atoms(*nnf);
  for (int bits = 0; bits < 16; ++bits) {
    TruthTrace trace(4, std::vector<bool>(atoms.size()));
    int ai = -1;
    for (size_t j = 0; j < atoms.size(); ++j)
      if (atoms[j] == test_atom(0)) ai = (int)j;
    REQUIRE(ai >= 0);
    for (int s = 0; s < 4; ++s) trace[s][ai] = (bits >> s) & 1;
    // "true" atom must read true everywhere.
    for (size_t j = 0; j < atoms.size(); ++j)
      if (atoms[j] == true_predicate())
        for (int s = 0; s < 4; ++s) trace[s][j] = true;
    bool want = !trace[1][ai] || !trace[2][ai] || !trace[3][ai];
    CHECK(eval_on_trace(*nnf, atoms, trace, 0) == want);
  }
}

TEST_CASE("to_nnf: negated until matches brute-force semantics") {
  auto a = atom_f(0);
  auto b = atom_f(1);
  auto f = Formula::negation(Formula::until(0, 2, a, b));
  auto nnf = to_nnf(f);
  auto f_atoms = collect_atoms(*f);
  auto nnf_atoms = collect_atoms(*nnf);
  // All 2^6 valuations of (a, b) over steps 0..2.
  for (int bits = 0; bits < 64; ++bits) {
    TruthTrace ft(3, std::vector<bool>(f_atoms.size()));
    TruthTrace nt(3, std::vector<bool>(nnf_atoms.size()));
    auto set = [&](const ChancePredicate& p, int step, bool v) {
      for (size_t j = 0; j < f_atoms.size(); ++j)
        if (f_atoms[j] == p) ft[step][j] = v;
      for (size_t j = 0; j < nnf_atoms.size(); ++j)
        if (nnf_atoms[j] == p) nt[step][j] = v;
    };
    for (int s = 0; s < 3; ++s) {
      set(test_atom(0), s, (bits >> s) & 1);
      set(test_atom(1), s, (bits >> (3 + s)) & 1);
      set(true_predicate(), s, true);
    }
    bool want = testutil::oracle_eval(*f, trace_lookup(f_atoms, ft), 0);
    CHECK(eval_on_trace(*nnf, nnf_atoms, nt, 0) == want);
  }
}

TEST_CASE("to_nnf preserves evaluation on random formulas") {
  std::mt19937_64 gen(2024);
  for (int it = 0; it < 2000; ++it) {
    auto f = testutil::random_formula(gen, 5, 2, 2);
    if (horizon(*f) > 8) continue;
    auto nnf = to_nnf(f);
    CHECK(horizon(*nnf) == horizon(*f));

    // Union atom set; the NNF may introduce the "true" constant.
    auto atoms = collect_atoms(*f);
    for (const auto& p : collect_atoms(*nnf))
      if (std::find(atoms.begin(), atoms.end(), p) == atoms.end())
        atoms.push_back(p);

    auto trace = testutil::random_trace(gen, horizon(*f) + 1, (int)atoms.size());
    for (size_t j = 0; j < atoms.size(); ++j) {
      if (atoms[j] == true_predicate())
        for (auto& row : trace) row[j] = true;
      if (atoms[j] == false_predicate())
        for (auto& row : trace) row[j] = false;
    }
    bool orig = eval_on_trace(*f, atoms, trace, 0);
    bool normed = eval_on_trace(*nnf, atoms, trace, 0);
    REQUIRE(orig == normed);
  }
}

TEST_CASE("no Not above non-atoms in NNF by construction") {
  // NnfFormula has no Not node at all; checked here by walking a sample.
  std::mt19937_64 gen(5);
  auto f = testutil::random_formula(gen, 5, 2, 2);
  auto nnf = to_nnf(f);
  std::function<void(const NnfFormula&)> walk = [&](const NnfFormula& n) {
    if (n.kind != NnfKind::Atom) CHECK_FALSE(n.negated);
    for (const auto& c : n.children) walk(*c);
  };
  walk(*nnf);
}

TEST_CASE("interval validation") {
  auto a = atom_f(0);
  CHECK_THROWS_AS(Formula::globally(3, 1, a), ModelError);
  CHECK_THROWS_AS(Formula::until(-1, 2, a, a), ModelError);
  CHECK_THROWS_AS(chance(LinExpr(0.0), 1.5), ModelError);
}
