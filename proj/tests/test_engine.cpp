#include <doctest.h>

#include <random>
#include <string>
#include <vector>

#include "uninit/engine.hpp"
#include "uninit/facts.hpp"

using namespace uninit;
using namespace uninit::engine;
using facts::atom;
using facts::num;

namespace {

const char* kPathRules = R"(
  % transitive closure, plus depth accounting over the acyclic arcs
  Path(X, Y) :- Edge(X, Y).
  Path(X, Z) :- Path(X, Y), Edge(Y, Z).
  Depth(Y, D + 1) :- Depth(X, D), Arc(X, Y).
)";

// A random sparse digraph: Edge may contain cycles, Arc is kept acyclic so
// the arithmetic rule terminates well below the magnitude cap.
facts::FactBase random_edb(uint32_t seed) {
  std::mt19937 rng(seed);
  facts::FactBase db;
  int n = 3 + static_cast<int>(rng() % 10);
  int m = 1 + static_cast<int>(rng() % (2 * n));
  for (int i = 0; i < m; ++i) {
    int a = static_cast<int>(rng() % n);
    int b = static_cast<int>(rng() % n);
    db.add("Edge", {num(a), num(b)});
    if (a != b) db.add("Arc", {num(std::min(a, b)), num(std::max(a, b))});
  }
  db.add("Depth", {num(rng() % n), num(0)});
  return db;
}

}  // namespace

TEST_CASE("rule text parses into heads, bodies, and arithmetic") {
  auto rules = parse_rules(R"(
    % a comment line
    Seeded(x, -3).
    Out(A, B + 4) :- In(A, B), Mask("quoted atom", _, A).
  )");
  REQUIRE(rules.size() == 2);
  CHECK(rules[0].body.empty());
  CHECK(rules[0].head.rel == "Seeded");
  REQUIRE(rules[0].head.terms.size() == 2);
  CHECK(rules[0].head.terms[0].kind == RuleTerm::Kind::Const);
  CHECK(facts::as_atom(rules[0].head.terms[0].value) == "x");
  CHECK(facts::as_num(rules[0].head.terms[1].value) == -3);

  const Rule& r = rules[1];
  REQUIRE(r.body.size() == 2);
  CHECK(r.head.terms[1].kind == RuleTerm::Kind::Arith);
  CHECK(r.head.terms[1].lhs.is_var);
  CHECK(r.head.terms[1].rhs.value == 4);
  CHECK(r.body[1].terms[0].kind == RuleTerm::Kind::Const);
  CHECK(facts::as_atom(r.body[1].terms[0].value) == "quoted atom");
  CHECK(r.body[1].terms[1].kind == RuleTerm::Kind::Wild);
}

TEST_CASE("malformed rules are rejected") {
  // Head variable not bound by the body.
  CHECK_THROWS_AS(parse_rules("A(X) :- B(Y)."), AnalysisError);
  // Wildcard in the head.
  CHECK_THROWS_AS(parse_rules("A(_) :- B(X)."), AnalysisError);
  // One relation, two arities.
  CHECK_THROWS_AS(parse_rules("A(X) :- B(X). A(X, X) :- B(X)."), AnalysisError);
  // Arithmetic operand must come from the body.
  CHECK_THROWS_AS(parse_rules("A(X + 1) :- B(Y)."), AnalysisError);
  // Arithmetic in a body literal.
  CHECK_THROWS_AS(parse_rules("A(X) :- B(X + 1)."), ParseError);
  // Syntax errors.
  CHECK_THROWS_AS(parse_rules("A(X) :- B(X)"), ParseError);   // missing '.'
  CHECK_THROWS_AS(parse_rules("A(X) B(X)."), ParseError);     // missing ':-'
  CHECK_THROWS_AS(parse_rules("A(\"open) :- B(X)."), ParseError);
}

TEST_CASE("closure and arithmetic derive the expected tuples") {
  auto rules = parse_rules(kPathRules);
  facts::FactBase db;
  db.add("Edge", {num(1), num(2)});
  db.add("Edge", {num(2), num(3)});
  db.add("Arc", {num(1), num(2)});
  db.add("Arc", {num(2), num(3)});
  db.add("Depth", {num(1), num(0)});
  EvalStats st = evaluate(db, rules);

  CHECK(db.contains("Path", {num(1), num(3)}));
  CHECK(db.contains("Depth", {num(3), num(2)}));
  CHECK(!db.contains("Path", {num(3), num(1)}));
  CHECK(db.provenance("Path", {num(1), num(3)}) == facts::Provenance::Derived);
  CHECK(st.derived == 5);  // three paths, two depths
  CHECK(st.dropped == 0);
  CHECK(st.rounds >= 2);
}

TEST_CASE("additive cycles stop at the magnitude cap") {
  auto rules = parse_rules("Count(N + 1) :- Count(N).");
  facts::FactBase db;
  db.add("Count", {num(kArithCap - 2)});
  EvalStats st = evaluate(db, rules);
  CHECK(db.contains("Count", {num(kArithCap)}));
  CHECK(!db.contains("Count", {num(kArithCap + 1)}));
  CHECK(st.dropped == 1);

  auto down = parse_rules("Neg(N - 7) :- Neg(N).");
  facts::FactBase db2;
  db2.add("Neg", {num(-kArithCap + 3)});
  EvalStats st2 = evaluate(db2, down);
  CHECK(db2.tuples("Neg").size() == 1);  // -kArithCap - 4 was discarded
  CHECK(st2.dropped == 1);
  CHECK(st2.derived == 0);
}

TEST_CASE("semi-naive evaluation matches the naive oracle") {
  auto rules = parse_rules(kPathRules);
  for (uint32_t seed = 0; seed < 100; ++seed) {
    facts::FactBase fast = random_edb(seed);
    facts::FactBase slow = fast;
    EvalStats sf = evaluate(fast, rules);
    EvalStats sn = evaluate_naive(slow, rules);
    CAPTURE(seed);
    REQUIRE(fast == slow);
    CHECK(sf.derived == sn.derived);
    CHECK(fast.total_tuples() <= 500);
  }
}

TEST_CASE("incremental addition restores the from-scratch fixpoint") {
  auto rules = parse_rules(kPathRules);
  for (uint32_t seed = 1000; seed < 1050; ++seed) {
    facts::FactBase full = random_edb(seed);

    // Split the base facts: saturate the first part, add the rest later.
    std::vector<std::pair<std::string, facts::Tuple>> later;
    facts::FactBase part;
    std::mt19937 rng(seed * 7 + 1);
    for (const auto& [name, rel] : full.relations())
      for (const auto& t : rel.tuples) {
        if (rng() % 3 == 0)
          later.push_back({name, t});
        else
          part.add(name, t);
      }

    evaluate(part, rules);
    incremental_add(part, rules, later);
    evaluate(full, rules);
    CAPTURE(seed);
    REQUIRE(part == full);
    // Base facts added incrementally keep their provenance.
    for (const auto& [name, t] : later)
      CHECK(part.provenance(name, t) == facts::Provenance::Extracted);
  }
}

TEST_CASE("incremental addition of an already-known tuple is a no-op") {
  auto rules = parse_rules(kPathRules);
  facts::FactBase db;
  db.add("Edge", {num(1), num(2)});
  db.add("Edge", {num(2), num(1)});
  evaluate(db, rules);
  facts::FactBase before = db;
  EvalStats st = incremental_add(db, rules, {{"Edge", {num(1), num(2)}}});
  CHECK(db == before);
  CHECK(st.derived == 0);
}
