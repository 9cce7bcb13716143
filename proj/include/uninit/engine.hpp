#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "uninit/facts.hpp"

namespace uninit::engine {

// Magnitude bound for values produced by head arithmetic. Results beyond it
// are discarded (and counted), which keeps rule sets with additive cycles
// terminating.
constexpr int64_t kArithCap = 1 << 20;

struct ArithOperand {
  bool is_var = false;
  std::string var;
  int64_t value = 0;
};

struct RuleTerm {
  enum class Kind { Const, Var, Wild, Arith };
  Kind kind = Kind::Const;
  facts::Term value{int64_t{0}};  // Const
  std::string var;                // Var
  ArithOperand lhs, rhs;          // Arith (head positions only)
  bool plus = true;               // Arith operator
};

struct Literal {
  std::string rel;
  std::vector<RuleTerm> terms;
};

struct Rule {
  Literal head;
  std::vector<Literal> body;  // empty body: a ground fact
};

// Parses rule text. Grammar per rule: `Head(T, ...) :- Lit(T, ...), ... .`
// or a ground `Fact(T, ...).`; `%` starts a comment. Uppercase-initial
// identifiers are variables, `_` matches anything, lowercase identifiers and
// double-quoted strings are atoms, signed decimal literals are numbers. A
// head position may be `A + B` or `A - B` over variables and numbers.
// Validated here: every head variable and arithmetic operand is bound by the
// body (range restriction), wildcards stay out of heads, arithmetic stays
// out of bodies, and each relation keeps one arity across all rules.
std::vector<Rule> parse_rules(const std::string& text);

struct EvalStats {
  size_t rounds = 0;   // propagation rounds until the fixpoint
  size_t derived = 0;  // tuples added by rules
  size_t dropped = 0;  // arithmetic results discarded by the magnitude cap

  EvalStats& operator+=(const EvalStats& o) {
    rounds += o.rounds;
    derived += o.derived;
    dropped += o.dropped;
    return *this;
  }
};

// Runs the rules to fixpoint over `db` in place. Semi-naive: after the first
// round only tuples discovered in the previous round are rejoined. Derived
// tuples carry Provenance::Derived.
EvalStats evaluate(facts::FactBase& db, const std::vector<Rule>& rules);

// Reference evaluator that rescans the full database every round. Slower,
// independent of the delta machinery; kept as the oracle for `evaluate`.
EvalStats evaluate_naive(facts::FactBase& db, const std::vector<Rule>& rules);

// Adds base facts to an already-saturated database and restores the fixpoint
// by propagating only their consequences.
EvalStats incremental_add(facts::FactBase& db, const std::vector<Rule>& rules,
                          const std::vector<std::pair<std::string, facts::Tuple>>& added,
                          facts::Provenance prov = facts::Provenance::Extracted);

}  // namespace uninit::engine
