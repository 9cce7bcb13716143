#include "uninit/engine.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>
#include <tuple>

#include "uninit/support.hpp"

namespace uninit::engine {

using facts::FactBase;
using facts::Term;
using facts::Tuple;

namespace {

// ---------------------------------------------------------------- parsing

struct Token {
  enum class Kind { Ident, Int, Str, Punct, Entail, End };
  Kind kind;
  std::string text;
  int64_t value = 0;
  int line = 1;
};

class RuleLexer {
 public:
  explicit RuleLexer(const std::string& text) : s_(text) { advance(); }

  const Token& peek() const { return tok_; }
  Token take() {
    Token t = tok_;
    advance();
    return t;
  }

 private:
  void advance() {
    while (pos_ < s_.size()) {
      char c = s_[pos_];
      if (c == '\n') {
        ++line_;
        ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else if (c == '%') {
        while (pos_ < s_.size() && s_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
    tok_.line = line_;
    if (pos_ >= s_.size()) {
      tok_.kind = Token::Kind::End;
      tok_.text.clear();
      return;
    }
    char c = s_[pos_];
    if (c == '"') {
      ++pos_;
      size_t start = pos_;
      while (pos_ < s_.size() && s_[pos_] != '"' && s_[pos_] != '\n') ++pos_;
      if (pos_ >= s_.size() || s_[pos_] != '"') throw ParseError(line_, "unterminated string");
      tok_ = {Token::Kind::Str, s_.substr(start, pos_ - start), 0, line_};
      ++pos_;
      return;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      size_t start = pos_;
      while (pos_ < s_.size() &&
             (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
        ++pos_;
      tok_ = {Token::Kind::Ident, s_.substr(start, pos_ - start), 0, line_};
      return;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '-' && pos_ + 1 < s_.size() &&
         std::isdigit(static_cast<unsigned char>(s_[pos_ + 1])))) {
      size_t start = pos_;
      ++pos_;
      while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
      Token t{Token::Kind::Int, s_.substr(start, pos_ - start), 0, line_};
      t.value = std::stoll(t.text);
      tok_ = t;
      return;
    }
    if (c == ':' && pos_ + 1 < s_.size() && s_[pos_ + 1] == '-') {
      tok_ = {Token::Kind::Entail, ":-", 0, line_};
      pos_ += 2;
      return;
    }
    if (c == '(' || c == ')' || c == ',' || c == '.' || c == '+' || c == '-') {
      tok_ = {Token::Kind::Punct, std::string(1, c), 0, line_};
      ++pos_;
      return;
    }
    throw ParseError(line_, std::string("unexpected character '") + c + "'");
  }

  std::string s_;
  size_t pos_ = 0;
  int line_ = 1;
  Token tok_;
};

bool is_var_name(const std::string& s) {
  return !s.empty() && std::isupper(static_cast<unsigned char>(s[0]));
}

class RuleParser {
 public:
  explicit RuleParser(const std::string& text) : lex_(text) {}

  std::vector<Rule> parse() {
    std::vector<Rule> rules;
    while (lex_.peek().kind != Token::Kind::End) rules.push_back(parse_rule());
    validate(rules);
    return rules;
  }

 private:
  Token expect(Token::Kind k, const char* what) {
    if (lex_.peek().kind != k)
      throw ParseError(lex_.peek().line, std::string("expected ") + what + ", got '" +
                                             lex_.peek().text + "'");
    return lex_.take();
  }

  bool eat_punct(const char* p) {
    if (lex_.peek().kind == Token::Kind::Punct && lex_.peek().text == p) {
      lex_.take();
      return true;
    }
    return false;
  }

  Literal parse_literal(bool head) {
    Literal lit;
    lit.rel = expect(Token::Kind::Ident, "relation name").text;
    expect(Token::Kind::Punct, "'('");
    if (!eat_punct(")")) {
      do {
        lit.terms.push_back(parse_term(head));
      } while (eat_punct(","));
      expect(Token::Kind::Punct, "')'");
    }
    return lit;
  }

  ArithOperand parse_arith_operand() {
    const Token& p = lex_.peek();
    ArithOperand op;
    if (p.kind == Token::Kind::Int) {
      op.value = lex_.take().value;
    } else if (p.kind == Token::Kind::Ident && is_var_name(p.text)) {
      op.is_var = true;
      op.var = lex_.take().text;
    } else {
      throw ParseError(p.line, "arithmetic operand must be a variable or number");
    }
    return op;
  }

  RuleTerm parse_term(bool head) {
    const Token& p = lex_.peek();
    RuleTerm t;
    int line = p.line;
    if (p.kind == Token::Kind::Str) {
      t.kind = RuleTerm::Kind::Const;
      t.value = facts::atom(lex_.take().text);
      return t;
    }
    if (p.kind == Token::Kind::Int) {
      t.kind = RuleTerm::Kind::Const;
      t.value = facts::num(lex_.take().value);
    } else if (p.kind == Token::Kind::Ident) {
      std::string name = lex_.take().text;
      if (name == "_") {
        t.kind = RuleTerm::Kind::Wild;
      } else if (is_var_name(name)) {
        t.kind = RuleTerm::Kind::Var;
        t.var = name;
      } else {
        t.kind = RuleTerm::Kind::Const;
        t.value = facts::atom(name);
      }
    } else {
      throw ParseError(line, "expected a term, got '" + p.text + "'");
    }

    bool plus = lex_.peek().kind == Token::Kind::Punct && lex_.peek().text == "+";
    bool minus = lex_.peek().kind == Token::Kind::Punct && lex_.peek().text == "-";
    if (!plus && !minus) return t;
    if (!head) throw ParseError(line, "arithmetic is only allowed in rule heads");
    if (t.kind == RuleTerm::Kind::Wild)
      throw ParseError(line, "'_' cannot be an arithmetic operand");

    RuleTerm a;
    a.kind = RuleTerm::Kind::Arith;
    a.plus = plus;
    if (t.kind == RuleTerm::Kind::Var) {
      a.lhs.is_var = true;
      a.lhs.var = t.var;
    } else if (facts::is_num(t.value)) {
      a.lhs.value = facts::as_num(t.value);
    } else {
      throw ParseError(line, "arithmetic operand must be a variable or number");
    }
    lex_.take();
    a.rhs = parse_arith_operand();
    return a;
  }

  Rule parse_rule() {
    Rule r;
    r.head = parse_literal(true);
    if (eat_punct(".")) return r;  // ground fact
    if (lex_.peek().kind != Token::Kind::Entail)
      throw ParseError(lex_.peek().line, "expected ':-' or '.'");
    lex_.take();
    do {
      r.body.push_back(parse_literal(false));
    } while (eat_punct(","));
    expect(Token::Kind::Punct, "'.'");
    return r;
  }

  void validate(const std::vector<Rule>& rules) {
    std::map<std::string, size_t> arity;
    auto check_arity = [&](const Literal& lit) {
      auto [it, fresh] = arity.try_emplace(lit.rel, lit.terms.size());
      if (!fresh && it->second != lit.terms.size())
        throw AnalysisError("relation '" + lit.rel + "' used with arities " +
                            std::to_string(it->second) + " and " +
                            std::to_string(lit.terms.size()));
    };
    for (auto& r : rules) {
      check_arity(r.head);
      std::set<std::string> bound;
      for (auto& lit : r.body) {
        check_arity(lit);
        for (auto& t : lit.terms)
          if (t.kind == RuleTerm::Kind::Var) bound.insert(t.var);
      }
      auto require = [&](const std::string& v) {
        if (!bound.count(v))
          throw AnalysisError("head variable '" + v + "' of " + r.head.rel +
                              " is not bound by the body");
      };
      for (auto& t : r.head.terms) {
        if (t.kind == RuleTerm::Kind::Wild)
          throw AnalysisError("'_' cannot appear in the head of " + r.head.rel);
        if (t.kind == RuleTerm::Kind::Var) require(t.var);
        if (t.kind == RuleTerm::Kind::Arith) {
          if (t.lhs.is_var) require(t.lhs.var);
          if (t.rhs.is_var) require(t.rhs.var);
        }
      }
    }
  }

  RuleLexer lex_;
};

// ------------------------------------------------------------- compilation

// Slot-addressed form: every variable of a rule gets one slot; body literal
// positions become match actions, head positions become build actions.

struct CPos {
  enum class K {
    Const,  // position must equal `cval`
    Bound,  // position must equal env[slot] (bound by an earlier literal)
    Bind,   // position binds env[slot]
    Check,  // position repeats a slot bound earlier in this same literal
    Any,    // wildcard
  };
  K k = K::Any;
  Term cval{int64_t{0}};
  int slot = -1;
};

struct CLit {
  std::string rel;
  std::vector<CPos> pos;
  // Statically-known lookup key: positions that are Const or Bound, in order.
  std::vector<size_t> key_positions;
  uint32_t mask = 0;
};

struct CHeadPos {
  RuleTerm::Kind kind;
  Term cval{int64_t{0}};
  int slot = -1;          // Var
  bool plus = true;       // Arith
  bool lv = false, rv = false;
  int ls = -1, rs = -1;
  int64_t lc = 0, rc = 0;
};

struct CRule {
  std::string head_rel;
  std::vector<CHeadPos> head;
  std::vector<CLit> body;
  size_t nslots = 0;
};

CRule compile(const Rule& r) {
  CRule c;
  std::map<std::string, int> slots;
  auto slot_of = [&](const std::string& v) {
    auto [it, fresh] = slots.try_emplace(v, static_cast<int>(slots.size()));
    (void)fresh;
    return it->second;
  };

  std::set<std::string> bound;
  for (auto& lit : r.body) {
    CLit cl;
    cl.rel = lit.rel;
    std::set<std::string> bound_here;
    for (size_t i = 0; i < lit.terms.size(); ++i) {
      const RuleTerm& t = lit.terms[i];
      CPos p;
      if (t.kind == RuleTerm::Kind::Const) {
        p.k = CPos::K::Const;
        p.cval = t.value;
        cl.key_positions.push_back(i);
        cl.mask |= 1u << i;
      } else if (t.kind == RuleTerm::Kind::Wild) {
        p.k = CPos::K::Any;
      } else {
        p.slot = slot_of(t.var);
        if (bound.count(t.var)) {
          p.k = CPos::K::Bound;
          cl.key_positions.push_back(i);
          cl.mask |= 1u << i;
        } else if (bound_here.count(t.var)) {
          p.k = CPos::K::Check;
        } else {
          p.k = CPos::K::Bind;
          bound_here.insert(t.var);
        }
      }
      cl.pos.push_back(p);
    }
    bound.insert(bound_here.begin(), bound_here.end());
    c.body.push_back(std::move(cl));
  }

  c.head_rel = r.head.rel;
  for (auto& t : r.head.terms) {
    CHeadPos h;
    h.kind = t.kind;
    if (t.kind == RuleTerm::Kind::Const) {
      h.cval = t.value;
    } else if (t.kind == RuleTerm::Kind::Var) {
      h.slot = slot_of(t.var);
    } else {
      h.plus = t.plus;
      h.lv = t.lhs.is_var;
      h.rv = t.rhs.is_var;
      if (h.lv) h.ls = slot_of(t.lhs.var);
      h.lc = t.lhs.value;
      if (h.rv) h.rs = slot_of(t.rhs.var);
      h.rc = t.rhs.value;
    }
    c.head.push_back(h);
  }
  c.nslots = slots.size();
  return c;
}

// -------------------------------------------------------------- evaluation

using DeltaMap = std::map<std::string, std::set<Tuple>>;

class Engine {
 public:
  Engine(FactBase& db, const std::vector<CRule>& rules) : db_(db), rules_(rules) {}

  EvalStats run(bool seminaive, DeltaMap initial_delta) {
    EvalStats stats;
    DeltaMap delta = std::move(initial_delta);
    while (true) {
      cache_.clear();
      DeltaMap newly;
      for (auto& r : rules_) {
        if (r.body.empty()) continue;  // ground facts are seeded before run()
        if (!seminaive) {
          eval_rule(r, static_cast<size_t>(-1), nullptr, newly, stats);
          continue;
        }
        for (size_t i = 0; i < r.body.size(); ++i) {
          auto d = delta.find(r.body[i].rel);
          if (d == delta.end() || d->second.empty()) continue;
          eval_rule(r, i, &d->second, newly, stats);
        }
      }
      ++stats.rounds;
      size_t added = 0;
      for (auto& [rel, tuples] : newly)
        for (auto& t : tuples)
          if (db_.add(rel, t, facts::Provenance::Derived)) ++added;
      stats.derived += added;
      if (added == 0) break;
      delta = std::move(newly);
    }
    return stats;
  }

 private:
  using Index = std::map<Tuple, std::vector<const Tuple*>>;

  void eval_rule(const CRule& r, size_t delta_idx, const std::set<Tuple>* delta, DeltaMap& newly,
                 EvalStats& stats) {
    env_.assign(r.nslots, Term{int64_t{0}});
    join(r, 0, delta_idx, delta, newly, stats);
  }

  void join(const CRule& r, size_t j, size_t delta_idx, const std::set<Tuple>* delta,
            DeltaMap& newly, EvalStats& stats) {
    if (j == r.body.size()) {
      fire(r, newly, stats);
      return;
    }
    const CLit& lit = r.body[j];
    const bool from_delta = j == delta_idx;

    if (lit.key_positions.empty()) {
      if (from_delta) {
        for (auto& t : *delta) try_tuple(r, j, t, delta_idx, delta, newly, stats);
      } else {
        for (auto& t : db_.tuples(lit.rel)) try_tuple(r, j, t, delta_idx, delta, newly, stats);
      }
      return;
    }

    Tuple key;
    key.reserve(lit.key_positions.size());
    for (size_t p : lit.key_positions) {
      const CPos& cp = lit.pos[p];
      key.push_back(cp.k == CPos::K::Const ? cp.cval : env_[cp.slot]);
    }
    const Index& idx = index_for(lit, from_delta ? delta : nullptr);
    auto hit = idx.find(key);
    if (hit == idx.end()) return;
    for (const Tuple* t : hit->second) try_tuple(r, j, *t, delta_idx, delta, newly, stats);
  }

  void try_tuple(const CRule& r, size_t j, const Tuple& t, size_t delta_idx,
                 const std::set<Tuple>* delta, DeltaMap& newly, EvalStats& stats) {
    const CLit& lit = r.body[j];
    if (t.size() != lit.pos.size()) return;
    for (size_t i = 0; i < lit.pos.size(); ++i) {
      const CPos& p = lit.pos[i];
      switch (p.k) {
        case CPos::K::Any:
          break;
        case CPos::K::Const:
          if (!(t[i] == p.cval)) return;
          break;
        case CPos::K::Bound:
        case CPos::K::Check:
          if (!(t[i] == env_[p.slot])) return;
          break;
        case CPos::K::Bind:
          env_[p.slot] = t[i];
          break;
      }
    }
    join(r, j + 1, delta_idx, delta, newly, stats);
  }

  void fire(const CRule& r, DeltaMap& newly, EvalStats& stats) {
    Tuple out;
    out.reserve(r.head.size());
    for (auto& h : r.head) {
      switch (h.kind) {
        case RuleTerm::Kind::Const:
          out.push_back(h.cval);
          break;
        case RuleTerm::Kind::Var:
          out.push_back(env_[h.slot]);
          break;
        case RuleTerm::Kind::Arith: {
          int64_t a = h.lv ? arith_value(h.ls) : h.lc;
          int64_t b = h.rv ? arith_value(h.rs) : h.rc;
          int64_t v = h.plus ? a + b : a - b;
          if (v > kArithCap || v < -kArithCap) {
            ++stats.dropped;
            return;
          }
          out.push_back(facts::num(v));
          break;
        }
        case RuleTerm::Kind::Wild:
          return;  // rejected at parse time
      }
    }
    if (db_.contains(r.head_rel, out)) return;
    newly[r.head_rel].insert(std::move(out));
  }

  int64_t arith_value(int slot) const {
    const Term& t = env_[slot];
    if (!facts::is_num(t))
      throw AnalysisError("arithmetic over non-numeric value '" + facts::term_str(t) + "'");
    return facts::as_num(t);
  }

  const Index& index_for(const CLit& lit, const std::set<Tuple>* delta) {
    auto key = std::make_tuple(delta != nullptr, lit.rel, lit.mask);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    Index& idx = cache_[key];
    const std::set<Tuple>& source = delta ? *delta : db_.tuples(lit.rel);
    for (auto& t : source) {
      if (t.size() != lit.pos.size()) continue;
      Tuple k;
      k.reserve(lit.key_positions.size());
      for (size_t p : lit.key_positions) k.push_back(t[p]);
      idx[std::move(k)].push_back(&t);
    }
    return idx;
  }

  FactBase& db_;
  const std::vector<CRule>& rules_;
  std::vector<Term> env_;
  std::map<std::tuple<bool, std::string, uint32_t>, Index> cache_;
};

std::vector<CRule> compile_all(FactBase& db, const std::vector<Rule>& rules) {
  std::vector<CRule> out;
  out.reserve(rules.size());
  for (auto& r : rules) {
    for (auto& lit : r.body)
      if (db.has_relation(lit.rel)) db.declare(lit.rel, lit.terms.size());
    db.declare(r.head.rel, r.head.terms.size());
    out.push_back(compile(r));
  }
  return out;
}

// Ground fact rules fire once, before propagation.
size_t seed_ground(FactBase& db, const std::vector<Rule>& rules, DeltaMap* delta) {
  size_t added = 0;
  for (auto& r : rules) {
    if (!r.body.empty()) continue;
    Tuple t;
    for (auto& term : r.head.terms) t.push_back(term.value);
    if (db.add(r.head.rel, t, facts::Provenance::Derived)) {
      if (delta) (*delta)[r.head.rel].insert(t);
      ++added;
    }
  }
  return added;
}

}  // namespace

std::vector<Rule> parse_rules(const std::string& text) { return RuleParser(text).parse(); }

EvalStats evaluate(FactBase& db, const std::vector<Rule>& rules) {
  auto compiled = compile_all(db, rules);
  DeltaMap delta;
  size_t seeded = seed_ground(db, rules, &delta);
  for (auto& [rel, relation] : db.relations())
    if (!relation.tuples.empty()) delta[rel].insert(relation.tuples.begin(), relation.tuples.end());
  Engine eng(db, compiled);
  EvalStats stats = eng.run(true, std::move(delta));
  stats.derived += seeded;
  return stats;
}

EvalStats evaluate_naive(FactBase& db, const std::vector<Rule>& rules) {
  auto compiled = compile_all(db, rules);
  size_t seeded = seed_ground(db, rules, nullptr);
  Engine eng(db, compiled);
  EvalStats stats = eng.run(false, {});
  stats.derived += seeded;
  return stats;
}

EvalStats incremental_add(FactBase& db, const std::vector<Rule>& rules,
                          const std::vector<std::pair<std::string, facts::Tuple>>& added,
                          facts::Provenance prov) {
  auto compiled = compile_all(db, rules);
  DeltaMap delta;
  for (auto& [rel, t] : added)
    if (db.add(rel, t, prov)) delta[rel].insert(t);
  if (delta.empty()) return {};
  Engine eng(db, compiled);
  return eng.run(true, std::move(delta));
}

}  // namespace uninit::engine
