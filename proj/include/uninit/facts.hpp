#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "uninit/support.hpp"

namespace uninit::facts {

// A term is an integer or an atom. Atoms never contain tabs or newlines so
// the tab-separated file format round-trips; atoms that look like integers
// are rejected at construction to keep parsing unambiguous.
using Term = std::variant<int64_t, std::string>;

Term atom(std::string s);
inline Term num(int64_t v) { return Term{v}; }

bool is_num(const Term& t);
int64_t as_num(const Term& t);
const std::string& as_atom(const Term& t);
std::string term_str(const Term& t);

using Tuple = std::vector<Term>;

std::string tuple_str(const std::string& rel, const Tuple& t);

enum class Provenance { Extracted, Derived, Plugin };

struct Relation {
  size_t arity = 0;
  std::set<Tuple> tuples;

  bool operator==(const Relation&) const = default;
};

// Named relations over tuples. Relation names are CamelCase identifiers;
// file names use their lowercase form.
class FactBase {
 public:
  // Declares a relation (idempotent; arity mismatch is an error).
  Relation& declare(const std::string& name, size_t arity);

  // Inserts a tuple, declaring the relation if needed. Returns true when new.
  bool add(const std::string& name, Tuple t, Provenance prov = Provenance::Extracted);

  bool contains(const std::string& name, const Tuple& t) const;
  const std::set<Tuple>& tuples(const std::string& name) const;  // empty set if absent
  bool has_relation(const std::string& name) const;
  const std::map<std::string, Relation>& relations() const { return rels_; }

  Provenance provenance(const std::string& name, const Tuple& t) const;

  size_t total_tuples() const;

  // Merges every tuple of `other` into this base.
  void merge(const FactBase& other);

  bool operator==(const FactBase& o) const { return rels_ == o.rels_; }

 private:
  std::map<std::string, Relation> rels_;
  // Only non-default provenance is stored.
  std::map<std::string, std::map<Tuple, Provenance>> prov_;
};

// Writes one `<relation>.facts` file per relation into `dir` (created if
// missing): tab-separated terms, one tuple per line, sorted, decimal
// integers. Existing .facts files in the directory are replaced.
void emit_facts(const FactBase& fb, const std::string& dir);

// Reads every *.facts file in `dir`. Known relation names are restored to
// their canonical spelling and checked against their schema arity; unknown
// relations are admitted as-is with a consistent arity.
FactBase load_facts(const std::string& dir);

// Canonical spelling and arity for the relations the analysis understands.
const std::map<std::string, size_t>& known_schemas();

}  // namespace uninit::facts
