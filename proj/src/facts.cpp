#include "uninit/facts.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace uninit::facts {

namespace fs = std::filesystem;

namespace {

bool looks_like_int(const std::string& s) {
  if (s.empty()) return false;
  size_t i = s[0] == '-' ? 1 : 0;
  if (i >= s.size()) return false;
  for (; i < s.size(); ++i)
    if (!isdigit(static_cast<unsigned char>(s[i]))) return false;
  return true;
}

}  // namespace

Term atom(std::string s) {
  if (s.empty()) throw AnalysisError("empty atom");
  if (s.find('\t') != std::string::npos || s.find('\n') != std::string::npos)
    throw AnalysisError("atom contains whitespace control characters: '" + s + "'");
  if (looks_like_int(s)) throw AnalysisError("atom looks like an integer: '" + s + "'");
  return Term{std::move(s)};
}

bool is_num(const Term& t) { return std::holds_alternative<int64_t>(t); }

int64_t as_num(const Term& t) {
  if (!is_num(t)) throw AnalysisError("term is not an integer: " + term_str(t));
  return std::get<int64_t>(t);
}

const std::string& as_atom(const Term& t) {
  if (is_num(t)) throw AnalysisError("term is not an atom: " + term_str(t));
  return std::get<std::string>(t);
}

std::string term_str(const Term& t) {
  if (is_num(t)) return std::to_string(std::get<int64_t>(t));
  return std::get<std::string>(t);
}

std::string tuple_str(const std::string& rel, const Tuple& t) {
  std::string s = rel + "(";
  for (size_t i = 0; i < t.size(); ++i) {
    if (i) s += ", ";
    s += term_str(t[i]);
  }
  return s + ")";
}

Relation& FactBase::declare(const std::string& name, size_t arity) {
  auto [it, fresh] = rels_.try_emplace(name);
  if (fresh) {
    it->second.arity = arity;
  } else if (it->second.arity != arity) {
    throw AnalysisError("relation '" + name + "' arity mismatch: " +
                        std::to_string(it->second.arity) + " vs " + std::to_string(arity));
  }
  return it->second;
}

bool FactBase::add(const std::string& name, Tuple t, Provenance prov) {
  Relation& r = declare(name, t.size());
  bool fresh = r.tuples.insert(t).second;
  if (fresh && prov != Provenance::Extracted) prov_[name][std::move(t)] = prov;
  return fresh;
}

bool FactBase::contains(const std::string& name, const Tuple& t) const {
  auto it = rels_.find(name);
  return it != rels_.end() && it->second.tuples.count(t) > 0;
}

const std::set<Tuple>& FactBase::tuples(const std::string& name) const {
  static const std::set<Tuple> empty;
  auto it = rels_.find(name);
  return it == rels_.end() ? empty : it->second.tuples;
}

bool FactBase::has_relation(const std::string& name) const { return rels_.count(name) > 0; }

Provenance FactBase::provenance(const std::string& name, const Tuple& t) const {
  auto it = prov_.find(name);
  if (it != prov_.end()) {
    auto jt = it->second.find(t);
    if (jt != it->second.end()) return jt->second;
  }
  return Provenance::Extracted;
}

size_t FactBase::total_tuples() const {
  size_t n = 0;
  for (auto& [name, rel] : rels_) n += rel.tuples.size();
  return n;
}

void FactBase::merge(const FactBase& other) {
  for (auto& [name, rel] : other.rels_) {
    declare(name, rel.arity);
    for (auto& t : rel.tuples) add(name, t, other.provenance(name, t));
  }
}

const std::map<std::string, size_t>& known_schemas() {
  static const std::map<std::string, size_t> schemas = {
      // Core extracted relations.
      {"StackPointer", 3},   // V, Addr, SPD
      {"Assign", 3},         // V1, V2, Addr
      {"Load", 5},           // V1, V2, Disp, Addr, Ctx
      {"Store", 5},          // V1, Disp, V2, Addr, Ctx
      {"Param", 7},          // V1, Arg, Addr, Caller, V2, CalleeAddr, Callee
      {"TranslateSPD", 3},   // Arg, Callee, SPD2
      {"BinOp", 6},          // Op, Res, V1, V2, Addr, Ctx
      {"Constant", 3},       // V, Value, Addr
      {"Phi", 4},            // V, PhiReg, Addr, Ctx
      {"CanReach", 3},       // Addr, Addr2, Ctx
      // Derived relations.
      {"VPtsTo", 4},         // V, SPD, Addr, Ctx
      {"PointerPtsTo", 4},   // SPD, Disp, SPD2, Ctx
      {"IndirectDef", 3},    // V, SPD, Addr
      {"IndirectUse", 3},    // V, SPD, Addr
      // Program-shape relations (control flow, accesses, call structure).
      {"CFGEdge", 3},        // Ctx, From, To
      {"BlockLabel", 3},     // Ctx, Block, Label
      {"FuncEntry", 3},      // Ctx, Block, Addr
      {"FuncExit", 2},       // Ctx, Block
      {"StmtBlock", 4},      // Addr, Ctx, Block, Pos
      {"DeadBlock", 2},      // Ctx, Block
      {"DirectDef", 5},      // SPD, Fld, Block, Addr, Ctx
      {"DirectUse", 5},      // SPD, Fld, Block, Addr, Ctx
      {"CallSite", 6},       // Addr, Ctx, Block, Callee, Resolved, Fallthrough
      {"CallArg", 3},        // Addr, Arg, V1
      {"StackArg", 3},       // Addr, Arg, SPD (caller-frame slot of a pushed argument)
      {"CallRet", 2},        // Addr, V
      {"Branch", 7},         // Addr, Ctx, Block, CondV, JumpIfZero, TargetBlock, FallBlock
      {"Meta", 2},           // Key, Value
  };
  return schemas;
}

void emit_facts(const FactBase& fb, const std::string& dir) {
  fs::create_directories(dir);
  for (auto& entry : fs::directory_iterator(dir))
    if (entry.path().extension() == ".facts") fs::remove(entry.path());
  for (auto& [name, rel] : fb.relations()) {
    std::string lower = name;
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    std::ofstream out(fs::path(dir) / (lower + ".facts"));
    if (!out) throw AnalysisError("cannot write facts file for relation '" + name + "'");
    for (auto& t : rel.tuples) {
      for (size_t i = 0; i < t.size(); ++i) {
        if (i) out << '\t';
        out << term_str(t[i]);
      }
      out << '\n';
    }
  }
}

FactBase load_facts(const std::string& dir) {
  if (!fs::is_directory(dir)) throw AnalysisError("not a facts directory: " + dir);

  std::map<std::string, std::string> canonical;
  for (auto& [name, arity] : known_schemas()) {
    std::string lower = name;
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    canonical[lower] = name;
  }

  FactBase fb;
  std::vector<fs::path> files;
  for (auto& entry : fs::directory_iterator(dir))
    if (entry.path().extension() == ".facts") files.push_back(entry.path());
  std::sort(files.begin(), files.end());

  for (auto& path : files) {
    std::string stem = path.stem().string();
    auto it = canonical.find(stem);
    std::string name = it != canonical.end() ? it->second : stem;
    auto schema = known_schemas().find(name);
    if (schema != known_schemas().end()) fb.declare(name, schema->second);

    std::ifstream in(path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      Tuple t;
      std::stringstream ss(line);
      std::string field;
      while (std::getline(ss, field, '\t')) {
        if (looks_like_int(field))
          t.push_back(num(std::stoll(field)));
        else
          t.push_back(atom(field));
      }
      if (schema != known_schemas().end() && t.size() != schema->second)
        throw ParseError(lineno, path.filename().string() + ": expected " +
                                     std::to_string(schema->second) + " terms, got " +
                                     std::to_string(t.size()));
      fb.add(name, std::move(t));
    }
  }
  return fb;
}

}  // namespace uninit::facts
