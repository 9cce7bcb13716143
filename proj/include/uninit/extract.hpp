#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "uninit/facts.hpp"
#include "uninit/il.hpp"

namespace uninit::extract {

// A statically resolved stack access (stack-pointer-relative operand).
struct DirectAccess {
  bool is_def = false;
  int64_t spd = 0;
  int64_t fld = 0;
  int block = 0;
  uint64_t addr = 0;

  auto key() const { return std::tie(addr, is_def, spd, fld, block); }
  bool operator<(const DirectAccess& o) const { return key() < o.key(); }
  bool operator==(const DirectAccess&) const = default;
};

struct CallInfo {
  uint64_t addr = 0;
  int block = 0;
  std::string callee;
  bool resolved = false;
  int fallthrough = -1;                              // -1: call ends the function
  std::vector<std::pair<int, std::string>> args;     // 1-based index, actual atom
  std::string ret_atom;                              // SSA atom of the return register

  bool operator<(const CallInfo& o) const { return addr < o.addr; }
  bool operator==(const CallInfo&) const = default;
};

struct BranchInfo {
  uint64_t addr = 0;
  int block = 0;
  std::string cond_atom;
  bool jump_if_zero = true;
  int target = 0, fall = 0;

  bool operator<(const BranchInfo& o) const { return addr < o.addr; }
  bool operator==(const BranchInfo&) const = default;
};

struct FuncModel {
  std::string name;
  std::vector<std::string> block_labels;
  int entry = 0;
  uint64_t entry_addr = 0;
  std::set<std::pair<int, int>> edges;
  std::vector<int> exits;
  std::set<int> dead_blocks;
  std::map<uint64_t, std::pair<int, int>> stmt_pos;  // addr -> (block, index)
  std::vector<DirectAccess> direct;
  std::vector<CallInfo> calls;
  std::vector<BranchInfo> branches;

  int n_blocks() const { return static_cast<int>(block_labels.size()); }
  std::vector<std::vector<int>> succ_lists() const;
  std::vector<std::vector<int>> pred_lists() const;

  bool operator==(const FuncModel&) const = default;
};

// Everything downstream analysis needs, reconstructible from a facts
// directory: the extracted relations plus per-function control-flow shape.
struct AnalysisModel {
  int word_size = 4;
  std::map<std::string, FuncModel> funcs;
  facts::FactBase edb;

  const FuncModel* func_of_addr(uint64_t addr) const;

  bool operator==(const AnalysisModel&) const = default;
};

// Extracts the full extensional database from an SSA-form program whose
// stack deltas are computed: points-to seed/copy/arith/call/phi relations,
// instruction reachability, and the program-shape relations. Functions are
// processed independently (optionally in parallel) and merged in definition
// order.
AnalysisModel extract_model(const il::Program& p, unsigned threads = 1);

// The extracted relations alone.
facts::FactBase extract_edb(const il::Program& p, unsigned threads = 1);

// Instruction-level reachability for one function: CanReach(a, b, ctx) holds
// when b can execute before a on some path; reflexive at every instruction.
void compute_canreach(const il::Function& f, facts::FactBase& out);

// Rebuilds the model from a fact base containing the program-shape
// relations (the inverse of extract_model's encoding).
AnalysisModel facts_to_model(const facts::FactBase& fb);

}  // namespace uninit::extract
