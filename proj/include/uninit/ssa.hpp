#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "uninit/il.hpp"

namespace uninit::ssa {

struct DomInfo {
  // Immediate dominator per block id; the entry maps to itself, unreachable
  // blocks to -1.
  std::vector<int> idom;
  std::vector<std::vector<int>> children;  // dominator tree, sorted by id
  std::vector<std::set<int>> frontier;     // dominance frontier per block
  std::vector<int> rpo;                    // reachable blocks, reverse postorder
  std::set<int> unreachable;

  bool dominates(int a, int b) const;
  // All blocks dominated by `a`, including `a` itself, sorted.
  std::vector<int> dominees(int a) const;

 private:
  friend DomInfo compute_dominators_adj(int n, int entry,
                                        const std::vector<std::vector<int>>& succs,
                                        const std::vector<std::vector<int>>& preds);
  std::vector<int> tin_, tout_;  // dominator tree DFS intervals
};

// Iterative dominator computation over the reverse postorder.
DomInfo compute_dominators(const il::Function& f);

// Same computation over a bare adjacency structure (used when only the
// control-flow shape is available, e.g. analysis resumed from a facts
// directory).
DomInfo compute_dominators_adj(int n, int entry, const std::vector<std::vector<int>>& succs,
                               const std::vector<std::vector<int>>& preds);

// Rewrites every function into SSA form: places phi nodes on the iterated
// dominance frontier of each register's definition blocks, renames all
// register references (memory locations themselves stay unversioned), and
// snapshots the reaching definition of every register at each call site.
// Version 0 is reserved for live-on-entry values. Calls define the return
// register. Phi nodes receive fresh synthetic addresses above every real one.
void to_ssa(il::Program& p);

// The reaching-definition snapshot taken at each call during renaming:
// call address -> register -> SSA version (0 when never defined before it).
const std::map<uint64_t, std::map<std::string, int>>& collect_live_defs(const il::Function& f);

}  // namespace uninit::ssa
