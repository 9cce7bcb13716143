#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "uninit/extract.hpp"
#include "uninit/ssa.hpp"

namespace uninit::safezones {

// A stack variable of one frame: delta of its base slot plus field offset.
struct VarKey {
  int64_t spd = 0;
  int64_t fld = 0;

  auto operator<=>(const VarKey&) const = default;
};

struct Access {
  VarKey var;
  int block = 0;
  uint64_t addr = 0;
  bool is_def = false;
  bool indirect = false;  // reached through a pointer rather than sp-relative

  auto key() const { return std::tie(var, addr, is_def, indirect, block); }
  bool operator<(const Access& o) const { return key() < o.key(); }
  bool operator==(const Access&) const = default;
};

struct SafeZone {
  VarKey var;
  std::set<int> blocks;
  std::set<std::pair<int, int>> edges;  // safe edges; sources are zone blocks

  bool operator==(const SafeZone&) const = default;
};

struct Verdict {
  Access use;
  bool safe = false;
  bool dead = false;           // use sits in an unreachable block
  std::vector<int> witness;    // unsafe only: entry..use block path avoiding safe edges

  auto sort_key() const { return std::tie(use, safe, dead); }
  bool operator<(const Verdict& o) const { return sort_key() < o.sort_key(); }
};

// Blocks where a variable counts as initialized on entry, independent of any
// local definition (granted by interprocedural propagation).
using Grants = std::map<VarKey, std::set<int>>;

// Safe zones per variable: definition blocks, every block they dominate,
// then any block all of whose live incoming edges are safe, to fixpoint.
// Granted blocks participate like definition blocks. Variables with uses but
// no defs or grants get an empty zone. Unreachable blocks never join a zone.
std::map<VarKey, SafeZone> compute_safe_zones(const extract::FuncModel& cfg,
                                              const ssa::DomInfo& dom,
                                              const std::vector<Access>& accesses,
                                              const Grants& grants = {});

// A use is unsafe iff some entry-to-use-block path avoids every safe edge of
// its variable and no same-block definition (or entry grant) precedes it.
// The witness is the shortest such path, ties broken by the smallest block
// id sequence. Uses in unreachable blocks are unsafe, flagged dead, with an
// empty witness.
std::vector<Verdict> classify_accesses(const extract::FuncModel& cfg,
                                       const std::vector<Access>& accesses,
                                       const std::map<VarKey, SafeZone>& zones,
                                       const Grants& grants = {});

// Independent all-paths must-initialization dataflow over the same inputs;
// maps each use access to safe/unsafe. Agrees with classify_accesses by
// construction of both; kept separate as an oracle.
std::map<Access, bool> reaching_defs_oracle(const extract::FuncModel& cfg,
                                            const std::vector<Access>& accesses,
                                            const Grants& grants = {});

// Renders `var(spd,fld): blocks {..} edges {..}` lines for debugging.
std::string dump_zones(const std::map<VarKey, SafeZone>& zones);

}  // namespace uninit::safezones
