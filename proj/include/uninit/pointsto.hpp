#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "uninit/engine.hpp"
#include "uninit/facts.hpp"

namespace uninit::pointsto {

// The points-to rule set as rule text (also what `--dump-rules` prints).
const std::string& rules_text();

// The same rules, parsed once.
const std::vector<engine::Rule>& rules();

// Saturates VPtsTo / PointerPtsTo / IndirectDef / IndirectUse over the
// extracted database, in place.
engine::EvalStats run(facts::FactBase& db);

// One resolved pointer-mediated stack access: the stack variable is
// (spd, fld) in frame `ctx`, touched at `addr` through SSA value `var`.
struct IndirectAccess {
  bool is_def = false;
  int64_t spd = 0;
  int64_t fld = 0;
  uint64_t addr = 0;
  std::string ctx;
  std::string var;

  auto key() const { return std::tie(ctx, spd, fld, addr, is_def, var); }
  bool operator<(const IndirectAccess& o) const { return key() < o.key(); }
  bool operator==(const IndirectAccess&) const = default;
};

struct IndirectResult {
  std::vector<IndirectAccess> accesses;   // sorted, deduplicated
  size_t skipped_negative_field = 0;      // accesses below the pointee base
};

// Joins the derived IndirectDef/IndirectUse tuples back to their store/load
// sites to recover the field offset. Accesses that would land at a negative
// field are dropped and counted, keeping the field of every reported stack
// variable non-negative.
IndirectResult query_indirect(const facts::FactBase& db);

}  // namespace uninit::pointsto
