#pragma once

#include <cstdint>
#include <vector>

#include "uninit/extract.hpp"
#include "uninit/safezones.hpp"

namespace testsupport {

struct RandomCase {
  uninit::extract::FuncModel cfg;
  std::vector<uninit::safezones::Access> accesses;
  uninit::safezones::Grants grants;
};

// Random single-function control flow (entry 0, up to max_blocks blocks,
// possibly with cycles and unreachable blocks) plus random def/use accesses
// over a handful of variables and occasional entry grants. Deterministic per
// seed.
RandomCase random_case(uint64_t seed, int max_blocks = 12);

// Exhaustive check: does some entry-to-use walk reach `use` with no earlier
// definition or grant of its variable? Simple paths suffice (cutting a cycle
// out of an uninitialized walk keeps it uninitialized), so the search visits
// each block once per path.
bool uninit_path_exists(const RandomCase& rc, const uninit::safezones::Access& use);

// Exhaustive check used against zone soundness: can execution leave block b
// without var ever having been defined or granted (on some entry path that
// runs b to completion)?
bool exit_uninit_reachable(const RandomCase& rc, const uninit::safezones::VarKey& var, int b);

}  // namespace testsupport
