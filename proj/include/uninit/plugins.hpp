#pragma once

#include <memory>
#include <string>
#include <vector>

#include "uninit/interproc.hpp"

namespace uninit::plugins {

// Structural path feasibility: re-walks entry-to-use paths that avoid the
// variable's safe zone, accumulating constant comparison constraints from
// the branches crossed; contradictory paths are pruned.
enum class Feasibility { Feasible, Infeasible, Unknown };

Feasibility path_feasible(const interproc::Snapshot& snap,
                          const interproc::Warning& w);

// Return-value sanitization: true when the warned storage was passed by
// pointer to a call whose return value feeds a branch with a short error
// exit (fewer than 3 blocks to a function exit).
bool error_handled(const interproc::Snapshot& snap, const interproc::Warning& w);

struct AllocatorSpec {
  std::string name;
  int size_arg = 1;        // 1-based position of the size argument
  bool initializes = false;

  bool operator==(const AllocatorSpec&) const = default;
};

// malloc-like (uninitializing) and calloc-like (initializing) defaults.
std::vector<AllocatorSpec> default_allocators();

// One entry per line: `name <tab> size_arg_index <tab> init|noinit`.
// Throws ParseError on malformed lines or duplicate names.
std::vector<AllocatorSpec> parse_allocator_specs(const std::string& text);

// Lowest heap token handed out before `index` ones: tokens sit strictly
// below every representable stack delta.
int64_t heap_token(size_t index);

std::shared_ptr<interproc::Plugin> make_path_filter();
std::shared_ptr<interproc::Plugin> make_error_handler_filter();
std::shared_ptr<interproc::Plugin> make_heap_enrichment(
    std::vector<AllocatorSpec> specs = default_allocators());

}  // namespace uninit::plugins
