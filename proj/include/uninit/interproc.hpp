#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "uninit/extract.hpp"
#include "uninit/facts.hpp"
#include "uninit/safezones.hpp"

namespace uninit::interproc {

// One call site viewed as an interprocedural edge.
struct ArgMapping {
  int index = 0;            // 1-based argument position
  std::string actual;       // SSA atom of the value passed
  int64_t callee_spd = 0;   // delta of the argument slot in the callee frame
};

struct CallEdge {
  std::string caller;
  std::string callee;
  uint64_t call_addr = 0;
  int call_block = 0;
  int fallthrough_block = -1;  // caller block entered after the call returns
  bool resolved = false;       // callee body is part of the analyzed program
  std::string ret_atom;
  std::vector<ArgMapping> args;
};

std::vector<CallEdge> call_edges(const extract::AnalysisModel& m);

// Frame that owns a variable's storage.
struct Origin {
  std::string function;
  int64_t spd = 0;

  auto key() const { return std::tie(function, spd); }
  bool operator<(const Origin& o) const { return key() < o.key(); }
  bool operator==(const Origin&) const = default;
};

uint64_t group_hash_of(const Origin& o);

struct Warning {
  safezones::VarKey var;
  uint64_t use_addr = 0;
  std::string use_ctx;         // function containing the use
  bool indirect = false;       // use goes through a pointer
  Origin origin;               // smallest origin; identifies the group
  std::vector<Origin> origins; // every candidate frame, sorted
  uint64_t group_hash = 0;
  std::string status = "raw";  // or "filtered-by-<plugin>"
  std::string note;            // filter annotation
  std::vector<int> witness;    // entry..use block path in use_ctx

  std::string key() const;     // stable identity, survives reanalysis
  auto sort_key() const { return std::tie(use_ctx, use_addr, var, indirect); }
  bool operator<(const Warning& w) const { return sort_key() < w.sort_key(); }
};

struct WarningGroup {
  Origin origin;
  uint64_t group_hash = 0;
  std::vector<Warning> members;  // sorted
};

// Partitions unfiltered warnings by origin; groups sorted by origin.
std::vector<WarningGroup> group_warnings(const std::vector<Warning>& ws);

// Per-function analysis state.
struct FuncAnalysis {
  std::vector<safezones::Access> accesses;
  safezones::Grants grants;
  std::map<safezones::VarKey, safezones::SafeZone> zones;
  std::vector<safezones::Verdict> verdicts;
};

struct KnowledgeBase {
  extract::AnalysisModel model;
  facts::FactBase db;  // base facts plus the points-to fixpoint
  std::map<std::string, FuncAnalysis> funcs;

  // Variables initialized by construction (e.g. zeroing allocators): fn -> spd.
  std::map<std::string, std::set<int64_t>> always_safe;

  // Warning key -> filtering plugin / annotation. Applied on every rebuild.
  std::map<std::string, std::string> filtered;
  std::map<std::string, std::string> filter_notes;

  std::vector<Warning> warnings;
  std::vector<std::string> plugin_errors;

  int rounds = 0;          // propagation rounds of the last analysis
  int monitor_rounds = 0;  // monitor iterations until stability
};

struct AnalyzeConfig {
  int max_rounds = 100;
  bool strict_externals = false;  // unknown callees do not initialize pointee args
  int threads = 1;
  int path_budget = 10000;        // path enumeration cap for feasibility filtering

  // Test hook: invoked once per propagation round with the zones so far.
  std::function<void(int, const std::map<std::string, FuncAnalysis>&)> observer;
};

// One propagation round over the current zones: for each call edge and each
// pointer argument, when every live exit of the callee lies in the zone of
// the pointed-to storage, the caller's fallthrough block is granted for the
// corresponding caller variable. Pure; result is independent of edge order.
std::map<std::string, safezones::Grants> propagate_callee_safety(
    const KnowledgeBase& kb, const std::vector<CallEdge>& edges);

// Alternates zone computation and callee-safety propagation until the zones
// stabilize, then classifies every access and materializes warnings.
// Throws AnalysisError when max_rounds is exceeded.
void analyze_to_fixpoint(KnowledgeBase& kb, const AnalyzeConfig& cfg = {});

// Frames owning the storage behind (fn, var): argument-slot variables are
// chased through the call graph to the frames that created the pointer;
// everything else originates in fn itself. Sorted; never empty.
std::vector<Origin> track_origin(const KnowledgeBase& kb, const std::string& fn,
                                 const safezones::VarKey& var);

// Checker/filter plugin interface. Plugins observe an immutable snapshot and
// return a delta; they never mutate the base directly.
struct Snapshot {
  const KnowledgeBase& kb;
  const AnalyzeConfig& cfg;
};

struct PluginDelta {
  std::vector<std::pair<std::string, facts::Tuple>> facts;
  std::map<std::string, std::set<int64_t>> always_safe;
  std::vector<std::pair<std::string, std::string>> filtered;  // warning key, note

  bool empty() const { return facts.empty() && always_safe.empty() && filtered.empty(); }
};

class Plugin {
 public:
  virtual ~Plugin() = default;
  virtual std::string name() const = 0;
  virtual PluginDelta run(const Snapshot& snap) = 0;
};

// Runs the analysis, then feeds knowledge-base changes to the plugins until
// a global fixpoint: plugin fact deltas rejoin the points-to rules
// incrementally and trigger reanalysis; filter deltas mark warnings. A
// throwing plugin is disabled and recorded in kb.plugin_errors.
void monitor_loop(KnowledgeBase& kb,
                  const std::vector<std::shared_ptr<Plugin>>& plugins,
                  const AnalyzeConfig& cfg = {});

}  // namespace uninit::interproc
