#pragma once

#include <string>
#include <vector>

#include "uninit/extract.hpp"
#include "uninit/interproc.hpp"

namespace uninit::pipeline {

enum class InputKind { IL, X86, FactsDir };
enum class Format { Text, Json };

struct RunConfig {
  std::string input;
  InputKind kind = InputKind::IL;
  int word_size = 4;
  int threads = 1;
  bool plugin_heap = true;
  bool plugin_path = true;
  bool plugin_error_handler = true;
  std::string allocator_spec_path;  // optional allocator TSV
  bool strict_externals = false;
  int max_rounds = 100;
  int path_budget = 10000;
  Format format = Format::Text;
  std::string dump_dir;  // when set, fact files are written here
  bool dump_idb = false; // include derived relations in the dump
};

// Overrides defaults from the JSON file named by the UNINITSCAN_CONFIG
// environment variable, when present. Explicit flags are applied afterwards
// by the caller, so they win.
void apply_env_defaults(RunConfig& cfg);

struct RunResult {
  interproc::KnowledgeBase kb;
  std::string report;       // rendered in the requested format
  std::string json_report;  // canonical structured report, always built
  size_t groups = 0;        // unfiltered warning groups
  int exit_code = 0;        // 0 clean, 1 warnings present
};

// Parses/lifts the input into the analysis model (or reloads it from a
// facts directory). Throws ParseError/AnalysisError on bad input.
extract::AnalysisModel build_model(const RunConfig& cfg);

// Full pipeline: model, points-to fixpoint, zone fixpoint, plugins, report.
RunResult run(const RunConfig& cfg);

struct CaseResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct CorpusResult {
  std::vector<CaseResult> cases;
  bool all_pass = true;
  std::string table;  // rendered pass/fail matrix
};

// Runs every `<case>.manifest` in dir against its paired vulnerable and
// patched programs. Manifest lines are `key=value`: vuln_groups (required),
// patched_groups (default 0), plugins (csv of heap,path,error-handler;
// default all), strict (0/1), input_kind (il|x86), word_size, allocators
// (path relative to the manifest).
CorpusResult run_corpus(const std::string& dir, const RunConfig& base);

}  // namespace uninit::pipeline
