#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "uninit/facts.hpp"
#include "uninit/pipeline.hpp"
#include "uninit/pointsto.hpp"
#include "uninit/support.hpp"

using namespace uninit;

namespace {

pipeline::InputKind resolve_kind(const std::string& kind, const std::string& input) {
  if (kind == "il") return pipeline::InputKind::IL;
  if (kind == "x86") return pipeline::InputKind::X86;
  if (kind == "facts") return pipeline::InputKind::FactsDir;
  if (std::filesystem::is_directory(input)) return pipeline::InputKind::FactsDir;
  if (input.size() > 4 && input.substr(input.size() - 4) == ".x86")
    return pipeline::InputKind::X86;
  return pipeline::InputKind::IL;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"uninitscan: finds reads of uninitialized stack memory in lifted code"};
  app.require_subcommand(1);

  pipeline::RunConfig cfg;
  try {
    pipeline::apply_env_defaults(cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  std::string kind = "auto", format, input;
  bool no_heap = false, no_path = false, no_err = false, dump_idb = false;
  std::string dump_dir, allocators;

  auto add_common = [&](CLI::App* c) {
    c->add_option("input", input, "program file or facts directory")->required();
    c->add_option("--input-kind", kind, "il | x86 | facts | auto")
        ->check(CLI::IsMember({"il", "x86", "facts", "auto"}));
    c->add_option("--word-size", cfg.word_size, "stack word size in bytes");
    c->add_option("--threads", cfg.threads, "worker threads");
    c->add_option("--max-rounds", cfg.max_rounds, "fixpoint iteration cap");
    c->add_option("--path-budget", cfg.path_budget,
                  "path enumeration cap for the feasibility filter");
    c->add_flag("--strict-externals", cfg.strict_externals,
                "unknown callees do not initialize pointee arguments");
    c->add_flag("--no-plugin-heap", no_heap, "disable allocator enrichment");
    c->add_flag("--no-plugin-path", no_path, "disable the path feasibility filter");
    c->add_flag("--no-plugin-error-handler", no_err,
                "disable the error handler filter");
    c->add_option("--allocators", allocators,
                  "allocator spec file (name<TAB>size_arg<TAB>init|noinit)");
  };

  CLI::App* analyze = app.add_subcommand("analyze", "analyze a program and report");
  add_common(analyze);
  analyze->add_option("--format", format, "text | json")
      ->check(CLI::IsMember({"text", "json"}));
  analyze->add_option("--dump-facts", dump_dir, "write fact files to this directory");
  analyze->add_flag("--dump-idb", dump_idb, "include derived relations in the dump");

  CLI::App* factscmd = app.add_subcommand("facts", "extract fact files only");
  add_common(factscmd);
  factscmd->add_option("--out", dump_dir, "output directory")->required();
  factscmd->add_flag("--idb", dump_idb, "also emit derived relations");

  CLI::App* corpus = app.add_subcommand(
      "corpus", "run paired vulnerable/patched cases against their manifests");
  std::string corpus_dir;
  corpus->add_option("dir", corpus_dir, "corpus directory")->required();
  corpus->add_option("--threads", cfg.threads, "worker threads");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(corpus)) {
      auto res = pipeline::run_corpus(corpus_dir, cfg);
      std::cout << res.table;
      return res.all_pass ? 0 : 1;
    }

    cfg.input = input;
    cfg.kind = resolve_kind(kind, input);
    if (!format.empty())
      cfg.format = format == "json" ? pipeline::Format::Json : pipeline::Format::Text;
    cfg.plugin_heap = cfg.plugin_heap && !no_heap;
    cfg.plugin_path = cfg.plugin_path && !no_path;
    cfg.plugin_error_handler = cfg.plugin_error_handler && !no_err;
    if (!allocators.empty()) cfg.allocator_spec_path = allocators;

    if (app.got_subcommand(factscmd)) {
      auto model = pipeline::build_model(cfg);
      if (dump_idb) {
        facts::FactBase db = model.edb;
        pointsto::run(db);
        facts::emit_facts(db, dump_dir);
      } else {
        facts::emit_facts(model.edb, dump_dir);
      }
      std::cout << "facts written to " << dump_dir << "\n";
      return 0;
    }

    cfg.dump_dir = dump_dir;
    cfg.dump_idb = dump_idb;
    auto res = pipeline::run(cfg);
    std::cout << res.report;
    return res.exit_code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
