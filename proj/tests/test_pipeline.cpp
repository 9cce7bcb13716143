#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "uninit/pipeline.hpp"

using namespace uninit;
using namespace uninit::pipeline;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path fresh_dir(const std::string& tag) {
  fs::path d = fs::temp_directory_path() / ("uninit_pipe_" + tag);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

RunConfig config_for(const std::string& input, InputKind kind = InputKind::IL) {
  RunConfig cfg;
  cfg.input = input;
  cfg.kind = kind;
  return cfg;
}

}  // namespace

TEST_CASE("analysis resumed from dumped facts reproduces the report") {
  fs::path dump = fresh_dir("dump");
  RunConfig src = config_for(CORPUS_DIR "/chain_passthrough.vuln.il");
  src.dump_dir = dump.string();
  RunResult from_source = run(src);
  REQUIRE(from_source.groups == 1);
  CHECK(from_source.exit_code == 1);

  RunResult from_facts = run(config_for(dump.string(), InputKind::FactsDir));
  CHECK(from_facts.groups == from_source.groups);
  CHECK(from_facts.exit_code == from_source.exit_code);
  CHECK(from_facts.report == from_source.report);
  CHECK(from_facts.json_report == from_source.json_report);
}

TEST_CASE("repeated runs and extra worker threads change nothing") {
  RunConfig base = config_for(CORPUS_DIR "/stack_args_x86.vuln.x86", InputKind::X86);
  RunResult once = run(base);
  RunResult twice = run(base);
  CHECK(once.report == twice.report);
  CHECK(once.json_report == twice.json_report);

  RunConfig wide = base;
  wide.threads = 4;
  RunResult threaded = run(wide);
  CHECK(threaded.report == once.report);
  CHECK(threaded.json_report == once.json_report);
}

TEST_CASE("clean programs exit zero with no groups") {
  RunResult res = run(config_for(CORPUS_DIR "/chain_passthrough.patched.il"));
  CHECK(res.groups == 0);
  CHECK(res.exit_code == 0);
  json j = json::parse(res.json_report);
  CHECK(j["groups"].empty());
}

TEST_CASE("the json report carries the full schema") {
  RunConfig cfg = config_for(CORPUS_DIR "/callee_reads_param.vuln.il");
  cfg.format = Format::Json;
  RunResult res = run(cfg);
  REQUIRE(res.groups == 1);
  // In json format the rendered report is the structured one.
  CHECK(res.report == res.json_report);

  json j = json::parse(res.json_report);
  CHECK(j["schema_version"] == 1);
  CHECK(j["word_size"] == 4);
  CHECK(j["rounds"].get<int>() >= 1);
  CHECK(j["monitor_rounds"].get<int>() >= 1);
  CHECK(j["plugin_errors"].empty());
  REQUIRE(j["groups"].size() == 1);

  const json& g = j["groups"][0];
  CHECK(g["origin"]["function"] == "main");
  CHECK(g["origin"]["spd"] == -8);
  CHECK(g["group_hash"].get<std::string>().starts_with("0x"));
  REQUIRE(g["warnings"].size() >= 1);

  const json& w = g["warnings"][0];
  CHECK(w.contains("function"));
  CHECK(w["use_addr"].get<std::string>().starts_with("0x"));
  CHECK(w.contains("spd"));
  CHECK(w.contains("fld"));
  CHECK((w["access"] == "direct" || w["access"] == "indirect"));
  CHECK(w["status"] == "raw");
  CHECK(w.contains("witness"));
  CHECK(w["origins"].size() >= 1);
}

TEST_CASE("an empty corpus directory passes vacuously with a notice") {
  fs::path d = fresh_dir("emptycorpus");
  CorpusResult res = run_corpus(d.string(), RunConfig{});
  CHECK(res.cases.empty());
  CHECK(res.all_pass);
  CHECK(res.table.find("vacuous pass") != std::string::npos);
}

TEST_CASE("the environment config file fills run defaults") {
  fs::path d = fresh_dir("envcfg");
  fs::path cfg_path = d / "cfg.json";
  {
    std::ofstream out(cfg_path);
    out << R"({"word_size": 8, "threads": 3, "strict_externals": true,
               "max_rounds": 17, "path_budget": 99, "plugin_path": false,
               "format": "json"})";
  }
  setenv("UNINITSCAN_CONFIG", cfg_path.c_str(), 1);
  RunConfig cfg;
  apply_env_defaults(cfg);
  CHECK(cfg.word_size == 8);
  CHECK(cfg.threads == 3);
  CHECK(cfg.strict_externals);
  CHECK(cfg.max_rounds == 17);
  CHECK(cfg.path_budget == 99);
  CHECK(!cfg.plugin_path);
  CHECK(cfg.plugin_heap);  // untouched keys keep their defaults
  CHECK(cfg.format == Format::Json);

  {
    std::ofstream out(cfg_path);
    out << "{ not json";
  }
  RunConfig broken;
  CHECK_THROWS_AS(apply_env_defaults(broken), AnalysisError);

  unsetenv("UNINITSCAN_CONFIG");
  RunConfig untouched;
  apply_env_defaults(untouched);
  CHECK(untouched.word_size == 4);
  CHECK(untouched.format == Format::Text);
}

TEST_CASE("bad inputs fail with parse or analysis errors") {
  fs::path d = fresh_dir("badinput");
  fs::path garbled = d / "garbled.il";
  {
    std::ofstream out(garbled);
    out << "func broken { this is not a statement }\n";
  }
  CHECK_THROWS_AS(run(config_for(garbled.string())), ParseError);
  CHECK_THROWS_AS(run(config_for((d / "missing.il").string())), AnalysisError);
}
