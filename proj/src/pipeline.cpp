#include "uninit/pipeline.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include <json.hpp>

#include "uninit/facts.hpp"
#include "uninit/il.hpp"
#include "uninit/plugins.hpp"
#include "uninit/pointsto.hpp"
#include "uninit/ssa.hpp"
#include "uninit/support.hpp"
#include "uninit/x86.hpp"

namespace uninit::pipeline {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw AnalysisError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json origin_json(const interproc::Origin& o) {
  json j;
  j["function"] = o.function;
  j["spd"] = o.spd;
  return j;
}

json warning_json(const interproc::Warning& w) {
  json j;
  j["function"] = w.use_ctx;
  j["use_addr"] = hex(w.use_addr);
  j["spd"] = w.var.spd;
  j["fld"] = w.var.fld;
  j["access"] = w.indirect ? "indirect" : "direct";
  j["origins"] = json::array();
  for (auto& o : w.origins) j["origins"].push_back(origin_json(o));
  j["witness"] = w.witness;
  j["status"] = w.status;
  if (!w.note.empty()) j["note"] = w.note;
  return j;
}

std::string render_json(const interproc::KnowledgeBase& kb,
                        const std::vector<interproc::WarningGroup>& groups) {
  json j;
  j["schema_version"] = 1;
  j["word_size"] = kb.model.word_size;
  j["rounds"] = kb.rounds;
  j["monitor_rounds"] = kb.monitor_rounds;
  j["groups"] = json::array();
  for (auto& g : groups) {
    json gj;
    gj["origin"] = origin_json(g.origin);
    gj["group_hash"] = hex(g.group_hash);
    gj["warnings"] = json::array();
    for (auto& w : g.members) gj["warnings"].push_back(warning_json(w));
    j["groups"].push_back(std::move(gj));
  }
  j["filtered"] = json::array();
  for (auto& w : kb.warnings)
    if (w.status != "raw") j["filtered"].push_back(warning_json(w));
  j["plugin_errors"] = kb.plugin_errors;
  return j.dump(2) + "\n";
}

std::string witness_str(const std::vector<int>& path) {
  std::string s;
  for (size_t i = 0; i < path.size(); ++i) {
    if (i) s += "->";
    s += std::to_string(path[i]);
  }
  return s;
}

std::string render_text(const interproc::KnowledgeBase& kb,
                        const std::vector<interproc::WarningGroup>& groups) {
  size_t raw = 0, filtered = 0;
  for (auto& w : kb.warnings) (w.status == "raw" ? raw : filtered) += 1;
  std::ostringstream o;
  o << "uninitialized stack reads: " << groups.size() << " group(s), " << raw
    << " warning(s), " << filtered << " filtered\n";
  for (auto& g : groups) {
    o << "\ngroup " << hex(g.group_hash) << ": origin " << g.origin.function
      << " spd " << g.origin.spd << "\n";
    for (auto& w : g.members) {
      o << "  " << w.use_ctx << "@" << hex(w.use_addr) << " var(" << w.var.spd
        << "," << w.var.fld << ") " << (w.indirect ? "indirect" : "direct");
      if (!w.witness.empty()) o << " path " << witness_str(w.witness);
      o << "\n";
    }
  }
  if (filtered) {
    o << "\nfiltered:\n";
    for (auto& w : kb.warnings) {
      if (w.status == "raw") continue;
      o << "  " << w.use_ctx << "@" << hex(w.use_addr) << " var(" << w.var.spd
        << "," << w.var.fld << ") [" << w.status << "]";
      if (!w.note.empty()) o << " " << w.note;
      o << "\n";
    }
  }
  for (auto& e : kb.plugin_errors) o << "plugin error: " << e << "\n";
  o << "\nrounds " << kb.rounds << ", monitor rounds " << kb.monitor_rounds
    << "\n";
  return o.str();
}

}  // namespace

void apply_env_defaults(RunConfig& cfg) {
  const char* path = std::getenv("UNINITSCAN_CONFIG");
  if (!path || !*path) return;
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw AnalysisError(std::string("bad config file: ") + e.what());
  }
  if (j.contains("word_size")) cfg.word_size = j["word_size"].get<int>();
  if (j.contains("threads")) cfg.threads = j["threads"].get<int>();
  if (j.contains("strict_externals"))
    cfg.strict_externals = j["strict_externals"].get<bool>();
  if (j.contains("max_rounds")) cfg.max_rounds = j["max_rounds"].get<int>();
  if (j.contains("path_budget")) cfg.path_budget = j["path_budget"].get<int>();
  if (j.contains("plugin_heap")) cfg.plugin_heap = j["plugin_heap"].get<bool>();
  if (j.contains("plugin_path")) cfg.plugin_path = j["plugin_path"].get<bool>();
  if (j.contains("plugin_error_handler"))
    cfg.plugin_error_handler = j["plugin_error_handler"].get<bool>();
  if (j.contains("allocators"))
    cfg.allocator_spec_path = j["allocators"].get<std::string>();
  if (j.contains("format"))
    cfg.format = j["format"].get<std::string>() == "json" ? Format::Json
                                                          : Format::Text;
}

extract::AnalysisModel build_model(const RunConfig& cfg) {
  if (cfg.kind == InputKind::FactsDir)
    return extract::facts_to_model(facts::load_facts(cfg.input));

  il::Program p = cfg.kind == InputKind::X86
                      ? x86::lift_x86_mini(read_file(cfg.input), cfg.word_size)
                      : il::parse_il(read_file(cfg.input), cfg.word_size);
  il::compute_spd(p);
  il::rebase_frame_pointer(p);
  ssa::to_ssa(p);
  return extract::extract_model(p, static_cast<unsigned>(std::max(1, cfg.threads)));
}

RunResult run(const RunConfig& cfg) {
  RunResult res;
  interproc::KnowledgeBase& kb = res.kb;
  kb.model = build_model(cfg);
  kb.db = kb.model.edb;
  pointsto::run(kb.db);

  std::vector<std::shared_ptr<interproc::Plugin>> plugs;
  if (cfg.plugin_heap) {
    auto specs = plugins::default_allocators();
    if (!cfg.allocator_spec_path.empty())
      specs = plugins::parse_allocator_specs(read_file(cfg.allocator_spec_path));
    plugs.push_back(plugins::make_heap_enrichment(std::move(specs)));
  }
  if (cfg.plugin_path) plugs.push_back(plugins::make_path_filter());
  if (cfg.plugin_error_handler) plugs.push_back(plugins::make_error_handler_filter());

  interproc::AnalyzeConfig acfg;
  acfg.max_rounds = cfg.max_rounds;
  acfg.strict_externals = cfg.strict_externals;
  acfg.threads = cfg.threads;
  acfg.path_budget = cfg.path_budget;
  interproc::monitor_loop(kb, plugs, acfg);

  if (!cfg.dump_dir.empty())
    facts::emit_facts(cfg.dump_idb ? kb.db : kb.model.edb, cfg.dump_dir);

  auto groups = interproc::group_warnings(kb.warnings);
  res.groups = groups.size();
  res.json_report = render_json(kb, groups);
  res.report =
      cfg.format == Format::Json ? res.json_report : render_text(kb, groups);
  res.exit_code = groups.empty() ? 0 : 1;
  return res;
}

namespace {

struct Manifest {
  int vuln_groups = -1;
  int patched_groups = 0;
  std::string plugins = "heap,path,error-handler";
  bool strict = false;
  InputKind kind = InputKind::IL;
  int word_size = 4;
  std::string vuln_origin;  // optional "function:spd" expectation
  std::string allocators;   // optional, relative to the manifest
};

Manifest parse_manifest(const std::string& path) {
  Manifest m;
  std::istringstream in(read_file(path));
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError(lineno, "manifest line is not key=value: " + line);
    std::string key = line.substr(0, eq), val = line.substr(eq + 1);
    try {
      if (key == "vuln_groups")
        m.vuln_groups = std::stoi(val);
      else if (key == "patched_groups")
        m.patched_groups = std::stoi(val);
      else if (key == "plugins")
        m.plugins = val;
      else if (key == "strict")
        m.strict = val == "1" || val == "true";
      else if (key == "input_kind")
        m.kind = val == "x86" ? InputKind::X86 : InputKind::IL;
      else if (key == "word_size")
        m.word_size = std::stoi(val);
      else if (key == "vuln_origin")
        m.vuln_origin = val;
      else if (key == "allocators")
        m.allocators = val;
      else
        throw ParseError(lineno, "unknown manifest key: " + key);
    } catch (const std::invalid_argument&) {
      throw ParseError(lineno, "bad number in manifest: " + val);
    }
  }
  if (m.vuln_groups < 1)
    throw ParseError(0, "manifest must set vuln_groups >= 1: " + path);
  return m;
}

bool has_plugin(const Manifest& m, const std::string& name) {
  std::istringstream ss(m.plugins);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (tok == name) return true;
  return false;
}

}  // namespace

CorpusResult run_corpus(const std::string& dir, const RunConfig& base) {
  CorpusResult out;
  std::vector<fs::path> manifests;
  if (fs::is_directory(dir))
    for (auto& e : fs::directory_iterator(dir))
      if (e.path().extension() == ".manifest") manifests.push_back(e.path());
  std::sort(manifests.begin(), manifests.end());

  std::ostringstream table;
  table << "case                          vuln        patched     result\n";
  for (auto& mp : manifests) {
    CaseResult cr;
    cr.name = mp.stem().string();
    try {
      Manifest m = parse_manifest(mp.string());
      const char* ext = m.kind == InputKind::X86 ? ".x86" : ".il";

      auto run_variant = [&](const std::string& variant) {
        RunConfig cfg = base;
        cfg.input = (mp.parent_path() / (cr.name + "." + variant + ext)).string();
        cfg.kind = m.kind;
        cfg.word_size = m.word_size;
        cfg.strict_externals = m.strict;
        cfg.plugin_heap = has_plugin(m, "heap");
        cfg.plugin_path = has_plugin(m, "path");
        cfg.plugin_error_handler = has_plugin(m, "error-handler");
        if (!m.allocators.empty())
          cfg.allocator_spec_path = (mp.parent_path() / m.allocators).string();
        cfg.dump_dir.clear();
        return run(cfg);
      };

      RunResult vuln = run_variant("vuln");
      RunResult patched = run_variant("patched");

      bool origin_ok = true;
      if (!m.vuln_origin.empty()) {
        origin_ok = false;
        auto colon = m.vuln_origin.rfind(':');
        interproc::Origin want{m.vuln_origin.substr(0, colon),
                               std::stoll(m.vuln_origin.substr(colon + 1))};
        for (auto& g : interproc::group_warnings(vuln.kb.warnings))
          origin_ok = origin_ok || g.origin == want;
      }

      cr.pass = static_cast<int>(vuln.groups) == m.vuln_groups &&
                static_cast<int>(patched.groups) == m.patched_groups &&
                origin_ok;
      std::ostringstream d;
      d << "vuln " << vuln.groups << "/" << m.vuln_groups << " patched "
        << patched.groups << "/" << m.patched_groups;
      if (!origin_ok) d << " origin mismatch (want " << m.vuln_origin << ")";
      cr.detail = d.str();
    } catch (const std::exception& e) {
      cr.pass = false;
      cr.detail = e.what();
    }
    out.all_pass = out.all_pass && cr.pass;
    std::string name = cr.name;
    name.resize(30, ' ');
    std::string detail = cr.detail;
    table << name << detail << (cr.pass ? "  PASS" : "  FAIL") << "\n";
    out.cases.push_back(std::move(cr));
  }
  if (manifests.empty()) table << "(no manifests found: vacuous pass)\n";
  out.table = table.str();
  return out;
}

}  // namespace uninit::pipeline
