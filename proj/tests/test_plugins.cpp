#include <doctest.h>

#include <fstream>
#include <sstream>

#include "uninit/il.hpp"
#include "uninit/plugins.hpp"
#include "uninit/pointsto.hpp"
#include "uninit/ssa.hpp"

using namespace uninit;
using namespace uninit::plugins;
using interproc::AnalyzeConfig;
using interproc::KnowledgeBase;
using interproc::Snapshot;
using interproc::Warning;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

KnowledgeBase analyzed(const std::string& il_text, const AnalyzeConfig& cfg = {}) {
  il::Program p = il::parse_il(il_text);
  il::compute_spd(p);
  ssa::to_ssa(p);
  KnowledgeBase kb;
  kb.model = extract::extract_model(p);
  kb.db = kb.model.edb;
  pointsto::run(kb.db);
  interproc::analyze_to_fixpoint(kb, cfg);
  return kb;
}

const Warning& only_warning(const KnowledgeBase& kb) {
  REQUIRE(kb.warnings.size() == 1);
  return kb.warnings[0];
}

}  // namespace

TEST_CASE("an unguarded read is a feasible path") {
  AnalyzeConfig cfg;
  KnowledgeBase kb = analyzed(R"(
    func main {
    entry:
      binop sub, esp, esp, 4;
      load eax, [esp+0];
      store [esp+0], 1;
      binop add, esp, esp, 4;
      ret;
    }
  )", cfg);
  // The later same-block store keeps the block in the zone, but the earlier
  // use must still be reachable.
  CHECK(path_feasible(Snapshot{kb, cfg}, only_warning(kb)) == Feasibility::Feasible);
}

TEST_CASE("a constant guard contradicting the skip branch is infeasible") {
  AnalyzeConfig cfg;
  KnowledgeBase kb = analyzed(R"(
    func main {
    entry:
      binop sub, esp, esp, 4;
      assign eax, 0;
      cmp t1, eax, 0;
      jnz t1, skip;
    init:
      store [esp+0], 7;
    skip:
      load ebx, [esp+0];
      binop add, esp, esp, 4;
      ret;
    }
  )", cfg);
  CHECK(path_feasible(Snapshot{kb, cfg}, only_warning(kb)) == Feasibility::Infeasible);
}

TEST_CASE("an unknown guard against a constant stays feasible") {
  // Some input makes eax nonzero, so the skipping path is satisfiable.
  AnalyzeConfig cfg;
  KnowledgeBase kb = analyzed(R"(
    func main {
    entry:
      binop sub, esp, esp, 4;
      cmp t1, eax, 0;
      jnz t1, skip;
    init:
      store [esp+0], 7;
    skip:
      load ebx, [esp+0];
      binop add, esp, esp, 4;
      ret;
    }
  )", cfg);
  CHECK(path_feasible(Snapshot{kb, cfg}, only_warning(kb)) == Feasibility::Feasible);
}

TEST_CASE("a comparison with no constant side keeps the verdict open") {
  AnalyzeConfig cfg;
  KnowledgeBase kb = analyzed(R"(
    func main {
    entry:
      binop sub, esp, esp, 4;
      cmp t1, eax, ebx;
      jnz t1, skip;
    init:
      store [esp+0], 7;
    skip:
      load ecx, [esp+0];
      binop add, esp, esp, 4;
      ret;
    }
  )", cfg);
  CHECK(path_feasible(Snapshot{kb, cfg}, only_warning(kb)) == Feasibility::Unknown);
}

TEST_CASE("an exhausted path budget degrades infeasible to unknown") {
  // The fall edge into the read contradicts the constant guard; the exit arm
  // is consistent but never reaches the read. With room to explore, that is
  // a proof of infeasibility.
  const char* text = R"(
    func main {
    entry:
      binop sub, esp, esp, 4;
      assign eax, 0;
      cmp t1, eax, 0;
      jz t1, out;
    use:
      load ebx, [esp+0];
      binop add, esp, esp, 4;
      ret;
    out:
      binop add, esp, esp, 4;
      ret;
    }
  )";
  AnalyzeConfig roomy;
  KnowledgeBase kb = analyzed(text, roomy);
  CHECK(path_feasible(Snapshot{kb, roomy}, only_warning(kb)) == Feasibility::Infeasible);

  AnalyzeConfig tight;
  tight.path_budget = 1;  // pruning the contradiction spends the whole budget
  KnowledgeBase kb2 = analyzed(text, tight);
  CHECK(path_feasible(Snapshot{kb2, tight}, only_warning(kb2)) == Feasibility::Unknown);
}

namespace {

// A try_init-style callee plus a caller whose two return-code arms take
// `bad_pad` and `good_pad` extra blocks before their exits.
std::string handler_program(int bad_pad, int good_pad) {
  std::ostringstream os;
  os << R"(
    func try_init {
    entry:
      load eax, [esp+4];
      cmp t1, ebx, 0;
      jz t1, fail;
    ok:
      store [eax+0], 1;
      assign eax, 0;
      ret;
    fail:
      assign eax, 1;
      ret;
    }
    func main {
    entry:
      binop sub, esp, esp, 4;
      lea ebx, [esp+0];
      push ebx;
      call try_init;
    after:
      binop add, esp, esp, 4;
      cmp t2, eax, 0;
      jz t2, good0;
    bad0:
  )";
  for (int i = 1; i <= bad_pad; ++i) os << "  nop;\n  bad" << i << ":\n";
  os << R"(
      binop add, esp, esp, 4;
      ret;
    good0:
  )";
  for (int i = 1; i <= good_pad; ++i) os << "  nop;\n  good" << i << ":\n";
  os << R"(
      load ecx, [esp+0];
      binop add, esp, esp, 4;
      ret;
    }
  )";
  return os.str();
}

}  // namespace

TEST_CASE("a short error exit near the return-code branch is handled") {
  AnalyzeConfig cfg;
  KnowledgeBase near = analyzed(handler_program(0, 0), cfg);
  CHECK(error_handled(Snapshot{near, cfg}, only_warning(near)));

  // Two blocks to the exit still counts as an error handler.
  KnowledgeBase mid = analyzed(handler_program(1, 1), cfg);
  CHECK(error_handled(Snapshot{mid, cfg}, only_warning(mid)));

  // At three blocks on both arms the branch no longer looks like one.
  KnowledgeBase far = analyzed(handler_program(2, 2), cfg);
  CHECK(!error_handled(Snapshot{far, cfg}, only_warning(far)));
}

TEST_CASE("reads never passed by pointer are not return-code handled") {
  AnalyzeConfig cfg;
  KnowledgeBase kb = analyzed(R"(
    func main {
    entry:
      binop sub, esp, esp, 4;
      load eax, [esp+0];
      binop add, esp, esp, 4;
      ret;
    }
  )", cfg);
  CHECK(!error_handled(Snapshot{kb, cfg}, only_warning(kb)));
}

TEST_CASE("allocator specs parse and reject malformed lines") {
  auto specs = parse_allocator_specs(
      "# zeroing and raw allocators\n"
      "\n"
      "xmalloc\t1\tnoinit\n"
      "zalloc\t2\tinit\n");
  REQUIRE(specs.size() == 2);
  CHECK(specs[0] == AllocatorSpec{"xmalloc", 1, false});
  CHECK(specs[1] == AllocatorSpec{"zalloc", 2, true});

  CHECK_THROWS_AS(parse_allocator_specs("solo\t1\n"), ParseError);
  CHECK_THROWS_AS(parse_allocator_specs("x\tone\tinit\n"), ParseError);
  CHECK_THROWS_AS(parse_allocator_specs("x\t0\tinit\n"), ParseError);
  CHECK_THROWS_AS(parse_allocator_specs("x\t1\tmaybe\n"), ParseError);
  CHECK_THROWS_AS(parse_allocator_specs("x\t1\tinit\nx\t2\tnoinit\n"), ParseError);

  auto defaults = default_allocators();
  REQUIRE(defaults.size() == 2);
  CHECK(defaults[0] == AllocatorSpec{"malloc", 1, false});
  CHECK(defaults[1] == AllocatorSpec{"calloc", 2, true});
}

TEST_CASE("heap tokens sit strictly below every stack delta") {
  CHECK(heap_token(0) == -1048577);
  CHECK(heap_token(1) == -1048578);
  CHECK(heap_token(0) < -il::kSpdCap);
  CHECK(heap_token(9) == heap_token(0) - 9);
}

TEST_CASE("allocator enrichment models malloc results as fresh storage") {
  il::Program p = il::parse_il(slurp(CORPUS_DIR "/heap_malloc.vuln.il"));
  il::compute_spd(p);
  ssa::to_ssa(p);
  KnowledgeBase kb;
  kb.model = extract::extract_model(p);
  kb.db = kb.model.edb;
  pointsto::run(kb.db);
  interproc::monitor_loop(kb, {make_heap_enrichment()});

  const Warning& w = only_warning(kb);
  CHECK(w.var.spd == heap_token(0));
  CHECK(w.var.fld == 0);
  CHECK(w.origin == interproc::Origin{"main", heap_token(0)});
  CHECK(kb.monitor_rounds >= 1);
}

TEST_CASE("zeroing allocators mark their storage always safe") {
  il::Program p = il::parse_il(slurp(CORPUS_DIR "/heap_calloc.patched.il"));
  il::compute_spd(p);
  ssa::to_ssa(p);
  KnowledgeBase kb;
  kb.model = extract::extract_model(p);
  kb.db = kb.model.edb;
  pointsto::run(kb.db);
  interproc::monitor_loop(kb, {make_heap_enrichment()});

  CHECK(kb.warnings.empty());
  REQUIRE(kb.always_safe.count("main"));
  CHECK(kb.always_safe.at("main") ==
        std::set<int64_t>{heap_token(0), heap_token(1)});
}
