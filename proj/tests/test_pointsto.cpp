#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "support/absint.hpp"
#include "uninit/extract.hpp"
#include "uninit/pointsto.hpp"
#include "uninit/ssa.hpp"
#include "uninit/x86.hpp"

using namespace uninit;
using facts::atom;
using facts::num;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// Marks every address pair of `addrs` as mutually reachable in `ctx`,
// including reflexively; micro examples below are straight-line.
void reach_all(facts::FactBase& db, const std::string& ctx,
               std::initializer_list<int64_t> addrs) {
  for (int64_t a : addrs)
    for (int64_t b : addrs)
      if (a >= b) db.add("CanReach", {num(a), num(b), atom(ctx)});
}

facts::FactBase saturated_demo() {
  il::Program p = x86::lift_x86_mini(slurp(TEST_DATA_DIR "/pointer_arg_demo.x86"));
  il::compute_spd(p);
  ssa::to_ssa(p);
  facts::FactBase db = extract::extract_edb(p);
  pointsto::run(db);
  return db;
}

}  // namespace

TEST_CASE("address-of and copy rules seed and propagate") {
  facts::FactBase db;
  db.add("StackPointer", {atom("eax_1"), num(100), num(-8)});
  db.add("Assign", {atom("ebx_1"), atom("eax_1"), num(101)});
  db.add("Assign", {atom("ecx_1"), atom("ebx_1"), num(99)});  // before the def
  reach_all(db, "f", {100, 101});
  db.add("CanReach", {num(99), num(99), atom("f")});  // 99 cannot see 100
  pointsto::run(db);

  CHECK(db.contains("VPtsTo", {atom("eax_1"), num(-8), num(100), atom("f")}));
  CHECK(db.contains("VPtsTo", {atom("ebx_1"), num(-8), num(101), atom("f")}));
  // The copy at 99 executes before the address is taken: nothing flows.
  CHECK(db.tuples("VPtsTo").size() == 2);
}

TEST_CASE("stores create pointer fields and loads read them back") {
  facts::FactBase db;
  // p = &slot(-16); q = &slot(-4); *(p+0) = q; r = *(p+0)
  db.add("StackPointer", {atom("p_1"), num(100), num(-16)});
  db.add("StackPointer", {atom("q_1"), num(101), num(-4)});
  db.add("Store", {atom("p_1"), num(0), atom("q_1"), num(102), atom("f")});
  db.add("Load", {atom("r_1"), atom("p_1"), num(0), num(103), atom("f")});
  reach_all(db, "f", {100, 101, 102, 103});
  pointsto::run(db);

  CHECK(db.contains("PointerPtsTo", {num(-16), num(0), num(-4), atom("f")}));
  CHECK(db.contains("VPtsTo", {atom("r_1"), num(-4), num(103), atom("f")}));
  // The write and read both touch the pointed-to variable.
  CHECK(db.contains("IndirectDef", {atom("p_1"), num(-16), num(102)}));
  CHECK(db.contains("IndirectUse", {atom("p_1"), num(-16), num(103)}));
}

TEST_CASE("pointer arithmetic shifts the delta by known constants") {
  facts::FactBase db;
  db.add("StackPointer", {atom("p_1"), num(100), num(-32)});
  db.add("Constant", {atom("four_1"), num(4), num(101)});
  db.add("BinOp", {atom("add"), atom("a_1"), atom("p_1"), atom("four_1"), num(102), atom("f")});
  db.add("BinOp", {atom("add"), atom("b_1"), atom("four_1"), atom("p_1"), num(103), atom("f")});
  db.add("BinOp", {atom("sub"), atom("c_1"), atom("p_1"), atom("four_1"), num(104), atom("f")});
  // sub with the pointer on the right has no stack meaning.
  db.add("BinOp", {atom("sub"), atom("d_1"), atom("four_1"), atom("p_1"), num(105), atom("f")});
  reach_all(db, "f", {100, 101, 102, 103, 104, 105});
  pointsto::run(db);

  CHECK(db.contains("VPtsTo", {atom("a_1"), num(-28), num(102), atom("f")}));
  CHECK(db.contains("VPtsTo", {atom("b_1"), num(-28), num(103), atom("f")}));
  CHECK(db.contains("VPtsTo", {atom("c_1"), num(-36), num(104), atom("f")}));
  for (const auto& t : db.tuples("VPtsTo")) CHECK(facts::as_atom(t[0]) != "d_1");
}

TEST_CASE("parameters surface in the callee at their translated delta") {
  facts::FactBase db;
  db.add("Param", {atom("[esp_3]"), num(2), num(500), atom("caller"), atom("[esp+8]"),
                   num(600), atom("callee")});
  db.add("TranslateSPD", {num(2), atom("callee"), num(8)});
  pointsto::run(db);
  CHECK(db.contains("VPtsTo", {atom("[esp+8]"), num(8), num(600), atom("callee")}));
}

TEST_CASE("phis join source addresses without a reachability guard") {
  facts::FactBase db;
  db.add("StackPointer", {atom("eax_1"), num(100), num(-8)});
  db.add("CanReach", {num(100), num(100), atom("f")});
  db.add("Phi", {atom("eax_3"), atom("eax_1"), num(4096000), atom("f")});
  pointsto::run(db);
  CHECK(db.contains("VPtsTo", {atom("eax_3"), num(-8), num(4096000), atom("f")}));
}

TEST_CASE("pointer argument demo derives the documented points-to entries") {
  facts::FactBase db = saturated_demo();
  CHECK(db.contains("VPtsTo", {atom("[esp_17]"), num(-48), num(0x80490f4), atom("main")}));
  CHECK(db.contains("VPtsTo", {atom("[esp+4]"), num(4), num(0x8049000), atom("foo")}));

  auto res = pointsto::query_indirect(db);
  REQUIRE(res.accesses.size() == 1);
  const auto& a = res.accesses[0];
  CHECK(a.ctx == "foo");
  CHECK(a.spd == 4);
  CHECK(a.fld == 4);
  CHECK(a.addr == 0x8049005);
  CHECK(!a.is_def);
  CHECK(a.var == "eax_1");
  CHECK(res.skipped_negative_field == 0);
}

TEST_CASE("accesses below the pointee base are dropped and counted") {
  il::Program p = il::parse_il(R"(
    func f {
    entry:
      lea eax, [esp-8];
      store [eax-4], 1;
      load ebx, [eax-4];
      store [eax+0], 2;
      ret;
    }
  )");
  il::compute_spd(p);
  ssa::to_ssa(p);
  facts::FactBase db = extract::extract_edb(p);
  pointsto::run(db);
  auto res = pointsto::query_indirect(db);
  CHECK(res.skipped_negative_field == 2);
  REQUIRE(res.accesses.size() == 1);
  CHECK(res.accesses[0].is_def);
  CHECK(res.accesses[0].spd == -8);
  CHECK(res.accesses[0].fld == 0);
}

TEST_CASE("concrete execution claims are all derived by the rules") {
  size_t programs = 0, claims_total = 0;
  for (const auto& entry : fs::directory_iterator(CORPUS_DIR)) {
    std::string path = entry.path().string();
    bool is_il = path.ends_with(".il");
    bool is_x86 = path.ends_with(".x86");
    if (!is_il && !is_x86) continue;
    il::Program p = is_il ? il::parse_il(slurp(path)) : x86::lift_x86_mini(slurp(path));

    size_t instrs = 0;
    for (const auto& f : p.functions)
      for (const auto& b : f.blocks) instrs += b.stmts.size();
    if (instrs > 30) continue;

    il::compute_spd(p);
    ssa::to_ssa(p);
    facts::FactBase db = extract::extract_edb(p);
    pointsto::run(db);

    ++programs;
    for (const auto& f : p.functions) {
      auto claims = testsupport::interpret_function(p, f);
      claims_total += claims.size();
      auto missing = testsupport::unsupported_claims(claims, db);
      CAPTURE(path);
      CAPTURE(f.name);
      CHECK(missing.empty());
      if (!missing.empty()) {
        for (const auto& c : missing)
          MESSAGE(c.fn << ": " << c.atom << " -> " << c.delta << " @" << c.addr);
      }
    }
  }
  // The corpus provides a meaningful exercise, not a vacuous pass.
  CHECK(programs >= 20);
  CHECK(claims_total >= 30);
}
