#include <doctest.h>

#include <deque>
#include <map>
#include <set>

#include "support/randcfg.hpp"
#include "uninit/il.hpp"
#include "uninit/ssa.hpp"

using namespace uninit;

namespace {

std::set<int> reachable_without(const std::vector<std::vector<int>>& succs, int entry, int cut) {
  std::set<int> seen;
  if (entry == cut) return seen;
  seen.insert(entry);
  std::deque<int> work{entry};
  while (!work.empty()) {
    int b = work.front();
    work.pop_front();
    for (int s : succs[static_cast<size_t>(b)])
      if (s != cut && seen.insert(s).second) work.push_back(s);
  }
  return seen;
}

// a dominates b iff removing a cuts every entry path to b.
bool brute_dominates(const std::vector<std::vector<int>>& succs, int entry, int a, int b) {
  if (a == b) return true;
  return reachable_without(succs, entry, a).count(b) == 0;
}

il::Program diamond() {
  return il::parse_il(R"(
    func f {
    entry:
      cmp t1, eax, 0;
      jz t1, right;
    left:
      assign ecx, 1;
      jmp join;
    right:
      assign ecx, 2;
    join:
      assign edx, ecx;
      ret;
    }
  )");
}

}  // namespace

TEST_CASE("dominators match the brute-force definition on random graphs") {
  for (uint64_t seed = 1; seed <= 60; ++seed) {
    testsupport::RandomCase rc = testsupport::random_case(seed);
    auto succs = rc.cfg.succ_lists();
    auto preds = rc.cfg.pred_lists();
    int n = rc.cfg.n_blocks();
    ssa::DomInfo dom = ssa::compute_dominators_adj(n, rc.cfg.entry, succs, preds);

    std::set<int> reach = reachable_without(succs, rc.cfg.entry, -1);
    for (int b = 0; b < n; ++b) {
      CAPTURE(seed);
      CAPTURE(b);
      if (!reach.count(b)) {
        CHECK(dom.unreachable.count(b) == 1);
        CHECK(dom.idom[static_cast<size_t>(b)] == -1);
        continue;
      }
      for (int a = 0; a < n; ++a) {
        if (!reach.count(a)) continue;
        CAPTURE(a);
        CHECK(dom.dominates(a, b) == brute_dominates(succs, rc.cfg.entry, a, b));
      }
    }

    // dominees(a) is exactly the set {b : a dominates b}.
    for (int a = 0; a < n; ++a) {
      if (!reach.count(a)) continue;
      std::vector<int> expect;
      for (int b = 0; b < n; ++b)
        if (reach.count(b) && brute_dominates(succs, rc.cfg.entry, a, b)) expect.push_back(b);
      CHECK(dom.dominees(a) == expect);
    }

    // Dominance frontier: a dominates a predecessor of b but not b strictly.
    for (int a = 0; a < n; ++a) {
      if (!reach.count(a)) continue;
      std::set<int> expect;
      for (int b = 0; b < n; ++b) {
        if (!reach.count(b)) continue;
        bool pred_dom = false;
        for (int p : preds[static_cast<size_t>(b)])
          pred_dom = pred_dom || (reach.count(p) && dom.dominates(a, p));
        if (pred_dom && !(a != b && dom.dominates(a, b))) expect.insert(b);
      }
      CHECK(dom.frontier[static_cast<size_t>(a)] == expect);
    }
  }
}

TEST_CASE("idom of the entry is itself") {
  il::Program p = diamond();
  ssa::DomInfo dom = ssa::compute_dominators(p.functions[0]);
  CHECK(dom.idom[0] == 0);
  CHECK(dom.dominates(0, 3));
  CHECK_FALSE(dom.dominates(1, 3));
}

TEST_CASE("ssa places a phi at the join of two definitions") {
  il::Program p = diamond();
  il::compute_spd(p);
  ssa::to_ssa(p);
  const il::Function& f = p.functions[0];
  REQUIRE(f.ssa_form);
  const il::BasicBlock& join = f.blocks[3];
  REQUIRE(join.phis.size() == 1);
  CHECK(join.phis[0].dst.name == "ecx");
  REQUIRE(join.phis[0].sources.size() == join.preds.size());
  // Both sources are real definitions, one per branch, and differ.
  CHECK(join.phis[0].sources[0].version > 0);
  CHECK(join.phis[0].sources[1].version > 0);
  CHECK(join.phis[0].sources[0].version != join.phis[0].sources[1].version);
  // The use after the join reads the phi's definition.
  CHECK(join.stmts[0].src.reg.name == "ecx");
  CHECK(join.stmts[0].src.reg.version == join.phis[0].dst.version);
}

TEST_CASE("each version has exactly one definition site and zero is reserved") {
  il::Program p = diamond();
  il::compute_spd(p);
  ssa::to_ssa(p);
  const il::Function& f = p.functions[0];
  std::set<uint64_t> sites;
  for (const auto& [key, addr] : f.def_site) {
    CHECK(key.second >= 1);  // version 0 is live-on-entry, never defined
    sites.insert(addr);
  }
  // All definition addresses are distinct statements or phis.
  CHECK(sites.size() == f.def_site.size());
  // eax is never defined: every reference keeps version 0.
  for (const auto& b : f.blocks)
    for (const auto& s : b.stmts) {
      if (!s.lhs.is_const && s.lhs.reg.name == "eax") CHECK(s.lhs.reg.version == 0);
      if (!s.src.is_const && s.src.reg.name == "eax") CHECK(s.src.reg.version == 0);
    }
}

TEST_CASE("phi addresses are synthetic and unique above real ones") {
  il::Program p = diamond();
  il::compute_spd(p);
  ssa::to_ssa(p);
  const il::Function& f = p.functions[0];
  uint64_t max_real = 0;
  for (const auto& b : f.blocks)
    for (const auto& s : b.stmts) max_real = std::max(max_real, s.addr);
  std::set<uint64_t> phi_addrs;
  for (const auto& b : f.blocks)
    for (const auto& phi : b.phis) {
      CHECK(phi.addr > max_real);
      CHECK(phi_addrs.insert(phi.addr).second);
    }
}

TEST_CASE("call sites snapshot the live definition of every register") {
  il::Program p = il::parse_il(R"(
    func f {
    entry:
      assign eax, 1;
      assign ebx, 2;
      call g;
      assign ecx, eax;
      ret;
    }
    func g {
    entry:
      ret;
    }
  )");
  il::compute_spd(p);
  ssa::to_ssa(p);
  const il::Function& f = p.functions[0];
  uint64_t call_addr = f.blocks[0].stmts[2].addr;
  REQUIRE(f.live_defs_at_call.count(call_addr));
  const auto& live = f.live_defs_at_call.at(call_addr);
  CHECK(live.at("eax") == 1);
  CHECK(live.at("ebx") == 1);
  // The call defines the return register: the later use sees a new version.
  const il::Statement& after = f.blocks[1].stmts[0];
  CHECK(after.src.reg.name == "eax");
  CHECK(after.src.reg.version > 1);
}

TEST_CASE("stack pointer versions advance at pushes and pops") {
  il::Program p = il::parse_il(R"(
    func f {
    entry:
      push eax;
      push ebx;
      pop ecx;
      pop edx;
      ret;
    }
  )");
  il::compute_spd(p);
  ssa::to_ssa(p);
  const il::Function& f = p.functions[0];
  const auto& st = f.blocks[0].stmts;
  CHECK(f.sp_ver_before.at(st[0].addr) == 0);
  CHECK(f.sp_ver_after.at(st[0].addr) == 1);
  CHECK(f.sp_ver_after.at(st[1].addr) == 2);
  CHECK(f.sp_ver_after.at(st[2].addr) == 3);
  CHECK(f.sp_ver_after.at(st[3].addr) == 4);
}
