#include "uninit/pointsto.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "uninit/support.hpp"

namespace uninit::pointsto {

const std::string& rules_text() {
  static const std::string text = R"(
% Stack address propagation. A value's points-to entry is recorded at the
% instruction that produced it; consumers require that instruction to be
% reachable before them (CanReach) inside the same frame context.

% Taking a stack address.
VPtsTo(V, SPD, Addr, Ctx) :-
  StackPointer(V, Addr, SPD), CanReach(Addr, Addr, Ctx).

% Copies preserve stack addresses.
VPtsTo(V1, SPD, Addr, Ctx) :-
  Assign(V1, V2, Addr), VPtsTo(V2, SPD, Addr2, Ctx), CanReach(Addr, Addr2, Ctx).

% Loading a stored pointer from a stack field.
VPtsTo(V1, SPD2, Addr, Ctx) :-
  Load(V1, V2, Disp, Addr, Ctx),
  VPtsTo(V2, SPD, Addr2, Ctx), CanReach(Addr, Addr2, Ctx),
  PointerPtsTo(SPD, Disp, SPD2, Ctx).

% Storing a pointer into a stack field.
PointerPtsTo(SPD, Disp, SPD2, Ctx) :-
  Store(V1, Disp, V2, Addr, Ctx),
  VPtsTo(V1, SPD, Addr2, Ctx), CanReach(Addr, Addr2, Ctx),
  VPtsTo(V2, SPD2, Addr3, Ctx), CanReach(Addr, Addr3, Ctx).

% Pointer arithmetic with a known constant.
VPtsTo(Res, SPD + Value, Addr, Ctx) :-
  BinOp(add, Res, V1, V2, Addr, Ctx),
  VPtsTo(V1, SPD, Addr2, Ctx), CanReach(Addr, Addr2, Ctx),
  Constant(V2, Value, _).
VPtsTo(Res, SPD + Value, Addr, Ctx) :-
  BinOp(add, Res, V1, V2, Addr, Ctx),
  VPtsTo(V2, SPD, Addr2, Ctx), CanReach(Addr, Addr2, Ctx),
  Constant(V1, Value, _).
VPtsTo(Res, SPD - Value, Addr, Ctx) :-
  BinOp(sub, Res, V1, V2, Addr, Ctx),
  VPtsTo(V1, SPD, Addr2, Ctx), CanReach(Addr, Addr2, Ctx),
  Constant(V2, Value, _).

% A passed pointer argument appears in the callee frame at its translated
% delta: the argument's own slot stands in for whatever it points to.
VPtsTo(V2, SPD2, CalleeAddr, Callee) :-
  Param(_, Arg, _, _, V2, CalleeAddr, Callee),
  TranslateSPD(Arg, Callee, SPD2).

% A phi joins the stack addresses of all its sources.
VPtsTo(V, SPD, Addr, Ctx) :-
  Phi(V, PhiReg, Addr, Ctx), VPtsTo(PhiReg, SPD, _, Ctx).

% Writing through a pointer defines the pointed-to stack variable.
IndirectDef(V1, SPD, Addr) :-
  Store(V1, _, _, Addr, Ctx), VPtsTo(V1, SPD, Addr2, Ctx), CanReach(Addr, Addr2, Ctx).

% Reading through a pointer uses the pointed-to stack variable.
IndirectUse(V2, SPD, Addr) :-
  Load(_, V2, _, Addr, Ctx), VPtsTo(V2, SPD, Addr2, Ctx), CanReach(Addr, Addr2, Ctx).
)";
  return text;
}

const std::vector<engine::Rule>& rules() {
  static const std::vector<engine::Rule> parsed = engine::parse_rules(rules_text());
  return parsed;
}

engine::EvalStats run(facts::FactBase& db) { return engine::evaluate(db, rules()); }

IndirectResult query_indirect(const facts::FactBase& db) {
  IndirectResult res;
  std::set<IndirectAccess> out;

  // Store/load sites by address; each address carries exactly one site.
  struct Site {
    int64_t disp;
    std::string ctx;
  };
  std::map<uint64_t, Site> stores, loads;
  for (auto& t : db.tuples("Store"))  // Store(V1, Disp, V2, Addr, Ctx)
    stores[static_cast<uint64_t>(facts::as_num(t[3]))] = {facts::as_num(t[1]),
                                                          facts::as_atom(t[4])};
  for (auto& t : db.tuples("Load"))   // Load(V1, V2, Disp, Addr, Ctx)
    loads[static_cast<uint64_t>(facts::as_num(t[3]))] = {facts::as_num(t[2]),
                                                         facts::as_atom(t[4])};

  auto collect = [&](const char* rel, const std::map<uint64_t, Site>& sites, bool is_def) {
    for (auto& t : db.tuples(rel)) {
      uint64_t addr = static_cast<uint64_t>(facts::as_num(t[2]));
      auto it = sites.find(addr);
      if (it == sites.end()) continue;
      int64_t fld = it->second.disp;
      if (fld < 0) {
        ++res.skipped_negative_field;
        continue;
      }
      out.insert({is_def, facts::as_num(t[1]), fld, addr, it->second.ctx,
                  facts::as_atom(t[0])});
    }
  };
  collect("IndirectDef", stores, true);
  collect("IndirectUse", loads, false);

  res.accesses.assign(out.begin(), out.end());
  return res;
}

}  // namespace uninit::pointsto
