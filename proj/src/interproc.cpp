#include "uninit/interproc.hpp"

#include <algorithm>
#include <functional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "uninit/engine.hpp"
#include "uninit/il.hpp"
#include "uninit/pointsto.hpp"
#include "uninit/ssa.hpp"
#include "uninit/support.hpp"

namespace uninit::interproc {

using safezones::Access;
using safezones::Grants;
using safezones::VarKey;

std::vector<CallEdge> call_edges(const extract::AnalysisModel& m) {
  std::vector<CallEdge> out;
  for (auto& [name, fm] : m.funcs) {
    for (auto& ci : fm.calls) {
      CallEdge e;
      e.caller = name;
      e.callee = ci.callee;
      e.call_addr = ci.addr;
      e.call_block = ci.block;
      e.fallthrough_block = ci.fallthrough;
      e.resolved = ci.resolved && m.funcs.count(ci.callee) != 0;
      e.ret_atom = ci.ret_atom;
      for (auto& [idx, actual] : ci.args)
        e.args.push_back({idx, actual, m.word_size * idx});
      out.push_back(std::move(e));
    }
  }
  return out;
}

uint64_t group_hash_of(const Origin& o) {
  std::string s = o.function;
  s.push_back('\0');
  s += std::to_string(o.spd);
  return fnv1a64(s);
}

std::string Warning::key() const {
  return use_ctx + "@" + hex(use_addr) + "/" + std::to_string(var.spd) + "." +
         std::to_string(var.fld) + (indirect ? "/i" : "/d");
}

std::vector<WarningGroup> group_warnings(const std::vector<Warning>& ws) {
  std::map<Origin, WarningGroup> groups;
  for (auto& w : ws) {
    if (w.status != "raw") continue;
    auto& g = groups[w.origin];
    g.origin = w.origin;
    g.group_hash = w.group_hash;
    g.members.push_back(w);
  }
  std::vector<WarningGroup> out;
  out.reserve(groups.size());
  for (auto& [o, g] : groups) {
    std::sort(g.members.begin(), g.members.end());
    out.push_back(std::move(g));
  }
  return out;
}

namespace {

// Shared lookup state for one analysis pass.
struct Lookups {
  const KnowledgeBase* kb = nullptr;
  int64_t W = 4;
  std::vector<CallEdge> edges;
  std::map<std::string, std::vector<const CallEdge*>> callers_of;  // resolved only
  // (atom, ctx) -> possible (pointee spd, establishing addr) entries
  std::map<std::pair<std::string, std::string>,
           std::vector<std::pair<int64_t, uint64_t>>> pts;
  std::map<std::string, ssa::DomInfo> doms;

  bool reaches(uint64_t later, uint64_t earlier, const std::string& ctx) const {
    return kb->db.contains("CanReach", {facts::num(static_cast<int64_t>(later)),
                                        facts::num(static_cast<int64_t>(earlier)),
                                        facts::atom(ctx)});
  }

  // Stack deltas `a` may hold when control is at `site` in `ctx`.
  std::vector<int64_t> pointees_at(const std::string& a, const std::string& ctx,
                                   uint64_t site) const {
    std::vector<int64_t> out;
    auto it = pts.find({a, ctx});
    if (it == pts.end()) return out;
    for (auto& [spd, at] : it->second)
      if (reaches(site, at, ctx)) out.push_back(spd);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }
};

Lookups build_lookups(const KnowledgeBase& kb) {
  Lookups lk;
  lk.kb = &kb;
  lk.W = kb.model.word_size;
  lk.edges = call_edges(kb.model);
  for (auto& e : lk.edges)
    if (e.resolved) lk.callers_of[e.callee].push_back(&e);
  for (auto& t : kb.db.tuples("VPtsTo"))  // VPtsTo(V, SPD, Addr, Ctx)
    lk.pts[{facts::as_atom(t[0]), facts::as_atom(t[3])}].push_back(
        {facts::as_num(t[1]), static_cast<uint64_t>(facts::as_num(t[2]))});
  for (auto& [name, fm] : kb.model.funcs)
    lk.doms.emplace(name, ssa::compute_dominators_adj(fm.n_blocks(), fm.entry,
                                                      fm.succ_lists(),
                                                      fm.pred_lists()));
  return lk;
}

bool is_heap_token(int64_t spd) { return spd < -il::kSpdCap; }

// Collects every access of every function: statically resolved slot accesses
// from the model plus pointer accesses from the points-to fixpoint.
void assemble_accesses(KnowledgeBase& kb) {
  kb.funcs.clear();
  std::map<std::string, std::set<Access>> sets;
  for (auto& [name, fm] : kb.model.funcs) {
    auto& s = sets[name];
    for (auto& d : fm.direct)
      s.insert({{d.spd, d.fld}, d.block, d.addr, d.is_def, false});
  }
  auto ind = pointsto::query_indirect(kb.db);
  for (auto& a : ind.accesses) {
    auto f = kb.model.funcs.find(a.ctx);
    if (f == kb.model.funcs.end())
      throw AnalysisError("pointer access in unknown function " + a.ctx);
    auto pos = f->second.stmt_pos.find(a.addr);
    if (pos == f->second.stmt_pos.end())
      throw AnalysisError("pointer access at unknown address " + hex(a.addr));
    sets[a.ctx].insert({{a.spd, a.fld}, pos->second.first, a.addr, a.is_def, true});
  }
  for (auto& [name, s] : sets) {
    auto& fa = kb.funcs[name];
    fa.accesses.assign(s.begin(), s.end());
  }
}

// Pointer arguments handed to functions outside the program are assumed to
// come back initialized (strict mode drops the assumption): every variable
// rooted at the pointee is granted at the call's fallthrough block.
void external_grants(KnowledgeBase& kb, const Lookups& lk, bool strict) {
  if (strict) return;
  for (auto& e : lk.edges) {
    if (e.resolved || e.fallthrough_block < 0) continue;
    auto& fa = kb.funcs[e.caller];
    for (auto& am : e.args) {
      for (int64_t s : lk.pointees_at(am.actual, e.caller, e.call_addr)) {
        std::set<int64_t> flds{0};
        for (auto& a : fa.accesses)
          if (a.var.spd == s) flds.insert(a.var.fld);
        for (int64_t f : flds) {
          fa.grants[{s, f}].insert(e.fallthrough_block);
          fa.grants[{s + f, 0}].insert(e.fallthrough_block);
        }
      }
    }
  }
}

std::map<std::string, Grants> propagate_impl(const KnowledgeBase& kb,
                                             const Lookups& lk) {
  std::map<std::string, Grants> out;
  for (auto& e : lk.edges) {
    if (!e.resolved || e.fallthrough_block < 0) continue;
    auto fit = kb.funcs.find(e.callee);
    auto mit = kb.model.funcs.find(e.callee);
    if (fit == kb.funcs.end() || mit == kb.model.funcs.end()) continue;
    const auto& callee_fm = mit->second;
    std::vector<int> live_exits;
    for (int x : callee_fm.exits)
      if (!callee_fm.dead_blocks.count(x)) live_exits.push_back(x);
    if (live_exits.empty()) continue;  // never returns: nothing flows back
    for (auto& am : e.args) {
      for (auto& [vk, zone] : fit->second.zones) {
        if (vk.spd != am.callee_spd) continue;
        bool covered = true;
        for (int x : live_exits) covered = covered && zone.blocks.count(x) != 0;
        if (!covered) continue;
        // The callee leaves (pointee + fld) initialized on every return:
        // grant the storage under both of the caller's names for it.
        for (int64_t s : lk.pointees_at(am.actual, e.caller, e.call_addr)) {
          out[e.caller][{s, vk.fld}].insert(e.fallthrough_block);
          out[e.caller][{s + vk.fld, 0}].insert(e.fallthrough_block);
        }
      }
    }
  }
  return out;
}

std::vector<Origin> track_origin_impl(const Lookups& lk, const std::string& fn,
                                      const VarKey& var) {
  std::set<Origin> out;
  std::set<std::pair<std::string, int64_t>> seen;
  std::function<void(const std::string&, int64_t)> rec = [&](const std::string& f,
                                                             int64_t spd) {
    if (!seen.insert({f, spd}).second) return;
    bool hit = false;
    if (spd > 0 && spd % lk.W == 0) {
      int64_t idx = spd / lk.W;
      auto cit = lk.callers_of.find(f);
      if (cit != lk.callers_of.end()) {
        for (const CallEdge* e : cit->second)
          for (auto& am : e->args)
            if (am.index == idx)
              for (int64_t s : lk.pointees_at(am.actual, e->caller, e->call_addr)) {
                hit = true;
                rec(e->caller, s);
              }
      }
    }
    if (!hit) out.insert({f, spd});
  };
  rec(fn, var.spd);
  if (out.empty()) out.insert({fn, var.spd});
  return {out.begin(), out.end()};
}

// Escalation of verdicts whose variable lives in another frame: argument
// slots are defined by the caller's push, and argument pointees are checked
// for initialization at every resolved call site.
struct WarningBuilder {
  KnowledgeBase& kb;
  const Lookups& lk;
  std::map<std::tuple<std::string, int64_t, int64_t>, bool> pointee_memo;
  std::map<std::tuple<std::string, int64_t, int64_t, uint64_t>, bool> init_memo;

  bool always_safe(const std::string& fn, int64_t spd) const {
    auto it = kb.always_safe.find(fn);
    return it != kb.always_safe.end() && it->second.count(spd) != 0;
  }

  bool is_arg_token(int64_t spd) const { return spd > 0 && spd % lk.W == 0; }

  // Must `vk` be initialized when control reaches `site` in `fn`? Decided by
  // classifying a synthetic read at the site against zones restricted to vk.
  bool init_at(const std::string& fn, VarKey vk, uint64_t site) {
    auto mk = std::make_tuple(fn, vk.spd, vk.fld, site);
    if (auto it = init_memo.find(mk); it != init_memo.end()) return it->second;
    const auto& fm = kb.model.funcs.at(fn);
    const auto& fa = kb.funcs.at(fn);
    auto pos = fm.stmt_pos.find(site);
    if (pos == fm.stmt_pos.end()) return init_memo[mk] = false;
    std::vector<Access> acc;
    for (auto& a : fa.accesses)
      if (a.var == vk) acc.push_back(a);
    Access syn{vk, pos->second.first, site, false, true};
    acc.push_back(syn);
    std::sort(acc.begin(), acc.end());
    acc.erase(std::unique(acc.begin(), acc.end()), acc.end());
    auto zones = safezones::compute_safe_zones(fm, lk.doms.at(fn), acc, fa.grants);
    auto verds = safezones::classify_accesses(fm, acc, zones, fa.grants);
    bool safe = false;
    for (auto& v : verds)
      if (v.use == syn) safe = v.safe;
    return init_memo[mk] = safe;
  }

  // Direct read of an incoming argument slot: the caller's push defines it,
  // so it is uninitialized only when some caller passes too few arguments.
  bool arg_slot_safe(const std::string& fn, int64_t spd) {
    auto cit = lk.callers_of.find(fn);
    if (cit == lk.callers_of.end() || cit->second.empty()) return true;
    int64_t idx = spd / lk.W;
    for (const CallEdge* e : cit->second) {
      int64_t maxi = 0;
      for (auto& am : e->args) maxi = std::max<int64_t>(maxi, am.index);
      if (maxi < idx) return false;
    }
    return true;
  }

  // Is the storage behind argument `spd/W` initialized at field `fld` on
  // every resolved path into `fn`? Recursion through pass-through arguments;
  // cycles default to safe (a finite uninitialized path would surface
  // through some other call chain).
  bool pointee_safe(const std::string& fn, int64_t spd, int64_t fld,
                    std::set<std::tuple<std::string, int64_t, int64_t>>& seen) {
    auto mk = std::make_tuple(fn, spd, fld);
    if (auto it = pointee_memo.find(mk); it != pointee_memo.end()) return it->second;
    if (!seen.insert(mk).second) return true;
    bool safe = true;
    auto cit = lk.callers_of.find(fn);
    if (cit != lk.callers_of.end() && !cit->second.empty()) {
      int64_t idx = spd / lk.W;
      for (const CallEdge* e : cit->second) {
        const ArgMapping* am = nullptr;
        for (auto& a : e->args)
          if (a.index == idx) am = &a;
        if (!am) {  // caller never pushed this argument
          safe = false;
          break;
        }
        for (int64_t s : lk.pointees_at(am->actual, e->caller, e->call_addr)) {
          bool ok;
          if (is_arg_token(s)) {
            ok = pointee_safe(e->caller, s, fld, seen);
          } else if (is_heap_token(s)) {
            ok = always_safe(e->caller, s) ||
                 init_at(e->caller, {s, fld}, e->call_addr);
          } else {
            ok = init_at(e->caller, {s, fld}, e->call_addr) ||
                 init_at(e->caller, {s + fld, 0}, e->call_addr);
          }
          if (!ok) {
            safe = false;
            break;
          }
        }
        if (!safe) break;
      }
    }
    seen.erase(mk);
    return pointee_memo[mk] = safe;
  }

  void run() {
    kb.warnings.clear();
    for (auto& [fn, fa] : kb.funcs) {
      for (auto& v : fa.verdicts) {
        if (v.safe || v.dead) continue;
        const VarKey var = v.use.var;
        if (is_heap_token(var.spd) && always_safe(fn, var.spd)) continue;
        if (is_arg_token(var.spd)) {
          if (!v.use.indirect) {
            if (arg_slot_safe(fn, var.spd)) continue;
          } else {
            std::set<std::tuple<std::string, int64_t, int64_t>> seen;
            if (pointee_safe(fn, var.spd, var.fld, seen)) continue;
          }
        }
        Warning w;
        w.var = var;
        w.use_addr = v.use.addr;
        w.use_ctx = fn;
        w.indirect = v.use.indirect;
        w.origins = track_origin_impl(lk, fn, var);
        w.origin = w.origins.front();
        w.group_hash = group_hash_of(w.origin);
        w.witness = v.witness;
        if (auto it = kb.filtered.find(w.key()); it != kb.filtered.end()) {
          w.status = "filtered-by-" + it->second;
          if (auto nit = kb.filter_notes.find(w.key()); nit != kb.filter_notes.end())
            w.note = nit->second;
        }
        kb.warnings.push_back(std::move(w));
      }
    }
    std::sort(kb.warnings.begin(), kb.warnings.end());
  }
};

}  // namespace

std::map<std::string, Grants> propagate_callee_safety(
    const KnowledgeBase& kb, const std::vector<CallEdge>& edges) {
  Lookups lk = build_lookups(kb);
  lk.edges = edges;
  lk.callers_of.clear();
  for (auto& e : lk.edges)
    if (e.resolved) lk.callers_of[e.callee].push_back(&e);
  return propagate_impl(kb, lk);
}

void analyze_to_fixpoint(KnowledgeBase& kb, const AnalyzeConfig& cfg) {
  assemble_accesses(kb);
  Lookups lk = build_lookups(kb);
  external_grants(kb, lk, cfg.strict_externals);

  bool stable = false;
  int round = 0;
  while (round < cfg.max_rounds) {
    for (auto& [name, fa] : kb.funcs) {
      const auto& fm = kb.model.funcs.at(name);
      fa.zones = safezones::compute_safe_zones(fm, lk.doms.at(name), fa.accesses,
                                               fa.grants);
    }
    if (cfg.observer) cfg.observer(round, kb.funcs);
    ++round;
    bool changed = false;
    for (auto& [name, g] : propagate_impl(kb, lk)) {
      auto& fa = kb.funcs[name];
      for (auto& [vk, blocks] : g)
        for (int b : blocks) changed |= fa.grants[vk].insert(b).second;
    }
    if (!changed) {
      stable = true;
      break;
    }
  }
  kb.rounds = round;
  if (!stable)
    throw AnalysisError("interprocedural propagation did not stabilize within " +
                        std::to_string(cfg.max_rounds) + " rounds");

  for (auto& [name, fa] : kb.funcs)
    fa.verdicts = safezones::classify_accesses(kb.model.funcs.at(name), fa.accesses,
                                               fa.zones, fa.grants);

  WarningBuilder wb{kb, lk, {}, {}};
  wb.run();
}

std::vector<Origin> track_origin(const KnowledgeBase& kb, const std::string& fn,
                                 const VarKey& var) {
  return track_origin_impl(build_lookups(kb), fn, var);
}

void monitor_loop(KnowledgeBase& kb,
                  const std::vector<std::shared_ptr<Plugin>>& plugins,
                  const AnalyzeConfig& cfg) {
  analyze_to_fixpoint(kb, cfg);

  std::vector<char> disabled(plugins.size(), 0);
  bool stable = false;
  int round = 0;
  while (round < cfg.max_rounds && !stable) {
    ++round;
    Snapshot snap{kb, cfg};
    std::vector<PluginDelta> deltas(plugins.size());
    std::vector<std::string> errors(plugins.size());
    parallel_for(plugins.size(), static_cast<unsigned>(std::max(1, cfg.threads)),
                 [&](size_t i) {
                   if (disabled[i]) return;
                   try {
                     deltas[i] = plugins[i]->run(snap);
                   } catch (const std::exception& e) {
                     errors[i] = e.what();
                   } catch (...) {
                     errors[i] = "unknown failure";
                   }
                 });

    bool facts_changed = false, marks_changed = false;
    for (size_t i = 0; i < plugins.size(); ++i) {
      if (disabled[i]) continue;
      if (!errors[i].empty()) {
        disabled[i] = 1;
        kb.plugin_errors.push_back(plugins[i]->name() + ": " + errors[i]);
        continue;
      }
      auto& d = deltas[i];
      if (!d.facts.empty()) {
        size_t before = kb.db.total_tuples();
        engine::incremental_add(kb.db, pointsto::rules(), d.facts,
                                facts::Provenance::Plugin);
        facts_changed |= kb.db.total_tuples() != before;
      }
      for (auto& [fn, spds] : d.always_safe)
        for (int64_t s : spds) facts_changed |= kb.always_safe[fn].insert(s).second;
      for (auto& [key, note] : d.filtered) {
        auto [it, fresh] = kb.filtered.try_emplace(key, plugins[i]->name());
        if (fresh) {
          kb.filter_notes[key] = note;
          marks_changed = true;
        }
      }
    }

    if (facts_changed) {
      analyze_to_fixpoint(kb, cfg);
    } else if (marks_changed) {
      for (auto& w : kb.warnings) {
        if (w.status != "raw") continue;
        auto it = kb.filtered.find(w.key());
        if (it == kb.filtered.end()) continue;
        w.status = "filtered-by-" + it->second;
        if (auto nit = kb.filter_notes.find(w.key()); nit != kb.filter_notes.end())
          w.note = nit->second;
      }
    } else {
      stable = true;
    }
  }
  kb.monitor_rounds = round;
  if (!stable)
    throw AnalysisError("plugin monitor did not stabilize within " +
                        std::to_string(cfg.max_rounds) + " rounds");
}

}  // namespace uninit::interproc
