#include "uninit/safezones.hpp"

#include <algorithm>
#include <deque>
#include <sstream>

#include "uninit/support.hpp"

namespace uninit::safezones {

namespace {

bool is_dead(const extract::FuncModel& cfg, int block) {
  return cfg.dead_blocks.count(block) != 0;
}

// Statement position of an access within its block; definitions granted at
// block entry use -1.
int pos_of(const extract::FuncModel& cfg, uint64_t addr) {
  auto it = cfg.stmt_pos.find(addr);
  if (it == cfg.stmt_pos.end())
    throw AnalysisError("access at " + hex(addr) + " has no statement position");
  return it->second.second;
}

}  // namespace

std::map<VarKey, SafeZone> compute_safe_zones(const extract::FuncModel& cfg,
                                              const ssa::DomInfo& dom,
                                              const std::vector<Access>& accesses,
                                              const Grants& grants) {
  std::map<VarKey, SafeZone> zones;
  std::map<VarKey, std::set<int>> def_blocks;

  for (auto& a : accesses) {
    zones.try_emplace(a.var).first->second.var = a.var;
    if (a.is_def && !is_dead(cfg, a.block)) def_blocks[a.var].insert(a.block);
  }
  for (auto& [var, blocks] : grants) {
    zones.try_emplace(var).first->second.var = var;
    for (int b : blocks)
      if (!is_dead(cfg, b)) def_blocks[var].insert(b);
  }

  auto succs = cfg.succ_lists();

  // Incoming edges that can execute: sources must be live.
  std::vector<std::vector<int>> live_preds(cfg.n_blocks());
  for (auto& [from, to] : cfg.edges)
    if (!is_dead(cfg, from)) live_preds[to].push_back(from);

  for (auto& [var, zone] : zones) {
    auto seeds = def_blocks.find(var);
    if (seeds == def_blocks.end()) continue;  // no defs: empty zone

    auto add_block = [&](int b) {
      if (!zone.blocks.insert(b).second) return false;
      for (int s : succs[b]) zone.edges.insert({b, s});
      return true;
    };

    // Definition blocks, then everything they dominate: those blocks are
    // only reachable through the definition.
    for (int d : seeds->second) {
      add_block(d);
      for (int b : dom.dominees(d)) add_block(b);
    }

    // Closure: a live non-entry block whose incoming live edges are all safe
    // is itself safe.
    bool grew = true;
    while (grew) {
      grew = false;
      for (int b = 0; b < cfg.n_blocks(); ++b) {
        if (b == cfg.entry || is_dead(cfg, b) || zone.blocks.count(b)) continue;
        if (live_preds[b].empty()) continue;
        bool covered = true;
        for (int p : live_preds[b])
          if (!zone.edges.count({p, b})) {
            covered = false;
            break;
          }
        if (covered && add_block(b)) grew = true;
      }
    }
  }
  return zones;
}

namespace {

// Blocks reachable from the entry without crossing a safe edge.
std::vector<char> reach_avoiding(const extract::FuncModel& cfg,
                                 const std::vector<std::vector<int>>& succs,
                                 const std::set<std::pair<int, int>>& avoid) {
  std::vector<char> seen(cfg.n_blocks(), 0);
  std::deque<int> work{cfg.entry};
  seen[cfg.entry] = 1;
  while (!work.empty()) {
    int b = work.front();
    work.pop_front();
    for (int s : succs[b]) {
      if (seen[s] || avoid.count({b, s})) continue;
      seen[s] = 1;
      work.push_back(s);
    }
  }
  return seen;
}

// Shortest entry->target path avoiding `avoid`, lexicographically smallest
// block sequence among the shortest: greedy forward walk over exact
// remaining distances.
std::vector<int> witness_path(const extract::FuncModel& cfg,
                              const std::vector<std::vector<int>>& succs,
                              const std::vector<std::vector<int>>& preds, int target,
                              const std::set<std::pair<int, int>>& avoid) {
  const int n = cfg.n_blocks();
  std::vector<int> dist(n, -1);
  std::deque<int> work{target};
  dist[target] = 0;
  while (!work.empty()) {
    int b = work.front();
    work.pop_front();
    for (int p : preds[b]) {
      if (dist[p] >= 0 || avoid.count({p, b}) || is_dead(cfg, p)) continue;
      dist[p] = dist[b] + 1;
      work.push_back(p);
    }
  }
  if (dist[cfg.entry] < 0) return {};

  std::vector<int> path{cfg.entry};
  int cur = cfg.entry;
  while (cur != target) {
    int next = -1;
    for (int s : succs[cur]) {
      if (avoid.count({cur, s}) || dist[s] != dist[cur] - 1) continue;
      if (next < 0 || s < next) next = s;
    }
    if (next < 0) return {};  // unreachable given dist[entry] >= 0
    path.push_back(next);
    cur = next;
  }
  return path;
}

}  // namespace

std::vector<Verdict> classify_accesses(const extract::FuncModel& cfg,
                                       const std::vector<Access>& accesses,
                                       const std::map<VarKey, SafeZone>& zones,
                                       const Grants& grants) {
  auto succs = cfg.succ_lists();
  auto preds = cfg.pred_lists();

  // Definition positions per (var, block), for same-block ordering.
  std::map<std::pair<VarKey, int>, int> first_def_pos;
  for (auto& a : accesses) {
    if (!a.is_def) continue;
    int pos = pos_of(cfg, a.addr);
    auto [it, fresh] = first_def_pos.try_emplace({a.var, a.block}, pos);
    if (!fresh) it->second = std::min(it->second, pos);
  }

  static const std::set<std::pair<int, int>> no_edges;
  std::map<VarKey, std::vector<char>> reach_cache;
  auto reach_for = [&](const VarKey& var) -> const std::vector<char>& {
    auto it = reach_cache.find(var);
    if (it != reach_cache.end()) return it->second;
    auto z = zones.find(var);
    const auto& avoid = z == zones.end() ? no_edges : z->second.edges;
    return reach_cache.emplace(var, reach_avoiding(cfg, succs, avoid)).first->second;
  };

  auto granted = [&](const VarKey& var, int block) {
    auto it = grants.find(var);
    return it != grants.end() && it->second.count(block) != 0;
  };

  std::vector<Verdict> out;
  for (auto& a : accesses) {
    if (a.is_def) continue;
    Verdict v;
    v.use = a;

    if (is_dead(cfg, a.block)) {
      v.safe = false;
      v.dead = true;
      out.push_back(std::move(v));
      continue;
    }

    bool local_def = false;
    if (auto it = first_def_pos.find({a.var, a.block}); it != first_def_pos.end())
      local_def = it->second < pos_of(cfg, a.addr);

    if (local_def || granted(a.var, a.block) || !reach_for(a.var)[a.block]) {
      v.safe = true;
    } else {
      v.safe = false;
      auto z = zones.find(a.var);
      const auto& avoid = z == zones.end() ? no_edges : z->second.edges;
      v.witness = witness_path(cfg, succs, preds, a.block, avoid);
    }
    out.push_back(std::move(v));
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::map<Access, bool> reaching_defs_oracle(const extract::FuncModel& cfg,
                                            const std::vector<Access>& accesses,
                                            const Grants& grants) {
  const int n = cfg.n_blocks();
  std::vector<std::vector<int>> live_preds(n);
  for (auto& [from, to] : cfg.edges)
    if (!is_dead(cfg, from)) live_preds[to].push_back(from);

  std::set<VarKey> vars;
  std::map<VarKey, std::set<int>> defs;
  for (auto& a : accesses) {
    vars.insert(a.var);
    if (a.is_def && !is_dead(cfg, a.block)) defs[a.var].insert(a.block);
  }

  std::map<VarKey, std::vector<char>> in_state;
  for (auto& var : vars) {
    auto g = grants.find(var);
    auto has_grant = [&](int b) { return g != grants.end() && g->second.count(b) != 0; };
    auto has_def = [&](int b) { return defs.count(var) && defs[var].count(b); };

    // Greatest fixpoint of the all-paths (must) initialization dataflow:
    // start optimistic, strip blocks whose incoming paths are not covered.
    std::vector<char> in(n, 1);
    in[cfg.entry] = 0;
    auto out_of = [&](int b) { return in[b] || has_def(b) || has_grant(b); };
    bool changed = true;
    while (changed) {
      changed = false;
      for (int b = 0; b < n; ++b) {
        if (b == cfg.entry || is_dead(cfg, b)) continue;
        char v = 1;
        if (live_preds[b].empty()) {
          v = 0;
        } else {
          for (int p : live_preds[b])
            if (!out_of(p)) {
              v = 0;
              break;
            }
        }
        if (v != in[b]) {
          in[b] = v;
          changed = true;
        }
      }
    }
    in_state[var] = std::move(in);
  }

  std::map<std::pair<VarKey, int>, int> first_def_pos;
  for (auto& a : accesses) {
    if (!a.is_def) continue;
    int pos = pos_of(cfg, a.addr);
    auto [it, fresh] = first_def_pos.try_emplace({a.var, a.block}, pos);
    if (!fresh) it->second = std::min(it->second, pos);
  }

  std::map<Access, bool> verdicts;
  for (auto& a : accesses) {
    if (a.is_def) continue;
    if (is_dead(cfg, a.block)) {
      verdicts[a] = false;
      continue;
    }
    bool local_def = false;
    if (auto it = first_def_pos.find({a.var, a.block}); it != first_def_pos.end())
      local_def = it->second < pos_of(cfg, a.addr);
    auto g = grants.find(a.var);
    bool grant = g != grants.end() && g->second.count(a.block) != 0;
    verdicts[a] = local_def || grant || in_state[a.var][a.block];
  }
  return verdicts;
}

std::string dump_zones(const std::map<VarKey, SafeZone>& zones) {
  std::ostringstream os;
  for (auto& [var, zone] : zones) {
    os << "var(" << var.spd << "," << var.fld << "): blocks {";
    bool first = true;
    for (int b : zone.blocks) os << (first ? "" : ",") << b, first = false;
    os << "} edges {";
    first = true;
    for (auto& [a, b] : zone.edges) os << (first ? "" : ",") << a << "->" << b, first = false;
    os << "}\n";
  }
  return os.str();
}

}  // namespace uninit::safezones
