#include "uninit/plugins.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include "uninit/il.hpp"
#include "uninit/support.hpp"

namespace uninit::plugins {

namespace {

// Per-function view of the fact base used by the filters: constants, copy
// chains, and comparison producers, all keyed by SSA atom.
struct DataFlow {
  std::map<std::string, int64_t> constants;
  std::map<std::string, std::string> copy_src;            // dst -> unique src
  std::map<std::string, std::vector<std::string>> copy_dst;  // src -> dsts
  // cmp result atom -> its two operands
  std::map<std::string, std::pair<std::string, std::string>> cmp_of;

  std::string root(std::string a) const {
    std::set<std::string> seen;
    while (seen.insert(a).second) {
      auto it = copy_src.find(a);
      if (it == copy_src.end()) break;
      a = it->second;
    }
    return a;
  }

  std::optional<int64_t> const_of(const std::string& a) const {
    auto it = constants.find(root(a));
    if (it != constants.end()) return it->second;
    return std::nullopt;
  }

  // Atoms holding the same value as `a`, by forward copy propagation.
  std::set<std::string> forward_closure(const std::string& a) const {
    std::set<std::string> out;
    std::deque<std::string> q{a};
    while (!q.empty()) {
      std::string cur = q.front();
      q.pop_front();
      if (!out.insert(cur).second) continue;
      if (auto it = copy_dst.find(cur); it != copy_dst.end())
        for (auto& d : it->second) q.push_back(d);
    }
    return out;
  }
};

DataFlow dataflow_for(const interproc::KnowledgeBase& kb,
                      const extract::FuncModel& fm) {
  DataFlow df;
  auto inside = [&](const facts::Term& addr) {
    return fm.stmt_pos.count(static_cast<uint64_t>(facts::as_num(addr))) != 0;
  };
  for (auto& t : kb.db.tuples("Constant"))  // Constant(V, Value, Addr)
    if (inside(t[2])) df.constants[facts::as_atom(t[0])] = facts::as_num(t[1]);
  std::map<std::string, int> dst_count;
  for (auto& t : kb.db.tuples("Assign"))  // Assign(V1, V2, Addr)
    if (inside(t[2])) ++dst_count[facts::as_atom(t[0])];
  for (auto& t : kb.db.tuples("Assign")) {
    if (!inside(t[2])) continue;
    std::string dst = facts::as_atom(t[0]), src = facts::as_atom(t[1]);
    if (dst_count[dst] == 1) df.copy_src[dst] = src;
    df.copy_dst[src].push_back(dst);
  }
  for (auto& t : kb.db.tuples("BinOp"))  // BinOp(Op, Res, V1, V2, Addr, Ctx)
    if (facts::as_atom(t[0]) == "cmp" && facts::as_atom(t[5]) == fm.name)
      df.cmp_of[facts::as_atom(t[1])] = {facts::as_atom(t[2]),
                                         facts::as_atom(t[3])};
  return df;
}

// A branch decision as "left == right" or "left != right" over atoms that
// may resolve to constants.
struct Decision {
  std::string lhs, rhs;
  bool eq = true;
};

// The constraint condition for taking `succ` out of `br`, if any.
std::optional<Decision> decision_for(const extract::BranchInfo& br, int succ,
                                     const DataFlow& df) {
  if (br.target == br.fall) return std::nullopt;
  bool requires_zero = (succ == br.target) == br.jump_if_zero;
  std::string lhs = br.cond_atom, rhs;
  if (auto it = df.cmp_of.find(br.cond_atom); it != df.cmp_of.end()) {
    lhs = it->second.first;
    rhs = it->second.second;
  }
  Decision d;
  d.lhs = df.root(lhs);
  d.rhs = rhs.empty() ? rhs : df.root(rhs);
  d.eq = requires_zero;  // cmp result is zero exactly when the sides agree
  return d;
}

// Accumulated equalities/disequalities of atoms against constants.
struct ConstraintStore {
  std::map<std::string, int64_t> eq;
  std::map<std::string, std::set<int64_t>> ne;

  // False when the added condition contradicts the store or a known constant.
  bool add(const Decision& d, const DataFlow& df, bool& nonconst) {
    std::optional<int64_t> lv = d.lhs.empty() ? std::nullopt : df.const_of(d.lhs);
    std::optional<int64_t> rv = d.rhs.empty() ? std::optional<int64_t>(0)
                                              : df.const_of(d.rhs);
    std::string var;
    std::optional<int64_t> cv;
    if (lv && rv) return d.eq == (*lv == *rv);
    if (lv) {
      var = d.rhs;
      cv = lv;
    } else if (rv) {
      var = d.lhs;
      cv = rv;
    } else {
      nonconst = true;  // both sides unknown: no pruning power
      return true;
    }
    if (d.eq) {
      if (auto it = eq.find(var); it != eq.end() && it->second != *cv) return false;
      if (auto it = ne.find(var); it != ne.end() && it->second.count(*cv)) return false;
      eq[var] = *cv;
    } else {
      if (auto it = eq.find(var); it != eq.end() && it->second == *cv) return false;
      ne[var].insert(*cv);
    }
    return true;
  }
};

// Block-count distance from `from` to the nearest live exit (1 when `from`
// is itself an exit); INT_MAX/2 when no exit is reachable.
int exit_distance(const extract::FuncModel& fm,
                  const std::vector<std::vector<int>>& succs, int from) {
  const int kFar = 1 << 29;
  std::set<int> exits(fm.exits.begin(), fm.exits.end());
  std::vector<int> dist(fm.n_blocks(), -1);
  std::deque<int> q{from};
  dist[from] = 1;
  while (!q.empty()) {
    int b = q.front();
    q.pop_front();
    if (exits.count(b) && !fm.dead_blocks.count(b)) return dist[b];
    for (int s : succs[b])
      if (dist[s] < 0) {
        dist[s] = dist[b] + 1;
        q.push_back(s);
      }
  }
  return kFar;
}

}  // namespace

Feasibility path_feasible(const interproc::Snapshot& snap,
                          const interproc::Warning& w) {
  const auto& kb = snap.kb;
  auto fit = kb.model.funcs.find(w.use_ctx);
  auto ait = kb.funcs.find(w.use_ctx);
  if (fit == kb.model.funcs.end() || ait == kb.funcs.end()) return Feasibility::Unknown;
  const auto& fm = fit->second;
  auto pit = fm.stmt_pos.find(w.use_addr);
  if (pit == fm.stmt_pos.end()) return Feasibility::Unknown;
  const int use_block = pit->second.first;

  std::set<int> avoid;  // safe-zone interior: a candidate path stays outside
  if (auto z = ait->second.zones.find(w.var); z != ait->second.zones.end())
    avoid = z->second.blocks;

  auto succs = fm.succ_lists();
  DataFlow df = dataflow_for(kb, fm);
  std::map<int, extract::BranchInfo> branch_at;
  for (auto& br : fm.branches) branch_at[br.block] = br;

  int budget = std::max(1, snap.cfg.path_budget);
  bool feasible = false, unknown = false, exhausted = false;

  std::vector<char> on_path(fm.n_blocks(), 0);
  std::function<void(int, ConstraintStore, bool)> walk =
      [&](int b, ConstraintStore cs, bool nonconst) {
        if (feasible || exhausted) return;
        if (budget <= 0) {
          exhausted = true;
          return;
        }
        if (b == use_block) {
          --budget;
          if (nonconst)
            unknown = true;
          else
            feasible = true;
          return;
        }
        on_path[b] = 1;
        bool extended = false;
        auto br = branch_at.find(b);
        std::set<int> taken;
        for (int s : succs[b]) {
          if (!taken.insert(s).second) continue;
          if (on_path[s] || fm.dead_blocks.count(s)) continue;
          if (s != use_block && avoid.count(s)) continue;
          ConstraintStore next = cs;
          bool nc = nonconst;
          if (br != branch_at.end()) {
            auto d = decision_for(br->second, s, df);
            if (d && !next.add(*d, df, nc)) {
              --budget;  // contradictory branch valuation: path pruned
              continue;
            }
          }
          extended = true;
          walk(s, std::move(next), nc);
        }
        if (!extended) --budget;  // dead end
        on_path[b] = 0;
      };

  if (fm.dead_blocks.count(fm.entry) == 0 &&
      (fm.entry == use_block || avoid.count(fm.entry) == 0))
    walk(fm.entry, {}, false);

  if (feasible) return Feasibility::Feasible;
  if (exhausted || unknown) return Feasibility::Unknown;
  return Feasibility::Infeasible;
}

bool error_handled(const interproc::Snapshot& snap, const interproc::Warning& w) {
  const auto& kb = snap.kb;
  auto fit = kb.model.funcs.find(w.use_ctx);
  if (fit == kb.model.funcs.end()) return false;
  const auto& fm = fit->second;
  DataFlow df = dataflow_for(kb, fm);
  auto succs = fm.succ_lists();

  auto reaches = [&](uint64_t later, uint64_t earlier) {
    return kb.db.contains("CanReach",
                          {facts::num(static_cast<int64_t>(later)),
                           facts::num(static_cast<int64_t>(earlier)),
                           facts::atom(fm.name)});
  };

  // Pointee deltas of an actual argument at its call site.
  std::map<std::pair<std::string, std::string>, std::vector<std::pair<int64_t, uint64_t>>> pts;
  for (auto& t : kb.db.tuples("VPtsTo"))
    pts[{facts::as_atom(t[0]), facts::as_atom(t[3])}].push_back(
        {facts::as_num(t[1]), static_cast<uint64_t>(facts::as_num(t[2]))});

  for (auto& ci : fm.calls) {
    // The warned storage must be handed to the call by pointer.
    bool passes = false;
    for (auto& [idx, actual] : ci.args) {
      auto it = pts.find({actual, fm.name});
      if (it == pts.end()) continue;
      for (auto& [spd, at] : it->second)
        if (spd == w.var.spd && reaches(ci.addr, at)) passes = true;
    }
    if (!passes) continue;

    // The return value must feed a later branch with a short error exit.
    auto held = df.forward_closure(ci.ret_atom);
    for (auto& br : fm.branches) {
      if (!reaches(br.addr, ci.addr)) continue;
      bool on_ret = held.count(br.cond_atom) != 0;
      if (auto cmp = df.cmp_of.find(br.cond_atom); cmp != df.cmp_of.end())
        on_ret = on_ret || held.count(cmp->second.first) ||
                 held.count(cmp->second.second);
      if (!on_ret) continue;
      int d = std::min(exit_distance(fm, succs, br.target),
                       exit_distance(fm, succs, br.fall));
      if (d < 3) return true;
    }
  }
  return false;
}

std::vector<AllocatorSpec> default_allocators() {
  return {{"malloc", 1, false}, {"calloc", 2, true}};
}

std::vector<AllocatorSpec> parse_allocator_specs(const std::string& text) {
  std::vector<AllocatorSpec> out;
  std::set<std::string> names;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    AllocatorSpec spec;
    std::string idx, init;
    if (!std::getline(ls, spec.name, '\t') || !std::getline(ls, idx, '\t') ||
        !std::getline(ls, init, '\t') || spec.name.empty())
      throw ParseError(lineno, "allocator spec needs `name<TAB>index<TAB>init|noinit`");
    try {
      spec.size_arg = std::stoi(idx);
    } catch (...) {
      throw ParseError(lineno, "allocator size argument index is not a number");
    }
    if (spec.size_arg < 1)
      throw ParseError(lineno, "allocator size argument index must be positive");
    if (init == "init")
      spec.initializes = true;
    else if (init == "noinit")
      spec.initializes = false;
    else
      throw ParseError(lineno, "allocator mode must be `init` or `noinit`");
    if (!names.insert(spec.name).second)
      throw ParseError(lineno, "duplicate allocator `" + spec.name + "`");
    out.push_back(std::move(spec));
  }
  return out;
}

int64_t heap_token(size_t index) {
  return -il::kSpdCap - 1 - static_cast<int64_t>(index);
}

namespace {

class PathFilter : public interproc::Plugin {
 public:
  std::string name() const override { return "path-feasibility"; }

  interproc::PluginDelta run(const interproc::Snapshot& snap) override {
    interproc::PluginDelta d;
    for (auto& w : snap.kb.warnings) {
      if (w.status != "raw") continue;
      if (path_feasible(snap, w) == Feasibility::Infeasible)
        d.filtered.emplace_back(w.key(), "no satisfiable path reaches the use");
    }
    return d;
  }
};

class ErrorHandlerFilter : public interproc::Plugin {
 public:
  std::string name() const override { return "error-handler"; }

  interproc::PluginDelta run(const interproc::Snapshot& snap) override {
    interproc::PluginDelta d;
    for (auto& w : snap.kb.warnings) {
      if (w.status != "raw") continue;
      if (error_handled(snap, w))
        d.filtered.emplace_back(w.key(), "return value sanitized before the use");
    }
    return d;
  }
};

class HeapEnrichment : public interproc::Plugin {
 public:
  explicit HeapEnrichment(std::vector<AllocatorSpec> specs)
      : specs_(std::move(specs)) {}

  std::string name() const override { return "heap-allocators"; }

  interproc::PluginDelta run(const interproc::Snapshot& snap) override {
    interproc::PluginDelta d;
    std::map<std::string, const AllocatorSpec*> by_name;
    for (auto& s : specs_) by_name[s.name] = &s;

    // Deterministic tokens: allocation sites in (function, address) order.
    std::vector<std::tuple<std::string, uint64_t, std::string, const AllocatorSpec*>> sites;
    for (auto& [fn, fm] : snap.kb.model.funcs)
      for (auto& ci : fm.calls)
        if (auto it = by_name.find(ci.callee); it != by_name.end())
          sites.emplace_back(fn, ci.addr, ci.ret_atom, it->second);
    std::sort(sites.begin(), sites.end());

    for (size_t i = 0; i < sites.size(); ++i) {
      auto& [fn, addr, ret, spec] = sites[i];
      int64_t token = heap_token(i);
      d.facts.emplace_back(
          "StackPointer",
          facts::Tuple{facts::atom(ret), facts::num(static_cast<int64_t>(addr)),
                       facts::num(token)});
      if (spec->initializes) d.always_safe[fn].insert(token);
    }
    return d;
  }

 private:
  std::vector<AllocatorSpec> specs_;
};

}  // namespace

std::shared_ptr<interproc::Plugin> make_path_filter() {
  return std::make_shared<PathFilter>();
}

std::shared_ptr<interproc::Plugin> make_error_handler_filter() {
  return std::make_shared<ErrorHandlerFilter>();
}

std::shared_ptr<interproc::Plugin> make_heap_enrichment(
    std::vector<AllocatorSpec> specs) {
  return std::make_shared<HeapEnrichment>(std::move(specs));
}

}  // namespace uninit::plugins
