#include "uninit/ssa.hpp"

#include <algorithm>
#include <functional>

namespace uninit::ssa {

using namespace il;

bool DomInfo::dominates(int a, int b) const {
  if (a < 0 || b < 0 || a >= static_cast<int>(tin_.size()) || b >= static_cast<int>(tin_.size()))
    return false;
  if (tin_[a] < 0 || tin_[b] < 0) return false;
  return tin_[a] <= tin_[b] && tout_[b] <= tout_[a];
}

std::vector<int> DomInfo::dominees(int a) const {
  std::vector<int> out;
  for (int b = 0; b < static_cast<int>(idom.size()); ++b)
    if (dominates(a, b)) out.push_back(b);
  return out;
}

DomInfo compute_dominators_adj(int n, int entry, const std::vector<std::vector<int>>& succs,
                               const std::vector<std::vector<int>>& preds) {
  DomInfo d;
  d.idom.assign(n, -1);
  d.children.assign(n, {});
  d.frontier.assign(n, {});

  // Reverse postorder over reachable blocks.
  std::vector<int> post;
  std::vector<char> seen(n, 0);
  std::function<void(int)> dfs = [&](int b) {
    seen[b] = 1;
    for (int s : succs[b])
      if (!seen[s]) dfs(s);
    post.push_back(b);
  };
  dfs(entry);
  d.rpo.assign(post.rbegin(), post.rend());
  for (int b = 0; b < n; ++b)
    if (!seen[b]) d.unreachable.insert(b);

  std::vector<int> rpo_num(n, -1);
  for (size_t i = 0; i < d.rpo.size(); ++i) rpo_num[d.rpo[i]] = static_cast<int>(i);

  auto intersect = [&](int a, int b) {
    while (a != b) {
      while (rpo_num[a] > rpo_num[b]) a = d.idom[a];
      while (rpo_num[b] > rpo_num[a]) b = d.idom[b];
    }
    return a;
  };

  d.idom[entry] = entry;
  bool changed = true;
  while (changed) {
    changed = false;
    for (int b : d.rpo) {
      if (b == entry) continue;
      int new_idom = -1;
      for (int p : preds[b]) {
        if (rpo_num[p] < 0 || d.idom[p] < 0) continue;
        new_idom = new_idom < 0 ? p : intersect(new_idom, p);
      }
      if (new_idom >= 0 && d.idom[b] != new_idom) {
        d.idom[b] = new_idom;
        changed = true;
      }
    }
  }

  for (int b : d.rpo) {
    if (b == entry) continue;
    d.children[d.idom[b]].push_back(b);
  }
  for (auto& c : d.children) std::sort(c.begin(), c.end());

  // DFS intervals over the dominator tree for O(1) dominates().
  d.tin_.assign(n, -1);
  d.tout_.assign(n, -1);
  int clock = 0;
  std::function<void(int)> tree = [&](int b) {
    d.tin_[b] = clock++;
    for (int c : d.children[b]) tree(c);
    d.tout_[b] = clock++;
  };
  tree(entry);

  for (int b : d.rpo) {
    // Joins, plus the entry when it has a back edge: idom(entry) == entry, so
    // the runner walk below stops one step early there and the entry's own
    // membership in its frontier has to be added explicitly.
    if (preds[b].size() < 2 && b != entry) continue;
    for (int p : preds[b]) {
      if (rpo_num[p] < 0) continue;
      int runner = p;
      while (runner != d.idom[b]) {
        d.frontier[runner].insert(b);
        runner = d.idom[runner];
      }
      if (b == entry) d.frontier[entry].insert(entry);
    }
  }
  return d;
}

DomInfo compute_dominators(const Function& f) {
  int n = static_cast<int>(f.blocks.size());
  std::vector<std::vector<int>> succs(n), preds(n);
  for (auto& b : f.blocks) {
    succs[b.id] = b.succs;
    preds[b.id] = b.preds;
  }
  return compute_dominators_adj(n, 0, succs, preds);
}

namespace {

// Register universe of a function, sorted: every name referenced plus the
// architectural registers the analysis itself models.
std::vector<std::string> register_universe(const Function& f, const Program& p) {
  std::set<std::string> regs{p.sp_reg(), p.ret_reg()};
  auto add_op = [&](const Operand& o) {
    if (!o.is_const && !o.reg.name.empty()) regs.insert(o.reg.name);
  };
  for (auto& b : f.blocks)
    for (auto& s : b.stmts) {
      if (!s.dst.name.empty()) regs.insert(s.dst.name);
      add_op(s.src);
      add_op(s.lhs);
      add_op(s.rhs);
      for (auto& a : s.args) add_op(a);
      if (!s.mem.base.name.empty() &&
          (s.op == Op::Load || s.op == Op::Store || s.op == Op::Lea))
        regs.insert(s.mem.base.name);
    }
  return {regs.begin(), regs.end()};
}

// Register(s) defined by a statement, in definition order.
std::vector<std::string> defined_regs(const Statement& s, const Program& p) {
  switch (s.op) {
    case Op::Assign:
    case Op::Load:
    case Op::BinOp:
    case Op::Lea:
      return {s.dst.name};
    case Op::Pop:
      return {s.dst.name, p.sp_reg()};
    case Op::Push:
      return {p.sp_reg()};
    case Op::Call:
      return {p.ret_reg()};
    default:
      return {};
  }
}

class Renamer {
 public:
  Renamer(Function& f, const Program& p, const DomInfo& dom, uint64_t& phi_addr)
      : f_(f), p_(p), dom_(dom), phi_addr_(phi_addr) {}

  void run() {
    place_phis();
    for (auto& r : register_universe(f_, p_)) stacks_[r] = {0};
    rename_block(0);
    rename_dead_blocks();
    f_.ssa_form = true;
  }

 private:
  void place_phis() {
    std::map<std::string, std::set<int>> def_blocks;
    for (auto& b : f_.blocks) {
      if (f_.unreachable.count(b.id)) continue;
      for (auto& s : b.stmts)
        for (auto& r : defined_regs(s, p_)) def_blocks[r].insert(b.id);
    }
    for (auto& [reg, blocks] : def_blocks) {
      // Iterated dominance frontier.
      std::set<int> phi_blocks;
      std::vector<int> work(blocks.begin(), blocks.end());
      while (!work.empty()) {
        int b = work.back();
        work.pop_back();
        for (int df : dom_.frontier[b])
          if (phi_blocks.insert(df).second) work.push_back(df);
      }
      for (int b : phi_blocks) {
        PhiNode phi;
        phi.dst = RegRef{reg, -1};
        phi.sources.assign(f_.blocks[b].preds.size(), RegRef{reg, 0});
        phi.addr = ++phi_addr_;
        f_.blocks[b].phis.push_back(phi);
      }
    }
    for (auto& b : f_.blocks)
      std::sort(b.phis.begin(), b.phis.end(),
                [](const PhiNode& a, const PhiNode& c) { return a.dst.name < c.dst.name; });
  }

  int top(const std::string& r) {
    auto it = stacks_.find(r);
    return it == stacks_.end() || it->second.empty() ? 0 : it->second.back();
  }

  int fresh(const std::string& r, uint64_t site) {
    int v = ++counter_[r];
    stacks_[r].push_back(v);
    f_.def_site[{r, v}] = site;
    return v;
  }

  void use(RegRef& r) {
    if (!r.name.empty()) r.version = top(r.name);
  }
  void use(Operand& o) {
    if (!o.is_const) use(o.reg);
  }

  void rename_stmt(Statement& s, std::vector<std::string>& pushed) {
    f_.sp_ver_before[s.addr] = top(p_.sp_reg());
    switch (s.op) {
      case Op::Assign:
        use(s.src);
        break;
      case Op::Load:
        use(s.mem.base);
        break;
      case Op::Store:
        use(s.mem.base);
        use(s.src);
        break;
      case Op::BinOp:
        use(s.lhs);
        use(s.rhs);
        break;
      case Op::Lea:
        use(s.mem.base);
        break;
      case Op::Push:
        use(s.src);
        break;
      case Op::Pop:
        break;
      case Op::Call: {
        for (auto& a : s.args) use(a);
        auto& snap = f_.live_defs_at_call[s.addr];
        for (auto& [reg, stack] : stacks_) snap[reg] = stack.empty() ? 0 : stack.back();
        break;
      }
      case Op::CondJump:
        use(s.lhs);
        break;
      case Op::Ret:
      case Op::Jump:
      case Op::Nop:
        break;
    }
    for (auto& r : defined_regs(s, p_)) {
      int v = fresh(r, s.addr);
      if (r == s.dst.name && s.op != Op::Push && s.op != Op::Call) s.dst.version = v;
      pushed.push_back(r);
    }
    f_.sp_ver_after[s.addr] = top(p_.sp_reg());
  }

  void rename_block(int id) {
    BasicBlock& b = f_.blocks[id];
    std::vector<std::string> pushed;
    for (auto& phi : b.phis) {
      phi.dst.version = fresh(phi.dst.name, phi.addr);
      pushed.push_back(phi.dst.name);
    }
    for (auto& s : b.stmts) rename_stmt(s, pushed);

    for (int succ : b.succs) {
      auto& sb = f_.blocks[succ];
      int pred_idx = static_cast<int>(
          std::find(sb.preds.begin(), sb.preds.end(), id) - sb.preds.begin());
      for (auto& phi : sb.phis) phi.sources[pred_idx] = RegRef{phi.dst.name, top(phi.dst.name)};
    }
    for (int child : dom_.children[id])
      if (child != id) rename_block(child);
    for (auto it = pushed.rbegin(); it != pushed.rend(); ++it) stacks_[*it].pop_back();
  }

  // Unreachable blocks still get consistent names so their accesses can be
  // reported as dead code: each is renamed as if entered fresh.
  void rename_dead_blocks() {
    for (auto& b : f_.blocks) {
      if (!f_.unreachable.count(b.id)) continue;
      for (auto& [reg, stack] : stacks_) stack = {0};
      std::vector<std::string> pushed;
      for (auto& s : b.stmts) rename_stmt(s, pushed);
    }
  }

  Function& f_;
  const Program& p_;
  const DomInfo& dom_;
  uint64_t& phi_addr_;
  std::map<std::string, std::vector<int>> stacks_;
  std::map<std::string, int> counter_;
};

}  // namespace

void to_ssa(Program& p) {
  uint64_t max_addr = 0;
  for (auto& f : p.functions)
    for (auto& b : f.blocks)
      for (auto& s : b.stmts) max_addr = std::max(max_addr, s.addr);
  uint64_t phi_addr = max_addr;

  for (auto& f : p.functions) {
    if (f.ssa_form) throw AnalysisError("function '" + f.name + "' is already in SSA form");
    DomInfo dom = compute_dominators(f);
    Renamer(f, p, dom, phi_addr).run();
  }
}

const std::map<uint64_t, std::map<std::string, int>>& collect_live_defs(const Function& f) {
  return f.live_defs_at_call;
}

}  // namespace uninit::ssa
