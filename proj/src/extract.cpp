#include "uninit/extract.hpp"

#include <algorithm>
#include <deque>

#include "uninit/support.hpp"

namespace uninit::extract {

using facts::atom;
using facts::FactBase;
using facts::num;
using facts::Tuple;

std::vector<std::vector<int>> FuncModel::succ_lists() const {
  std::vector<std::vector<int>> s(n_blocks());
  for (auto& [from, to] : edges) s[from].push_back(to);
  return s;
}

std::vector<std::vector<int>> FuncModel::pred_lists() const {
  std::vector<std::vector<int>> s(n_blocks());
  for (auto& [from, to] : edges) s[to].push_back(from);
  return s;
}

const FuncModel* AnalysisModel::func_of_addr(uint64_t addr) const {
  for (auto& [name, fm] : funcs)
    if (fm.stmt_pos.count(addr)) return &fm;
  return nullptr;
}

namespace {

// Stack slot term: the location word at [sp_ver + disp]. Incoming-argument
// slots (positive frame delta) are spelled with the entry-time stack pointer
// so every access to the same argument uses one name regardless of how far
// the stack pointer has moved.
std::string slot_atom(const std::string& sp, int ver, int64_t disp) {
  std::string inner = il::ssa_atom(il::RegRef{sp, ver});
  if (disp > 0) inner += "+" + std::to_string(disp);
  if (disp < 0) inner += std::to_string(disp);
  return "[" + inner + "]";
}

std::string imm_atom(uint64_t addr, int idx) {
  return "$" + hex(addr) + "." + std::to_string(idx);
}

// First executable statement of a function, skipping empty lead-in blocks.
const il::Statement* entry_stmt(const il::Function& f) {
  int b = 0;
  std::set<int> seen;
  while (seen.insert(b).second) {
    if (!f.blocks[b].stmts.empty()) return &f.blocks[b].stmts.front();
    if (f.blocks[b].succs.size() != 1) break;
    b = f.blocks[b].succs[0];
  }
  return nullptr;
}

class FuncExtractor {
 public:
  FuncExtractor(const il::Program& p, const il::Function& f) : p_(p), f_(f), sp_(p.sp_reg()) {}

  void run() {
    if (!f_.ssa_form) throw AnalysisError("function '" + f_.name + "' is not in SSA form");
    const il::Statement* first = entry_stmt(f_);
    if (!first) throw AnalysisError("function '" + f_.name + "' has no executable statements");

    fm_.name = f_.name;
    fm_.entry = 0;
    fm_.entry_addr = first->addr;
    fm_.exits = f_.exit_blocks;
    std::sort(fm_.exits.begin(), fm_.exits.end());
    fm_.dead_blocks = f_.unreachable;
    for (auto& b : f_.blocks) {
      fm_.block_labels.push_back(b.label);
      label_to_id_[b.label] = b.id;
      for (int s : b.succs) fm_.edges.insert({b.id, s});
    }
    for (auto& [key, addr] : f_.def_site)
      if (key.first == p_.ret_reg()) ret_ver_at_[addr] = key.second;

    const std::string ctx = f_.name;
    fb_.add("FuncEntry", {atom(ctx), num(0), num(static_cast<int64_t>(fm_.entry_addr))});
    for (int e : fm_.exits) fb_.add("FuncExit", {atom(ctx), num(e)});
    for (auto& [from, to] : fm_.edges) fb_.add("CFGEdge", {atom(ctx), num(from), num(to)});
    for (auto& b : f_.blocks) fb_.add("BlockLabel", {atom(ctx), num(b.id), atom(b.label)});
    for (int d : fm_.dead_blocks) fb_.add("DeadBlock", {atom(ctx), num(d)});

    // Every stack value the entry-time stack pointer names is at delta 0.
    fb_.add("StackPointer", {atom(il::ssa_atom({sp_, 0})), num(static_cast<int64_t>(first->addr)),
                             num(0)});

    for (auto& b : f_.blocks) extract_block(b);
    compute_canreach(f_, fb_);

    std::sort(fm_.direct.begin(), fm_.direct.end());
    std::sort(fm_.calls.begin(), fm_.calls.end());
    std::sort(fm_.branches.begin(), fm_.branches.end());
  }

  FuncModel take_model() { return std::move(fm_); }
  FactBase take_facts() { return std::move(fb_); }

 private:
  // Operand as a fact term; immediates become per-site constant atoms so
  // arithmetic rules can look their value up.
  std::string operand_atom(const il::Operand& o, uint64_t addr, int& idx, bool dead) {
    if (!o.is_const) return il::ssa_atom(o.reg);
    std::string a = imm_atom(addr, idx++);
    if (!dead) fb_.add("Constant", {atom(a), num(o.value), num(static_cast<int64_t>(addr))});
    return a;
  }

  void direct_access(bool is_def, int64_t slot, int block, uint64_t addr, const char* rel) {
    fm_.direct.push_back({is_def, slot, 0, block, addr});
    fb_.add(rel, {num(slot), num(0), num(block), num(static_cast<int64_t>(addr)),
                  atom(f_.name)});
  }

  std::string slot_for(int64_t slot_delta, int sp_ver, int64_t disp) const {
    if (slot_delta > 0) return slot_atom(sp_, 0, slot_delta);
    return slot_atom(sp_, sp_ver, disp);
  }

  void extract_block(const il::BasicBlock& b) {
    const std::string ctx = f_.name;
    const bool dead = f_.unreachable.count(b.id) != 0;
    const int W = p_.word_size;

    if (!dead)
      for (auto& phi : b.phis)
        for (auto& src : phi.sources)
          fb_.add("Phi", {atom(il::ssa_atom(phi.dst)), atom(il::ssa_atom(src)),
                          num(static_cast<int64_t>(phi.addr)), atom(ctx)});

    for (size_t pos = 0; pos < b.stmts.size(); ++pos) {
      const il::Statement& st = b.stmts[pos];
      const auto addr = num(static_cast<int64_t>(st.addr));
      fm_.stmt_pos[st.addr] = {b.id, static_cast<int>(pos)};
      fb_.add("StmtBlock", {addr, atom(ctx), num(b.id), num(static_cast<int64_t>(pos))});

      const int64_t s = f_.spd_at.at(st.addr);
      int imm = 0;

      switch (st.op) {
        case il::Op::Assign: {
          std::string dst = il::ssa_atom(st.dst);
          if (st.dst.name == sp_) {
            // Only a frame-pointer restore reaches here (anything else is a
            // symbolic stack pointer change and was rejected earlier).
            if (!dead) {
              auto fp = f_.fp_at.find(st.addr);
              if (fp == f_.fp_at.end())
                throw AnalysisError("unrecoverable stack pointer assignment at " + hex(st.addr));
              fb_.add("StackPointer", {atom(dst), addr, num(fp->second)});
            }
            break;
          }
          if (dead) break;
          if (st.src.is_const)
            fb_.add("Constant", {atom(dst), num(st.src.value), addr});
          else if (st.src.reg.name == sp_)
            fb_.add("StackPointer", {atom(dst), addr, num(s)});
          else
            fb_.add("Assign", {atom(dst), atom(il::ssa_atom(st.src.reg)), addr});
          break;
        }
        case il::Op::Load: {
          if (st.mem.base.name == sp_) {
            int64_t slot = s + st.mem.disp;
            direct_access(false, slot, b.id, st.addr, "DirectUse");
            if (!dead)
              fb_.add("Assign", {atom(il::ssa_atom(st.dst)),
                                 atom(slot_for(slot, st.mem.base.version, st.mem.disp)), addr});
          } else if (!dead) {
            fb_.add("Load", {atom(il::ssa_atom(st.dst)), atom(il::ssa_atom(st.mem.base)),
                             num(st.mem.disp), addr, atom(ctx)});
          }
          break;
        }
        case il::Op::Store: {
          if (st.mem.base.name == sp_) {
            int64_t slot = s + st.mem.disp;
            direct_access(true, slot, b.id, st.addr, "DirectDef");
            if (!dead) {
              std::string sa = slot_for(slot, st.mem.base.version, st.mem.disp);
              if (st.src.is_const)
                fb_.add("Constant", {atom(sa), num(st.src.value), addr});
              else
                fb_.add("Assign", {atom(sa), atom(il::ssa_atom(st.src.reg)), addr});
            }
          } else if (!dead) {
            std::string v2 = operand_atom(st.src, st.addr, imm, dead);
            fb_.add("Store", {atom(il::ssa_atom(st.mem.base)), num(st.mem.disp), atom(v2), addr,
                              atom(ctx)});
          }
          break;
        }
        case il::Op::BinOp: {
          if (!dead) {
            std::string lhs = operand_atom(st.lhs, st.addr, imm, dead);
            std::string rhs = operand_atom(st.rhs, st.addr, imm, dead);
            fb_.add("BinOp", {atom(il::bin_name(st.bin)), atom(il::ssa_atom(st.dst)), atom(lhs),
                              atom(rhs), addr, atom(ctx)});
            if (st.dst.name == sp_) {
              int64_t delta = s + (st.bin == il::BinKind::Add ? st.rhs.value : -st.rhs.value);
              fb_.add("StackPointer", {atom(il::ssa_atom(st.dst)), addr, num(delta)});
            }
          }
          break;
        }
        case il::Op::Lea: {
          if (dead) break;
          if (st.mem.base.name == sp_) {
            fb_.add("StackPointer", {atom(il::ssa_atom(st.dst)), addr, num(s + st.mem.disp)});
          } else if (st.mem.disp == 0) {
            fb_.add("Assign", {atom(il::ssa_atom(st.dst)), atom(il::ssa_atom(st.mem.base)), addr});
          } else {
            std::string d = imm_atom(st.addr, imm++);
            fb_.add("Constant", {atom(d), num(st.mem.disp), addr});
            fb_.add("BinOp", {atom("add"), atom(il::ssa_atom(st.dst)),
                              atom(il::ssa_atom(st.mem.base)), atom(d), addr, atom(ctx)});
          }
          break;
        }
        case il::Op::Push: {
          int64_t slot = s - W;
          direct_access(true, slot, b.id, st.addr, "DirectDef");
          if (dead) break;
          int va = f_.sp_ver_after.at(st.addr);
          fb_.add("StackPointer", {atom(il::ssa_atom({sp_, va})), addr, num(slot)});
          std::string sa = slot_for(slot, va, 0);
          if (st.src.is_const)
            fb_.add("Constant", {atom(sa), num(st.src.value), addr});
          else
            fb_.add("Assign", {atom(sa), atom(il::ssa_atom(st.src.reg)), addr});
          break;
        }
        case il::Op::Pop: {
          direct_access(false, s, b.id, st.addr, "DirectUse");
          if (dead) break;
          int vb = f_.sp_ver_before.at(st.addr);
          int va = f_.sp_ver_after.at(st.addr);
          fb_.add("Assign", {atom(il::ssa_atom(st.dst)), atom(slot_for(s, vb, 0)), addr});
          fb_.add("StackPointer", {atom(il::ssa_atom({sp_, va})), addr, num(s + W)});
          break;
        }
        case il::Op::Call:
          extract_call(b, pos, st, dead);
          break;
        case il::Op::CondJump: {
          int target = label_to_id_.at(st.target);
          int fall = target;
          if (b.succs.size() > 1) fall = b.succs[0] == target ? b.succs[1] : b.succs[0];
          if (!dead) {
            std::string cond = operand_atom(st.lhs, st.addr, imm, dead);
            fb_.add("Branch", {addr, atom(ctx), num(b.id), atom(cond),
                               num(st.jump_if_zero ? 1 : 0), num(target), num(fall)});
            fm_.branches.push_back({st.addr, b.id, cond, st.jump_if_zero, target, fall});
          }
          break;
        }
        case il::Op::Ret:
        case il::Op::Jump:
        case il::Op::Nop:
          break;
      }
    }
  }

  void extract_call(const il::BasicBlock& b, size_t pos, const il::Statement& st, bool dead) {
    if (dead) return;
    const std::string ctx = f_.name;
    const auto addr = num(static_cast<int64_t>(st.addr));
    const int W = p_.word_size;
    const il::Function* callee = p_.find(st.callee);
    const il::Statement* callee_entry = callee ? entry_stmt(*callee) : nullptr;
    bool resolved = callee_entry != nullptr;

    CallInfo ci;
    ci.addr = st.addr;
    ci.block = b.id;
    ci.callee = st.callee;
    ci.resolved = resolved;
    ci.fallthrough = b.succs.size() == 1 ? b.succs[0] : -1;

    auto ret_ver = ret_ver_at_.find(st.addr);
    ci.ret_atom = il::ssa_atom({p_.ret_reg(), ret_ver == ret_ver_at_.end() ? 0 : ret_ver->second});

    auto add_param = [&](const std::string& actual, int arg, const std::string& formal) {
      fb_.add("Param", {atom(actual), num(arg), addr, atom(ctx), atom(formal),
                        num(static_cast<int64_t>(callee_entry->addr)), atom(st.callee)});
      fb_.add("TranslateSPD", {num(arg), atom(st.callee), num(int64_t{W} * arg)});
    };

    int imm = 0;
    if (!st.args.empty()) {
      auto regs = p_.arg_regs();
      for (size_t i = 0; i < st.args.size(); ++i) {
        int arg = static_cast<int>(i) + 1;
        std::string actual = operand_atom(st.args[i], st.addr, imm, dead);
        fb_.add("CallArg", {addr, num(arg), atom(actual)});
        ci.args.emplace_back(arg, actual);
        if (resolved) {
          if (i >= regs.size())
            throw AnalysisError("call at " + hex(st.addr) + " passes more register arguments " +
                                "than the convention provides");
          add_param(actual, arg, il::ssa_atom({regs[i], 0}));
        }
      }
    } else {
      // Arguments pushed immediately before the call, nearest push first.
      int arg = 0;
      for (size_t k = pos; k-- > 0;) {
        const il::Statement& ps = b.stmts[k];
        if (ps.op != il::Op::Push) break;
        ++arg;
        int64_t slot = f_.spd_at.at(ps.addr) - W;
        std::string actual = slot_for(slot, f_.sp_ver_after.at(ps.addr), 0);
        fb_.add("CallArg", {addr, num(arg), atom(actual)});
        fb_.add("StackArg", {addr, num(arg), num(slot)});
        ci.args.emplace_back(arg, actual);
        if (resolved) add_param(actual, arg, slot_atom(p_.sp_reg(), 0, int64_t{W} * arg));
      }
    }

    fb_.add("CallSite", {addr, atom(ctx), num(b.id), atom(st.callee), num(resolved ? 1 : 0),
                         num(ci.fallthrough)});
    fb_.add("CallRet", {addr, atom(ci.ret_atom)});
    fm_.calls.push_back(std::move(ci));
  }

  const il::Program& p_;
  const il::Function& f_;
  const std::string sp_;
  FuncModel fm_;
  FactBase fb_;
  std::map<std::string, int> label_to_id_;
  std::map<uint64_t, int> ret_ver_at_;
};

}  // namespace

void compute_canreach(const il::Function& f, FactBase& out) {
  const std::string ctx = f.name;
  const int n = static_cast<int>(f.blocks.size());

  // Blocks reachable from each block through at least one edge.
  std::vector<std::set<int>> onward(n);
  for (int b = 0; b < n; ++b) {
    if (f.unreachable.count(b)) continue;
    std::deque<int> work(f.blocks[b].succs.begin(), f.blocks[b].succs.end());
    while (!work.empty()) {
      int x = work.front();
      work.pop_front();
      if (!onward[b].insert(x).second) continue;
      for (int s : f.blocks[x].succs) work.push_back(s);
    }
  }

  // Phi nodes precede the block's statements in execution order.
  auto addrs = [&](int b) {
    std::vector<int64_t> a;
    for (auto& phi : f.blocks[b].phis) a.push_back(static_cast<int64_t>(phi.addr));
    for (auto& s : f.blocks[b].stmts) a.push_back(static_cast<int64_t>(s.addr));
    return a;
  };

  for (int earlier = 0; earlier < n; ++earlier) {
    if (f.unreachable.count(earlier)) continue;
    auto ea = addrs(earlier);
    // Within one block: strictly earlier statements, plus every statement
    // reaching itself.
    for (size_t i = 0; i < ea.size(); ++i) {
      out.add("CanReach", {num(ea[i]), num(ea[i]), atom(ctx)});
      for (size_t j = 0; j < i; ++j) out.add("CanReach", {num(ea[i]), num(ea[j]), atom(ctx)});
    }
    for (int later : onward[earlier]) {
      if (f.unreachable.count(later)) continue;
      for (int64_t la : addrs(later))
        for (int64_t eaddr : ea) out.add("CanReach", {num(la), num(eaddr), atom(ctx)});
    }
  }
}

AnalysisModel extract_model(const il::Program& p, unsigned threads) {
  AnalysisModel m;
  m.word_size = p.word_size;

  std::vector<FuncModel> models(p.functions.size());
  std::vector<FactBase> bases(p.functions.size());
  parallel_for(p.functions.size(), threads, [&](size_t i) {
    FuncExtractor ex(p, p.functions[i]);
    ex.run();
    models[i] = ex.take_model();
    bases[i] = ex.take_facts();
  });

  for (size_t i = 0; i < p.functions.size(); ++i) {
    m.edb.merge(bases[i]);
    m.funcs.emplace(models[i].name, std::move(models[i]));
  }
  m.edb.add("Meta", {atom("word_size"), num(p.word_size)});
  for (auto& [name, arity] : facts::known_schemas()) m.edb.declare(name, arity);
  return m;
}

facts::FactBase extract_edb(const il::Program& p, unsigned threads) {
  return extract_model(p, threads).edb;
}

AnalysisModel facts_to_model(const facts::FactBase& fb) {
  AnalysisModel m;
  m.edb = fb;
  for (auto& [name, arity] : facts::known_schemas()) m.edb.declare(name, arity);

  for (auto& t : fb.tuples("Meta"))
    if (facts::as_atom(t[0]) == "word_size") m.word_size = static_cast<int>(facts::as_num(t[1]));

  for (auto& t : fb.tuples("FuncEntry")) {
    FuncModel& fm = m.funcs[facts::as_atom(t[0])];
    fm.name = facts::as_atom(t[0]);
    fm.entry = static_cast<int>(facts::as_num(t[1]));
    fm.entry_addr = static_cast<uint64_t>(facts::as_num(t[2]));
  }
  auto func = [&](const facts::Term& t) -> FuncModel& {
    auto it = m.funcs.find(facts::as_atom(t));
    if (it == m.funcs.end())
      throw AnalysisError("facts reference unknown function '" + facts::as_atom(t) + "'");
    return it->second;
  };

  for (auto& t : fb.tuples("BlockLabel")) {
    FuncModel& fm = func(t[0]);
    size_t id = static_cast<size_t>(facts::as_num(t[1]));
    if (fm.block_labels.size() <= id) fm.block_labels.resize(id + 1);
    fm.block_labels[id] = facts::as_atom(t[2]);
  }
  for (auto& t : fb.tuples("CFGEdge"))
    func(t[0]).edges.insert({static_cast<int>(facts::as_num(t[1])),
                             static_cast<int>(facts::as_num(t[2]))});
  for (auto& t : fb.tuples("FuncExit"))
    func(t[0]).exits.push_back(static_cast<int>(facts::as_num(t[1])));
  for (auto& t : fb.tuples("DeadBlock"))
    func(t[0]).dead_blocks.insert(static_cast<int>(facts::as_num(t[1])));
  for (auto& t : fb.tuples("StmtBlock"))
    func(t[1]).stmt_pos[static_cast<uint64_t>(facts::as_num(t[0]))] = {
        static_cast<int>(facts::as_num(t[2])), static_cast<int>(facts::as_num(t[3]))};

  auto access = [&](const Tuple& t, bool is_def) {
    func(t[4]).direct.push_back({is_def, facts::as_num(t[0]), facts::as_num(t[1]),
                                 static_cast<int>(facts::as_num(t[2])),
                                 static_cast<uint64_t>(facts::as_num(t[3]))});
  };
  for (auto& t : fb.tuples("DirectDef")) access(t, true);
  for (auto& t : fb.tuples("DirectUse")) access(t, false);

  std::map<uint64_t, std::vector<std::pair<int, std::string>>> call_args;
  for (auto& t : fb.tuples("CallArg"))
    call_args[static_cast<uint64_t>(facts::as_num(t[0]))].emplace_back(
        static_cast<int>(facts::as_num(t[1])), facts::as_atom(t[2]));
  std::map<uint64_t, std::string> call_rets;
  for (auto& t : fb.tuples("CallRet"))
    call_rets[static_cast<uint64_t>(facts::as_num(t[0]))] = facts::as_atom(t[1]);

  for (auto& t : fb.tuples("CallSite")) {
    CallInfo ci;
    ci.addr = static_cast<uint64_t>(facts::as_num(t[0]));
    ci.block = static_cast<int>(facts::as_num(t[2]));
    ci.callee = facts::as_atom(t[3]);
    ci.resolved = facts::as_num(t[4]) != 0;
    ci.fallthrough = static_cast<int>(facts::as_num(t[5]));
    if (auto it = call_args.find(ci.addr); it != call_args.end()) {
      ci.args = it->second;
      std::sort(ci.args.begin(), ci.args.end());
    }
    if (auto it = call_rets.find(ci.addr); it != call_rets.end()) ci.ret_atom = it->second;
    func(t[1]).calls.push_back(std::move(ci));
  }

  for (auto& t : fb.tuples("Branch"))
    func(t[1]).branches.push_back({static_cast<uint64_t>(facts::as_num(t[0])),
                                   static_cast<int>(facts::as_num(t[2])), facts::as_atom(t[3]),
                                   facts::as_num(t[4]) != 0,
                                   static_cast<int>(facts::as_num(t[5])),
                                   static_cast<int>(facts::as_num(t[6]))});

  for (auto& kv : m.funcs) {
    FuncModel& fm = kv.second;
    std::sort(fm.exits.begin(), fm.exits.end());
    fm.exits.erase(std::unique(fm.exits.begin(), fm.exits.end()), fm.exits.end());
    std::sort(fm.direct.begin(), fm.direct.end());
    std::sort(fm.calls.begin(), fm.calls.end());
    std::sort(fm.branches.begin(), fm.branches.end());
  }
  return m;
}

}  // namespace uninit::extract
