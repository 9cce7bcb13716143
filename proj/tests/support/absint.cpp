#include "support/absint.hpp"

#include <map>
#include <set>

namespace testsupport {

namespace {

using namespace uninit;

struct AbsVal {
  bool is_ptr = false;
  int64_t delta = 0;
};

using State = std::map<std::string, AbsVal>;

AbsVal lookup(const State& st, const il::RegRef& r) {
  auto it = st.find(il::ssa_atom(r));
  return it == st.end() ? AbsVal{} : it->second;
}

struct Interp {
  const il::Program& p;
  const il::Function& f;
  size_t max_steps, max_paths;
  std::string sp;
  std::set<Claim> claims;
  size_t paths = 0;

  Interp(const il::Program& p_, const il::Function& f_, size_t ms, size_t mp)
      : p(p_), f(f_), max_steps(ms), max_paths(mp), sp(p_.sp_reg()) {}

  void define(State& st, const std::string& atom, AbsVal v, uint64_t addr) {
    if (!v.is_ptr) return;
    st[atom] = v;
    claims.insert({f.name, atom, v.delta, addr});
  }

  void exec(State& st, const il::Statement& s) {
    auto reg_val = [&](const il::Operand& o) { return o.is_const ? AbsVal{} : lookup(st, o.reg); };
    switch (s.op) {
      case il::Op::Assign:
        define(st, il::ssa_atom(s.dst), reg_val(s.src), s.addr);
        break;
      case il::Op::Lea: {
        AbsVal base = lookup(st, s.mem.base);
        if (base.is_ptr) define(st, il::ssa_atom(s.dst), {true, base.delta + s.mem.disp}, s.addr);
        break;
      }
      case il::Op::BinOp: {
        if (s.bin != il::BinKind::Add && s.bin != il::BinKind::Sub) break;
        AbsVal l = reg_val(s.lhs), r = reg_val(s.rhs);
        AbsVal out;
        if (s.bin == il::BinKind::Add && l.is_ptr && s.rhs.is_const)
          out = {true, l.delta + s.rhs.value};
        else if (s.bin == il::BinKind::Add && r.is_ptr && s.lhs.is_const)
          out = {true, r.delta + s.lhs.value};
        else if (s.bin == il::BinKind::Sub && l.is_ptr && s.rhs.is_const)
          out = {true, l.delta - s.rhs.value};
        define(st, il::ssa_atom(s.dst), out, s.addr);
        break;
      }
      case il::Op::Push: {
        AbsVal cur = lookup(st, {sp, f.sp_ver_before.at(s.addr)});
        if (cur.is_ptr)
          define(st, il::ssa_atom({sp, f.sp_ver_after.at(s.addr)}),
                 {true, cur.delta - p.word_size}, s.addr);
        break;
      }
      case il::Op::Pop: {
        AbsVal cur = lookup(st, {sp, f.sp_ver_before.at(s.addr)});
        if (cur.is_ptr)
          define(st, il::ssa_atom({sp, f.sp_ver_after.at(s.addr)}),
                 {true, cur.delta + p.word_size}, s.addr);
        break;
      }
      // Memory reads and call returns stay unknown; nothing else defines a
      // register.
      case il::Op::Load:
      case il::Op::Store:
      case il::Op::Call:
      case il::Op::Ret:
      case il::Op::Jump:
      case il::Op::CondJump:
      case il::Op::Nop:
        break;
    }
  }

  void walk() {
    struct Frame {
      int block;
      int from = -1;  // predecessor, for phi selection
      State st;
      size_t steps = 0;
    };
    std::vector<Frame> stack;
    State seed;
    seed[il::ssa_atom({sp, 0})] = {true, 0};
    stack.push_back({0, -1, std::move(seed), 0});

    while (!stack.empty() && paths < max_paths) {
      Frame fr = std::move(stack.back());
      stack.pop_back();
      const il::BasicBlock& b = f.blocks[static_cast<size_t>(fr.block)];

      if (fr.from >= 0 && !b.phis.empty()) {
        size_t idx = 0;
        while (idx < b.preds.size() && b.preds[idx] != fr.from) ++idx;
        for (const auto& phi : b.phis)
          if (idx < phi.sources.size())
            define(fr.st, il::ssa_atom(phi.dst), lookup(fr.st, phi.sources[idx]), phi.addr);
      }

      bool truncated = false;
      for (const auto& s : b.stmts) {
        if (++fr.steps > max_steps) {
          truncated = true;
          break;
        }
        exec(fr.st, s);
      }
      if (truncated || b.succs.empty()) {
        ++paths;
        continue;
      }
      for (size_t i = 0; i < b.succs.size(); ++i) {
        Frame next{b.succs[i], fr.block,
                   i + 1 == b.succs.size() ? std::move(fr.st) : fr.st, fr.steps};
        stack.push_back(std::move(next));
      }
    }
  }
};

}  // namespace

std::vector<Claim> interpret_function(const il::Program& p, const il::Function& f,
                                      size_t max_steps, size_t max_paths) {
  Interp in(p, f, max_steps, max_paths);
  in.walk();
  return {in.claims.begin(), in.claims.end()};
}

std::vector<Claim> unsupported_claims(const std::vector<Claim>& claims,
                                      const facts::FactBase& db) {
  std::vector<Claim> missing;
  for (const auto& c : claims)
    if (!db.contains("VPtsTo", {facts::atom(c.atom), facts::num(c.delta),
                                facts::num(static_cast<int64_t>(c.addr)), facts::atom(c.fn)}))
      missing.push_back(c);
  return missing;
}

}  // namespace testsupport
