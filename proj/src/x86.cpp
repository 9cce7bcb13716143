#include "uninit/x86.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <optional>
#include <set>
#include <sstream>

namespace uninit::x86 {

using namespace il;

namespace {

struct Inst {
  Statement stmt;
  std::optional<uint64_t> jump_target;  // Jump/CondJump target address
  int line = 0;
};

struct RawFunc {
  std::string name;
  std::vector<Inst> insts;
  int line = 0;
};

class LineLexer {
 public:
  LineLexer(const std::string& s, int line) : s_(s), line_(line) {}

  bool done() {
    skip();
    return pos_ >= s_.size();
  }

  std::string ident() {
    skip();
    size_t start = pos_;
    while (pos_ < s_.size() && (isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_' ||
                                s_[pos_] == '.' || s_[pos_] == '@'))
      ++pos_;
    if (start == pos_) throw ParseError(line_, "expected identifier");
    return s_.substr(start, pos_ - start);
  }

  bool peek_is(char c) {
    skip();
    return pos_ < s_.size() && s_[pos_] == c;
  }
  bool eat(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  void expect(char c) {
    if (!eat(c)) throw ParseError(line_, std::string("expected '") + c + "'");
  }

  bool peek_is_number() {
    skip();
    if (pos_ >= s_.size()) return false;
    if (isdigit(static_cast<unsigned char>(s_[pos_]))) return true;
    return s_[pos_] == '-' && pos_ + 1 < s_.size() &&
           isdigit(static_cast<unsigned char>(s_[pos_ + 1]));
  }

  int64_t number() {
    skip();
    bool neg = eat('-');
    size_t start = pos_;
    int base = 10;
    if (pos_ + 1 < s_.size() && s_[pos_] == '0' && (s_[pos_ + 1] == 'x' || s_[pos_ + 1] == 'X')) {
      base = 16;
      pos_ += 2;
      start = pos_;
    }
    while (pos_ < s_.size() && isalnum(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    if (start == pos_) throw ParseError(line_, "expected number");
    int64_t v;
    try {
      v = std::stoll(s_.substr(start, pos_ - start), nullptr, base);
    } catch (...) {
      throw ParseError(line_, "bad number");
    }
    return neg ? -v : v;
  }

  int line() const { return line_; }

 private:
  void skip() {
    while (pos_ < s_.size() && isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  const std::string& s_;
  size_t pos_ = 0;
  int line_;
};

bool is_size_keyword(const std::string& s) {
  return s == "byte" || s == "word" || s == "dword" || s == "qword" || s == "ptr";
}

struct X86Operand {
  enum Kind { Reg, Imm, Mem } kind;
  std::string reg;
  int64_t imm = 0;
  MemRef mem;
};

class Lifter {
 public:
  explicit Lifter(int word_size) : word_size_(word_size) {}

  Program run(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      auto cut = line.find_first_of(";#");
      if (cut != std::string::npos) line.resize(cut);
      bool blank = std::all_of(line.begin(), line.end(),
                               [](unsigned char c) { return isspace(c); });
      if (blank) continue;
      parse_line(line, lineno);
    }
    Program p;
    p.word_size = word_size_;
    for (auto& rf : funcs_) p.functions.push_back(build(rf));
    return p;
  }

 private:
  void parse_line(const std::string& line, int lineno) {
    LineLexer lx(line, lineno);
    std::optional<uint64_t> addr;
    if (lx.peek_is_number()) {
      addr = static_cast<uint64_t>(lx.number());
      lx.eat(':');
    }
    if (lx.done()) throw ParseError(lineno, "expected instruction or label");
    std::string head = lx.ident();
    if (!addr && lx.eat(':')) {
      if (!lx.done()) throw ParseError(lineno, "unexpected text after label");
      for (auto& rf : funcs_)
        if (rf.name == head) throw ParseError(lineno, "duplicate function '" + head + "'");
      funcs_.push_back(RawFunc{head, {}, lineno});
      return;
    }
    if (funcs_.empty()) throw ParseError(lineno, "instruction before the first function label");

    Inst inst;
    inst.line = lineno;
    inst.stmt.addr = addr ? *addr : next_addr_;
    if (!seen_addrs_.insert(inst.stmt.addr).second)
      throw ParseError(lineno, "duplicate instruction address " + hex(inst.stmt.addr));
    next_addr_ = inst.stmt.addr + 1;
    lift_inst(head, lx, inst);
    funcs_.back().insts.push_back(std::move(inst));
  }

  X86Operand parse_operand(LineLexer& lx) {
    X86Operand op;
    if (lx.peek_is('[')) {
      op.kind = X86Operand::Mem;
      op.mem = parse_mem(lx);
      return op;
    }
    if (lx.peek_is_number()) {
      op.kind = X86Operand::Imm;
      op.imm = lx.number();
      return op;
    }
    std::string id = lx.ident();
    while (is_size_keyword(id)) {
      if (lx.peek_is('[')) break;
      id = lx.ident();
    }
    if (lx.peek_is('[')) {
      op.kind = X86Operand::Mem;
      op.mem = parse_mem(lx);
      return op;
    }
    op.kind = X86Operand::Reg;
    op.reg = id;
    return op;
  }

  MemRef parse_mem(LineLexer& lx) {
    lx.expect('[');
    MemRef m;
    m.base = RegRef{lx.ident(), -1};
    if (lx.eat('+'))
      m.disp = lx.number();
    else if (lx.peek_is('-'))
      m.disp = lx.number();
    lx.expect(']');
    return m;
  }

  static Operand to_operand(const X86Operand& o, int line) {
    if (o.kind == X86Operand::Reg) return Operand::of(o.reg);
    if (o.kind == X86Operand::Imm) return Operand::constant(o.imm);
    throw ParseError(line, "memory operand not allowed here");
  }

  void lift_inst(const std::string& mn, LineLexer& lx, Inst& inst) {
    Statement& s = inst.stmt;
    int line = lx.line();
    if (mn == "mov") {
      X86Operand dst = parse_operand(lx);
      lx.expect(',');
      X86Operand src = parse_operand(lx);
      if (dst.kind == X86Operand::Mem) {
        s.op = Op::Store;
        s.mem = dst.mem;
        s.src = to_operand(src, line);
      } else if (src.kind == X86Operand::Mem) {
        s.op = Op::Load;
        s.dst = RegRef{dst.reg, -1};
        s.mem = src.mem;
      } else {
        if (dst.kind != X86Operand::Reg) throw ParseError(line, "mov destination must be writable");
        s.op = Op::Assign;
        s.dst = RegRef{dst.reg, -1};
        s.src = to_operand(src, line);
      }
    } else if (mn == "lea") {
      X86Operand dst = parse_operand(lx);
      lx.expect(',');
      X86Operand src = parse_operand(lx);
      if (dst.kind != X86Operand::Reg || src.kind != X86Operand::Mem)
        throw ParseError(line, "lea expects register, [mem]");
      s.op = Op::Lea;
      s.dst = RegRef{dst.reg, -1};
      s.mem = src.mem;
    } else if (mn == "push") {
      s.op = Op::Push;
      s.src = to_operand(parse_operand(lx), line);
    } else if (mn == "pop") {
      X86Operand dst = parse_operand(lx);
      if (dst.kind != X86Operand::Reg) throw ParseError(line, "pop expects a register");
      s.op = Op::Pop;
      s.dst = RegRef{dst.reg, -1};
    } else if (mn == "add" || mn == "sub") {
      X86Operand dst = parse_operand(lx);
      lx.expect(',');
      X86Operand src = parse_operand(lx);
      if (dst.kind != X86Operand::Reg) throw ParseError(line, mn + " destination must be a register");
      s.op = Op::BinOp;
      s.bin = mn == "add" ? BinKind::Add : BinKind::Sub;
      s.dst = RegRef{dst.reg, -1};
      s.lhs = Operand::of(dst.reg);
      s.rhs = to_operand(src, line);
    } else if (mn == "cmp") {
      X86Operand a = parse_operand(lx);
      lx.expect(',');
      X86Operand b = parse_operand(lx);
      s.op = Op::BinOp;
      s.bin = BinKind::Cmp;
      s.dst = RegRef{fresh_temp(), -1};
      s.lhs = to_operand(a, line);
      s.rhs = to_operand(b, line);
    } else if (mn == "jz" || mn == "jnz" || mn == "jmp") {
      if (!lx.peek_is_number()) throw ParseError(line, mn + " target must be an address");
      inst.jump_target = static_cast<uint64_t>(lx.number());
      if (mn == "jmp") {
        s.op = Op::Jump;
      } else {
        s.op = Op::CondJump;
        s.jump_if_zero = (mn == "jz");
        // Condition filled in later from the last cmp of the block.
        s.lhs = Operand::of("");
      }
    } else if (mn == "call") {
      s.op = Op::Call;
      s.callee = lx.ident();
    } else if (mn == "ret") {
      s.op = Op::Ret;
    } else if (mn == "nop") {
      s.op = Op::Nop;
    } else {
      throw ParseError(line, "unknown mnemonic '" + mn + "'");
    }
    if (!lx.done()) throw ParseError(line, "unexpected trailing text");
  }

  std::string fresh_temp() { return "t" + std::to_string(++temp_counter_); }

  Function build(RawFunc& rf) {
    if (rf.insts.empty()) throw ParseError(rf.line, "empty function '" + rf.name + "'");

    std::set<uint64_t> own_addrs;
    for (size_t i = 0; i < rf.insts.size(); ++i) {
      if (i > 0 && rf.insts[i].stmt.addr <= rf.insts[i - 1].stmt.addr)
        throw ParseError(rf.insts[i].line, "addresses must increase within a function");
      own_addrs.insert(rf.insts[i].stmt.addr);
    }

    // Leaders: first instruction, jump targets, instruction after a terminator.
    std::set<uint64_t> leaders{rf.insts.front().stmt.addr};
    for (size_t i = 0; i < rf.insts.size(); ++i) {
      auto& inst = rf.insts[i];
      if (inst.jump_target) {
        if (!own_addrs.count(*inst.jump_target))
          throw ParseError(inst.line, "jump target " + hex(*inst.jump_target) +
                                          " is not an instruction of '" + rf.name + "'");
        leaders.insert(*inst.jump_target);
      }
      Op op = inst.stmt.op;
      bool term = op == Op::Jump || op == Op::CondJump || op == Op::Call || op == Op::Ret;
      if (term && i + 1 < rf.insts.size()) leaders.insert(rf.insts[i + 1].stmt.addr);
    }

    auto label_of = [](uint64_t a) { return "loc_" + hex(a); };

    std::vector<std::pair<std::string, std::vector<Statement>>> blocks;
    std::string last_cmp_temp;
    for (auto& inst : rf.insts) {
      if (leaders.count(inst.stmt.addr)) {
        blocks.emplace_back(label_of(inst.stmt.addr), std::vector<Statement>{});
        last_cmp_temp.clear();
      }
      Statement s = inst.stmt;
      if (s.op == Op::BinOp && s.bin == BinKind::Cmp) last_cmp_temp = s.dst.name;
      if (s.op == Op::CondJump) {
        s.lhs = Operand::of(last_cmp_temp.empty() ? fresh_temp() : last_cmp_temp);
      }
      if (inst.jump_target) s.target = label_of(*inst.jump_target);
      blocks.back().second.push_back(std::move(s));
    }
    return assemble_function(rf.name, std::move(blocks));
  }

  int word_size_;
  std::vector<RawFunc> funcs_;
  uint64_t next_addr_ = 0x1000;
  std::set<uint64_t> seen_addrs_;
  int temp_counter_ = 0;
};

}  // namespace

Program lift_x86_mini(const std::string& text, int word_size) {
  return Lifter(word_size).run(text);
}

}  // namespace uninit::x86
