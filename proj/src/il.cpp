#include "uninit/il.hpp"

#include <algorithm>
#include <cctype>
#include <deque>
#include <sstream>

namespace uninit::il {

std::string ssa_atom(const RegRef& r) {
  if (r.version <= 0) return r.name;
  return r.name + "_" + std::to_string(r.version);
}

const char* bin_name(BinKind k) {
  switch (k) {
    case BinKind::Add: return "add";
    case BinKind::Sub: return "sub";
    case BinKind::Mul: return "mul";
    case BinKind::And: return "and";
    case BinKind::Or: return "or";
    case BinKind::Xor: return "xor";
    case BinKind::Cmp: return "cmp";
  }
  return "?";
}

const BasicBlock* Function::block_of(uint64_t addr) const {
  for (auto& b : blocks)
    for (auto& s : b.stmts)
      if (s.addr == addr) return &b;
  return nullptr;
}

Function* Program::find(const std::string& name) {
  for (auto& f : functions)
    if (f.name == name) return &f;
  return nullptr;
}

const Function* Program::find(const std::string& name) const {
  for (auto& f : functions)
    if (f.name == name) return &f;
  return nullptr;
}

// ---------------------------------------------------------------- tokenizer

namespace {

struct Tok {
  enum Kind { Ident, Int, Punct, End } kind = End;
  std::string s;
  int64_t v = 0;
  int line = 0;
};

bool is_stmt_keyword(const std::string& s) {
  static const std::set<std::string> kws = {"assign", "load", "store", "binop", "cmp",
                                            "lea",    "push", "pop",   "call",  "ret",
                                            "jmp",    "jz",   "jnz",   "nop"};
  return kws.count(s) != 0;
}

class Lexer {
 public:
  explicit Lexer(const std::string& text) : text_(text) { advance(); }

  const Tok& peek() const { return tok_; }
  Tok next() {
    Tok t = tok_;
    advance();
    return t;
  }
  int line() const { return tok_.line; }

 private:
  void advance() {
    while (pos_ < text_.size()) {
      char c = text_[pos_];
      if (c == '\n') {
        ++line_;
        ++pos_;
      } else if (isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else if (c == '#') {
        while (pos_ < text_.size() && text_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
    tok_ = Tok{};
    tok_.line = line_;
    if (pos_ >= text_.size()) return;
    char c = text_[pos_];
    if (isalpha(static_cast<unsigned char>(c)) || c == '_') {
      size_t start = pos_;
      while (pos_ < text_.size() &&
             (isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_' ||
              text_[pos_] == '.'))
        ++pos_;
      tok_.kind = Tok::Ident;
      tok_.s = text_.substr(start, pos_ - start);
    } else if (isdigit(static_cast<unsigned char>(c))) {
      size_t start = pos_;
      int base = 10;
      if (c == '0' && pos_ + 1 < text_.size() && (text_[pos_ + 1] == 'x' || text_[pos_ + 1] == 'X')) {
        base = 16;
        pos_ += 2;
      }
      while (pos_ < text_.size() && isalnum(static_cast<unsigned char>(text_[pos_]))) ++pos_;
      tok_.kind = Tok::Int;
      tok_.s = text_.substr(start, pos_ - start);
      try {
        tok_.v = std::stoll(base == 16 ? tok_.s.substr(2) : tok_.s, nullptr, base);
      } catch (...) {
        throw ParseError(line_, "bad integer literal '" + tok_.s + "'");
      }
    } else {
      tok_.kind = Tok::Punct;
      tok_.s = std::string(1, c);
      ++pos_;
    }
  }

  const std::string& text_;
  size_t pos_ = 0;
  int line_ = 1;
  Tok tok_;
};

struct RawBlock {
  std::string label;
  std::vector<Statement> stmts;
  std::vector<int> lines;
};

class IlParser {
 public:
  IlParser(const std::string& text, int word_size) : lex_(text) { prog_.word_size = word_size; }

  Program run() {
    while (lex_.peek().kind != Tok::End) parse_function();
    return std::move(prog_);
  }

 private:
  [[noreturn]] void fail(const std::string& msg) { throw ParseError(lex_.line(), msg); }

  Tok expect_ident() {
    if (lex_.peek().kind != Tok::Ident) fail("expected identifier");
    return lex_.next();
  }
  void expect_punct(const char* p) {
    if (lex_.peek().kind != Tok::Punct || lex_.peek().s != p)
      fail(std::string("expected '") + p + "'");
    lex_.next();
  }
  bool eat_punct(const char* p) {
    if (lex_.peek().kind == Tok::Punct && lex_.peek().s == p) {
      lex_.next();
      return true;
    }
    return false;
  }

  int64_t parse_int() {
    bool neg = eat_punct("-");
    if (lex_.peek().kind != Tok::Int) fail("expected integer");
    int64_t v = lex_.next().v;
    return neg ? -v : v;
  }

  Operand parse_operand() {
    if (lex_.peek().kind == Tok::Ident) return Operand::of(lex_.next().s);
    return Operand::constant(parse_int());
  }

  RegRef parse_reg() {
    Tok t = expect_ident();
    return RegRef{t.s, -1};
  }

  MemRef parse_mem() {
    expect_punct("[");
    MemRef m;
    m.base = parse_reg();
    if (eat_punct("+"))
      m.disp = parse_int();
    else if (eat_punct("-"))
      m.disp = -parse_int();
    expect_punct("]");
    return m;
  }

  Statement parse_stmt() {
    Statement s;
    if (eat_punct("@")) {
      if (lex_.peek().kind != Tok::Int) fail("expected address after '@'");
      s.addr = static_cast<uint64_t>(lex_.next().v);
      pinned_ = true;
    } else {
      pinned_ = false;
    }
    Tok kw = expect_ident();
    const std::string& k = kw.s;
    if (k == "assign") {
      s.op = Op::Assign;
      s.dst = parse_reg();
      expect_punct(",");
      s.src = parse_operand();
    } else if (k == "load") {
      s.op = Op::Load;
      s.dst = parse_reg();
      expect_punct(",");
      s.mem = parse_mem();
    } else if (k == "store") {
      s.op = Op::Store;
      s.mem = parse_mem();
      expect_punct(",");
      s.src = parse_operand();
    } else if (k == "binop" || k == "cmp") {
      s.op = Op::BinOp;
      if (k == "binop") {
        Tok opn = expect_ident();
        s.bin = parse_bin(opn.s);
        expect_punct(",");
      } else {
        s.bin = BinKind::Cmp;
      }
      s.dst = parse_reg();
      expect_punct(",");
      s.lhs = parse_operand();
      expect_punct(",");
      s.rhs = parse_operand();
    } else if (k == "lea") {
      s.op = Op::Lea;
      s.dst = parse_reg();
      expect_punct(",");
      s.mem = parse_mem();
    } else if (k == "push") {
      s.op = Op::Push;
      s.src = parse_operand();
    } else if (k == "pop") {
      s.op = Op::Pop;
      s.dst = parse_reg();
    } else if (k == "call") {
      s.op = Op::Call;
      s.callee = expect_ident().s;
      if (eat_punct("(")) {
        if (!eat_punct(")")) {
          s.args.push_back(parse_operand());
          while (eat_punct(",")) s.args.push_back(parse_operand());
          expect_punct(")");
        }
      }
    } else if (k == "ret") {
      s.op = Op::Ret;
    } else if (k == "jmp") {
      s.op = Op::Jump;
      s.target = expect_ident().s;
    } else if (k == "jz" || k == "jnz") {
      s.op = Op::CondJump;
      s.jump_if_zero = (k == "jz");
      s.lhs = parse_operand();
      expect_punct(",");
      s.target = expect_ident().s;
    } else if (k == "nop") {
      s.op = Op::Nop;
    } else {
      fail("unknown statement '" + k + "'");
    }
    expect_punct(";");
    return s;
  }

  BinKind parse_bin(const std::string& n) {
    if (n == "add") return BinKind::Add;
    if (n == "sub") return BinKind::Sub;
    if (n == "mul") return BinKind::Mul;
    if (n == "and") return BinKind::And;
    if (n == "or") return BinKind::Or;
    if (n == "xor") return BinKind::Xor;
    if (n == "cmp") return BinKind::Cmp;
    fail("unknown binop '" + n + "'");
  }

  void parse_function() {
    Tok kw = expect_ident();
    if (kw.s != "func") fail("expected 'func'");
    std::string name = expect_ident().s;
    if (prog_.find(name)) fail("duplicate function '" + name + "'");
    expect_punct("{");

    std::vector<RawBlock> raw;
    while (!eat_punct("}")) {
      if (lex_.peek().kind == Tok::End) fail("unexpected end of input in function body");
      // An identifier that is not a statement keyword introduces a block
      // label (keywords are reserved and cannot label blocks).
      if (lex_.peek().kind == Tok::Ident && !is_stmt_keyword(lex_.peek().s)) {
        Tok id = lex_.next();
        if (!eat_punct(":")) fail("expected ':' after label '" + id.s + "'");
        for (auto& b : raw)
          if (b.label == id.s) fail("duplicate label '" + id.s + "'");
        raw.push_back(RawBlock{id.s, {}, {}});
        continue;
      }
      if (raw.empty()) fail("function body must start with a label");
      int line = lex_.line();
      Statement s = parse_stmt();
      assign_addr(s, line, raw.back());
      raw.back().stmts.push_back(s);
      raw.back().lines.push_back(line);
    }
    if (raw.empty()) fail("empty function '" + name + "'");

    // Validate jump targets here, where line numbers are still known.
    std::set<std::string> labels;
    for (auto& rb : raw) labels.insert(rb.label);
    std::vector<std::pair<std::string, std::vector<Statement>>> blocks;
    for (auto& rb : raw) {
      for (size_t i = 0; i < rb.stmts.size(); ++i) {
        const Statement& s = rb.stmts[i];
        if ((s.op == Op::Jump || s.op == Op::CondJump) && !labels.count(s.target))
          throw ParseError(rb.lines[i], "unknown label '" + s.target + "'");
      }
      blocks.emplace_back(rb.label, rb.stmts);
    }
    prog_.functions.push_back(assemble_function(name, std::move(blocks)));
  }

  void assign_addr(Statement& s, int line, const RawBlock& blk) {
    if (!pinned_) s.addr = next_addr_;
    if (!seen_addrs_.insert(s.addr).second)
      throw ParseError(line, "duplicate statement address " + hex(s.addr));
    if (!blk.stmts.empty() && s.addr <= blk.stmts.back().addr)
      throw ParseError(line, "addresses must increase within a block");
    next_addr_ = s.addr + 1;
  }

  Lexer lex_;
  Program prog_;
  uint64_t next_addr_ = 0x1000;
  bool pinned_ = false;
  std::set<uint64_t> seen_addrs_;
};

std::string operand_str(const Operand& o) {
  if (o.is_const) return std::to_string(o.value);
  return ssa_atom(o.reg);
}

std::string mem_str(const MemRef& m) {
  std::string s = "[" + ssa_atom(m.base);
  if (m.disp > 0) s += "+" + std::to_string(m.disp);
  if (m.disp < 0) s += "-" + std::to_string(-m.disp);
  return s + "]";
}

}  // namespace

Program parse_il(const std::string& text, int word_size) {
  return IlParser(text, word_size).run();
}

Function assemble_function(const std::string& name,
                           std::vector<std::pair<std::string, std::vector<Statement>>> blocks) {
  auto is_terminator = [](Op op) {
    return op == Op::Call || op == Op::Ret || op == Op::Jump || op == Op::CondJump;
  };

  Function f;
  f.name = name;

  // Keep the entry block predecessor-free: a back edge into the entry would
  // need a phi merging the loop value with the live-on-entry one, and phi
  // nodes only carry one source per predecessor. An empty forwarding block
  // in front makes the old entry an ordinary join.
  bool entry_is_target = false;
  if (!blocks.empty()) {
    for (const auto& [label, stmts] : blocks)
      for (const Statement& s : stmts)
        if ((s.op == Op::Jump || s.op == Op::CondJump) && s.target == blocks.front().first)
          entry_is_target = true;
  }
  if (entry_is_target) {
    std::set<std::string> taken;
    for (const auto& [label, stmts] : blocks) taken.insert(label);
    std::string fresh = "entry";
    for (int i = 1; taken.count(fresh); ++i) fresh = "entry_" + std::to_string(i);
    blocks.insert(blocks.begin(), {fresh, {}});
  }

  // Split so terminators only end blocks.
  std::vector<std::pair<std::string, std::vector<Statement>>> pieces;
  for (auto& [label, stmts] : blocks) {
    std::pair<std::string, std::vector<Statement>> cur{label, {}};
    int split = 0;
    for (size_t i = 0; i < stmts.size(); ++i) {
      cur.second.push_back(stmts[i]);
      if (is_terminator(stmts[i].op) && i + 1 < stmts.size()) {
        pieces.push_back(std::move(cur));
        cur = {label + "." + std::to_string(++split), {}};
      }
    }
    pieces.push_back(std::move(cur));
  }

  std::map<std::string, int> label_id;
  for (size_t i = 0; i < pieces.size(); ++i) label_id[pieces[i].first] = static_cast<int>(i);

  for (size_t i = 0; i < pieces.size(); ++i) {
    BasicBlock b;
    b.id = static_cast<int>(i);
    b.label = pieces[i].first;
    b.stmts = std::move(pieces[i].second);
    f.blocks.push_back(std::move(b));
  }

  for (size_t i = 0; i < f.blocks.size(); ++i) {
    auto& b = f.blocks[i];
    bool fallthrough = true;
    if (!b.stmts.empty()) {
      const Statement& last = b.stmts.back();
      if (last.op == Op::Ret) {
        fallthrough = false;
        f.exit_blocks.push_back(b.id);
      } else if (last.op == Op::Jump || last.op == Op::CondJump) {
        auto it = label_id.find(last.target);
        if (it == label_id.end())
          throw AnalysisError("unknown jump target '" + last.target + "' in '" + name + "'");
        b.succs.push_back(it->second);
        fallthrough = (last.op == Op::CondJump);
      }
    }
    if (fallthrough && i + 1 < f.blocks.size()) b.succs.push_back(static_cast<int>(i + 1));
    // A conditional jump to the fallthrough block is a single edge.
    if (b.succs.size() == 2 && b.succs[0] == b.succs[1]) b.succs.pop_back();
  }

  for (auto& b : f.blocks)
    for (int s : b.succs) f.blocks[s].preds.push_back(b.id);
  for (auto& b : f.blocks) {
    std::sort(b.preds.begin(), b.preds.end());
    b.preds.erase(std::unique(b.preds.begin(), b.preds.end()), b.preds.end());
  }

  std::vector<char> seen(f.blocks.size(), 0);
  std::deque<int> work{0};
  seen[0] = 1;
  while (!work.empty()) {
    int b = work.front();
    work.pop_front();
    for (int s : f.blocks[b].succs)
      if (!seen[s]) {
        seen[s] = 1;
        work.push_back(s);
      }
  }
  for (size_t i = 0; i < f.blocks.size(); ++i)
    if (!seen[i]) f.unreachable.insert(static_cast<int>(i));
  return f;
}

std::string pretty_print(const Program& p) {
  std::ostringstream os;
  for (auto& f : p.functions) {
    os << "func " << f.name << " {\n";
    for (auto& b : f.blocks) {
      os << b.label << ":\n";
      for (auto& phi : b.phis) {
        os << "  # phi " << ssa_atom(phi.dst) << " <-";
        for (auto& s : phi.sources) os << " " << ssa_atom(s);
        os << "\n";
      }
      for (auto& s : b.stmts) {
        os << "  @" << hex(s.addr) << " ";
        switch (s.op) {
          case Op::Assign: os << "assign " << ssa_atom(s.dst) << ", " << operand_str(s.src); break;
          case Op::Load: os << "load " << ssa_atom(s.dst) << ", " << mem_str(s.mem); break;
          case Op::Store: os << "store " << mem_str(s.mem) << ", " << operand_str(s.src); break;
          case Op::BinOp:
            os << "binop " << bin_name(s.bin) << ", " << ssa_atom(s.dst) << ", "
               << operand_str(s.lhs) << ", " << operand_str(s.rhs);
            break;
          case Op::Lea: os << "lea " << ssa_atom(s.dst) << ", " << mem_str(s.mem); break;
          case Op::Push: os << "push " << operand_str(s.src); break;
          case Op::Pop: os << "pop " << ssa_atom(s.dst); break;
          case Op::Call: {
            os << "call " << s.callee << "(";
            for (size_t i = 0; i < s.args.size(); ++i)
              os << (i ? ", " : "") << operand_str(s.args[i]);
            os << ")";
            break;
          }
          case Op::Ret: os << "ret"; break;
          case Op::Jump: os << "jmp " << s.target; break;
          case Op::CondJump:
            os << (s.jump_if_zero ? "jz " : "jnz ") << operand_str(s.lhs) << ", " << s.target;
            break;
          case Op::Nop: os << "nop"; break;
        }
        os << ";\n";
      }
    }
    os << "}\n";
  }
  return os.str();
}

// ------------------------------------------------------------ stack deltas

namespace {

struct SpState {
  int64_t spd = 0;
  bool fp_known = false;
  int64_t fp = 0;
};

void check_cap(int64_t spd, const Function& f) {
  if (spd > kSpdCap || spd < -kSpdCap)
    throw AnalysisError("stack delta exceeds cap in function '" + f.name + "'");
}

// Applies one statement's effect; records deltas before the statement.
void step(Function& f, const Program& p, const Statement& s, SpState& st) {
  const std::string sp = p.sp_reg();
  const std::string fp = p.fp_reg();
  f.spd_at[s.addr] = st.spd;
  if (st.fp_known) f.fp_at[s.addr] = st.fp;

  switch (s.op) {
    case Op::Push:
      st.spd -= p.word_size;
      check_cap(st.spd, f);
      return;
    case Op::Pop:
      if (s.dst.name == sp)
        throw AnalysisError("pop into the stack pointer in '" + f.name + "' at " + hex(s.addr));
      st.spd += p.word_size;
      check_cap(st.spd, f);
      if (s.dst.name == fp) st.fp_known = false;
      return;
    case Op::BinOp:
      if (s.dst.name == sp) {
        bool lhs_sp = !s.lhs.is_const && s.lhs.reg.name == sp;
        if (!lhs_sp || !s.rhs.is_const || (s.bin != BinKind::Add && s.bin != BinKind::Sub))
          throw AnalysisError("symbolic stack pointer modification in '" + f.name + "' at " +
                              hex(s.addr));
        st.spd += (s.bin == BinKind::Add) ? s.rhs.value : -s.rhs.value;
        check_cap(st.spd, f);
        return;
      }
      if (s.dst.name == fp) {
        bool lhs_fp = !s.lhs.is_const && s.lhs.reg.name == fp;
        if (st.fp_known && lhs_fp && s.rhs.is_const &&
            (s.bin == BinKind::Add || s.bin == BinKind::Sub))
          st.fp += (s.bin == BinKind::Add) ? s.rhs.value : -s.rhs.value;
        else
          st.fp_known = false;
      }
      return;
    case Op::Assign:
      if (s.dst.name == sp) {
        if (!s.src.is_const && s.src.reg.name == fp && st.fp_known) {
          st.spd = st.fp;
          check_cap(st.spd, f);
          return;
        }
        throw AnalysisError("symbolic stack pointer modification in '" + f.name + "' at " +
                            hex(s.addr));
      }
      if (s.dst.name == fp) {
        if (!s.src.is_const && s.src.reg.name == sp) {
          st.fp_known = true;
          st.fp = st.spd;
        } else {
          st.fp_known = false;
        }
      }
      return;
    case Op::Lea:
      if (s.dst.name == sp)
        throw AnalysisError("symbolic stack pointer modification in '" + f.name + "' at " +
                            hex(s.addr));
      if (s.dst.name == fp) {
        if (s.mem.base.name == sp) {
          st.fp_known = true;
          st.fp = st.spd + s.mem.disp;
        } else if (s.mem.base.name == fp && st.fp_known) {
          st.fp += s.mem.disp;
        } else {
          st.fp_known = false;
        }
      }
      return;
    case Op::Load:
      if (s.dst.name == sp)
        throw AnalysisError("symbolic stack pointer modification in '" + f.name + "' at " +
                            hex(s.addr));
      if (s.dst.name == fp) st.fp_known = false;
      return;
    case Op::Call:
      // Caller-balanced convention: the callee restores the stack pointer.
      return;
    case Op::Store:
    case Op::Ret:
    case Op::Jump:
    case Op::CondJump:
    case Op::Nop:
      return;
  }
}

void propagate_block(Function& f, const Program& p, int id, SpState st,
                     std::vector<std::optional<SpState>>& entry,
                     std::deque<int>& work) {
  for (auto& s : f.blocks[id].stmts) step(f, p, s, st);
  for (int succ : f.blocks[id].succs) {
    auto& e = entry[succ];
    if (!e) {
      e = st;
      work.push_back(succ);
      continue;
    }
    if (e->spd != st.spd)
      throw AnalysisError("stack delta mismatch at join '" + f.blocks[succ].label + "' in '" +
                          f.name + "' (" + std::to_string(e->spd) + " vs " +
                          std::to_string(st.spd) + ")");
    bool joined_known = e->fp_known && st.fp_known && e->fp == st.fp;
    if (e->fp_known && !joined_known) {
      e->fp_known = false;
      work.push_back(succ);
    }
  }
}

}  // namespace

void compute_spd(Program& p) {
  for (auto& f : p.functions) {
    f.spd_at.clear();
    f.fp_at.clear();
    std::vector<std::optional<SpState>> entry(f.blocks.size());
    entry[0] = SpState{};
    std::deque<int> work{0};
    size_t guard = 0;
    while (!work.empty()) {
      if (++guard > f.blocks.size() * 4 + 64)
        throw AnalysisError("stack delta propagation did not settle in '" + f.name + "'");
      int id = work.front();
      work.pop_front();
      propagate_block(f, p, id, *entry[id], entry, work);
    }
    // Unreachable blocks get a deterministic baseline so their statements
    // still carry deltas; their accesses are reported as dead code later.
    for (int id : f.unreachable) {
      SpState st;
      for (auto& s : f.blocks[id].stmts) step(f, p, s, st);
    }
  }
}

void rebase_frame_pointer(Program& p) {
  const std::string fp = p.fp_reg();
  const std::string sp = p.sp_reg();
  for (auto& f : p.functions) {
    for (auto& b : f.blocks) {
      for (auto& s : b.stmts) {
        if (s.op != Op::Load && s.op != Op::Store && s.op != Op::Lea) continue;
        if (s.mem.base.name != fp) continue;
        auto fpd = f.fp_at.find(s.addr);
        auto spd = f.spd_at.find(s.addr);
        if (fpd == f.fp_at.end() || spd == f.spd_at.end()) {
          if (!f.unreachable.count(b.id)) f.unrebased.push_back(s.addr);
          continue;
        }
        s.mem.base.name = sp;
        s.mem.disp = fpd->second + s.mem.disp - spd->second;
      }
    }
  }
}

std::optional<int64_t> spd_before(const Function& f, uint64_t addr) {
  auto it = f.spd_at.find(addr);
  if (it == f.spd_at.end()) return std::nullopt;
  return it->second;
}

}  // namespace uninit::il
