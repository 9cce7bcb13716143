#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "uninit/support.hpp"

namespace uninit::il {

// A register or temp reference. Temps are registers named t<N>. Before SSA
// renaming version is -1; after renaming every reference carries a version,
// where version 0 means live-on-entry (never defined in the function).
struct RegRef {
  std::string name;
  int version = -1;

  bool operator==(const RegRef& o) const { return name == o.name && version == o.version; }
};

// SSA atom spelling: version 0 (live-on-entry) and unrenamed references print
// bare, later versions print name_version. These strings are the terms used
// in extracted facts.
std::string ssa_atom(const RegRef& r);

struct Operand {
  bool is_const = false;
  int64_t value = 0;
  RegRef reg;

  static Operand constant(int64_t v) {
    Operand o;
    o.is_const = true;
    o.value = v;
    return o;
  }
  static Operand of(const std::string& name) {
    Operand o;
    o.reg.name = name;
    return o;
  }
};

// A memory operand [base + disp]. The location itself is never SSA-renamed;
// the base register reference is.
struct MemRef {
  RegRef base;
  int64_t disp = 0;
};

enum class Op {
  Assign,    // dst <- src (register or constant)
  Load,      // dst <- [mem]
  Store,     // [mem] <- src
  BinOp,     // dst <- lhs <bin> rhs
  Lea,       // dst <- address of [mem]
  Push,      // sp -= word; [sp] <- src
  Pop,       // dst <- [sp]; sp += word
  Call,      // call callee(args...)
  Ret,
  Jump,      // jmp label
  CondJump,  // jz/jnz cond, label
  Nop,
};

enum class BinKind { Add, Sub, Mul, And, Or, Xor, Cmp };

const char* bin_name(BinKind k);

struct PhiNode {
  RegRef dst;
  std::vector<RegRef> sources;  // one per predecessor, in pred order
  uint64_t addr = 0;            // synthetic, unique program-wide
};

struct Statement {
  uint64_t addr = 0;
  Op op = Op::Nop;
  RegRef dst;                 // Assign/Load/BinOp/Lea/Pop
  Operand src;                // Assign/Store/Push
  MemRef mem;                 // Load/Store/Lea
  BinKind bin = BinKind::Add; // BinOp
  Operand lhs, rhs;           // BinOp; CondJump uses lhs as the condition
  std::string callee;         // Call
  std::vector<Operand> args;  // Call explicit arguments
  std::string target;         // Jump/CondJump label
  bool jump_if_zero = true;   // CondJump polarity
};

struct BasicBlock {
  int id = 0;
  std::string label;
  std::vector<PhiNode> phis;
  std::vector<Statement> stmts;
  std::vector<int> succs;
  std::vector<int> preds;
};

struct Function {
  std::string name;
  std::vector<BasicBlock> blocks;  // blocks[0] is the entry
  std::vector<int> exit_blocks;    // blocks ending in Ret
  std::set<int> unreachable;       // block ids not reachable from the entry

  // Filled by compute_spd: stack pointer delta before each statement.
  std::map<uint64_t, int64_t> spd_at;
  // Frame pointer capture delta before each statement, if known there.
  std::map<uint64_t, int64_t> fp_at;
  // Memory accesses through the frame pointer that could not be rebased.
  std::vector<uint64_t> unrebased;

  bool ssa_form = false;
  // Call address -> register name -> SSA version reaching the call.
  std::map<uint64_t, std::map<std::string, int>> live_defs_at_call;
  // (register, version) -> defining address (phis use the synthetic address).
  std::map<std::pair<std::string, int>, uint64_t> def_site;
  // Stack pointer SSA version before/after each statement (filled by to_ssa).
  std::map<uint64_t, int> sp_ver_before, sp_ver_after;

  const BasicBlock* block_of(uint64_t addr) const;
};

struct Program {
  std::vector<Function> functions;  // in definition order
  int word_size = 4;

  std::string sp_reg() const { return word_size == 8 ? "rsp" : "esp"; }
  std::string fp_reg() const { return word_size == 8 ? "rbp" : "ebp"; }
  std::string ret_reg() const { return word_size == 8 ? "rax" : "eax"; }
  // Positional registers for explicit call arguments.
  std::vector<std::string> arg_regs() const {
    return word_size == 8 ? std::vector<std::string>{"rcx", "rdx"}
                          : std::vector<std::string>{"ecx", "edx"};
  }

  Function* find(const std::string& name);
  const Function* find(const std::string& name) const;
};

// Parses the textual IL: `func <name> { <label>: <stmt>; ... }` with optional
// `@0xADDR` pins and `#` comments. Addresses without a pin are assigned in
// textual order. Blocks are split so that Call/Ret/Jump/CondJump only appear
// as the last statement of a block. Throws ParseError.
Program parse_il(const std::string& text, int word_size = 4);

// Builds a Function from labeled statement runs: splits blocks at inner
// terminators, resolves jump targets, adds fallthrough edges in list order,
// computes predecessors, exit blocks, and reachability. Used by the parser
// and the listing lifter.
Function assemble_function(const std::string& name,
                           std::vector<std::pair<std::string, std::vector<Statement>>> blocks);

// Canonical text form; parse_il(pretty_print(p)) preserves every function's
// statement sequence (kinds, operands, addresses) and block boundaries.
std::string pretty_print(const Program& p);

// Computes the stack pointer delta before every statement by forward
// propagation from delta 0 at the entry, tracking frame-pointer captures so
// `mov sp, fp` restores a known delta. Hard errors (AnalysisError): symbolic
// sp modification, mismatching deltas at a join, negative... excessive |spd|
// beyond the 2^20 cap.
void compute_spd(Program& p);

// Rewrites frame-pointer-relative memory operands to sp-relative ones using
// the capture delta at each site. Accesses where the frame pointer does not
// hold a known stack address are left alone and recorded in `unrebased`.
void rebase_frame_pointer(Program& p);

// Convenience: spd value before the statement at `addr`.
std::optional<int64_t> spd_before(const Function& f, uint64_t addr);

constexpr int64_t kSpdCap = 1 << 20;

}  // namespace uninit::il
