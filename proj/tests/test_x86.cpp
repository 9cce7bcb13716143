#include <doctest.h>

#include <fstream>
#include <sstream>

#include "uninit/x86.hpp"

using namespace uninit;
using namespace uninit::il;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

TEST_CASE("mov forms map to assign, load, and store") {
  Program p = x86::lift_x86_mini(R"(
f:
0x100: mov eax, 5
0x101: mov ebx, eax
0x102: mov ecx, [esp+4]
0x103: mov [esp+8], ecx
0x104: mov dword [esp+12], 1
0x105: ret
)");
  const auto& st = p.functions[0].blocks[0].stmts;
  CHECK(st[0].op == Op::Assign);
  CHECK(st[0].src.is_const);
  CHECK(st[1].op == Op::Assign);
  CHECK(st[1].src.reg.name == "eax");
  CHECK(st[2].op == Op::Load);
  CHECK(st[2].mem.disp == 4);
  CHECK(st[3].op == Op::Store);
  CHECK(st[4].op == Op::Store);
  CHECK(st[4].mem.disp == 12);
  CHECK(st[4].src.value == 1);
}

TEST_CASE("listing addresses are preserved and auto-assigned ones increment") {
  Program p = x86::lift_x86_mini(R"(
f:
nop
nop
0x5000: nop
nop
ret
)");
  const auto& st = p.functions[0].blocks[0].stmts;
  CHECK(st[0].addr == 0x1000);
  CHECK(st[1].addr == 0x1001);
  CHECK(st[2].addr == 0x5000);
  CHECK(st[3].addr == 0x5001);
}

TEST_CASE("cmp feeds the block's conditional jump") {
  Program p = x86::lift_x86_mini(R"(
f:
0x100: cmp eax, 7
0x105: jnz 0x110
0x108: nop
0x109: ret
0x110: ret
)");
  const Function& f = p.functions[0];
  const Statement& cmp = f.blocks[0].stmts[0];
  const Statement& br = f.blocks[0].stmts[1];
  CHECK(cmp.op == Op::BinOp);
  CHECK(cmp.bin == BinKind::Cmp);
  CHECK(br.op == Op::CondJump);
  CHECK_FALSE(br.jump_if_zero);
  // The branch condition is the cmp's fresh temp.
  CHECK(br.lhs.reg.name == cmp.dst.name);
  // Target and fallthrough become the two successors.
  REQUIRE(f.blocks[0].succs.size() == 2);
}

TEST_CASE("jumps target instruction addresses within the same function") {
  CHECK_THROWS_AS(x86::lift_x86_mini("f:\njmp 0x999\nret\n"), ParseError);
  CHECK_THROWS_AS(x86::lift_x86_mini("f:\n0x100: jmp 0x200\n0x101: ret\ng:\n0x200: ret\n"),
                  ParseError);
}

TEST_CASE("malformed listings are rejected") {
  CHECK_THROWS_AS(x86::lift_x86_mini("nop\n"), ParseError);       // before any label
  CHECK_THROWS_AS(x86::lift_x86_mini("f:\nbogus eax\n"), ParseError);
  CHECK_THROWS_AS(x86::lift_x86_mini("f:\n0x100: nop\n0x100: ret\n"), ParseError);
  CHECK_THROWS_AS(x86::lift_x86_mini("f:\nmov [esp+4], [esp+8]\n"), ParseError);
  CHECK_THROWS_AS(x86::lift_x86_mini("f:\nf2: ret\n"), ParseError);  // text after label
  CHECK_THROWS_AS(x86::lift_x86_mini("f:\nret\nf:\nret\n"), ParseError);
}

TEST_CASE("push pop add sub lea call lift to their IL forms") {
  Program p = x86::lift_x86_mini(R"(
f:
0x100: sub esp, 0x10
0x104: lea eax, [esp+4]
0x108: push eax
0x109: call helper
0x10e: add esp, 4
0x111: pop ebx
0x112: add esp, 0x10
0x115: ret
)");
  const Function& f = p.functions[0];
  // The call ends its block.
  REQUIRE(f.blocks.size() == 2);
  const auto& b0 = f.blocks[0].stmts;
  CHECK(b0[0].op == Op::BinOp);
  CHECK(b0[0].bin == BinKind::Sub);
  CHECK(b0[0].dst.name == "esp");
  CHECK(b0[0].rhs.value == 16);
  CHECK(b0[1].op == Op::Lea);
  CHECK(b0[2].op == Op::Push);
  CHECK(b0[3].op == Op::Call);
  CHECK(b0[3].callee == "helper");
  const auto& b1 = f.blocks[1].stmts;
  CHECK(b1[1].op == Op::Pop);
  CHECK(b1[1].dst.name == "ebx");
}

TEST_CASE("comments and blank lines are ignored") {
  Program p = x86::lift_x86_mini(R"(
; leading comment
f:
# hash comment
0x100: nop ; trailing
0x101: ret
)");
  CHECK(p.functions.size() == 1);
  CHECK(p.functions[0].blocks[0].stmts.size() == 2);
}

TEST_CASE("the checked-in demo listing lifts to two functions") {
  Program p = x86::lift_x86_mini(slurp(std::string(TEST_DATA_DIR) + "/pointer_arg_demo.x86"));
  REQUIRE(p.functions.size() == 2);
  CHECK(p.functions[0].name == "foo");
  CHECK(p.functions[1].name == "main");
  // foo: load, load, ret in one block.
  CHECK(p.functions[0].blocks.size() == 1);
  CHECK(p.functions[0].blocks[0].stmts.size() == 3);
  // main: the call splits the cleanup into a second block.
  CHECK(p.functions[1].blocks.size() == 2);
}
