#pragma once

#include <string>

#include "uninit/il.hpp"

namespace uninit::x86 {

// Lifts a flat Intel-syntax listing into the IL. Functions are delimited by
// `name:` lines; instructions carry an optional literal address (`0xADDR` or
// `0xADDR:`) and otherwise get sequential ones. Supported mnemonics: mov,
// lea, push, pop, add, sub, cmp, jz, jnz, jmp, call, ret, nop. Size keywords
// (byte/word/dword/qword/ptr) are accepted and ignored. Jump targets are
// instruction addresses within the same function. A cmp lowers to a compare
// writing a fresh temp; a later jz/jnz in the same block branches on it.
// Listing addresses are preserved so extracted facts refer to them verbatim.
il::Program lift_x86_mini(const std::string& text, int word_size = 4);

}  // namespace uninit::x86
