#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>

#include "hashswap/common.hpp"

namespace hashswap {

// General-purpose registers in encoding order.
enum class Reg : uint8_t {
    RAX = 0, RCX, RDX, RBX, RSP, RBP, RSI, RDI,
    R8, R9, R10, R11, R12, R13, R14, R15,
    None = 0xff,
};

inline int reg_index(Reg r) { return static_cast<int>(r); }
const char* reg_name(Reg r, int width);

enum class Mn : uint8_t {
    Add, Or, Adc, Sbb, And, Sub, Xor, Cmp,
    Mov, Movzx, Movsx, Movsxd, Lea, Test, Xchg,
    Push, Pop, Inc, Dec,
    Not, Neg, Mul, Imul, Div, Idiv,
    Shl, Shr, Sar, Rol, Ror,
    Call, CallInd, Jmp, JmpInd, Jcc, Ret, Leave,
    Cdqe, Cwde, Cdq, Cqo,
    Setcc, Cmovcc, Bswap,
    Movs, Stos,
    Nop, Ud2, Int3, Hlt, Syscall,
};

const char* mn_name(Mn m);

// Condition codes in encoding order (jcc 0x70+cc).
enum class Cond : uint8_t {
    O = 0, NO, B, AE, E, NE, BE, A, S, NS, P, NP, L, GE, LE, G
};
const char* cond_name(Cond c);

struct MemRef {
    Reg base = Reg::None;
    Reg index = Reg::None;
    uint8_t scale = 1;
    int64_t disp = 0;
    bool rip_relative = false;
};

enum class OpKind : uint8_t { Reg, Imm, Mem };

struct Operand {
    OpKind kind = OpKind::Imm;
    uint8_t size = 0;  // access width in bytes: 1, 2, 4, 8
    Reg reg = Reg::None;
    bool high8 = false;  // ah/ch/dh/bh
    int64_t imm = 0;
    MemRef mem;

    static Operand make_reg(Reg r, uint8_t size, bool high8 = false) {
        Operand o; o.kind = OpKind::Reg; o.reg = r; o.size = size; o.high8 = high8; return o;
    }
    static Operand make_imm(int64_t v, uint8_t size) {
        Operand o; o.kind = OpKind::Imm; o.imm = v; o.size = size; return o;
    }
    static Operand make_mem(MemRef m, uint8_t size) {
        Operand o; o.kind = OpKind::Mem; o.mem = m; o.size = size; return o;
    }
    bool is_reg(Reg r) const { return kind == OpKind::Reg && reg == r; }
};

bool operand_equivalent(const Operand& a, const Operand& b);

// Encoding details captured at decode time so that re-encoding an
// unmodified instruction reproduces its original bytes.
struct EncHints {
    bool rm_is_dst = true;    // ALU/mov direction bit
    bool acc_form = false;    // AL/EAX,imm short encodings
    uint8_t imm_enc = 0;      // encoded immediate width (0 = none)
    uint8_t disp_enc = 0;     // encoded displacement width (0, 1, 4)
    bool shift_one = false;   // D1-style shift by 1, no imm byte
    uint8_t rel_enc = 0;      // branch rel width (1 or 4)
    bool mov_c7 = false;      // mov reg,imm via C7 /0 rather than B8+r
    Bytes extra_prefixes;     // segment/hint prefixes carried verbatim
};

struct Instruction {
    uint64_t vaddr = 0;
    uint8_t length = 0;
    Mn mnem = Mn::Nop;
    Cond cc = Cond::O;
    uint8_t op_count = 0;
    std::array<Operand, 3> ops{};
    bool rep = false;           // rep prefix on movs/stos
    uint8_t str_size = 0;       // element width for movs/stos
    Bytes raw;
    EncHints hints;
    // Field offsets within raw bytes for in-place patching; -1 when absent.
    int8_t disp_off = -1;
    int8_t imm_off = -1;

    // Branch/call target for direct transfers (absolute vaddr).
    uint64_t branch_target = 0;
    bool has_branch_target() const {
        return mnem == Mn::Call || mnem == Mn::Jmp || mnem == Mn::Jcc;
    }
    uint64_t end() const { return vaddr + length; }
    // Absolute address referenced by a rip-relative memory operand.
    std::optional<uint64_t> rip_target() const;
    const Operand* mem_operand() const;
    std::string text() const;  // diagnostic rendering
};

// Decodes one instruction. `code` starts at the instruction's first byte.
// Throws Error(UndecodableInstruction) for bytes outside the supported set.
Instruction decode(ByteView code, uint64_t vaddr);

// Re-encodes an instruction from its structured fields (the raw bytes are
// not consulted). Displacement/immediate widths follow the hints but widen
// when the value no longer fits. Throws Error(EncodingUnsupported).
Bytes encode(const Instruction& insn);

}  // namespace hashswap
