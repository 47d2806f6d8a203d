#include "hashswap/insn.hpp"

#include <cinttypes>
#include <cstdio>

namespace hashswap {

namespace {

const char* kReg64[] = {"rax", "rcx", "rdx", "rbx", "rsp", "rbp", "rsi", "rdi",
                        "r8", "r9", "r10", "r11", "r12", "r13", "r14", "r15"};
const char* kReg32[] = {"eax", "ecx", "edx", "ebx", "esp", "ebp", "esi", "edi",
                        "r8d", "r9d", "r10d", "r11d", "r12d", "r13d", "r14d", "r15d"};
const char* kReg16[] = {"ax", "cx", "dx", "bx", "sp", "bp", "si", "di",
                        "r8w", "r9w", "r10w", "r11w", "r12w", "r13w", "r14w", "r15w"};
const char* kReg8[] = {"al", "cl", "dl", "bl", "spl", "bpl", "sil", "dil",
                       "r8b", "r9b", "r10b", "r11b", "r12b", "r13b", "r14b", "r15b"};
const char* kReg8High[] = {"ah", "ch", "dh", "bh"};

bool fits_i8(int64_t v) { return v >= -128 && v <= 127; }
bool fits_i32(int64_t v) { return v >= INT32_MIN && v <= INT32_MAX; }

struct Reader {
    ByteView code;
    size_t pos = 0;
    uint64_t vaddr;

    uint8_t u8() {
        if (pos >= code.size() || pos >= 15)
            fail(Errc::UndecodableInstruction, "truncated instruction at " + hex_addr(vaddr));
        return code[pos++];
    }
    uint8_t peek() const {
        if (pos >= code.size()) fail(Errc::UndecodableInstruction, "truncated at " + hex_addr(vaddr));
        return code[pos];
    }
    uint16_t u16() { uint16_t v = u8(); return static_cast<uint16_t>(v | (uint16_t(u8()) << 8)); }
    uint32_t u32() { uint32_t v = u16(); return v | (uint32_t(u16()) << 16); }
    uint64_t u64() { uint64_t v = u32(); return v | (uint64_t(u32()) << 32); }
};

[[noreturn]] void undecodable(uint64_t vaddr, const std::string& what) {
    fail(Errc::UndecodableInstruction, what + " at " + hex_addr(vaddr));
}

Operand byte_reg(uint8_t id, bool rex_present) {
    if (!rex_present && id >= 4 && id < 8)
        return Operand::make_reg(static_cast<Reg>(id - 4), 1, /*high8=*/true);
    return Operand::make_reg(static_cast<Reg>(id), 1);
}

Operand sized_reg(uint8_t id, uint8_t width, bool rex_present) {
    if (width == 1) return byte_reg(id, rex_present);
    return Operand::make_reg(static_cast<Reg>(id), width);
}

const Mn kAluByIndex[8] = {Mn::Add, Mn::Or, Mn::Adc, Mn::Sbb, Mn::And, Mn::Sub, Mn::Xor, Mn::Cmp};
const Mn kShiftByIndex[8] = {Mn::Rol, Mn::Ror, Mn::Nop /*rcl*/, Mn::Nop /*rcr*/,
                             Mn::Shl, Mn::Shr, Mn::Shl /*sal*/, Mn::Sar};

struct ModRmResult {
    bool is_mem = false;
    uint8_t rm_id = 0;   // register id when !is_mem
    MemRef mem;
    uint8_t reg_field = 0;
    uint8_t disp_enc = 0;
    int8_t disp_off = -1;
};

ModRmResult parse_modrm(Reader& r, bool rex, uint8_t rexR, uint8_t rexX, uint8_t rexB) {
    (void)rex;
    ModRmResult out;
    uint8_t modrm = r.u8();
    uint8_t mod = modrm >> 6;
    uint8_t reg = (modrm >> 3) & 7;
    uint8_t rm = modrm & 7;
    out.reg_field = static_cast<uint8_t>(reg | (rexR << 3));

    if (mod == 3) {
        out.rm_id = static_cast<uint8_t>(rm | (rexB << 3));
        return out;
    }
    out.is_mem = true;
    MemRef& m = out.mem;
    if (rm == 4) {
        uint8_t sib = r.u8();
        uint8_t scale = sib >> 6;
        uint8_t index = ((sib >> 3) & 7) | (rexX << 3);
        uint8_t base = (sib & 7) | (rexB << 3);
        m.scale = static_cast<uint8_t>(1u << scale);
        if (index != 4)  // index 100 with no REX.X means "no index"
            m.index = static_cast<Reg>(index);
        if ((base & 7) == 5 && mod == 0) {
            m.base = Reg::None;  // absolute disp32 (or index*scale+disp32)
            out.disp_off = static_cast<int8_t>(r.pos);
            m.disp = static_cast<int32_t>(r.u32());
            out.disp_enc = 4;
            return out;
        }
        m.base = static_cast<Reg>(base);
    } else if (rm == 5 && mod == 0) {
        m.rip_relative = true;
        out.disp_off = static_cast<int8_t>(r.pos);
        m.disp = static_cast<int32_t>(r.u32());
        out.disp_enc = 4;
        return out;
    } else {
        m.base = static_cast<Reg>(rm | (rexB << 3));
    }
    if (mod == 1) {
        out.disp_off = static_cast<int8_t>(r.pos);
        m.disp = static_cast<int8_t>(r.u8());
        out.disp_enc = 1;
    } else if (mod == 2) {
        out.disp_off = static_cast<int8_t>(r.pos);
        m.disp = static_cast<int32_t>(r.u32());
        out.disp_enc = 4;
    }
    return out;
}

Operand rm_operand(const ModRmResult& m, uint8_t width, bool rex_present) {
    if (m.is_mem) return Operand::make_mem(m.mem, width);
    return sized_reg(m.rm_id, width, rex_present);
}

}  // namespace

const char* reg_name(Reg r, int width) {
    int i = reg_index(r);
    if (i < 0 || i > 15) return "?";
    switch (width) {
        case 8: return kReg64[i];
        case 4: return kReg32[i];
        case 2: return kReg16[i];
        case 1: return kReg8[i];
    }
    return kReg64[i];
}

const char* mn_name(Mn m) {
    switch (m) {
        case Mn::Add: return "add"; case Mn::Or: return "or"; case Mn::Adc: return "adc";
        case Mn::Sbb: return "sbb"; case Mn::And: return "and"; case Mn::Sub: return "sub";
        case Mn::Xor: return "xor"; case Mn::Cmp: return "cmp"; case Mn::Mov: return "mov";
        case Mn::Movzx: return "movzx"; case Mn::Movsx: return "movsx";
        case Mn::Movsxd: return "movsxd"; case Mn::Lea: return "lea";
        case Mn::Test: return "test"; case Mn::Xchg: return "xchg";
        case Mn::Push: return "push"; case Mn::Pop: return "pop";
        case Mn::Inc: return "inc"; case Mn::Dec: return "dec";
        case Mn::Not: return "not"; case Mn::Neg: return "neg";
        case Mn::Mul: return "mul"; case Mn::Imul: return "imul";
        case Mn::Div: return "div"; case Mn::Idiv: return "idiv";
        case Mn::Shl: return "shl"; case Mn::Shr: return "shr"; case Mn::Sar: return "sar";
        case Mn::Rol: return "rol"; case Mn::Ror: return "ror";
        case Mn::Call: return "call"; case Mn::CallInd: return "call";
        case Mn::Jmp: return "jmp"; case Mn::JmpInd: return "jmp";
        case Mn::Jcc: return "j"; case Mn::Ret: return "ret"; case Mn::Leave: return "leave";
        case Mn::Cdqe: return "cdqe"; case Mn::Cwde: return "cwde";
        case Mn::Cdq: return "cdq"; case Mn::Cqo: return "cqo";
        case Mn::Setcc: return "set"; case Mn::Cmovcc: return "cmov";
        case Mn::Bswap: return "bswap"; case Mn::Movs: return "movs"; case Mn::Stos: return "stos";
        case Mn::Nop: return "nop"; case Mn::Ud2: return "ud2"; case Mn::Int3: return "int3";
        case Mn::Hlt: return "hlt"; case Mn::Syscall: return "syscall";
    }
    return "?";
}

const char* cond_name(Cond c) {
    static const char* names[] = {"o", "no", "b", "ae", "e", "ne", "be", "a",
                                  "s", "ns", "p", "np", "l", "ge", "le", "g"};
    return names[static_cast<int>(c) & 0xf];
}

bool operand_equivalent(const Operand& a, const Operand& b) {
    if (a.kind != b.kind || a.size != b.size) return false;
    switch (a.kind) {
        case OpKind::Reg: return a.reg == b.reg && a.high8 == b.high8;
        case OpKind::Imm: return a.imm == b.imm;
        case OpKind::Mem:
            return a.mem.base == b.mem.base && a.mem.index == b.mem.index &&
                   (a.mem.index == Reg::None || a.mem.scale == b.mem.scale) &&
                   a.mem.disp == b.mem.disp && a.mem.rip_relative == b.mem.rip_relative;
    }
    return false;
}

std::optional<uint64_t> Instruction::rip_target() const {
    for (uint8_t i = 0; i < op_count; i++)
        if (ops[i].kind == OpKind::Mem && ops[i].mem.rip_relative)
            return end() + static_cast<uint64_t>(ops[i].mem.disp);
    return std::nullopt;
}

const Operand* Instruction::mem_operand() const {
    for (uint8_t i = 0; i < op_count; i++)
        if (ops[i].kind == OpKind::Mem) return &ops[i];
    return nullptr;
}

Instruction decode(ByteView code, uint64_t vaddr) {
    Reader r{code, 0, vaddr};
    Instruction ins;
    ins.vaddr = vaddr;

    bool opsize16 = false, rep = false, rex = false;
    uint8_t rexW = 0, rexR = 0, rexX = 0, rexB = 0;
    Bytes extra_prefixes;
    for (;;) {
        uint8_t b = r.peek();
        if (b == 0x66) { opsize16 = true; r.u8(); }
        else if (b == 0xf3) { rep = true; r.u8(); }
        else if (b == 0x2e || b == 0x3e) { extra_prefixes.push_back(b); r.u8(); }
        else if (b >= 0x40 && b <= 0x4f) {
            rex = true;
            rexW = (b >> 3) & 1; rexR = (b >> 2) & 1; rexX = (b >> 1) & 1; rexB = b & 1;
            r.u8();
            break;  // REX must immediately precede the opcode
        } else break;
    }

    uint8_t w = rexW ? 8 : (opsize16 ? 2 : 4);
    uint8_t opc = r.u8();

    auto finish = [&]() {
        ins.length = static_cast<uint8_t>(r.pos);
        ins.raw.assign(code.begin(), code.begin() + r.pos);
        return ins;
    };
    auto set2 = [&](Mn mn, Operand a, Operand b) {
        ins.mnem = mn; ins.op_count = 2; ins.ops[0] = a; ins.ops[1] = b;
    };
    auto set1 = [&](Mn mn, Operand a) { ins.mnem = mn; ins.op_count = 1; ins.ops[0] = a; };
    auto imm_at = [&](uint8_t size) -> int64_t {
        ins.imm_off = static_cast<int8_t>(r.pos);
        ins.hints.imm_enc = size;
        switch (size) {
            case 1: return static_cast<int8_t>(r.u8());
            case 2: return static_cast<int16_t>(r.u16());
            case 4: return static_cast<int32_t>(r.u32());
            case 8: return static_cast<int64_t>(r.u64());
        }
        return 0;
    };
    auto take_modrm = [&]() {
        ModRmResult m = parse_modrm(r, rex, rexR, rexX, rexB);
        ins.hints.disp_enc = m.disp_enc;
        ins.disp_off = m.disp_off;
        return m;
    };
    auto rel_branch = [&](Mn mn, uint8_t relsize) {
        ins.mnem = mn;
        ins.hints.rel_enc = relsize;
        ins.imm_off = static_cast<int8_t>(r.pos);
        int64_t rel = relsize == 1 ? static_cast<int8_t>(r.u8()) : static_cast<int32_t>(r.u32());
        ins.length = static_cast<uint8_t>(r.pos);
        ins.branch_target = vaddr + ins.length + static_cast<uint64_t>(rel);
    };

    ins.hints.extra_prefixes = extra_prefixes;

    // ALU block 0x00..0x3d: add/or/adc/sbb/and/sub/xor/cmp share form layout.
    if (opc < 0x40 && (opc & 7) < 6) {
        Mn mn = kAluByIndex[opc >> 3];
        uint8_t form = opc & 7;
        switch (form) {
            case 0: case 1: {  // rm, r
                uint8_t width = form == 0 ? 1 : w;
                ModRmResult m = take_modrm();
                ins.hints.rm_is_dst = true;
                set2(mn, rm_operand(m, width, rex), sized_reg(m.reg_field, width, rex));
                return finish();
            }
            case 2: case 3: {  // r, rm
                uint8_t width = form == 2 ? 1 : w;
                ModRmResult m = take_modrm();
                ins.hints.rm_is_dst = false;
                set2(mn, sized_reg(m.reg_field, width, rex), rm_operand(m, width, rex));
                return finish();
            }
            case 4: {  // al, imm8
                ins.hints.acc_form = true;
                set2(mn, byte_reg(0, rex), Operand::make_imm(imm_at(1), 1));
                return finish();
            }
            case 5: {  // eAX, imm
                ins.hints.acc_form = true;
                int64_t v = imm_at(w == 2 ? 2 : 4);
                set2(mn, sized_reg(0, w, rex), Operand::make_imm(v, w));
                return finish();
            }
        }
    }

    switch (opc) {
        case 0x0f: break;  // two-byte, handled below
        case 0x50: case 0x51: case 0x52: case 0x53:
        case 0x54: case 0x55: case 0x56: case 0x57:
            set1(Mn::Push, Operand::make_reg(static_cast<Reg>((opc - 0x50) | (rexB << 3)), 8));
            return finish();
        case 0x58: case 0x59: case 0x5a: case 0x5b:
        case 0x5c: case 0x5d: case 0x5e: case 0x5f:
            set1(Mn::Pop, Operand::make_reg(static_cast<Reg>((opc - 0x58) | (rexB << 3)), 8));
            return finish();
        case 0x63: {  // movsxd r64, rm32
            ModRmResult m = take_modrm();
            set2(Mn::Movsxd, sized_reg(m.reg_field, w, rex), rm_operand(m, 4, rex));
            return finish();
        }
        case 0x68: set1(Mn::Push, Operand::make_imm(imm_at(4), 8)); return finish();
        case 0x6a: set1(Mn::Push, Operand::make_imm(imm_at(1), 8)); return finish();
        case 0x69: case 0x6b: {
            ModRmResult m = take_modrm();
            Operand src = rm_operand(m, w, rex);
            int64_t v = imm_at(opc == 0x6b ? 1 : (w == 2 ? 2 : 4));
            ins.mnem = Mn::Imul;
            ins.op_count = 3;
            ins.ops[0] = sized_reg(m.reg_field, w, rex);
            ins.ops[1] = src;
            ins.ops[2] = Operand::make_imm(v, w);
            return finish();
        }
        case 0x70: case 0x71: case 0x72: case 0x73: case 0x74: case 0x75: case 0x76: case 0x77:
        case 0x78: case 0x79: case 0x7a: case 0x7b: case 0x7c: case 0x7d: case 0x7e: case 0x7f:
            ins.cc = static_cast<Cond>(opc - 0x70);
            rel_branch(Mn::Jcc, 1);
            ins.raw.assign(code.begin(), code.begin() + r.pos);
            return ins;
        case 0x80: case 0x81: case 0x83: {
            ModRmResult m = take_modrm();
            Mn mn = kAluByIndex[m.reg_field & 7];
            uint8_t width = opc == 0x80 ? 1 : w;
            uint8_t immsz = opc == 0x81 ? (w == 2 ? 2 : 4) : 1;
            int64_t v = imm_at(immsz);
            set2(mn, rm_operand(m, width, rex), Operand::make_imm(v, width));
            return finish();
        }
        case 0x84: case 0x85: {
            ModRmResult m = take_modrm();
            uint8_t width = opc == 0x84 ? 1 : w;
            set2(Mn::Test, rm_operand(m, width, rex), sized_reg(m.reg_field, width, rex));
            return finish();
        }
        case 0x86: case 0x87: {
            ModRmResult m = take_modrm();
            uint8_t width = opc == 0x86 ? 1 : w;
            set2(Mn::Xchg, rm_operand(m, width, rex), sized_reg(m.reg_field, width, rex));
            return finish();
        }
        case 0x88: case 0x89: {
            ModRmResult m = take_modrm();
            uint8_t width = opc == 0x88 ? 1 : w;
            ins.hints.rm_is_dst = true;
            set2(Mn::Mov, rm_operand(m, width, rex), sized_reg(m.reg_field, width, rex));
            return finish();
        }
        case 0x8a: case 0x8b: {
            ModRmResult m = take_modrm();
            uint8_t width = opc == 0x8a ? 1 : w;
            ins.hints.rm_is_dst = false;
            set2(Mn::Mov, sized_reg(m.reg_field, width, rex), rm_operand(m, width, rex));
            return finish();
        }
        case 0x8d: {
            ModRmResult m = take_modrm();
            if (!m.is_mem) undecodable(vaddr, "lea with register source");
            set2(Mn::Lea, sized_reg(m.reg_field, w, rex), Operand::make_mem(m.mem, w));
            return finish();
        }
        case 0x90:
            if (rexB) undecodable(vaddr, "xchg r8, rax");
            ins.mnem = Mn::Nop;
            ins.rep = rep;  // f3 90 = pause, kept as nop
            return finish();
        case 0x98: ins.mnem = rexW ? Mn::Cdqe : Mn::Cwde; return finish();
        case 0x99: ins.mnem = rexW ? Mn::Cqo : Mn::Cdq; return finish();
        case 0xa4: case 0xa5:
            ins.mnem = Mn::Movs;
            ins.rep = rep;
            ins.str_size = opc == 0xa4 ? 1 : w;
            return finish();
        case 0xaa: case 0xab:
            ins.mnem = Mn::Stos;
            ins.rep = rep;
            ins.str_size = opc == 0xaa ? 1 : w;
            return finish();
        case 0xa8:
            ins.hints.acc_form = true;
            set2(Mn::Test, byte_reg(0, rex), Operand::make_imm(imm_at(1), 1));
            return finish();
        case 0xa9: {
            ins.hints.acc_form = true;
            int64_t v = imm_at(w == 2 ? 2 : 4);
            set2(Mn::Test, sized_reg(0, w, rex), Operand::make_imm(v, w));
            return finish();
        }
        case 0xb0: case 0xb1: case 0xb2: case 0xb3:
        case 0xb4: case 0xb5: case 0xb6: case 0xb7:
            set2(Mn::Mov, byte_reg((opc - 0xb0) | (rexB << 3), rex),
                 Operand::make_imm(imm_at(1), 1));
            return finish();
        case 0xb8: case 0xb9: case 0xba: case 0xbb:
        case 0xbc: case 0xbd: case 0xbe: case 0xbf: {
            uint8_t immsz = w == 8 ? 8 : (w == 2 ? 2 : 4);
            int64_t v = imm_at(immsz);
            set2(Mn::Mov, sized_reg((opc - 0xb8) | (rexB << 3), w, rex), Operand::make_imm(v, w));
            return finish();
        }
        case 0xc0: case 0xc1: {
            ModRmResult m = take_modrm();
            Mn mn = kShiftByIndex[m.reg_field & 7];
            if (mn == Mn::Nop) undecodable(vaddr, "rcl/rcr");
            uint8_t width = opc == 0xc0 ? 1 : w;
            int64_t v = imm_at(1);
            set2(mn, rm_operand(m, width, rex), Operand::make_imm(v, 1));
            return finish();
        }
        case 0xc2: {
            int64_t v = imm_at(2);
            set1(Mn::Ret, Operand::make_imm(v, 2));
            return finish();
        }
        case 0xc3: ins.mnem = Mn::Ret; ins.rep = rep; return finish();
        case 0xc6: case 0xc7: {
            ModRmResult m = take_modrm();
            if ((m.reg_field & 7) != 0) undecodable(vaddr, "c6/c7 with non-zero reg field");
            uint8_t width = opc == 0xc6 ? 1 : w;
            uint8_t immsz = opc == 0xc6 ? 1 : (w == 2 ? 2 : 4);
            int64_t v = imm_at(immsz);
            ins.hints.mov_c7 = true;
            set2(Mn::Mov, rm_operand(m, width, rex), Operand::make_imm(v, width));
            return finish();
        }
        case 0xc9: ins.mnem = Mn::Leave; return finish();
        case 0xcc: ins.mnem = Mn::Int3; return finish();
        case 0xd0: case 0xd1: case 0xd2: case 0xd3: {
            ModRmResult m = take_modrm();
            Mn mn = kShiftByIndex[m.reg_field & 7];
            if (mn == Mn::Nop) undecodable(vaddr, "rcl/rcr");
            uint8_t width = (opc & 1) == 0 ? 1 : w;
            Operand count = opc <= 0xd1
                                ? Operand::make_imm(1, 1)
                                : Operand::make_reg(Reg::RCX, 1);
            if (opc <= 0xd1) ins.hints.shift_one = true;
            set2(mn, rm_operand(m, width, rex), count);
            return finish();
        }
        case 0xe8: rel_branch(Mn::Call, 4); ins.raw.assign(code.begin(), code.begin() + r.pos); return ins;
        case 0xe9: rel_branch(Mn::Jmp, 4); ins.raw.assign(code.begin(), code.begin() + r.pos); return ins;
        case 0xeb: rel_branch(Mn::Jmp, 1); ins.raw.assign(code.begin(), code.begin() + r.pos); return ins;
        case 0xf4: ins.mnem = Mn::Hlt; return finish();
        case 0xf6: case 0xf7: {
            ModRmResult m = take_modrm();
            uint8_t width = opc == 0xf6 ? 1 : w;
            switch (m.reg_field & 7) {
                case 0: case 1: {
                    uint8_t immsz = opc == 0xf6 ? 1 : (w == 2 ? 2 : 4);
                    int64_t v = imm_at(immsz);
                    set2(Mn::Test, rm_operand(m, width, rex), Operand::make_imm(v, width));
                    return finish();
                }
                case 2: set1(Mn::Not, rm_operand(m, width, rex)); return finish();
                case 3: set1(Mn::Neg, rm_operand(m, width, rex)); return finish();
                case 4: set1(Mn::Mul, rm_operand(m, width, rex)); return finish();
                case 5: set1(Mn::Imul, rm_operand(m, width, rex)); return finish();
                case 6: set1(Mn::Div, rm_operand(m, width, rex)); return finish();
                case 7: set1(Mn::Idiv, rm_operand(m, width, rex)); return finish();
            }
            break;
        }
        case 0xfe: {
            ModRmResult m = take_modrm();
            switch (m.reg_field & 7) {
                case 0: set1(Mn::Inc, rm_operand(m, 1, rex)); return finish();
                case 1: set1(Mn::Dec, rm_operand(m, 1, rex)); return finish();
            }
            undecodable(vaddr, "fe group");
        }
        case 0xff: {
            ModRmResult m = take_modrm();
            switch (m.reg_field & 7) {
                case 0: set1(Mn::Inc, rm_operand(m, w, rex)); return finish();
                case 1: set1(Mn::Dec, rm_operand(m, w, rex)); return finish();
                case 2: set1(Mn::CallInd, rm_operand(m, 8, rex)); return finish();
                case 4: set1(Mn::JmpInd, rm_operand(m, 8, rex)); return finish();
                case 6: set1(Mn::Push, rm_operand(m, 8, rex)); return finish();
            }
            undecodable(vaddr, "ff group /" + std::to_string(m.reg_field & 7));
        }
        default:
            undecodable(vaddr, "opcode " + hex_addr(opc));
    }

    // Two-byte opcodes.
    uint8_t opc2 = r.u8();
    switch (opc2) {
        case 0x05: ins.mnem = Mn::Syscall; return finish();
        case 0x0b: ins.mnem = Mn::Ud2; return finish();
        case 0x1e:
            if (rep && r.peek() == 0xfa) { r.u8(); ins.mnem = Mn::Nop; ins.rep = true; return finish(); }
            undecodable(vaddr, "0f 1e");
        case 0x1f: {
            ModRmResult m = take_modrm();
            ins.mnem = Mn::Nop;
            ins.op_count = 1;
            ins.ops[0] = rm_operand(m, w, rex);
            return finish();
        }
        case 0xaf: {
            ModRmResult m = take_modrm();
            set2(Mn::Imul, sized_reg(m.reg_field, w, rex), rm_operand(m, w, rex));
            return finish();
        }
        case 0xb6: case 0xb7: {
            ModRmResult m = take_modrm();
            set2(Mn::Movzx, sized_reg(m.reg_field, w, rex),
                 rm_operand(m, opc2 == 0xb6 ? 1 : 2, rex));
            return finish();
        }
        case 0xbe: case 0xbf: {
            ModRmResult m = take_modrm();
            set2(Mn::Movsx, sized_reg(m.reg_field, w, rex),
                 rm_operand(m, opc2 == 0xbe ? 1 : 2, rex));
            return finish();
        }
        default: break;
    }
    if (opc2 >= 0x40 && opc2 <= 0x4f) {
        ModRmResult m = take_modrm();
        ins.cc = static_cast<Cond>(opc2 - 0x40);
        set2(Mn::Cmovcc, sized_reg(m.reg_field, w, rex), rm_operand(m, w, rex));
        return finish();
    }
    if (opc2 >= 0x80 && opc2 <= 0x8f) {
        ins.cc = static_cast<Cond>(opc2 - 0x80);
        rel_branch(Mn::Jcc, 4);
        ins.raw.assign(code.begin(), code.begin() + r.pos);
        return ins;
    }
    if (opc2 >= 0x90 && opc2 <= 0x9f) {
        ModRmResult m = take_modrm();
        ins.cc = static_cast<Cond>(opc2 - 0x90);
        set1(Mn::Setcc, rm_operand(m, 1, rex));
        return finish();
    }
    if (opc2 >= 0xc8 && opc2 <= 0xcf) {
        set1(Mn::Bswap, Operand::make_reg(static_cast<Reg>((opc2 - 0xc8) | (rexB << 3)), w));
        return finish();
    }
    undecodable(vaddr, "opcode 0f " + hex_addr(opc2));
}

// ---------------------------------------------------------------------------
// Encoder
// ---------------------------------------------------------------------------

namespace {

struct Enc {
    Bytes out;
    bool use_rep = false;
    bool use_66 = false;
    uint8_t rexW = 0, rexR = 0, rexX = 0, rexB = 0;
    bool force_rex = false;  // spl/bpl/sil/dil
    bool ban_rex = false;    // ah/ch/dh/bh
    Bytes opcode;
    bool has_modrm = false;
    uint8_t modrm = 0;
    bool has_sib = false;
    uint8_t sib = 0;
    Bytes disp;
    Bytes imm;
    Bytes extra_prefixes;

    Bytes finish(uint64_t vaddr) {
        (void)vaddr;
        Bytes b = extra_prefixes;
        if (use_rep) b.push_back(0xf3);
        if (use_66) b.push_back(0x66);
        bool need_rex = rexW || rexR || rexX || rexB || force_rex;
        if (need_rex && ban_rex)
            fail(Errc::EncodingUnsupported, "high byte register combined with REX");
        if (need_rex)
            b.push_back(static_cast<uint8_t>(0x40 | rexW << 3 | rexR << 2 | rexX << 1 | rexB));
        b.insert(b.end(), opcode.begin(), opcode.end());
        if (has_modrm) b.push_back(modrm);
        if (has_sib) b.push_back(sib);
        b.insert(b.end(), disp.begin(), disp.end());
        b.insert(b.end(), imm.begin(), imm.end());
        return b;
    }
};

void note_reg(Enc& e, const Operand& op, uint8_t* field3) {
    int id = reg_index(op.reg);
    if (op.high8) {
        e.ban_rex = true;
        *field3 = static_cast<uint8_t>(id + 4);
        return;
    }
    if (op.size == 1 && id >= 4 && id < 8) e.force_rex = true;
    *field3 = static_cast<uint8_t>(id & 7);
}

void set_reg_field(Enc& e, const Operand& op) {
    uint8_t f = 0;
    note_reg(e, op, &f);
    if (!op.high8 && reg_index(op.reg) >= 8) e.rexR = 1;
    e.modrm |= static_cast<uint8_t>((f & 7) << 3);
}

void set_reg_digit(Enc& e, uint8_t digit) { e.modrm |= static_cast<uint8_t>((digit & 7) << 3); }

void append_int(Bytes& b, int64_t v, int size) {
    for (int i = 0; i < size; i++) b.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void set_rm_reg(Enc& e, const Operand& op) {
    uint8_t f = 0;
    note_reg(e, op, &f);
    if (!op.high8 && reg_index(op.reg) >= 8) e.rexB = 1;
    e.has_modrm = true;
    e.modrm |= static_cast<uint8_t>(0xc0 | (f & 7));
}

void set_rm_mem(Enc& e, const MemRef& m, uint8_t disp_hint) {
    e.has_modrm = true;
    if (m.rip_relative) {
        e.modrm |= 0x05;
        append_int(e.disp, m.disp, 4);
        return;
    }
    int base = m.base == Reg::None ? -1 : reg_index(m.base);
    int index = m.index == Reg::None ? -1 : reg_index(m.index);
    if (index == reg_index(Reg::RSP))
        fail(Errc::EncodingUnsupported, "rsp cannot be an index register");

    uint8_t scale_bits = m.scale == 1 ? 0 : m.scale == 2 ? 1 : m.scale == 4 ? 2 : 3;
    if (base < 0) {
        // absolute or index*scale+disp32: mod=00 rm=100 sib.base=101
        e.modrm |= 0x04;
        e.has_sib = true;
        uint8_t idx_bits = 4;
        if (index >= 0) { idx_bits = static_cast<uint8_t>(index & 7); if (index >= 8) e.rexX = 1; }
        e.sib = static_cast<uint8_t>(scale_bits << 6 | idx_bits << 3 | 0x05);
        append_int(e.disp, m.disp, 4);
        return;
    }

    bool need_sib = index >= 0 || (base & 7) == reg_index(Reg::RSP);
    uint8_t disp_size;
    bool base_needs_disp = (base & 7) == reg_index(Reg::RBP);
    if (m.disp == 0 && !base_needs_disp) disp_size = 0;
    else if (fits_i8(m.disp)) disp_size = 1;
    else disp_size = 4;
    if (disp_hint > disp_size && (disp_size > 0 || base_needs_disp || disp_hint == 1))
        disp_size = disp_hint;  // keep the original width when it only got wider
    if (disp_size == 1 && !fits_i8(m.disp)) disp_size = 4;
    if (!fits_i32(m.disp)) fail(Errc::EncodingUnsupported, "displacement exceeds 32 bits");

    uint8_t mod = disp_size == 0 ? 0x00 : disp_size == 1 ? 0x40 : 0x80;
    if (base >= 8) e.rexB = 1;
    if (need_sib) {
        e.modrm |= static_cast<uint8_t>(mod | 0x04);
        e.has_sib = true;
        uint8_t idx_bits = 4;
        if (index >= 0) { idx_bits = static_cast<uint8_t>(index & 7); if (index >= 8) e.rexX = 1; }
        e.sib = static_cast<uint8_t>(scale_bits << 6 | idx_bits << 3 | (base & 7));
    } else {
        e.modrm |= static_cast<uint8_t>(mod | (base & 7));
    }
    if (disp_size) append_int(e.disp, m.disp, disp_size);
}

void set_rm(Enc& e, const Operand& op, uint8_t disp_hint) {
    if (op.kind == OpKind::Reg) set_rm_reg(e, op);
    else if (op.kind == OpKind::Mem) set_rm_mem(e, op.mem, disp_hint);
    else fail(Errc::EncodingUnsupported, "immediate cannot be a modrm operand");
}

void width_prefixes(Enc& e, uint8_t width) {
    if (width == 8) e.rexW = 1;
    else if (width == 2) e.use_66 = true;
}

uint8_t alu_index(Mn m) {
    switch (m) {
        case Mn::Add: return 0; case Mn::Or: return 1; case Mn::Adc: return 2;
        case Mn::Sbb: return 3; case Mn::And: return 4; case Mn::Sub: return 5;
        case Mn::Xor: return 6; case Mn::Cmp: return 7;
        default: return 0xff;
    }
}

uint8_t shift_digit(Mn m) {
    switch (m) {
        case Mn::Rol: return 0; case Mn::Ror: return 1; case Mn::Shl: return 4;
        case Mn::Shr: return 5; case Mn::Sar: return 7;
        default: return 0xff;
    }
}

}  // namespace

Bytes encode(const Instruction& ins) {
    Enc e;
    e.extra_prefixes = ins.hints.extra_prefixes;
    const Operand* a = ins.op_count > 0 ? &ins.ops[0] : nullptr;
    const Operand* b = ins.op_count > 1 ? &ins.ops[1] : nullptr;
    uint8_t disp_hint = ins.hints.disp_enc;

    auto alu_or_mov_rm_imm = [&](uint8_t width, int64_t imm) {
        // caller sets opcode; emits modrm rm + imm bytes separately
        (void)width; (void)imm;
    };
    (void)alu_or_mov_rm_imm;

    switch (ins.mnem) {
        case Mn::Add: case Mn::Or: case Mn::Adc: case Mn::Sbb:
        case Mn::And: case Mn::Sub: case Mn::Xor: case Mn::Cmp: {
            uint8_t idx = alu_index(ins.mnem);
            uint8_t width = a->size;
            width_prefixes(e, width);
            if (b->kind == OpKind::Imm) {
                bool accum = a->kind == OpKind::Reg && reg_index(a->reg) == 0 && !a->high8;
                bool imm8ok = width > 1 && fits_i8(b->imm);
                bool use_imm8 = imm8ok && (ins.hints.imm_enc <= 1 || !ins.hints.acc_form);
                if (ins.hints.imm_enc == 4 && !ins.hints.acc_form) use_imm8 = false;
                if (width == 1) {
                    if (accum && ins.hints.acc_form) {
                        e.opcode = {static_cast<uint8_t>(idx * 8 + 4)};
                        append_int(e.imm, b->imm, 1);
                    } else {
                        e.opcode = {0x80};
                        set_reg_digit(e, idx);
                        set_rm(e, *a, disp_hint);
                        append_int(e.imm, b->imm, 1);
                    }
                } else if (use_imm8) {
                    e.opcode = {0x83};
                    set_reg_digit(e, idx);
                    set_rm(e, *a, disp_hint);
                    append_int(e.imm, b->imm, 1);
                } else if (accum && ins.hints.acc_form) {
                    e.opcode = {static_cast<uint8_t>(idx * 8 + 5)};
                    append_int(e.imm, b->imm, width == 2 ? 2 : 4);
                } else {
                    if (width == 8 && !fits_i32(b->imm))
                        fail(Errc::EncodingUnsupported, "64-bit immediate in ALU op");
                    e.opcode = {0x81};
                    set_reg_digit(e, idx);
                    set_rm(e, *a, disp_hint);
                    append_int(e.imm, b->imm, width == 2 ? 2 : 4);
                }
            } else if (ins.hints.rm_is_dst || a->kind == OpKind::Mem) {
                e.opcode = {static_cast<uint8_t>(idx * 8 + (width == 1 ? 0 : 1))};
                set_reg_field(e, *b);
                set_rm(e, *a, disp_hint);
            } else {
                e.opcode = {static_cast<uint8_t>(idx * 8 + (width == 1 ? 2 : 3))};
                set_reg_field(e, *a);
                set_rm(e, *b, disp_hint);
            }
            break;
        }
        case Mn::Mov: {
            uint8_t width = a->size;
            width_prefixes(e, width);
            if (b->kind == OpKind::Imm) {
                if (a->kind == OpKind::Reg && !ins.hints.mov_c7) {
                    if (width == 1) {
                        uint8_t f = 0; note_reg(e, *a, &f);
                        if (!a->high8 && reg_index(a->reg) >= 8) e.rexB = 1;
                        e.opcode = {static_cast<uint8_t>(0xb0 + (f & 7))};
                        append_int(e.imm, b->imm, 1);
                    } else if (width == 8 && !fits_i32(b->imm)) {
                        if (reg_index(a->reg) >= 8) e.rexB = 1;
                        e.opcode = {static_cast<uint8_t>(0xb8 + (reg_index(a->reg) & 7))};
                        append_int(e.imm, b->imm, 8);
                    } else if (width == 8) {
                        e.opcode = {0xc7};
                        set_rm(e, *a, disp_hint);
                        append_int(e.imm, b->imm, 4);
                    } else {
                        if (reg_index(a->reg) >= 8) e.rexB = 1;
                        e.opcode = {static_cast<uint8_t>(0xb8 + (reg_index(a->reg) & 7))};
                        append_int(e.imm, b->imm, width == 2 ? 2 : 4);
                    }
                } else {
                    if (width == 8 && !fits_i32(b->imm))
                        fail(Errc::EncodingUnsupported, "64-bit immediate store");
                    e.opcode = {static_cast<uint8_t>(width == 1 ? 0xc6 : 0xc7)};
                    set_rm(e, *a, disp_hint);
                    append_int(e.imm, b->imm, width == 1 ? 1 : (width == 2 ? 2 : 4));
                }
            } else if (ins.hints.rm_is_dst || a->kind == OpKind::Mem) {
                e.opcode = {static_cast<uint8_t>(width == 1 ? 0x88 : 0x89)};
                set_reg_field(e, *b);
                set_rm(e, *a, disp_hint);
            } else {
                e.opcode = {static_cast<uint8_t>(width == 1 ? 0x8a : 0x8b)};
                set_reg_field(e, *a);
                set_rm(e, *b, disp_hint);
            }
            break;
        }
        case Mn::Movzx: case Mn::Movsx: {
            width_prefixes(e, a->size);
            uint8_t base = ins.mnem == Mn::Movzx ? 0xb6 : 0xbe;
            e.opcode = {0x0f, static_cast<uint8_t>(b->size == 1 ? base : base + 1)};
            set_reg_field(e, *a);
            set_rm(e, *b, disp_hint);
            break;
        }
        case Mn::Movsxd:
            width_prefixes(e, a->size);
            e.opcode = {0x63};
            set_reg_field(e, *a);
            set_rm(e, *b, disp_hint);
            break;
        case Mn::Lea:
            width_prefixes(e, a->size);
            e.opcode = {0x8d};
            set_reg_field(e, *a);
            set_rm(e, *b, disp_hint);
            break;
        case Mn::Test: {
            uint8_t width = a->size;
            width_prefixes(e, width);
            if (b->kind == OpKind::Imm) {
                bool accum = a->kind == OpKind::Reg && reg_index(a->reg) == 0 && !a->high8;
                if (accum && ins.hints.acc_form) {
                    e.opcode = {static_cast<uint8_t>(width == 1 ? 0xa8 : 0xa9)};
                    append_int(e.imm, b->imm, width == 1 ? 1 : (width == 2 ? 2 : 4));
                } else {
                    e.opcode = {static_cast<uint8_t>(width == 1 ? 0xf6 : 0xf7)};
                    set_reg_digit(e, 0);
                    set_rm(e, *a, disp_hint);
                    append_int(e.imm, b->imm, width == 1 ? 1 : (width == 2 ? 2 : 4));
                }
            } else {
                e.opcode = {static_cast<uint8_t>(width == 1 ? 0x84 : 0x85)};
                set_reg_field(e, *b);
                set_rm(e, *a, disp_hint);
            }
            break;
        }
        case Mn::Xchg: {
            uint8_t width = a->size;
            width_prefixes(e, width);
            e.opcode = {static_cast<uint8_t>(width == 1 ? 0x86 : 0x87)};
            set_reg_field(e, *b);
            set_rm(e, *a, disp_hint);
            break;
        }
        case Mn::Push:
            if (a->kind == OpKind::Imm) {
                if (ins.hints.imm_enc == 1 && fits_i8(a->imm)) {
                    e.opcode = {0x6a};
                    append_int(e.imm, a->imm, 1);
                } else {
                    e.opcode = {0x68};
                    append_int(e.imm, a->imm, 4);
                }
            } else if (a->kind == OpKind::Reg) {
                if (reg_index(a->reg) >= 8) e.rexB = 1;
                e.opcode = {static_cast<uint8_t>(0x50 + (reg_index(a->reg) & 7))};
            } else {
                e.opcode = {0xff};
                set_reg_digit(e, 6);
                set_rm(e, *a, disp_hint);
            }
            break;
        case Mn::Pop:
            if (a->kind == OpKind::Reg) {
                if (reg_index(a->reg) >= 8) e.rexB = 1;
                e.opcode = {static_cast<uint8_t>(0x58 + (reg_index(a->reg) & 7))};
            } else {
                fail(Errc::EncodingUnsupported, "pop to memory");
            }
            break;
        case Mn::Inc: case Mn::Dec:
            width_prefixes(e, a->size);
            e.opcode = {static_cast<uint8_t>(a->size == 1 ? 0xfe : 0xff)};
            set_reg_digit(e, ins.mnem == Mn::Inc ? 0 : 1);
            set_rm(e, *a, disp_hint);
            break;
        case Mn::Not: case Mn::Neg: case Mn::Mul: case Mn::Div: case Mn::Idiv: {
            uint8_t digit = ins.mnem == Mn::Not ? 2 : ins.mnem == Mn::Neg ? 3
                          : ins.mnem == Mn::Mul ? 4 : ins.mnem == Mn::Div ? 6 : 7;
            width_prefixes(e, a->size);
            e.opcode = {static_cast<uint8_t>(a->size == 1 ? 0xf6 : 0xf7)};
            set_reg_digit(e, digit);
            set_rm(e, *a, disp_hint);
            break;
        }
        case Mn::Imul:
            width_prefixes(e, a->size);
            if (ins.op_count == 1) {
                e.opcode = {static_cast<uint8_t>(a->size == 1 ? 0xf6 : 0xf7)};
                set_reg_digit(e, 5);
                set_rm(e, *a, disp_hint);
            } else if (ins.op_count == 2) {
                e.opcode = {0x0f, 0xaf};
                set_reg_field(e, *a);
                set_rm(e, *b, disp_hint);
            } else {
                const Operand& c = ins.ops[2];
                bool imm8 = ins.hints.imm_enc == 1 && fits_i8(c.imm);
                e.opcode = {static_cast<uint8_t>(imm8 ? 0x6b : 0x69)};
                set_reg_field(e, *a);
                set_rm(e, *b, disp_hint);
                append_int(e.imm, c.imm, imm8 ? 1 : (a->size == 2 ? 2 : 4));
            }
            break;
        case Mn::Shl: case Mn::Shr: case Mn::Sar: case Mn::Rol: case Mn::Ror: {
            uint8_t digit = shift_digit(ins.mnem);
            uint8_t width = a->size;
            width_prefixes(e, width);
            if (b->kind == OpKind::Reg) {
                e.opcode = {static_cast<uint8_t>(width == 1 ? 0xd2 : 0xd3)};
                set_reg_digit(e, digit);
                set_rm(e, *a, disp_hint);
            } else if (b->imm == 1 && ins.hints.shift_one) {
                e.opcode = {static_cast<uint8_t>(width == 1 ? 0xd0 : 0xd1)};
                set_reg_digit(e, digit);
                set_rm(e, *a, disp_hint);
            } else {
                e.opcode = {static_cast<uint8_t>(width == 1 ? 0xc0 : 0xc1)};
                set_reg_digit(e, digit);
                set_rm(e, *a, disp_hint);
                append_int(e.imm, b->imm, 1);
            }
            break;
        }
        case Mn::Call: case Mn::Jmp: case Mn::Jcc: {
            int64_t rel8 = 0, rel32 = 0;
            uint8_t len8 = ins.mnem == Mn::Jcc ? 2 : 2;
            uint8_t len32 = ins.mnem == Mn::Jcc ? 6 : 5;
            size_t pfx = e.extra_prefixes.size();
            rel8 = static_cast<int64_t>(ins.branch_target) -
                   static_cast<int64_t>(ins.vaddr + len8 + pfx);
            rel32 = static_cast<int64_t>(ins.branch_target) -
                    static_cast<int64_t>(ins.vaddr + len32 + pfx);
            bool want8 = ins.hints.rel_enc == 1 && ins.mnem != Mn::Call && fits_i8(rel8);
            if (want8) {
                e.opcode = {ins.mnem == Mn::Jmp
                                ? uint8_t(0xeb)
                                : static_cast<uint8_t>(0x70 + static_cast<int>(ins.cc))};
                append_int(e.imm, rel8, 1);
            } else {
                if (!fits_i32(rel32))
                    fail(Errc::DisplacementOverflow, "branch target out of rel32 range");
                if (ins.mnem == Mn::Call) e.opcode = {0xe8};
                else if (ins.mnem == Mn::Jmp) e.opcode = {0xe9};
                else e.opcode = {0x0f, static_cast<uint8_t>(0x80 + static_cast<int>(ins.cc))};
                append_int(e.imm, rel32, 4);
            }
            break;
        }
        case Mn::CallInd: case Mn::JmpInd:
            e.opcode = {0xff};
            set_reg_digit(e, ins.mnem == Mn::CallInd ? 2 : 4);
            set_rm(e, *a, disp_hint);
            break;
        case Mn::Ret:
            if (ins.rep) e.use_rep = true;
            if (ins.op_count) {
                e.opcode = {0xc2};
                append_int(e.imm, a->imm, 2);
            } else {
                e.opcode = {0xc3};
            }
            break;
        case Mn::Leave: e.opcode = {0xc9}; break;
        case Mn::Cdqe: e.rexW = 1; e.opcode = {0x98}; break;
        case Mn::Cwde: e.opcode = {0x98}; break;
        case Mn::Cdq: e.opcode = {0x99}; break;
        case Mn::Cqo: e.rexW = 1; e.opcode = {0x99}; break;
        case Mn::Setcc:
            e.opcode = {0x0f, static_cast<uint8_t>(0x90 + static_cast<int>(ins.cc))};
            set_rm(e, *a, disp_hint);
            break;
        case Mn::Cmovcc:
            width_prefixes(e, a->size);
            e.opcode = {0x0f, static_cast<uint8_t>(0x40 + static_cast<int>(ins.cc))};
            set_reg_field(e, *a);
            set_rm(e, *b, disp_hint);
            break;
        case Mn::Bswap:
            width_prefixes(e, a->size);
            if (reg_index(a->reg) >= 8) e.rexB = 1;
            e.opcode = {0x0f, static_cast<uint8_t>(0xc8 + (reg_index(a->reg) & 7))};
            break;
        case Mn::Movs: case Mn::Stos: {
            if (ins.rep) e.use_rep = true;
            width_prefixes(e, ins.str_size == 1 ? 4 : ins.str_size);
            uint8_t base = ins.mnem == Mn::Movs ? 0xa4 : 0xaa;
            e.opcode = {static_cast<uint8_t>(ins.str_size == 1 ? base : base + 1)};
            break;
        }
        case Mn::Nop:
            if (ins.rep) e.use_rep = true;
            if (ins.op_count) {
                width_prefixes(e, ins.ops[0].size);
                e.opcode = {0x0f, 0x1f};
                set_reg_digit(e, 0);
                set_rm(e, ins.ops[0], disp_hint);
            } else if (ins.rep && ins.length == 4) {
                return {0xf3, 0x0f, 0x1e, 0xfa};  // endbr64 decoded as nop
            } else {
                e.opcode = {0x90};
            }
            break;
        case Mn::Ud2: e.opcode = {0x0f, 0x0b}; break;
        case Mn::Int3: e.opcode = {0xcc}; break;
        case Mn::Hlt: e.opcode = {0xf4}; break;
        case Mn::Syscall: e.opcode = {0x0f, 0x05}; break;
    }
    return e.finish(ins.vaddr);
}

std::string Instruction::text() const {
    char buf[160];
    std::string s = mn_name(mnem);
    if (mnem == Mn::Jcc || mnem == Mn::Setcc || mnem == Mn::Cmovcc) s += cond_name(cc);
    if (has_branch_target()) {
        std::snprintf(buf, sizeof buf, " %#" PRIx64, branch_target);
        return s + buf;
    }
    for (uint8_t i = 0; i < op_count; i++) {
        const Operand& o = ops[i];
        s += i ? ", " : " ";
        switch (o.kind) {
            case OpKind::Reg:
                s += o.high8 ? kReg8High[reg_index(o.reg)] : reg_name(o.reg, o.size);
                break;
            case OpKind::Imm:
                std::snprintf(buf, sizeof buf, "%#" PRIx64, static_cast<uint64_t>(o.imm));
                s += buf;
                break;
            case OpKind::Mem: {
                const char* sz = o.size == 1 ? "byte" : o.size == 2 ? "word"
                               : o.size == 4 ? "dword" : "qword";
                s += std::string(sz) + " [";
                bool first = true;
                if (o.mem.rip_relative) { s += "rip"; first = false; }
                if (o.mem.base != Reg::None) { s += reg_name(o.mem.base, 8); first = false; }
                if (o.mem.index != Reg::None) {
                    if (!first) s += "+";
                    s += reg_name(o.mem.index, 8);
                    if (o.mem.scale > 1) { s += "*"; s += std::to_string(o.mem.scale); }
                    first = false;
                }
                if (o.mem.disp || first) {
                    std::snprintf(buf, sizeof buf, "%s%#" PRIx64,
                                  (!first && o.mem.disp >= 0) ? "+" : "",
                                  static_cast<uint64_t>(o.mem.disp < 0 && !first
                                                            ? o.mem.disp
                                                            : o.mem.disp));
                    if (!first && o.mem.disp < 0)
                        std::snprintf(buf, sizeof buf, "-%#" PRIx64,
                                      static_cast<uint64_t>(-o.mem.disp));
                    s += buf;
                }
                s += "]";
                break;
            }
        }
    }
    return s;
}

}  // namespace hashswap
