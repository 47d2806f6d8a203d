#include "hashswap/executor.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace hashswap {

namespace {

constexpr Reg kArgRegs[3] = {Reg::RDI, Reg::RSI, Reg::RDX};

const char* kLayoutNames[] = {"ILO", "IOL", "LIO", "LOI", "OIL", "OLI", "IO", "OI"};

uint64_t trunc_w(uint64_t v, int w) { return w == 8 ? v : (v & (~0ull >> (64 - 8 * w))); }
bool msb_w(uint64_t v, int w) { return (v >> (8 * w - 1)) & 1; }
int64_t sext_w(uint64_t v, int w) {
    switch (w) {
        case 1: return static_cast<int8_t>(v);
        case 2: return static_cast<int16_t>(v);
        case 4: return static_cast<int32_t>(v);
        default: return static_cast<int64_t>(v);
    }
}

void set_szp(Flags& f, uint64_t r, int w) {
    uint64_t t = trunc_w(r, w);
    f.zf = t == 0;
    f.sf = msb_w(t, w);
    f.pf = (__builtin_popcount(static_cast<unsigned>(t & 0xff)) & 1) == 0;
}

}  // namespace

const char* layout_name(CallLayout l) { return kLayoutNames[static_cast<int>(l)]; }

std::optional<CallLayout> layout_from_name(const std::string& s) {
    for (int i = 0; i < 8; i++)
        if (s == kLayoutNames[i]) return static_cast<CallLayout>(i);
    return std::nullopt;
}

int layout_arity(CallLayout l) { return static_cast<int>(l) < 6 ? 3 : 2; }

Reg layout_reg(CallLayout l, char param) {
    const char* letters = kLayoutNames[static_cast<int>(l)];
    for (int i = 0; letters[i]; i++)
        if (letters[i] == param) return kArgRegs[i];
    return Reg::None;
}

// ---------------------------------------------------------------------------
// SparseMemory
// ---------------------------------------------------------------------------

SparseMemory::Page* SparseMemory::page_of(uint64_t addr) {
    uint64_t key = addr >> 12;
    auto it = pages_.find(key);
    return it == pages_.end() ? nullptr : &it->second;
}

const SparseMemory::Page* SparseMemory::page_of(uint64_t addr) const {
    uint64_t key = addr >> 12;
    if (key == last_key_) return last_page_;
    auto it = pages_.find(key);
    if (it == pages_.end()) return nullptr;
    last_key_ = key;
    last_page_ = &it->second;
    return last_page_;
}

void SparseMemory::map(uint64_t base, uint64_t len, bool writable) {
    for (uint64_t key = base >> 12; key <= (base + len - 1) >> 12; key++) {
        Page& p = pages_[key];
        p.writable = p.writable || writable;
    }
    last_page_ = nullptr;
    last_key_ = UINT64_MAX;
}

bool SparseMemory::mapped(uint64_t addr) const { return page_of(addr) != nullptr; }

void SparseMemory::read(uint64_t addr, uint8_t* out, size_t len) const {
    while (len) {
        const Page* p = page_of(addr);
        if (!p) fail(Errc::MemoryFault, "read of unmapped address " + hex_addr(addr));
        size_t off = addr & 0xfff;
        size_t n = std::min(len, 4096 - off);
        std::memcpy(out, p->bytes.data() + off, n);
        addr += n; out += n; len -= n;
    }
}

size_t SparseMemory::read_upto(uint64_t addr, uint8_t* out, size_t len) const {
    size_t got = 0;
    while (len) {
        const Page* p = page_of(addr);
        if (!p) break;
        size_t off = addr & 0xfff;
        size_t n = std::min(len, 4096 - off);
        std::memcpy(out, p->bytes.data() + off, n);
        addr += n; out += n; len -= n; got += n;
    }
    return got;
}

void SparseMemory::load(uint64_t addr, const uint8_t* in, size_t len) {
    while (len) {
        Page* p = page_of(addr);
        if (!p) fail(Errc::MemoryFault, "load to unmapped address " + hex_addr(addr));
        size_t off = addr & 0xfff;
        size_t n = std::min(len, 4096 - off);
        std::memcpy(p->bytes.data() + off, in, n);
        addr += n; in += n; len -= n;
    }
    last_page_ = nullptr;
    last_key_ = UINT64_MAX;
}

void SparseMemory::write(uint64_t addr, const uint8_t* in, size_t len) {
    while (len) {
        Page* p = page_of(addr);
        if (!p) fail(Errc::MemoryFault, "write to unmapped address " + hex_addr(addr));
        if (!p->writable) fail(Errc::MemoryFault, "write to read-only address " + hex_addr(addr));
        size_t off = addr & 0xfff;
        size_t n = std::min(len, 4096 - off);
        std::memcpy(p->bytes.data() + off, in, n);
        addr += n; in += n; len -= n;
    }
    last_page_ = nullptr;
    last_key_ = UINT64_MAX;
}

uint64_t SparseMemory::read_u64(uint64_t addr) const {
    uint8_t b[8];
    read(addr, b, 8);
    uint64_t v;
    std::memcpy(&v, b, 8);
    return v;
}

void SparseMemory::write_u64(uint64_t addr, uint64_t v) {
    uint8_t b[8];
    std::memcpy(b, &v, 8);
    write(addr, b, 8);
}

const HeapAllocation* MachineState::live_allocation_at(uint64_t addr) const {
    for (const HeapAllocation& h : heap_allocations)
        if (h.live && addr >= h.base && addr < h.base + h.size) return &h;
    return nullptr;
}

// ---------------------------------------------------------------------------
// Machine
// ---------------------------------------------------------------------------

Machine::Machine(const BinaryImage& image) : image_(&image) {
    for (const Segment& seg : image.segments()) {
        if (seg.mem_size == 0) continue;
        state.mem.map(seg.vaddr, seg.mem_size, seg.writable());
        if (seg.file_size)
            state.mem.load(seg.vaddr, image.bytes().data() + seg.file_offset, seg.file_size);
    }
    for (const Symbol& s : image.symbols()) symbol_at_[s.vaddr] = s.name;
}

void Machine::add_model(LibcModel model) { models_[model.name] = std::move(model); }

void Machine::add_builtin_models() {
    for (LibcModel& m : builtin_libc_models()) models_[m.name] = std::move(m);
}

uint64_t Machine::heap_bump(uint64_t size) {
    uint64_t base = heap_next_;
    uint64_t len = align_up(std::max<uint64_t>(size, 1), 16);
    state.mem.map(base, len, true);
    heap_next_ = align_up(base + len + 16, 16);
    return base;
}

void Machine::request_exit(int status) {
    halt_ = HaltReason::Exited;
    exit_status_ = status;
}

const Instruction& Machine::fetch(uint64_t rip) {
    auto it = decode_cache_.find(rip);
    if (it != decode_cache_.end()) return it->second;
    uint8_t buf[15];
    size_t n = state.mem.read_upto(rip, buf, 15);
    if (n == 0) fail(Errc::MemoryFault, "execution reached unmapped address " + hex_addr(rip));
    Instruction ins = decode(ByteView(buf, n), rip);
    return decode_cache_.emplace(rip, std::move(ins)).first->second;
}

bool Machine::cond(Cond c) const {
    const Flags& f = state.flags;
    switch (c) {
        case Cond::O: return f.of;
        case Cond::NO: return !f.of;
        case Cond::B: return f.cf;
        case Cond::AE: return !f.cf;
        case Cond::E: return f.zf;
        case Cond::NE: return !f.zf;
        case Cond::BE: return f.cf || f.zf;
        case Cond::A: return !f.cf && !f.zf;
        case Cond::S: return f.sf;
        case Cond::NS: return !f.sf;
        case Cond::P: return f.pf;
        case Cond::NP: return !f.pf;
        case Cond::L: return f.sf != f.of;
        case Cond::GE: return f.sf == f.of;
        case Cond::LE: return f.zf || f.sf != f.of;
        case Cond::G: return !f.zf && f.sf == f.of;
    }
    return false;
}

uint64_t Machine::effective_addr(const Instruction& ins, const MemRef& m) const {
    if (m.rip_relative) return ins.end() + static_cast<uint64_t>(m.disp);
    uint64_t a = static_cast<uint64_t>(m.disp);
    if (m.base != Reg::None) a += state.reg(m.base);
    if (m.index != Reg::None) a += state.reg(m.index) * m.scale;
    return a;
}

uint64_t Machine::read_operand(const Instruction& ins, const Operand& op, StepEffects& fx) {
    switch (op.kind) {
        case OpKind::Imm: return static_cast<uint64_t>(op.imm);
        case OpKind::Reg: {
            uint64_t v = state.reg(op.reg);
            if (op.high8) return (v >> 8) & 0xff;
            return trunc_w(v, op.size);
        }
        case OpKind::Mem: {
            uint64_t addr = effective_addr(ins, op.mem);
            uint8_t buf[8] = {};
            state.mem.read(addr, buf, op.size);
            fx.reads.push_back({addr, op.size});
            uint64_t v = 0;
            std::memcpy(&v, buf, 8);
            return trunc_w(v, op.size);
        }
    }
    return 0;
}

void Machine::write_operand(const Instruction& ins, const Operand& op, uint64_t v,
                            StepEffects& fx) {
    if (op.kind == OpKind::Reg) {
        uint64_t old = state.reg(op.reg);
        uint64_t nv;
        if (op.high8) nv = (old & ~0xff00ull) | ((v & 0xff) << 8);
        else if (op.size == 8) nv = v;
        else if (op.size == 4) nv = v & 0xffffffffull;  // zero-extends
        else if (op.size == 2) nv = (old & ~0xffffull) | (v & 0xffff);
        else nv = (old & ~0xffull) | (v & 0xff);
        state.set_reg(op.reg, nv);
        return;
    }
    if (op.kind == OpKind::Mem) {
        uint64_t addr = effective_addr(ins, op.mem);
        uint8_t buf[8];
        std::memcpy(buf, &v, 8);
        state.mem.write(addr, buf, op.size);
        fx.writes.push_back({addr, op.size});
        return;
    }
    fail(Errc::Internal, "write to immediate operand");
}

void Machine::push64(uint64_t v, StepEffects& fx) {
    state.regs[reg_index(Reg::RSP)] -= 8;
    state.mem.write_u64(state.reg(Reg::RSP), v);
    fx.writes.push_back({state.reg(Reg::RSP), 8});
}

uint64_t Machine::pop64(StepEffects& fx) {
    uint64_t v = state.mem.read_u64(state.reg(Reg::RSP));
    fx.reads.push_back({state.reg(Reg::RSP), 8});
    state.regs[reg_index(Reg::RSP)] += 8;
    return v;
}

void Machine::execute(const Instruction& ins, StepEffects& fx) {
    Flags& f = state.flags;
    uint64_t next_rip = ins.end();
    const Operand* a = ins.op_count > 0 ? &ins.ops[0] : nullptr;
    const Operand* b = ins.op_count > 1 ? &ins.ops[1] : nullptr;

    auto arith_add = [&](uint64_t x, uint64_t y, int w, bool carry_in) {
        unsigned __int128 full = (unsigned __int128)trunc_w(x, w) + trunc_w(y, w) + (carry_in ? 1 : 0);
        uint64_t r = trunc_w(static_cast<uint64_t>(full), w);
        f.cf = (full >> (8 * w)) != 0;
        f.of = msb_w(x, w) == msb_w(y, w) && msb_w(r, w) != msb_w(x, w);
        set_szp(f, r, w);
        return r;
    };
    auto arith_sub = [&](uint64_t x, uint64_t y, int w, bool borrow_in) {
        uint64_t tx = trunc_w(x, w), ty = trunc_w(y, w);
        unsigned __int128 rhs = (unsigned __int128)ty + (borrow_in ? 1 : 0);
        uint64_t r = trunc_w(tx - ty - (borrow_in ? 1 : 0), w);
        f.cf = rhs > tx;
        f.of = msb_w(tx, w) != msb_w(ty, w) && msb_w(r, w) != msb_w(tx, w);
        set_szp(f, r, w);
        return r;
    };

    switch (ins.mnem) {
        case Mn::Add: case Mn::Adc: {
            int w = a->size;
            uint64_t x = read_operand(ins, *a, fx), y = read_operand(ins, *b, fx);
            uint64_t r = arith_add(x, y, w, ins.mnem == Mn::Adc && f.cf);
            write_operand(ins, *a, r, fx);
            break;
        }
        case Mn::Sub: case Mn::Sbb: {
            int w = a->size;
            uint64_t x = read_operand(ins, *a, fx), y = read_operand(ins, *b, fx);
            uint64_t r = arith_sub(x, y, w, ins.mnem == Mn::Sbb && f.cf);
            write_operand(ins, *a, r, fx);
            break;
        }
        case Mn::Cmp: {
            int w = a->size;
            uint64_t x = read_operand(ins, *a, fx), y = read_operand(ins, *b, fx);
            arith_sub(x, y, w, false);
            break;
        }
        case Mn::And: case Mn::Or: case Mn::Xor: {
            int w = a->size;
            uint64_t x = read_operand(ins, *a, fx), y = read_operand(ins, *b, fx);
            uint64_t r = ins.mnem == Mn::And ? (x & y) : ins.mnem == Mn::Or ? (x | y) : (x ^ y);
            r = trunc_w(r, w);
            f.cf = f.of = false;
            set_szp(f, r, w);
            write_operand(ins, *a, r, fx);
            break;
        }
        case Mn::Test: {
            int w = a->size;
            uint64_t x = read_operand(ins, *a, fx), y = read_operand(ins, *b, fx);
            uint64_t r = trunc_w(x & y, w);
            f.cf = f.of = false;
            set_szp(f, r, w);
            break;
        }
        case Mn::Mov: {
            uint64_t v = read_operand(ins, *b, fx);
            write_operand(ins, *a, v, fx);
            break;
        }
        case Mn::Movzx: {
            uint64_t v = read_operand(ins, *b, fx);
            write_operand(ins, *a, v, fx);
            break;
        }
        case Mn::Movsx: case Mn::Movsxd: {
            uint64_t v = read_operand(ins, *b, fx);
            write_operand(ins, *a, static_cast<uint64_t>(sext_w(v, b->size)), fx);
            break;
        }
        case Mn::Lea:
            write_operand(ins, *a, effective_addr(ins, b->mem), fx);
            break;
        case Mn::Xchg: {
            uint64_t x = read_operand(ins, *a, fx), y = read_operand(ins, *b, fx);
            write_operand(ins, *a, y, fx);
            write_operand(ins, *b, x, fx);
            break;
        }
        case Mn::Push: {
            uint64_t v = read_operand(ins, *a, fx);
            if (a->kind == OpKind::Imm) v = static_cast<uint64_t>(sext_w(v, 4));
            push64(v, fx);
            break;
        }
        case Mn::Pop: {
            uint64_t v = pop64(fx);
            write_operand(ins, *a, v, fx);
            break;
        }
        case Mn::Inc: case Mn::Dec: {
            int w = a->size;
            bool old_cf = f.cf;
            uint64_t x = read_operand(ins, *a, fx);
            uint64_t r = ins.mnem == Mn::Inc ? arith_add(x, 1, w, false)
                                             : arith_sub(x, 1, w, false);
            f.cf = old_cf;
            write_operand(ins, *a, r, fx);
            break;
        }
        case Mn::Not: {
            uint64_t x = read_operand(ins, *a, fx);
            write_operand(ins, *a, trunc_w(~x, a->size), fx);
            break;
        }
        case Mn::Neg: {
            int w = a->size;
            uint64_t x = read_operand(ins, *a, fx);
            uint64_t r = arith_sub(0, x, w, false);
            f.cf = trunc_w(x, w) != 0;
            write_operand(ins, *a, r, fx);
            break;
        }
        case Mn::Imul: {
            if (ins.op_count == 1) {
                int w = a->size;
                uint64_t src = read_operand(ins, *a, fx);
                __int128 prod = (__int128)sext_w(state.reg(Reg::RAX), w) * sext_w(src, w);
                if (w == 1) {
                    state.set_reg(Reg::RAX, (state.reg(Reg::RAX) & ~0xffffull) |
                                                (static_cast<uint64_t>(prod) & 0xffff));
                } else {
                    uint64_t lo = trunc_w(static_cast<uint64_t>(prod), w);
                    uint64_t hi = trunc_w(static_cast<uint64_t>(prod >> (8 * w)), w);
                    state.set_reg(Reg::RAX, w == 4 ? lo : (w == 8 ? lo : (state.reg(Reg::RAX) & ~0xffffull) | lo));
                    if (w == 4) state.set_reg(Reg::RDX, hi);
                    else if (w == 8) state.set_reg(Reg::RDX, hi);
                    else state.set_reg(Reg::RDX, (state.reg(Reg::RDX) & ~0xffffull) | hi);
                }
                bool ovf = prod != (__int128)sext_w(trunc_w(static_cast<uint64_t>(prod), w), w);
                f.cf = f.of = ovf;
                set_szp(f, static_cast<uint64_t>(prod), w);
            } else {
                int w = a->size;
                uint64_t x = ins.op_count == 3 ? read_operand(ins, *b, fx)
                                               : read_operand(ins, *a, fx);
                uint64_t y = ins.op_count == 3 ? static_cast<uint64_t>(ins.ops[2].imm)
                                               : read_operand(ins, *b, fx);
                __int128 prod = (__int128)sext_w(x, w) * sext_w(y, w);
                uint64_t r = trunc_w(static_cast<uint64_t>(prod), w);
                bool ovf = prod != (__int128)sext_w(r, w);
                f.cf = f.of = ovf;
                set_szp(f, r, w);
                write_operand(ins, *a, r, fx);
            }
            break;
        }
        case Mn::Mul: {
            int w = a->size;
            uint64_t src = read_operand(ins, *a, fx);
            unsigned __int128 prod =
                (unsigned __int128)trunc_w(state.reg(Reg::RAX), w) * trunc_w(src, w);
            uint64_t lo = trunc_w(static_cast<uint64_t>(prod), w);
            uint64_t hi = trunc_w(static_cast<uint64_t>(prod >> (8 * w)), w);
            if (w == 1) {
                state.set_reg(Reg::RAX,
                              (state.reg(Reg::RAX) & ~0xffffull) | lo | (hi << 8));
            } else if (w == 2) {
                state.set_reg(Reg::RAX, (state.reg(Reg::RAX) & ~0xffffull) | lo);
                state.set_reg(Reg::RDX, (state.reg(Reg::RDX) & ~0xffffull) | hi);
            } else {
                state.set_reg(Reg::RAX, lo);
                state.set_reg(Reg::RDX, hi);
            }
            f.cf = f.of = hi != 0;
            set_szp(f, lo, w);
            break;
        }
        case Mn::Div: case Mn::Idiv: {
            int w = a->size;
            uint64_t src = read_operand(ins, *a, fx);
            if (trunc_w(src, w) == 0)
                fail(Errc::UnsupportedInstruction, "divide by zero at " + hex_addr(ins.vaddr));
            if (ins.mnem == Mn::Div) {
                unsigned __int128 n;
                if (w == 1) n = trunc_w(state.reg(Reg::RAX), 2);
                else n = ((unsigned __int128)trunc_w(state.reg(Reg::RDX), w) << (8 * w)) |
                         trunc_w(state.reg(Reg::RAX), w);
                unsigned __int128 q = n / trunc_w(src, w);
                uint64_t rem = static_cast<uint64_t>(n % trunc_w(src, w));
                if (q >> (8 * w))
                    fail(Errc::UnsupportedInstruction, "divide overflow at " + hex_addr(ins.vaddr));
                if (w == 1) {
                    state.set_reg(Reg::RAX, (state.reg(Reg::RAX) & ~0xffffull) |
                                                (static_cast<uint64_t>(q) & 0xff) | (rem << 8));
                } else {
                    state.set_reg(Reg::RAX, w == 2 ? (state.reg(Reg::RAX) & ~0xffffull) |
                                                         static_cast<uint64_t>(q)
                                                   : static_cast<uint64_t>(q));
                    state.set_reg(Reg::RDX, w == 2 ? (state.reg(Reg::RDX) & ~0xffffull) | rem : rem);
                }
            } else {
                __int128 n;
                if (w == 1) n = static_cast<int16_t>(state.reg(Reg::RAX));
                else n = ((__int128)sext_w(state.reg(Reg::RDX), w) << (8 * w)) |
                         trunc_w(state.reg(Reg::RAX), w);
                int64_t d = sext_w(src, w);
                __int128 q = n / d;
                int64_t rem = static_cast<int64_t>(n % d);
                if (q != (__int128)sext_w(trunc_w(static_cast<uint64_t>(q), w), w))
                    fail(Errc::UnsupportedInstruction, "divide overflow at " + hex_addr(ins.vaddr));
                if (w == 1) {
                    state.set_reg(Reg::RAX,
                                  (state.reg(Reg::RAX) & ~0xffffull) |
                                      (static_cast<uint64_t>(q) & 0xff) |
                                      ((static_cast<uint64_t>(rem) & 0xff) << 8));
                } else {
                    state.set_reg(Reg::RAX, trunc_w(static_cast<uint64_t>(q), w == 2 ? 2 : w));
                    state.set_reg(Reg::RDX, trunc_w(static_cast<uint64_t>(rem), w == 2 ? 2 : w));
                }
            }
            break;
        }
        case Mn::Shl: case Mn::Shr: case Mn::Sar: {
            int w = a->size;
            uint64_t x = trunc_w(read_operand(ins, *a, fx), w);
            unsigned cnt = static_cast<unsigned>(read_operand(ins, *b, fx)) & (w == 8 ? 63 : 31);
            if (cnt == 0) {
                write_operand(ins, *a, x, fx);
                break;
            }
            uint64_t r;
            if (ins.mnem == Mn::Shl) {
                r = cnt >= unsigned(8 * w) ? 0 : trunc_w(x << cnt, w);
                f.cf = cnt <= unsigned(8 * w) && ((x >> (8 * w - cnt)) & 1);
                if (cnt == 1) f.of = msb_w(r, w) != f.cf;
            } else if (ins.mnem == Mn::Shr) {
                f.cf = (x >> (cnt - 1)) & 1;
                r = cnt >= unsigned(8 * w) ? 0 : x >> cnt;
                if (cnt == 1) f.of = msb_w(x, w);
            } else {
                int64_t sx = sext_w(x, w);
                f.cf = (sx >> std::min<unsigned>(cnt - 1, 63)) & 1;
                r = trunc_w(static_cast<uint64_t>(sx >> std::min<unsigned>(cnt, 63)), w);
                if (cnt == 1) f.of = false;
            }
            set_szp(f, r, w);
            write_operand(ins, *a, r, fx);
            break;
        }
        case Mn::Rol: case Mn::Ror: {
            int w = a->size;
            uint64_t x = trunc_w(read_operand(ins, *a, fx), w);
            unsigned cnt = static_cast<unsigned>(read_operand(ins, *b, fx)) & (w == 8 ? 63 : 31);
            cnt %= unsigned(8 * w);
            uint64_t r = x;
            if (cnt) {
                if (ins.mnem == Mn::Rol)
                    r = trunc_w((x << cnt) | (x >> (8 * w - cnt)), w);
                else
                    r = trunc_w((x >> cnt) | (x << (8 * w - cnt)), w);
            }
            if (ins.mnem == Mn::Rol) f.cf = r & 1;
            else f.cf = msb_w(r, w);
            write_operand(ins, *a, r, fx);
            break;
        }
        case Mn::Call: case Mn::CallInd: {
            uint64_t target = ins.mnem == Mn::Call ? ins.branch_target
                                                   : read_operand(ins, *a, fx);
            fx.is_call = true;
            fx.call_target = target;
            current_call_site_ = ins.vaddr;
            auto sym = symbol_at_.find(target);
            if (sym != symbol_at_.end()) {
                auto model = models_.find(sym->second);
                if (model == models_.end())
                    fail(Errc::ModelMissing, "no model for libc routine " + sym->second);
                fx.model_call = true;
                fx.model_name = sym->second;
                model_calls.push_back({ins.vaddr, sym->second});
                model->second.behavior(*this, fx);
                break;  // model consumed the call; rip advances normally
            }
            if (!state.mem.mapped(target))
                fail(Errc::UnresolvedExternalCall,
                     "call to " + hex_addr(target) + " outside the image");
            push64(ins.end(), fx);
            state.shadow_stack.push_back({state.reg(Reg::RSP), target, state.reg(Reg::RSP)});
            next_rip = target;
            break;
        }
        case Mn::Ret: {
            fx.is_ret = true;
            uint64_t addr = pop64(fx);
            if (!state.shadow_stack.empty()) {
                fx.popped_frame = state.shadow_stack.back();
                state.shadow_stack.pop_back();
            }
            if (ins.op_count)  // ret imm16
                state.regs[reg_index(Reg::RSP)] += static_cast<uint64_t>(a->imm);
            if (addr == kReturnSentinel) {
                halt_ = HaltReason::CleanReturn;
                break;
            }
            next_rip = addr;
            break;
        }
        case Mn::Jmp: next_rip = ins.branch_target; break;
        case Mn::JmpInd: next_rip = read_operand(ins, *a, fx); break;
        case Mn::Jcc:
            if (cond(ins.cc)) next_rip = ins.branch_target;
            break;
        case Mn::Leave: {
            state.set_reg(Reg::RSP, state.reg(Reg::RBP));
            uint64_t v = pop64(fx);
            state.set_reg(Reg::RBP, v);
            break;
        }
        case Mn::Cdqe:
            state.set_reg(Reg::RAX, static_cast<uint64_t>(sext_w(state.reg(Reg::RAX), 4)));
            break;
        case Mn::Cwde:
            state.set_reg(Reg::RAX,
                          static_cast<uint64_t>(sext_w(state.reg(Reg::RAX), 2)) & 0xffffffffull);
            break;
        case Mn::Cdq:
            state.set_reg(Reg::RDX, (state.reg(Reg::RAX) & 0x80000000ull) ? 0xffffffffull : 0);
            break;
        case Mn::Cqo:
            state.set_reg(Reg::RDX, (state.reg(Reg::RAX) >> 63) ? ~0ull : 0);
            break;
        case Mn::Setcc:
            write_operand(ins, *a, cond(ins.cc) ? 1 : 0, fx);
            break;
        case Mn::Cmovcc: {
            uint64_t src = read_operand(ins, *b, fx);
            uint64_t old = read_operand(ins, *a, fx);
            // 32-bit cmov zero-extends even when the condition is false
            write_operand(ins, *a, cond(ins.cc) ? src : old, fx);
            break;
        }
        case Mn::Bswap: {
            int w = a->size;
            uint64_t v = read_operand(ins, *a, fx);
            uint64_t r = w == 8 ? __builtin_bswap64(v) : __builtin_bswap32(static_cast<uint32_t>(v));
            write_operand(ins, *a, r, fx);
            break;
        }
        case Mn::Movs: case Mn::Stos: {
            if (ins.rep && trunc_w(state.reg(Reg::RCX), 8) == 0) break;
            uint64_t esz = ins.str_size;
            uint8_t buf[8];
            if (ins.mnem == Mn::Movs) {
                uint64_t src = state.reg(Reg::RSI);
                state.mem.read(src, buf, esz);
                fx.reads.push_back({src, static_cast<uint32_t>(esz)});
                state.mem.write(state.reg(Reg::RDI), buf, esz);
                fx.writes.push_back({state.reg(Reg::RDI), static_cast<uint32_t>(esz)});
                state.set_reg(Reg::RSI, state.reg(Reg::RSI) + esz);
            } else {
                uint64_t v = state.reg(Reg::RAX);
                std::memcpy(buf, &v, 8);
                state.mem.write(state.reg(Reg::RDI), buf, esz);
                fx.writes.push_back({state.reg(Reg::RDI), static_cast<uint32_t>(esz)});
            }
            state.set_reg(Reg::RDI, state.reg(Reg::RDI) + esz);
            if (ins.rep) {
                state.set_reg(Reg::RCX, state.reg(Reg::RCX) - 1);
                if (state.reg(Reg::RCX) != 0) next_rip = ins.vaddr;  // iterate
            }
            break;
        }
        case Mn::Nop: break;
        case Mn::Syscall: {
            uint64_t nr = state.reg(Reg::RAX);
            if (nr == 60 || nr == 231) {
                request_exit(static_cast<int>(state.reg(Reg::RDI)));
            } else if (nr == 1 && state.reg(Reg::RDI) <= 2) {
                uint64_t buf = state.reg(Reg::RSI), len = state.reg(Reg::RDX);
                Bytes tmp(len);
                state.mem.read(buf, tmp.data(), len);
                captured_stdout.insert(captured_stdout.end(), tmp.begin(), tmp.end());
                state.set_reg(Reg::RAX, len);
            } else {
                fail(Errc::UnsupportedInstruction,
                     "syscall " + std::to_string(nr) + " at " + hex_addr(ins.vaddr));
            }
            break;
        }
        case Mn::Ud2: case Mn::Int3: case Mn::Hlt:
            fail(Errc::UnsupportedInstruction,
                 std::string(mn_name(ins.mnem)) + " trap at " + hex_addr(ins.vaddr));
    }
    if (halt_ == HaltReason::Running) state.rip = next_rip;
}

void Machine::step() {
    const Instruction& ins = fetch(state.rip);
    fx_.clear();
    for (auto& h : pre_hooks) h(*this, ins);
    execute(ins, fx_);
    state.instruction_count++;
    rip_tail.push_back(ins.vaddr);
    if (rip_tail.size() > 32) rip_tail.erase(rip_tail.begin());
    if (!state.shadow_stack.empty()) {
        ShadowFrame& top = state.shadow_stack.back();
        top.min_inner_rsp = std::min(top.min_inner_rsp, state.reg(Reg::RSP));
    }
    for (auto& h : post_hooks) h(*this, ins, fx_);
}

HaltReason Machine::run(uint64_t gas) {
    while (halt_ == HaltReason::Running) {
        if (state.instruction_count >= gas) {
            halt_ = HaltReason::GasExhausted;
            fault_code_ = Errc::GasExhausted;
            fault_message_ = "instruction budget exhausted";
            break;
        }
        try {
            step();
        } catch (const Error& e) {
            halt_ = HaltReason::Fault;
            fault_code_ = e.code();
            fault_message_ = e.what();
        }
    }
    return halt_;
}

// ---------------------------------------------------------------------------
// run_routine / run_program
// ---------------------------------------------------------------------------

RoutineRun run_routine(const BinaryImage& image, uint64_t entry, CallLayout layout,
                       ByteView input, uint64_t gas) {
    Machine m(image);
    m.add_builtin_models();

    m.state.mem.map(Machine::kStackBase, Machine::kStackSize, true);
    uint64_t in_len = input.size();
    m.state.mem.map(Machine::kInputBase, align_up(in_len + 1, 4096), true);
    if (in_len) m.state.mem.write(Machine::kInputBase, input.data(), in_len);
    uint8_t nul = 0;
    m.state.mem.write(Machine::kInputBase + in_len, &nul, 1);
    m.state.mem.map(Machine::kOutputBase, 4096, true);

    uint64_t rsp = Machine::kStackBase + Machine::kStackSize - 0x100;
    rsp -= 8;
    m.state.mem.write_u64(rsp, Machine::kReturnSentinel);
    m.state.set_reg(Reg::RSP, rsp);

    const char* letters = layout_name(layout);
    for (int i = 0; letters[i]; i++) {
        uint64_t v = letters[i] == 'I'   ? Machine::kInputBase
                     : letters[i] == 'L' ? in_len
                                         : Machine::kOutputBase;
        m.state.set_reg(kArgRegs[i], v);
    }
    m.state.shadow_stack.push_back({rsp, entry, rsp});
    m.state.rip = entry;

    HaltReason r = m.run(gas);
    RoutineRun out;
    out.instructions = m.state.instruction_count;
    if (r == HaltReason::CleanReturn || r == HaltReason::Exited) {
        out.ok = true;
        out.output.resize(Machine::kOutputProbeSize);
        m.state.mem.read(Machine::kOutputBase, out.output.data(), out.output.size());
    } else {
        out.error = m.fault_code();
        out.message = m.fault_message();
    }
    return out;
}

TestInput TestInput::parse(const std::string& text) {
    TestInput t;
    std::istringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "arg") {
            std::string w;
            ls >> w;
            t.argv_tail.push_back(w);
        } else if (key == "stdin") {
            std::string hex;
            ls >> hex;
            Bytes b = from_hex(hex);
            t.stdin_bytes.insert(t.stdin_bytes.end(), b.begin(), b.end());
        } else {
            fail(Errc::BadInput, "unknown test-input directive '" + key + "'");
        }
    }
    return t;
}

TestInput TestInput::parse_file(const std::string& path) {
    Bytes b = read_file(path);
    return parse(std::string(b.begin(), b.end()));
}

ExecutionTrace run_program(const BinaryImage& image, const TestInput& input,
                           const ProgramHooks& hooks, uint64_t gas, Machine* external) {
    std::unique_ptr<Machine> owned;
    Machine* m = external;
    if (!m) {
        owned = std::make_unique<Machine>(image);
        m = owned.get();
    }
    m->add_builtin_models();
    for (auto& h : hooks.pre) m->pre_hooks.push_back(h);
    for (auto& h : hooks.post) m->post_hooks.push_back(h);
    m->stdin_bytes = input.stdin_bytes;

    m->state.mem.map(Machine::kStackBase, Machine::kStackSize, true);
    uint64_t top = Machine::kStackBase + Machine::kStackSize;

    // argv strings, then the initial process stack: argc, argv[], NULL, envp NULL
    std::vector<std::string> argv;
    argv.push_back(image.path().empty() ? "prog" : image.path());
    for (const std::string& w : input.argv_tail) argv.push_back(w);

    uint64_t str_cursor = top - 0x800;
    std::vector<uint64_t> argv_ptrs;
    for (const std::string& s : argv) {
        m->state.mem.write(str_cursor, reinterpret_cast<const uint8_t*>(s.c_str()), s.size() + 1);
        argv_ptrs.push_back(str_cursor);
        str_cursor += s.size() + 1;
    }
    uint64_t rsp = top - 0x1000;
    rsp &= ~0xfull;
    uint64_t words = 1 + argv_ptrs.size() + 1 + 1;  // argc + argv + NULL + envp NULL
    if (words % 2) rsp -= 8;                        // keep rsp 16-aligned at entry
    rsp -= words * 8;
    uint64_t w = rsp;
    m->state.mem.write_u64(w, argv_ptrs.size()); w += 8;
    for (uint64_t p : argv_ptrs) { m->state.mem.write_u64(w, p); w += 8; }
    m->state.mem.write_u64(w, 0); w += 8;
    m->state.mem.write_u64(w, 0); w += 8;
    m->state.set_reg(Reg::RSP, rsp);

    m->state.shadow_stack.push_back({rsp, image.entry_point(), rsp});
    m->state.rip = image.entry_point();

    HaltReason r = m->run(gas);
    ExecutionTrace t;
    t.instructions = m->state.instruction_count;
    t.halt = r;
    t.exit_status = m->exit_status();
    t.captured_stdout = m->captured_stdout;
    t.model_calls = m->model_calls;
    t.tail = m->rip_tail;
    if (r == HaltReason::Fault || r == HaltReason::GasExhausted) {
        t.fault_code = m->fault_code();
        t.fault_message = m->fault_message();
    }
    return t;
}

}  // namespace hashswap
