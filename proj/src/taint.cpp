#include "hashswap/taint.hpp"

#include <algorithm>

namespace hashswap {

const char* buffer_kind_name(BufferKind k) {
    switch (k) {
        case BufferKind::Static: return "static";
        case BufferKind::Heap: return "heap";
        case BufferKind::Stack: return "stack";
        case BufferKind::Unknown: return "unknown";
    }
    return "?";
}

BufferKind classify(uint64_t addr, const MachineState& state, const BinaryImage& image) {
    int matches = 0;
    BufferKind kind = BufferKind::Unknown;
    if (image.in_static_data(addr)) { kind = BufferKind::Static; matches++; }
    if (state.live_allocation_at(addr)) { kind = BufferKind::Heap; matches++; }
    const auto& frames = state.shadow_stack;
    for (size_t i = frames.size(); i-- > 0;) {
        uint64_t hi = frames[i].sp_at_call;
        uint64_t lo = i + 1 < frames.size() ? frames[i + 1].sp_at_call : state.reg(Reg::RSP);
        if (addr >= lo && addr < hi) { kind = BufferKind::Stack; matches++; break; }
    }
    if (matches > 1)
        fail(Errc::Internal, "address " + hex_addr(addr) + " classifies as multiple kinds");
    return kind;
}

namespace {

CellTag make_tag(uint64_t addr, const MachineState& state, const BinaryImage& image,
                 bool introduced) {
    CellTag tag;
    tag.kind = classify(addr, state, image);
    tag.introduced = introduced;
    if (tag.kind == BufferKind::Heap) {
        const HeapAllocation* h = state.live_allocation_at(addr);
        tag.heap_site = h->alloc_site;
        tag.heap_base = h->base;
    } else if (tag.kind == BufferKind::Stack) {
        const auto& frames = state.shadow_stack;
        for (size_t i = frames.size(); i-- > 0;) {
            uint64_t hi = frames[i].sp_at_call;
            uint64_t lo = i + 1 < frames.size() ? frames[i + 1].sp_at_call : state.reg(Reg::RSP);
            if (addr >= lo && addr < hi) {
                tag.frame_entry = frames[i].callee;
                tag.frame_sp = frames[i].sp_at_call;
                tag.frame_min_rsp = frames[i].min_inner_rsp;
                break;
            }
        }
    }
    return tag;
}

void taint_range(TaintMap& t, const Machine& m, uint64_t addr, uint32_t len, bool introduced) {
    for (uint32_t i = 0; i < len; i++)
        t.cells[addr + i] = make_tag(addr + i, m.state, m.image(), introduced);
}

void clear_range(TaintMap& t, uint64_t addr, uint32_t len) {
    auto it = t.cells.lower_bound(addr);
    while (it != t.cells.end() && it->first < addr + len) it = t.cells.erase(it);
}

bool mem_src_tainted(const TaintMap& t, const StepEffects& fx) {
    for (const MemAccess& r : fx.reads)
        if (t.any_byte(r.addr, r.len)) return true;
    return false;
}

// Address registers of memory operands in source position: a load through a
// tainted pointer yields a tainted value (the lookup-table rule).
bool pointer_src_tainted(const TaintMap& t, const Operand& op) {
    if (op.kind != OpKind::Mem) return false;
    if (op.mem.base != Reg::None && t.reg_tainted(op.mem.base)) return true;
    if (op.mem.index != Reg::None && t.reg_tainted(op.mem.index)) return true;
    return false;
}

bool operand_src_tainted(const TaintMap& t, const Operand& op, const StepEffects& fx) {
    switch (op.kind) {
        case OpKind::Imm: return false;
        case OpKind::Reg: return t.reg_tainted(op.reg);
        case OpKind::Mem: return mem_src_tainted(t, fx) || pointer_src_tainted(t, op);
    }
    return false;
}

void write_dst(TaintMap& t, const Machine& m, const Instruction& ins, const Operand& op,
               bool tainted, const StepEffects& fx) {
    (void)ins;
    if (op.kind == OpKind::Reg) {
        if (op.size >= 4 && !op.high8) {
            t.set_reg(op.reg, tainted);
        } else {
            // partial register writes merge: the untouched bytes keep their
            // old taint, so only gain taint here
            if (tainted) t.set_reg(op.reg, true);
        }
        return;
    }
    if (op.kind == OpKind::Mem) {
        for (const MemAccess& w : fx.writes) {
            if (tainted) taint_range(t, m, w.addr, w.len, false);
            else clear_range(t, w.addr, w.len);
        }
    }
}

bool same_reg_pair(const Instruction& ins) {
    return ins.op_count >= 2 && ins.ops[0].kind == OpKind::Reg &&
           ins.ops[1].kind == OpKind::Reg && ins.ops[0].reg == ins.ops[1].reg &&
           ins.ops[0].high8 == ins.ops[1].high8;
}

}  // namespace

void propagate(const Machine& m, TaintMap& t, const Instruction& ins, const StepEffects& fx) {
    // Libc models: every written byte defaults to clean, then the model's
    // declared flow applies.
    if (fx.model_call) {
        struct Pending { uint64_t addr; uint32_t len; bool taint; bool bytewise;
                         uint64_t src_base; };
        std::vector<Pending> pend;
        for (const MemAccess& w : fx.writes) pend.push_back({w.addr, w.len, false, false, 0});
        for (const ModelWrite& w : fx.model_writes) {
            if (w.constant) { pend.push_back({w.addr, w.len, false, false, 0}); continue; }
            bool src = false;
            for (Reg r : w.src_regs) src = src || t.reg_tainted(r);
            if (w.bytewise && !w.src_mem.empty()) {
                // per-byte copy: resolved below against the source bytes
                pend.push_back({w.addr, w.len, false, true, w.src_mem[0].addr});
                continue;
            }
            for (const MemAccess& r : w.src_mem) src = src || t.any_byte(r.addr, r.len);
            pend.push_back({w.addr, w.len, src, false, 0});
        }
        // snapshot the source taint before mutating
        std::vector<std::pair<uint64_t, CellTag>> to_set;
        std::vector<std::pair<uint64_t, uint32_t>> to_clear;
        for (const Pending& p : pend) {
            if (p.bytewise) {
                for (uint32_t i = 0; i < p.len; i++) {
                    auto it = t.cells.find(p.src_base + i);
                    if (it != t.cells.end())
                        to_set.push_back({p.addr + i, it->second});
                    else
                        to_clear.push_back({p.addr + i, 1});
                }
            } else if (p.taint) {
                for (uint32_t i = 0; i < p.len; i++) to_set.push_back({p.addr + i, {}});
            } else {
                to_clear.push_back({p.addr, p.len});
            }
        }
        for (auto& [addr, len] : to_clear) clear_range(t, addr, len);
        for (auto& [addr, tag] : to_set) {
            (void)tag;
            t.cells[addr] = make_tag(addr, m.state, m.image(), false);
        }
        bool rax_src = false;
        for (Reg r : fx.model_ret_src_regs) rax_src = rax_src || t.reg_tainted(r);
        for (const MemAccess& r : fx.model_ret_src_mem) rax_src = rax_src || t.any_byte(r.addr, r.len);
        t.set_reg(Reg::RAX, rax_src);
        return;
    }

    const Operand* a = ins.op_count > 0 ? &ins.ops[0] : nullptr;
    const Operand* b = ins.op_count > 1 ? &ins.ops[1] : nullptr;

    switch (ins.mnem) {
        case Mn::Mov: case Mn::Movzx: case Mn::Movsx: case Mn::Movsxd: {
            bool src = operand_src_tainted(t, *b, fx);
            write_dst(t, m, ins, *a, src, fx);
            break;
        }
        case Mn::Lea: {
            bool src = pointer_src_tainted(t, *b) ||
                       (b->mem.base != Reg::None && t.reg_tainted(b->mem.base));
            write_dst(t, m, ins, *a, src, fx);
            break;
        }
        case Mn::Add: case Mn::Sub: case Mn::Adc: case Mn::Sbb:
        case Mn::And: case Mn::Or: case Mn::Xor: {
            bool constant = (ins.mnem == Mn::Xor || ins.mnem == Mn::Sub) && same_reg_pair(ins);
            if (b->kind == OpKind::Imm) {
                uint64_t mask = a->size == 8 ? ~0ull : ((1ull << (8 * a->size)) - 1);
                if (ins.mnem == Mn::And && (static_cast<uint64_t>(b->imm) & mask) == 0)
                    constant = true;
                if (ins.mnem == Mn::Or && (static_cast<uint64_t>(b->imm) & mask) == mask)
                    constant = true;
            }
            bool src = !constant &&
                       (operand_src_tainted(t, *a, fx) || operand_src_tainted(t, *b, fx) ||
                        ((ins.mnem == Mn::Adc || ins.mnem == Mn::Sbb) && t.flags));
            write_dst(t, m, ins, *a, src, fx);
            t.flags = src;
            break;
        }
        case Mn::Cmp: case Mn::Test: {
            bool constant = same_reg_pair(ins) && ins.mnem == Mn::Cmp;
            t.flags = !constant &&
                      (operand_src_tainted(t, *a, fx) || operand_src_tainted(t, *b, fx));
            break;
        }
        case Mn::Inc: case Mn::Dec: case Mn::Neg: {
            bool src = operand_src_tainted(t, *a, fx);
            write_dst(t, m, ins, *a, src, fx);
            t.flags = src;
            break;
        }
        case Mn::Not: {
            bool src = operand_src_tainted(t, *a, fx);
            write_dst(t, m, ins, *a, src, fx);
            break;
        }
        case Mn::Shl: case Mn::Shr: case Mn::Sar: case Mn::Rol: case Mn::Ror: {
            bool src = operand_src_tainted(t, *a, fx) || operand_src_tainted(t, *b, fx);
            write_dst(t, m, ins, *a, src, fx);
            t.flags = src;
            break;
        }
        case Mn::Imul: {
            if (ins.op_count == 1) {
                bool src = operand_src_tainted(t, *a, fx) || t.reg_tainted(Reg::RAX);
                t.set_reg(Reg::RAX, src);
                t.set_reg(Reg::RDX, src);
                t.flags = src;
            } else if (ins.op_count == 2) {
                bool src = operand_src_tainted(t, *a, fx) || operand_src_tainted(t, *b, fx);
                write_dst(t, m, ins, *a, src, fx);
                t.flags = src;
            } else {
                bool constant = ins.ops[2].imm == 0;
                bool src = !constant && operand_src_tainted(t, *b, fx);
                write_dst(t, m, ins, *a, src, fx);
                t.flags = src;
            }
            break;
        }
        case Mn::Mul: {
            bool src = operand_src_tainted(t, *a, fx) || t.reg_tainted(Reg::RAX);
            t.set_reg(Reg::RAX, src);
            t.set_reg(Reg::RDX, src);
            t.flags = src;
            break;
        }
        case Mn::Div: case Mn::Idiv: {
            bool src = operand_src_tainted(t, *a, fx) || t.reg_tainted(Reg::RAX) ||
                       (a->size > 1 && t.reg_tainted(Reg::RDX));
            t.set_reg(Reg::RAX, src);
            t.set_reg(Reg::RDX, src);
            t.flags = src;
            break;
        }
        case Mn::Push: {
            bool src = operand_src_tainted(t, *a, fx);
            for (const MemAccess& w : fx.writes) {
                if (src) taint_range(t, const_cast<Machine&>(m), w.addr, w.len, false);
                else clear_range(t, w.addr, w.len);
            }
            break;
        }
        case Mn::Pop: {
            bool src = mem_src_tainted(t, fx);
            if (a->kind == OpKind::Reg) t.set_reg(a->reg, src);
            else write_dst(t, m, ins, *a, src, fx);
            break;
        }
        case Mn::Xchg: {
            bool ta = operand_src_tainted(t, *a, fx);
            bool tb = operand_src_tainted(t, *b, fx);
            write_dst(t, m, ins, *a, tb, fx);
            write_dst(t, m, ins, *b, ta, fx);
            break;
        }
        case Mn::Leave: {
            t.set_reg(Reg::RSP, t.reg_tainted(Reg::RBP));
            t.set_reg(Reg::RBP, mem_src_tainted(t, fx));
            break;
        }
        case Mn::Cdqe: case Mn::Cwde: break;  // rax from rax
        case Mn::Cdq: case Mn::Cqo:
            t.set_reg(Reg::RDX, t.reg_tainted(Reg::RAX));
            break;
        case Mn::Setcc:
            write_dst(t, m, ins, *a, t.flags, fx);
            break;
        case Mn::Cmovcc: {
            bool src = operand_src_tainted(t, *a, fx) || operand_src_tainted(t, *b, fx) || t.flags;
            write_dst(t, m, ins, *a, src, fx);
            break;
        }
        case Mn::Bswap: break;  // dst from dst
        case Mn::Movs: {
            bool src = mem_src_tainted(t, fx) ||
                       t.reg_tainted(Reg::RSI);  // pointer rule on the implicit load
            for (const MemAccess& w : fx.writes) {
                if (src) taint_range(t, m, w.addr, w.len, false);
                else clear_range(t, w.addr, w.len);
            }
            break;
        }
        case Mn::Stos: {
            bool src = t.reg_tainted(Reg::RAX);
            for (const MemAccess& w : fx.writes) {
                if (src) taint_range(t, m, w.addr, w.len, false);
                else clear_range(t, w.addr, w.len);
            }
            break;
        }
        case Mn::Call: case Mn::CallInd:
            // the pushed return address is a constant
            for (const MemAccess& w : fx.writes) clear_range(t, w.addr, w.len);
            break;
        case Mn::Ret: case Mn::Jmp: case Mn::JmpInd: case Mn::Jcc:
        case Mn::Nop: case Mn::Ud2: case Mn::Int3: case Mn::Hlt: case Mn::Syscall:
            break;
    }
}

std::vector<TaintedBuffer> aggregate(const TaintMap& taint,
                                     const std::vector<std::pair<uint64_t, uint64_t>>& introduced,
                                     uint32_t digest_size) {
    std::vector<TaintedBuffer> out;
    auto in_introduced = [&](uint64_t addr) {
        for (const auto& [base, len] : introduced)
            if (addr >= base && addr < base + len) return true;
        return false;
    };

    // Introduction regions are digest buffers by construction.
    std::set<uint64_t> seen_bases;
    for (const auto& [base, len] : introduced) {
        if (!seen_bases.insert(base).second) continue;
        uint64_t run = 0;
        while (run < len && taint.cells.count(base + run)) run++;
        if (run < digest_size) continue;
        auto it = taint.cells.find(base);
        const CellTag& tag = it->second;
        TaintedBuffer b;
        b.kind = tag.kind;
        b.old_size = run;
        b.runtime_base = base;
        b.static_vaddr = base;
        b.heap_alloc_site = tag.heap_site;
        b.heap_base = tag.heap_base;
        b.stack_routine = tag.frame_entry;
        b.stack_offset = base - tag.frame_min_rsp;
        if (b.kind != BufferKind::Unknown) out.push_back(b);
    }

    // Maximal contiguous propagated runs, split where the anchor changes.
    auto it = taint.cells.begin();
    while (it != taint.cells.end()) {
        if (in_introduced(it->first)) { ++it; continue; }
        uint64_t base = it->first;
        const CellTag first = it->second;
        uint64_t end = base;
        while (it != taint.cells.end() && it->first == end && !in_introduced(it->first)) {
            const CellTag& tag = it->second;
            if (tag.kind != first.kind) break;
            if (tag.kind == BufferKind::Stack && tag.frame_entry != first.frame_entry) break;
            if (tag.kind == BufferKind::Heap && tag.heap_base != first.heap_base) break;
            end++;
            ++it;
        }
        uint64_t len = end - base;
        if (len >= digest_size && first.kind != BufferKind::Unknown) {
            TaintedBuffer b;
            b.kind = first.kind;
            b.old_size = len;
            b.runtime_base = base;
            b.static_vaddr = base;
            b.heap_alloc_site = first.heap_site;
            b.heap_base = first.heap_base;
            b.stack_routine = first.frame_entry;
            b.stack_offset = base - first.frame_min_rsp;
            out.push_back(b);
        }
        if (end == base) ++it;  // anchor split made no progress on this cell
    }

    std::sort(out.begin(), out.end(), [](const TaintedBuffer& a, const TaintedBuffer& b) {
        if (a.kind != b.kind) return static_cast<int>(a.kind) < static_cast<int>(b.kind);
        return a.runtime_base < b.runtime_base;
    });
    return out;
}

TaintReport taint_run(const BinaryImage& image, const IdentifiedPrimitive& target,
                      const TestInput& input, uint64_t gas) {
    struct Engine {
        TaintMap map;
        std::vector<std::pair<uint64_t, uint64_t>> introduced;
        struct Pending { size_t depth; uint64_t out_base; };
        std::vector<Pending> pending;
        int target_calls = 0;
        std::map<uint64_t, FrameInfo> frames;
    } eng;

    Reg out_reg = layout_reg(target.layout, 'O');
    if (out_reg == Reg::None)
        fail(Errc::Internal, "target layout has no output parameter");

    ProgramHooks hooks;
    hooks.post.push_back([&](Machine& m, const Instruction& ins, const StepEffects& fx) {
        if (fx.is_call && fx.call_target == target.entry) {
            if (!eng.pending.empty())
                fail(Errc::Internal, "recursive re-entry of the target hash routine");
            eng.target_calls++;
            // the output base is read from the argument register at call entry
            eng.pending.push_back({m.state.shadow_stack.size(), m.state.reg(out_reg)});
            return;
        }
        if (fx.is_ret && !eng.pending.empty() && fx.popped_frame &&
            fx.popped_frame->callee == target.entry &&
            m.state.shadow_stack.size() + 1 == eng.pending.back().depth + 0) {
            // returned from the target: taint [out, out+digest_size)
            uint64_t out = eng.pending.back().out_base;
            eng.pending.pop_back();
            for (uint64_t a = out; a < out + target.digest_size; a++) {
                CellTag tag = make_tag(a, m.state, m.image(), true);
                eng.map.cells[a] = tag;
                if (tag.kind == BufferKind::Stack) {
                    FrameInfo& fi = eng.frames[tag.frame_entry];
                    fi.routine_entry = tag.frame_entry;
                    fi.size = std::max(fi.size, tag.frame_sp - tag.frame_min_rsp);
                }
            }
            eng.introduced.push_back({out, target.digest_size});
            return;
        }
        propagate(m, eng.map, ins, fx);
    });

    ExecutionTrace trace = run_program(image, input, hooks, gas);
    if (trace.halt == HaltReason::Fault)
        throw Error(trace.fault_code, trace.fault_message);
    if (trace.halt == HaltReason::GasExhausted)
        fail(Errc::GasExhausted, "taint run exhausted its instruction budget");
    if (eng.target_calls == 0)
        fail(Errc::TargetNeverCalled,
             "test input never reached the target routine at " + hex_addr(target.entry));

    TaintReport rep;
    rep.target = target;
    rep.buffers = aggregate(eng.map, eng.introduced, target.digest_size);
    for (const TaintedBuffer& b : rep.buffers) {
        if (b.kind != BufferKind::Stack) continue;
        FrameInfo& fi = eng.frames[b.stack_routine];
        fi.routine_entry = b.stack_routine;
    }
    for (auto& [entry, fi] : eng.frames) {
        (void)entry;
        rep.frames.push_back(fi);
    }
    std::sort(rep.frames.begin(), rep.frames.end(),
              [](const FrameInfo& a, const FrameInfo& b) {
                  return a.routine_entry < b.routine_entry;
              });
    return rep;
}

TaintReport merge_reports(const TaintReport& a, const TaintReport& b) {
    TaintReport out = a;
    auto same_anchor = [](const TaintedBuffer& x, const TaintedBuffer& y) {
        if (x.kind != y.kind) return false;
        switch (x.kind) {
            case BufferKind::Static: return x.static_vaddr == y.static_vaddr;
            case BufferKind::Heap: return x.heap_alloc_site == y.heap_alloc_site;
            case BufferKind::Stack:
                return x.stack_routine == y.stack_routine && x.stack_offset == y.stack_offset;
            case BufferKind::Unknown: return false;
        }
        return false;
    };
    for (const TaintedBuffer& nb : b.buffers) {
        bool merged = false;
        for (TaintedBuffer& ob : out.buffers) {
            if (same_anchor(ob, nb)) {
                ob.old_size = std::max(ob.old_size, nb.old_size);
                merged = true;
                break;
            }
        }
        if (!merged) out.buffers.push_back(nb);
    }
    for (const FrameInfo& nf : b.frames) {
        bool merged = false;
        for (FrameInfo& of : out.frames) {
            if (of.routine_entry == nf.routine_entry) {
                of.size = std::max(of.size, nf.size);
                merged = true;
            }
        }
        if (!merged) out.frames.push_back(nf);
    }
    return out;
}

}  // namespace hashswap
