#pragma once

#include <bitset>
#include <map>

#include "hashswap/executor.hpp"
#include "hashswap/identifier.hpp"

namespace hashswap {

enum class BufferKind { Static, Heap, Stack, Unknown };
const char* buffer_kind_name(BufferKind k);

// Allocation classification of one address against the live machine state.
BufferKind classify(uint64_t addr, const MachineState& state, const BinaryImage& image);

// Per tainted byte: where it lived when it was tainted, keyed by a stable
// anchor that survives into the static rewriting phase.
struct CellTag {
    BufferKind kind = BufferKind::Unknown;
    bool introduced = false;        // part of a digest introduction region
    uint64_t frame_entry = 0;       // Stack: owning routine
    uint64_t frame_sp = 0;          // Stack: sp at call
    uint64_t frame_min_rsp = 0;     // Stack: post-prologue stack pointer
    uint64_t heap_site = 0;         // Heap: allocating call vaddr
    uint64_t heap_base = 0;         // Heap: allocation base
};

struct TaintMap {
    std::map<uint64_t, CellTag> cells;  // tainted bytes, ordered for aggregation
    std::bitset<16> regs;
    bool flags = false;

    bool reg_tainted(Reg r) const { return regs.test(reg_index(r)); }
    void set_reg(Reg r, bool t) { regs.set(reg_index(r), t); }
    bool any_byte(uint64_t addr, uint32_t len) const {
        auto it = cells.lower_bound(addr);
        return it != cells.end() && it->first < addr + len;
    }
};

// Post-execution propagation step: explicit data flow, word-level policy,
// taint-through-pointer on loads, constant-result idioms clear.
void propagate(const Machine& m, TaintMap& taint, const Instruction& ins,
               const StepEffects& fx);

struct TaintedBuffer {
    BufferKind kind = BufferKind::Unknown;
    uint64_t old_size = 0;
    uint64_t runtime_base = 0;
    // Static
    uint64_t static_vaddr = 0;
    // Heap
    uint64_t heap_alloc_site = 0;
    uint64_t heap_base = 0;
    // Stack
    uint64_t stack_routine = 0;
    uint64_t stack_offset = 0;  // bytes above the post-prologue stack pointer
};

struct FrameInfo {
    uint64_t routine_entry = 0;
    uint64_t size = 0;
};

struct TaintReport {
    IdentifiedPrimitive target;
    std::vector<TaintedBuffer> buffers;
    std::vector<FrameInfo> frames;
};

// Final aggregation: introduced digest regions become buffers; remaining
// tainted cells form maximal contiguous runs at least digest_size long.
std::vector<TaintedBuffer> aggregate(const TaintMap& taint,
                                     const std::vector<std::pair<uint64_t, uint64_t>>& introduced,
                                     uint32_t digest_size);

// Instrumented run of the whole program: introduces taint over the target's
// output digest at each return from it, propagates, aggregates.
TaintReport taint_run(const BinaryImage& image, const IdentifiedPrimitive& target,
                      const TestInput& input, uint64_t gas = Machine::kGasDefault);

// Two reports over the same target from different test inputs, unioned by
// anchor (old_size takes the max).
TaintReport merge_reports(const TaintReport& a, const TaintReport& b);

}  // namespace hashswap
