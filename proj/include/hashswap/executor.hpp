#pragma once

#include <array>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <unordered_map>

#include "hashswap/disasm.hpp"
#include "hashswap/elf_image.hpp"
#include "hashswap/insn.hpp"

namespace hashswap {

// Parameter orders a hash routine may take: all 3! permutations of
// (input, length, output) plus the two length-less forms.
enum class CallLayout : uint8_t { ILO, IOL, LIO, LOI, OIL, OLI, IO, OI };

const char* layout_name(CallLayout l);
std::optional<CallLayout> layout_from_name(const std::string& s);
int layout_arity(CallLayout l);
// Register carrying the given parameter ('I', 'L' or 'O'); Reg::None when
// the layout has no such parameter.
Reg layout_reg(CallLayout l, char param);

struct Flags {
    bool cf = false, zf = false, sf = false, of = false, pf = false;
};

class SparseMemory {
public:
    void map(uint64_t base, uint64_t len, bool writable);
    // Initial image load: ignores page writability.
    void load(uint64_t addr, const uint8_t* in, size_t len);
    bool mapped(uint64_t addr) const;
    void read(uint64_t addr, uint8_t* out, size_t len) const;   // throws MemoryFault
    void write(uint64_t addr, const uint8_t* in, size_t len);   // throws MemoryFault
    uint64_t read_u64(uint64_t addr) const;
    void write_u64(uint64_t addr, uint64_t v);
    // Best-effort read that stops at an unmapped byte; used by decode.
    size_t read_upto(uint64_t addr, uint8_t* out, size_t len) const;

private:
    struct Page {
        std::array<uint8_t, 4096> bytes{};
        bool writable = false;
    };
    Page* page_of(uint64_t addr);
    const Page* page_of(uint64_t addr) const;
    std::unordered_map<uint64_t, Page> pages_;
    mutable uint64_t last_key_ = UINT64_MAX;
    mutable const Page* last_page_ = nullptr;
};

struct ShadowFrame {
    uint64_t sp_at_call = 0;   // rsp immediately after the call pushed
    uint64_t callee = 0;
    uint64_t min_inner_rsp = 0;  // deepest rsp seen while this frame was live
};

struct HeapAllocation {
    uint64_t base = 0;
    uint64_t size = 0;
    uint64_t alloc_site = 0;  // vaddr of the allocating call
    bool live = true;
};

struct MachineState {
    std::array<uint64_t, 16> regs{};
    Flags flags;
    uint64_t rip = 0;
    SparseMemory mem;
    std::vector<ShadowFrame> shadow_stack;
    std::vector<HeapAllocation> heap_allocations;
    uint64_t instruction_count = 0;

    uint64_t reg(Reg r) const { return regs[reg_index(r)]; }
    void set_reg(Reg r, uint64_t v) { regs[reg_index(r)] = v; }
    const HeapAllocation* live_allocation_at(uint64_t addr) const;
};

struct MemAccess {
    uint64_t addr = 0;
    uint32_t len = 0;
};

// Byte-flow relation a libc model reports for the taint hook: each write
// derives from the listed register/memory sources (or from nothing when
// `constant`).
struct ModelWrite {
    uint64_t addr = 0;
    uint32_t len = 0;
    std::vector<Reg> src_regs;
    std::vector<MemAccess> src_mem;
    bool bytewise = false;  // dst byte i tainted from src byte i only
    bool constant = false;
};

struct StepEffects {
    std::vector<MemAccess> reads;
    std::vector<MemAccess> writes;
    bool model_call = false;
    std::string model_name;
    std::vector<ModelWrite> model_writes;
    std::vector<Reg> model_ret_src_regs;     // taint sources of rax
    std::vector<MemAccess> model_ret_src_mem;
    bool is_call = false, is_ret = false;
    uint64_t call_target = 0;
    std::optional<ShadowFrame> popped_frame;

    void clear() {
        reads.clear(); writes.clear();
        model_call = false; model_name.clear();
        model_writes.clear(); model_ret_src_regs.clear(); model_ret_src_mem.clear();
        is_call = is_ret = false;
        call_target = 0;
        popped_frame.reset();
    }
};

class Machine;

struct LibcModel {
    std::string name;
    std::function<void(Machine&, StepEffects&)> behavior;
};

std::vector<LibcModel> builtin_libc_models();

enum class HaltReason { Running, CleanReturn, Exited, Fault, GasExhausted };

struct ExecutionTrace {
    uint64_t instructions = 0;
    int exit_status = 0;
    HaltReason halt = HaltReason::Running;
    std::string fault_message;
    Errc fault_code = Errc::Internal;
    Bytes captured_stdout;
    std::vector<std::pair<uint64_t, std::string>> model_calls;  // (call site, name)
    std::vector<uint64_t> tail;  // last executed vaddrs, oldest first
};

class Machine {
public:
    static constexpr uint64_t kStackBase = 0x7ffe00000000ull;
    static constexpr uint64_t kStackSize = 1ull << 20;
    static constexpr uint64_t kReturnSentinel = 0xdead0000ull;
    static constexpr uint64_t kInputBase = 0x100000000ull;
    static constexpr uint64_t kOutputBase = 0x100010000ull;
    static constexpr uint64_t kHeapBase = 0x200000000ull;
    static constexpr uint64_t kGasDefault = 50'000'000ull;
    static constexpr uint32_t kOutputProbeSize = 64;  // covers digests up to SHA-512

    explicit Machine(const BinaryImage& image);

    MachineState state;
    Bytes captured_stdout;
    Bytes stdin_bytes;

    void add_model(LibcModel model);
    void add_builtin_models();

    using PreHook = std::function<void(Machine&, const Instruction&)>;
    using PostHook = std::function<void(Machine&, const Instruction&, const StepEffects&)>;
    std::vector<PreHook> pre_hooks;
    std::vector<PostHook> post_hooks;

    // Executes until halt or gas runs out. Faults are captured, not thrown.
    HaltReason run(uint64_t gas);
    HaltReason halt_reason() const { return halt_; }
    const std::string& fault_message() const { return fault_message_; }
    Errc fault_code() const { return fault_code_; }
    int exit_status() const { return exit_status_; }

    const BinaryImage& image() const { return *image_; }
    uint64_t heap_bump(uint64_t size);
    void request_exit(int status);
    uint64_t current_call_site() const { return current_call_site_; }
    std::vector<std::pair<uint64_t, std::string>> model_calls;
    std::vector<uint64_t> rip_tail;

private:
    void step();
    const Instruction& fetch(uint64_t rip);
    void execute(const Instruction& ins, StepEffects& fx);

    uint64_t read_operand(const Instruction& ins, const Operand& op, StepEffects& fx);
    void write_operand(const Instruction& ins, const Operand& op, uint64_t v, StepEffects& fx);
    uint64_t effective_addr(const Instruction& ins, const MemRef& m) const;
    void push64(uint64_t v, StepEffects& fx);
    uint64_t pop64(StepEffects& fx);
    bool cond(Cond c) const;

    const BinaryImage* image_;
    std::map<std::string, LibcModel> models_;
    std::map<uint64_t, std::string> symbol_at_;
    std::unordered_map<uint64_t, Instruction> decode_cache_;
    uint64_t heap_next_ = kHeapBase;
    HaltReason halt_ = HaltReason::Running;
    std::string fault_message_;
    Errc fault_code_ = Errc::Internal;
    int exit_status_ = 0;
    uint64_t current_call_site_ = 0;
    StepEffects fx_;
};

// Offline concrete execution of one candidate routine on a synthetic call
// stack. Failures are outcomes, not exceptions: a wrong parameter binding is
// expected to fault.
struct RoutineRun {
    bool ok = false;
    Bytes output;  // kOutputProbeSize bytes on clean return
    Errc error = Errc::Internal;
    std::string message;
    uint64_t instructions = 0;
};

RoutineRun run_routine(const BinaryImage& image, uint64_t entry, CallLayout layout,
                       ByteView input, uint64_t gas = Machine::kGasDefault);

// Script for full-program runs: extra argv words and optional stdin bytes.
struct TestInput {
    std::vector<std::string> argv_tail;
    Bytes stdin_bytes;

    static TestInput parse_file(const std::string& path);
    static TestInput parse(const std::string& text);
};

struct ProgramHooks {
    std::vector<Machine::PreHook> pre;
    std::vector<Machine::PostHook> post;
};

ExecutionTrace run_program(const BinaryImage& image, const TestInput& input,
                           const ProgramHooks& hooks = {}, uint64_t gas = Machine::kGasDefault,
                           Machine* external_machine = nullptr);

}  // namespace hashswap
