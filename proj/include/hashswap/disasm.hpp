#pragma once

#include <map>
#include <set>
#include <vector>

#include "hashswap/elf_image.hpp"
#include "hashswap/insn.hpp"

namespace hashswap {

struct Routine {
    uint64_t entry = 0;
    uint64_t start = 0;  // byte range [start, end)
    uint64_t end = 0;
    std::vector<Instruction> instructions;  // address order, contiguous
    bool unverifiable = false;  // decode trouble inside; analyses should distrust it

    const Instruction* at(uint64_t vaddr) const {
        for (const Instruction& i : instructions)
            if (i.vaddr == vaddr) return &i;
        return nullptr;
    }
    bool contains(uint64_t vaddr) const { return vaddr >= start && vaddr < end; }
};

struct CallEdge {
    uint64_t caller = 0;
    uint64_t callee = 0;
    uint64_t call_site = 0;
};

struct CallGraph {
    std::set<uint64_t> nodes;
    std::vector<CallEdge> edges;

    std::vector<uint64_t> callers_of(uint64_t entry) const {
        std::set<uint64_t> out;
        for (const CallEdge& e : edges)
            if (e.callee == entry) out.insert(e.caller);
        return {out.begin(), out.end()};
    }
    std::vector<uint64_t> call_sites_of(uint64_t entry) const {
        std::vector<uint64_t> out;
        for (const CallEdge& e : edges)
            if (e.callee == entry) out.push_back(e.call_site);
        return out;
    }
};

struct DisasmDiagnostic {
    uint64_t vaddr = 0;
    std::string message;
};

struct Disassembly {
    std::vector<Routine> routines;  // sorted by entry
    CallGraph graph;
    std::vector<DisasmDiagnostic> diagnostics;

    const Routine* routine_entry(uint64_t entry) const;
    const Routine* routine_containing(uint64_t vaddr) const;
};

// Recursive descent from the entry point and discovered call targets, with a
// linear sweep over code bytes nothing reached. Decode failures are reported
// and skipped, not fatal.
Disassembly disassemble(const BinaryImage& image);

}  // namespace hashswap
