#include "hashswap/disasm.hpp"

#include <algorithm>

namespace hashswap {

const Routine* Disassembly::routine_entry(uint64_t entry) const {
    for (const Routine& r : routines)
        if (r.entry == entry) return &r;
    return nullptr;
}

const Routine* Disassembly::routine_containing(uint64_t vaddr) const {
    for (const Routine& r : routines)
        if (r.contains(vaddr)) return &r;
    return nullptr;
}

namespace {

struct Discovery {
    const BinaryImage& image;
    std::map<uint64_t, Instruction> insns;  // every decoded instruction
    std::set<uint64_t> entries;             // routine entry candidates
    std::set<uint64_t> bad;                 // bytes that failed to decode
    std::vector<DisasmDiagnostic> diagnostics;

    bool decodable_at(uint64_t va) const { return image.in_code(va) && !bad.count(va); }

    const Instruction* decode_at(uint64_t va) {
        auto it = insns.find(va);
        if (it != insns.end()) return &it->second;
        if (!decodable_at(va)) return nullptr;
        const Section* sec = image.section_at(va);
        size_t avail = static_cast<size_t>(sec->vaddr + sec->size - va);
        Bytes buf(std::min<size_t>(avail, 15));
        if (!image.read(va, buf.data(), buf.size())) return nullptr;
        try {
            Instruction ins = decode(buf, va);
            return &insns.emplace(va, std::move(ins)).first->second;
        } catch (const Error& e) {
            bad.insert(va);
            diagnostics.push_back({va, e.what()});
            return nullptr;
        }
    }

    // Follow control flow from `va`, decoding until a terminator.
    void trace_from(uint64_t va) {
        std::vector<uint64_t> work{va};
        while (!work.empty()) {
            uint64_t cur = work.back();
            work.pop_back();
            while (true) {
                if (insns.count(cur) || !decodable_at(cur)) break;
                const Instruction* ins = decode_at(cur);
                if (!ins) break;
                switch (ins->mnem) {
                    case Mn::Ret: case Mn::Ud2: case Mn::Int3: case Mn::Hlt:
                        cur = 0;
                        break;
                    case Mn::Jmp:
                        cur = ins->branch_target;
                        break;
                    case Mn::JmpInd:
                        cur = 0;
                        break;
                    case Mn::Jcc:
                        work.push_back(ins->branch_target);
                        cur = ins->end();
                        break;
                    case Mn::Call:
                        if (image.in_code(ins->branch_target)) {
                            entries.insert(ins->branch_target);
                            work.push_back(ins->branch_target);
                        }
                        cur = ins->end();
                        break;
                    default:
                        cur = ins->end();
                        break;
                }
                if (cur == 0) break;
            }
        }
    }
};

}  // namespace

Disassembly disassemble(const BinaryImage& image) {
    Discovery d{image};
    Disassembly out;

    if (image.in_code(image.entry_point())) {
        d.entries.insert(image.entry_point());
        d.trace_from(image.entry_point());
    }

    // Linear sweep over code bytes the descent never reached, iterating while
    // the sweep keeps surfacing new call targets.
    for (bool changed = true; changed;) {
        changed = false;
        for (const Section& sec : image.sections()) {
            if (sec.kind != SectionKind::Code) continue;
            uint64_t va = sec.vaddr;
            uint64_t end = sec.vaddr + sec.size;
            while (va < end) {
                if (d.insns.count(va)) {
                    va = d.insns[va].end() > va ? d.insns[va].end() : va + 1;
                    continue;
                }
                if (d.bad.count(va)) { va++; continue; }
                size_t before = d.insns.size();
                d.trace_from(va);
                if (d.insns.size() != before) changed = true;
                if (!d.insns.count(va)) va++;  // resync on failure
            }
        }
    }

    // Routine formation: entries are call targets plus the start of any
    // contiguous decoded region not claimed by one.
    std::set<uint64_t> entries = d.entries;
    for (auto& [va, ins] : d.insns) {
        (void)ins;
        bool covered = false;
        uint64_t prev_end = va;
        // covered if the previous instruction flows directly into this one
        auto it = d.insns.lower_bound(va);
        if (it != d.insns.begin()) {
            --it;
            prev_end = it->second.end();
            covered = prev_end == va;
        }
        if (!covered) entries.insert(va);
    }

    std::vector<uint64_t> sorted(entries.begin(), entries.end());
    std::sort(sorted.begin(), sorted.end());

    for (size_t i = 0; i < sorted.size(); i++) {
        uint64_t entry = sorted[i];
        if (!d.insns.count(entry)) continue;
        uint64_t limit = i + 1 < sorted.size() ? sorted[i + 1] : UINT64_MAX;

        // Reachability-bounded extent within [entry, next entry).
        uint64_t extent = entry;
        std::vector<uint64_t> work{entry};
        std::set<uint64_t> seen;
        while (!work.empty()) {
            uint64_t cur = work.back();
            work.pop_back();
            while (cur >= entry && cur < limit && !seen.count(cur)) {
                auto it = d.insns.find(cur);
                if (it == d.insns.end()) break;
                seen.insert(cur);
                const Instruction& ins = it->second;
                extent = std::max(extent, ins.end());
                if (ins.mnem == Mn::Ret || ins.mnem == Mn::Ud2 || ins.mnem == Mn::Int3 ||
                    ins.mnem == Mn::Hlt || ins.mnem == Mn::JmpInd)
                    break;
                if (ins.mnem == Mn::Jmp) { cur = ins.branch_target; continue; }
                if (ins.mnem == Mn::Jcc) work.push_back(ins.branch_target);
                cur = ins.end();
            }
        }

        Routine r;
        r.entry = entry;
        r.start = entry;
        r.end = extent;
        uint64_t expect = entry;
        for (auto it = d.insns.find(entry); it != d.insns.end() && it->first < extent; ++it) {
            if (it->first != expect) r.unverifiable = true;  // hole from a resync
            r.instructions.push_back(it->second);
            expect = it->second.end();
        }
        if (!r.instructions.empty()) out.routines.push_back(std::move(r));
    }

    for (const Routine& r : out.routines) out.graph.nodes.insert(r.entry);
    for (const Routine& r : out.routines)
        for (const Instruction& ins : r.instructions)
            if (ins.mnem == Mn::Call && image.in_code(ins.branch_target))
                out.graph.edges.push_back({r.entry, ins.branch_target, ins.vaddr});

    out.diagnostics = std::move(d.diagnostics);
    std::sort(out.routines.begin(), out.routines.end(),
              [](const Routine& a, const Routine& b) { return a.entry < b.entry; });
    return out;
}

}  // namespace hashswap
