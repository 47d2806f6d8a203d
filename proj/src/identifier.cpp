#include "hashswap/identifier.hpp"

#include <algorithm>

namespace hashswap {

namespace {

void find_pattern(ByteView hay, uint64_t base, const ConstantSignature& sig,
                  HitContainer container, std::vector<ConstantHit>& out) {
    const Bytes& pat = sig.byte_pattern;
    if (pat.empty() || hay.size() < pat.size()) return;
    for (size_t i = 0; i + pat.size() <= hay.size(); i++) {
        if (std::memcmp(hay.data() + i, pat.data(), pat.size()) == 0)
            out.push_back({sig, base + i, container});
    }
}

}  // namespace

std::vector<ConstantHit> scan_constants(const BinaryImage& image, const Disassembly& dis,
                                        const std::vector<ConstantSignature>& signatures) {
    std::vector<ConstantHit> hits;

    // Raw byte scan over every allocatable section with file contents.
    for (const Section& sec : image.sections()) {
        if (sec.kind == SectionKind::Bss || sec.kind == SectionKind::Other || sec.size == 0)
            continue;
        auto off = image.vaddr_to_offset(sec.vaddr);
        if (!off) continue;
        ByteView view(image.bytes().data() + *off, sec.size);
        HitContainer c = sec.kind == SectionKind::Code ? HitContainer::CodeImmediate
                                                       : HitContainer::DataSection;
        for (const ConstantSignature& sig : signatures) find_pattern(view, sec.vaddr, sig, c, hits);
    }

    // Immediate-stream scan: concatenate the immediates of each routine in
    // address order and match inside that stream, so an IV materialized as
    // several consecutive `mov` immediates is still one hit.
    for (const Routine& r : dis.routines) {
        Bytes stream;
        std::vector<uint64_t> owner;  // per stream byte, contributing insn vaddr
        for (const Instruction& ins : r.instructions) {
            for (uint8_t i = 0; i < ins.op_count; i++) {
                const Operand& op = ins.ops[i];
                if (op.kind != OpKind::Imm) continue;
                if (ins.has_branch_target()) continue;
                uint8_t n = std::min<uint8_t>(op.size, 8);
                for (uint8_t k = 0; k < n; k++) {
                    stream.push_back(static_cast<uint8_t>(op.imm >> (8 * k)));
                    owner.push_back(ins.vaddr);
                }
            }
        }
        for (const ConstantSignature& sig : signatures) {
            const Bytes& pat = sig.byte_pattern;
            if (pat.empty() || stream.size() < pat.size()) continue;
            for (size_t i = 0; i + pat.size() <= stream.size(); i++) {
                if (std::memcmp(stream.data() + i, pat.data(), pat.size()) != 0) continue;
                hits.push_back({sig, owner[i], HitContainer::CodeImmediate});
                break;  // one immediate-stream hit per signature per routine
            }
        }
    }

    std::sort(hits.begin(), hits.end(), [](const ConstantHit& a, const ConstantHit& b) {
        if (a.vaddr != b.vaddr) return a.vaddr < b.vaddr;
        return a.signature.algorithm < b.signature.algorithm;
    });
    hits.erase(std::unique(hits.begin(), hits.end(),
                           [](const ConstantHit& a, const ConstantHit& b) {
                               return a.vaddr == b.vaddr &&
                                      a.signature.algorithm == b.signature.algorithm &&
                                      a.signature.byte_pattern == b.signature.byte_pattern;
                           }),
               hits.end());
    return hits;
}

namespace {

// Routines whose instructions reference any address in [lo, hi).
std::vector<uint64_t> referencing_routines(const Disassembly& dis, uint64_t lo, uint64_t hi) {
    std::vector<uint64_t> out;
    for (const Routine& r : dis.routines) {
        bool refs = false;
        for (const Instruction& ins : r.instructions) {
            for (uint8_t i = 0; i < ins.op_count && !refs; i++) {
                const Operand& op = ins.ops[i];
                if (op.kind == OpKind::Imm && !ins.has_branch_target()) {
                    uint64_t v = static_cast<uint64_t>(op.imm);
                    if (v >= lo && v < hi) refs = true;
                } else if (op.kind == OpKind::Mem) {
                    if (op.mem.rip_relative) {
                        uint64_t t = ins.end() + static_cast<uint64_t>(op.mem.disp);
                        if (t >= lo && t < hi) refs = true;
                    } else {
                        uint64_t d = static_cast<uint64_t>(op.mem.disp);
                        if (d >= lo && d < hi) refs = true;
                    }
                }
            }
            if (refs) break;
        }
        if (refs) out.push_back(r.entry);
    }
    return out;
}

}  // namespace

CandidateSet locate_candidates(const BinaryImage& image, const Disassembly& dis,
                               const std::vector<ConstantHit>& hits) {
    (void)image;
    CandidateSet out;
    for (const ConstantHit& hit : hits) {
        std::vector<uint64_t> enclosing;
        if (hit.container == HitContainer::CodeImmediate) {
            const Routine* r = dis.routine_containing(hit.vaddr);
            if (r) enclosing.push_back(r->entry);
        } else {
            enclosing = referencing_routines(dis, hit.vaddr,
                                             hit.vaddr + hit.signature.byte_pattern.size());
        }
        if (enclosing.empty()) {
            out.diagnostics.push_back({hit.vaddr, Errc::OrphanHit,
                                       hit.signature.algorithm +
                                           " constant not referenced by any decoded routine"});
            continue;
        }
        std::set<std::string> algos{hit.signature.algorithm};
        for (const std::string& p : ambiguity_partners(hit.signature.algorithm)) algos.insert(p);
        for (uint64_t e : enclosing) {
            out.candidates[e].insert(algos.begin(), algos.end());
            for (uint64_t caller : dis.graph.callers_of(e))
                out.candidates[caller].insert(algos.begin(), algos.end());
        }
    }
    return out;
}

std::vector<CallLayout> enumerate_layouts() {
    return {CallLayout::ILO, CallLayout::IOL, CallLayout::LIO, CallLayout::LOI,
            CallLayout::OIL, CallLayout::OLI, CallLayout::IO, CallLayout::OI};
}

namespace {

// The two-argument orders are register prefixes of exactly one
// three-argument order: a length-less routine matches both.
bool subsumes(CallLayout two, CallLayout three) {
    return (two == CallLayout::OI && three == CallLayout::OIL) ||
           (two == CallLayout::IO && three == CallLayout::IOL);
}

}  // namespace

VerifyResult verify_candidates(const BinaryImage& image, const Disassembly& dis,
                               const CandidateSet& candidates,
                               const std::vector<CallLayout>& layouts, uint64_t gas) {
    VerifyResult out;
    for (const auto& [entry, algos] : candidates.candidates) {
        struct Match {
            std::string algorithm;
            CallLayout layout;
        };
        std::vector<Match> matches;
        for (const std::string& algo : algos) {
            if (!has_hash_profile(algo)) continue;
            const HashProfile& prof = hash_profile(algo);
            for (CallLayout layout : layouts) {
                RoutineRun run = run_routine(image, entry, layout, prof.test_input, gas);
                if (!run.ok) continue;
                if (std::memcmp(run.output.data(), prof.expected_digest.data(),
                                prof.digest_size) == 0)
                    matches.push_back({algo, layout});
            }
        }
        if (matches.empty()) continue;

        std::set<std::string> match_algos;
        for (const Match& m : matches) match_algos.insert(m.algorithm);
        if (match_algos.size() > 1) {
            out.diagnostics.push_back({entry, Errc::AmbiguousBinding,
                                       "candidate matches more than one algorithm"});
            continue;
        }
        CallLayout chosen;
        if (matches.size() == 1) {
            chosen = matches[0].layout;
        } else if (matches.size() == 2 && (subsumes(matches[0].layout, matches[1].layout) ||
                                           subsumes(matches[1].layout, matches[0].layout))) {
            // a 2-parameter routine ignores the extra length register; bind
            // the 2-parameter order
            chosen = layout_arity(matches[0].layout) == 2 ? matches[0].layout : matches[1].layout;
        } else {
            out.diagnostics.push_back({entry, Errc::AmbiguousBinding,
                                       "candidate matches under multiple parameter orders"});
            continue;
        }
        IdentifiedPrimitive prim;
        prim.entry = entry;
        prim.algorithm = *match_algos.begin();
        prim.layout = chosen;
        prim.digest_size = hash_profile(prim.algorithm).digest_size;
        prim.call_sites = dis.graph.call_sites_of(entry);
        std::sort(prim.call_sites.begin(), prim.call_sites.end());
        out.identified.push_back(std::move(prim));
    }
    std::sort(out.identified.begin(), out.identified.end(),
              [](const IdentifiedPrimitive& a, const IdentifiedPrimitive& b) {
                  return a.entry < b.entry;
              });
    return out;
}

IdentificationResult identify(const BinaryImage& image, const Disassembly& dis,
                              const std::vector<ConstantSignature>& extra_signatures,
                              uint64_t gas) {
    std::vector<ConstantSignature> sigs = builtin_signatures();
    sigs.insert(sigs.end(), extra_signatures.begin(), extra_signatures.end());

    std::vector<ConstantHit> hits = scan_constants(image, dis, sigs);
    IdentificationResult res;
    std::vector<ConstantHit> hash_hits;
    for (ConstantHit& h : hits) {
        if (has_hash_profile(h.signature.algorithm)) hash_hits.push_back(h);
        else res.detection_only.push_back(h);
    }

    CandidateSet cands = locate_candidates(image, dis, hash_hits);
    res.diagnostics = cands.diagnostics;
    VerifyResult vr = verify_candidates(image, dis, cands, enumerate_layouts(), gas);
    res.identified = std::move(vr.identified);
    for (IdentifyDiagnostic& d : vr.diagnostics) res.diagnostics.push_back(std::move(d));
    return res;
}

}  // namespace hashswap
