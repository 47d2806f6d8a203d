#pragma once

#include "hashswap/disasm.hpp"
#include "hashswap/executor.hpp"
#include "hashswap/signatures.hpp"

namespace hashswap {

enum class HitContainer { CodeImmediate, DataSection };

struct ConstantHit {
    ConstantSignature signature;
    uint64_t vaddr = 0;
    HitContainer container = HitContainer::DataSection;
};

struct IdentifiedPrimitive {
    uint64_t entry = 0;
    std::string algorithm;
    CallLayout layout = CallLayout::ILO;
    uint32_t digest_size = 0;
    std::vector<uint64_t> call_sites;
};

struct IdentifyDiagnostic {
    uint64_t vaddr = 0;
    Errc code = Errc::Internal;
    std::string message;
};

// Raw pattern matches in data bytes plus matches reassembled from runs of
// instruction immediates (compilers materialize IVs word по word).
std::vector<ConstantHit> scan_constants(const BinaryImage& image, const Disassembly& dis,
                                        const std::vector<ConstantSignature>& signatures);

struct CandidateSet {
    // candidate entry -> plausible algorithms for it
    std::map<uint64_t, std::set<std::string>> candidates;
    std::vector<IdentifyDiagnostic> diagnostics;  // orphan hits
};

CandidateSet locate_candidates(const BinaryImage& image, const Disassembly& dis,
                               const std::vector<ConstantHit>& hits);

// Exactly the 8 (= 3!+2!) parameter orders, in declaration order.
std::vector<CallLayout> enumerate_layouts();

struct VerifyResult {
    std::vector<IdentifiedPrimitive> identified;  // sorted by entry
    std::vector<IdentifyDiagnostic> diagnostics;  // ambiguous bindings etc.
};

VerifyResult verify_candidates(const BinaryImage& image, const Disassembly& dis,
                               const CandidateSet& candidates,
                               const std::vector<CallLayout>& layouts,
                               uint64_t gas = Machine::kGasDefault);

struct IdentificationResult {
    std::vector<IdentifiedPrimitive> identified;
    std::vector<ConstantHit> detection_only;  // non-replaceable primitives
    std::vector<IdentifyDiagnostic> diagnostics;
};

IdentificationResult identify(const BinaryImage& image, const Disassembly& dis,
                              const std::vector<ConstantSignature>& extra_signatures = {},
                              uint64_t gas = Machine::kGasDefault);

}  // namespace hashswap
