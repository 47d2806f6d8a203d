#pragma once

#include <string>
#include <vector>

#include "hashswap/common.hpp"

namespace hashswap {

enum class SigKind { IV, SBox, MagicConstant, PrimeBasePoint };

const char* sig_kind_name(SigKind k);

struct ConstantSignature {
    std::string algorithm;
    SigKind kind = SigKind::IV;
    Bytes byte_pattern;  // in-memory byte order, >= 4 bytes
    std::vector<std::string> ambiguous_with;
};

struct HashProfile {
    std::string algorithm;
    uint32_t digest_size = 0;
    uint32_t block_size = 0;
    Bytes test_input;
    Bytes expected_digest;
    bool replaceable = false;
};

// The built-in constant table. Hash-function entries are replace targets;
// block ciphers and curves are detection-only.
const std::vector<ConstantSignature>& builtin_signatures();

// Throws Error(UnknownAlgorithm) for algorithms without a profile
// (detection-only primitives have none).
const HashProfile& hash_profile(const std::string& algorithm);
bool has_hash_profile(const std::string& algorithm);
const std::vector<HashProfile>& all_hash_profiles();

// Algorithms that share constants with `algorithm`, closed symmetrically
// over the whole signature table.
std::vector<std::string> ambiguity_partners(const std::string& algorithm);

// Extension file: one signature per line, `<algorithm> <kind> <hex-bytes>`.
// Built-in patterns cannot be overridden; a clashing line is an error.
std::vector<ConstantSignature> load_signature_file(const std::string& path);

}  // namespace hashswap
