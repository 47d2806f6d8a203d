#include "hashswap/signatures.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace hashswap {

const char* sig_kind_name(SigKind k) {
    switch (k) {
        case SigKind::IV: return "IV";
        case SigKind::SBox: return "SBox";
        case SigKind::MagicConstant: return "MagicConstant";
        case SigKind::PrimeBasePoint: return "PrimeBasePoint";
    }
    return "?";
}

namespace {

ConstantSignature sig(std::string algo, SigKind kind, const char* hex,
                      std::vector<std::string> ambiguous = {}) {
    return {std::move(algo), kind, from_hex(hex), std::move(ambiguous)};
}

std::vector<ConstantSignature> make_builtins() {
    std::vector<ConstantSignature> v;
    // Hash functions. Patterns are the constants as они sit in memory:
    // little-endian word order for IVs, table order for S-boxes.
    v.push_back(sig("MD2", SigKind::SBox, "292e43c9a2d87c013d3654a1ecf00613"));
    v.push_back(sig("MD5", SigKind::IV, "0123456789abcdeffedcba9876543210", {"MD4"}));
    v.push_back(sig("SHA1", SigKind::IV,
                    "0123456789abcdeffedcba9876543210f0e1d2c3", {"RIPEMD-160"}));
    v.push_back(sig("SHA-256", SigKind::IV,
                    "67e6096a85ae67bb72f36e3c3af54fa57f520e518c68059babd9831f19cde05b",
                    {"BLAKE2s"}));
    v.push_back(sig("SHA-512", SigKind::IV,
                    "08c9bcf367e6096a3ba7ca8485ae67bb2bf894fe72f36e3cf1361d5f3af54fa5"
                    "d182e6ad7f520e511f6c3e2b8c68059b6bbd41fbabd9831f79217e1319cde05b",
                    {"BLAKE2b"}));
    // RIPEMD-160 shares the SHA1 IV; its right-lane round constants are the
    // distinguishing pattern.
    v.push_back(sig("RIPEMD-160", SigKind::MagicConstant, "e68ba250"));
    v.push_back(sig("RIPEMD-160", SigKind::MagicConstant, "e9766d7a"));
    // Block ciphers, detection only.
    v.push_back(sig("RC2", SigKind::SBox, "d978f9c419ddb5ed28e9fd794aa0d89d"));
    v.push_back(sig("RC5", SigKind::MagicConstant, "6b2aed8a6251e1b7"));
    v.push_back(sig("Blowfish", SigKind::SBox, "886a3f24d308a3852e8a191344737003"));
    v.push_back(sig("DES", SigKind::SBox, "0e040d01020f0b08030a060c05090007"));
    v.push_back(sig("DES", SigKind::SBox, "0008080200000800020000020208080202000800"));
    v.push_back(sig("AES", SigKind::SBox, "637c777bf26b6fc53001672bfed7ab76"));
    // Elliptic curves, detection only: base point x coordinates.
    v.push_back(sig("NIST-P192", SigKind::PrimeBasePoint, "188da80eb03090f67cbf20eb43a18800"));
    v.push_back(sig("NIST-P224", SigKind::PrimeBasePoint, "b70e0cbd6bb4bf7f321390b94a03c1d3"));
    v.push_back(sig("NIST-P256", SigKind::PrimeBasePoint, "6b17d1f2e12c4247f8bce6e563a440f2"));
    v.push_back(sig("NIST-P384", SigKind::PrimeBasePoint, "aa87ca22be8b05378eb1c71ef320ad74"));
    v.push_back(sig("NIST-P521", SigKind::PrimeBasePoint, "c6858e06b70404e9cd9e3ecb662395b4"));
    return v;
}

std::vector<HashProfile> make_profiles() {
    const char* input = "Hello, world!";
    Bytes test(input, input + 13);
    auto prof = [&](std::string algo, uint32_t digest, uint32_t block, const char* hex,
                    bool replaceable) {
        return HashProfile{std::move(algo), digest, block, test, from_hex(hex), replaceable};
    };
    // Expected digests are frozen released values, checked against
    // independent reference implementations by the test suite.
    std::vector<HashProfile> v;
    v.push_back(prof("MD2", 16, 16, "8cca0e965edd0e223b744f9cedf8e141", true));
    v.push_back(prof("MD4", 16, 64, "0abe9ee1f376caa1bcecad9042f16e73", true));
    v.push_back(prof("MD5", 16, 64, "6cd3556deb0da54bca060b4c39479839", true));
    v.push_back(prof("SHA1", 20, 64, "943a702d06f34599aee1f8da8ef9f7296031d699", true));
    v.push_back(prof("RIPEMD-160", 20, 64, "58262d1fbdbe4530d8865d3518c6d6e41002610f", true));
    v.push_back(prof("SHA-256", 32, 64,
                     "315f5bdb76d078c43b8ac0064e4a0164612b1fce77c869345bfc94c75894edd3", true));
    v.push_back(prof("SHA-512", 64, 128,
                     "c1527cd893c124773d811911970c8fe6e857d6df5dc9226bd8a160614c0cd963"
                     "a4ddea2b94bb7d36021ef9d865d5cea294a82dd49a0bb269f51f6e7a57f79421",
                     true));
    v.push_back(prof("BLAKE2s", 32, 64,
                     "30d8777f0e178582ec8cd2fcdc18af57c828ee2f89e978df52c8e7af078bd5cf", true));
    v.push_back(prof("BLAKE2b", 64, 128,
                     "a2764d133a16816b5847a737a786f2ece4c148095c5faa73e24b4cc5d666c3e4"
                     "5ec271504e14dc6127ddfce4e144fb23b91a6f7b04b53d695502290722953b0f",
                     true));
    return v;
}

}  // namespace

const std::vector<ConstantSignature>& builtin_signatures() {
    static const std::vector<ConstantSignature> v = make_builtins();
    return v;
}

const std::vector<HashProfile>& all_hash_profiles() {
    static const std::vector<HashProfile> v = make_profiles();
    return v;
}

bool has_hash_profile(const std::string& algorithm) {
    for (const HashProfile& p : all_hash_profiles())
        if (p.algorithm == algorithm) return true;
    return false;
}

const HashProfile& hash_profile(const std::string& algorithm) {
    for (const HashProfile& p : all_hash_profiles())
        if (p.algorithm == algorithm) return p;
    fail(Errc::UnknownAlgorithm, "no profile for " + algorithm);
}

std::vector<std::string> ambiguity_partners(const std::string& algorithm) {
    std::set<std::string> out;
    for (const ConstantSignature& s : builtin_signatures()) {
        if (s.algorithm == algorithm)
            out.insert(s.ambiguous_with.begin(), s.ambiguous_with.end());
        for (const std::string& p : s.ambiguous_with)
            if (p == algorithm) out.insert(s.algorithm);
    }
    out.erase(algorithm);
    return {out.begin(), out.end()};
}

std::vector<ConstantSignature> load_signature_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) fail(Errc::BadInput, "cannot open signature file " + path);
    std::vector<ConstantSignature> out;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        lineno++;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        std::string algo, kind_s, hex;
        if (!(ss >> algo >> kind_s >> hex))
            fail(Errc::BadInput, path + ":" + std::to_string(lineno) + ": expected"
                 " '<algorithm> <kind> <hex-bytes>'");
        SigKind kind;
        if (kind_s == "IV") kind = SigKind::IV;
        else if (kind_s == "SBox") kind = SigKind::SBox;
        else if (kind_s == "MagicConstant") kind = SigKind::MagicConstant;
        else if (kind_s == "PrimeBasePoint") kind = SigKind::PrimeBasePoint;
        else fail(Errc::BadInput, path + ":" + std::to_string(lineno) + ": unknown kind " + kind_s);
        Bytes pattern = from_hex(hex);
        if (pattern.size() < 4)
            fail(Errc::BadInput, path + ":" + std::to_string(lineno) + ": pattern under 4 bytes");
        for (const ConstantSignature& b : builtin_signatures())
            if (b.byte_pattern == pattern)
                fail(Errc::BadInput, path + ":" + std::to_string(lineno) +
                     ": pattern already owned by built-in " + b.algorithm);
        out.push_back({algo, kind, std::move(pattern), {}});
    }
    return out;
}

}  // namespace hashswap
