#include "hashswap/common.hpp"

#include <cstdio>
#include <fstream>

namespace hashswap {

const char* errc_name(Errc c) {
    switch (c) {
        case Errc::MalformedElf: return "MalformedElf";
        case Errc::TruncatedFile: return "TruncatedFile";
        case Errc::UndecodableInstruction: return "UndecodableInstruction";
        case Errc::EncodingUnsupported: return "EncodingUnsupported";
        case Errc::UnknownAlgorithm: return "UnknownAlgorithm";
        case Errc::GasExhausted: return "GasExhausted";
        case Errc::MemoryFault: return "MemoryFault";
        case Errc::UnsupportedInstruction: return "UnsupportedInstruction";
        case Errc::UnresolvedExternalCall: return "UnresolvedExternalCall";
        case Errc::ModelMissing: return "ModelMissing";
        case Errc::TargetNeverCalled: return "TargetNeverCalled";
        case Errc::OrphanHit: return "OrphanHit";
        case Errc::AmbiguousBinding: return "AmbiguousBinding";
        case Errc::DisplacementOverflow: return "DisplacementOverflow";
        case Errc::OffsetInsideExpandedTail: return "OffsetInsideExpandedTail";
        case Errc::NoPrologueFound: return "NoPrologueFound";
        case Errc::NonImmediateAllocationSize: return "NonImmediateAllocationSize";
        case Errc::AmbiguousImmediate: return "AmbiguousImmediate";
        case Errc::RoutineTooSmall: return "RoutineTooSmall";
        case Errc::StaleEdit: return "StaleEdit";
        case Errc::ReportMismatch: return "ReportMismatch";
        case Errc::BadInput: return "BadInput";
        case Errc::Internal: return "Internal";
    }
    return "Unknown";
}

std::string to_hex(ByteView data) {
    static const char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve(data.size() * 2);
    for (uint8_t b : data) {
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 0xf]);
    }
    return out;
}

static int hex_nibble(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

Bytes from_hex(const std::string& hex) {
    if (hex.size() % 2 != 0) fail(Errc::BadInput, "odd-length hex string");
    Bytes out;
    out.reserve(hex.size() / 2);
    for (size_t i = 0; i < hex.size(); i += 2) {
        int hi = hex_nibble(hex[i]), lo = hex_nibble(hex[i + 1]);
        if (hi < 0 || lo < 0) fail(Errc::BadInput, "bad hex digit in '" + hex + "'");
        out.push_back(static_cast<uint8_t>(hi << 4 | lo));
    }
    return out;
}

std::string hex_addr(uint64_t v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%llx", static_cast<unsigned long long>(v));
    return buf;
}

uint64_t parse_hex_u64(const std::string& s) {
    if (s.empty()) fail(Errc::BadInput, "empty hex value");
    uint64_t v = 0;
    size_t i = (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) ? 2 : 0;
    if (i == s.size()) fail(Errc::BadInput, "empty hex value");
    for (; i < s.size(); i++) {
        int n = hex_nibble(s[i]);
        if (n < 0) fail(Errc::BadInput, "bad hex value '" + s + "'");
        v = v << 4 | static_cast<uint64_t>(n);
    }
    return v;
}

Bytes read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail(Errc::BadInput, "cannot open " + path);
    Bytes data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return data;
}

void write_file(const std::string& path, ByteView data) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) fail(Errc::BadInput, "cannot open " + path + " for writing");
    f.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size()));
    if (!f) fail(Errc::BadInput, "short write to " + path);
}

}  // namespace hashswap
