#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hashswap {

using Bytes = std::vector<uint8_t>;
using ByteView = std::span<const uint8_t>;

// Every failure mode named by the toolchain's contracts. Carried inside
// Error so callers can dispatch without string matching.
enum class Errc {
    MalformedElf,
    TruncatedFile,
    UndecodableInstruction,
    EncodingUnsupported,
    UnknownAlgorithm,
    GasExhausted,
    MemoryFault,
    UnsupportedInstruction,
    UnresolvedExternalCall,
    ModelMissing,
    TargetNeverCalled,
    OrphanHit,
    AmbiguousBinding,
    DisplacementOverflow,
    OffsetInsideExpandedTail,
    NoPrologueFound,
    NonImmediateAllocationSize,
    AmbiguousImmediate,
    RoutineTooSmall,
    StaleEdit,
    ReportMismatch,
    BadInput,
    Internal,
};

const char* errc_name(Errc c);

class Error : public std::runtime_error {
public:
    Error(Errc code, std::string msg)
        : std::runtime_error(std::string(errc_name(code)) + ": " + msg), code_(code) {}
    Errc code() const { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& msg) { throw Error(code, msg); }

std::string to_hex(ByteView data);
Bytes from_hex(const std::string& hex);
std::string hex_addr(uint64_t v);           // lowercase, no 0x
uint64_t parse_hex_u64(const std::string& s);

Bytes read_file(const std::string& path);
void write_file(const std::string& path, ByteView data);

inline uint64_t align_up(uint64_t v, uint64_t a) { return (v + a - 1) & ~(a - 1); }

template <typename T>
T read_le(ByteView data, size_t off) {
    if (off + sizeof(T) > data.size())
        fail(Errc::TruncatedFile, "read past end at offset " + std::to_string(off));
    T v;
    std::memcpy(&v, data.data() + off, sizeof(T));
    return v;
}

template <typename T>
void write_le(Bytes& data, size_t off, T v) {
    if (off + sizeof(T) > data.size()) data.resize(off + sizeof(T));
    std::memcpy(data.data() + off, &v, sizeof(T));
}

template <typename T>
void append_le(Bytes& data, T v) {
    size_t off = data.size();
    data.resize(off + sizeof(T));
    std::memcpy(data.data() + off, &v, sizeof(T));
}

}  // namespace hashswap
