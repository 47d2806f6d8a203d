#pragma once

#include "hashswap/common.hpp"

namespace hashswap {

Bytes sha256(ByteView data);
inline std::string sha256_hex(ByteView data) { return to_hex(sha256(data)); }

}  // namespace hashswap
