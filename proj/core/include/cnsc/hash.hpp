#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace cnsc {

/// FNV-1a over raw bytes; used for config hashes and artifact names.
std::uint64_t fnv1a64(std::string_view bytes);

std::string hex8(std::uint64_t h);   // first eight hex digits
std::string hex16(std::uint64_t h);  // full width

}  // namespace cnsc
