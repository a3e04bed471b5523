#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

#include <boost/crc.hpp>

namespace cqrank {

/// CRC-64/XZ. Used for the trailing checksum of binary artifacts and for
/// dataset and config digests.
using Crc64 = boost::crc_optimal<64, 0x42F0E1EBA9EA3693ULL, ~0ULL, ~0ULL, true, true>;

inline void crc_update(Crc64& crc, std::span<const std::byte> bytes) {
    crc.process_bytes(bytes.data(), bytes.size());
}

inline void crc_update(Crc64& crc, std::string_view text) {
    crc.process_bytes(text.data(), text.size());
}

std::uint64_t crc64(std::span<const std::byte> bytes);
std::uint64_t crc64(std::string_view text);

/// 16 lowercase hex digits.
std::string to_hex(std::uint64_t value);

/// CRC-64 of a whole file, hex encoded.
std::string file_digest(const std::filesystem::path& path);

}  // namespace cqrank
