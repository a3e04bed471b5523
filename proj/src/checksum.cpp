#include "cqrank/checksum.hpp"

#include <array>
#include <cstdio>
#include <fstream>

#include "cqrank/error.hpp"

namespace cqrank {

std::uint64_t crc64(std::span<const std::byte> bytes) {
    Crc64 crc;
    crc_update(crc, bytes);
    return crc.checksum();
}

std::uint64_t crc64(std::string_view text) {
    Crc64 crc;
    crc_update(crc, text);
    return crc.checksum();
}

std::string to_hex(std::uint64_t value) {
    std::array<char, 17> buf{};
    std::snprintf(buf.data(), buf.size(), "%016llx", static_cast<unsigned long long>(value));
    return std::string(buf.data(), 16);
}

std::string file_digest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open " + path.string());
    Crc64 crc;
    std::array<char, 1 << 16> buf;
    while (in) {
        in.read(buf.data(), buf.size());
        crc.process_bytes(buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    return to_hex(crc.checksum());
}

}  // namespace cqrank
