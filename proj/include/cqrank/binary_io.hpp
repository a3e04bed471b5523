#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <string_view>
#include <type_traits>

#include "cqrank/checksum.hpp"
#include "cqrank/error.hpp"

namespace cqrank::detail {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

/// Output stream that feeds every written byte into a running CRC-64.
class ChecksummedWriter {
public:
    explicit ChecksummedWriter(std::ofstream& out) : out_(out) {}

    void bytes(const void* data, std::size_t n) {
        out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
        crc_.process_bytes(data, n);
    }

    template <typename T>
        requires std::is_arithmetic_v<T>
    void scalar(T value) {
        bytes(&value, sizeof(T));
    }

    /// Appends the checksum of everything written so far.
    std::uint64_t finish() {
        std::uint64_t sum = crc_.checksum();
        out_.write(reinterpret_cast<const char*>(&sum), sizeof(sum));
        return sum;
    }

private:
    std::ofstream& out_;
    Crc64 crc_;
};

/// Input counterpart; reports the byte offset of truncation.
class ChecksummedReader {
public:
    ChecksummedReader(std::ifstream& in, std::string name) : in_(in), name_(std::move(name)) {}

    void bytes(void* data, std::size_t n) {
        in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n)
            throw FormatError(name_ + ": truncated at byte offset " +
                              std::to_string(offset_ + static_cast<std::size_t>(in_.gcount())) + " (needed " +
                              std::to_string(n) + " bytes at offset " + std::to_string(offset_) + ")");
        crc_.process_bytes(data, n);
        offset_ += n;
    }

    template <typename T>
        requires std::is_arithmetic_v<T>
    T scalar() {
        T value;
        bytes(&value, sizeof(T));
        return value;
    }

    /// Reads the trailer and compares it against the running checksum.
    std::uint64_t verify_trailer() {
        std::uint64_t expected = crc_.checksum();
        std::uint64_t stored = scalar<std::uint64_t>();
        if (stored != expected)
            throw FormatError(name_ + ": checksum mismatch (stored " + to_hex(stored) + ", computed " +
                              to_hex(expected) + ")");
        if (in_.peek() != std::char_traits<char>::eof())
            throw FormatError(name_ + ": trailing bytes after checksum at offset " + std::to_string(offset_));
        return stored;
    }

    std::size_t offset() const { return offset_; }
    const std::string& name() const { return name_; }

private:
    std::ifstream& in_;
    std::string name_;
    Crc64 crc_;
    std::size_t offset_ = 0;
};

}  // namespace cqrank::detail
