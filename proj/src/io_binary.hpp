#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "uegs/io.hpp"

namespace uegs::detail {

/// Append/consume little-endian scalars on a byte buffer. Offsets are
/// tracked so parse errors can report where the file went wrong.
class ByteWriter {
public:
    std::vector<std::uint8_t> bytes;

    void u8(std::uint8_t v) { bytes.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void magic(const char (&m)[5]) {
        bytes.insert(bytes.end(), m, m + 4);
    }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes.insert(bytes.end(), s.begin(), s.end());
    }
};

class ByteReader {
public:
    ByteReader(const std::uint8_t* data, std::size_t size, std::string source)
        : data_(data), size_(size), source_(std::move(source)) {}

    std::size_t offset() const { return offset_; }

    void need(std::size_t n, const char* field) const {
        if (offset_ + n > size_) {
            throw ParseError(source_ + ": truncated reading " + field + " at byte " +
                             std::to_string(offset_));
        }
    }
    std::uint8_t u8(const char* field) {
        need(1, field);
        return data_[offset_++];
    }
    std::uint32_t u32(const char* field) {
        need(4, field);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[offset_ + i]) << (8 * i);
        offset_ += 4;
        return v;
    }
    std::uint64_t u64(const char* field) {
        need(8, field);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[offset_ + i]) << (8 * i);
        offset_ += 8;
        return v;
    }
    std::int32_t i32(const char* field) { return static_cast<std::int32_t>(u32(field)); }
    float f32(const char* field) { return std::bit_cast<float>(u32(field)); }
    double f64(const char* field) { return std::bit_cast<double>(u64(field)); }
    void magic(const char (&expected)[5]) {
        need(4, "magic");
        if (std::memcmp(data_ + offset_, expected, 4) != 0) {
            throw ParseError(source_ + ": bad magic at byte 0, expected " + expected);
        }
        offset_ += 4;
    }
    std::string str(const char* field) {
        const std::uint32_t n = u32(field);
        need(n, field);
        std::string s(reinterpret_cast<const char*>(data_ + offset_), n);
        offset_ += n;
        return s;
    }
    void expect_end() const {
        if (offset_ != size_) {
            throw ParseError(source_ + ": " + std::to_string(size_ - offset_) +
                             " trailing bytes at byte " + std::to_string(offset_));
        }
    }
    const std::string& source() const { return source_; }

private:
    const std::uint8_t* data_;
    std::size_t size_;
    std::size_t offset_ = 0;
    std::string source_;
};

} // namespace uegs::detail
