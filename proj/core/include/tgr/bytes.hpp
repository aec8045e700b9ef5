#pragma once

#include "tgr/error.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace tgr {

/// Append-only little-endian encoder.
class ByteWriter {
public:
    void u8(std::uint8_t v) { bytes_.push_back(v); }
    void u16(std::uint16_t v) { raw(&v, sizeof v); }
    void u32(std::uint32_t v) { raw(&v, sizeof v); }
    void u64(std::uint64_t v) { raw(&v, sizeof v); }
    void f32(float v) { raw(&v, sizeof v); }
    void f32s(std::span<const float> v) { raw(v.data(), v.size_bytes()); }
    void magic(std::string_view m) { raw(m.data(), m.size()); }
    void bytes(std::string_view s) { raw(s.data(), s.size()); }
    /// u32 length followed by the bytes.
    void string(std::string_view s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s);
    }

    const std::vector<std::uint8_t>& data() const noexcept { return bytes_; }
    std::vector<std::uint8_t> take() { return std::move(bytes_); }

private:
    void raw(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        bytes_.insert(bytes_.end(), b, b + n);
    }
    std::vector<std::uint8_t> bytes_;
};

/// Bounds-checked little-endian decoder; throws ParseError on truncation.
class ByteReader {
public:
    ByteReader(std::span<const std::uint8_t> data, std::string source)
        : data_(data), source_(std::move(source)) {}

    std::uint8_t u8() { return scalar<std::uint8_t>(); }
    std::uint16_t u16() { return scalar<std::uint16_t>(); }
    std::uint32_t u32() { return scalar<std::uint32_t>(); }
    std::uint64_t u64() { return scalar<std::uint64_t>(); }
    float f32() { return scalar<float>(); }

    void f32s(std::span<float> out) {
        need(out.size_bytes(), "float block");
        std::memcpy(out.data(), data_.data() + pos_, out.size_bytes());
        pos_ += out.size_bytes();
    }
    std::vector<float> f32s(std::size_t n) {
        std::vector<float> v(n);
        f32s(std::span<float>(v));
        return v;
    }
    std::string bytes(std::size_t n) {
        need(n, "byte string");
        std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    std::string string() { return bytes(u32()); }
    void expect_magic(std::string_view magic) {
        if (bytes(magic.size()) != magic)
            throw ParseError(source_ + ": bad magic, expected '" + std::string(magic) + "'");
    }
    std::string rest() { return bytes(remaining()); }

    std::size_t remaining() const noexcept { return data_.size() - pos_; }
    std::size_t position() const noexcept { return pos_; }
    const std::string& source() const noexcept { return source_; }

private:
    template <class T>
    T scalar() {
        need(sizeof(T), "scalar");
        T v;
        std::memcpy(&v, data_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    void need(std::size_t n, const char* what) {
        if (remaining() < n)
            throw ParseError(source_ + ": truncated " + what + " at byte " + std::to_string(pos_));
    }

    std::span<const std::uint8_t> data_;
    std::string source_;
    std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes);

} // namespace tgr
