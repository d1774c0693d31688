#pragma once

// Little-endian encoding helpers shared by the binary file formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <vector>

#include "thermofuse/error.hpp"

namespace thermofuse::binary {

class Writer {
public:
    void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }

    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

    const std::vector<char>& data() const noexcept { return buf_; }
    std::string str() const { return {buf_.begin(), buf_.end()}; }

private:
    std::vector<char> buf_;
};

class Reader {
public:
    explicit Reader(std::string_view data) : data_(data) {}

    std::uint64_t offset() const noexcept { return pos_; }
    std::uint64_t remaining() const noexcept { return data_.size() - pos_; }

    void expect(std::string_view magic, const char* what) {
        need(magic.size(), what);
        if (data_.substr(pos_, magic.size()) != magic) {
            throw FormatError(std::string("bad magic for ") + what, pos_);
        }
        pos_ += magic.size();
    }

    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(byte(pos_ + i)) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64(const char* what) {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(byte(pos_ + i)) << (8 * i);
        pos_ += 8;
        return v;
    }
    float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
    double f64(const char* what) { return std::bit_cast<double>(u64(what)); }

    void need(std::uint64_t n, const char* what) const {
        if (remaining() < n) {
            throw FormatError(std::string("truncated ") + what + ": need " + std::to_string(n) +
                                  " bytes, have " + std::to_string(remaining()),
                              pos_);
        }
    }

    void expect_end(const char* what) const {
        if (remaining() != 0) {
            throw FormatError(std::to_string(remaining()) + " trailing bytes after " + what, pos_);
        }
    }

private:
    unsigned char byte(std::uint64_t at) const { return static_cast<unsigned char>(data_[at]); }

    std::string_view data_;
    std::uint64_t pos_ = 0;
};

}  // namespace thermofuse::binary
