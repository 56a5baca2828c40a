#pragma once

// Little-endian byte encoding shared by the checkpoint and dataset formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>

#include "cunet/errors.hpp"

namespace cunet::io {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

class ByteWriter {
public:
    void bytes(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
    void tag(std::string_view magic) { buf_.append(magic); }
    template <class T>
    void pod(T v) {
        bytes(&v, sizeof(T));
    }
    void u32(std::uint32_t v) { pod(v); }
    void u64(std::uint64_t v) { pod(v); }
    void str(std::string_view s) {
        u32(static_cast<std::uint32_t>(s.size()));
        buf_.append(s);
    }

    const std::string& buffer() const noexcept { return buf_; }
    std::string take() { return std::move(buf_); }

private:
    std::string buf_;
};

class ByteReader {
public:
    explicit ByteReader(std::string_view data) : data_(data) {}

    std::uint64_t offset() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return data_.size() - pos_; }

    void need(std::size_t n, const char* what) const {
        if (remaining() < n) throw FormatError(std::string("truncated ") + what, pos_);
    }
    void expect_tag(std::string_view magic) {
        need(magic.size(), "magic");
        if (data_.substr(pos_, magic.size()) != magic)
            throw FormatError("bad magic, expected '" + std::string(magic) + "'", pos_);
        pos_ += magic.size();
    }
    void bytes(void* out, std::size_t n, const char* what) {
        need(n, what);
        std::memcpy(out, data_.data() + pos_, n);
        pos_ += n;
    }
    template <class T>
    T pod(const char* what) {
        T v;
        bytes(&v, sizeof(T), what);
        return v;
    }
    std::uint32_t u32(const char* what) { return pod<std::uint32_t>(what); }
    std::uint64_t u64(const char* what) { return pod<std::uint64_t>(what); }
    std::string str(const char* what, std::size_t max_len = 1 << 16) {
        const auto at = pos_;
        const auto len = u32(what);
        if (len > max_len) throw FormatError(std::string("implausible length for ") + what, at);
        need(len, what);
        std::string s(data_.substr(pos_, len));
        pos_ += len;
        return s;
    }

private:
    std::string_view data_;
    std::size_t pos_ = 0;
};

std::string read_file(const std::string& path);
/// Writes via a sibling temporary and rename so readers never see partial files.
void write_file_atomic(const std::string& path, std::string_view bytes);

}  // namespace cunet::io
