#pragma once

#include "chainsmr/crypto.hpp"

#include <algorithm>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string_view>

namespace chainsmr {

class DecodeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Canonical encoding: integers are 64-bit little-endian, variable-length
// fields carry a 64-bit length prefix, digests are written raw.
class Writer {
public:
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void boolean(bool b) { u64(b ? 1 : 0); }
    void raw(std::span<const std::uint8_t> data) { buf_.insert(buf_.end(), data.begin(), data.end()); }
    void bytes(std::span<const std::uint8_t> data) {
        u64(data.size());
        raw(data);
    }
    void str(std::string_view s) {
        bytes(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
    }
    void digest(const Digest& d) { raw(d.bytes); }

    const Bytes& bytes() const& { return buf_; }
    Bytes take() && { return std::move(buf_); }

private:
    Bytes buf_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i) v = (v << 8) | data_[pos_ + i];
        pos_ += 8;
        return v;
    }
    bool boolean() {
        auto v = u64();
        if (v > 1) throw DecodeError("boolean field out of range");
        return v == 1;
    }
    Bytes bytes() {
        auto len = u64();
        if (len > data_.size() - pos_) throw DecodeError("length prefix exceeds input");
        Bytes out(data_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  data_.begin() + static_cast<std::ptrdiff_t>(pos_ + len));
        pos_ += len;
        return out;
    }
    template <std::size_t N>
    std::array<std::uint8_t, N> fixed() {
        need(N);
        std::array<std::uint8_t, N> out{};
        std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(pos_), N, out.begin());
        pos_ += N;
        return out;
    }
    Digest digest() { return Digest{fixed<kDigestSize>()}; }

    bool done() const { return pos_ == data_.size(); }

private:
    void need(std::size_t k) const {
        if (data_.size() - pos_ < k) throw DecodeError("truncated input");
    }

    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
};

}  // namespace chainsmr
