#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dnscoap {

using Bytes = std::vector<std::uint8_t>;

/// Failure in any wire codec. `offset` is the octet position the decoder
/// was looking at when it gave up; it is also folded into what().
class ParseError : public std::runtime_error {
public:
  ParseError(std::string_view what, std::size_t offset)
      : std::runtime_error(std::string(what) + " at offset " + std::to_string(offset)),
        offset_(offset) {}

  std::size_t offset() const { return offset_; }

private:
  std::size_t offset_;
};

/// Bounds-checked cursor over an immutable byte range. Multi-octet integers
/// are big-endian (network order). Every accessor throws ParseError instead
/// of reading past the end.
class ByteReader {
public:
  ByteReader(const std::uint8_t* data, std::size_t size, std::string_view what)
      : data_(data), size_(size), pos_(0), what_(what) {}

  ByteReader(const Bytes& bytes, std::string_view what)
      : ByteReader(bytes.data(), bytes.size(), what) {}

  std::size_t pos() const { return pos_; }
  std::size_t size() const { return size_; }
  std::size_t remaining() const { return size_ - pos_; }
  bool done() const { return pos_ == size_; }

  void require(std::size_t n) const {
    if (remaining() < n) {
      throw ParseError(std::string(what_) + ": truncated", pos_);
    }
  }

  [[noreturn]] void fail(std::string_view msg) const {
    throw ParseError(std::string(what_) + ": " + std::string(msg), pos_);
  }

  [[noreturn]] void fail_at(std::string_view msg, std::size_t offset) const {
    throw ParseError(std::string(what_) + ": " + std::string(msg), offset);
  }

  std::uint8_t peek() const {
    require(1);
    return data_[pos_];
  }

  std::uint8_t u8() {
    require(1);
    return data_[pos_++];
  }

  std::uint16_t u16() {
    require(2);
    std::uint16_t v = static_cast<std::uint16_t>(data_[pos_] << 8 | data_[pos_ + 1]);
    pos_ += 2;
    return v;
  }

  std::uint32_t u32() {
    require(4);
    std::uint32_t v = static_cast<std::uint32_t>(data_[pos_]) << 24 |
                      static_cast<std::uint32_t>(data_[pos_ + 1]) << 16 |
                      static_cast<std::uint32_t>(data_[pos_ + 2]) << 8 |
                      static_cast<std::uint32_t>(data_[pos_ + 3]);
    pos_ += 4;
    return v;
  }

  Bytes take(std::size_t n) {
    require(n);
    Bytes out(data_ + pos_, data_ + pos_ + n);
    pos_ += n;
    return out;
  }

  void skip(std::size_t n) {
    require(n);
    pos_ += n;
  }

  void seek(std::size_t pos) {
    if (pos > size_) {
      fail_at("seek out of range", pos);
    }
    pos_ = pos;
  }

  const std::uint8_t* data() const { return data_; }

private:
  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_;
  std::string_view what_;
};

/// Append-only big-endian byte sink.
class ByteWriter {
public:
  void u8(std::uint8_t v) { out_.push_back(v); }

  void u16(std::uint16_t v) {
    out_.push_back(static_cast<std::uint8_t>(v >> 8));
    out_.push_back(static_cast<std::uint8_t>(v));
  }

  void u32(std::uint32_t v) {
    out_.push_back(static_cast<std::uint8_t>(v >> 24));
    out_.push_back(static_cast<std::uint8_t>(v >> 16));
    out_.push_back(static_cast<std::uint8_t>(v >> 8));
    out_.push_back(static_cast<std::uint8_t>(v));
  }

  void raw(const Bytes& bytes) { out_.insert(out_.end(), bytes.begin(), bytes.end()); }

  void raw(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out_.insert(out_.end(), p, p + n);
  }

  void raw(std::string_view s) { raw(s.data(), s.size()); }

  std::size_t size() const { return out_.size(); }
  std::uint8_t& at(std::size_t i) { return out_.at(i); }

  Bytes take() { return std::move(out_); }
  const Bytes& bytes() const { return out_; }

private:
  Bytes out_;
};

std::string to_hex(const Bytes& bytes);
Bytes from_hex(std::string_view hex);

}  // namespace dnscoap
