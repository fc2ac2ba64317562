#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "dnscoap/bytes.hpp"

namespace dnscoap::cbor {

// Minimal CBOR (RFC 8949) subset: definite lengths only, every integer
// in its shortest form. Covers what the packed DNS format and the
// object-security layer need; maps, tags and floats are out of scope.

enum class Major : std::uint8_t {
  uint = 0,
  nint = 1,
  bytes = 2,
  text = 3,
  array = 4,
  map = 5,
  tag = 6,
  simple = 7,
};

class Writer {
 public:
  void uint(std::uint64_t v) { head(Major::uint, v); }

  /// Negative values use major type 1 (encoded as -1 - v).
  void integer(std::int64_t v);

  void bytes(const Bytes& b);
  void text(std::string_view s);

  /// Array header only; the caller writes the n items after it.
  void array(std::size_t n) { head(Major::array, n); }

  void null() { out_.push_back(0xF6); }

  const Bytes& out() const { return out_; }
  Bytes take() { return std::move(out_); }

 private:
  void head(Major major, std::uint64_t value);

  Bytes out_;
};

/// Sequential decoder. Rejects indefinite lengths and any integer head
/// wider than needed, so decode-then-encode is always byte identical.
/// Throws ParseError (with the octet offset) on malformed input.
class Reader {
 public:
  explicit Reader(const Bytes& data) : in_(data, "cbor") {}

  Major peek() const;

  std::uint64_t uint();
  std::int64_t integer();  // major 0 or 1
  Bytes bytes();
  std::string text();
  std::size_t array();  // returns the element count
  void null();

  bool at_end() const { return in_.done(); }
  std::size_t offset() const { return in_.pos(); }

 private:
  std::uint64_t head(Major expect);

  ByteReader in_;
};

}  // namespace dnscoap::cbor
