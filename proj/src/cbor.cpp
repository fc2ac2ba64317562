#include "dnscoap/cbor.hpp"

#include <limits>

namespace dnscoap::cbor {

void Writer::head(Major major, std::uint64_t value) {
  auto mt = static_cast<std::uint8_t>(static_cast<unsigned>(major) << 5);
  if (value < 24) {
    out_.push_back(static_cast<std::uint8_t>(mt | value));
  } else if (value <= 0xFF) {
    out_.push_back(mt | 24);
    out_.push_back(static_cast<std::uint8_t>(value));
  } else if (value <= 0xFFFF) {
    out_.push_back(mt | 25);
    out_.push_back(static_cast<std::uint8_t>(value >> 8));
    out_.push_back(static_cast<std::uint8_t>(value));
  } else if (value <= 0xFFFFFFFF) {
    out_.push_back(mt | 26);
    for (int shift = 24; shift >= 0; shift -= 8) {
      out_.push_back(static_cast<std::uint8_t>(value >> shift));
    }
  } else {
    out_.push_back(mt | 27);
    for (int shift = 56; shift >= 0; shift -= 8) {
      out_.push_back(static_cast<std::uint8_t>(value >> shift));
    }
  }
}

void Writer::integer(std::int64_t v) {
  if (v >= 0) {
    head(Major::uint, static_cast<std::uint64_t>(v));
  } else {
    head(Major::nint, static_cast<std::uint64_t>(-(v + 1)));
  }
}

void Writer::bytes(const Bytes& b) {
  head(Major::bytes, b.size());
  out_.insert(out_.end(), b.begin(), b.end());
}

void Writer::text(std::string_view s) {
  head(Major::text, s.size());
  out_.insert(out_.end(), s.begin(), s.end());
}

Major Reader::peek() const {
  return static_cast<Major>(in_.peek() >> 5);
}

std::uint64_t Reader::head(Major expect) {
  std::size_t start = in_.pos();
  std::uint8_t initial = in_.u8();
  auto major = static_cast<Major>(initial >> 5);
  if (major != expect) {
    in_.fail_at("unexpected major type", start);
  }
  std::uint8_t ai = initial & 0x1F;
  if (ai < 24) {
    return ai;
  }
  std::uint64_t value = 0;
  switch (ai) {
    case 24:
      value = in_.u8();
      if (value < 24) in_.fail_at("non-minimal integer", start);
      break;
    case 25:
      value = in_.u16();
      if (value <= 0xFF) in_.fail_at("non-minimal integer", start);
      break;
    case 26:
      value = in_.u32();
      if (value <= 0xFFFF) in_.fail_at("non-minimal integer", start);
      break;
    case 27:
      value = static_cast<std::uint64_t>(in_.u32()) << 32;
      value |= in_.u32();
      if (value <= 0xFFFFFFFF) in_.fail_at("non-minimal integer", start);
      break;
    default:
      in_.fail_at("reserved or indefinite length", start);
  }
  return value;
}

std::uint64_t Reader::uint() { return head(Major::uint); }

std::int64_t Reader::integer() {
  if (peek() == Major::uint) {
    std::uint64_t v = head(Major::uint);
    if (v > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())) {
      in_.fail("integer out of range");
    }
    return static_cast<std::int64_t>(v);
  }
  std::uint64_t v = head(Major::nint);
  if (v >= static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())) {
    in_.fail("integer out of range");
  }
  return -1 - static_cast<std::int64_t>(v);
}

Bytes Reader::bytes() {
  std::uint64_t n = head(Major::bytes);
  return in_.take(static_cast<std::size_t>(n));
}

std::string Reader::text() {
  std::uint64_t n = head(Major::text);
  Bytes raw = in_.take(static_cast<std::size_t>(n));
  return std::string(raw.begin(), raw.end());
}

std::size_t Reader::array() {
  return static_cast<std::size_t>(head(Major::array));
}

void Reader::null() {
  std::size_t start = in_.pos();
  if (in_.u8() != 0xF6) {
    in_.fail_at("expected null", start);
  }
}

}  // namespace dnscoap::cbor
