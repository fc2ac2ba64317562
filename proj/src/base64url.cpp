#include "dnscoap/base64url.hpp"

#include <array>

namespace dnscoap {

namespace {

constexpr char k_alphabet[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789-_";

std::array<int8_t, 256> decode_table() {
  std::array<int8_t, 256> table;
  table.fill(-1);
  for (int i = 0; i < 64; ++i) {
    table[static_cast<unsigned char>(k_alphabet[i])] = static_cast<int8_t>(i);
  }
  return table;
}

const std::array<int8_t, 256> k_decode = decode_table();

}  // namespace

std::string base64url_encode(const Bytes& data) {
  std::string out;
  out.reserve((data.size() * 4 + 2) / 3);
  std::size_t i = 0;
  for (; i + 3 <= data.size(); i += 3) {
    std::uint32_t group = (data[i] << 16) | (data[i + 1] << 8) | data[i + 2];
    out.push_back(k_alphabet[(group >> 18) & 0x3F]);
    out.push_back(k_alphabet[(group >> 12) & 0x3F]);
    out.push_back(k_alphabet[(group >> 6) & 0x3F]);
    out.push_back(k_alphabet[group & 0x3F]);
  }
  std::size_t rest = data.size() - i;
  if (rest == 1) {
    std::uint32_t group = data[i] << 16;
    out.push_back(k_alphabet[(group >> 18) & 0x3F]);
    out.push_back(k_alphabet[(group >> 12) & 0x3F]);
  } else if (rest == 2) {
    std::uint32_t group = (data[i] << 16) | (data[i + 1] << 8);
    out.push_back(k_alphabet[(group >> 18) & 0x3F]);
    out.push_back(k_alphabet[(group >> 12) & 0x3F]);
    out.push_back(k_alphabet[(group >> 6) & 0x3F]);
  }
  return out;
}

Bytes base64url_decode(std::string_view text) {
  if (text.size() % 4 == 1) {
    throw ParseError("base64url: impossible length", text.size());
  }
  Bytes out;
  out.reserve(text.size() * 3 / 4);
  std::uint32_t group = 0;
  int bits = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    int8_t v = k_decode[static_cast<unsigned char>(text[i])];
    if (v < 0) {
      throw ParseError("base64url: invalid character", i);
    }
    group = (group << 6) | static_cast<std::uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<std::uint8_t>((group >> bits) & 0xFF));
    }
  }
  // leftover bits must be zero padding of the final group
  if (bits > 0 && (group & ((1u << bits) - 1)) != 0) {
    throw ParseError("base64url: nonzero trailing bits", text.size());
  }
  return out;
}

}  // namespace dnscoap
