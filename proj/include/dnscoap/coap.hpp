#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dnscoap/bytes.hpp"

namespace dnscoap::coap {

enum class Type : std::uint8_t { con = 0, non = 1, ack = 2, rst = 3 };

/// Packs a code as class.detail (3 + 5 bits).
constexpr std::uint8_t make_code(unsigned cls, unsigned detail) {
  return static_cast<std::uint8_t>(cls << 5 | detail);
}
constexpr unsigned code_class(std::uint8_t code) { return code >> 5; }
constexpr unsigned code_detail(std::uint8_t code) { return code & 0x1F; }
std::string code_to_string(std::uint8_t code);  // "2.05"

constexpr std::uint8_t k_code_empty = make_code(0, 0);
constexpr std::uint8_t k_code_get = make_code(0, 1);
constexpr std::uint8_t k_code_post = make_code(0, 2);
constexpr std::uint8_t k_code_put = make_code(0, 3);
constexpr std::uint8_t k_code_delete = make_code(0, 4);
constexpr std::uint8_t k_code_fetch = make_code(0, 5);
constexpr std::uint8_t k_code_created = make_code(2, 1);
constexpr std::uint8_t k_code_valid = make_code(2, 3);
constexpr std::uint8_t k_code_changed = make_code(2, 4);
constexpr std::uint8_t k_code_content = make_code(2, 5);
constexpr std::uint8_t k_code_continue = make_code(2, 31);
constexpr std::uint8_t k_code_bad_request = make_code(4, 0);
constexpr std::uint8_t k_code_unauthorized = make_code(4, 1);
constexpr std::uint8_t k_code_bad_option = make_code(4, 2);
constexpr std::uint8_t k_code_not_found = make_code(4, 4);
constexpr std::uint8_t k_code_method_not_allowed = make_code(4, 5);
constexpr std::uint8_t k_code_entity_incomplete = make_code(4, 8);
constexpr std::uint8_t k_code_internal_error = make_code(5, 0);
constexpr std::uint8_t k_code_gateway_timeout = make_code(5, 4);

// Option numbers (RFC 7252/7959/8613; Echo is configurable, this is the default).
constexpr std::uint16_t k_opt_if_match = 1;
constexpr std::uint16_t k_opt_uri_host = 3;
constexpr std::uint16_t k_opt_etag = 4;
constexpr std::uint16_t k_opt_uri_port = 7;
constexpr std::uint16_t k_opt_oscore = 9;
constexpr std::uint16_t k_opt_uri_path = 11;
constexpr std::uint16_t k_opt_content_format = 12;
constexpr std::uint16_t k_opt_max_age = 14;
constexpr std::uint16_t k_opt_uri_query = 15;
constexpr std::uint16_t k_opt_accept = 17;
constexpr std::uint16_t k_opt_block2 = 23;
constexpr std::uint16_t k_opt_block1 = 27;
constexpr std::uint16_t k_opt_proxy_uri = 35;
constexpr std::uint16_t k_opt_echo = 252;

struct Option {
  std::uint16_t number = 0;
  Bytes value;

  bool operator==(const Option&) const = default;
};

/// Encodes a uint option value: big-endian, minimal length, zero -> empty.
Bytes uint_option_bytes(std::uint32_t v);
std::uint32_t uint_option_value(const Bytes& value);

/*
 * Message header (RFC 7252, 4 octets, then token/options/payload):
 *
 *    0                   1                   2                   3
 *    0 1 2 3 4 5 6 7 8 9 0 1 2 3 4 5 6 7 8 9 0 1 2 3 4 5 6 7 8 9 0 1
 *   +-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+
 *   |Ver| T |  TKL  |      Code     |          Message ID           |
 *   +-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+
 *   |   Token (if any, TKL bytes) ...
 *   +-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+
 *   |   Options (if any) ...        | 0xFF | Payload (if any) ...
 *   +-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+
 */
struct Message {
  Type type = Type::con;
  std::uint8_t code = 0;
  std::uint16_t message_id = 0;
  Bytes token;
  std::vector<Option> options;  // insertion order kept among equal numbers
  Bytes payload;

  void add_option(std::uint16_t number, Bytes value) {
    options.push_back({number, std::move(value)});
  }
  void add_option_uint(std::uint16_t number, std::uint32_t v) {
    add_option(number, uint_option_bytes(v));
  }
  void add_option_string(std::uint16_t number, std::string_view s) {
    add_option(number, Bytes(s.begin(), s.end()));
  }

  const Option* find_option(std::uint16_t number) const;
  std::vector<const Option*> find_options(std::uint16_t number) const;
  bool has_option(std::uint16_t number) const { return find_option(number) != nullptr; }
  std::optional<std::uint32_t> option_uint(std::uint16_t number) const;
  std::optional<std::string> option_string(std::uint16_t number) const;
  void remove_options(std::uint16_t number);

  bool is_request() const { return code_class(code) == 0 && code != k_code_empty; }
  bool is_response() const { return code_class(code) >= 2; }

  bool operator==(const Message&) const = default;
};

/// Serializes a message. Options are written in nondecreasing option-number
/// order with delta encoding; the 0xFF marker appears iff the payload is
/// nonempty. Throws std::invalid_argument for tokens longer than 8 octets.
Bytes encode(const Message& msg);

/// Parses a datagram. Throws ParseError (naming the octet offset) on short
/// header, bad version, token length > 8, reserved option nibble 15, truncated
/// option, or a payload marker followed by nothing.
Message decode(const Bytes& wire);

/*
 * Block option value (RFC 7959):
 *
 *    0 1 2 3 4 5 6 7
 *   +-+-+-+-+-+-+-+-+
 *   |  NUM  |M| SZX |    value = num * 16 + more * 8 + szx
 *   +-+-+-+-+-+-+-+-+    block size = 2^(szx + 4), szx 7 reserved
 */
struct BlockOption {
  std::uint32_t num = 0;
  bool more = false;
  std::uint8_t szx = 0;

  static BlockOption from_value(std::uint32_t value);  // throws ParseError on szx 7
  std::uint32_t value() const { return num << 4 | (more ? 8u : 0u) | szx; }
  std::size_t block_size() const { return std::size_t{16} << szx; }

  /// szx for a block size; size must be a power of two in [16, 1024].
  static std::uint8_t szx_for(std::size_t block_size);

  bool operator==(const BlockOption&) const = default;
};

std::optional<BlockOption> block_option(const Message& msg, std::uint16_t number);

/// Splits a body into (block, chunk) pairs of the given size; the final block
/// has more=false. An empty body yields one empty chunk.
std::vector<std::pair<BlockOption, Bytes>> slice_body(const Bytes& body,
                                                      std::size_t block_size);

}  // namespace dnscoap::coap
