#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dnscoap/bytes.hpp"
#include "dnscoap/rng.hpp"

namespace dnscoap::dns {

// Record types this tooling names; any other 16-bit value still round-trips.
constexpr std::uint16_t k_type_a = 1;
constexpr std::uint16_t k_type_ns = 2;
constexpr std::uint16_t k_type_ptr = 12;
constexpr std::uint16_t k_type_txt = 16;
constexpr std::uint16_t k_type_aaaa = 28;
constexpr std::uint16_t k_type_srv = 33;
constexpr std::uint16_t k_type_https = 65;
constexpr std::uint16_t k_type_any = 255;

constexpr std::uint16_t k_class_in = 1;

/// Maps a type mnemonic ("AAAA", case-insensitive) or decimal string to its
/// code. Returns nullopt for anything else.
std::optional<std::uint16_t> rtype_from_string(std::string_view text);
std::string rtype_to_string(std::uint16_t rtype);

/// A domain name as a sequence of labels. Labels are raw bytes (UTF-8 passes
/// through untouched); comparisons are exact, no case folding.
struct Name {
  std::vector<std::string> labels;

  /// Parses dot-joined presentation text. A single "." (or "") is the root;
  /// a trailing dot is accepted and ignored. Escapes are not supported.
  static Name parse(std::string_view presentation);

  /// Dot-joined text without a trailing dot; "." for the root.
  std::string to_string() const;

  /// Length of to_string() in characters.
  std::size_t presentation_length() const;

  /// Octets of the uncompressed wire encoding: 1 + sum(1 + label length).
  std::size_t encoded_size() const;

  bool empty() const { return labels.empty(); }
  bool operator==(const Name&) const = default;
};

struct Question {
  Name name;
  std::uint16_t rtype = k_type_aaaa;
  std::uint16_t rclass = k_class_in;

  bool operator==(const Question&) const = default;
};

struct Record {
  Name name;
  std::uint16_t rtype = 0;
  std::uint16_t rclass = k_class_in;
  std::uint32_t ttl = 0;
  Bytes rdata;

  bool operator==(const Record&) const = default;
};

// Flag bits this stack models; the rest of the flags word (opcode, rcode,
// AA/TC/AD/CD) is carried opaquely.
constexpr std::uint16_t k_flag_qr = 0x8000;
constexpr std::uint16_t k_flag_rd = 0x0100;
constexpr std::uint16_t k_flag_ra = 0x0080;

/*
 * Wire header (RFC 1035, 12 octets):
 *
 *    0  1  2  3  4  5  6  7  8  9  0  1  2  3  4  5
 *  +--+--+--+--+--+--+--+--+--+--+--+--+--+--+--+--+
 *  |                      ID                       |
 *  +--+--+--+--+--+--+--+--+--+--+--+--+--+--+--+--+
 *  |QR|   Opcode  |AA|TC|RD|RA|   Z    |   RCODE   |
 *  +--+--+--+--+--+--+--+--+--+--+--+--+--+--+--+--+
 *  |                    QDCOUNT                    |
 *  +--+--+--+--+--+--+--+--+--+--+--+--+--+--+--+--+
 *  |                    ANCOUNT                    |
 *  +--+--+--+--+--+--+--+--+--+--+--+--+--+--+--+--+
 *  |                    NSCOUNT                    |
 *  +--+--+--+--+--+--+--+--+--+--+--+--+--+--+--+--+
 *  |                    ARCOUNT                    |
 *  +--+--+--+--+--+--+--+--+--+--+--+--+--+--+--+--+
 */
struct Message {
  std::uint16_t id = 0;
  std::uint16_t flags = 0;
  std::optional<Question> question;
  std::vector<Record> answers;
  std::vector<Record> authority;
  std::vector<Record> additional;

  bool qr() const { return flags & k_flag_qr; }
  bool rd() const { return flags & k_flag_rd; }
  bool ra() const { return flags & k_flag_ra; }

  bool operator==(const Message&) const = default;
};

/// Per-section record cap enforced by decode(); guards against count fields
/// promising absurd section sizes on a constrained node.
constexpr std::size_t k_default_record_cap = 1024;

/// Composes a single-question query: RD set, no records.
/// Size is always 12 + (presentation length + 2) + 4 octets (root name: 17).
Bytes encode_query(const Name& name, std::uint16_t rtype, std::uint16_t id = 0);

/// Composes a response message: QR|RD|RA set, question echoed, answers given.
Message build_response(const Question& question, std::vector<Record> answers,
                       std::uint16_t id = 0);

/// Encodes a message. Record names equal to the question name are emitted as
/// a single compression pointer to the question name at offset 12; all other
/// names are written in full.
Bytes encode(const Message& msg);

/// Decodes a message, resolving compression pointers. Throws ParseError
/// (naming the octet offset) on truncation, label overflow, pointer loops,
/// counts beyond record_cap, more than one question, or trailing bytes.
Message decode(const Bytes& wire, std::size_t record_cap = k_default_record_cap);

/// Smallest TTL across all three record sections; nullopt when there are no
/// records at all.
std::optional<std::uint32_t> min_ttl(const Message& msg);

/// Sets every TTL in all sections to `ttl`.
void rewrite_ttls(Message& msg, std::uint32_t ttl);

/// Orders the answer section by (rtype, rdata), lexicographic on rdata.
/// Canonical server-side order, so equal record sets give equal payloads.
void sort_records(Message& msg);

/// Uniform random permutation of the answer section (client-side, undoes the
/// canonical order so callers do not fixate on the first record).
void shuffle_records(Message& msg, Rng& rng);

/// Text form of rdata for the types the tooling prints: A/AAAA as addresses,
/// TXT as text, anything else as hex.
std::string rdata_to_text(std::uint16_t rtype, const Bytes& rdata);

/// Inverse of rdata_to_text for zone files: A/AAAA parsed as addresses, TXT
/// taken verbatim, "hex:..." accepted for any type. Throws ParseError.
Bytes rdata_from_text(std::uint16_t rtype, const std::string& text);

}  // namespace dnscoap::dns
