#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "dnscoap/doc.hpp"
#include "dnscoap/netsim.hpp"

namespace dnscoap::sizes {

/*
 * One dissected message: how many octets each layer contributes and
 * how many link frames carry it. The buckets always sum to the octets
 * actually on the air:
 *
 *   link      MAC + adaptation + fragmentation headers
 *   security  DTLS record envelope, or the growth a protected message
 *             shows over its unprotected form
 *   coap      header, token, options, payload marker
 *   dns       the query or answer material itself (wire DNS, its
 *             compact form, or the base64url text a GET carries)
 */
struct SizeRow {
  std::string transport;
  std::string method;  // "-" for raw datagram transports
  std::string kind;    // "query" | "response <TYPE>"
  std::size_t fragments = 0;
  std::size_t link_octets = 0;
  std::size_t security_octets = 0;
  std::size_t coap_octets = 0;
  std::size_t dns_octets = 0;
  std::size_t total_octets = 0;
};

struct SizeQuery {
  std::size_t name_length = 24;
  std::uint16_t rtype = dns::k_type_aaaa;
  std::uint16_t content_format = doc::k_content_format_dns;
  std::uint32_t ttl = 86400;
  std::vector<netsim::Transport> transports;  // empty = all five
  std::vector<doc::Method> methods;           // empty = fetch, get, post
  netsim::LinkModel link;
};

// Builds the real messages with the production codecs (and a real
// protection pass for the object-security rows), dissects them, and
// counts frames with the link model. Never estimates.
std::vector<SizeRow> size_table(const SizeQuery& query);

void write_sizes_csv(const std::vector<SizeRow>& rows, std::ostream& out);

}  // namespace dnscoap::sizes
