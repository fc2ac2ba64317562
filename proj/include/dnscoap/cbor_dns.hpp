#pragma once

// Compact DNS payloads for very restricted links: queries and answers
// travel as CBOR arrays instead of DNS wire format, and everything the
// peer can recover from the request it already holds is left out.
// docs/cbor-dns-format.md is the normative description.

#include "dnscoap/bytes.hpp"
#include "dnscoap/dns.hpp"

namespace dnscoap::cbordns {

// Experimental-range Content-Format id distinguishing compact payloads
// from wire-format ones (553). Both ends can be configured to another
// number; this is the default they agree on.
constexpr std::uint16_t k_content_format = 65053;

/*
 * Query: one array of up to three entries with trailing defaults
 * elided.
 *
 *   [ name ]                   type AAAA (28), class IN (1)
 *   [ name, type ]             class IN
 *   [ name, type, class ]
 *
 * Response: answer entries bound to the query they answer,
 *
 *   [ ttl, rdata ]               type and name from the question
 *   [ ttl, rdata, type ]         name from the question
 *   [ ttl, rdata, type, name ]   self-describing
 *
 * wrapped directly in the outer array when every name is recoverable
 * from the matched request, or behind a leading question array when
 * the blob must stand alone:
 *
 *   [ entry, entry, ... ]
 *   [ [ question ], [ entry, entry, ... ] ]
 *
 * Names are presentation text without the trailing dot ("." for the
 * root). Integers use the shortest CBOR encoding, and decoders reject
 * anything longer, so every value has exactly one valid image.
 */

Bytes compress_query(const dns::Question& question);
dns::Question decompress_query(const Bytes& blob);

// Drops authority/additional sections. Answers with a class other
// than the question's cannot be represented: invalid_argument.
// self_contained (or any answer name differing from the question's)
// selects the two-array form.
Bytes compress_response(const dns::Message& msg, const dns::Question& matched,
                        bool self_contained = false);

// The single-array form needs the request's question for recovery;
// the two-array form works either way and its embedded question wins.
dns::Message decompress_response(const Bytes& blob, const dns::Question& matched);
dns::Message decompress_response(const Bytes& blob);

}  // namespace dnscoap::cbordns
