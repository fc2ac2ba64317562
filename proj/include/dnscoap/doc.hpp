#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dnscoap/cbor_dns.hpp"
#include "dnscoap/coap.hpp"
#include "dnscoap/coap_endpoint.hpp"
#include "dnscoap/dns.hpp"
#include "dnscoap/rng.hpp"

namespace dnscoap::doc {

// Request methods and what they may do:
//
//             cacheable   query in body   block-wise query
//   FETCH        yes           yes              yes
//   GET          yes           no               no
//   POST         no            yes              yes
enum class Method { fetch, get, post };

// How DNS TTLs and the CoAP Max-Age option are kept aligned.
//
// DohLike leaves TTLs untouched and sets Max-Age to the minimum TTL;
// caches age the response, clients subtract the elapsed time from
// every TTL. EolTtls zeroes all TTLs on the wire after moving the
// minimum into Max-Age, so the payload is immutable while cached and
// ETag revalidation keeps working when upstream TTLs count down.
enum class Scheme { doh_like, eol_ttls };

Method method_from_string(std::string_view text);
std::string_view method_to_string(Method method);
Scheme scheme_from_string(std::string_view text);
std::string_view scheme_to_string(Scheme scheme);

// Content-Format for DNS wire payloads. Configurable; this is the
// default used on both ends.
constexpr std::uint16_t k_content_format_dns = 553;

// Applied by caches and clients when a response carries no Max-Age.
constexpr std::uint32_t k_default_max_age = 60;

// A CoAP option value cannot exceed this without leaving the
// one-extension-octet length form; GET queries must fit.
constexpr std::size_t k_uri_query_capacity = 255;

struct ClientConfig {
  Method method = Method::fetch;
  Scheme scheme = Scheme::doh_like;
  std::string resource_path = "/dns";
  std::string get_template = "/dns{?dns}";  // must bind exactly one variable
  std::uint16_t content_format = k_content_format_dns;
  // requests whose format equals this one carry compact payloads
  std::uint16_t compact_content_format = cbordns::k_content_format;
  std::optional<std::size_t> block_size;  // block-wise transfer when set
};

struct ServerConfig {
  Scheme scheme = Scheme::doh_like;
  std::string resource_path = "/dns";
  std::string get_variable = "dns";
  // assumed when a request declares no format; responses echo the
  // request's declared format either way
  std::uint16_t content_format = k_content_format_dns;
  std::uint16_t compact_content_format = cbordns::k_content_format;
};

// First 8 octets of SHA-256 over the response payload.
Bytes make_etag(const Bytes& payload);

// Maps a DNS query onto a CoAP request. FETCH and POST carry the wire
// bytes as payload with Content-Format; GET puts unpadded base64url
// into the template variable and sets Accept instead.
// Throws std::invalid_argument when a GET query cannot fit the
// Uri-Query option (use FETCH for large queries).
coap::Message build_request(const dns::Message& query, const ClientConfig& cfg);

// Upstream name resolution. Implementations must tolerate concurrent
// calls if the endpoint they serve does.
struct Resolver {
  virtual ~Resolver() = default;
  virtual std::vector<dns::Record> resolve(const dns::Question& question) = 0;
};

struct FunctionResolver : Resolver {
  std::function<std::vector<dns::Record>(const dns::Question&)> fn;

  explicit FunctionResolver(std::function<std::vector<dns::Record>(const dns::Question&)> f)
      : fn(std::move(f)) {}
  std::vector<dns::Record> resolve(const dns::Question& question) override {
    return fn(question);
  }
};

// Zone data from JSON: { "name": [ {"type": "AAAA", "ttl": 300, "data":
// "2001:db8::1"}, ... ] }. "ttl" may be [lo, hi]; a value is drawn per
// resolve() call. Lookup is case-insensitive, qtype 255 matches all.
class ZoneFileResolver : public Resolver {
 public:
  ZoneFileResolver(const std::string& path, Rng rng);
  static ZoneFileResolver from_text(const std::string& json_text, Rng rng);

  std::vector<dns::Record> resolve(const dns::Question& question) override;

 private:
  struct Entry {
    std::uint16_t rtype;
    std::uint32_t ttl_lo, ttl_hi;
    Bytes rdata;
  };

  ZoneFileResolver() = default;
  void load(const std::string& json_text);

  std::map<std::string, std::vector<Entry>> zones_;
  Rng rng_{0};
};

// Serves one DoC request: method dispatch, query extraction (payload
// or base64url variable), resolution, scheme-specific TTL handling,
// ETag, and 2.03 revalidation when the request offers ETags.
// Error responses: 4.00 undecodable query, 4.04 wrong path, 4.05
// method not a DoC method, 5.00 resolver failure.
coap::Message serve(const coap::Message& request, Resolver& resolver,
                    const ServerConfig& cfg);

// Turns a served response back into the DNS message handed to the
// local stub cache: validates the question echo, restores TTLs from
// Max-Age per scheme, shuffles answers. The payload codec follows the
// response's Content-Format option (compact_format selects the CBOR
// codec, anything else the wire codec).
// Throws ParseError on undecodable payload, std::runtime_error when
// the response answers a different question.
dns::Message accept_response(const coap::Message& response, Scheme scheme,
                             const dns::Message& sent_query, Rng& rng,
                             std::uint16_t compact_format = cbordns::k_content_format);

// Guard for the doubly-announced freshness lifetime used with object
// security: the outer (unprotected) Max-Age may shorten but never
// extend the protected one.
enum class MaxAgeCheck { ok, reject };
MaxAgeCheck check_max_age_consistency(std::uint32_t outer_max_age,
                                      std::uint32_t protected_max_age);

// Request handler for a CoapEndpoint serving DoC, with optional
// block-wise slicing of oversized responses.
coap::CoapEndpoint::RequestHandler make_doc_handler(
    Resolver& resolver, ServerConfig cfg,
    std::optional<std::size_t> block_size = std::nullopt,
    std::function<void(const coap::Message&, const coap::Message&)> on_serve = nullptr);

}  // namespace dnscoap::doc
