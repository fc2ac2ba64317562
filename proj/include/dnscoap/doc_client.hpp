#pragma once

#include <map>
#include <string>

#include "dnscoap/doc.hpp"

namespace dnscoap::doc {

struct ResolveResult {
  enum class Status { ok, timeout, reset, error };

  Status status = Status::error;
  dns::Message answer;      // meaningful when status == ok
  bool from_cache = false;  // answered without any network traffic
  std::string cache_kind;   // hit | miss | revalidation-ok | revalidation-full
  double rtt = 0;           // resolve() call until completion
  std::string error_text;
};

// Stub resolver side of the protocol: keeps one cache entry per
// question, revalidates expired entries by ETag, restores TTLs from
// Max-Age on the way out. All timestamps come from the caller so the
// client runs unchanged under simulated time.
class DocClient {
 public:
  using Callback = std::function<void(const ResolveResult&)>;

  DocClient(coap::CoapEndpoint& endpoint, ClientConfig cfg, std::string server,
            Rng rng);

  void resolve(const dns::Question& question, double now, Callback cb);

  // Routes requests somewhere other than the endpoint directly, e.g.
  // through a client-side CoAP response cache.
  using SendFn = std::function<void(coap::Message, const std::string&,
                                    coap::CoapEndpoint::ResponseCallback, double)>;
  void set_transport(SendFn fn) { transport_ = std::move(fn); }

  void set_cache_enabled(bool on) { cache_enabled_ = on; }
  void clear_cache() { cache_.clear(); }

  // kind: hit | miss | revalidation-ok | revalidation-full
  std::function<void(double now, const std::string& kind)> on_cache_event;

  struct Counters {
    std::uint64_t hits = 0;
    std::uint64_t misses = 0;
    std::uint64_t revalidations_ok = 0;
    std::uint64_t revalidations_full = 0;
    std::uint64_t failures = 0;
  };
  const Counters& counters() const { return counters_; }

 private:
  struct CacheEntry {
    Bytes payload;   // canonical response payload as served
    Bytes etag;      // empty when the server offered none
    std::uint16_t format = k_content_format_dns;  // payload codec
    double expires_at = 0;
  };

  static std::string cache_key(const dns::Question& question);
  void note(double now, const std::string& kind);
  void dispatch(const dns::Message& query, coap::Message request,
                const std::string& key, double now, bool revalidating, Callback cb);

  coap::CoapEndpoint& endpoint_;
  ClientConfig cfg_;
  std::string server_;
  SendFn transport_;
  Rng rng_;
  bool cache_enabled_ = true;
  std::map<std::string, CacheEntry> cache_;
  Counters counters_;
};

}  // namespace dnscoap::doc
