#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dnscoap/coap_cache.hpp"
#include "dnscoap/coap_endpoint.hpp"

namespace dnscoap::proxy {

// Decomposed Proxy-Uri.
struct ProxyTarget {
  std::string scheme;  // coap | coaps
  std::string host;
  std::optional<std::uint16_t> port;
  std::string path;                // leading slash, may be "/"
  std::vector<std::string> query;  // split on '&'

  std::string peer() const;  // "host" or "host:port"
};

// nullopt on anything malformed: unknown scheme, missing host, bad port.
std::optional<ProxyTarget> parse_proxy_uri(std::string_view uri);

// The cache flow shared by the forward proxy and the client-side CoAP
// cache: look up, serve fresh entries (as 2.03 when the requester's
// ETag matches), revalidate stale entries upstream with the stored
// ETag, store full responses, and coalesce concurrent requests per key.
class CacheFlow {
 public:
  using Serve = coap::CoapEndpoint::ResponseCallback;
  using Forward = std::function<void(coap::Message, Serve)>;

  CacheFlow(coap::CoapCache::Config cfg, std::function<double()> clock)
      : cache_(cfg), clock_(std::move(clock)) {}

  // serve() fires exactly once; forward() only when upstream traffic
  // is actually needed.
  void handle(coap::Message request, double now, const Forward& forward, Serve serve);

  coap::CoapCache& cache() { return cache_; }

  // kind: hit | stale-hit | miss (per request, at arrival) and
  // revalidation-ok | revalidation-full (per upstream completion)
  std::function<void(double, const std::string&)> on_cache_event;

  struct Counters {
    std::uint64_t hits = 0;
    std::uint64_t stale_hits = 0;
    std::uint64_t misses = 0;
    std::uint64_t coalesced = 0;
    std::uint64_t revalidations_ok = 0;
    std::uint64_t revalidations_full = 0;
    std::uint64_t upstream_failures = 0;
  };
  const Counters& counters() const { return counters_; }

 private:
  struct Waiter {
    Serve serve;
    std::vector<Bytes> offered;  // the requester's own ETags
  };

  void note(double now, const std::string& kind);
  void complete(const coap::CacheKey& key, bool revalidating,
                coap::Outcome outcome, const coap::Message* response);

  coap::CoapCache cache_;
  std::function<double()> clock_;
  std::map<coap::CacheKey, std::vector<Waiter>> in_flight_;
  Counters counters_;
};

// Caching forward proxy. Requests either carry a Proxy-Uri (decomposed
// into Uri-Path/Uri-Query toward the named origin) or, with
// default_upstream configured, are forwarded as-is to that peer.
class CoapProxy {
 public:
  struct Config {
    coap::CoapCache::Config cache;
    std::string default_upstream;  // empty: Proxy-Uri required
  };

  CoapProxy(coap::CoapEndpoint& endpoint, Config cfg);

  // Install on the endpoint: endpoint.set_request_handler(proxy.handler()).
  coap::CoapEndpoint::RequestHandler handler();

  CacheFlow& flow() { return flow_; }

 private:
  coap::CoapEndpoint& endpoint_;
  Config cfg_;
  CacheFlow flow_;
};

// Client-side CoAP response cache in front of an endpoint; satisfies
// repeat requests locally and revalidates by ETag, like the proxy but
// with the peer chosen per call.
class ClientCoapCache {
 public:
  ClientCoapCache(coap::CoapEndpoint& endpoint, coap::CoapCache::Config cfg = {});

  void send(coap::Message request, const std::string& peer,
            coap::CoapEndpoint::ResponseCallback cb, double now);

  CacheFlow& flow() { return flow_; }

 private:
  coap::CoapEndpoint& endpoint_;
  CacheFlow flow_;
};

}  // namespace dnscoap::proxy
