#pragma once

#include <list>
#include <map>
#include <optional>
#include <set>
#include <string>

#include "dnscoap/coap.hpp"

namespace dnscoap::coap {

// Cache key over everything that selects a representation: method
// code, Uri-Host/Port, Uri-Path, Uri-Query, Content-Format, Accept,
// and (for methods whose body is part of the request semantics) the
// payload. POST is uncacheable by definition.
struct CacheKey {
  Bytes digest;  // truncated SHA-256, 8 octets

  auto operator<=>(const CacheKey&) const = default;
};

std::optional<CacheKey> cache_key(const Message& request);

// Freshness lifetime assumed for responses without a Max-Age option.
constexpr std::uint32_t k_default_cache_max_age = 60;

// Response cache with the CoAP freshness model: an entry is fresh
// while initial Max-Age minus elapsed time stays positive, and is
// served with the residual as its Max-Age. Stale entries stick around
// for a grace period so they can be revalidated by ETag.
class CoapCache {
 public:
  struct Config {
    std::size_t capacity = 64;   // LRU bound
    double stale_grace = 300.0;  // seconds a stale entry stays revalidatable
  };

  struct Entry {
    std::uint8_t code = 0;
    Bytes payload;
    Bytes etag;
    std::optional<std::uint16_t> content_format;
    std::uint32_t initial_max_age = 0;
    double stored_at = 0;
  };

  enum class State { fresh, stale, miss };

  struct LookupResult {
    State state = State::miss;
    const Entry* entry = nullptr;  // set for fresh and stale
    std::uint32_t residual = 0;    // whole seconds left; 0 when stale
  };

  CoapCache();
  explicit CoapCache(Config cfg);

  LookupResult lookup(const CacheKey& key, double now);

  // Stores a 2.05 response. Anything else is ignored (returns false).
  bool store(const CacheKey& key, const Message& response, double now);

  // Restarts the freshness window after a 2.03 revalidation.
  bool refresh(const CacheKey& key, std::uint32_t max_age, double now);

  // Drops entries stale beyond the grace period. Pinned keys survive
  // both this and the LRU bound (in-flight revalidations need them).
  void evict(double now);
  void pin(const CacheKey& key) { pinned_.insert(key); }
  void unpin(const CacheKey& key) { pinned_.erase(key); }

  void erase(const CacheKey& key);
  std::size_t size() const { return entries_.size(); }

  // One line per entry, for tests and debugging dumps.
  std::string dump(double now) const;

 private:
  struct Slot {
    Entry entry;
    std::list<CacheKey>::iterator lru_pos;
  };

  void touch(std::map<CacheKey, Slot>::iterator it);
  double residual_of(const Entry& entry, double now) const;

  Config cfg_;
  std::map<CacheKey, Slot> entries_;
  std::list<CacheKey> lru_;  // front = most recent
  std::set<CacheKey> pinned_;
};

// Builds the response a cache serves for an entry: 2.03 when the
// requester already holds the representation (offered ETag matches),
// otherwise the full stored response; Max-Age is the residual either way.
Message serve_from_entry(const CoapCache::Entry& entry, std::uint32_t residual,
                         const std::vector<Bytes>& offered_etags);

}  // namespace dnscoap::coap
