#include "dnscoap/coap_cache.hpp"

#include <openssl/sha.h>

#include <cmath>
#include <cstdio>

namespace dnscoap::coap {

CoapCache::CoapCache() : CoapCache(Config{}) {}
CoapCache::CoapCache(Config cfg) : cfg_(cfg) {}

std::optional<CacheKey> cache_key(const Message& request) {
  if (request.code == k_code_post) {
    return std::nullopt;
  }
  // canonical serialization: code, then each relevant option as
  // (number, length, value), then the payload for body-bearing methods
  Bytes material;
  material.push_back(request.code);
  static const std::uint16_t k_relevant[] = {
      k_opt_uri_host, k_opt_uri_port,       k_opt_uri_path,
      k_opt_uri_query, k_opt_content_format, k_opt_accept,
  };
  for (std::uint16_t number : k_relevant) {
    for (const auto* opt : request.find_options(number)) {
      material.push_back(static_cast<std::uint8_t>(number >> 8));
      material.push_back(static_cast<std::uint8_t>(number & 0xFF));
      material.push_back(static_cast<std::uint8_t>(opt->value.size() >> 8));
      material.push_back(static_cast<std::uint8_t>(opt->value.size() & 0xFF));
      material.insert(material.end(), opt->value.begin(), opt->value.end());
    }
  }
  if (request.code != k_code_get && !request.payload.empty()) {
    material.push_back(0xFF);
    material.insert(material.end(), request.payload.begin(), request.payload.end());
  }
  std::uint8_t digest[SHA256_DIGEST_LENGTH];
  SHA256(material.data(), material.size(), digest);
  return CacheKey{Bytes(digest, digest + 8)};
}

double CoapCache::residual_of(const Entry& entry, double now) const {
  double residual = entry.initial_max_age - (now - entry.stored_at);
  return residual > 0 ? residual : 0;
}

void CoapCache::touch(std::map<CacheKey, Slot>::iterator it) {
  lru_.erase(it->second.lru_pos);
  lru_.push_front(it->first);
  it->second.lru_pos = lru_.begin();
}

CoapCache::LookupResult CoapCache::lookup(const CacheKey& key, double now) {
  auto it = entries_.find(key);
  if (it == entries_.end()) {
    return {};
  }
  touch(it);
  double residual = residual_of(it->second.entry, now);
  if (residual > 0) {
    return {State::fresh, &it->second.entry,
            static_cast<std::uint32_t>(std::floor(residual))};
  }
  return {State::stale, &it->second.entry, 0};
}

bool CoapCache::store(const CacheKey& key, const Message& response, double now) {
  if (response.code != k_code_content) {
    return false;
  }
  Entry entry;
  entry.code = response.code;
  entry.payload = response.payload;
  if (auto etag = response.find_option(k_opt_etag)) {
    entry.etag = etag->value;
  }
  if (auto cf = response.find_option(k_opt_content_format)) {
    entry.content_format = static_cast<std::uint16_t>(uint_option_value(cf->value));
  }
  entry.initial_max_age = k_default_cache_max_age;
  if (auto max_age = response.find_option(k_opt_max_age)) {
    entry.initial_max_age =
        static_cast<std::uint32_t>(uint_option_value(max_age->value));
  }
  entry.stored_at = now;

  auto it = entries_.find(key);
  if (it != entries_.end()) {
    it->second.entry = std::move(entry);
    touch(it);
    return true;
  }
  lru_.push_front(key);
  entries_[key] = Slot{std::move(entry), lru_.begin()};
  // capacity: drop from the cold end, skipping pinned keys
  while (entries_.size() > cfg_.capacity) {
    auto victim = lru_.rbegin();
    while (victim != lru_.rend() && pinned_.count(*victim)) {
      ++victim;
    }
    if (victim == lru_.rend()) {
      break;  // everything pinned; let it run over
    }
    erase(*victim);
  }
  return true;
}

bool CoapCache::refresh(const CacheKey& key, std::uint32_t max_age, double now) {
  auto it = entries_.find(key);
  if (it == entries_.end()) {
    return false;
  }
  it->second.entry.initial_max_age = max_age;
  it->second.entry.stored_at = now;
  touch(it);
  return true;
}

void CoapCache::evict(double now) {
  for (auto it = entries_.begin(); it != entries_.end();) {
    const Entry& entry = it->second.entry;
    bool beyond_grace =
        now - entry.stored_at >= entry.initial_max_age + cfg_.stale_grace;
    if (beyond_grace && !pinned_.count(it->first)) {
      lru_.erase(it->second.lru_pos);
      it = entries_.erase(it);
    } else {
      ++it;
    }
  }
}

void CoapCache::erase(const CacheKey& key) {
  auto it = entries_.find(key);
  if (it == entries_.end()) {
    return;
  }
  lru_.erase(it->second.lru_pos);
  entries_.erase(it);
}

std::string CoapCache::dump(double now) const {
  std::string out;
  for (const auto& [key, slot] : entries_) {
    char line[160];
    double residual = residual_of(slot.entry, now);
    std::snprintf(line, sizeof(line), "%s code=%s etag=%s max_age=%u residual=%.0f%s\n",
                  to_hex(key.digest).c_str(), code_to_string(slot.entry.code).c_str(),
                  to_hex(slot.entry.etag).c_str(), slot.entry.initial_max_age,
                  residual, residual > 0 ? "" : " (stale)");
    out += line;
  }
  return out;
}

Message serve_from_entry(const CoapCache::Entry& entry, std::uint32_t residual,
                         const std::vector<Bytes>& offered_etags) {
  Message response;
  if (!entry.etag.empty()) {
    for (const auto& offered : offered_etags) {
      if (offered == entry.etag) {
        response.code = k_code_valid;
        response.add_option(k_opt_etag, entry.etag);
        response.add_option_uint(k_opt_max_age, residual);
        return response;
      }
    }
  }
  response.code = entry.code;
  if (!entry.etag.empty()) {
    response.add_option(k_opt_etag, entry.etag);
  }
  if (entry.content_format) {
    response.add_option_uint(k_opt_content_format, *entry.content_format);
  }
  response.add_option_uint(k_opt_max_age, residual);
  response.payload = entry.payload;
  return response;
}

}  // namespace dnscoap::coap
