#include "dnscoap/doc_client.hpp"

#include <cmath>

namespace dnscoap::doc {

using coap::Message;

namespace {

std::uint32_t max_age_of(const Message& response) {
  if (auto opt = response.find_option(coap::k_opt_max_age)) {
    return static_cast<std::uint32_t>(coap::uint_option_value(opt->value));
  }
  return k_default_max_age;
}

// A response-shaped message around a cached payload, so TTL
// restoration runs through the same path as live responses.
Message synthesize(const Bytes& payload, std::uint16_t format,
                   std::uint32_t max_age) {
  Message msg;
  msg.code = coap::k_code_content;
  msg.add_option_uint(coap::k_opt_content_format, format);
  msg.add_option_uint(coap::k_opt_max_age, max_age);
  msg.payload = payload;
  return msg;
}

}  // namespace

DocClient::DocClient(coap::CoapEndpoint& endpoint, ClientConfig cfg,
                     std::string server, Rng rng)
    : endpoint_(endpoint), cfg_(std::move(cfg)), server_(std::move(server)),
      rng_(rng) {}

std::string DocClient::cache_key(const dns::Question& question) {
  return question.name.to_string() + "/" + std::to_string(question.rtype) + "/" +
         std::to_string(question.rclass);
}

void DocClient::note(double now, const std::string& kind) {
  if (on_cache_event) {
    on_cache_event(now, kind);
  }
}

void DocClient::resolve(const dns::Question& question, double now, Callback cb) {
  dns::Message query;
  query.id = 0;  // cache-friendly: the token disambiguates, not the DNS id
  query.flags = dns::k_flag_rd;
  query.question = question;

  std::string key = cache_key(question);
  if (cache_enabled_) {
    auto it = cache_.find(key);
    if (it != cache_.end()) {
      if (now < it->second.expires_at) {
        auto residual =
            static_cast<std::uint32_t>(std::floor(it->second.expires_at - now));
        ResolveResult result;
        result.status = ResolveResult::Status::ok;
        result.from_cache = true;
        result.cache_kind = "hit";
        result.answer = accept_response(
            synthesize(it->second.payload, it->second.format, residual),
            cfg_.scheme, query, rng_, cfg_.compact_content_format);
        ++counters_.hits;
        note(now, "hit");
        cb(result);
        return;
      }
      if (!it->second.etag.empty() && cfg_.method != Method::post) {
        Message request = build_request(query, cfg_);
        request.add_option(coap::k_opt_etag, it->second.etag);
        dispatch(query, std::move(request), key, now, /*revalidating=*/true,
                 std::move(cb));
        return;
      }
      cache_.erase(it);  // expired and not revalidatable
    }
  }
  dispatch(query, build_request(query, cfg_), key, now, /*revalidating=*/false,
           std::move(cb));
}

void DocClient::dispatch(const dns::Message& query, Message request,
                         const std::string& key, double now, bool revalidating,
                         Callback cb) {
  auto handle = [this, query, key, now, revalidating, cb = std::move(cb)](
                    coap::Outcome outcome, const Message* response) {
    double done = endpoint_.now();
    ResolveResult result;
    result.rtt = done - now;

    if (outcome != coap::Outcome::ok) {
      result.status = outcome == coap::Outcome::timeout
                          ? ResolveResult::Status::timeout
                          : ResolveResult::Status::reset;
      ++counters_.failures;
      cb(result);
      return;
    }

    if (revalidating && response->code == coap::k_code_valid) {
      auto& entry = cache_[key];
      std::uint32_t max_age = max_age_of(*response);
      entry.expires_at = done + max_age;
      result.status = ResolveResult::Status::ok;
      result.cache_kind = "revalidation-ok";
      result.answer =
          accept_response(synthesize(entry.payload, entry.format, max_age),
                          cfg_.scheme, query, rng_, cfg_.compact_content_format);
      ++counters_.revalidations_ok;
      note(done, "revalidation-ok");
      cb(result);
      return;
    }

    if (coap::code_class(response->code) == 2 && !response->payload.empty()) {
      try {
        result.answer = accept_response(*response, cfg_.scheme, query, rng_,
                                        cfg_.compact_content_format);
      } catch (const std::exception& e) {
        result.status = ResolveResult::Status::error;
        result.error_text = e.what();
        ++counters_.failures;
        cb(result);
        return;
      }
      result.status = ResolveResult::Status::ok;
      result.cache_kind = revalidating ? "revalidation-full" : "miss";
      if (cache_enabled_ && cfg_.method != Method::post) {
        CacheEntry entry;
        entry.payload = response->payload;
        if (auto cf = response->option_uint(coap::k_opt_content_format)) {
          entry.format = static_cast<std::uint16_t>(*cf);
        }
        if (auto etag = response->find_option(coap::k_opt_etag)) {
          entry.etag = etag->value;
        }
        entry.expires_at = done + max_age_of(*response);
        cache_[key] = std::move(entry);
      }
      if (revalidating) {
        ++counters_.revalidations_full;
        note(done, "revalidation-full");
      } else {
        ++counters_.misses;
        note(done, "miss");
      }
      cb(result);
      return;
    }

    result.status = ResolveResult::Status::error;
    result.error_text = coap::code_to_string(response->code);
    if (revalidating) {
      cache_.erase(key);  // the entry no longer stands behind anything
    }
    ++counters_.failures;
    cb(result);
  };

  if (transport_) {
    transport_(std::move(request), server_, std::move(handle), now);
  } else if (cfg_.block_size) {
    coap::send_request_blockwise(endpoint_, std::move(request), server_,
                                 *cfg_.block_size, std::move(handle), now);
  } else {
    endpoint_.send_request(std::move(request), server_, std::move(handle), now);
  }
}

}  // namespace dnscoap::doc
