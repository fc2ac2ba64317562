#include "dnscoap/proxy.hpp"

#include <algorithm>
#include <charconv>

namespace dnscoap::proxy {

using coap::Message;

std::string ProxyTarget::peer() const {
  if (port) {
    return host + ":" + std::to_string(*port);
  }
  return host;
}

std::optional<ProxyTarget> parse_proxy_uri(std::string_view uri) {
  ProxyTarget target;
  std::size_t scheme_end = uri.find("://");
  if (scheme_end == std::string_view::npos) {
    return std::nullopt;
  }
  target.scheme = std::string(uri.substr(0, scheme_end));
  if (target.scheme != "coap" && target.scheme != "coaps") {
    return std::nullopt;
  }
  std::string_view rest = uri.substr(scheme_end + 3);

  std::size_t authority_end = rest.find_first_of("/?");
  std::string_view authority = rest.substr(0, authority_end);
  std::size_t colon = authority.rfind(':');
  if (colon != std::string_view::npos) {
    std::string_view digits = authority.substr(colon + 1);
    std::uint32_t port = 0;
    auto [ptr, ec] = std::from_chars(digits.begin(), digits.end(), port);
    if (ec != std::errc{} || ptr != digits.end() || port == 0 || port > 0xFFFF) {
      return std::nullopt;
    }
    target.port = static_cast<std::uint16_t>(port);
    authority = authority.substr(0, colon);
  }
  if (authority.empty()) {
    return std::nullopt;
  }
  target.host = std::string(authority);

  if (authority_end == std::string_view::npos) {
    target.path = "/";
    return target;
  }
  rest = rest.substr(authority_end);
  std::size_t query_start = rest.find('?');
  target.path = std::string(rest.substr(0, query_start));
  if (target.path.empty() || target.path[0] != '/') {
    target.path = "/" + target.path;
  }
  if (query_start != std::string_view::npos) {
    std::string_view query = rest.substr(query_start + 1);
    while (!query.empty()) {
      std::size_t amp = query.find('&');
      target.query.emplace_back(query.substr(0, amp));
      if (amp == std::string_view::npos) break;
      query = query.substr(amp + 1);
    }
  }
  return target;
}

void CacheFlow::note(double now, const std::string& kind) {
  if (on_cache_event) {
    on_cache_event(now, kind);
  }
}

void CacheFlow::handle(Message request, double now, const Forward& forward,
                       Serve serve) {
  cache_.evict(now);
  auto key = coap::cache_key(request);
  if (!key) {
    // POST: pass through untouched, no cache state change
    forward(std::move(request), std::move(serve));
    return;
  }

  std::vector<Bytes> offered;
  for (const auto* opt : request.find_options(coap::k_opt_etag)) {
    offered.push_back(opt->value);
  }

  auto found = cache_.lookup(*key, now);
  if (found.state == coap::CoapCache::State::fresh) {
    ++counters_.hits;
    note(now, "hit");
    Message response = serve_from_entry(*found.entry, found.residual, offered);
    serve(coap::Outcome::ok, &response);
    return;
  }

  bool revalidating = found.state == coap::CoapCache::State::stale;
  if (revalidating) {
    ++counters_.stale_hits;
    note(now, "stale-hit");
  } else {
    ++counters_.misses;
    note(now, "miss");
  }

  auto inflight = in_flight_.find(*key);
  if (inflight != in_flight_.end()) {
    ++counters_.coalesced;
    inflight->second.push_back({std::move(serve), std::move(offered)});
    return;
  }

  if (!revalidating && !offered.empty()) {
    // a requester-supplied ETag on a miss: the 2.03 it may provoke is
    // only usable by this requester, so skip coalescing
    auto key_copy = *key;
    forward(std::move(request),
            [this, key_copy, serve = std::move(serve)](coap::Outcome outcome,
                                                       const Message* response) {
              if (outcome == coap::Outcome::ok &&
                  response->code == coap::k_code_content) {
                cache_.store(key_copy, *response, clock_());
              }
              serve(outcome, response);
            });
    return;
  }

  in_flight_[*key].push_back({std::move(serve), std::move(offered)});
  cache_.pin(*key);

  Message upstream = std::move(request);
  if (revalidating) {
    upstream.remove_options(coap::k_opt_etag);
    upstream.add_option(coap::k_opt_etag, found.entry->etag);
  }
  auto key_copy = *key;
  forward(std::move(upstream),
          [this, key_copy, revalidating](coap::Outcome outcome,
                                         const Message* response) {
            complete(key_copy, revalidating, outcome, response);
          });
}

void CacheFlow::complete(const coap::CacheKey& key, bool revalidating,
                         coap::Outcome outcome, const Message* response) {
  double done = clock_();
  auto waiters = std::move(in_flight_[key]);
  in_flight_.erase(key);
  cache_.unpin(key);

  if (outcome != coap::Outcome::ok) {
    ++counters_.upstream_failures;
    for (auto& waiter : waiters) {
      waiter.serve(outcome, nullptr);
    }
    return;
  }

  if (response->code == coap::k_code_valid && revalidating) {
    std::uint32_t max_age = coap::k_default_cache_max_age;
    if (auto opt = response->find_option(coap::k_opt_max_age)) {
      max_age = static_cast<std::uint32_t>(coap::uint_option_value(opt->value));
    }
    // trust the revalidation's Max-Age: restart the freshness window
    cache_.refresh(key, max_age, done);
    ++counters_.revalidations_ok;
    note(done, "revalidation-ok");
  } else if (response->code == coap::k_code_content) {
    cache_.store(key, *response, done);
    if (revalidating) {
      ++counters_.revalidations_full;
      note(done, "revalidation-full");
    }
  } else {
    // errors and other codes are relayed, never cached
    for (auto& waiter : waiters) {
      waiter.serve(coap::Outcome::ok, response);
    }
    return;
  }

  auto found = cache_.lookup(key, done);
  if (found.state == coap::CoapCache::State::fresh ||
      found.state == coap::CoapCache::State::stale) {
    for (auto& waiter : waiters) {
      Message out = serve_from_entry(*found.entry, found.residual, waiter.offered);
      waiter.serve(coap::Outcome::ok, &out);
    }
    return;
  }
  for (auto& waiter : waiters) {  // entry vanished; relay the raw response
    waiter.serve(coap::Outcome::ok, response);
  }
}

CoapProxy::CoapProxy(coap::CoapEndpoint& endpoint, Config cfg)
    : endpoint_(endpoint), cfg_(std::move(cfg)),
      flow_(cfg_.cache, [&endpoint] { return endpoint.now(); }) {}

coap::CoapEndpoint::RequestHandler CoapProxy::handler() {
  return [this](const Message& request, const std::string&,
                coap::CoapEndpoint::Responder respond) {
    std::string peer;
    Message upstream;

    if (auto proxy_uri = request.find_option(coap::k_opt_proxy_uri)) {
      std::string uri(proxy_uri->value.begin(), proxy_uri->value.end());
      auto target = parse_proxy_uri(uri);
      if (!target) {
        Message bad;
        bad.code = coap::k_code_bad_option;
        respond(std::move(bad));
        return;
      }
      peer = target->peer();
      upstream.type = coap::Type::con;
      upstream.code = request.code;
      std::string_view path = target->path;
      while (!path.empty()) {
        if (path[0] == '/') {
          path.remove_prefix(1);
          continue;
        }
        std::size_t slash = std::min(path.find('/'), path.size());
        upstream.add_option_string(coap::k_opt_uri_path, path.substr(0, slash));
        path.remove_prefix(slash);
      }
      for (const auto& pair : target->query) {
        upstream.add_option_string(coap::k_opt_uri_query, pair);
      }
      // representation-selecting options travel along, addressing does not
      for (std::uint16_t number : {coap::k_opt_content_format, coap::k_opt_accept,
                                   coap::k_opt_etag}) {
        for (const auto* opt : request.find_options(number)) {
          upstream.add_option(number, opt->value);
        }
      }
      upstream.payload = request.payload;
    } else if (!cfg_.default_upstream.empty()) {
      peer = cfg_.default_upstream;
      upstream = request;
      upstream.type = coap::Type::con;
      upstream.message_id = 0;
      upstream.token.clear();
    } else {
      Message bad;
      bad.code = coap::k_code_bad_request;
      respond(std::move(bad));
      return;
    }

    double now = endpoint_.now();
    auto forward = [this, peer](Message msg, CacheFlow::Serve cb) {
      endpoint_.send_request(std::move(msg), peer, std::move(cb), endpoint_.now());
    };
    flow_.handle(std::move(upstream), now, forward,
                 [respond](coap::Outcome outcome, const Message* response) {
                   if (outcome != coap::Outcome::ok) {
                     Message timeout;
                     timeout.code = coap::k_code_gateway_timeout;
                     respond(std::move(timeout));
                     return;
                   }
                   respond(Message(*response));
                 });
  };
}

ClientCoapCache::ClientCoapCache(coap::CoapEndpoint& endpoint,
                                 coap::CoapCache::Config cfg)
    : endpoint_(endpoint), flow_(cfg, [&endpoint] { return endpoint.now(); }) {}

void ClientCoapCache::send(Message request, const std::string& peer,
                           coap::CoapEndpoint::ResponseCallback cb, double now) {
  auto forward = [this, peer, now](Message msg, CacheFlow::Serve serve) {
    endpoint_.send_request(std::move(msg), peer, std::move(serve),
                           std::max(now, endpoint_.now()));
  };
  flow_.handle(std::move(request), now, forward, std::move(cb));
}

}  // namespace dnscoap::proxy
