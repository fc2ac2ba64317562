#include "dnscoap/doc.hpp"

#include <openssl/sha.h>

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "dnscoap/base64url.hpp"
#include "dnscoap/uri_template.hpp"

namespace dnscoap::doc {

using coap::Message;

Method method_from_string(std::string_view text) {
  if (text == "fetch") return Method::fetch;
  if (text == "get") return Method::get;
  if (text == "post") return Method::post;
  throw std::invalid_argument("unknown method: " + std::string(text));
}

std::string_view method_to_string(Method method) {
  switch (method) {
    case Method::fetch: return "fetch";
    case Method::get: return "get";
    case Method::post: return "post";
  }
  return "?";
}

Scheme scheme_from_string(std::string_view text) {
  if (text == "doh-like") return Scheme::doh_like;
  if (text == "eol-ttls") return Scheme::eol_ttls;
  throw std::invalid_argument("unknown caching scheme: " + std::string(text));
}

std::string_view scheme_to_string(Scheme scheme) {
  return scheme == Scheme::doh_like ? "doh-like" : "eol-ttls";
}

Bytes make_etag(const Bytes& payload) {
  std::uint8_t digest[SHA256_DIGEST_LENGTH];
  SHA256(payload.data(), payload.size(), digest);
  return Bytes(digest, digest + 8);
}

namespace {

std::vector<std::string> path_segments(std::string_view path) {
  std::vector<std::string> segments;
  std::size_t start = 0;
  while (start < path.size()) {
    if (path[start] == '/') {
      ++start;
      continue;
    }
    std::size_t end = path.find('/', start);
    if (end == std::string_view::npos) end = path.size();
    segments.emplace_back(path.substr(start, end - start));
    start = end;
  }
  return segments;
}

void add_path_options(Message& msg, std::string_view path) {
  for (const auto& segment : path_segments(path)) {
    msg.add_option_string(coap::k_opt_uri_path, segment);
  }
}

std::string request_path(const Message& request) {
  std::string path;
  for (const auto* opt : request.find_options(coap::k_opt_uri_path)) {
    path += '/';
    path.append(opt->value.begin(), opt->value.end());
  }
  return path.empty() ? "/" : path;
}

Message error_response(std::uint8_t code) {
  Message msg;
  msg.code = code;
  return msg;
}

Bytes serialize_query(const dns::Message& query, const ClientConfig& cfg) {
  if (cfg.content_format == cfg.compact_content_format) {
    if (!query.question) {
      throw std::invalid_argument("compact queries need a question");
    }
    return cbordns::compress_query(*query.question);
  }
  return dns::encode(query);
}

// The format a request declares for its query, and for the answer it
// expects back: Content-Format for body-carrying methods, Accept for
// GET. Absent either, the server-configured default.
std::uint16_t request_format(const Message& request, const ServerConfig& cfg) {
  auto declared = request.code == coap::k_code_get
                      ? request.option_uint(coap::k_opt_accept)
                      : request.option_uint(coap::k_opt_content_format);
  return declared ? static_cast<std::uint16_t>(*declared) : cfg.content_format;
}

}  // namespace

Message build_request(const dns::Message& query, const ClientConfig& cfg) {
  Bytes wire = serialize_query(query, cfg);
  Message msg;
  msg.type = coap::Type::con;

  switch (cfg.method) {
    case Method::fetch:
    case Method::post: {
      msg.code = cfg.method == Method::fetch ? coap::k_code_fetch : coap::k_code_post;
      add_path_options(msg, cfg.resource_path);
      msg.add_option_uint(coap::k_opt_content_format, cfg.content_format);
      msg.payload = std::move(wire);
      return msg;
    }
    case Method::get: {
      auto vars = template_variables(cfg.get_template);
      if (vars.size() != 1) {
        throw std::invalid_argument("GET template must bind exactly one variable");
      }
      auto expansion =
          expand_template(cfg.get_template, {{vars[0], base64url_encode(wire)}});
      msg.code = coap::k_code_get;
      add_path_options(msg, expansion.path);
      for (const auto& [name, value] : expansion.query) {
        std::string pair = name + "=" + value;
        if (pair.size() > k_uri_query_capacity) {
          throw std::invalid_argument(
              "query too large for a GET Uri-Query option; use FETCH");
        }
        msg.add_option_string(coap::k_opt_uri_query, pair);
      }
      msg.add_option_uint(coap::k_opt_accept, cfg.content_format);
      return msg;
    }
  }
  throw std::logic_error("unreachable");
}

namespace {

dns::Message parse_query(const Bytes& blob, std::uint16_t format,
                         const ServerConfig& cfg) {
  if (format == cfg.compact_content_format) {
    dns::Message query;
    query.flags = dns::k_flag_rd;
    query.question = cbordns::decompress_query(blob);
    return query;
  }
  return dns::decode(blob);
}

// Pulls the DNS query out of a request, from the body or the base64url
// query variable. nullopt means 4.00.
std::optional<dns::Message> extract_query(const Message& request,
                                          const ServerConfig& cfg,
                                          std::uint16_t format) {
  try {
    if (request.code == coap::k_code_get) {
      std::string prefix = cfg.get_variable + "=";
      for (const auto* opt : request.find_options(coap::k_opt_uri_query)) {
        std::string pair(opt->value.begin(), opt->value.end());
        if (pair.rfind(prefix, 0) == 0) {
          return parse_query(base64url_decode(pair.substr(prefix.size())), format, cfg);
        }
      }
      return std::nullopt;
    }
    if (request.payload.empty()) {
      return std::nullopt;
    }
    return parse_query(request.payload, format, cfg);
  } catch (const ParseError&) {
    return std::nullopt;
  }
}

}  // namespace

Message serve(const Message& request, Resolver& resolver, const ServerConfig& cfg) {
  bool doc_method = request.code == coap::k_code_fetch ||
                    request.code == coap::k_code_get ||
                    request.code == coap::k_code_post;
  if (!doc_method) {
    return error_response(coap::k_code_method_not_allowed);
  }
  if (request_path(request) != cfg.resource_path) {
    return error_response(coap::k_code_not_found);
  }
  std::uint16_t format = request_format(request, cfg);
  auto query = extract_query(request, cfg, format);
  if (!query || !query->question) {
    return error_response(coap::k_code_bad_request);
  }

  std::vector<dns::Record> records;
  try {
    records = resolver.resolve(*query->question);
  } catch (const std::exception&) {
    return error_response(coap::k_code_internal_error);
  }

  dns::Message answer = dns::build_response(*query->question, std::move(records),
                                            query->id);
  dns::sort_records(answer);
  auto lifetime = dns::min_ttl(answer);
  if (cfg.scheme == Scheme::eol_ttls) {
    dns::rewrite_ttls(answer, 0);
  }
  Bytes payload;
  try {
    payload = format == cfg.compact_content_format
                  ? cbordns::compress_response(answer, *query->question)
                  : dns::encode(answer);
  } catch (const std::exception&) {
    return error_response(coap::k_code_internal_error);
  }
  Bytes etag = make_etag(payload);

  // POST gets a plain representation: no ETag, nothing for caches.
  bool cacheable = request.code != coap::k_code_post;

  if (cacheable) {
    for (const auto* offered : request.find_options(coap::k_opt_etag)) {
      if (offered->value == etag) {
        Message valid;
        valid.code = coap::k_code_valid;
        valid.add_option(coap::k_opt_etag, etag);
        if (lifetime) {
          valid.add_option_uint(coap::k_opt_max_age, *lifetime);
        }
        return valid;
      }
    }
  }

  Message response;
  response.code = coap::k_code_content;
  if (cacheable) {
    response.add_option(coap::k_opt_etag, etag);
  }
  response.add_option_uint(coap::k_opt_content_format, format);
  if (lifetime) {
    response.add_option_uint(coap::k_opt_max_age, *lifetime);
  }
  response.payload = std::move(payload);
  return response;
}

dns::Message accept_response(const Message& response, Scheme scheme,
                             const dns::Message& sent_query, Rng& rng,
                             std::uint16_t compact_format) {
  auto format = response.option_uint(coap::k_opt_content_format);
  dns::Message msg;
  if (format && *format == compact_format) {
    if (!sent_query.question) {
      throw std::runtime_error("compact response without the query it answers");
    }
    msg = cbordns::decompress_response(response.payload, *sent_query.question);
  } else {
    msg = dns::decode(response.payload);
  }
  if (!msg.question || !sent_query.question ||
      !(*msg.question == *sent_query.question)) {
    throw std::runtime_error("response question does not match the query");
  }

  std::uint32_t max_age = k_default_max_age;
  if (auto opt = response.find_option(coap::k_opt_max_age)) {
    max_age = static_cast<std::uint32_t>(coap::uint_option_value(opt->value));
  }

  if (scheme == Scheme::eol_ttls) {
    dns::rewrite_ttls(msg, max_age);
  } else {
    // age every record by how long the response sat in caches
    std::uint32_t original = dns::min_ttl(msg).value_or(0);
    std::uint32_t elapsed = original > max_age ? original - max_age : 0;
    auto age = [elapsed](std::vector<dns::Record>& records) {
      for (auto& r : records) {
        r.ttl = r.ttl > elapsed ? r.ttl - elapsed : 0;
      }
    };
    age(msg.answers);
    age(msg.authority);
    age(msg.additional);
  }
  dns::shuffle_records(msg, rng);
  return msg;
}

MaxAgeCheck check_max_age_consistency(std::uint32_t outer_max_age,
                                      std::uint32_t protected_max_age) {
  return outer_max_age > protected_max_age ? MaxAgeCheck::reject : MaxAgeCheck::ok;
}

ZoneFileResolver::ZoneFileResolver(const std::string& path, Rng rng) {
  rng_ = rng;
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open zone file: " + path);
  }
  std::ostringstream text;
  text << in.rdbuf();
  load(text.str());
}

ZoneFileResolver ZoneFileResolver::from_text(const std::string& json_text, Rng rng) {
  ZoneFileResolver resolver;
  resolver.rng_ = rng;
  resolver.load(json_text);
  return resolver;
}

void ZoneFileResolver::load(const std::string& json_text) {
  nlohmann::json zone = nlohmann::json::parse(json_text);
  for (const auto& [name, records] : zone.items()) {
    std::string key = dns::Name::parse(name).to_string();
    std::transform(key.begin(), key.end(), key.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    for (const auto& record : records) {
      Entry entry;
      std::string type_text = record.at("type").get<std::string>();
      auto rtype = dns::rtype_from_string(type_text);
      if (!rtype) {
        throw std::runtime_error("zone file: unknown record type " + type_text);
      }
      entry.rtype = *rtype;
      const auto& ttl = record.at("ttl");
      if (ttl.is_array()) {
        entry.ttl_lo = ttl.at(0).get<std::uint32_t>();
        entry.ttl_hi = ttl.at(1).get<std::uint32_t>();
        if (entry.ttl_lo > entry.ttl_hi) {
          throw std::runtime_error("zone file: ttl bounds out of order");
        }
      } else {
        entry.ttl_lo = entry.ttl_hi = ttl.get<std::uint32_t>();
      }
      entry.rdata = dns::rdata_from_text(entry.rtype,
                                         record.at("data").get<std::string>());
      zones_[key].push_back(std::move(entry));
    }
  }
}

std::vector<dns::Record> ZoneFileResolver::resolve(const dns::Question& question) {
  std::string key = question.name.to_string();
  std::transform(key.begin(), key.end(), key.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  std::vector<dns::Record> records;
  auto it = zones_.find(key);
  if (it == zones_.end()) {
    return records;
  }
  for (const auto& entry : it->second) {
    if (question.rtype != dns::k_type_any && entry.rtype != question.rtype) {
      continue;
    }
    dns::Record r;
    r.name = question.name;
    r.rtype = entry.rtype;
    r.rclass = dns::k_class_in;
    r.ttl = entry.ttl_lo == entry.ttl_hi
                ? entry.ttl_lo
                : static_cast<std::uint32_t>(rng_.uniform_int(entry.ttl_lo, entry.ttl_hi));
    r.rdata = entry.rdata;
    records.push_back(std::move(r));
  }
  return records;
}

coap::CoapEndpoint::RequestHandler make_doc_handler(
    Resolver& resolver, ServerConfig cfg, std::optional<std::size_t> block_size,
    std::function<void(const Message&, const Message&)> on_serve) {
  auto handler = [&resolver, cfg = std::move(cfg), on_serve = std::move(on_serve)](
                     const Message& request, const std::string&,
                     coap::CoapEndpoint::Responder respond) {
    Message response = serve(request, resolver, cfg);
    if (on_serve) {
      on_serve(request, response);
    }
    respond(std::move(response));
  };
  if (block_size) {
    return coap::blockwise_server(std::move(handler), *block_size);
  }
  return handler;
}

}  // namespace dnscoap::doc
