#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "dnscoap/base64url.hpp"
#include "dnscoap/doc.hpp"
#include "dnscoap/doc_client.hpp"
#include "dnscoap/uri_template.hpp"
#include "test_net.hpp"

using namespace dnscoap;
using namespace dnscoap::doc;
using dnscoap::testing::NetPort;
using dnscoap::testing::TestNet;

namespace {

dns::Question question_for(const std::string& name,
                           std::uint16_t rtype = dns::k_type_aaaa) {
  return dns::Question{dns::Name::parse(name), rtype, dns::k_class_in};
}

dns::Message query_for(const std::string& name,
                       std::uint16_t rtype = dns::k_type_aaaa) {
  dns::Message msg;
  msg.flags = dns::k_flag_rd;
  msg.question = question_for(name, rtype);
  return msg;
}

dns::Record record(const std::string& name, std::uint32_t ttl,
                   const std::string& addr, std::uint16_t rtype = dns::k_type_aaaa) {
  return dns::Record{dns::Name::parse(name), rtype, dns::k_class_in, ttl,
                     dns::rdata_from_text(rtype, addr)};
}

// 24 presentation characters, so the query is exactly 42 octets
const std::string k_ref_name = "abcdefgh.ijklmnopqr.test";

std::vector<std::uint32_t> answer_ttls(const dns::Message& msg) {
  std::vector<std::uint32_t> ttls;
  for (const auto& r : msg.answers) ttls.push_back(r.ttl);
  std::sort(ttls.begin(), ttls.end());
  return ttls;
}

}  // namespace

TEST_CASE("base64url matches the reference vectors, unpadded") {
  auto enc = [](const std::string& s) {
    return base64url_encode(Bytes(s.begin(), s.end()));
  };
  CHECK(enc("") == "");
  CHECK(enc("f") == "Zg");
  CHECK(enc("fo") == "Zm8");
  CHECK(enc("foo") == "Zm9v");
  CHECK(enc("foob") == "Zm9vYg");
  CHECK(enc("fooba") == "Zm9vYmE");
  CHECK(enc("foobar") == "Zm9vYmFy");
  CHECK(base64url_encode(Bytes{0xFB, 0xFF}) == "-_8");  // url-safe alphabet

  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    Bytes data(rng.uniform(100), 0);
    for (auto& b : data) b = static_cast<std::uint8_t>(rng.uniform(256));
    std::string text = base64url_encode(data);
    CHECK(text.find('=') == std::string::npos);
    CHECK(text.size() == (data.size() * 4 + 2) / 3);
    CHECK(base64url_decode(text) == data);
  }

  CHECK_THROWS_AS(base64url_decode("Zg=="), ParseError);  // padding rejected
  CHECK_THROWS_AS(base64url_decode("A"), ParseError);     // impossible length
  CHECK_THROWS_AS(base64url_decode("Zh"), ParseError);    // nonzero trailing bits
  CHECK_THROWS_AS(base64url_decode("a+b/"), ParseError);  // base64 (non-url) chars
}

TEST_CASE("uri template expansion") {
  auto exp = expand_template("/dns{?dns}", {{"dns", "AAAA"}});
  CHECK(exp.path == "/dns");
  REQUIRE(exp.query.size() == 1);
  CHECK(exp.query[0] == std::pair<std::string, std::string>{"dns", "AAAA"});

  auto path = expand_template("/r/{v}", {{"v", "a b"}});
  CHECK(path.path == "/r/a%20b");
  CHECK(path.query.empty());

  auto plain = expand_template("/just/literals", {});
  CHECK(plain.path == "/just/literals");
  CHECK(plain.query.empty());

  CHECK_THROWS_AS(expand_template("/x{?missing}", {}), std::invalid_argument);
  CHECK_THROWS_AS(expand_template("/x{+y}", {{"y", "a"}}), std::invalid_argument);
  CHECK_THROWS_AS(expand_template("/x{unclosed", {}), std::invalid_argument);

  CHECK(template_variables("/dns{?dns}") == std::vector<std::string>{"dns"});
  CHECK(template_variables("/a/{b}{?c,d}") ==
        std::vector<std::string>{"b", "c", "d"});
}

TEST_CASE("request sizes: FETCH 56 octets, GET 75, ratio above 1.3") {
  dns::Message query = query_for(k_ref_name);
  CHECK(dns::encode(query).size() == 42);

  ClientConfig fetch_cfg;
  coap::Message fetch = build_request(query, fetch_cfg);
  fetch.token = {0x00, 0x01};
  CHECK(fetch.code == coap::k_code_fetch);
  CHECK(coap::encode(fetch).size() == 56);

  ClientConfig get_cfg;
  get_cfg.method = Method::get;
  coap::Message get = build_request(query, get_cfg);
  get.token = {0x00, 0x01};
  CHECK(get.code == coap::k_code_get);
  CHECK(get.payload.empty());
  auto uri_query = get.find_option(coap::k_opt_uri_query);
  REQUIRE(uri_query != nullptr);
  // 42 octets -> 56 base64url chars, no padding
  CHECK(uri_query->value.size() == 4 + 56);
  std::string value(uri_query->value.begin(), uri_query->value.end());
  CHECK(value.substr(0, 4) == "dns=");
  CHECK(base64url_decode(value.substr(4)) == dns::encode(query));
  CHECK(get.find_option(coap::k_opt_accept) != nullptr);
  std::size_t get_size = coap::encode(get).size();
  CHECK(get_size == 75);
  CHECK(static_cast<double>(get_size) / 56.0 >= 1.3);

  ClientConfig post_cfg;
  post_cfg.method = Method::post;
  coap::Message post = build_request(query, post_cfg);
  post.token = {0x00, 0x01};
  CHECK(post.code == coap::k_code_post);
  CHECK(post.payload == fetch.payload);
  CHECK(coap::encode(post).size() == 56);
}

TEST_CASE("oversized GET queries advise FETCH") {
  std::string long_name;
  for (int i = 0; i < 12; ++i) long_name += "verylonglabelpadding";
  long_name += ".example";  // > 250 presentation chars
  // keep each label legal
  std::string name;
  for (int i = 0; i < 10; ++i) name += "abcdefghijklmnopqrstuvw.";
  name += "test";
  dns::Message query = query_for(name);
  ClientConfig cfg;
  cfg.method = Method::get;
  CHECK_THROWS_WITH_AS(build_request(query, cfg),
                       doctest::Contains("FETCH"), std::invalid_argument);
}

TEST_CASE("etag is the truncated payload digest") {
  // sha256("abc") = ba7816bf 8f01cfea ...
  CHECK(make_etag(Bytes{'a', 'b', 'c'}) == from_hex("ba7816bf8f01cfea"));
  Bytes payload(40, 0x55);
  Bytes other = payload;
  other[20] ^= 0x01;
  CHECK(make_etag(payload).size() == 8);
  CHECK(make_etag(payload) == make_etag(payload));
  CHECK(make_etag(payload) != make_etag(other));
}

TEST_CASE("serve: scheme decides wire TTLs, Max-Age is the minimum TTL") {
  FunctionResolver resolver([](const dns::Question& q) {
    return std::vector<dns::Record>{record(q.name.to_string(), 300, "2001:db8::2"),
                                    record(q.name.to_string(), 60, "2001:db8::1")};
  });
  coap::Message request = build_request(query_for("cache.test"), ClientConfig{});

  ServerConfig doh;
  doh.scheme = Scheme::doh_like;
  coap::Message r1 = serve(request, resolver, doh);
  CHECK(r1.code == coap::k_code_content);
  CHECK(coap::uint_option_value(r1.find_option(coap::k_opt_max_age)->value) == 60);
  CHECK(coap::uint_option_value(r1.find_option(coap::k_opt_content_format)->value) ==
        553);
  REQUIRE(r1.find_option(coap::k_opt_etag) != nullptr);
  CHECK(r1.find_option(coap::k_opt_etag)->value == make_etag(r1.payload));
  dns::Message m1 = dns::decode(r1.payload);
  CHECK(m1.qr());
  CHECK(answer_ttls(m1) == std::vector<std::uint32_t>{60, 300});

  ServerConfig eol;
  eol.scheme = Scheme::eol_ttls;
  coap::Message r2 = serve(request, resolver, eol);
  CHECK(coap::uint_option_value(r2.find_option(coap::k_opt_max_age)->value) == 60);
  dns::Message m2 = dns::decode(r2.payload);
  CHECK(answer_ttls(m2) == std::vector<std::uint32_t>{0, 0});

  // server-side canonical order: sorted by (rtype, rdata)
  for (std::size_t i = 1; i < m2.answers.size(); ++i) {
    CHECK(std::pair(m2.answers[i - 1].rtype, m2.answers[i - 1].rdata) <=
          std::pair(m2.answers[i].rtype, m2.answers[i].rdata));
  }
}

TEST_CASE("EolTtls payloads ignore upstream TTL churn, DohLike payloads do not") {
  std::uint32_t upstream_ttl = 60;
  FunctionResolver resolver([&](const dns::Question& q) {
    return std::vector<dns::Record>{
        record(q.name.to_string(), upstream_ttl, "2001:db8::1")};
  });
  coap::Message request = build_request(query_for("stable.test"), ClientConfig{});

  ServerConfig eol;
  eol.scheme = Scheme::eol_ttls;
  ServerConfig doh;
  doh.scheme = Scheme::doh_like;

  coap::Message eol_a = serve(request, resolver, eol);
  coap::Message doh_a = serve(request, resolver, doh);
  upstream_ttl = 37;
  coap::Message eol_b = serve(request, resolver, eol);
  coap::Message doh_b = serve(request, resolver, doh);

  CHECK(eol_a.payload == eol_b.payload);
  CHECK(eol_a.find_option(coap::k_opt_etag)->value ==
        eol_b.find_option(coap::k_opt_etag)->value);
  CHECK(coap::uint_option_value(eol_b.find_option(coap::k_opt_max_age)->value) == 37);

  CHECK(doh_a.payload != doh_b.payload);
  CHECK(doh_a.find_option(coap::k_opt_etag)->value !=
        doh_b.find_option(coap::k_opt_etag)->value);
}

TEST_CASE("revalidation: matching ETag gets 2.03 Valid without payload") {
  std::uint32_t upstream_ttl = 60;
  FunctionResolver resolver([&](const dns::Question& q) {
    return std::vector<dns::Record>{
        record(q.name.to_string(), upstream_ttl, "2001:db8::1")};
  });
  ServerConfig eol;
  eol.scheme = Scheme::eol_ttls;

  coap::Message first = serve(build_request(query_for("reval.test"), ClientConfig{}),
                              resolver, eol);
  Bytes etag = first.find_option(coap::k_opt_etag)->value;

  // TTLs moved on upstream, record set unchanged: still valid
  upstream_ttl = 41;
  coap::Message reval_req = build_request(query_for("reval.test"), ClientConfig{});
  reval_req.add_option(coap::k_opt_etag, etag);
  coap::Message valid = serve(reval_req, resolver, eol);
  CHECK(valid.code == coap::k_code_valid);
  CHECK(valid.payload.empty());
  CHECK(valid.find_option(coap::k_opt_etag)->value == etag);
  CHECK(coap::uint_option_value(valid.find_option(coap::k_opt_max_age)->value) == 41);

  // same movement under DohLike: digest covers the TTLs, so full response
  ServerConfig doh;
  doh.scheme = Scheme::doh_like;
  coap::Message doh_first =
      serve(build_request(query_for("reval.test"), ClientConfig{}), resolver, doh);
  upstream_ttl = 29;
  coap::Message doh_reval = build_request(query_for("reval.test"), ClientConfig{});
  doh_reval.add_option(coap::k_opt_etag,
                       doh_first.find_option(coap::k_opt_etag)->value);
  coap::Message full = serve(doh_reval, resolver, doh);
  CHECK(full.code == coap::k_code_content);
  CHECK(!full.payload.empty());

  // record set changed: full response under both schemes
  FunctionResolver changed([](const dns::Question& q) {
    return std::vector<dns::Record>{record(q.name.to_string(), 41, "2001:db8::9")};
  });
  coap::Message changed_resp = serve(reval_req, changed, eol);
  CHECK(changed_resp.code == coap::k_code_content);
  CHECK(!changed_resp.payload.empty());
}

TEST_CASE("serve rejects what it cannot handle") {
  FunctionResolver resolver(
      [](const dns::Question&) { return std::vector<dns::Record>{}; });
  ServerConfig cfg;

  coap::Message put;
  put.code = coap::make_code(0, 3);
  put.add_option_string(coap::k_opt_uri_path, "dns");
  CHECK(serve(put, resolver, cfg).code == coap::k_code_method_not_allowed);

  coap::Message wrong_path = build_request(query_for("x.test"), ClientConfig{});
  wrong_path.remove_options(coap::k_opt_uri_path);
  wrong_path.add_option_string(coap::k_opt_uri_path, "time");
  CHECK(serve(wrong_path, resolver, cfg).code == coap::k_code_not_found);

  coap::Message garbage = build_request(query_for("x.test"), ClientConfig{});
  garbage.payload = Bytes{1, 2, 3};
  CHECK(serve(garbage, resolver, cfg).code == coap::k_code_bad_request);

  coap::Message empty_fetch = build_request(query_for("x.test"), ClientConfig{});
  empty_fetch.payload.clear();
  CHECK(serve(empty_fetch, resolver, cfg).code == coap::k_code_bad_request);

  ClientConfig get_cfg;
  get_cfg.method = Method::get;
  coap::Message no_var = build_request(query_for("x.test"), get_cfg);
  no_var.remove_options(coap::k_opt_uri_query);
  no_var.add_option_string(coap::k_opt_uri_query, "other=abc");
  CHECK(serve(no_var, resolver, cfg).code == coap::k_code_bad_request);

  FunctionResolver broken(
      [](const dns::Question&) -> std::vector<dns::Record> {
        throw std::runtime_error("upstream funeral");
      });
  coap::Message ok_req = build_request(query_for("x.test"), ClientConfig{});
  CHECK(serve(ok_req, broken, cfg).code == coap::k_code_internal_error);
}

TEST_CASE("POST responses carry no cache machinery") {
  FunctionResolver resolver([](const dns::Question& q) {
    return std::vector<dns::Record>{record(q.name.to_string(), 60, "2001:db8::1")};
  });
  ClientConfig cfg;
  cfg.method = Method::post;
  coap::Message request = build_request(query_for("post.test"), cfg);
  coap::Message response = serve(request, resolver, ServerConfig{});
  CHECK(response.code == coap::k_code_content);
  CHECK(response.find_option(coap::k_opt_etag) == nullptr);
  CHECK(!response.payload.empty());

  // even an offered ETag never turns into 2.03 for POST
  Bytes etag = make_etag(response.payload);
  coap::Message replay = request;
  replay.add_option(coap::k_opt_etag, etag);
  CHECK(serve(replay, resolver, ServerConfig{}).code == coap::k_code_content);
}

TEST_CASE("accept_response restores TTLs per scheme") {
  dns::Message sent = query_for("restore.test");
  Rng rng(11);

  auto build = [&](std::vector<std::uint32_t> ttls, std::optional<std::uint32_t> ma) {
    std::vector<dns::Record> records;
    int i = 0;
    for (auto ttl : ttls) {
      records.push_back(record("restore.test", ttl,
                               "2001:db8::" + std::to_string(++i)));
    }
    dns::Message msg = dns::build_response(*sent.question, records);
    coap::Message resp;
    resp.code = coap::k_code_content;
    if (ma) resp.add_option_uint(coap::k_opt_max_age, *ma);
    resp.payload = dns::encode(msg);
    return resp;
  };

  CHECK(answer_ttls(accept_response(build({0, 0}, 45), Scheme::eol_ttls, sent, rng)) ==
        std::vector<std::uint32_t>{45, 45});
  CHECK(answer_ttls(accept_response(build({60, 300}, 45), Scheme::doh_like, sent,
                                    rng)) == std::vector<std::uint32_t>{45, 285});
  // Max-Age equal to the minimum TTL: nothing aged
  CHECK(answer_ttls(accept_response(build({60, 300}, 60), Scheme::doh_like, sent,
                                    rng)) == std::vector<std::uint32_t>{60, 300});
  // absent Max-Age: protocol default 60
  CHECK(answer_ttls(accept_response(build({0, 0}, std::nullopt), Scheme::eol_ttls,
                                    sent, rng)) == std::vector<std::uint32_t>{60, 60});

  dns::Message other = query_for("other.test");
  CHECK_THROWS_AS(accept_response(build({0}, 45), Scheme::eol_ttls, other, rng),
                  std::runtime_error);
}

TEST_CASE("restored TTLs never go negative nor exceed the upstream values") {
  Rng rng(23);
  dns::Message sent = query_for("prop.test");
  for (int i = 0; i < 300; ++i) {
    std::vector<dns::Record> records;
    std::uint32_t upstream_min = 0xFFFFFFFF;
    int n = static_cast<int>(rng.uniform_int(1, 5));
    for (int j = 0; j < n; ++j) {
      auto ttl = static_cast<std::uint32_t>(rng.uniform(4000));
      upstream_min = std::min(upstream_min, ttl);
      records.push_back(record("prop.test", ttl, "2001:db8::" + std::to_string(j)));
    }
    dns::Message msg = dns::build_response(*sent.question, records);
    coap::Message resp;
    resp.code = coap::k_code_content;
    // any Max-Age, including ones above the minimum TTL
    auto ma = static_cast<std::uint32_t>(rng.uniform(5000));
    resp.add_option_uint(coap::k_opt_max_age, ma);
    resp.payload = dns::encode(msg);

    dns::Message out = accept_response(resp, Scheme::doh_like, sent, rng);
    REQUIRE(out.answers.size() == records.size());
    // multiset of (type, rdata) preserved; compare sorted
    dns::sort_records(out);
    std::vector<Bytes> got, want;
    for (const auto& r : out.answers) got.push_back(r.rdata);
    for (const auto& r : records) want.push_back(r.rdata);
    std::sort(want.begin(), want.end());
    CHECK(got == want);
    std::uint32_t elapsed = upstream_min > ma ? upstream_min - ma : 0;
    for (const auto& r : out.answers) {
      CHECK(r.ttl <= 4000);  // never above any upstream ttl bound
      // aged by exactly `elapsed`, floored at zero: recompute per record
      bool matched = false;
      for (const auto& orig : records) {
        if (orig.rdata == r.rdata &&
            r.ttl == (orig.ttl > elapsed ? orig.ttl - elapsed : 0)) {
          matched = true;
          break;
        }
      }
      CHECK(matched);
    }
  }
}

TEST_CASE("max-age consistency guard") {
  CHECK(check_max_age_consistency(45, 60) == MaxAgeCheck::ok);
  CHECK(check_max_age_consistency(90, 60) == MaxAgeCheck::reject);
  CHECK(check_max_age_consistency(60, 60) == MaxAgeCheck::ok);
  CHECK(check_max_age_consistency(0, 0) == MaxAgeCheck::ok);
}

TEST_CASE("zone file resolver") {
  const char* zone = R"({
    "example.org": [
      {"type": "AAAA", "ttl": 3600, "data": "2001:db8::1"},
      {"type": "AAAA", "ttl": [10, 20], "data": "2001:db8::2"},
      {"type": "A", "ttl": 300, "data": "192.0.2.7"}
    ],
    "txt.example.org": [
      {"type": "TXT", "ttl": 60, "data": "hello"}
    ]
  })";
  auto resolver = ZoneFileResolver::from_text(zone, Rng(7));

  auto aaaa = resolver.resolve(question_for("example.org"));
  REQUIRE(aaaa.size() == 2);
  CHECK(aaaa[0].rtype == dns::k_type_aaaa);
  for (int i = 0; i < 50; ++i) {
    auto again = resolver.resolve(question_for("EXAMPLE.ORG"));
    REQUIRE(again.size() == 2);
    for (const auto& r : again) {
      if (r.rdata == dns::rdata_from_text(dns::k_type_aaaa, "2001:db8::2")) {
        CHECK(r.ttl >= 10);
        CHECK(r.ttl <= 20);
      } else {
        CHECK(r.ttl == 3600);
      }
    }
  }

  auto any = resolver.resolve(question_for("example.org", dns::k_type_any));
  CHECK(any.size() == 3);
  CHECK(resolver.resolve(question_for("example.org", dns::k_type_a)).size() == 1);
  CHECK(resolver.resolve(question_for("missing.example.org")).empty());
  CHECK(resolver.resolve(question_for("txt.example.org", dns::k_type_txt)).size() ==
        1);

  CHECK_THROWS(ZoneFileResolver::from_text(R"({"x": [{"type": "NOPE", "ttl": 1,
                                           "data": "y"}]})", Rng(1)));
  CHECK_THROWS(ZoneFileResolver::from_text(R"({"x": [{"type": "A", "ttl": [9, 2],
                                           "data": "192.0.2.1"}]})", Rng(1)));
}

namespace {

// One client endpoint, one server endpoint, resolver with adjustable
// TTL and rdata, everything wired through a TestNet.
struct ClientFixture {
  TestNet net;
  NetPort client_port{&net, "client"};
  NetPort server_port{&net, "server"};
  coap::CoapEndpoint client_ep{client_port, {}, Rng(101)};
  coap::CoapEndpoint server_ep{server_port, {}, Rng(102)};
  std::uint32_t upstream_ttl = 5;
  std::string upstream_addr = "2001:db8::1";
  FunctionResolver resolver;
  std::vector<std::string> events;

  explicit ClientFixture(Scheme scheme, Method method = Method::fetch)
      : resolver([this](const dns::Question& q) {
          return std::vector<dns::Record>{
              record(q.name.to_string(), upstream_ttl, upstream_addr)};
        }) {
    net.nodes = {{"client", &client_ep}, {"server", &server_ep}};
    ServerConfig server_cfg;
    server_cfg.scheme = scheme;
    server_ep.set_request_handler(make_doc_handler(resolver, server_cfg));
    ClientConfig client_cfg;
    client_cfg.scheme = scheme;
    client_cfg.method = method;
    client = std::make_unique<DocClient>(client_ep, client_cfg, "server", Rng(55));
    client->on_cache_event = [this](double, const std::string& kind) {
      events.push_back(kind);
    };
  }

  ResolveResult resolve_at(double now, const std::string& name = "fix.test") {
    ResolveResult out;
    net.now = now;
    client->resolve(question_for(name), now, [&](const ResolveResult& r) { out = r; });
    return out;
  }

  std::unique_ptr<DocClient> client;
};

}  // namespace

TEST_CASE("client cache: miss, fresh hit with decremented TTL, expiry") {
  ClientFixture fix(Scheme::eol_ttls);

  auto first = fix.resolve_at(0.0);
  CHECK(first.status == ResolveResult::Status::ok);
  CHECK(first.cache_kind == "miss");
  CHECK(!first.from_cache);
  REQUIRE(first.answer.answers.size() == 1);
  CHECK(first.answer.answers[0].ttl == 5);
  std::size_t traffic = fix.net.log.size();
  CHECK(traffic == 2);  // request + piggybacked response

  auto hit = fix.resolve_at(2.0);
  CHECK(hit.status == ResolveResult::Status::ok);
  CHECK(hit.cache_kind == "hit");
  CHECK(hit.from_cache);
  CHECK(hit.answer.answers[0].ttl == 3);  // 5s lifetime, 2s later
  CHECK(fix.net.log.size() == traffic);   // no traffic for a hit
  CHECK(hit.rtt == 0.0);

  // at expiry the entry stops serving; same record set -> 2.03 refresh
  auto reval = fix.resolve_at(5.0);
  CHECK(reval.cache_kind == "revalidation-ok");
  CHECK(!reval.from_cache);
  CHECK(reval.answer.answers[0].ttl == 5);
  CHECK(fix.net.log.size() == traffic + 2);
  // the 2.03 has no payload: smaller than the full response
  CHECK(fix.net.log.back().wire.size() < fix.net.log[1].wire.size());

  // after refresh the entry serves hits again
  auto hit2 = fix.resolve_at(7.0);
  CHECK(hit2.cache_kind == "hit");
  CHECK(hit2.answer.answers[0].ttl == 3);

  CHECK(fix.events == std::vector<std::string>{"miss", "hit", "revalidation-ok",
                                               "hit"});
  CHECK(fix.client->counters().hits == 2);
  CHECK(fix.client->counters().misses == 1);
  CHECK(fix.client->counters().revalidations_ok == 1);
}

TEST_CASE("client cache: DohLike revalidation goes full when TTLs moved") {
  ClientFixture fix(Scheme::doh_like);

  auto first = fix.resolve_at(0.0);
  CHECK(first.cache_kind == "miss");
  CHECK(first.answer.answers[0].ttl == 5);

  fix.upstream_ttl = 4;  // TTL churn upstream changes the payload digest
  auto reval = fix.resolve_at(6.0);
  CHECK(reval.cache_kind == "revalidation-full");
  CHECK(reval.answer.answers[0].ttl == 4);
  CHECK(fix.client->counters().revalidations_full == 1);

  // under EolTtls the same churn revalidates fine
  ClientFixture eol(Scheme::eol_ttls);
  eol.resolve_at(0.0);
  eol.upstream_ttl = 4;
  auto ok = eol.resolve_at(6.0);
  CHECK(ok.cache_kind == "revalidation-ok");
  CHECK(ok.answer.answers[0].ttl == 4);  // new Max-Age restored
}

TEST_CASE("client cache: changed record set replaces the entry") {
  ClientFixture fix(Scheme::eol_ttls);
  fix.resolve_at(0.0);
  fix.upstream_addr = "2001:db8::bad";
  auto reval = fix.resolve_at(6.0);
  CHECK(reval.cache_kind == "revalidation-full");
  CHECK(dns::rdata_to_text(dns::k_type_aaaa, reval.answer.answers[0].rdata) ==
        "2001:db8::bad");
  // and the replacement serves hits
  auto hit = fix.resolve_at(7.0);
  CHECK(hit.cache_kind == "hit");
  CHECK(dns::rdata_to_text(dns::k_type_aaaa, hit.answer.answers[0].rdata) ==
        "2001:db8::bad");
}

TEST_CASE("client cache: POST is never stored") {
  ClientFixture fix(Scheme::eol_ttls, Method::post);
  auto a = fix.resolve_at(0.0);
  CHECK(a.cache_kind == "miss");
  CHECK(a.answer.answers[0].ttl == 5);  // Max-Age still restores TTLs
  auto b = fix.resolve_at(1.0);
  CHECK(b.cache_kind == "miss");
  CHECK(fix.client->counters().misses == 2);
}

TEST_CASE("client cache: disabled cache always fetches") {
  ClientFixture fix(Scheme::eol_ttls);
  fix.client->set_cache_enabled(false);
  CHECK(fix.resolve_at(0.0).cache_kind == "miss");
  CHECK(fix.resolve_at(0.5).cache_kind == "miss");
  CHECK(fix.client->counters().misses == 2);
  CHECK(fix.client->counters().hits == 0);
}

TEST_CASE("client over GET: same cache behavior, bigger requests") {
  ClientFixture fix(Scheme::eol_ttls, Method::get);
  auto first = fix.resolve_at(0.0);
  CHECK(first.cache_kind == "miss");
  CHECK(first.answer.answers[0].ttl == 5);
  // GET requests never carry Block1 or a payload
  coap::Message sent = coap::decode(fix.net.log[0].wire);
  CHECK(sent.code == coap::k_code_get);
  CHECK(sent.payload.empty());
  CHECK(!sent.has_option(coap::k_opt_block1));
  auto hit = fix.resolve_at(1.0);
  CHECK(hit.cache_kind == "hit");
  auto reval = fix.resolve_at(6.0);
  CHECK(reval.cache_kind == "revalidation-ok");
}
