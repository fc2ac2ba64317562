#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "dnscoap/netsim.hpp"
#include "dnscoap/rng.hpp"

using namespace dnscoap;
using namespace dnscoap::netsim;

namespace {

std::size_t hop_bytes(const Metrics& m, int hop) {
  auto it = m.links.find(hop);
  return it == m.links.end() ? 0 : it->second.bytes_sent;
}

std::size_t hop_frames(const Metrics& m, int hop) {
  auto it = m.links.find(hop);
  return it == m.links.end() ? 0 : it->second.frames_sent;
}

Scenario base_scenario() {
  Scenario sc;
  sc.n_clients = 2;
  sc.workload.queries_per_client = 25;
  sc.workload.distinct_names = 4;
  sc.workload.records_per_answer = 4;
  sc.workload.ttl_lo = 2;
  sc.workload.ttl_hi = 8;
  sc.wireless.loss_prob = 0;
  return sc;
}

std::string all_csv(const Metrics& m) {
  std::ostringstream out;
  write_resolution_csv(m, out);
  write_link_csv(m, out);
  write_retransmission_csv(m, out);
  write_cache_event_csv(m, out);
  return out.str();
}

}  // namespace

TEST_CASE("single-frame boundary sits at mtu minus plain headers") {
  LinkModel link;  // 127 / 21 / 11: room for 95 octets unfragmented
  CHECK(fragment(95, link) == std::vector<std::size_t>{127});
  CHECK(fragment(96, link).size() == 2);
  CHECK(fragment(24, link) == std::vector<std::size_t>{56});
  CHECK(fragment(1, link) == std::vector<std::size_t>{33});
}

TEST_CASE("four-record response payloads split into three frames") {
  LinkModel link;
  // 177 = CoAP framing around a 154-octet four-AAAA answer with a
  // four-octet Max-Age; 175 = same with a one-octet Max-Age.
  auto frames = fragment(177, link);
  REQUIRE(frames.size() == 3);
  CHECK(frames[0] == 113);
  CHECK(frames[1] == 114);
  CHECK(frames[2] == 38);
  CHECK(fragment(175, link).size() == 3);
  // The raw 154-octet DNS message alone still needs two frames.
  CHECK(fragment(154, link).size() == 2);
}

TEST_CASE("fragment counts match the closed-form chunk arithmetic") {
  Rng rng(0x1234);
  for (int trial = 0; trial < 2000; ++trial) {
    LinkModel link = rng.bernoulli(0.5) ? link_profile("ieee802154")
                                        : link_profile("lorawan");
    std::size_t payload = 1 + rng.uniform(2000);
    auto frames = fragment(payload, link);

    std::size_t plain = link.mac_header + link.adaptation_header;
    if (plain + payload <= link.mtu) {
      REQUIRE(frames.size() == 1);
      CHECK(frames[0] == plain + payload);
      continue;
    }
    std::size_t cap =
        link.mtu - link.mac_header -
        std::max(link.frag1_header, link.fragN_header) - link.adaptation_header;
    cap -= cap % 8;
    std::size_t datagram = link.adaptation_header + payload;
    CHECK(frames.size() == (datagram + cap - 1) / cap);

    std::size_t carried = 0;
    for (std::size_t i = 0; i < frames.size(); ++i) {
      std::size_t header = i == 0 ? link.frag1_header : link.fragN_header;
      REQUIRE(frames[i] > link.mac_header + header);
      std::size_t chunk = frames[i] - link.mac_header - header;
      CHECK(frames[i] <= link.mtu);
      if (i + 1 < frames.size()) {
        CHECK(chunk % 8 == 0);  // all but the tail land on the 8-octet grid
      }
      carried += chunk;
    }
    CHECK(carried == datagram);
  }
}

TEST_CASE("degenerate link geometries are rejected") {
  LinkModel link;
  CHECK_THROWS_AS(fragment(0, link), std::invalid_argument);
  link.mtu = 30;  // below mac + adaptation
  CHECK_THROWS_AS(fragment(10, link), std::invalid_argument);
  link.mtu = 40;  // headers fit but no aligned chunk survives
  CHECK_THROWS_AS(fragment(20, link), std::invalid_argument);
  CHECK_THROWS_AS(link_profile("token-ring"), std::invalid_argument);
}

TEST_CASE("lorawan profile carries small payloads whole") {
  LinkModel link = link_profile("lorawan");
  CHECK(link.mtu == 59);
  CHECK(fragment(59, link) == std::vector<std::size_t>{59});
  CHECK(fragment(60, link).size() == 2);
  CHECK(fragment(24, link) == std::vector<std::size_t>{24});
}

TEST_CASE("lossless udp query resolves after four wireless crossings") {
  Scenario sc = base_scenario();
  sc.transport = Transport::udp;
  sc.n_clients = 1;
  sc.workload.queries_per_client = 1;
  sc.workload.records_per_answer = 1;
  Metrics m = run(sc);

  REQUIRE(m.queries.size() == 1);
  CHECK(m.resolved == 1);
  CHECK(m.unresolved == 0);
  CHECK(m.queries[0].outcome == "resolved");
  // 42-octet query and 70-octet answer are both single frames; each
  // crosses two wireless hops at 10 ms per frame.
  CHECK(m.queries[0].resolution == doctest::Approx(0.040).epsilon(1e-9));
  CHECK(m.retransmissions.empty());
  for (int hop : {1, 2}) {
    CHECK(hop_frames(m, hop) == 2);
    CHECK(hop_bytes(m, hop) == 74 + 102);  // framed query + framed answer
  }
  CHECK(m.links.count(0) == 0);  // the wired segment is not metered

  auto cdf = resolution_cdf(m);
  REQUIRE(cdf.size() == 1);
  CHECK(cdf[0].second == doctest::Approx(1.0));
}

TEST_CASE("dtls records grow every datagram by the record envelope") {
  Scenario udp = base_scenario();
  udp.transport = Transport::udp;
  udp.n_clients = 1;
  udp.workload.queries_per_client = 1;
  udp.workload.records_per_answer = 1;

  Scenario dtls = udp;
  dtls.transport = Transport::dtls;

  Metrics a = run(udp);
  Metrics b = run(dtls);
  CHECK(b.resolved == 1);
  // query 42+29 = 71 -> one frame (103); answer 70+29 = 99 -> two
  // frames (113 + 48): the record envelope pushes it past the mtu.
  CHECK(hop_bytes(a, 2) == 176);
  CHECK(hop_bytes(b, 2) == 103 + 113 + 48);
  CHECK(hop_frames(b, 2) == 3);
}

TEST_CASE("fully lossy runs retransmit on schedule and give up") {
  for (Transport transport : {Transport::udp, Transport::coap}) {
    CAPTURE(transport_to_string(transport));
    Scenario sc = base_scenario();
    sc.transport = transport;
    sc.n_clients = 1;
    sc.workload.queries_per_client = 2;
    sc.workload.records_per_answer = 1;
    sc.wireless.loss_prob = 1.0;
    Metrics m = run(sc);

    CHECK(m.resolved == 0);
    CHECK(m.unresolved == 2);
    for (const auto& q : m.queries) {
      CHECK(q.outcome == "timeout");
    }
    // initial transmission plus four retries, none survive hop 2
    CHECK(hop_frames(m, 2) == 2 * 5);
    CHECK(m.links.at(2).frames_lost == 2 * 5);
    CHECK(m.links.at(2).frames_received == 0);
    CHECK(hop_frames(m, 1) == 0);

    REQUIRE(m.retransmissions.size() == 2 * 4);
    for (const auto& r : m.retransmissions) {
      REQUIRE(r.attempt >= 1);
      REQUIRE(r.attempt <= 4);
      double scale = std::pow(2.0, r.attempt) - 1;  // 1, 3, 7, 15
      CHECK(r.offset >= 2.0 * scale);
      CHECK(r.offset <= 3.0 * scale);
    }
  }
}

TEST_CASE("identical seeds reproduce the run byte for byte") {
  Scenario sc = base_scenario();
  sc.proxy_cache = true;
  sc.scheme = doc::Scheme::eol_ttls;
  sc.workload.queries_per_client = 10;
  sc.wireless.loss_prob = 0.15;
  sc.seed = 7;

  Metrics a = run(sc);
  Metrics b = run(sc);
  CHECK(all_csv(a) == all_csv(b));
  CHECK(event_log_json(sc, a) == event_log_json(sc, b));

  Scenario other = sc;
  other.seed = 8;
  Metrics c = run(other);
  CHECK(all_csv(a) != all_csv(c));
}

TEST_CASE("frame and byte counters balance on lossy links") {
  Scenario sc = base_scenario();
  sc.proxy_cache = true;
  sc.workload.queries_per_client = 15;
  sc.wireless.loss_prob = 0.2;
  sc.seed = 11;
  Metrics m = run(sc);

  REQUIRE(m.links.size() == 2);
  for (const auto& [hop, st] : m.links) {
    CAPTURE(hop);
    CHECK(st.frames_sent == st.frames_received + st.frames_lost);
    CHECK(st.bytes_sent == st.bytes_received + st.bytes_lost);
    CHECK(st.frames_lost > 0);  // p = 0.2 over hundreds of frames
  }
  CHECK(m.queries.size() == 30);
}

TEST_CASE("forwarder cache cuts backhaul bytes, ttl rewriting cuts more") {
  Scenario opaque = base_scenario();
  Scenario doh = opaque;
  doh.proxy_cache = true;
  Scenario eol = doh;
  eol.scheme = doc::Scheme::eol_ttls;

  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    opaque.seed = doh.seed = eol.seed = seed;
    Metrics m_opaque = run(opaque);
    Metrics m_doh = run(doh);
    Metrics m_eol = run(eol);
    CAPTURE(seed);

    CHECK(m_opaque.resolved == 50);
    CHECK(m_doh.resolved == 50);
    CHECK(m_eol.resolved == 50);

    CHECK(hop_bytes(m_doh, 1) < hop_bytes(m_opaque, 1));
    CHECK(hop_bytes(m_eol, 1) <= hop_bytes(m_doh, 1));
    CHECK(hop_bytes(m_eol, 1) < hop_bytes(m_opaque, 1));

    CHECK(m_opaque.cache_events.empty());
    CHECK(!m_doh.cache_events.empty());
  }
}

TEST_CASE("uncacheable posts ride through the forwarder at opaque cost") {
  Scenario opaque = base_scenario();
  opaque.method = doc::Method::post;
  Scenario proxied = opaque;
  proxied.proxy_cache = true;

  for (std::uint64_t seed : {1ull, 5ull}) {
    opaque.seed = proxied.seed = seed;
    Metrics a = run(opaque);
    Metrics b = run(proxied);
    CAPTURE(seed);
    CHECK(a.resolved == 50);
    CHECK(b.resolved == 50);
    CHECK(hop_bytes(b, 1) == hop_bytes(a, 1));
    CHECK(hop_frames(b, 1) == hop_frames(a, 1));
  }
}

TEST_CASE("client answer cache keeps repeat queries off the air") {
  Scenario sc = base_scenario();
  sc.client_dns_cache = true;
  sc.n_clients = 1;
  sc.workload.queries_per_client = 10;
  sc.workload.distinct_names = 1;
  sc.workload.rate = 1.0;
  sc.workload.ttl_lo = 3600;
  sc.workload.ttl_hi = 3600;

  Scenario once = sc;
  once.workload.queries_per_client = 1;

  Metrics warm = run(sc);
  Metrics cold = run(once);
  CHECK(warm.resolved == 10);
  CHECK(hop_bytes(warm, 1) == hop_bytes(cold, 1));
  CHECK(hop_bytes(warm, 2) == hop_bytes(cold, 2));

  int hits = 0;
  for (const auto& e : warm.cache_events) {
    if (e.layer == "dns" && e.kind == "hit") ++hits;
  }
  CHECK(hits == 9);
}

TEST_CASE("protected transport resolves everywhere and costs more air") {
  Scenario plain = base_scenario();
  plain.workload.queries_per_client = 3;
  plain.workload.records_per_answer = 1;
  Scenario protected_run = plain;
  protected_run.transport = Transport::oscore;

  Metrics a = run(plain);
  Metrics b = run(protected_run);
  CHECK(a.resolved == 6);
  CHECK(b.resolved == 6);
  CHECK(hop_bytes(b, 2) > hop_bytes(a, 2));
}

TEST_CASE("resolution cdf steps over resolved samples only") {
  Metrics m;
  auto add = [&m](double r, const char* outcome) {
    QuerySample q;
    q.outcome = outcome;
    q.resolution = r;
    m.queries.push_back(q);
  };
  add(1.0, "resolved");
  add(1.0, "resolved");
  add(2.0, "resolved");
  add(-1.0, "timeout");

  auto steps = resolution_cdf(m);
  REQUIRE(steps.size() == 2);
  CHECK(steps[0].first == 1.0);
  CHECK(steps[0].second == doctest::Approx(0.5));
  CHECK(steps[1].first == 2.0);
  CHECK(steps[1].second == doctest::Approx(0.75));  // timeouts never resolve

  auto grid = resolution_cdf(m, {0.5, 1.0, 1.5, 2.0, 3.0});
  REQUIRE(grid.size() == 5);
  CHECK(grid[0].second == doctest::Approx(0.0));
  CHECK(grid[1].second == doctest::Approx(0.5));
  CHECK(grid[2].second == doctest::Approx(0.5));
  CHECK(grid[3].second == doctest::Approx(0.75));
  CHECK(grid[4].second == doctest::Approx(0.75));
}

TEST_CASE("scenario json round-trips and rejects malformed input") {
  Scenario sc = scenario_from_json("{}");
  CHECK(sc.transport == Transport::coap);
  CHECK(sc.method == doc::Method::fetch);
  CHECK(sc.n_clients == 2);
  CHECK(sc.workload.name_length == 24);

  Scenario tuned = base_scenario();
  tuned.transport = Transport::oscore;
  tuned.scheme = doc::Scheme::eol_ttls;
  tuned.proxy_cache = true;
  tuned.seed = 42;
  tuned.workload.rtype = dns::k_type_a;
  Scenario back = scenario_from_json(scenario_to_json(tuned));
  CHECK(back.transport == tuned.transport);
  CHECK(back.scheme == tuned.scheme);
  CHECK(back.proxy_cache == tuned.proxy_cache);
  CHECK(back.seed == tuned.seed);
  CHECK(back.workload.rtype == dns::k_type_a);
  CHECK(back.workload.ttl_lo == tuned.workload.ttl_lo);
  CHECK(back.wireless.mtu == tuned.wireless.mtu);

  CHECK(scenario_from_json(R"({"link": {"profile": "lorawan"}})").wireless.mtu == 59);

  CHECK_THROWS_AS(scenario_from_json("not json"), std::invalid_argument);
  CHECK_THROWS_AS(scenario_from_json(R"({"transport": "carrier-pigeon"})"),
                  std::invalid_argument);
  CHECK_THROWS_AS(scenario_from_json(R"({"transport": "udp", "proxy_cache": true})"),
                  std::invalid_argument);
  CHECK_THROWS_AS(scenario_from_json(R"({"workload": {"ttl": [8, 2]}})"),
                  std::invalid_argument);
  CHECK_THROWS_AS(scenario_from_json(R"({"workload": {"name_length": 8}})"),
                  std::invalid_argument);
  CHECK_THROWS_AS(scenario_from_json(R"({"workload": {"rtype": "MX"}})"),
                  std::invalid_argument);
  CHECK_THROWS_AS(scenario_from_json(R"({"content_format": "bson"})"),
                  std::invalid_argument);
}
