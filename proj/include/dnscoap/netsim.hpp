#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dnscoap/doc.hpp"

namespace dnscoap::netsim {

/*
 * Link layer model. One datagram either fits a single frame or is cut
 * into FRAG1/FRAGN fragments:
 *
 *   single:  | mac | adaptation |          payload          |
 *   FRAG1:   | mac | frag1 hdr  | adaptation + first chunk  |
 *   FRAGN:   | mac | fragN hdr  |        next chunk         |
 *
 * The fragmented unit is the adaptation header plus the payload, carved
 * into 8-octet-aligned chunks (the last chunk takes the remainder). The
 * chunk capacity is computed once from the worst-case per-frame
 * overhead, mtu - mac_header - max(frag1, fragN) - adaptation_header
 * rounded down to a multiple of 8, and applied to every fragment; the
 * spare octets a shorter FRAG1 header would leave are not exploited.
 * Constrained stacks size their fragment buffers once the same way.
 */
struct LinkModel {
  std::size_t mtu = 127;               // whole frame budget, octets
  std::size_t mac_header = 21;         // per frame
  std::size_t adaptation_header = 11;  // compressed IP+UDP
  std::size_t frag1_header = 4;
  std::size_t fragN_header = 5;
  double loss_prob = 0.05;             // per frame, independent
  double latency = 0.010;              // seconds per frame
};

// "ieee802154" (127-octet frames) or "lorawan" (59-octet frames, no
// separate MAC/adaptation overhead). Throws std::invalid_argument on
// anything else.
LinkModel link_profile(const std::string& name);

// Frame sizes carrying one `payload`-octet datagram over `link`.
// Throws std::invalid_argument on a zero payload or when the link
// leaves no usable payload space (mtu too small for its headers).
std::vector<std::size_t> fragment(std::size_t payload, const LinkModel& link);

// How the DNS message travels.
//
//   udp     raw DNS over UDP
//   dtls    raw DNS over DTLSv1.2: +29 octets per datagram
//           (13 record header + 8 explicit nonce + 8 tag)
//   coap    DNS over CoAP
//   coaps   DNS over CoAP over DTLSv1.2: +29 octets per datagram
//   oscore  DNS over OSCORE-protected CoAP
//
// The DTLS session itself is out of scope; established sessions are
// assumed and only the per-record expansion is modeled. OSCORE bytes
// are real, produced by the actual protection code.
enum class Transport { udp, dtls, coap, coaps, oscore };

Transport transport_from_string(std::string_view text);
std::string_view transport_to_string(Transport transport);

// Octets added around one UDP payload by the transport's security
// layer (0 except for the DTLS-based transports).
std::size_t transport_record_overhead(Transport transport);

struct Workload {
  int queries_per_client = 50;
  double rate = 5.0;          // Poisson arrivals per client, queries/s
  int distinct_names = 50;    // cycled round-robin per client
  std::size_t name_length = 24;
  std::uint16_t rtype = dns::k_type_aaaa;
  int records_per_answer = 1;
  std::uint32_t ttl_lo = 2;   // TTL drawn uniformly per response,
  std::uint32_t ttl_hi = 8;   // shared by all records in it
};

// Synthetic query name qNNNN.<filler>.test padded to the requested
// presentation length (minimum 12).
std::string workload_name(int index, std::size_t length);

/*
 * Topology, fixed:
 *
 *   c1 ---+
 *         +--- fwd --- br ===== srv
 *   c2 ---+
 *
 * Wireless hops (the LinkModel applies): client-forwarder at hop
 * distance 2 and forwarder-border-router at hop distance 1, counted
 * from the border router. The br-srv backbone is wired: lossless,
 * zero-latency, never fragmented, and excluded from link metrics.
 *
 * With proxy_cache the forwarder runs a caching CoAP proxy and the
 * clients talk to it; otherwise it is an opaque router and clients
 * address the resolver directly.
 */
struct Scenario {
  std::string name = "scenario";
  Transport transport = Transport::coap;
  doc::Method method = doc::Method::fetch;
  doc::Scheme scheme = doc::Scheme::doh_like;
  // k_content_format_dns carries wire-format DNS, the compact format
  // number carries CBOR-compressed payloads. CoAP transports only.
  std::uint16_t content_format = doc::k_content_format_dns;
  bool client_dns_cache = false;
  bool client_coap_cache = false;
  bool proxy_cache = false;
  // Replay windows start synchronized (sessions pre-established); set
  // false to pay the Echo round trip on first contact per client.
  bool oscore_presync = true;
  int n_clients = 2;
  Workload workload;
  LinkModel wireless;
  std::uint64_t seed = 1;
  double horizon = 0;  // 0: derived from the workload, generous
};

// JSON form of a Scenario; missing keys keep their defaults. Throws
// std::invalid_argument on unknown enum strings or inconsistent
// values (the same validation run() applies).
Scenario scenario_from_json(const std::string& text);
std::string scenario_to_json(const Scenario& scenario);

// Throws std::invalid_argument when a scenario is not runnable:
// non-positive counts or rate, TTL range reversed, name length
// outside what the name generator can emit, loss probability outside
// [0,1], caches or compact payloads requested on a raw-UDP transport.
void validate(const Scenario& scenario);

struct LinkStats {
  std::uint64_t frames_sent = 0;
  std::uint64_t frames_received = 0;
  std::uint64_t frames_lost = 0;
  std::uint64_t bytes_sent = 0;
  std::uint64_t bytes_received = 0;
  std::uint64_t bytes_lost = 0;
};

struct QuerySample {
  int client = 0;        // 1-based, matches node names c1, c2, ...
  int index = 0;         // per-client issue order
  std::string name;
  double issued = 0;
  double resolution = -1;   // issue -> parsed answer; -1 if unresolved
  // resolved | timeout | reset | error | pending (horizon cut it off)
  std::string outcome = "pending";
  std::string cache_kind;   // client DNS cache verdict, when enabled
};

struct RetransmitEvent {
  std::string node;         // who retransmitted (c1, c2, fwd)
  std::uint64_t exchange = 0;
  int attempt = 0;          // 1-based
  double offset = 0;        // since the exchange's first transmission
  double time = 0;
};

struct CacheEvent {
  double time = 0;
  std::string node;
  std::string layer;  // dns | coap
  std::string kind;   // hit | stale-hit | miss | revalidation-ok | revalidation-full
};

struct Metrics {
  std::vector<QuerySample> queries;
  std::vector<RetransmitEvent> retransmissions;
  std::vector<CacheEvent> cache_events;
  std::map<int, LinkStats> links;  // hop distance -> totals, wireless only
  std::uint64_t resolved = 0;
  std::uint64_t unresolved = 0;
  double finished_at = 0;  // virtual time when the run went quiet
};

// Runs one scenario to completion on a virtual clock. Deterministic:
// the seed fixes every stochastic draw, so equal scenarios produce
// byte-identical exports. Exchanges that exhaust their retransmissions
// are recorded as unresolved, never fatal.
Metrics run(const Scenario& scenario);

struct UtilizationRow {
  int hop = 0;
  std::uint64_t frames = 0;
  std::uint64_t bytes = 0;
};

// Sent-side per-hop totals, ascending hop distance.
std::vector<UtilizationRow> link_utilization(const Metrics& metrics);

// Right-continuous empirical CDF of resolution times as (time,
// fraction) steps. The denominator is all issued queries, so the
// terminal value is the resolved fraction; unresolved queries are in
// Metrics::unresolved.
std::vector<std::pair<double, double>> resolution_cdf(const Metrics& metrics);
// The same CDF evaluated at given grid points.
std::vector<std::pair<double, double>> resolution_cdf(const Metrics& metrics,
                                                      const std::vector<double>& grid);

const std::vector<RetransmitEvent>& retransmission_offsets(const Metrics& metrics);

/*
 * Exports. One CSV per metric family, one JSON event log; schemas are
 * documented in docs/simulator.md and frozen by golden-file tests.
 * Numbers are formatted with fixed C-locale printf conversions, so a
 * given Metrics value always serializes to identical bytes.
 */
void write_resolution_csv(const Metrics& metrics, std::ostream& out);
void write_link_csv(const Metrics& metrics, std::ostream& out);
void write_retransmission_csv(const Metrics& metrics, std::ostream& out);
void write_cache_event_csv(const Metrics& metrics, std::ostream& out);
std::string event_log_json(const Scenario& scenario, const Metrics& metrics);

// Writes resolution_times.csv, link_utilization.csv,
// retransmissions.csv, cache_events.csv and events.json into `dir`
// (which must exist). Throws std::runtime_error when a file cannot be
// opened.
void write_metrics(const Scenario& scenario, const Metrics& metrics,
                   const std::string& dir);

}  // namespace dnscoap::netsim
