#include "dnscoap/netsim.hpp"

#include <algorithm>
#include <cstdio>
#include <deque>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

#include "dnscoap/doc_client.hpp"
#include "dnscoap/oscore.hpp"
#include "dnscoap/proxy.hpp"

namespace dnscoap::netsim {

namespace {

std::size_t align8(std::size_t v) { return v - v % 8; }

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

LinkModel link_profile(const std::string& name) {
  if (name == "ieee802154") {
    return LinkModel{};
  }
  if (name == "lorawan") {
    // The 59-octet PDU is what the application sees; MAC framing and
    // header compression are not broken out separately.
    LinkModel link;
    link.mtu = 59;
    link.mac_header = 0;
    link.adaptation_header = 0;
    return link;
  }
  throw std::invalid_argument("unknown link profile: " + name);
}

std::vector<std::size_t> fragment(std::size_t payload, const LinkModel& link) {
  if (payload == 0) {
    throw std::invalid_argument("fragment: payload must be nonempty");
  }
  std::size_t plain_overhead = link.mac_header + link.adaptation_header;
  if (link.mtu <= plain_overhead) {
    throw std::invalid_argument("fragment: headers leave no payload space");
  }
  if (plain_overhead + payload <= link.mtu) {
    return {plain_overhead + payload};
  }

  // Chunk capacity from the worst-case per-frame overhead (the larger
  // fragment header), aligned down to the 8-octet fragment grid. The
  // same capacity applies to the FRAG1 frame even when its header is
  // one octet shorter.
  std::size_t frag_overhead = link.mac_header +
                              std::max(link.frag1_header, link.fragN_header) +
                              link.adaptation_header;
  if (link.mtu <= frag_overhead || align8(link.mtu - frag_overhead) == 0) {
    throw std::invalid_argument("fragment: no usable fragment payload");
  }
  std::size_t cap = align8(link.mtu - frag_overhead);

  std::size_t datagram = link.adaptation_header + payload;
  std::vector<std::size_t> frames;
  std::size_t off = 0;
  while (off < datagram) {
    std::size_t chunk = std::min(cap, datagram - off);
    std::size_t header = frames.empty() ? link.frag1_header : link.fragN_header;
    frames.push_back(link.mac_header + header + chunk);
    off += chunk;
  }
  return frames;
}

Transport transport_from_string(std::string_view text) {
  if (text == "udp") return Transport::udp;
  if (text == "dtls") return Transport::dtls;
  if (text == "coap") return Transport::coap;
  if (text == "coaps") return Transport::coaps;
  if (text == "oscore") return Transport::oscore;
  throw std::invalid_argument("unknown transport: " + std::string(text));
}

std::string_view transport_to_string(Transport transport) {
  switch (transport) {
    case Transport::udp: return "udp";
    case Transport::dtls: return "dtls";
    case Transport::coap: return "coap";
    case Transport::coaps: return "coaps";
    case Transport::oscore: return "oscore";
  }
  return "?";
}

std::size_t transport_record_overhead(Transport transport) {
  switch (transport) {
    case Transport::dtls:
    case Transport::coaps:
      return 29;  // 13 record header + 8 explicit nonce + 8 tag
    default:
      return 0;
  }
}

// The leading label identifies the name even when the DNS id is 0.
std::string workload_name(int index, std::size_t length) {
  char head[8];
  std::snprintf(head, sizeof head, "q%04d", index);
  std::string out = head;
  out += '.';
  static const char filler[] = "0123456789abcdefghijklmnopqrstuvwxyz";
  for (std::size_t i = 0; i + 11 < length; ++i) {
    out += filler[i % 36];
  }
  out += ".test";
  return out;
}

void validate(const Scenario& sc) {
  const Workload& w = sc.workload;
  if (sc.n_clients < 1 || sc.n_clients > 16) {
    throw std::invalid_argument("scenario: n_clients out of range");
  }
  if (w.queries_per_client < 1) {
    throw std::invalid_argument("scenario: queries_per_client must be positive");
  }
  if (!(w.rate > 0)) {
    throw std::invalid_argument("scenario: rate must be positive");
  }
  if (w.distinct_names < 1 || w.distinct_names > 10000) {
    throw std::invalid_argument("scenario: distinct_names out of range");
  }
  if (w.name_length < 12 || w.name_length > 74) {
    throw std::invalid_argument("scenario: name_length out of range");
  }
  if (w.rtype != dns::k_type_a && w.rtype != dns::k_type_aaaa) {
    throw std::invalid_argument("scenario: workload rtype must be A or AAAA");
  }
  if (w.records_per_answer < 1 || w.records_per_answer > 32) {
    throw std::invalid_argument("scenario: records_per_answer out of range");
  }
  if (w.ttl_lo > w.ttl_hi) {
    throw std::invalid_argument("scenario: ttl range reversed");
  }
  if (!(sc.wireless.loss_prob >= 0 && sc.wireless.loss_prob <= 1)) {
    throw std::invalid_argument("scenario: loss_prob outside [0, 1]");
  }
  if (sc.wireless.latency < 0 || sc.horizon < 0) {
    throw std::invalid_argument("scenario: negative time value");
  }
  if (sc.transport == Transport::udp || sc.transport == Transport::dtls) {
    if (sc.client_dns_cache || sc.client_coap_cache || sc.proxy_cache) {
      throw std::invalid_argument("scenario: caches require a CoAP transport");
    }
    if (sc.content_format != doc::k_content_format_dns) {
      throw std::invalid_argument(
          "scenario: compact payloads require a CoAP transport");
    }
  }
  if (sc.content_format != doc::k_content_format_dns &&
      sc.content_format != cbordns::k_content_format) {
    throw std::invalid_argument("scenario: unknown content format");
  }
}

namespace {

/*
 * The discrete-event core. Time is virtual; events are ordered by
 * (time, insertion sequence), so ties resolve in creation order and a
 * run is a pure function of the scenario.
 *
 * A datagram crosses one link per hop_transmit() step: it is cut into
 * frames, each frame independently survives or is lost (one Bernoulli
 * draw per frame), and the datagram reaches the next node only when
 * every frame survived, after frames x latency seconds. Frame counters
 * commit at transmit time, so sent = received + lost holds at every
 * instant of the run.
 */
class SimNet {
 public:
  explicit SimNet(Rng rng) : rng_(std::move(rng)) {}

  // Per-datagram expansion applied on the wire (DTLS records).
  std::size_t wire_overhead = 0;

  void add_link(const std::string& a, const std::string& b, const LinkModel& model,
                int hop) {
    links_.push_back(Link{a, b, model, hop, rng_.derive("loss/" + a + "|" + b)});
  }

  void add_route(const std::string& node, const std::string& dest,
                 const std::string& next) {
    routes_[node][dest] = next;
  }

  using Receiver = std::function<void(const Bytes&, const std::string&, double)>;
  void set_receiver(const std::string& node, Receiver fn) {
    receivers_[node] = std::move(fn);
  }

  double now() const { return now_; }

  void schedule(double at, std::function<void()> fn) {
    events_.emplace(std::make_pair(at, seq_++), std::move(fn));
  }

  void send(const std::string& from, const std::string& dest, const Bytes& datagram) {
    hop_transmit(from, dest, from, datagram);
  }

  // Runs events and endpoint retransmission timers in global time
  // order until both are exhausted (or the horizon cuts a runaway
  // scenario short).
  void drive(const std::vector<coap::CoapEndpoint*>& endpoints, double horizon) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    for (;;) {
      double event_at = events_.empty() ? inf : events_.begin()->first.first;
      double timer_at = inf;
      for (auto* ep : endpoints) {
        if (auto d = ep->next_deadline(); d && *d < timer_at) {
          timer_at = *d;
        }
      }
      double t = std::min(event_at, timer_at);
      if (t == inf || t > horizon) {
        break;
      }
      if (event_at <= timer_at) {
        auto node = events_.extract(events_.begin());
        now_ = std::max(now_, node.key().first);
        node.mapped()();
      } else {
        now_ = std::max(now_, timer_at);
        for (auto* ep : endpoints) {
          ep->on_timer(timer_at);
        }
      }
    }
  }

  const std::map<int, LinkStats>& stats() const { return stats_; }

 private:
  struct Link {
    std::string a, b;
    LinkModel model;
    int hop;  // distance to the border router; 0 = wired backbone
    Rng rng;
  };

  Link* link_between(const std::string& x, const std::string& y) {
    for (auto& link : links_) {
      if ((link.a == x && link.b == y) || (link.a == y && link.b == x)) {
        return &link;
      }
    }
    return nullptr;
  }

  void hop_transmit(const std::string& cur, const std::string& dest,
                    const std::string& origin, const Bytes& datagram) {
    auto routes = routes_.find(cur);
    if (routes == routes_.end()) return;
    auto next_it = routes->second.find(dest);
    if (next_it == routes->second.end()) return;
    const std::string& next = next_it->second;

    Link* link = link_between(cur, next);
    if (link == nullptr) return;

    auto frames = fragment(datagram.size() + wire_overhead, link->model);
    bool lost_any = false;
    for (std::size_t frame : frames) {
      bool lost = link->model.loss_prob > 0 &&
                  link->rng.bernoulli(link->model.loss_prob);
      if (link->hop > 0) {
        LinkStats& st = stats_[link->hop];
        ++st.frames_sent;
        st.bytes_sent += frame;
        if (lost) {
          ++st.frames_lost;
          st.bytes_lost += frame;
        } else {
          ++st.frames_received;
          st.bytes_received += frame;
        }
      }
      lost_any = lost_any || lost;
    }
    if (lost_any) {
      return;  // one missing fragment fails reassembly of the datagram
    }
    double arrive = now_ + link->model.latency * static_cast<double>(frames.size());
    schedule(arrive, [this, next, dest, origin, copy = datagram] {
      if (next == dest) {
        auto it = receivers_.find(dest);
        if (it != receivers_.end()) {
          it->second(copy, origin, now_);
        }
      } else {
        hop_transmit(next, dest, origin, copy);
      }
    });
  }

  Rng rng_;
  std::vector<Link> links_;
  std::map<std::string, std::map<std::string, std::string>> routes_;
  std::map<std::string, Receiver> receivers_;
  std::map<std::pair<double, std::uint64_t>, std::function<void()>> events_;
  std::uint64_t seq_ = 0;
  double now_ = 0;
  std::map<int, LinkStats> stats_;
};

class SimPort : public coap::DatagramSink {
 public:
  SimPort(SimNet& net, std::string self) : net_(net), self_(std::move(self)) {}

  void send(const Bytes& datagram, const std::string& peer) override {
    net_.send(self_, peer, datagram);
  }

 private:
  SimNet& net_;
  std::string self_;
};

// Addresses are a pure function of (name, type, position), so the
// record set for a name never changes across resolutions; only TTLs do.
Bytes stable_rdata(const std::string& name, std::uint16_t rtype, int index) {
  Rng r = Rng(0x5eedf00d).derive(name).derive(static_cast<std::uint64_t>(index));
  Bytes out(rtype == dns::k_type_a ? 4 : 16);
  std::uint64_t v = 0;
  int have = 0;
  for (auto& b : out) {
    if (have == 0) {
      v = r.next();
      have = 8;
    }
    b = static_cast<std::uint8_t>(v & 0xff);
    v >>= 8;
    --have;
  }
  return out;
}

// Fixed pairwise keying material; sessions are pre-established, the
// handshake that would distribute this is out of scope.
oscore::KeyMaterial sim_keys(int client_number) {
  oscore::KeyMaterial km;
  km.master_secret = Bytes{0x01, 0x02, 0x03, 0x04, 0x05, 0x06, 0x07, 0x08,
                           0x09, 0x0a, 0x0b, 0x0c, 0x0d, 0x0e, 0x0f, 0x10};
  km.master_salt = Bytes{0x9e, 0x7c, 0xa9, 0x22, 0x23, 0x78, 0x63,
                         static_cast<std::uint8_t>(client_number)};
  km.client_id = Bytes{0x01, static_cast<std::uint8_t>(client_number)};
  km.server_id = Bytes{0x02};
  return km;
}

// kid field of a request's OSCORE option; routes a protected request
// to the security context shared with that client.
std::optional<Bytes> oscore_request_kid(const coap::Message& msg) {
  const coap::Option* opt = msg.find_option(coap::k_opt_oscore);
  if (opt == nullptr || opt->value.empty()) {
    return std::nullopt;
  }
  std::uint8_t flags = opt->value[0];
  std::size_t piv_len = flags & 0x07;
  if ((flags & 0x08) == 0 || opt->value.size() < 1 + piv_len) {
    return std::nullopt;
  }
  return Bytes(opt->value.begin() + 1 + static_cast<std::ptrdiff_t>(piv_len),
               opt->value.end());
}

class Runner {
 public:
  explicit Runner(const Scenario& sc)
      : sc_(sc), master_(sc.seed), net_(master_.derive("net")) {}

  Metrics take() {
    net_.wire_overhead = transport_record_overhead(sc_.transport);
    build_topology();
    build_resolver();
    build_server();
    build_forwarder();
    build_clients();
    schedule_arrivals();

    double horizon = sc_.horizon > 0
                         ? sc_.horizon
                         : static_cast<double>(sc_.workload.queries_per_client) /
                                   sc_.workload.rate +
                               400.0;
    net_.drive(endpoints_, horizon);
    metrics_.finished_at = net_.now();
    for (auto& q : metrics_.queries) {
      if (q.outcome == "pending") {
        ++metrics_.unresolved;
      }
    }
    metrics_.links = net_.stats();
    return std::move(metrics_);
  }

 private:
  struct UdpPending {
    Bytes wire;
    double started = 0;
    double timeout = 0;
    int attempt = 0;
    int qi = -1;
    bool done = false;
  };

  struct ClientNode {
    std::string name;
    int number = 0;
    std::unique_ptr<SimPort> port;
    std::unique_ptr<coap::CoapEndpoint> ep;
    std::unique_ptr<proxy::ClientCoapCache> coap_cache;
    std::unique_ptr<oscore::OscoreClient> osc;
    std::unique_ptr<doc::DocClient> doc;
    // raw-UDP transport state
    Rng udp_rng{0};
    std::uint16_t next_id = 1;
    std::map<std::uint16_t, std::shared_ptr<UdpPending>> open;
  };

  bool coap_family() const {
    return sc_.transport != Transport::udp && sc_.transport != Transport::dtls;
  }

  void build_topology() {
    for (int i = 1; i <= sc_.n_clients; ++i) {
      std::string c = "c" + std::to_string(i);
      net_.add_link(c, "fwd", sc_.wireless, 2);
      net_.add_route(c, "fwd", "fwd");
      net_.add_route(c, "srv", "fwd");
      net_.add_route("fwd", c, c);
      net_.add_route("br", c, "fwd");
      net_.add_route("srv", c, "br");
    }
    net_.add_link("fwd", "br", sc_.wireless, 1);
    LinkModel wired;
    wired.mtu = 1 << 20;
    wired.mac_header = 0;
    wired.adaptation_header = 0;
    wired.loss_prob = 0;
    wired.latency = 0;
    net_.add_link("br", "srv", wired, 0);
    net_.add_route("fwd", "srv", "br");
    net_.add_route("fwd", "br", "br");
    net_.add_route("br", "srv", "srv");
    net_.add_route("br", "fwd", "fwd");
    net_.add_route("srv", "fwd", "br");
    net_.add_route("srv", "br", "br");
  }

  void build_resolver() {
    ttl_rng_ = master_.derive("ttl");
    resolver_ = std::make_unique<doc::FunctionResolver>(
        [this](const dns::Question& q) {
          std::uint16_t rtype =
              q.rtype == dns::k_type_any ? sc_.workload.rtype : q.rtype;
          auto ttl = static_cast<std::uint32_t>(
              ttl_rng_.uniform_int(sc_.workload.ttl_lo, sc_.workload.ttl_hi));
          std::vector<dns::Record> records;
          records.reserve(static_cast<std::size_t>(sc_.workload.records_per_answer));
          for (int j = 0; j < sc_.workload.records_per_answer; ++j) {
            records.push_back(dns::Record{q.name, rtype, dns::k_class_in, ttl,
                                          stable_rdata(q.name.to_string(), rtype, j)});
          }
          return records;
        });
  }

  void build_server() {
    if (!coap_family()) {
      // Raw DNS-over-UDP responder: every received query gets one
      // response, duplicates included (the client drops extras).
      net_.set_receiver("srv", [this](const Bytes& d, const std::string& from, double) {
        try {
          dns::Message query = dns::decode(d);
          if (!query.question || query.qr()) {
            return;
          }
          auto records = resolver_->resolve(*query.question);
          dns::Message response =
              dns::build_response(*query.question, std::move(records), query.id);
          net_.send("srv", from, dns::encode(response));
        } catch (const ParseError&) {
        }
      });
      return;
    }

    srv_port_ = std::make_unique<SimPort>(net_, "srv");
    coap::TransmissionParams params;
    srv_ep_ = std::make_unique<coap::CoapEndpoint>(*srv_port_, params,
                                                   master_.derive("ep/srv"));
    doc::ServerConfig cfg;
    cfg.scheme = sc_.scheme;
    auto handler = doc::make_doc_handler(*resolver_, cfg);

    if (sc_.transport == Transport::oscore) {
      for (int i = 1; i <= sc_.n_clients; ++i) {
        oscore::KeyMaterial km = sim_keys(i);
        auto& server = oscore_servers_.emplace_back(
            oscore::server_context(km), master_.derive("oscore/" + std::to_string(i)));
        server.set_synchronized(sc_.oscore_presync);
        oscore_routes_[km.client_id] =
            server.wrap(handler, [this] { return net_.now(); });
      }
      srv_ep_->set_request_handler([this](const coap::Message& msg,
                                          const std::string& peer,
                                          coap::CoapEndpoint::Responder respond) {
        if (auto kid = oscore_request_kid(msg)) {
          if (auto it = oscore_routes_.find(*kid); it != oscore_routes_.end()) {
            it->second(msg, peer, std::move(respond));
            return;
          }
        }
        coap::Message err;
        err.code = coap::k_code_unauthorized;
        respond(std::move(err));
      });
    } else {
      srv_ep_->set_request_handler(std::move(handler));
    }
    endpoints_.push_back(srv_ep_.get());
    net_.set_receiver("srv", [ep = srv_ep_.get()](const Bytes& d,
                                                  const std::string& from, double t) {
      ep->deliver(d, from, t);
    });
  }

  void build_forwarder() {
    if (!sc_.proxy_cache) {
      return;  // opaque router: datagrams pass through via routing alone
    }
    fwd_port_ = std::make_unique<SimPort>(net_, "fwd");
    coap::TransmissionParams params;
    fwd_ep_ = std::make_unique<coap::CoapEndpoint>(*fwd_port_, params,
                                                   master_.derive("ep/fwd"));
    proxy::CoapProxy::Config cfg;
    cfg.default_upstream = "srv";
    proxy_ = std::make_unique<proxy::CoapProxy>(*fwd_ep_, cfg);
    fwd_ep_->set_request_handler(proxy_->handler());
    proxy_->flow().on_cache_event = [this](double t, const std::string& kind) {
      metrics_.cache_events.push_back({t, "fwd", "coap", kind});
    };
    fwd_ep_->on_retransmit = [this](std::uint64_t ex, int attempt, double offset) {
      metrics_.retransmissions.push_back({"fwd", ex, attempt, offset, net_.now()});
    };
    endpoints_.push_back(fwd_ep_.get());
    net_.set_receiver("fwd", [ep = fwd_ep_.get()](const Bytes& d,
                                                  const std::string& from, double t) {
      ep->deliver(d, from, t);
    });
  }

  void build_clients() {
    const std::string server_peer = sc_.proxy_cache ? "fwd" : "srv";
    for (int i = 1; i <= sc_.n_clients; ++i) {
      ClientNode& c = clients_.emplace_back();
      c.name = "c" + std::to_string(i);
      c.number = i;
      c.port = std::make_unique<SimPort>(net_, c.name);

      if (!coap_family()) {
        c.udp_rng = master_.derive("udp/" + c.name);
        net_.set_receiver(c.name, [this, &c](const Bytes& d, const std::string&,
                                             double t) { udp_receive(c, d, t); });
        continue;
      }

      coap::TransmissionParams params;
      c.ep = std::make_unique<coap::CoapEndpoint>(*c.port, params,
                                                  master_.derive("ep/" + c.name));
      c.ep->on_retransmit = [this, name = c.name](std::uint64_t ex, int attempt,
                                                  double offset) {
        metrics_.retransmissions.push_back({name, ex, attempt, offset, net_.now()});
      };
      endpoints_.push_back(c.ep.get());

      doc::ClientConfig cfg;
      cfg.method = sc_.method;
      cfg.scheme = sc_.scheme;
      cfg.content_format = sc_.content_format;
      c.doc = std::make_unique<doc::DocClient>(*c.ep, cfg, server_peer,
                                               master_.derive("doc/" + c.name));
      c.doc->set_cache_enabled(sc_.client_dns_cache);
      if (sc_.client_dns_cache) {
        c.doc->on_cache_event = [this, name = c.name](double t,
                                                      const std::string& kind) {
          metrics_.cache_events.push_back({t, name, "dns", kind});
        };
      }

      if (sc_.transport == Transport::oscore) {
        // End-to-end protection; a client-side CoAP cache would only
        // ever see opaque POST exchanges, so it is not wired in.
        c.osc = std::make_unique<oscore::OscoreClient>(
            *c.ep, oscore::client_context(sim_keys(i)));
        c.doc->set_transport([osc = c.osc.get()](coap::Message m, const std::string& peer,
                                                 coap::CoapEndpoint::ResponseCallback cb,
                                                 double now) {
          osc->send(std::move(m), peer, std::move(cb), now);
        });
      } else if (sc_.client_coap_cache) {
        c.coap_cache = std::make_unique<proxy::ClientCoapCache>(*c.ep);
        c.coap_cache->flow().on_cache_event = [this, name = c.name](
                                                  double t, const std::string& kind) {
          metrics_.cache_events.push_back({t, name, "coap", kind});
        };
        c.doc->set_transport([cc = c.coap_cache.get()](
                                 coap::Message m, const std::string& peer,
                                 coap::CoapEndpoint::ResponseCallback cb, double now) {
          cc->send(std::move(m), peer, std::move(cb), now);
        });
      }

      net_.set_receiver(c.name, [ep = c.ep.get()](const Bytes& d,
                                                  const std::string& from, double t) {
        ep->deliver(d, from, t);
      });
    }
  }

  void schedule_arrivals() {
    for (auto& c : clients_) {
      Rng arrivals = master_.derive("arrivals/" + c.name);
      double t = 0;
      for (int k = 0; k < sc_.workload.queries_per_client; ++k) {
        t += arrivals.exponential(sc_.workload.rate);
        int name_index = k % sc_.workload.distinct_names;
        net_.schedule(t, [this, &c, k, name_index] { issue(c, k, name_index); });
      }
    }
  }

  void issue(ClientNode& c, int k, int name_index) {
    std::string name = workload_name(name_index, sc_.workload.name_length);
    dns::Question question{dns::Name::parse(name), sc_.workload.rtype,
                           dns::k_class_in};
    auto qi = metrics_.queries.size();
    QuerySample sample;
    sample.client = c.number;
    sample.index = k;
    sample.name = name;
    sample.issued = net_.now();
    metrics_.queries.push_back(std::move(sample));

    if (!coap_family()) {
      udp_issue(c, question, qi);
      return;
    }
    c.doc->resolve(question, net_.now(), [this, qi](const doc::ResolveResult& r) {
      QuerySample& s = metrics_.queries[qi];
      s.cache_kind = r.cache_kind;
      switch (r.status) {
        case doc::ResolveResult::Status::ok:
          s.outcome = "resolved";
          s.resolution = net_.now() - s.issued;
          ++metrics_.resolved;
          break;
        case doc::ResolveResult::Status::timeout:
          s.outcome = "timeout";
          ++metrics_.unresolved;
          break;
        case doc::ResolveResult::Status::reset:
          s.outcome = "reset";
          ++metrics_.unresolved;
          break;
        case doc::ResolveResult::Status::error:
          s.outcome = "error";
          ++metrics_.unresolved;
          break;
      }
    });
  }

  /*
   * Raw DNS over UDP with the same retransmission ladder as CoAP: an
   * initial timeout T drawn from [ack_timeout, ack_timeout * factor),
   * doubled after every retransmission, giving up one doubling after
   * the last allowed retransmission. Keeping the ladder identical
   * makes transport comparisons about bytes, not retry policy.
   */
  void udp_issue(ClientNode& c, const dns::Question& question, std::size_t qi) {
    coap::TransmissionParams params;
    std::uint16_t id = c.next_id++;
    auto p = std::make_shared<UdpPending>();
    p->wire = dns::encode_query(question.name, question.rtype, id);
    p->started = net_.now();
    p->qi = static_cast<int>(qi);
    p->timeout = coap::draw_initial_timeout(params, c.udp_rng);
    c.open[id] = p;
    net_.send(c.name, "srv", p->wire);
    arm_udp(c, id, p);
  }

  void arm_udp(ClientNode& c, std::uint16_t id, const std::shared_ptr<UdpPending>& p) {
    coap::TransmissionParams params;
    net_.schedule(net_.now() + p->timeout, [this, &c, id, p, params] {
      if (p->done) {
        return;
      }
      if (p->attempt >= params.max_retransmit) {
        p->done = true;
        c.open.erase(id);
        metrics_.queries[static_cast<std::size_t>(p->qi)].outcome = "timeout";
        ++metrics_.unresolved;
        return;
      }
      ++p->attempt;
      metrics_.retransmissions.push_back(
          {c.name, id, p->attempt, net_.now() - p->started, net_.now()});
      net_.send(c.name, "srv", p->wire);  // byte-identical resend
      p->timeout *= 2;
      arm_udp(c, id, p);
    });
  }

  void udp_receive(ClientNode& c, const Bytes& datagram, double t) {
    try {
      dns::Message msg = dns::decode(datagram);
      if (!msg.qr()) {
        return;
      }
      auto it = c.open.find(msg.id);
      if (it == c.open.end() || it->second->done) {
        return;  // duplicate response from a retransmitted query
      }
      auto p = it->second;
      p->done = true;
      c.open.erase(it);
      QuerySample& s = metrics_.queries[static_cast<std::size_t>(p->qi)];
      s.outcome = "resolved";
      s.resolution = t - s.issued;
      ++metrics_.resolved;
    } catch (const ParseError&) {
    }
  }

  const Scenario& sc_;
  Rng master_;
  SimNet net_;
  Metrics metrics_;

  Rng ttl_rng_{0};
  std::unique_ptr<doc::FunctionResolver> resolver_;

  std::unique_ptr<SimPort> srv_port_;
  std::unique_ptr<coap::CoapEndpoint> srv_ep_;
  std::deque<oscore::OscoreServer> oscore_servers_;
  std::map<Bytes, coap::CoapEndpoint::RequestHandler> oscore_routes_;

  std::unique_ptr<SimPort> fwd_port_;
  std::unique_ptr<coap::CoapEndpoint> fwd_ep_;
  std::unique_ptr<proxy::CoapProxy> proxy_;

  std::deque<ClientNode> clients_;
  std::vector<coap::CoapEndpoint*> endpoints_;
};

}  // namespace

Metrics run(const Scenario& scenario) {
  validate(scenario);
  Runner runner(scenario);
  return runner.take();
}

std::vector<UtilizationRow> link_utilization(const Metrics& metrics) {
  std::vector<UtilizationRow> rows;
  for (const auto& [hop, st] : metrics.links) {
    rows.push_back({hop, st.frames_sent, st.bytes_sent});
  }
  return rows;
}

std::vector<std::pair<double, double>> resolution_cdf(const Metrics& metrics) {
  std::vector<double> xs;
  for (const auto& q : metrics.queries) {
    if (q.resolution >= 0) {
      xs.push_back(q.resolution);
    }
  }
  std::sort(xs.begin(), xs.end());
  std::vector<std::pair<double, double>> steps;
  if (metrics.queries.empty()) {
    return steps;
  }
  auto total = static_cast<double>(metrics.queries.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i + 1 < xs.size() && xs[i + 1] == xs[i]) {
      continue;  // collapse ties into the final step at that value
    }
    steps.emplace_back(xs[i], static_cast<double>(i + 1) / total);
  }
  return steps;
}

std::vector<std::pair<double, double>> resolution_cdf(
    const Metrics& metrics, const std::vector<double>& grid) {
  std::vector<double> xs;
  for (const auto& q : metrics.queries) {
    if (q.resolution >= 0) {
      xs.push_back(q.resolution);
    }
  }
  std::sort(xs.begin(), xs.end());
  std::vector<std::pair<double, double>> out;
  auto total = metrics.queries.empty() ? 1.0 : static_cast<double>(metrics.queries.size());
  for (double g : grid) {
    auto below = std::upper_bound(xs.begin(), xs.end(), g) - xs.begin();
    out.emplace_back(g, static_cast<double>(below) / total);
  }
  return out;
}

const std::vector<RetransmitEvent>& retransmission_offsets(const Metrics& metrics) {
  return metrics.retransmissions;
}

void write_resolution_csv(const Metrics& metrics, std::ostream& out) {
  out << "client,query,name,issued,outcome,cache_kind,resolution\n";
  for (const auto& q : metrics.queries) {
    out << q.client << ',' << q.index << ',' << q.name << ',' << fmt6(q.issued)
        << ',' << q.outcome << ',' << q.cache_kind << ',';
    if (q.resolution >= 0) {
      out << fmt6(q.resolution);
    }
    out << '\n';
  }
}

void write_link_csv(const Metrics& metrics, std::ostream& out) {
  out << "hop,frames_sent,frames_received,frames_lost,bytes_sent,bytes_received,"
         "bytes_lost\n";
  for (const auto& [hop, st] : metrics.links) {
    out << hop << ',' << st.frames_sent << ',' << st.frames_received << ','
        << st.frames_lost << ',' << st.bytes_sent << ',' << st.bytes_received << ','
        << st.bytes_lost << '\n';
  }
}

void write_retransmission_csv(const Metrics& metrics, std::ostream& out) {
  out << "node,exchange,attempt,offset,time\n";
  for (const auto& r : metrics.retransmissions) {
    out << r.node << ',' << r.exchange << ',' << r.attempt << ',' << fmt6(r.offset)
        << ',' << fmt6(r.time) << '\n';
  }
}

void write_cache_event_csv(const Metrics& metrics, std::ostream& out) {
  out << "time,node,layer,kind\n";
  for (const auto& e : metrics.cache_events) {
    out << fmt6(e.time) << ',' << e.node << ',' << e.layer << ',' << e.kind << '\n';
  }
}

namespace {

nlohmann::json scenario_json(const Scenario& sc) {
  nlohmann::json j;
  j["name"] = sc.name;
  j["transport"] = std::string(transport_to_string(sc.transport));
  j["method"] = std::string(doc::method_to_string(sc.method));
  j["scheme"] = std::string(doc::scheme_to_string(sc.scheme));
  j["content_format"] =
      sc.content_format == cbordns::k_content_format ? "cbor" : "wire";
  j["client_dns_cache"] = sc.client_dns_cache;
  j["client_coap_cache"] = sc.client_coap_cache;
  j["proxy_cache"] = sc.proxy_cache;
  j["oscore_presync"] = sc.oscore_presync;
  j["n_clients"] = sc.n_clients;
  j["seed"] = sc.seed;
  j["horizon"] = sc.horizon;
  j["workload"] = {
      {"queries_per_client", sc.workload.queries_per_client},
      {"rate", sc.workload.rate},
      {"distinct_names", sc.workload.distinct_names},
      {"name_length", sc.workload.name_length},
      {"rtype", dns::rtype_to_string(sc.workload.rtype)},
      {"records_per_answer", sc.workload.records_per_answer},
      {"ttl", {sc.workload.ttl_lo, sc.workload.ttl_hi}},
  };
  j["link"] = {
      {"mtu", sc.wireless.mtu},
      {"mac_header", sc.wireless.mac_header},
      {"adaptation_header", sc.wireless.adaptation_header},
      {"frag1_header", sc.wireless.frag1_header},
      {"fragN_header", sc.wireless.fragN_header},
      {"loss_prob", sc.wireless.loss_prob},
      {"latency", sc.wireless.latency},
  };
  return j;
}

}  // namespace

std::string scenario_to_json(const Scenario& scenario) {
  return scenario_json(scenario).dump(2);
}

Scenario scenario_from_json(const std::string& text) {
  Scenario sc;
  try {
    nlohmann::json j = nlohmann::json::parse(text);
    sc.name = j.value("name", sc.name);
    if (j.contains("transport")) {
      sc.transport = transport_from_string(j.at("transport").get<std::string>());
    }
    if (j.contains("method")) {
      sc.method = doc::method_from_string(j.at("method").get<std::string>());
    }
    if (j.contains("scheme")) {
      sc.scheme = doc::scheme_from_string(j.at("scheme").get<std::string>());
    }
    if (j.contains("content_format")) {
      const auto& cf = j.at("content_format");
      if (cf.is_string()) {
        std::string s = cf.get<std::string>();
        if (s == "wire") {
          sc.content_format = doc::k_content_format_dns;
        } else if (s == "cbor") {
          sc.content_format = cbordns::k_content_format;
        } else {
          throw std::invalid_argument("scenario: content_format must be wire or cbor");
        }
      } else {
        sc.content_format = cf.get<std::uint16_t>();
      }
    }
    sc.client_dns_cache = j.value("client_dns_cache", sc.client_dns_cache);
    sc.client_coap_cache = j.value("client_coap_cache", sc.client_coap_cache);
    sc.proxy_cache = j.value("proxy_cache", sc.proxy_cache);
    sc.oscore_presync = j.value("oscore_presync", sc.oscore_presync);
    sc.n_clients = j.value("n_clients", sc.n_clients);
    sc.seed = j.value("seed", sc.seed);
    sc.horizon = j.value("horizon", sc.horizon);
    if (j.contains("workload")) {
      const auto& w = j.at("workload");
      sc.workload.queries_per_client =
          w.value("queries_per_client", sc.workload.queries_per_client);
      sc.workload.rate = w.value("rate", sc.workload.rate);
      sc.workload.distinct_names =
          w.value("distinct_names", sc.workload.distinct_names);
      sc.workload.name_length = w.value("name_length", sc.workload.name_length);
      if (w.contains("rtype")) {
        const auto& rt = w.at("rtype");
        if (rt.is_string()) {
          auto parsed = dns::rtype_from_string(rt.get<std::string>());
          if (!parsed) {
            throw std::invalid_argument("scenario: unknown rtype");
          }
          sc.workload.rtype = *parsed;
        } else {
          sc.workload.rtype = rt.get<std::uint16_t>();
        }
      }
      sc.workload.records_per_answer =
          w.value("records_per_answer", sc.workload.records_per_answer);
      if (w.contains("ttl")) {
        const auto& ttl = w.at("ttl");
        if (!ttl.is_array() || ttl.size() != 2) {
          throw std::invalid_argument("scenario: ttl must be [lo, hi]");
        }
        sc.workload.ttl_lo = ttl[0].get<std::uint32_t>();
        sc.workload.ttl_hi = ttl[1].get<std::uint32_t>();
      }
    }
    if (j.contains("link")) {
      const auto& l = j.at("link");
      if (l.contains("profile")) {
        sc.wireless = link_profile(l.at("profile").get<std::string>());
      }
      sc.wireless.mtu = l.value("mtu", sc.wireless.mtu);
      sc.wireless.mac_header = l.value("mac_header", sc.wireless.mac_header);
      sc.wireless.adaptation_header =
          l.value("adaptation_header", sc.wireless.adaptation_header);
      sc.wireless.frag1_header = l.value("frag1_header", sc.wireless.frag1_header);
      sc.wireless.fragN_header = l.value("fragN_header", sc.wireless.fragN_header);
      sc.wireless.loss_prob = l.value("loss_prob", sc.wireless.loss_prob);
      sc.wireless.latency = l.value("latency", sc.wireless.latency);
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("scenario: ") + e.what());
  }
  validate(sc);
  return sc;
}

std::string event_log_json(const Scenario& scenario, const Metrics& metrics) {
  nlohmann::json j;
  j["schema"] = "doc-netsim-events/1";
  j["scenario"] = scenario_json(scenario);
  j["summary"] = {
      {"queries", metrics.queries.size()},
      {"resolved", metrics.resolved},
      {"unresolved", metrics.unresolved},
      {"retransmissions", metrics.retransmissions.size()},
      {"cache_events", metrics.cache_events.size()},
      {"finished_at", metrics.finished_at},
  };
  auto links = nlohmann::json::array();
  for (const auto& [hop, st] : metrics.links) {
    links.push_back({
        {"hop", hop},
        {"frames_sent", st.frames_sent},
        {"frames_received", st.frames_received},
        {"frames_lost", st.frames_lost},
        {"bytes_sent", st.bytes_sent},
        {"bytes_received", st.bytes_received},
        {"bytes_lost", st.bytes_lost},
    });
  }
  j["links"] = std::move(links);
  auto queries = nlohmann::json::array();
  for (const auto& q : metrics.queries) {
    nlohmann::json row = {
        {"client", q.client},   {"query", q.index},
        {"name", q.name},       {"issued", q.issued},
        {"outcome", q.outcome}, {"cache_kind", q.cache_kind},
    };
    if (q.resolution >= 0) {
      row["resolution"] = q.resolution;
    }
    queries.push_back(std::move(row));
  }
  j["queries"] = std::move(queries);
  auto retransmissions = nlohmann::json::array();
  for (const auto& r : metrics.retransmissions) {
    retransmissions.push_back({
        {"node", r.node},
        {"exchange", r.exchange},
        {"attempt", r.attempt},
        {"offset", r.offset},
        {"time", r.time},
    });
  }
  j["retransmissions"] = std::move(retransmissions);
  auto cache_events = nlohmann::json::array();
  for (const auto& e : metrics.cache_events) {
    cache_events.push_back({
        {"time", e.time},
        {"node", e.node},
        {"layer", e.layer},
        {"kind", e.kind},
    });
  }
  j["cache_events"] = std::move(cache_events);
  return j.dump(2);
}

void write_metrics(const Scenario& scenario, const Metrics& metrics,
                   const std::string& dir) {
  auto open = [&dir](const char* name) {
    std::ofstream out(dir + "/" + name, std::ios::binary);
    if (!out) {
      throw std::runtime_error("cannot write " + dir + "/" + name);
    }
    return out;
  };
  {
    auto out = open("resolution_times.csv");
    write_resolution_csv(metrics, out);
  }
  {
    auto out = open("link_utilization.csv");
    write_link_csv(metrics, out);
  }
  {
    auto out = open("retransmissions.csv");
    write_retransmission_csv(metrics, out);
  }
  {
    auto out = open("cache_events.csv");
    write_cache_event_csv(metrics, out);
  }
  {
    auto out = open("events.json");
    out << event_log_json(scenario, metrics) << '\n';
  }
}

}  // namespace dnscoap::netsim
