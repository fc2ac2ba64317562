// Command-line surface: live DoC endpoints on real UDP sockets, the
// packet-size dissector, the trace analyzer, and the simulator driver.

#include <arpa/inet.h>
#include <netdb.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <csignal>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "dnscoap/doc.hpp"
#include "dnscoap/doc_client.hpp"
#include "dnscoap/netsim.hpp"
#include "dnscoap/oscore.hpp"
#include "dnscoap/proxy.hpp"
#include "dnscoap/sizes.hpp"
#include "dnscoap/stats.hpp"

using namespace dnscoap;

namespace {

// Exit codes the examples in the docs rely on.
constexpr int k_exit_ok = 0;
constexpr int k_exit_error = 1;        // I/O, config, unexpected
constexpr int k_exit_timeout = 2;      // no answer within the give-up time
constexpr int k_exit_bad_response = 3; // 4.xx/5.xx or reset
constexpr int k_exit_auth = 4;         // protection failure

volatile std::sig_atomic_t g_stop = 0;

void on_signal(int) { g_stop = 1; }

double monotonic_now() {
  using clock = std::chrono::steady_clock;
  static const clock::time_point start = clock::now();
  return std::chrono::duration<double>(clock::now() - start).count();
}

/*
 * One UDP socket; peers are numeric "host:port" strings (IPv6 in
 * brackets). Outbound names are resolved once and cached, inbound
 * addresses are formatted the same way, so the reliability layer sees
 * one stable name per remote endpoint.
 */
class UdpNode : public coap::DatagramSink {
 public:
  UdpNode() = default;

  ~UdpNode() override {
    if (fd_ >= 0) {
      ::close(fd_);
    }
  }

  UdpNode(const UdpNode&) = delete;
  UdpNode& operator=(const UdpNode&) = delete;

  // Binds to host:port ("" picks an ephemeral port in `family`).
  void bind(const std::string& host, const std::string& port) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_DGRAM;
    hints.ai_flags = AI_PASSIVE;
    addrinfo* found = nullptr;
    int rc = ::getaddrinfo(host.empty() ? nullptr : host.c_str(), port.c_str(),
                           &hints, &found);
    if (rc != 0) {
      throw std::runtime_error("cannot resolve listen address: " +
                               std::string(gai_strerror(rc)));
    }
    std::unique_ptr<addrinfo, decltype(&freeaddrinfo)> guard(found, freeaddrinfo);
    open(found->ai_family);
    if (::bind(fd_, found->ai_addr, found->ai_addrlen) != 0) {
      throw std::runtime_error(std::string("bind: ") + std::strerror(errno));
    }
  }

  // Resolves a peer, opens a matching socket when none is bound yet,
  // and returns the canonical numeric name to use with the endpoint.
  std::string canonicalize(const std::string& peer) {
    auto [host, port] = split_host_port(peer);
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_DGRAM;
    addrinfo* found = nullptr;
    int rc = ::getaddrinfo(host.c_str(), port.c_str(), &hints, &found);
    if (rc != 0) {
      throw std::runtime_error("cannot resolve " + peer + ": " +
                               std::string(gai_strerror(rc)));
    }
    std::unique_ptr<addrinfo, decltype(&freeaddrinfo)> guard(found, freeaddrinfo);
    if (fd_ < 0) {
      open(found->ai_family);
    }
    sockaddr_storage addr{};
    std::memcpy(&addr, found->ai_addr, found->ai_addrlen);
    std::string name = format(addr, found->ai_addrlen);
    peers_[name] = {addr, found->ai_addrlen};
    return name;
  }

  void send(const Bytes& datagram, const std::string& peer) override {
    auto it = peers_.find(peer);
    if (it == peers_.end()) {
      // a request came from this address earlier; nothing to resolve
      return;
    }
    ::sendto(fd_, datagram.data(), datagram.size(), 0,
             reinterpret_cast<const sockaddr*>(&it->second.first),
             it->second.second);
  }

  std::optional<std::pair<Bytes, std::string>> receive() {
    Bytes buf(64 * 1024);
    sockaddr_storage addr{};
    socklen_t len = sizeof addr;
    ssize_t n = ::recvfrom(fd_, buf.data(), buf.size(), MSG_DONTWAIT,
                           reinterpret_cast<sockaddr*>(&addr), &len);
    if (n < 0) {
      return std::nullopt;
    }
    buf.resize(static_cast<std::size_t>(n));
    std::string peer = format(addr, len);
    peers_[peer] = {addr, len};
    return std::make_pair(std::move(buf), std::move(peer));
  }

  int fd() const { return fd_; }

 private:
  void open(int family) {
    fd_ = ::socket(family, SOCK_DGRAM, 0);
    if (fd_ < 0) {
      throw std::runtime_error(std::string("socket: ") + std::strerror(errno));
    }
  }

  static std::pair<std::string, std::string> split_host_port(const std::string& s) {
    if (!s.empty() && s[0] == '[') {
      std::size_t close = s.find(']');
      if (close == std::string::npos || close + 1 >= s.size() || s[close + 1] != ':') {
        throw std::runtime_error("malformed address: " + s);
      }
      return {s.substr(1, close - 1), s.substr(close + 2)};
    }
    std::size_t colon = s.rfind(':');
    if (colon == std::string::npos) {
      throw std::runtime_error("expected host:port, got: " + s);
    }
    return {s.substr(0, colon), s.substr(colon + 1)};
  }

  static std::string format(const sockaddr_storage& addr, socklen_t len) {
    char host[NI_MAXHOST];
    char serv[NI_MAXSERV];
    int rc = ::getnameinfo(reinterpret_cast<const sockaddr*>(&addr), len, host,
                           sizeof host, serv, sizeof serv,
                           NI_NUMERICHOST | NI_NUMERICSERV);
    if (rc != 0) {
      throw std::runtime_error("getnameinfo: " + std::string(gai_strerror(rc)));
    }
    std::string h = host;
    if (h.find(':') != std::string::npos) {
      h = "[" + h + "]";
    }
    return h + ":" + serv;
  }

  int fd_ = -1;
  std::map<std::string, std::pair<sockaddr_storage, socklen_t>> peers_;
};

// Drains the socket into the endpoint, then fires due timers. Returns
// after at most `max_wait` seconds.
void pump(UdpNode& node, coap::CoapEndpoint& ep, double max_wait) {
  double now = monotonic_now();
  double until = now + max_wait;
  if (auto deadline = ep.next_deadline(); deadline && *deadline < until) {
    until = *deadline;
  }
  int timeout_ms = std::max(0, static_cast<int>(std::ceil((until - now) * 1000)));
  pollfd pfd{node.fd(), POLLIN, 0};
  int r = ::poll(&pfd, 1, timeout_ms);
  if (r > 0 && (pfd.revents & POLLIN) != 0) {
    while (auto datagram = node.receive()) {
      ep.deliver(datagram->first, datagram->second, monotonic_now());
    }
  }
  ep.on_timer(monotonic_now());
}

oscore::KeyMaterial require_keys(const std::string& keyfile) {
  std::string path = keyfile;
  if (path.empty()) {
    if (const char* env = std::getenv("DOC_KEYFILE")) {
      path = env;
    }
  }
  if (path.empty()) {
    throw std::runtime_error(
        "object security needs a key file (--keyfile or DOC_KEYFILE)");
  }
  return oscore::load_key_file(path);
}

struct CommonFlags {
  std::string method = "fetch";
  std::string scheme = "doh-like";
  std::string security = "none";
  std::string format = "wire";
  std::string keyfile;
  std::uint64_t seed = 1;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool with_method) {
  if (with_method) {
    cmd->add_option("--method", f.method, "fetch | get | post")
        ->check(CLI::IsMember({"fetch", "get", "post"}));
  }
  cmd->add_option("--scheme", f.scheme, "doh-like | eol-ttls")
      ->check(CLI::IsMember({"doh-like", "eol-ttls"}));
  cmd->add_option("--security", f.security, "none | oscore")
      ->check(CLI::IsMember({"none", "oscore"}));
  cmd->add_option("--format", f.format, "wire | cbor payloads")
      ->check(CLI::IsMember({"wire", "cbor"}));
  cmd->add_option("--keyfile", f.keyfile, "object-security key file (JSON)");
  cmd->add_option("--seed", f.seed, "seed for nonces, ids and shuffles");
}

std::uint16_t format_to_cf(const std::string& format) {
  return format == "cbor" ? cbordns::k_content_format : doc::k_content_format_dns;
}

int cmd_serve(const std::string& listen, const std::string& zone,
              const CommonFlags& flags, std::optional<std::size_t> block_size,
              bool presync) {
  auto [host, port] = [&] {
    std::size_t colon = listen.rfind(':');
    if (colon == std::string::npos) {
      throw std::runtime_error("expected host:port, got: " + listen);
    }
    return std::make_pair(listen.substr(0, colon), listen.substr(colon + 1));
  }();

  UdpNode node;
  node.bind(host, port);
  Rng rng(flags.seed);
  coap::CoapEndpoint ep(node, coap::TransmissionParams{}, rng.derive("ep"));

  doc::ZoneFileResolver resolver(zone, rng.derive("zone"));
  doc::ServerConfig cfg;
  cfg.scheme = doc::scheme_from_string(flags.scheme);
  auto handler = doc::make_doc_handler(
      resolver, cfg, block_size,
      [](const coap::Message&, const coap::Message& response) {
        std::cerr << "served " << static_cast<int>(response.code >> 5) << "."
                  << std::setw(2) << std::setfill('0')
                  << static_cast<int>(response.code & 0x1f) << " "
                  << response.payload.size() << " octets\n";
      });

  std::unique_ptr<oscore::OscoreServer> guard;
  if (flags.security == "oscore") {
    guard = std::make_unique<oscore::OscoreServer>(
        oscore::server_context(require_keys(flags.keyfile)), rng.derive("oscore"));
    guard->set_synchronized(presync);
    ep.set_request_handler(guard->wrap(std::move(handler), monotonic_now));
  } else {
    ep.set_request_handler(std::move(handler));
  }

  std::cerr << "listening on " << listen << "\n";
  while (!g_stop) {
    pump(node, ep, 0.5);
  }
  return k_exit_ok;
}

int cmd_proxy(const std::string& listen, const std::string& upstream,
              std::size_t capacity, double stale_grace, std::uint64_t seed) {
  auto colon = listen.rfind(':');
  if (colon == std::string::npos) {
    throw std::runtime_error("expected host:port, got: " + listen);
  }
  UdpNode node;
  node.bind(listen.substr(0, colon), listen.substr(colon + 1));
  Rng rng(seed);
  coap::CoapEndpoint ep(node, coap::TransmissionParams{}, rng.derive("ep"));

  proxy::CoapProxy::Config cfg;
  cfg.cache.capacity = capacity;
  cfg.cache.stale_grace = stale_grace;
  cfg.default_upstream = node.canonicalize(upstream);
  proxy::CoapProxy fwd(ep, cfg);
  fwd.flow().on_cache_event = [](double, const std::string& kind) {
    std::cerr << "cache " << kind << "\n";
  };
  ep.set_request_handler(fwd.handler());

  std::cerr << "proxying " << listen << " -> " << upstream << "\n";
  while (!g_stop) {
    pump(node, ep, 0.5);
  }
  return k_exit_ok;
}

int cmd_query(const std::string& server, const std::string& name,
              const std::string& rtype_text, const CommonFlags& flags,
              std::optional<std::size_t> block_size, double wall_timeout) {
  auto rtype = dns::rtype_from_string(rtype_text);
  if (!rtype) {
    throw std::runtime_error("unknown record type: " + rtype_text);
  }

  UdpNode node;
  std::string peer = node.canonicalize(server);
  Rng rng(flags.seed);
  coap::CoapEndpoint ep(node, coap::TransmissionParams{}, rng.derive("ep"));

  doc::ClientConfig cfg;
  cfg.method = doc::method_from_string(flags.method);
  cfg.scheme = doc::scheme_from_string(flags.scheme);
  cfg.content_format = format_to_cf(flags.format);
  cfg.block_size = block_size;
  doc::DocClient client(ep, cfg, peer, rng.derive("doc"));

  std::unique_ptr<oscore::OscoreClient> protect;
  if (flags.security == "oscore") {
    protect = std::make_unique<oscore::OscoreClient>(
        ep, oscore::client_context(require_keys(flags.keyfile)));
    client.set_transport([&protect](coap::Message m, const std::string& to,
                                    coap::CoapEndpoint::ResponseCallback cb,
                                    double now) {
      protect->send(std::move(m), to, std::move(cb), now);
    });
  }

  dns::Question question{dns::Name::parse(name), *rtype, dns::k_class_in};
  std::optional<doc::ResolveResult> result;
  client.resolve(question, monotonic_now(),
                 [&result](const doc::ResolveResult& r) { result = r; });

  double started = monotonic_now();
  while (!result && !g_stop) {
    pump(node, ep, 0.25);
    if (wall_timeout > 0 && monotonic_now() - started > wall_timeout) {
      std::cerr << "error: no answer within " << wall_timeout << " s\n";
      return k_exit_timeout;
    }
  }
  if (!result) {
    return k_exit_timeout;
  }

  if (result->status != doc::ResolveResult::Status::ok) {
    if (protect && protect->counters().security_failures > 0) {
      std::cerr << "error: protection failure (" << result->error_text << ")\n";
      return k_exit_auth;
    }
    std::cerr << "error: " << result->error_text << "\n";
    return result->status == doc::ResolveResult::Status::timeout
               ? k_exit_timeout
               : k_exit_bad_response;
  }

  for (const auto& record : result->answer.answers) {
    std::cout << record.name.to_string() << " " << record.ttl << " IN "
              << dns::rtype_to_string(record.rtype) << " "
              << dns::rdata_to_text(record.rtype, record.rdata) << "\n";
  }
  return k_exit_ok;
}

int cmd_sizes(std::size_t name_length, const std::string& rtype_text,
              const std::string& transports_csv, const std::string& methods_csv,
              const std::string& format, const std::string& link,
              std::uint32_t ttl) {
  sizes::SizeQuery q;
  q.name_length = name_length;
  auto rtype = dns::rtype_from_string(rtype_text);
  if (!rtype) {
    throw std::runtime_error("unknown record type: " + rtype_text);
  }
  q.rtype = *rtype;
  q.content_format = format_to_cf(format);
  q.ttl = ttl;
  q.link = netsim::link_profile(link);

  auto each = [](const std::string& csv, auto parse) {
    std::vector<decltype(parse(std::string{}))> out;
    std::istringstream in(csv);
    std::string item;
    while (std::getline(in, item, ',')) {
      if (!item.empty()) {
        out.push_back(parse(item));
      }
    }
    return out;
  };
  if (!transports_csv.empty()) {
    q.transports = each(transports_csv, [](const std::string& s) {
      return netsim::transport_from_string(s);
    });
  }
  if (!methods_csv.empty()) {
    q.methods = each(methods_csv, [](const std::string& s) {
      return doc::method_from_string(s);
    });
  }
  sizes::write_sizes_csv(sizes::size_table(q), std::cout);
  return k_exit_ok;
}

int cmd_analyze_trace(const std::string& path, bool as_json) {
  stats::Trace trace;
  if (path == "-") {
    trace = stats::parse_trace(std::cin);
  } else {
    std::ifstream in(path);
    if (!in) {
      throw std::runtime_error("cannot read " + path);
    }
    trace = stats::parse_trace(in);
  }
  if (trace.skipped > 0) {
    std::cerr << "warning: skipped " << trace.skipped << " unparsable line"
              << (trace.skipped == 1 ? "" : "s") << "\n";
  }
  stats::TraceStats st = stats::trace_stats(trace);
  if (as_json) {
    std::cout << stats::stats_json(st) << "\n";
  } else {
    stats::write_stats_csv(st, std::cout);
  }
  return k_exit_ok;
}

int cmd_simulate(const std::string& scenario_path, int seeds,
                 std::uint64_t seed_base, const std::string& out_dir) {
  std::ifstream in(scenario_path);
  if (!in) {
    throw std::runtime_error("cannot read " + scenario_path);
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  netsim::Scenario sc = netsim::scenario_from_json(buffer.str());

  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  {
    std::ofstream echo(out_dir + "/scenario.json", std::ios::binary);
    echo << netsim::scenario_to_json(sc) << "\n";
  }

  std::ofstream aggregate(out_dir + "/aggregate.csv", std::ios::binary);
  aggregate << "seed,queries,resolved,unresolved,retransmissions,cache_events,"
               "hop1_frames,hop1_bytes,hop2_frames,hop2_bytes,finished_at\n";

  for (int i = 0; i < seeds; ++i) {
    sc.seed = seed_base + static_cast<std::uint64_t>(i);
    netsim::Metrics m = netsim::run(sc);
    std::string dir = out_dir + "/seed-" + std::to_string(sc.seed);
    fs::create_directories(dir);
    netsim::write_metrics(sc, m, dir);

    auto hop = [&m](int h) -> netsim::LinkStats {
      auto it = m.links.find(h);
      return it == m.links.end() ? netsim::LinkStats{} : it->second;
    };
    char finished[64];
    std::snprintf(finished, sizeof finished, "%.6f", m.finished_at);
    aggregate << sc.seed << ',' << m.queries.size() << ',' << m.resolved << ','
              << m.unresolved << ',' << m.retransmissions.size() << ','
              << m.cache_events.size() << ',' << hop(1).frames_sent << ','
              << hop(1).bytes_sent << ',' << hop(2).frames_sent << ','
              << hop(2).bytes_sent << ',' << finished << '\n';
    std::cerr << "seed " << sc.seed << ": " << m.resolved << "/"
              << m.queries.size() << " resolved\n";
  }
  return k_exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);

  CLI::App app{"DNS queries over constrained datagram transports"};
  app.require_subcommand(1);

  // serve
  auto* serve = app.add_subcommand("serve", "answer DoC queries from a zone file");
  std::string listen = "127.0.0.1:5683";
  std::string zone;
  CommonFlags serve_flags;
  std::size_t block = 0;
  bool presync = false;
  serve->add_option("--listen", listen, "bind address (host:port)");
  serve->add_option("--zone", zone, "zone JSON file")->required();
  add_common(serve, serve_flags, false);
  serve->add_option("--block-size", block, "block-wise slice size (0 = off)");
  serve->add_flag("--presync", presync, "skip the replay-window handshake");

  // proxy
  auto* proxy_cmd = app.add_subcommand("proxy", "caching forwarder");
  std::string proxy_listen = "127.0.0.1:5684";
  std::string upstream = "127.0.0.1:5683";
  std::size_t capacity = 64;
  double stale_grace = 300.0;
  std::uint64_t proxy_seed = 1;
  proxy_cmd->add_option("--listen", proxy_listen, "bind address (host:port)");
  proxy_cmd->add_option("--upstream", upstream, "origin server (host:port)");
  proxy_cmd->add_option("--capacity", capacity, "cache entries");
  proxy_cmd->add_option("--stale-grace", stale_grace,
                        "seconds an expired entry stays revalidatable");
  proxy_cmd->add_option("--seed", proxy_seed, "endpoint rng seed");

  // query
  auto* query = app.add_subcommand("query", "resolve one name");
  std::string server = "127.0.0.1:5683";
  std::string qname;
  std::string qtype = "AAAA";
  CommonFlags query_flags;
  std::size_t query_block = 0;
  double wall_timeout = 0;
  query->add_option("name", qname, "domain name")->required();
  query->add_option("rtype", qtype, "record type (default AAAA)");
  query->add_option("--server", server, "DoC server (host:port)");
  add_common(query, query_flags, true);
  query->add_option("--block-size", query_block, "block-wise slice size (0 = off)");
  query->add_option("--timeout", wall_timeout, "wall-clock give-up, seconds (0 = endpoint driven)");

  // sizes
  auto* sizes_cmd = app.add_subcommand("sizes", "per-layer packet size table");
  std::size_t name_length = 24;
  std::string sizes_rtype = "AAAA";
  std::string transports_csv;
  std::string methods_csv;
  std::string sizes_format = "wire";
  std::string link = "ieee802154";
  std::uint32_t ttl = 86400;
  sizes_cmd->add_option("--name-length", name_length, "query name length, octets");
  sizes_cmd->add_option("--rtype", sizes_rtype, "record type");
  sizes_cmd->add_option("--transports", transports_csv,
                        "comma list: udp,dtls,coap,coaps,oscore (default all)");
  sizes_cmd->add_option("--methods", methods_csv,
                        "comma list: fetch,get,post (default all)");
  sizes_cmd->add_option("--format", sizes_format, "wire | cbor payloads")
      ->check(CLI::IsMember({"wire", "cbor"}));
  sizes_cmd->add_option("--link", link, "ieee802154 | lorawan")
      ->check(CLI::IsMember({"ieee802154", "lorawan"}));
  sizes_cmd->add_option("--ttl", ttl, "answer TTL used in the reference response");

  // analyze-trace
  auto* analyze = app.add_subcommand("analyze-trace", "name statistics over a query log");
  std::string trace_path;
  bool as_json = false;
  analyze->add_option("path", trace_path, "trace file, '-' for stdin")->required();
  analyze->add_flag("--json", as_json, "JSON instead of CSV");

  // simulate
  auto* simulate = app.add_subcommand("simulate", "run scenario seeds, write CSV bundles");
  std::string scenario_path;
  int seeds = 10;
  std::uint64_t seed_base = 1;
  std::string out_dir = "out";
  simulate->add_option("scenario", scenario_path, "scenario JSON file")->required();
  simulate->add_option("--seeds", seeds, "number of runs")->check(CLI::PositiveNumber);
  simulate->add_option("--seed-base", seed_base, "first seed value");
  simulate->add_option("--out", out_dir, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (serve->parsed()) {
      return cmd_serve(listen, zone, serve_flags,
                       block > 0 ? std::optional<std::size_t>(block) : std::nullopt,
                       presync);
    }
    if (proxy_cmd->parsed()) {
      return cmd_proxy(proxy_listen, upstream, capacity, stale_grace, proxy_seed);
    }
    if (query->parsed()) {
      return cmd_query(server, qname, qtype, query_flags,
                       query_block > 0 ? std::optional<std::size_t>(query_block)
                                       : std::nullopt,
                       wall_timeout);
    }
    if (sizes_cmd->parsed()) {
      return cmd_sizes(name_length, sizes_rtype, transports_csv, methods_csv,
                       sizes_format, link, ttl);
    }
    if (analyze->parsed()) {
      return cmd_analyze_trace(trace_path, as_json);
    }
    if (simulate->parsed()) {
      return cmd_simulate(scenario_path, seeds, seed_base, out_dir);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return k_exit_error;
  }
  return k_exit_error;
}
