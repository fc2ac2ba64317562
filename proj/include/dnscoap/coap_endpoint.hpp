#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dnscoap/bytes.hpp"
#include "dnscoap/coap.hpp"
#include "dnscoap/rng.hpp"

namespace dnscoap::coap {

/// Confirmable-message timing knobs (RFC 7252 defaults).
struct TransmissionParams {
  double ack_timeout = 2.0;
  double ack_random_factor = 1.5;
  int max_retransmit = 4;
};

/// Initial timeout draw: uniform over [ack_timeout, ack_timeout * factor).
double draw_initial_timeout(const TransmissionParams& params, Rng& rng);

/// Cumulative retransmission offsets from the first transmission for one
/// exchange: the k-th entry is T * (2^k - 1) where T is the initial draw.
/// With ack_random_factor 1 the defaults give exactly [2, 6, 14, 30].
std::vector<double> retransmission_schedule(const TransmissionParams& params, Rng& rng);

/// Per-exchange retransmission state. `datagram` holds the encoded request,
/// so every retransmission is byte-identical to the original transmission.
struct ExchangeState {
  Bytes datagram;
  double initial_timeout = 0;  // T as drawn
  double timeout = 0;          // current timer length (doubles per retransmit)
  double deadline = 0;         // absolute time of the next timer event
  double started = 0;          // time of the first transmission
  int attempt = 0;             // retransmissions performed so far
  int max_retransmit = 4;
  bool acked = false;          // empty ACK seen; awaiting a separate response
};

enum class ExchangeEvent { ack, timeout, reset };

struct StepResult {
  enum class Kind { proceed, retransmit, fail, complete } kind;
};

/// Advances one exchange: ack completes it, reset fails it, a timeout either
/// schedules a byte-identical retransmission (doubling the timer) or, once
/// `attempt` has reached max_retransmit, fails it.
StepResult exchange_step(ExchangeState& state, ExchangeEvent event, double now);

/// Where encoded datagrams go. Real sockets and the simulator implement the
/// same interface, so everything above this line is transport-agnostic.
class DatagramSink {
public:
  virtual ~DatagramSink() = default;
  virtual void send(const Bytes& datagram, const std::string& peer) = 0;
};

enum class Outcome { ok, timeout, reset };

/// One CoAP messaging endpoint: token/message-id assignment, confirmable
/// retransmission, duplicate detection, and request dispatch. Time is passed
/// in by the driver (event loop or simulator) as seconds in an arbitrary
/// monotonic clock; the endpoint never reads a wall clock.
class CoapEndpoint {
public:
  /// Called exactly once per tracked request: with the response, or with
  /// nullptr on timeout/reset.
  using ResponseCallback = std::function<void(Outcome, const Message*)>;
  /// Handlers answer via the responder, immediately or later; either way the
  /// response rides an ACK carrying the request's message id and token.
  using Responder = std::function<void(Message)>;
  using RequestHandler =
      std::function<void(const Message&, const std::string& peer, Responder)>;

  static constexpr std::size_t k_dedup_window = 32;
  static constexpr double k_acked_exchange_lifetime = 247.0;

  CoapEndpoint(DatagramSink& sink, TransmissionParams params, Rng rng)
      : sink_(sink), params_(params), rng_(std::move(rng)) {}

  void set_request_handler(RequestHandler handler) { handler_ = std::move(handler); }

  /// Assigns a fresh 2-octet token and message id, encodes, transmits, and
  /// arms the retransmission timer. Returns the exchange id.
  std::uint64_t send_request(Message msg, const std::string& peer,
                             ResponseCallback cb, double now);

  /// Feeds one received datagram in. Undecodable datagrams are dropped.
  void deliver(const Bytes& datagram, const std::string& peer, double now);

  /// Earliest pending timer, if any; the driver calls on_timer at or after it.
  std::optional<double> next_deadline() const;

  /// Fires every timer with deadline <= now (retransmissions and give-ups).
  void on_timer(double now);

  bool has_pending() const { return !exchanges_.empty(); }

  /// Latest time this endpoint has been driven with (deliver/on_timer/send).
  /// Continuations scheduled from inside callbacks use it as "now".
  double now() const { return now_; }

  /// Observability: invoked on every retransmission with the exchange id,
  /// the attempt index (1-based) and the offset since the first transmission.
  std::function<void(std::uint64_t, int, double)> on_retransmit;

  struct Counters {
    std::uint64_t sent_requests = 0;
    std::uint64_t retransmissions = 0;
    std::uint64_t duplicates = 0;
    std::uint64_t failures = 0;
    std::uint64_t strays = 0;
    std::uint64_t parse_errors = 0;
  };
  const Counters& counters() const { return counters_; }

private:
  struct Exchange {
    ExchangeState state;
    Bytes token;
    std::uint16_t message_id = 0;
    std::string peer;
    ResponseCallback callback;
  };

  struct DedupEntry {
    std::string peer;
    std::uint16_t message_id = 0;
    bool responded = false;
    Bytes response;  // cached wire response, replayed on duplicates
  };

  void handle_request(const Message& msg, const std::string& peer);
  void handle_response(const Message& msg, const std::string& peer, double now);
  void fail_exchange(std::uint64_t id, Outcome outcome);
  Exchange* find_by_token(const Bytes& token);
  std::uint64_t id_by_mid(std::uint16_t mid) const;

  DatagramSink& sink_;
  TransmissionParams params_;
  Rng rng_;
  RequestHandler handler_;
  std::map<std::uint64_t, Exchange> exchanges_;
  std::deque<std::shared_ptr<DedupEntry>> dedup_;
  std::uint64_t next_exchange_id_ = 1;
  std::uint16_t next_token_ = 1;
  std::uint16_t next_message_id_ = 1;
  double now_ = 0;
  Counters counters_;
};

/// Client-side block-wise transfer on top of an endpoint: bodies larger than
/// block_size go out as a Block1 sequence (awaiting 2.31 Continue between
/// blocks) and Block2 responses are fetched to completion and reassembled
/// before the callback fires.
void send_request_blockwise(CoapEndpoint& endpoint, Message msg,
                            const std::string& peer, std::size_t block_size,
                            CoapEndpoint::ResponseCallback cb, double now);

/// Server-side companion: reassembles Block1 request bodies (answering 2.31
/// Continue per block) and slices oversized responses per Block2. One
/// transfer per peer at a time, which is all a constrained deployment needs.
CoapEndpoint::RequestHandler blockwise_server(CoapEndpoint::RequestHandler inner,
                                              std::size_t block_size);

}  // namespace dnscoap::coap
