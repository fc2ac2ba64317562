#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>

#include "dnscoap/bytes.hpp"
#include "dnscoap/coap.hpp"
#include "dnscoap/coap_endpoint.hpp"
#include "dnscoap/rng.hpp"

namespace dnscoap::oscore {

// AES-CCM-16-64-128 profile (COSE algorithm 10): 16-octet keys,
// 13-octet nonces, 8-octet tags.
constexpr std::uint64_t k_aead_algorithm = 10;
constexpr std::size_t k_key_length = 16;
constexpr std::size_t k_nonce_length = 13;
constexpr std::size_t k_tag_length = 8;

// The nonce layout leaves nonce_length - 6 = 7 octets for an id.
constexpr std::size_t k_max_id_length = k_nonce_length - 6;

// Partial IVs are at most 5 octets, so sequence numbers end here.
constexpr std::uint64_t k_sequence_limit = 1ULL << 40;

constexpr std::size_t k_default_replay_window = 32;

constexpr std::size_t k_echo_length = 8;
constexpr double k_echo_freshness = 60.0;

/// HKDF-SHA256 (RFC 5869). An empty salt means a hash-length zero salt.
Bytes hkdf_sha256(const Bytes& salt, const Bytes& ikm, const Bytes& info,
                  std::size_t length);

/// AEAD seal with the profile parameters; the 8-octet tag is appended.
Bytes ccm_seal(const Bytes& key, const Bytes& nonce, const Bytes& aad,
               const Bytes& plaintext);

/// Verify-then-decrypt; nullopt when the tag does not check out.
std::optional<Bytes> ccm_open(const Bytes& key, const Bytes& nonce, const Bytes& aad,
                              const Bytes& ciphertext);

class SecurityError : public std::runtime_error {
 public:
  enum class Kind { format, authentication, replay, sequence, max_age };

  SecurityError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// Sliding anti-replay window: remembers the highest sequence number
/// seen and which of the last `size` values arrived, so out-of-order
/// delivery inside the window is fine but nothing is accepted twice.
class ReplayWindow {
 public:
  explicit ReplayWindow(std::size_t size = k_default_replay_window) : size_(size) {}

  /// Checks and marks in one step. False on a replay, or on anything
  /// that already fell off the left edge of the window.
  bool accept(std::uint64_t seq);

  /// Window initialization after an Echo round trip: everything at or
  /// below `seq` is rejected from now on.
  void reset_to(std::uint64_t seq);

  std::size_t size() const { return size_; }

 private:
  std::size_t size_;
  std::optional<std::uint64_t> floor_;
  std::uint64_t highest_ = 0;
  bool any_ = false;
  std::set<std::uint64_t> seen_;
};

/*
 * Keys and IV come out of HKDF-SHA256 over the pre-shared master
 * secret, with a CBOR info structure per derived item:
 *
 *   info = [ id : bstr, null, alg : uint, type : tstr, length : uint ]
 *
 * where type is "Key" (16 octets, per party id) or "IV" (13 octets,
 * empty id). Both sides derive the same three secrets; "sender" and
 * "recipient" swap roles, so A's sender key is B's recipient key.
 */
struct SecurityContext {
  Bytes sender_id;
  Bytes recipient_id;
  Bytes sender_key;
  Bytes recipient_key;
  Bytes common_iv;
  std::uint64_t sender_seq = 0;
  ReplayWindow replay;

  /// Throws std::invalid_argument on equal ids or ids over 7 octets.
  static SecurityContext derive(const Bytes& master_secret, const Bytes& salt,
                                const Bytes& sender_id, const Bytes& recipient_id,
                                std::size_t replay_window = k_default_replay_window);

  /// Next partial-IV value; throws SecurityError{sequence} once the
  /// 2^40 space is spent (a new context must be derived).
  std::uint64_t next_sequence();
};

/// Minimal big-endian partial IV, at least one octet (0 -> 00).
Bytes encode_piv(std::uint64_t seq);

/// The request identifiers every response is bound to. Both sides keep
/// them per exchange; they go into the response AAD unchanged, which is
/// what ties a response to exactly one request.
struct RequestBinding {
  Bytes kid;
  Bytes piv;

  bool operator==(const RequestBinding&) const = default;
};

/// The byte string that actually gets encrypted: inner code, inner
/// options (same delta encoding as a full message), payload after 0xFF.
Bytes inner_serialize(const coap::Message& inner);

struct ProtectedRequest {
  coap::Message message;
  RequestBinding binding;
};

/// Wraps a request. The outer message keeps type/id/token (assigned
/// later by the message layer), shows code POST, carries Uri-Host,
/// Uri-Port and Proxy-Uri in the clear, and encrypts everything else.
/// Max-Age appears both inside and outside; the outer copy is advisory
/// for proxies and may only ever shrink.
ProtectedRequest protect_request(const coap::Message& inner, SecurityContext& ctx);

/// Wraps a response under the request's binding. The response carries
/// its own partial IV (no kid), so retransmissions at the message layer
/// reuse one ciphertext and never a nonce.
coap::Message protect_response(const coap::Message& inner, SecurityContext& ctx,
                               const RequestBinding& binding);

struct OpenedRequest {
  coap::Message message;  // inner, with outer type/id/token carried over
  RequestBinding binding;
  std::uint64_t sequence = 0;
};

/// Authenticates and decrypts a request without touching the replay
/// window; the Echo handshake needs to verify before a window exists.
/// Throws SecurityError{format|authentication}.
OpenedRequest open_request(const coap::Message& outer, const SecurityContext& ctx);

/// The standard inbound path: open, then check-and-advance the replay
/// window. Throws SecurityError{replay} for a seen partial IV.
OpenedRequest unprotect_request(const coap::Message& outer, SecurityContext& ctx);

/// Verifies a response against the stored request binding and rejects
/// an outer Max-Age that exceeds the protected one (the unprotected
/// copy may shorten freshness, never extend it).
/// Throws SecurityError{format|authentication|max_age}.
coap::Message unprotect_response(const coap::Message& outer, SecurityContext& ctx,
                                 const RequestBinding& binding);

/// Pre-shared keying material, loadable from JSON:
///   { "master_secret": hex, "master_salt": hex (optional),
///     "client_id": hex, "server_id": hex }
struct KeyMaterial {
  Bytes master_secret;
  Bytes master_salt;
  Bytes client_id;
  Bytes server_id;
};

KeyMaterial parse_key_json(const std::string& json_text);
KeyMaterial load_key_file(const std::string& path);

SecurityContext client_context(const KeyMaterial& km,
                               std::size_t replay_window = k_default_replay_window);
SecurityContext server_context(const KeyMaterial& km,
                               std::size_t replay_window = k_default_replay_window);

/// Server-side glue: unprotects requests, runs the replay/Echo gate,
/// dispatches to the wrapped handler and protects its responses.
///
/// Until the window is synchronized, every request is answered with a
/// protected 4.01 carrying a fresh Echo value; a repeat carrying a
/// fresh value initializes the window at that request's sequence
/// number. A replayed partial IV later on gets the same challenge, so
/// a client whose state diverged can resynchronize.
class OscoreServer {
 public:
  OscoreServer(SecurityContext ctx, Rng rng) : ctx_(std::move(ctx)), rng_(std::move(rng)) {}

  coap::CoapEndpoint::RequestHandler wrap(coap::CoapEndpoint::RequestHandler inner,
                                          std::function<double()> clock);

  /// Pre-initialized deployments skip the first-contact handshake.
  void set_synchronized(bool on) { synchronized_ = on; }
  bool synchronized() const { return synchronized_; }

  double echo_freshness = k_echo_freshness;

  SecurityContext& context() { return ctx_; }

  struct Counters {
    std::uint64_t accepted = 0;
    std::uint64_t challenges = 0;
    std::uint64_t replays = 0;
    std::uint64_t auth_failures = 0;
  };
  const Counters& counters() const { return counters_; }

 private:
  void challenge(const OpenedRequest& opened, const coap::CoapEndpoint::Responder& respond,
                 double now);

  SecurityContext ctx_;
  Rng rng_;
  bool synchronized_ = false;
  std::map<Bytes, double> issued_;  // outstanding Echo values -> issue time
  Counters counters_;
};

/// Client-side glue: protects, sends, unprotects, and transparently
/// repeats a request once more when the server answers 4.01 + Echo.
/// Plugs in wherever a plain transport function is expected.
class OscoreClient {
 public:
  OscoreClient(coap::CoapEndpoint& endpoint, SecurityContext ctx)
      : endpoint_(endpoint), ctx_(std::move(ctx)) {}

  void send(coap::Message inner, const std::string& peer,
            coap::CoapEndpoint::ResponseCallback cb, double now);

  SecurityContext& context() { return ctx_; }

  /// Responses failing verification are reported here and surface to
  /// the caller as a failed exchange.
  std::function<void(const SecurityError&)> on_security_error;

  struct Counters {
    std::uint64_t echo_retries = 0;
    std::uint64_t security_failures = 0;
  };
  const Counters& counters() const { return counters_; }

 private:
  void dispatch(coap::Message inner, const std::string& peer,
                coap::CoapEndpoint::ResponseCallback cb, double now, int echo_budget);

  coap::CoapEndpoint& endpoint_;
  SecurityContext ctx_;
  Counters counters_;
};

}  // namespace dnscoap::oscore
