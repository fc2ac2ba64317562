#include "dnscoap/oscore.hpp"

#include <openssl/evp.h>
#include <openssl/hmac.h>

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "dnscoap/cbor.hpp"

namespace dnscoap::oscore {

using coap::Message;

namespace {

Bytes hmac_sha256(const Bytes& key, const Bytes& data) {
  Bytes out(32);
  unsigned out_len = 0;
  if (!HMAC(EVP_sha256(), key.data(), static_cast<int>(key.size()), data.data(),
            data.size(), out.data(), &out_len) ||
      out_len != 32) {
    throw std::runtime_error("HMAC-SHA256 failed");
  }
  return out;
}

}  // namespace

Bytes hkdf_sha256(const Bytes& salt, const Bytes& ikm, const Bytes& info,
                  std::size_t length) {
  if (length > 255 * 32) {
    throw std::invalid_argument("hkdf: output too long");
  }
  Bytes prk = hmac_sha256(salt.empty() ? Bytes(32, 0) : salt, ikm);
  Bytes okm;
  Bytes block;
  std::uint8_t counter = 1;
  while (okm.size() < length) {
    block.insert(block.end(), info.begin(), info.end());
    block.push_back(counter++);
    block = hmac_sha256(prk, block);
    okm.insert(okm.end(), block.begin(), block.end());
  }
  okm.resize(length);
  return okm;
}

namespace {

struct CipherCtx {
  EVP_CIPHER_CTX* ctx = EVP_CIPHER_CTX_new();
  ~CipherCtx() { EVP_CIPHER_CTX_free(ctx); }
};

[[noreturn]] void cipher_failure() { throw std::runtime_error("AES-CCM failure"); }

void check_aead_params(const Bytes& key, const Bytes& nonce) {
  if (key.size() != k_key_length || nonce.size() != k_nonce_length) {
    throw std::invalid_argument("AES-CCM-16-64-128 needs a 16-octet key and a "
                                "13-octet nonce");
  }
}

}  // namespace

Bytes ccm_seal(const Bytes& key, const Bytes& nonce, const Bytes& aad,
               const Bytes& plaintext) {
  check_aead_params(key, nonce);
  CipherCtx c;
  int len = 0;
  if (!c.ctx || !EVP_EncryptInit_ex(c.ctx, EVP_aes_128_ccm(), nullptr, nullptr, nullptr) ||
      !EVP_CIPHER_CTX_ctrl(c.ctx, EVP_CTRL_AEAD_SET_IVLEN,
                           static_cast<int>(nonce.size()), nullptr) ||
      !EVP_CIPHER_CTX_ctrl(c.ctx, EVP_CTRL_AEAD_SET_TAG,
                           static_cast<int>(k_tag_length), nullptr) ||
      !EVP_EncryptInit_ex(c.ctx, nullptr, nullptr, key.data(), nonce.data()) ||
      !EVP_EncryptUpdate(c.ctx, nullptr, &len, nullptr,
                         static_cast<int>(plaintext.size()))) {
    cipher_failure();
  }
  if (!aad.empty() &&
      !EVP_EncryptUpdate(c.ctx, nullptr, &len, aad.data(), static_cast<int>(aad.size()))) {
    cipher_failure();
  }
  Bytes out(plaintext.size() + k_tag_length);
  if (!plaintext.empty() &&
      !EVP_EncryptUpdate(c.ctx, out.data(), &len, plaintext.data(),
                         static_cast<int>(plaintext.size()))) {
    cipher_failure();
  }
  int final_len = 0;
  if (!EVP_EncryptFinal_ex(c.ctx, out.data() + plaintext.size(), &final_len) ||
      !EVP_CIPHER_CTX_ctrl(c.ctx, EVP_CTRL_AEAD_GET_TAG,
                           static_cast<int>(k_tag_length),
                           out.data() + plaintext.size())) {
    cipher_failure();
  }
  return out;
}

std::optional<Bytes> ccm_open(const Bytes& key, const Bytes& nonce, const Bytes& aad,
                              const Bytes& ciphertext) {
  check_aead_params(key, nonce);
  if (ciphertext.size() < k_tag_length) {
    return std::nullopt;
  }
  std::size_t body = ciphertext.size() - k_tag_length;
  CipherCtx c;
  int len = 0;
  if (!c.ctx || !EVP_DecryptInit_ex(c.ctx, EVP_aes_128_ccm(), nullptr, nullptr, nullptr) ||
      !EVP_CIPHER_CTX_ctrl(c.ctx, EVP_CTRL_AEAD_SET_IVLEN,
                           static_cast<int>(nonce.size()), nullptr) ||
      !EVP_CIPHER_CTX_ctrl(c.ctx, EVP_CTRL_AEAD_SET_TAG,
                           static_cast<int>(k_tag_length),
                           const_cast<std::uint8_t*>(ciphertext.data() + body)) ||
      !EVP_DecryptInit_ex(c.ctx, nullptr, nullptr, key.data(), nonce.data()) ||
      !EVP_DecryptUpdate(c.ctx, nullptr, &len, nullptr, static_cast<int>(body))) {
    cipher_failure();
  }
  if (!aad.empty() &&
      !EVP_DecryptUpdate(c.ctx, nullptr, &len, aad.data(), static_cast<int>(aad.size()))) {
    return std::nullopt;
  }
  Bytes plain(body);
  // the tag is verified inside this update; a forgery fails here
  if (!EVP_DecryptUpdate(c.ctx, plain.data(), &len, ciphertext.data(),
                         static_cast<int>(body))) {
    return std::nullopt;
  }
  return plain;
}

bool ReplayWindow::accept(std::uint64_t seq) {
  if (floor_ && seq <= *floor_) {
    return false;
  }
  if (any_) {
    if (seq + size_ <= highest_) {
      return false;  // left of the window: cannot tell a replay apart
    }
    if (seen_.count(seq)) {
      return false;
    }
  }
  seen_.insert(seq);
  any_ = true;
  highest_ = std::max(highest_, seq);
  while (!seen_.empty() && *seen_.begin() + size_ <= highest_) {
    seen_.erase(seen_.begin());
  }
  return true;
}

void ReplayWindow::reset_to(std::uint64_t seq) {
  floor_ = seq;
  highest_ = seq;
  any_ = true;
  seen_.clear();
}

namespace {

Bytes derivation_info(const Bytes& id, std::string_view type, std::size_t length) {
  cbor::Writer w;
  w.array(5);
  w.bytes(id);
  w.null();
  w.uint(k_aead_algorithm);
  w.text(type);
  w.uint(length);
  return w.take();
}

}  // namespace

SecurityContext SecurityContext::derive(const Bytes& master_secret, const Bytes& salt,
                                        const Bytes& sender_id,
                                        const Bytes& recipient_id,
                                        std::size_t replay_window) {
  if (sender_id == recipient_id) {
    throw std::invalid_argument("sender and recipient ids must differ");
  }
  if (sender_id.size() > k_max_id_length || recipient_id.size() > k_max_id_length) {
    throw std::invalid_argument("ids must fit the nonce layout (7 octets max)");
  }
  SecurityContext ctx;
  ctx.sender_id = sender_id;
  ctx.recipient_id = recipient_id;
  ctx.sender_key = hkdf_sha256(salt, master_secret,
                               derivation_info(sender_id, "Key", k_key_length),
                               k_key_length);
  ctx.recipient_key = hkdf_sha256(salt, master_secret,
                                  derivation_info(recipient_id, "Key", k_key_length),
                                  k_key_length);
  ctx.common_iv = hkdf_sha256(salt, master_secret,
                              derivation_info({}, "IV", k_nonce_length),
                              k_nonce_length);
  ctx.replay = ReplayWindow(replay_window);
  return ctx;
}

std::uint64_t SecurityContext::next_sequence() {
  if (sender_seq >= k_sequence_limit) {
    throw SecurityError(SecurityError::Kind::sequence,
                        "sender sequence space exhausted; derive a new context");
  }
  return sender_seq++;
}

Bytes encode_piv(std::uint64_t seq) {
  Bytes out;
  do {
    out.insert(out.begin(), static_cast<std::uint8_t>(seq & 0xFF));
    seq >>= 8;
  } while (seq != 0);
  return out;
}

namespace {

std::uint64_t decode_piv(const Bytes& piv) {
  std::uint64_t seq = 0;
  for (std::uint8_t b : piv) {
    seq = seq << 8 | b;
  }
  return seq;
}

/*
 * Nonce (13 octets), then XORed with the common IV:
 *
 *   +-----+------------------+--------------+
 *   | S=1 |  id, padded to 7 | piv, pad to 5|
 *   +-----+------------------+--------------+
 *
 * S is the id length; the id is that of whoever generated the piv.
 */
Bytes build_nonce(const Bytes& id, const Bytes& piv, const Bytes& common_iv) {
  Bytes nonce(k_nonce_length, 0);
  nonce[0] = static_cast<std::uint8_t>(id.size());
  std::copy(id.begin(), id.end(), nonce.begin() + 1 + (k_max_id_length - id.size()));
  std::copy(piv.begin(), piv.end(), nonce.begin() + 1 + k_max_id_length + (5 - piv.size()));
  for (std::size_t i = 0; i < k_nonce_length; ++i) {
    nonce[i] ^= common_iv[i];
  }
  return nonce;
}

// AAD = [ alg, request kid, request piv ]; responses reuse the
// request's identifiers here, which binds them to that one request.
Bytes build_aad(const RequestBinding& binding) {
  cbor::Writer w;
  w.array(3);
  w.uint(k_aead_algorithm);
  w.bytes(binding.kid);
  w.bytes(binding.piv);
  return w.take();
}

// Addressing stays visible; Max-Age is special-cased (both sides).
bool outer_only_option(std::uint16_t number) {
  return number == coap::k_opt_uri_host || number == coap::k_opt_uri_port ||
         number == coap::k_opt_proxy_uri || number == coap::k_opt_oscore;
}

// Splits an inner message into the encrypted view and the outer options.
void partition_options(const Message& inner, Message& enc_view, Message& outer) {
  for (const auto& opt : inner.options) {
    if (opt.number == coap::k_opt_max_age) {
      enc_view.options.push_back(opt);
      outer.options.push_back(opt);  // advisory copy for caches en route
    } else if (outer_only_option(opt.number)) {
      outer.options.push_back(opt);
    } else {
      enc_view.options.push_back(opt);
    }
  }
}

struct OscoreOptionFields {
  Bytes piv;
  std::optional<Bytes> kid;
};

// flags ‖ piv ‖ kid. Low 3 flag bits: piv length; 0x08: kid present.
Bytes encode_oscore_option(const Bytes& piv, const Bytes* kid) {
  Bytes value;
  value.push_back(static_cast<std::uint8_t>(piv.size() | (kid ? 0x08 : 0x00)));
  value.insert(value.end(), piv.begin(), piv.end());
  if (kid) {
    value.insert(value.end(), kid->begin(), kid->end());
  }
  return value;
}

OscoreOptionFields decode_oscore_option(const Bytes& value) {
  if (value.empty()) {
    throw SecurityError(SecurityError::Kind::format, "empty OSCORE option");
  }
  std::uint8_t flags = value[0];
  if (flags & 0xF0) {  // kid context and reserved bits are not in this profile
    throw SecurityError(SecurityError::Kind::format, "unsupported OSCORE option flags");
  }
  std::size_t piv_len = flags & 0x07;
  if (piv_len > 5 || value.size() < 1 + piv_len) {
    throw SecurityError(SecurityError::Kind::format, "bad OSCORE option layout");
  }
  OscoreOptionFields fields;
  fields.piv = Bytes(value.begin() + 1, value.begin() + 1 + piv_len);
  if (flags & 0x08) {
    fields.kid = Bytes(value.begin() + 1 + piv_len, value.end());
  } else if (value.size() != 1 + piv_len) {
    throw SecurityError(SecurityError::Kind::format, "trailing bytes in OSCORE option");
  }
  return fields;
}

coap::Message parse_inner(const Bytes& plain) {
  if (plain.empty()) {
    throw SecurityError(SecurityError::Kind::format, "empty inner message");
  }
  // re-borrow the message codec: a fake 4-octet header in front of the
  // inner serialization makes it a token-less message
  Bytes framed;
  framed.reserve(plain.size() + 3);
  framed.push_back(0x40);  // ver 1, CON, no token
  framed.push_back(plain[0]);
  framed.push_back(0x00);
  framed.push_back(0x00);
  framed.insert(framed.end(), plain.begin() + 1, plain.end());
  try {
    return coap::decode(framed);
  } catch (const ParseError&) {
    throw SecurityError(SecurityError::Kind::format, "undecodable inner message");
  }
}

}  // namespace

Bytes inner_serialize(const Message& inner) {
  Message tmp;
  tmp.type = coap::Type::con;
  tmp.code = inner.code;
  tmp.message_id = 0;
  tmp.options = inner.options;
  tmp.payload = inner.payload;
  Bytes framed = coap::encode(tmp);
  Bytes out;
  out.reserve(framed.size() - 3);
  out.push_back(inner.code);
  out.insert(out.end(), framed.begin() + 4, framed.end());
  return out;
}

ProtectedRequest protect_request(const Message& inner, SecurityContext& ctx) {
  std::uint64_t seq = ctx.next_sequence();
  Bytes piv = encode_piv(seq);
  RequestBinding binding{ctx.sender_id, piv};

  Message outer;
  outer.type = inner.type;
  outer.code = coap::k_code_post;
  outer.message_id = inner.message_id;
  outer.token = inner.token;

  Message enc_view;
  enc_view.code = inner.code;
  partition_options(inner, enc_view, outer);
  enc_view.payload = inner.payload;

  Bytes nonce = build_nonce(ctx.sender_id, piv, ctx.common_iv);
  outer.payload = ccm_seal(ctx.sender_key, nonce, build_aad(binding),
                           inner_serialize(enc_view));
  outer.add_option(coap::k_opt_oscore, encode_oscore_option(piv, &ctx.sender_id));
  return {std::move(outer), std::move(binding)};
}

Message protect_response(const Message& inner, SecurityContext& ctx,
                         const RequestBinding& binding) {
  std::uint64_t seq = ctx.next_sequence();
  Bytes piv = encode_piv(seq);

  Message outer;
  outer.type = inner.type;
  outer.code = coap::k_code_changed;
  outer.message_id = inner.message_id;
  outer.token = inner.token;

  Message enc_view;
  enc_view.code = inner.code;
  partition_options(inner, enc_view, outer);
  enc_view.payload = inner.payload;

  Bytes nonce = build_nonce(ctx.sender_id, piv, ctx.common_iv);
  outer.payload = ccm_seal(ctx.sender_key, nonce, build_aad(binding),
                           inner_serialize(enc_view));
  outer.add_option(coap::k_opt_oscore, encode_oscore_option(piv, nullptr));
  return outer;
}

OpenedRequest open_request(const Message& outer, const SecurityContext& ctx) {
  if (outer.code != coap::k_code_post) {
    throw SecurityError(SecurityError::Kind::format, "outer request code is not POST");
  }
  const auto* opt = outer.find_option(coap::k_opt_oscore);
  if (!opt) {
    throw SecurityError(SecurityError::Kind::format, "no OSCORE option");
  }
  OscoreOptionFields fields = decode_oscore_option(opt->value);
  if (!fields.kid) {
    throw SecurityError(SecurityError::Kind::format, "request without a kid");
  }
  if (*fields.kid != ctx.recipient_id) {
    throw SecurityError(SecurityError::Kind::authentication, "unknown key id");
  }

  RequestBinding binding{*fields.kid, fields.piv};
  Bytes nonce = build_nonce(*fields.kid, fields.piv, ctx.common_iv);
  auto plain = ccm_open(ctx.recipient_key, nonce, build_aad(binding), outer.payload);
  if (!plain) {
    throw SecurityError(SecurityError::Kind::authentication,
                        "request failed AEAD verification");
  }

  OpenedRequest opened;
  opened.message = parse_inner(*plain);
  opened.message.type = outer.type;
  opened.message.message_id = outer.message_id;
  opened.message.token = outer.token;
  opened.binding = std::move(binding);
  opened.sequence = decode_piv(fields.piv);
  return opened;
}

OpenedRequest unprotect_request(const Message& outer, SecurityContext& ctx) {
  OpenedRequest opened = open_request(outer, ctx);
  if (!ctx.replay.accept(opened.sequence)) {
    throw SecurityError(SecurityError::Kind::replay, "replayed partial IV");
  }
  return opened;
}

Message unprotect_response(const Message& outer, SecurityContext& ctx,
                           const RequestBinding& binding) {
  if (outer.code != coap::k_code_changed) {
    throw SecurityError(SecurityError::Kind::format, "outer response code is not 2.04");
  }
  const auto* opt = outer.find_option(coap::k_opt_oscore);
  if (!opt) {
    throw SecurityError(SecurityError::Kind::format, "no OSCORE option");
  }
  OscoreOptionFields fields = decode_oscore_option(opt->value);
  if (fields.kid) {
    throw SecurityError(SecurityError::Kind::format, "unexpected kid in a response");
  }
  if (fields.piv.empty()) {
    throw SecurityError(SecurityError::Kind::format, "response without a partial IV");
  }

  // the responder's own piv makes the nonce; the AAD stays the request's
  Bytes nonce = build_nonce(ctx.recipient_id, fields.piv, ctx.common_iv);
  auto plain = ccm_open(ctx.recipient_key, nonce, build_aad(binding), outer.payload);
  if (!plain) {
    throw SecurityError(SecurityError::Kind::authentication,
                        "response failed AEAD verification");
  }

  Message inner = parse_inner(*plain);
  inner.type = outer.type;
  inner.message_id = outer.message_id;
  inner.token = outer.token;

  if (auto outer_age = outer.option_uint(coap::k_opt_max_age)) {
    std::uint32_t protected_age = inner.option_uint(coap::k_opt_max_age).value_or(60);
    if (*outer_age > protected_age) {
      throw SecurityError(SecurityError::Kind::max_age,
                          "outer Max-Age exceeds the protected value");
    }
  }
  return inner;
}

KeyMaterial parse_key_json(const std::string& json_text) {
  nlohmann::json doc = nlohmann::json::parse(json_text);
  KeyMaterial km;
  km.master_secret = from_hex(doc.at("master_secret").get<std::string>());
  if (doc.contains("master_salt")) {
    km.master_salt = from_hex(doc.at("master_salt").get<std::string>());
  }
  km.client_id = from_hex(doc.at("client_id").get<std::string>());
  km.server_id = from_hex(doc.at("server_id").get<std::string>());
  return km;
}

KeyMaterial load_key_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open key file: " + path);
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_key_json(buffer.str());
}

SecurityContext client_context(const KeyMaterial& km, std::size_t replay_window) {
  return SecurityContext::derive(km.master_secret, km.master_salt, km.client_id,
                                 km.server_id, replay_window);
}

SecurityContext server_context(const KeyMaterial& km, std::size_t replay_window) {
  return SecurityContext::derive(km.master_secret, km.master_salt, km.server_id,
                                 km.client_id, replay_window);
}

void OscoreServer::challenge(const OpenedRequest& opened,
                             const coap::CoapEndpoint::Responder& respond, double now) {
  ++counters_.challenges;
  Bytes value(k_echo_length);
  for (auto& b : value) {
    b = static_cast<std::uint8_t>(rng_.uniform_int(0, 255));
  }
  issued_[value] = now;
  for (auto it = issued_.begin(); it != issued_.end();) {
    it = now - it->second > echo_freshness ? issued_.erase(it) : std::next(it);
  }

  Message ch;
  ch.code = coap::k_code_unauthorized;
  ch.add_option(coap::k_opt_echo, value);
  respond(protect_response(ch, ctx_, opened.binding));
}

coap::CoapEndpoint::RequestHandler OscoreServer::wrap(
    coap::CoapEndpoint::RequestHandler inner, std::function<double()> clock) {
  return [this, inner = std::move(inner), clock = std::move(clock)](
             const Message& outer, const std::string& peer,
             coap::CoapEndpoint::Responder respond) {
    OpenedRequest opened;
    try {
      opened = open_request(outer, ctx_);
    } catch (const SecurityError&) {
      ++counters_.auth_failures;
      Message plain;  // nothing to bind a protected reply to
      plain.code = coap::k_code_unauthorized;
      respond(std::move(plain));
      return;
    }

    double now = clock();
    if (!synchronized_) {
      const auto* echo = opened.message.find_option(coap::k_opt_echo);
      auto issued = echo ? issued_.find(echo->value) : issued_.end();
      bool fresh = issued != issued_.end() && now - issued->second <= echo_freshness;
      if (!fresh) {
        challenge(opened, respond, now);
        return;
      }
      issued_.erase(issued);
      synchronized_ = true;
      ctx_.replay.reset_to(opened.sequence);
    } else if (!ctx_.replay.accept(opened.sequence)) {
      ++counters_.replays;
      challenge(opened, respond, now);  // lets a desynced client recover
      return;
    }

    ++counters_.accepted;
    Message request = std::move(opened.message);
    request.remove_options(coap::k_opt_echo);
    RequestBinding binding = std::move(opened.binding);
    inner(request, peer, [this, binding, respond](Message response) {
      respond(protect_response(response, ctx_, binding));
    });
  };
}

void OscoreClient::send(Message inner, const std::string& peer,
                        coap::CoapEndpoint::ResponseCallback cb, double now) {
  dispatch(std::move(inner), peer, std::move(cb), now, 2);
}

void OscoreClient::dispatch(Message inner, const std::string& peer,
                            coap::CoapEndpoint::ResponseCallback cb, double now,
                            int echo_budget) {
  ProtectedRequest request = protect_request(inner, ctx_);
  auto handle = [this, inner = std::move(inner), peer, cb = std::move(cb),
                 binding = std::move(request.binding), echo_budget](
                    coap::Outcome outcome, const Message* response) mutable {
    if (outcome != coap::Outcome::ok) {
      cb(outcome, nullptr);
      return;
    }
    Message plain;
    try {
      plain = unprotect_response(*response, ctx_, binding);
    } catch (const SecurityError& e) {
      ++counters_.security_failures;
      if (on_security_error) {
        on_security_error(e);
      }
      cb(coap::Outcome::reset, nullptr);
      return;
    }
    const auto* echo = plain.find_option(coap::k_opt_echo);
    if (plain.code == coap::k_code_unauthorized && echo && echo_budget > 0) {
      ++counters_.echo_retries;
      Message again = std::move(inner);
      again.remove_options(coap::k_opt_echo);
      again.add_option(coap::k_opt_echo, echo->value);
      dispatch(std::move(again), peer, std::move(cb), endpoint_.now(), echo_budget - 1);
      return;
    }
    cb(coap::Outcome::ok, &plain);
  };
  endpoint_.send_request(std::move(request.message), peer, std::move(handle), now);
}

}  // namespace dnscoap::oscore
