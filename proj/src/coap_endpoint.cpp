#include "dnscoap/coap_endpoint.hpp"

#include <algorithm>

namespace dnscoap::coap {

double draw_initial_timeout(const TransmissionParams& params, Rng& rng) {
  return rng.uniform_real(params.ack_timeout,
                          params.ack_timeout * params.ack_random_factor);
}

std::vector<double> retransmission_schedule(const TransmissionParams& params, Rng& rng) {
  double initial = draw_initial_timeout(params, rng);
  std::vector<double> offsets;
  offsets.reserve(params.max_retransmit);
  for (int k = 1; k <= params.max_retransmit; ++k) {
    offsets.push_back(initial * static_cast<double>((1u << k) - 1));
  }
  return offsets;
}

StepResult exchange_step(ExchangeState& state, ExchangeEvent event, double now) {
  switch (event) {
    case ExchangeEvent::ack:
      return {StepResult::Kind::complete};
    case ExchangeEvent::reset:
      return {StepResult::Kind::fail};
    case ExchangeEvent::timeout:
      if (state.attempt >= state.max_retransmit) {
        return {StepResult::Kind::fail};
      }
      ++state.attempt;
      state.timeout *= 2;
      state.deadline = now + state.timeout;
      return {StepResult::Kind::retransmit};
  }
  return {StepResult::Kind::proceed};
}

std::uint64_t CoapEndpoint::send_request(Message msg, const std::string& peer,
                                         ResponseCallback cb, double now) {
  now_ = std::max(now_, now);
  std::uint16_t raw_token = next_token_++;
  msg.token = {static_cast<std::uint8_t>(raw_token >> 8),
               static_cast<std::uint8_t>(raw_token)};
  msg.message_id = next_message_id_++;

  Exchange ex;
  ex.token = msg.token;
  ex.message_id = msg.message_id;
  ex.peer = peer;
  ex.callback = std::move(cb);
  ex.state.datagram = encode(msg);
  ex.state.started = now;
  ex.state.max_retransmit = params_.max_retransmit;
  if (msg.type == Type::con) {
    ex.state.initial_timeout = draw_initial_timeout(params_, rng_);
    ex.state.timeout = ex.state.initial_timeout;
    ex.state.deadline = now + ex.state.timeout;
  } else {
    // Non-confirmable: no retransmission, only the overall lifetime guard.
    ex.state.acked = true;
    ex.state.deadline = now + k_acked_exchange_lifetime;
  }

  std::uint64_t id = next_exchange_id_++;
  Bytes wire = ex.state.datagram;
  exchanges_.emplace(id, std::move(ex));
  ++counters_.sent_requests;
  sink_.send(wire, peer);
  return id;
}

void CoapEndpoint::deliver(const Bytes& datagram, const std::string& peer, double now) {
  now_ = std::max(now_, now);
  Message msg;
  try {
    msg = decode(datagram);
  } catch (const ParseError&) {
    ++counters_.parse_errors;
    return;
  }

  if (msg.is_request()) {
    handle_request(msg, peer);
    return;
  }
  if (msg.code == k_code_empty) {
    if (msg.type == Type::con) {
      // CoAP ping: answer with a reset.
      Message rst;
      rst.type = Type::rst;
      rst.message_id = msg.message_id;
      sink_.send(encode(rst), peer);
      return;
    }
    if (msg.type == Type::ack) {
      // Separate-response pattern: stop retransmitting, keep waiting.
      std::uint64_t id = id_by_mid(msg.message_id);
      if (auto it = exchanges_.find(id); it != exchanges_.end()) {
        it->second.state.acked = true;
        it->second.state.deadline = now + k_acked_exchange_lifetime;
      }
      return;
    }
  }
  if (msg.type == Type::rst) {
    std::uint64_t id = id_by_mid(msg.message_id);
    if (id) {
      fail_exchange(id, Outcome::reset);
    }
    return;
  }
  if (msg.is_response()) {
    handle_response(msg, peer, now);
    return;
  }
  ++counters_.strays;
}

void CoapEndpoint::handle_request(const Message& msg, const std::string& peer) {
  if (msg.type != Type::con && msg.type != Type::non) {
    ++counters_.strays;
    return;
  }
  for (const auto& entry : dedup_) {
    if (entry->message_id == msg.message_id && entry->peer == peer) {
      ++counters_.duplicates;
      if (entry->responded) {
        sink_.send(entry->response, peer);
      }
      // Not yet answered: absorb; the pending responder will answer the
      // original transmission.
      return;
    }
  }
  auto entry = std::make_shared<DedupEntry>();
  entry->peer = peer;
  entry->message_id = msg.message_id;
  dedup_.push_back(entry);
  while (dedup_.size() > k_dedup_window) {
    dedup_.pop_front();
  }

  if (!handler_) {
    Message rst;
    rst.type = Type::rst;
    rst.message_id = msg.message_id;
    sink_.send(encode(rst), peer);
    return;
  }

  std::uint16_t mid = msg.message_id;
  Bytes token = msg.token;
  Responder responder = [this, entry, peer, mid, token](Message resp) {
    resp.type = Type::ack;
    resp.message_id = mid;
    resp.token = token;
    Bytes wire = encode(resp);
    entry->responded = true;
    entry->response = wire;
    sink_.send(wire, peer);
  };
  handler_(msg, peer, std::move(responder));
}

void CoapEndpoint::handle_response(const Message& msg, const std::string& peer,
                                   double /*now*/) {
  Exchange* ex = find_by_token(msg.token);
  if (!ex) {
    ++counters_.strays;
    if (msg.type == Type::con) {
      Message rst;
      rst.type = Type::rst;
      rst.message_id = msg.message_id;
      sink_.send(encode(rst), peer);
    }
    return;
  }
  if (msg.type == Type::con) {
    // Separate response: acknowledge it before completing the exchange.
    Message ack;
    ack.type = Type::ack;
    ack.message_id = msg.message_id;
    sink_.send(encode(ack), peer);
  }
  std::uint64_t id = 0;
  for (const auto& [eid, e] : exchanges_) {
    if (&e == ex) {
      id = eid;
      break;
    }
  }
  ResponseCallback cb = std::move(ex->callback);
  exchanges_.erase(id);
  cb(Outcome::ok, &msg);
}

std::optional<double> CoapEndpoint::next_deadline() const {
  std::optional<double> best;
  for (const auto& [id, ex] : exchanges_) {
    if (!best || ex.state.deadline < *best) {
      best = ex.state.deadline;
    }
  }
  return best;
}

void CoapEndpoint::on_timer(double now) {
  now_ = std::max(now_, now);
  for (;;) {
    std::uint64_t due = 0;
    for (const auto& [id, ex] : exchanges_) {
      if (ex.state.deadline <= now) {
        due = id;
        break;
      }
    }
    if (!due) {
      return;
    }
    Exchange& ex = exchanges_.at(due);
    if (ex.state.acked) {
      // Separate response never arrived within the exchange lifetime.
      fail_exchange(due, Outcome::timeout);
      continue;
    }
    StepResult step = exchange_step(ex.state, ExchangeEvent::timeout, now);
    if (step.kind == StepResult::Kind::retransmit) {
      ++counters_.retransmissions;
      if (on_retransmit) {
        on_retransmit(due, ex.state.attempt, now - ex.state.started);
      }
      sink_.send(ex.state.datagram, ex.peer);
    } else {
      fail_exchange(due, Outcome::timeout);
    }
  }
}

void CoapEndpoint::fail_exchange(std::uint64_t id, Outcome outcome) {
  auto it = exchanges_.find(id);
  if (it == exchanges_.end()) {
    return;
  }
  ResponseCallback cb = std::move(it->second.callback);
  exchanges_.erase(it);
  ++counters_.failures;
  cb(outcome, nullptr);
}

CoapEndpoint::Exchange* CoapEndpoint::find_by_token(const Bytes& token) {
  for (auto& [id, ex] : exchanges_) {
    if (ex.token == token) {
      return &ex;
    }
  }
  return nullptr;
}

std::uint64_t CoapEndpoint::id_by_mid(std::uint16_t mid) const {
  for (const auto& [id, ex] : exchanges_) {
    if (ex.message_id == mid) {
      return id;
    }
  }
  return 0;
}

namespace {

// Shared continuation state for one block-wise client request.
struct BlockwiseTransfer : std::enable_shared_from_this<BlockwiseTransfer> {
  CoapEndpoint* endpoint = nullptr;
  Message base;  // request without payload or block options
  Bytes body;
  std::string peer;
  std::size_t block_size = 0;
  std::vector<std::pair<BlockOption, Bytes>> blocks;
  std::size_t next_block = 0;
  Bytes response_body;
  CoapEndpoint::ResponseCallback callback;

  void send_block1(double now) {
    const auto& [block, chunk] = blocks[next_block];
    Message msg = base;
    msg.add_option_uint(k_opt_block1, block.value());
    msg.payload = chunk;
    auto self = shared_from_this();
    endpoint->send_request(
        msg, peer,
        [self](Outcome outcome, const Message* resp) {
          self->on_block1_response(outcome, resp);
        },
        now);
  }

  void on_block1_response(Outcome outcome, const Message* resp) {
    if (outcome != Outcome::ok) {
      callback(outcome, nullptr);
      return;
    }
    bool more = blocks[next_block].first.more;
    if (resp->code == k_code_continue && more) {
      ++next_block;
      send_block1(/*now=*/respond_time());
      return;
    }
    on_final_response(*resp);
  }

  void request_block2(std::uint32_t num) {
    Message msg = base;
    msg.payload = body;  // FETCH repeats its body on follow-up block requests
    msg.add_option_uint(k_opt_block2,
                        BlockOption{num, false, BlockOption::szx_for(block_size)}.value());
    auto self = shared_from_this();
    endpoint->send_request(
        msg, peer,
        [self](Outcome outcome, const Message* resp) {
          if (outcome != Outcome::ok) {
            self->callback(outcome, nullptr);
            return;
          }
          self->on_final_response(*resp);
        },
        respond_time());
  }

  void on_final_response(const Message& resp) {
    auto block2 = block_option(resp, k_opt_block2);
    if (!block2) {
      if (response_body.empty()) {
        callback(Outcome::ok, &resp);
        return;
      }
      Message whole = resp;
      whole.payload.insert(whole.payload.begin(), response_body.begin(),
                           response_body.end());
      callback(Outcome::ok, &whole);
      return;
    }
    response_body.insert(response_body.end(), resp.payload.begin(), resp.payload.end());
    if (block2->more) {
      request_block2(block2->num + 1);
      return;
    }
    Message whole = resp;
    whole.remove_options(k_opt_block2);
    whole.payload = response_body;
    callback(Outcome::ok, &whole);
  }

  double respond_time() const { return endpoint->now(); }
};

}  // namespace

void send_request_blockwise(CoapEndpoint& endpoint, Message msg,
                            const std::string& peer, std::size_t block_size,
                            CoapEndpoint::ResponseCallback cb, double now) {
  auto transfer = std::make_shared<BlockwiseTransfer>();
  transfer->endpoint = &endpoint;
  transfer->body = msg.payload;
  transfer->peer = peer;
  transfer->block_size = block_size;
  transfer->callback = std::move(cb);
  msg.payload.clear();
  transfer->base = msg;

  if (transfer->body.size() <= block_size) {
    Message plain = transfer->base;
    plain.payload = transfer->body;
    endpoint.send_request(
        plain, peer,
        [transfer](Outcome outcome, const Message* resp) {
          if (outcome != Outcome::ok) {
            transfer->callback(outcome, nullptr);
            return;
          }
          transfer->on_final_response(*resp);
        },
        now);
    return;
  }
  transfer->blocks = slice_body(transfer->body, block_size);
  transfer->send_block1(now);
}

CoapEndpoint::RequestHandler blockwise_server(CoapEndpoint::RequestHandler inner,
                                              std::size_t block_size) {
  struct State {
    std::map<std::string, Bytes> assembly;        // per-peer Block1 buffers
    std::map<std::string, Message> last_response; // per-peer sliceable responses
  };
  auto state = std::make_shared<State>();
  BlockOption::szx_for(block_size);  // validate up front

  return [inner, state, block_size](const Message& request, const std::string& peer,
                                    CoapEndpoint::Responder respond) {
    Message req = request;

    if (auto block1 = block_option(req, k_opt_block1)) {
      Bytes& buffer = state->assembly[peer];
      if (block1->num == 0) {
        buffer.clear();
      }
      if (block1->num * block1->block_size() != buffer.size()) {
        Message err;
        err.code = k_code_entity_incomplete;
        respond(std::move(err));
        state->assembly.erase(peer);
        return;
      }
      buffer.insert(buffer.end(), req.payload.begin(), req.payload.end());
      if (block1->more) {
        Message cont;
        cont.code = k_code_continue;
        cont.add_option_uint(k_opt_block1, block1->value());
        respond(std::move(cont));
        return;
      }
      req.payload = std::move(buffer);
      state->assembly.erase(peer);
      req.remove_options(k_opt_block1);
    }

    std::uint32_t want_num = 0;
    if (auto block2 = block_option(req, k_opt_block2)) {
      want_num = block2->num;
      if (want_num > 0) {
        if (auto it = state->last_response.find(peer); it != state->last_response.end()) {
          Message slice = it->second;
          auto blocks = slice_body(slice.payload, block_size);
          if (want_num >= blocks.size()) {
            Message err;
            err.code = k_code_bad_option;
            respond(std::move(err));
            return;
          }
          slice.payload = blocks[want_num].second;
          slice.add_option_uint(k_opt_block2, blocks[want_num].first.value());
          respond(std::move(slice));
          return;
        }
      }
      req.remove_options(k_opt_block2);
    }

    auto wrapped = [state, peer, respond, block_size, want_num](Message resp) {
      if (resp.payload.size() > block_size && code_class(resp.code) == 2) {
        state->last_response[peer] = resp;
        auto blocks = slice_body(resp.payload, block_size);
        if (want_num >= blocks.size()) {
          Message err;
          err.code = k_code_bad_option;
          respond(std::move(err));
          return;
        }
        Message slice = resp;
        slice.payload = blocks[want_num].second;
        slice.add_option_uint(k_opt_block2, blocks[want_num].first.value());
        respond(std::move(slice));
        return;
      }
      respond(std::move(resp));
    };
    inner(req, peer, wrapped);
  };
}

}  // namespace dnscoap::coap
