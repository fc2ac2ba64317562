#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "dnscoap/coap.hpp"
#include "dnscoap/coap_endpoint.hpp"
#include "test_net.hpp"

using namespace dnscoap;
using namespace dnscoap::coap;
using dnscoap::testing::NetPort;
using dnscoap::testing::TestNet;

namespace {

Message make_fetch(std::size_t payload_len) {
  Message msg;
  msg.type = Type::con;
  msg.code = k_code_fetch;
  msg.token = {0x00, 0x01};
  msg.add_option_string(k_opt_uri_path, "dns");
  msg.add_option_uint(k_opt_content_format, 553);
  msg.payload.assign(payload_len, 0xAB);
  return msg;
}

}  // namespace

TEST_CASE("uint option values are minimal big-endian") {
  CHECK(uint_option_bytes(0).empty());
  CHECK(uint_option_bytes(60) == Bytes{60});
  CHECK(uint_option_bytes(553) == Bytes{0x02, 0x29});
  CHECK(uint_option_bytes(86400) == Bytes{0x01, 0x51, 0x80});
  CHECK(uint_option_bytes(0xFFFFFFFF) == Bytes{0xFF, 0xFF, 0xFF, 0xFF});
  CHECK(uint_option_value(uint_option_bytes(553)) == 553);
  CHECK(uint_option_value({}) == 0);
}

TEST_CASE("FETCH request encodes to 56 octets") {
  // header 4 + token 2 + Uri-Path option (1+3) + Content-Format option (1+2)
  // + marker 1 + payload 42
  Message msg = make_fetch(42);
  Bytes wire = encode(msg);
  CHECK(wire.size() == 4 + 2 + 4 + 3 + 1 + 42);
  CHECK(wire.size() == 56);
  CHECK(wire[0] == 0x42);  // ver 1, CON, TKL 2
  CHECK(wire[1] == k_code_fetch);
  Message back = decode(wire);
  CHECK(back == msg);
}

TEST_CASE("payload marker appears iff payload nonempty") {
  Message msg = make_fetch(0);
  Bytes wire = encode(msg);
  CHECK(std::find(wire.begin(), wire.end(), 0xFF) == wire.end());
  CHECK(decode(wire) == msg);
}

TEST_CASE("option deltas cover both extension forms") {
  Message msg;
  msg.type = Type::non;
  msg.code = k_code_content;
  msg.add_option_uint(k_opt_accept, 553);
  msg.add_option(k_opt_echo, Bytes(8, 0x11));  // delta 235: one extension octet
  msg.add_option(40001, Bytes{0x01});          // delta 39749: two extension octets
  msg.add_option(k_opt_uri_path, Bytes{'d'});  // sorts ahead of everything above
  msg.payload = {0x00};

  Bytes wire = encode(msg);
  Message back = decode(wire);
  // encode canonicalizes option order
  REQUIRE(back.options.size() == 4);
  CHECK(back.options[0].number == k_opt_uri_path);
  CHECK(back.options[1].number == k_opt_accept);
  CHECK(back.options[2].number == k_opt_echo);
  CHECK(back.options[3].number == 40001);
  CHECK(back.payload == msg.payload);

  // long value: one-extension-octet length, then the 300-octet two-octet form.
  // delta 15 is the reserved nibble, so a lone Uri-Query also extends the delta.
  Message long_opt;
  long_opt.code = k_code_get;
  long_opt.add_option(k_opt_uri_query, Bytes(60, 'q'));
  Bytes wire2 = encode(long_opt);
  CHECK(wire2.size() == 4 + 1 + 1 + 1 + 60);
  CHECK(decode(wire2) == long_opt);

  // preceded by Uri-Path the delta is 4 and fits the nibble
  Message get;
  get.code = k_code_get;
  get.add_option_string(k_opt_uri_path, "dns");
  get.add_option(k_opt_uri_query, Bytes(60, 'q'));
  CHECK(encode(get).size() == 4 + 4 + (1 + 1 + 60));

  Message very_long;
  very_long.code = k_code_get;
  very_long.add_option(k_opt_uri_query, Bytes(300, 'q'));
  CHECK(decode(encode(very_long)) == very_long);
}

TEST_CASE("repeatable options keep their relative order") {
  Message msg;
  msg.code = k_code_get;
  msg.add_option_string(k_opt_uri_path, "a");
  msg.add_option_string(k_opt_uri_path, "bb");
  msg.add_option_string(k_opt_uri_path, "ccc");
  Message back = decode(encode(msg));
  auto paths = back.find_options(k_opt_uri_path);
  REQUIRE(paths.size() == 3);
  CHECK(paths[0]->value == Bytes{'a'});
  CHECK(paths[1]->value == Bytes{'b', 'b'});
  CHECK(paths[2]->value == Bytes{'c', 'c', 'c'});
}

TEST_CASE("codec round-trips random messages") {
  Rng rng(5);
  for (int i = 0; i < 300; ++i) {
    Message msg;
    msg.type = static_cast<Type>(rng.uniform(4));
    msg.code = static_cast<std::uint8_t>(rng.uniform(256));
    msg.message_id = static_cast<std::uint16_t>(rng.uniform(0x10000));
    msg.token = Bytes(rng.uniform(9), 0x5A);
    int opts = static_cast<int>(rng.uniform(5));
    for (int j = 0; j < opts; ++j) {
      std::uint16_t number = static_cast<std::uint16_t>(rng.uniform_int(1, 2000));
      msg.add_option(number, Bytes(rng.uniform(20), static_cast<std::uint8_t>(j)));
    }
    if (rng.bernoulli(0.5)) {
      msg.payload = Bytes(rng.uniform_int(1, 50), 0xEE);
    }
    Message back = decode(encode(msg));
    // canonical order: compare against the sorted original
    Message canon = msg;
    std::stable_sort(canon.options.begin(), canon.options.end(),
                     [](const Option& a, const Option& b) { return a.number < b.number; });
    CHECK(back == canon);
  }
}

TEST_CASE("decode rejects malformed datagrams") {
  CHECK_THROWS_AS(decode(Bytes{0x40, 0x01}), ParseError);         // short header
  CHECK_THROWS_AS(decode(Bytes{0x80, 0x01, 0, 1}), ParseError);   // version 2
  CHECK_THROWS_AS(decode(Bytes{0x49, 0x01, 0, 1}), ParseError);   // TKL 9
  CHECK_THROWS_AS(decode(Bytes{0x40, 0x01, 0, 1, 0xFF}), ParseError);  // marker, no payload
  CHECK_THROWS_AS(decode(Bytes{0x40, 0x01, 0, 1, 0xF0, 0x00}), ParseError);  // delta 15
  CHECK_THROWS_AS(decode(Bytes{0x40, 0x01, 0, 1, 0x1D}), ParseError);  // truncated option
}

TEST_CASE("block option bit layout") {
  CHECK(BlockOption{0, true, 0}.value() == 8);
  CHECK(BlockOption{1, true, 1}.value() == 25);
  CHECK(BlockOption{2, false, 1}.value() == 33);
  CHECK(BlockOption{0, true, 0}.block_size() == 16);
  CHECK(BlockOption{1, true, 1}.block_size() == 32);
  CHECK(BlockOption::from_value(25) == BlockOption{1, true, 1});
  CHECK(BlockOption::from_value(33) == BlockOption{2, false, 1});
  CHECK_THROWS_AS(BlockOption::from_value(7), ParseError);  // szx 7 reserved
  CHECK(BlockOption::szx_for(32) == 1);
  CHECK(BlockOption::szx_for(1024) == 6);
  CHECK_THROWS_AS(BlockOption::szx_for(48), std::invalid_argument);

  Rng rng(9);
  for (int i = 0; i < 200; ++i) {
    BlockOption block{static_cast<std::uint32_t>(rng.uniform(1u << 20)),
                      rng.bernoulli(0.5), static_cast<std::uint8_t>(rng.uniform(7))};
    CHECK(BlockOption::from_value(block.value()) == block);
  }
}

TEST_CASE("slice_body: 96-octet body at 32-octet blocks gives 3 blocks") {
  Bytes body(96, 0xCD);
  auto blocks = slice_body(body, 32);
  REQUIRE(blocks.size() == 3);
  CHECK(blocks[0].first == BlockOption{0, true, 1});
  CHECK(blocks[0].first.value() == 9);
  CHECK(blocks[1].first == BlockOption{1, true, 1});
  CHECK(blocks[1].first.value() == 25);
  CHECK(blocks[2].first == BlockOption{2, false, 1});
  CHECK(blocks[2].first.value() == 33);

  Bytes glued;
  for (const auto& [block, chunk] : blocks) {
    CHECK(chunk.size() == 32);
    glued.insert(glued.end(), chunk.begin(), chunk.end());
  }
  CHECK(glued == body);

  auto empty = slice_body({}, 32);
  REQUIRE(empty.size() == 1);
  CHECK(empty[0].first == BlockOption{0, false, 1});
  CHECK(empty[0].second.empty());

  auto uneven = slice_body(Bytes(100, 1), 32);
  REQUIRE(uneven.size() == 4);
  CHECK(uneven[3].second.size() == 4);
  CHECK(!uneven[3].first.more);
}

TEST_CASE("retransmission schedule doubles from the initial draw") {
  TransmissionParams exact{2.0, 1.0, 4};
  Rng rng(1);
  auto offsets = retransmission_schedule(exact, rng);
  REQUIRE(offsets.size() == 4);
  CHECK(offsets[0] == doctest::Approx(2.0));
  CHECK(offsets[1] == doctest::Approx(6.0));
  CHECK(offsets[2] == doctest::Approx(14.0));
  CHECK(offsets[3] == doctest::Approx(30.0));

  TransmissionParams defaults;
  Rng rng2(2);
  for (int i = 0; i < 500; ++i) {
    auto o = retransmission_schedule(defaults, rng2);
    REQUIRE(o.size() == 4);
    for (int k = 1; k <= 4; ++k) {
      double lo = 2.0 * ((1 << k) - 1);
      double hi = 3.0 * ((1 << k) - 1);
      CHECK(o[k - 1] >= lo);
      CHECK(o[k - 1] < hi);
    }
    // doubling: offset deltas are T, 2T, 4T, 8T
    double t = o[0];
    CHECK(o[1] - o[0] == doctest::Approx(2 * t));
    CHECK(o[2] - o[1] == doctest::Approx(4 * t));
    CHECK(o[3] - o[2] == doctest::Approx(8 * t));
  }
}

TEST_CASE("exchange_step: four retransmissions, then failure") {
  ExchangeState st;
  st.initial_timeout = 2.0;
  st.timeout = 2.0;
  st.deadline = 2.0;
  st.max_retransmit = 4;

  double now = 2.0;
  for (int k = 1; k <= 4; ++k) {
    auto step = exchange_step(st, ExchangeEvent::timeout, now);
    CHECK(step.kind == StepResult::Kind::retransmit);
    CHECK(st.attempt == k);
    now = st.deadline;
  }
  CHECK(st.attempt == 4);
  CHECK(now == doctest::Approx(62.0));  // 2 * (2^5 - 2), the final wait ends at 31*T
  auto final_step = exchange_step(st, ExchangeEvent::timeout, now);
  CHECK(final_step.kind == StepResult::Kind::fail);

  ExchangeState fresh;
  fresh.timeout = 2.0;
  fresh.deadline = 2.0;
  CHECK(exchange_step(fresh, ExchangeEvent::ack, 1.0).kind == StepResult::Kind::complete);
  CHECK(exchange_step(fresh, ExchangeEvent::reset, 1.0).kind == StepResult::Kind::fail);
}

TEST_CASE("endpoint round-trip with a handler") {
  TestNet net;
  NetPort client_port{&net, "client"};
  NetPort server_port{&net, "server"};
  TransmissionParams params;
  CoapEndpoint client(client_port, params, Rng(1));
  CoapEndpoint server(server_port, params, Rng(2));
  net.nodes = {{"client", &client}, {"server", &server}};

  int handler_calls = 0;
  server.set_request_handler([&](const Message& req, const std::string& peer,
                                 CoapEndpoint::Responder respond) {
    ++handler_calls;
    CHECK(peer == "client");
    CHECK(req.code == k_code_fetch);
    Message resp;
    resp.code = k_code_content;
    resp.payload = req.payload;
    respond(std::move(resp));
  });

  int callbacks = 0;
  Message req = make_fetch(10);
  client.send_request(req, "server",
                      [&](Outcome outcome, const Message* resp) {
                        ++callbacks;
                        CHECK(outcome == Outcome::ok);
                        REQUIRE(resp != nullptr);
                        CHECK(resp->code == k_code_content);
                        CHECK(resp->payload.size() == 10);
                        CHECK(resp->type == Type::ack);
                      },
                      0.0);
  CHECK(handler_calls == 1);
  CHECK(callbacks == 1);
  CHECK(!client.has_pending());
  CHECK(!client.next_deadline().has_value());
}

TEST_CASE("lost responses trigger byte-identical retransmissions, then give-up") {
  TestNet net;
  NetPort client_port{&net, "client"};
  TransmissionParams params;
  CoapEndpoint client(client_port, params, Rng(77));
  net.nodes = {{"client", &client}};
  net.drop = [](const std::string&, const std::string& to, const Bytes&) {
    return to == "server";  // server never hears anything
  };

  std::vector<std::pair<int, double>> retransmits;
  client.on_retransmit = [&](std::uint64_t, int attempt, double offset) {
    retransmits.push_back({attempt, offset});
  };
  int outcome_count = 0;
  client.send_request(make_fetch(4), "server",
                      [&](Outcome outcome, const Message* resp) {
                        ++outcome_count;
                        CHECK(outcome == Outcome::timeout);
                        CHECK(resp == nullptr);
                      },
                      0.0);

  while (auto deadline = client.next_deadline()) {
    client.on_timer(*deadline);
  }

  CHECK(outcome_count == 1);
  REQUIRE(retransmits.size() == 4);
  for (int k = 1; k <= 4; ++k) {
    CHECK(retransmits[k - 1].first == k);
    double lo = 2.0 * ((1 << k) - 1);
    double hi = 3.0 * ((1 << k) - 1);
    CHECK(retransmits[k - 1].second >= lo);
    CHECK(retransmits[k - 1].second < hi);
  }
  // all five transmissions byte-identical
  REQUIRE(net.log.size() == 5);
  for (const auto& hop : net.log) {
    CHECK(hop.wire == net.log[0].wire);
  }
  CHECK(client.counters().retransmissions == 4);
  CHECK(client.counters().failures == 1);
}

TEST_CASE("duplicate requests are answered from the dedup cache") {
  TestNet net;
  NetPort client_port{&net, "client"};
  NetPort server_port{&net, "server"};
  CoapEndpoint client(client_port, {}, Rng(1));
  CoapEndpoint server(server_port, {}, Rng(2));
  net.nodes = {{"client", &client}, {"server", &server}};

  int handler_calls = 0;
  server.set_request_handler([&](const Message&, const std::string&,
                                 CoapEndpoint::Responder respond) {
    ++handler_calls;
    Message resp;
    resp.code = k_code_content;
    resp.payload = {0x01};
    respond(std::move(resp));
  });

  client.send_request(make_fetch(4), "server", [](Outcome, const Message*) {}, 0.0);
  REQUIRE(net.log.size() == 2);
  Bytes request_wire = net.log[0].wire;

  // replay the request: handler must not run again, cached response replays
  server.deliver(request_wire, "client", 1.0);
  CHECK(handler_calls == 1);
  CHECK(server.counters().duplicates == 1);
  REQUIRE(net.log.size() == 3);
  CHECK(net.log[2].wire == net.log[1].wire);

  // push 32 fresh requests through to evict the entry, then replay again
  for (int i = 0; i < 32; ++i) {
    client.send_request(make_fetch(1), "server", [](Outcome, const Message*) {}, 2.0);
  }
  server.deliver(request_wire, "client", 3.0);
  CHECK(handler_calls == 2 + 32);
}

TEST_CASE("delayed responder: retransmissions absorbed, late ACK completes") {
  TestNet net;
  NetPort client_port{&net, "client"};
  NetPort server_port{&net, "server"};
  CoapEndpoint client(client_port, {}, Rng(4));
  CoapEndpoint server(server_port, {}, Rng(5));
  net.nodes = {{"client", &client}, {"server", &server}};

  CoapEndpoint::Responder stored;
  server.set_request_handler([&](const Message&, const std::string&,
                                 CoapEndpoint::Responder respond) {
    stored = respond;  // answer later
  });

  int callbacks = 0;
  client.send_request(make_fetch(4), "server",
                      [&](Outcome outcome, const Message* resp) {
                        ++callbacks;
                        CHECK(outcome == Outcome::ok);
                        CHECK(resp->code == k_code_content);
                      },
                      0.0);
  REQUIRE(stored);
  CHECK(callbacks == 0);

  // first client timeout: retransmission reaches the server, gets absorbed
  client.on_timer(*client.next_deadline());
  CHECK(server.counters().duplicates == 1);
  CHECK(callbacks == 0);

  Message resp;
  resp.code = k_code_content;
  stored(std::move(resp));
  CHECK(callbacks == 1);
  CHECK(!client.has_pending());
}

TEST_CASE("separate CON response is acknowledged and completes the exchange") {
  TestNet net;
  NetPort client_port{&net, "client"};
  CoapEndpoint client(client_port, {}, Rng(6));
  net.nodes = {{"client", &client}};
  net.drop = [](const std::string&, const std::string& to, const Bytes&) {
    return to == "server";
  };

  int callbacks = 0;
  client.send_request(make_fetch(4), "server",
                      [&](Outcome outcome, const Message* resp) {
                        ++callbacks;
                        CHECK(outcome == Outcome::ok);
                        CHECK(resp->type == Type::con);
                      },
                      0.0);
  Message request = decode(net.log[0].wire);

  // hand-crafted empty ACK stops retransmission
  Message empty_ack;
  empty_ack.type = Type::ack;
  empty_ack.message_id = request.message_id;
  client.deliver(encode(empty_ack), "server", 0.5);
  CHECK(client.next_deadline().value() > 100.0);  // lifetime guard, not ACK timer

  // then a separate CON response with the request token
  Message con_resp;
  con_resp.type = Type::con;
  con_resp.code = k_code_content;
  con_resp.message_id = 0x7777;
  con_resp.token = request.token;
  client.deliver(encode(con_resp), "server", 1.0);
  CHECK(callbacks == 1);

  // the client acknowledged the CON response
  Message last = decode(net.log.back().wire);
  CHECK(last.type == Type::ack);
  CHECK(last.code == k_code_empty);
  CHECK(last.message_id == 0x7777);
}

TEST_CASE("reset fails the exchange") {
  TestNet net;
  NetPort client_port{&net, "client"};
  CoapEndpoint client(client_port, {}, Rng(8));
  net.nodes = {{"client", &client}};
  net.drop = [](const std::string&, const std::string& to, const Bytes&) {
    return to == "server";
  };

  int callbacks = 0;
  client.send_request(make_fetch(4), "server",
                      [&](Outcome outcome, const Message* resp) {
                        ++callbacks;
                        CHECK(outcome == Outcome::reset);
                        CHECK(resp == nullptr);
                      },
                      0.0);
  Message request = decode(net.log[0].wire);
  Message rst;
  rst.type = Type::rst;
  rst.message_id = request.message_id;
  client.deliver(encode(rst), "server", 0.1);
  CHECK(callbacks == 1);
}

TEST_CASE("concurrent exchanges are matched by token") {
  TestNet net;
  NetPort client_port{&net, "client"};
  NetPort server_port{&net, "server"};
  CoapEndpoint client(client_port, {}, Rng(10));
  CoapEndpoint server(server_port, {}, Rng(11));
  net.nodes = {{"client", &client}, {"server", &server}};

  std::vector<CoapEndpoint::Responder> pending;
  server.set_request_handler([&](const Message&, const std::string&,
                                 CoapEndpoint::Responder respond) {
    pending.push_back(respond);
  });

  std::vector<int> done;
  for (int i = 0; i < 3; ++i) {
    Message req = make_fetch(1);
    req.payload = {static_cast<std::uint8_t>(i)};
    client.send_request(req, "server",
                        [&done, i](Outcome outcome, const Message* resp) {
                          CHECK(outcome == Outcome::ok);
                          CHECK(resp->payload == Bytes{static_cast<std::uint8_t>(i)});
                          done.push_back(i);
                        },
                        0.0);
  }
  REQUIRE(pending.size() == 3);
  // answer out of order
  for (int i = 2; i >= 0; --i) {
    Message resp;
    resp.code = k_code_content;
    resp.payload = {static_cast<std::uint8_t>(i)};
    pending[i](std::move(resp));
  }
  CHECK(done == std::vector<int>{2, 1, 0});
}

TEST_CASE("block-wise transfer: 96-octet body both ways at 32-octet blocks") {
  TestNet net;
  NetPort client_port{&net, "client"};
  NetPort server_port{&net, "server"};
  CoapEndpoint client(client_port, {}, Rng(20));
  CoapEndpoint server(server_port, {}, Rng(21));
  net.nodes = {{"client", &client}, {"server", &server}};

  Bytes request_body(96, 0x42);
  Bytes response_body(96, 0x24);

  int inner_calls = 0;
  server.set_request_handler(blockwise_server(
      [&](const Message& req, const std::string&, CoapEndpoint::Responder respond) {
        ++inner_calls;
        CHECK(req.payload == request_body);  // reassembled before the handler
        CHECK(!req.has_option(k_opt_block1));
        Message resp;
        resp.code = k_code_content;
        resp.payload = response_body;
        respond(std::move(resp));
      },
      32));

  int callbacks = 0;
  Message req = make_fetch(0);
  req.payload = request_body;
  send_request_blockwise(client, req, "server", 32,
                         [&](Outcome outcome, const Message* resp) {
                           ++callbacks;
                           CHECK(outcome == Outcome::ok);
                           CHECK(resp->payload == response_body);
                           CHECK(!resp->has_option(k_opt_block2));
                         },
                         0.0);
  CHECK(callbacks == 1);
  CHECK(inner_calls == 1);

  // wire-level: Block1 option values 9, 25, 33 and 2.31 Continue in between
  std::vector<std::uint32_t> block1_values;
  std::vector<std::uint8_t> response_codes;
  for (const auto& hop : net.log) {
    Message m = decode(hop.wire);
    if (auto b1 = block_option(m, k_opt_block1); b1 && m.is_request()) {
      block1_values.push_back(b1->value());
      CHECK(m.payload.size() == 32);
    }
    if (m.is_response()) {
      response_codes.push_back(m.code);
    }
  }
  CHECK(block1_values == std::vector<std::uint32_t>{9, 25, 33});
  REQUIRE(response_codes.size() >= 3);
  CHECK(response_codes[0] == k_code_continue);
  CHECK(response_codes[1] == k_code_continue);

  // response sliced per Block2: 3 slices of 32
  int block2_slices = 0;
  for (const auto& hop : net.log) {
    Message m = decode(hop.wire);
    if (m.is_response() && m.has_option(k_opt_block2)) {
      ++block2_slices;
      CHECK(m.payload.size() == 32);
    }
  }
  CHECK(block2_slices == 3);
}
