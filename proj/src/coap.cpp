#include "dnscoap/coap.hpp"

#include <algorithm>
#include <stdexcept>

namespace dnscoap::coap {

namespace {

constexpr std::size_t k_max_token = 8;

// Option delta/length nibble extensions.
constexpr std::uint8_t k_ext_one = 13;   // one extension octet, bias 13
constexpr std::uint8_t k_ext_two = 14;   // two extension octets, bias 269
constexpr std::uint8_t k_reserved = 15;  // message format error (or payload marker)

void write_ext(ByteWriter& w, std::uint32_t v) {
  if (v < k_ext_one) {
    return;
  }
  if (v < 269) {
    w.u8(static_cast<std::uint8_t>(v - 13));
  } else {
    w.u16(static_cast<std::uint16_t>(v - 269));
  }
}

std::uint8_t nibble_for(std::uint32_t v) {
  if (v < k_ext_one) {
    return static_cast<std::uint8_t>(v);
  }
  return v < 269 ? k_ext_one : k_ext_two;
}

std::uint32_t read_ext(ByteReader& r, std::uint8_t nib, std::string_view what) {
  switch (nib) {
    case k_ext_one:
      return 13u + r.u8();
    case k_ext_two:
      return 269u + r.u16();
    case k_reserved:
      r.fail(std::string("reserved ") + std::string(what) + " nibble");
    default:
      return nib;
  }
}

}  // namespace

std::string code_to_string(std::uint8_t code) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "%u.%02u", code_class(code), code_detail(code));
  return buf;
}

Bytes uint_option_bytes(std::uint32_t v) {
  Bytes out;
  for (int shift = 24; shift >= 0; shift -= 8) {
    std::uint8_t b = static_cast<std::uint8_t>(v >> shift);
    if (!out.empty() || b != 0) {
      out.push_back(b);
    }
  }
  return out;
}

std::uint32_t uint_option_value(const Bytes& value) {
  std::uint32_t v = 0;
  for (std::uint8_t b : value) {
    v = v << 8 | b;
  }
  return v;
}

const Option* Message::find_option(std::uint16_t number) const {
  for (const auto& opt : options) {
    if (opt.number == number) {
      return &opt;
    }
  }
  return nullptr;
}

std::vector<const Option*> Message::find_options(std::uint16_t number) const {
  std::vector<const Option*> out;
  for (const auto& opt : options) {
    if (opt.number == number) {
      out.push_back(&opt);
    }
  }
  return out;
}

std::optional<std::uint32_t> Message::option_uint(std::uint16_t number) const {
  const Option* opt = find_option(number);
  if (!opt) {
    return std::nullopt;
  }
  return uint_option_value(opt->value);
}

std::optional<std::string> Message::option_string(std::uint16_t number) const {
  const Option* opt = find_option(number);
  if (!opt) {
    return std::nullopt;
  }
  return std::string(opt->value.begin(), opt->value.end());
}

void Message::remove_options(std::uint16_t number) {
  options.erase(std::remove_if(options.begin(), options.end(),
                               [number](const Option& o) { return o.number == number; }),
                options.end());
}

Bytes encode(const Message& msg) {
  if (msg.token.size() > k_max_token) {
    throw std::invalid_argument("coap: token longer than 8 octets");
  }
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(1u << 6 |
                                 static_cast<unsigned>(msg.type) << 4 |
                                 msg.token.size()));
  w.u8(msg.code);
  w.u16(msg.message_id);
  w.raw(msg.token);

  std::vector<Option> opts = msg.options;
  std::stable_sort(opts.begin(), opts.end(),
                   [](const Option& a, const Option& b) { return a.number < b.number; });
  std::uint32_t previous = 0;
  for (const auto& opt : opts) {
    std::uint32_t delta = opt.number - previous;
    std::uint32_t length = static_cast<std::uint32_t>(opt.value.size());
    w.u8(static_cast<std::uint8_t>(nibble_for(delta) << 4 | nibble_for(length)));
    write_ext(w, delta);
    write_ext(w, length);
    w.raw(opt.value);
    previous = opt.number;
  }
  if (!msg.payload.empty()) {
    w.u8(0xFF);
    w.raw(msg.payload);
  }
  return w.take();
}

Message decode(const Bytes& wire) {
  ByteReader r(wire, "coap");
  if (wire.size() < 4) {
    throw ParseError("coap: short header", wire.size());
  }
  std::uint8_t first = r.u8();
  if (first >> 6 != 1) {
    r.fail_at("bad version", 0);
  }
  Message msg;
  msg.type = static_cast<Type>(first >> 4 & 0x3);
  std::uint8_t tkl = first & 0x0F;
  if (tkl > k_max_token) {
    r.fail_at("bad token length", 0);
  }
  msg.code = r.u8();
  msg.message_id = r.u16();
  msg.token = r.take(tkl);

  std::uint32_t number = 0;
  while (!r.done()) {
    std::uint8_t byte = r.u8();
    if (byte == 0xFF) {
      if (r.done()) {
        r.fail("payload marker without payload");
      }
      msg.payload = r.take(r.remaining());
      break;
    }
    std::uint32_t delta = read_ext(r, byte >> 4, "option delta");
    std::uint32_t length = read_ext(r, byte & 0x0F, "option length");
    number += delta;
    if (number > 0xFFFF) {
      r.fail("option number out of range");
    }
    msg.options.push_back({static_cast<std::uint16_t>(number), r.take(length)});
  }
  return msg;
}

BlockOption BlockOption::from_value(std::uint32_t value) {
  BlockOption block;
  block.szx = static_cast<std::uint8_t>(value & 0x7);
  if (block.szx == 7) {
    throw ParseError("coap: reserved block szx 7", 0);
  }
  block.more = value & 0x8;
  block.num = value >> 4;
  return block;
}

std::uint8_t BlockOption::szx_for(std::size_t block_size) {
  for (std::uint8_t szx = 0; szx <= 6; ++szx) {
    if (block_size == std::size_t{16} << szx) {
      return szx;
    }
  }
  throw std::invalid_argument("coap: block size must be a power of two in [16, 1024]");
}

std::optional<BlockOption> block_option(const Message& msg, std::uint16_t number) {
  const Option* opt = msg.find_option(number);
  if (!opt) {
    return std::nullopt;
  }
  return BlockOption::from_value(uint_option_value(opt->value));
}

std::vector<std::pair<BlockOption, Bytes>> slice_body(const Bytes& body,
                                                      std::size_t block_size) {
  std::uint8_t szx = BlockOption::szx_for(block_size);
  std::vector<std::pair<BlockOption, Bytes>> out;
  if (body.empty()) {
    out.push_back({BlockOption{0, false, szx}, Bytes{}});
    return out;
  }
  std::size_t blocks = (body.size() + block_size - 1) / block_size;
  for (std::size_t i = 0; i < blocks; ++i) {
    std::size_t begin = i * block_size;
    std::size_t end = std::min(begin + block_size, body.size());
    out.push_back({BlockOption{static_cast<std::uint32_t>(i), i + 1 < blocks, szx},
                   Bytes(body.begin() + begin, body.begin() + end)});
  }
  return out;
}

}  // namespace dnscoap::coap
