#include "dnscoap/dns.hpp"

#include <arpa/inet.h>

#include <algorithm>
#include <array>
#include <cctype>

namespace dnscoap::dns {

namespace {

constexpr std::size_t k_max_label = 63;
constexpr std::size_t k_max_name = 255;
constexpr std::size_t k_header_size = 12;
constexpr std::uint16_t k_question_offset = 12;  // pointer target for record names

struct TypeName {
  std::uint16_t code;
  const char* name;
};

constexpr std::array<TypeName, 8> k_type_names{{
    {k_type_a, "A"},
    {k_type_ns, "NS"},
    {k_type_ptr, "PTR"},
    {k_type_txt, "TXT"},
    {k_type_aaaa, "AAAA"},
    {k_type_srv, "SRV"},
    {k_type_https, "HTTPS"},
    {k_type_any, "ANY"},
}};

void write_name(ByteWriter& w, const Name& name) {
  for (const auto& label : name.labels) {
    w.u8(static_cast<std::uint8_t>(label.size()));
    w.raw(label.data(), label.size());
  }
  w.u8(0);
}

void write_record(ByteWriter& w, const Record& rec, const std::optional<Question>& q) {
  if (q && rec.name == q->name) {
    w.u16(0xC000 | k_question_offset);
  } else {
    write_name(w, rec.name);
  }
  w.u16(rec.rtype);
  w.u16(rec.rclass);
  w.u32(rec.ttl);
  w.u16(static_cast<std::uint16_t>(rec.rdata.size()));
  w.raw(rec.rdata);
}

Name read_name(ByteReader& r) {
  Name name;
  std::size_t wire_len = 0;      // octets the name occupies when uncompressed
  std::size_t jumps = 0;
  std::optional<std::size_t> resume;  // position after the first pointer

  for (;;) {
    std::uint8_t len = r.u8();
    if ((len & 0xC0) == 0xC0) {
      std::size_t target = static_cast<std::size_t>(len & 0x3F) << 8 | r.u8();
      if (!resume) {
        resume = r.pos();
      }
      if (++jumps > 128) {
        r.fail_at("compression pointer loop", target);
      }
      if (target >= r.size()) {
        r.fail_at("compression pointer out of range", target);
      }
      r.seek(target);
      continue;
    }
    if (len & 0xC0) {
      r.fail_at("bad label length", r.pos() - 1);
    }
    if (len == 0) {
      break;
    }
    if (len > k_max_label) {
      r.fail_at("label too long", r.pos() - 1);
    }
    wire_len += 1 + len;
    if (wire_len + 1 > k_max_name) {
      r.fail_at("name too long", r.pos() - 1);
    }
    Bytes raw = r.take(len);
    name.labels.emplace_back(raw.begin(), raw.end());
  }
  if (resume) {
    r.seek(*resume);
  }
  return name;
}

Record read_record(ByteReader& r) {
  Record rec;
  rec.name = read_name(r);
  rec.rtype = r.u16();
  rec.rclass = r.u16();
  rec.ttl = r.u32();
  std::uint16_t rdlen = r.u16();
  rec.rdata = r.take(rdlen);
  return rec;
}

}  // namespace

std::optional<std::uint16_t> rtype_from_string(std::string_view text) {
  std::string upper(text);
  std::transform(upper.begin(), upper.end(), upper.begin(),
                 [](unsigned char c) { return std::toupper(c); });
  for (const auto& t : k_type_names) {
    if (upper == t.name) {
      return t.code;
    }
  }
  if (!upper.empty() &&
      std::all_of(upper.begin(), upper.end(), [](unsigned char c) { return std::isdigit(c); })) {
    unsigned long v = std::stoul(upper);
    if (v <= 0xFFFF) {
      return static_cast<std::uint16_t>(v);
    }
  }
  return std::nullopt;
}

std::string rtype_to_string(std::uint16_t rtype) {
  for (const auto& t : k_type_names) {
    if (rtype == t.code) {
      return t.name;
    }
  }
  return std::to_string(rtype);
}

Name Name::parse(std::string_view presentation) {
  Name name;
  if (presentation == "." || presentation.empty()) {
    return name;
  }
  if (presentation.back() == '.') {
    presentation.remove_suffix(1);
  }
  std::size_t start = 0;
  while (start <= presentation.size()) {
    std::size_t dot = presentation.find('.', start);
    std::size_t end = dot == std::string_view::npos ? presentation.size() : dot;
    if (end == start) {
      throw ParseError("name: empty label", start);
    }
    if (end - start > k_max_label) {
      throw ParseError("name: label too long", start);
    }
    name.labels.emplace_back(presentation.substr(start, end - start));
    if (dot == std::string_view::npos) {
      break;
    }
    start = dot + 1;
  }
  if (name.encoded_size() > k_max_name) {
    throw ParseError("name: name too long", 0);
  }
  return name;
}

std::string Name::to_string() const {
  if (labels.empty()) {
    return ".";
  }
  std::string out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (i) {
      out += '.';
    }
    out += labels[i];
  }
  return out;
}

std::size_t Name::presentation_length() const { return to_string().size(); }

std::size_t Name::encoded_size() const {
  std::size_t n = 1;
  for (const auto& label : labels) {
    n += 1 + label.size();
  }
  return n;
}

Bytes encode_query(const Name& name, std::uint16_t rtype, std::uint16_t id) {
  Message msg;
  msg.id = id;
  msg.flags = k_flag_rd;
  msg.question = Question{name, rtype, k_class_in};
  return encode(msg);
}

Message build_response(const Question& question, std::vector<Record> answers,
                       std::uint16_t id) {
  Message msg;
  msg.id = id;
  msg.flags = k_flag_qr | k_flag_rd | k_flag_ra;
  msg.question = question;
  msg.answers = std::move(answers);
  return msg;
}

Bytes encode(const Message& msg) {
  ByteWriter w;
  w.u16(msg.id);
  w.u16(msg.flags);
  w.u16(msg.question ? 1 : 0);
  w.u16(static_cast<std::uint16_t>(msg.answers.size()));
  w.u16(static_cast<std::uint16_t>(msg.authority.size()));
  w.u16(static_cast<std::uint16_t>(msg.additional.size()));
  if (msg.question) {
    write_name(w, msg.question->name);
    w.u16(msg.question->rtype);
    w.u16(msg.question->rclass);
  }
  for (const auto& rec : msg.answers) {
    write_record(w, rec, msg.question);
  }
  for (const auto& rec : msg.authority) {
    write_record(w, rec, msg.question);
  }
  for (const auto& rec : msg.additional) {
    write_record(w, rec, msg.question);
  }
  return w.take();
}

Message decode(const Bytes& wire, std::size_t record_cap) {
  ByteReader r(wire, "dns");
  if (wire.size() < k_header_size) {
    throw ParseError("dns: truncated header", wire.size());
  }
  Message msg;
  msg.id = r.u16();
  msg.flags = r.u16();
  std::uint16_t qd = r.u16();
  std::array<std::uint16_t, 3> counts{r.u16(), r.u16(), r.u16()};
  if (qd > 1) {
    r.fail_at("more than one question", 4);
  }
  for (std::uint16_t c : counts) {
    if (c > record_cap) {
      r.fail_at("section count beyond cap", 6);
    }
  }
  if (qd == 1) {
    Question q;
    q.name = read_name(r);
    q.rtype = r.u16();
    q.rclass = r.u16();
    msg.question = q;
  }
  std::array<std::vector<Record>*, 3> sections{&msg.answers, &msg.authority, &msg.additional};
  for (std::size_t s = 0; s < 3; ++s) {
    sections[s]->reserve(counts[s]);
    for (std::uint16_t i = 0; i < counts[s]; ++i) {
      sections[s]->push_back(read_record(r));
    }
  }
  if (!r.done()) {
    r.fail("trailing bytes");
  }
  return msg;
}

std::optional<std::uint32_t> min_ttl(const Message& msg) {
  std::optional<std::uint32_t> best;
  auto scan = [&best](const std::vector<Record>& recs) {
    for (const auto& rec : recs) {
      if (!best || rec.ttl < *best) {
        best = rec.ttl;
      }
    }
  };
  scan(msg.answers);
  scan(msg.authority);
  scan(msg.additional);
  return best;
}

void rewrite_ttls(Message& msg, std::uint32_t ttl) {
  for (auto* section : {&msg.answers, &msg.authority, &msg.additional}) {
    for (auto& rec : *section) {
      rec.ttl = ttl;
    }
  }
}

void sort_records(Message& msg) {
  std::stable_sort(msg.answers.begin(), msg.answers.end(),
                   [](const Record& a, const Record& b) {
                     if (a.rtype != b.rtype) {
                       return a.rtype < b.rtype;
                     }
                     return a.rdata < b.rdata;
                   });
}

void shuffle_records(Message& msg, Rng& rng) {
  auto& recs = msg.answers;
  for (std::size_t i = recs.size(); i > 1; --i) {
    std::size_t j = rng.uniform(i);
    std::swap(recs[i - 1], recs[j]);
  }
}

std::string rdata_to_text(std::uint16_t rtype, const Bytes& rdata) {
  char buf[INET6_ADDRSTRLEN];
  if (rtype == k_type_a && rdata.size() == 4) {
    if (inet_ntop(AF_INET, rdata.data(), buf, sizeof buf)) {
      return buf;
    }
  }
  if (rtype == k_type_aaaa && rdata.size() == 16) {
    if (inet_ntop(AF_INET6, rdata.data(), buf, sizeof buf)) {
      return buf;
    }
  }
  if (rtype == k_type_txt) {
    return std::string(rdata.begin(), rdata.end());
  }
  return "hex:" + to_hex(rdata);
}

Bytes rdata_from_text(std::uint16_t rtype, const std::string& text) {
  if (text.rfind("hex:", 0) == 0) {
    return from_hex(std::string_view(text).substr(4));
  }
  if (rtype == k_type_a) {
    Bytes out(4);
    if (inet_pton(AF_INET, text.c_str(), out.data()) != 1) {
      throw ParseError("rdata: bad IPv4 address", 0);
    }
    return out;
  }
  if (rtype == k_type_aaaa) {
    Bytes out(16);
    if (inet_pton(AF_INET6, text.c_str(), out.data()) != 1) {
      throw ParseError("rdata: bad IPv6 address", 0);
    }
    return out;
  }
  if (rtype == k_type_txt) {
    return Bytes(text.begin(), text.end());
  }
  throw ParseError("rdata: unsupported textual type", 0);
}

}  // namespace dnscoap::dns
