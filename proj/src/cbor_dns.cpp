#include "dnscoap/cbor_dns.hpp"

#include <stdexcept>

#include "dnscoap/cbor.hpp"

namespace dnscoap::cbordns {

namespace {

void write_question(cbor::Writer& w, const dns::Question& q) {
  // trailing elision only: an explicit class forces an explicit type
  std::size_t n = 1;
  if (q.rclass != dns::k_class_in) {
    n = 3;
  } else if (q.rtype != dns::k_type_aaaa) {
    n = 2;
  }
  w.array(n);
  w.text(q.name.to_string());
  if (n >= 2) w.uint(q.rtype);
  if (n >= 3) w.uint(q.rclass);
}

std::uint16_t read_u16(cbor::Reader& r, const char* what) {
  std::uint64_t v = r.uint();
  if (v > 0xFFFF) {
    throw ParseError(std::string(what) + " out of range", r.offset());
  }
  return static_cast<std::uint16_t>(v);
}

dns::Question read_question(cbor::Reader& r, std::size_t n) {
  if (n < 1 || n > 3) {
    throw ParseError("question must be 1 to 3 entries", r.offset());
  }
  dns::Question q;
  q.name = dns::Name::parse(r.text());
  q.rtype = n >= 2 ? read_u16(r, "record type") : dns::k_type_aaaa;
  q.rclass = n >= 3 ? read_u16(r, "record class") : dns::k_class_in;
  return q;
}

// Addresses have exactly one valid length; anything else would
// reassemble into a record the responder cannot have produced.
void check_rdata(std::uint16_t rtype, const Bytes& rdata, std::size_t at) {
  if (rtype == dns::k_type_a && rdata.size() != 4) {
    throw ParseError("A rdata must be 4 octets", at);
  }
  if (rtype == dns::k_type_aaaa && rdata.size() != 16) {
    throw ParseError("AAAA rdata must be 16 octets", at);
  }
}

dns::Record read_entry(cbor::Reader& r, std::size_t k, const dns::Question& context) {
  if (k < 2 || k > 4) {
    throw ParseError("answer entry must be 2 to 4 entries", r.offset());
  }
  dns::Record rec;
  std::uint64_t ttl = r.uint();
  if (ttl > 0xFFFFFFFFULL) {
    throw ParseError("ttl out of range", r.offset());
  }
  rec.ttl = static_cast<std::uint32_t>(ttl);
  rec.rdata = r.bytes();
  rec.rtype = k >= 3 ? read_u16(r, "record type") : context.rtype;
  rec.name = k >= 4 ? dns::Name::parse(r.text()) : context.name;
  rec.rclass = context.rclass;
  check_rdata(rec.rtype, rec.rdata, r.offset());
  return rec;
}

dns::Message decompress(const Bytes& blob, const dns::Question* matched) {
  cbor::Reader r(blob);
  std::size_t outer = r.array();
  dns::Question question;
  std::vector<dns::Record> answers;

  if (outer == 0) {
    if (!matched) {
      throw ParseError("answers need the request for recovery", r.offset());
    }
    question = *matched;
  } else {
    std::size_t first = r.array();
    if (first == 0) {
      throw ParseError("empty array element", r.offset());
    }
    if (r.peek() == cbor::Major::text) {
      // leading question array: the self-contained form
      if (outer != 2) {
        throw ParseError("self-contained form is [question, answers]", r.offset());
      }
      question = read_question(r, first);
      std::size_t n = r.array();
      answers.reserve(n);
      for (std::size_t i = 0; i < n; ++i) {
        answers.push_back(read_entry(r, r.array(), question));
      }
    } else {
      if (!matched) {
        throw ParseError("answers need the request for recovery", r.offset());
      }
      question = *matched;
      answers.reserve(outer);
      answers.push_back(read_entry(r, first, question));
      for (std::size_t i = 1; i < outer; ++i) {
        answers.push_back(read_entry(r, r.array(), question));
      }
    }
  }
  if (!r.at_end()) {
    throw ParseError("trailing bytes after answers", r.offset());
  }
  return dns::build_response(question, std::move(answers), 0);
}

}  // namespace

Bytes compress_query(const dns::Question& question) {
  cbor::Writer w;
  write_question(w, question);
  return w.take();
}

dns::Question decompress_query(const Bytes& blob) {
  cbor::Reader r(blob);
  dns::Question q = read_question(r, r.array());
  if (!r.at_end()) {
    throw ParseError("trailing bytes after question", r.offset());
  }
  return q;
}

Bytes compress_response(const dns::Message& msg, const dns::Question& matched,
                        bool self_contained) {
  for (const auto& rec : msg.answers) {
    if (rec.rclass != matched.rclass) {
      throw std::invalid_argument("answer class must match the question");
    }
    if (rec.name != matched.name) {
      self_contained = true;
    }
  }

  cbor::Writer w;
  if (self_contained) {
    w.array(2);
    write_question(w, matched);
  }
  w.array(msg.answers.size());
  for (const auto& rec : msg.answers) {
    bool with_name = rec.name != matched.name;
    bool with_type = with_name || rec.rtype != matched.rtype;
    w.array(2 + (with_type ? 1u : 0u) + (with_name ? 1u : 0u));
    w.uint(rec.ttl);
    w.bytes(rec.rdata);
    if (with_type) w.uint(rec.rtype);
    if (with_name) w.text(rec.name.to_string());
  }
  return w.take();
}

dns::Message decompress_response(const Bytes& blob, const dns::Question& matched) {
  return decompress(blob, &matched);
}

dns::Message decompress_response(const Bytes& blob) {
  return decompress(blob, nullptr);
}

}  // namespace dnscoap::cbordns
