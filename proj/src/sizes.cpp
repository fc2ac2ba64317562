#include "dnscoap/sizes.hpp"

#include <memory>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "dnscoap/base64url.hpp"
#include "dnscoap/oscore.hpp"

namespace dnscoap::sizes {

namespace {

struct Dissector {
  explicit Dissector(const SizeQuery& q) : q_(q) {
    std::string name = netsim::workload_name(0, q.name_length);
    question_ = dns::Question{dns::Name::parse(name), q.rtype, dns::k_class_in};
    query_ = dns::decode(dns::encode_query(question_.name, q.rtype));
    resolver_ = std::make_unique<doc::FunctionResolver>([this](const dns::Question& qq) {
      Bytes rdata(qq.rtype == dns::k_type_a ? 4 : 16, 0x2a);
      return std::vector<dns::Record>{
          dns::Record{qq.name, qq.rtype, dns::k_class_in, q_.ttl, std::move(rdata)}};
    });
  }

  std::vector<SizeRow> table() {
    std::vector<netsim::Transport> transports = q_.transports;
    if (transports.empty()) {
      transports = {netsim::Transport::udp, netsim::Transport::dtls,
                    netsim::Transport::coap, netsim::Transport::coaps,
                    netsim::Transport::oscore};
    }
    std::vector<doc::Method> methods = q_.methods;
    if (methods.empty()) {
      methods = {doc::Method::fetch, doc::Method::get, doc::Method::post};
    }
    std::vector<SizeRow> rows;
    for (auto transport : transports) {
      if (transport == netsim::Transport::udp || transport == netsim::Transport::dtls) {
        raw_rows(transport, rows);
      } else {
        for (auto method : methods) {
          coap_rows(transport, method, rows);
        }
      }
    }
    return rows;
  }

 private:
  // total frame octets and the residual link bucket for `content`
  SizeRow framed(std::size_t content) const {
    auto frames = netsim::fragment(content, q_.link);
    SizeRow row;
    row.fragments = frames.size();
    row.total_octets = std::accumulate(frames.begin(), frames.end(), std::size_t{0});
    row.link_octets = row.total_octets - content;
    return row;
  }

  std::string response_kind() const {
    return "response " + dns::rtype_to_string(q_.rtype);
  }

  void raw_rows(netsim::Transport transport, std::vector<SizeRow>& rows) {
    std::size_t envelope = netsim::transport_record_overhead(transport);
    auto emit = [&](const std::string& kind, std::size_t dns_octets) {
      SizeRow row = framed(dns_octets + envelope);
      row.transport = netsim::transport_to_string(transport);
      row.method = "-";
      row.kind = kind;
      row.security_octets = envelope;
      row.dns_octets = dns_octets;
      row.link_octets = row.total_octets - dns_octets - envelope;
      rows.push_back(std::move(row));
    };
    emit("query", dns::encode(query_).size());
    auto records = resolver_->resolve(question_);
    emit(response_kind(),
         dns::encode(dns::build_response(question_, std::move(records))).size());
  }

  // the octets of actual DNS material a request carries
  std::size_t request_material(const coap::Message& request,
                               doc::Method method) const {
    if (method == doc::Method::get) {
      return base64url_encode(dns::encode(query_)).size();
    }
    return request.payload.size();
  }

  void coap_rows(netsim::Transport transport, doc::Method method,
                 std::vector<SizeRow>& rows) {
    doc::ClientConfig cfg;
    cfg.method = method;
    cfg.content_format = q_.content_format;
    coap::Message request = doc::build_request(query_, cfg);
    doc::ServerConfig scfg;
    coap::Message response = doc::serve(request, *resolver_, scfg);

    const Bytes token{0x00, 0x01};  // the message layer assigns two octets
    request.token = token;
    response.token = token;

    std::size_t query_material = request_material(request, method);
    std::size_t answer_material = response.payload.size();

    std::size_t envelope = netsim::transport_record_overhead(transport);
    std::size_t sec_query = envelope;
    std::size_t sec_answer = envelope;
    Bytes query_wire = coap::encode(request);
    Bytes answer_wire = coap::encode(response);

    if (transport == netsim::Transport::oscore) {
      // Cost of protection = growth over the unprotected encoding;
      // fresh contexts keep the partial IV at its one-octet minimum.
      oscore::KeyMaterial km;
      km.master_secret = Bytes(16, 0x23);
      km.master_salt = Bytes{0x9e, 0x7c, 0xa9, 0x22};
      km.client_id = Bytes{0x01};
      km.server_id = Bytes{0x02};
      auto cctx = oscore::client_context(km);
      auto sctx = oscore::server_context(km);

      coap::Message inner_req = request;
      inner_req.token.clear();
      auto protected_req = oscore::protect_request(inner_req, cctx);
      protected_req.message.token = token;
      Bytes outer_req = coap::encode(protected_req.message);
      sec_query = outer_req.size() - query_wire.size();
      query_wire = std::move(outer_req);

      coap::Message inner_resp = response;
      inner_resp.token.clear();
      coap::Message outer_resp_msg =
          oscore::protect_response(inner_resp, sctx, protected_req.binding);
      outer_resp_msg.token = token;
      Bytes outer_resp = coap::encode(outer_resp_msg);
      sec_answer = outer_resp.size() - answer_wire.size();
      answer_wire = std::move(outer_resp);
    }

    auto emit = [&](const std::string& kind, const Bytes& wire,
                    std::size_t material, std::size_t security) {
      SizeRow row = framed(wire.size() + envelope);
      row.transport = netsim::transport_to_string(transport);
      row.method = std::string(doc::method_to_string(method));
      row.kind = kind;
      row.security_octets = security;
      row.dns_octets = material;
      row.coap_octets = row.total_octets - row.link_octets - security - material;
      rows.push_back(std::move(row));
    };
    emit("query", query_wire, query_material, sec_query);
    emit(response_kind(), answer_wire, answer_material, sec_answer);
  }

  const SizeQuery& q_;
  dns::Question question_{dns::Name::parse("x.test"), dns::k_type_aaaa,
                          dns::k_class_in};
  dns::Message query_;
  std::unique_ptr<doc::FunctionResolver> resolver_;
};

}  // namespace

std::vector<SizeRow> size_table(const SizeQuery& query) {
  if (query.content_format != doc::k_content_format_dns &&
      query.content_format != cbordns::k_content_format) {
    throw std::invalid_argument("size_table: unknown content format");
  }
  Dissector dissector(query);
  return dissector.table();
}

void write_sizes_csv(const std::vector<SizeRow>& rows, std::ostream& out) {
  out << "transport,method,kind,fragments,link_octets,security_octets,"
         "coap_octets,dns_octets,total_octets\n";
  for (const auto& r : rows) {
    out << r.transport << ',' << r.method << ',' << r.kind << ',' << r.fragments
        << ',' << r.link_octets << ',' << r.security_octets << ',' << r.coap_octets
        << ',' << r.dns_octets << ',' << r.total_octets << '\n';
  }
}

}  // namespace dnscoap::sizes
