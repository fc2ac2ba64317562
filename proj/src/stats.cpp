#include "dnscoap/stats.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "dnscoap/dns.hpp"

namespace dnscoap::stats {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) {
    return "";
  }
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::optional<std::uint16_t> parse_rclass(const std::string& text) {
  std::string upper(text);
  std::transform(upper.begin(), upper.end(), upper.begin(),
                 [](unsigned char c) { return std::toupper(c); });
  if (upper == "IN") {
    return dns::k_class_in;
  }
  if (!upper.empty() && std::all_of(upper.begin(), upper.end(), [](unsigned char c) {
        return std::isdigit(c);
      })) {
    unsigned long v = std::stoul(upper);
    if (v <= 0xFFFF) {
      return static_cast<std::uint16_t>(v);
    }
  }
  return std::nullopt;
}

bool plausible_name(const std::string& name) {
  if (name.empty() || name.size() > 253) {
    return false;
  }
  return name.find(' ') == std::string::npos;
}

}  // namespace

Trace parse_trace(std::istream& in) {
  Trace trace;
  std::string line;
  while (std::getline(in, line)) {
    std::string body = trim(line);
    if (body.empty() || body[0] == '#') {
      continue;
    }
    std::size_t c1 = body.find(',');
    std::size_t c2 = c1 == std::string::npos ? std::string::npos
                                             : body.find(',', c1 + 1);
    if (c2 == std::string::npos) {
      ++trace.skipped;
      continue;
    }
    TraceEntry entry;
    entry.name = trim(body.substr(0, c1));
    auto rtype = dns::rtype_from_string(trim(body.substr(c1 + 1, c2 - c1 - 1)));
    auto rclass = parse_rclass(trim(body.substr(c2 + 1)));
    if (!plausible_name(entry.name) || !rtype || !rclass) {
      ++trace.skipped;
      continue;
    }
    entry.rtype = *rtype;
    entry.rclass = *rclass;
    trace.entries.push_back(std::move(entry));
  }
  return trace;
}

double quantile(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) {
    throw std::invalid_argument("quantile: empty sample");
  }
  if (!(p >= 0.0 && p <= 1.0)) {
    throw std::invalid_argument("quantile: p outside [0, 1]");
  }
  double h = static_cast<double>(sorted.size() - 1) * p;
  auto lo = static_cast<std::size_t>(h);
  if (lo + 1 >= sorted.size()) {
    return sorted.back();
  }
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

TraceStats trace_stats(const Trace& trace) {
  if (trace.entries.empty()) {
    throw std::invalid_argument("trace_stats: no parsable entries");
  }
  TraceStats st;
  st.count = trace.entries.size();
  st.skipped = trace.skipped;

  std::vector<double> lengths;
  lengths.reserve(trace.entries.size());
  std::map<std::size_t, std::size_t> freq;
  std::map<std::string, std::size_t> types;
  for (const auto& e : trace.entries) {
    lengths.push_back(static_cast<double>(e.name.size()));
    ++freq[e.name.size()];
    ++types[dns::rtype_to_string(e.rtype)];
  }
  std::sort(lengths.begin(), lengths.end());

  st.min = static_cast<std::size_t>(lengths.front());
  st.max = static_cast<std::size_t>(lengths.back());
  std::size_t best = 0;
  for (const auto& [value, n] : freq) {
    if (n > best) {  // map order makes the first maximum the smallest value
      best = n;
      st.mode = value;
    }
  }

  double sum = 0;
  for (double v : lengths) sum += v;
  st.mean = sum / static_cast<double>(lengths.size());
  double ss = 0;
  for (double v : lengths) ss += (v - st.mean) * (v - st.mean);
  st.stddev = std::sqrt(ss / static_cast<double>(lengths.size()));

  st.q1 = quantile(lengths, 0.25);
  st.q2 = quantile(lengths, 0.50);
  st.q3 = quantile(lengths, 0.75);

  for (const auto& [type, n] : types) {
    st.type_ratios.emplace_back(
        type, static_cast<double>(n) / static_cast<double>(st.count));
  }
  std::stable_sort(st.type_ratios.begin(), st.type_ratios.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  return st;
}

namespace {

std::string num(double v) {
  std::ostringstream out;
  out.precision(9);
  out << v;
  return out.str();
}

}  // namespace

void write_stats_csv(const TraceStats& st, std::ostream& out) {
  out << "metric,value\n";
  out << "count," << st.count << '\n';
  out << "skipped," << st.skipped << '\n';
  out << "min," << st.min << '\n';
  out << "max," << st.max << '\n';
  out << "mode," << st.mode << '\n';
  out << "mean," << num(st.mean) << '\n';
  out << "stddev," << num(st.stddev) << '\n';
  out << "q1," << num(st.q1) << '\n';
  out << "q2," << num(st.q2) << '\n';
  out << "q3," << num(st.q3) << '\n';
  for (const auto& [type, ratio] : st.type_ratios) {
    out << "ratio[" << type << "]," << num(ratio) << '\n';
  }
}

std::string stats_json(const TraceStats& st) {
  nlohmann::json j;
  j["schema"] = "doc-trace-stats/1";
  j["count"] = st.count;
  j["skipped"] = st.skipped;
  j["min"] = st.min;
  j["max"] = st.max;
  j["mode"] = st.mode;
  j["mean"] = st.mean;
  j["stddev"] = st.stddev;
  j["q1"] = st.q1;
  j["q2"] = st.q2;
  j["q3"] = st.q3;
  auto ratios = nlohmann::json::array();
  for (const auto& [type, ratio] : st.type_ratios) {
    ratios.push_back({{"type", type}, {"ratio", ratio}});
  }
  j["type_ratios"] = std::move(ratios);
  return j.dump(2);
}

}  // namespace dnscoap::stats
