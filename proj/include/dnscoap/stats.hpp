#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace dnscoap::stats {

struct TraceEntry {
  std::string name;
  std::uint16_t rtype = 0;
  std::uint16_t rclass = 0;
};

struct Trace {
  std::vector<TraceEntry> entries;
  std::size_t skipped = 0;  // lines that did not parse
};

/*
 * One query per line:
 *
 *   name, rtype, rclass
 *
 * rtype and rclass accept the mnemonics the codec knows (A, AAAA, IN,
 * ...) or plain numbers. Blank lines and lines starting with '#' are
 * ignored; anything else that fails to parse is counted in `skipped`
 * and dropped.
 */
Trace parse_trace(std::istream& in);

// Quantile by linear interpolation between closest ranks: rank
// h = (n - 1) p, value = v[floor h] + (h - floor h)(v[floor h + 1] -
// v[floor h]). Input must be sorted; throws std::invalid_argument on
// an empty sample or p outside [0, 1].
double quantile(const std::vector<double>& sorted, double p);

struct TraceStats {
  std::size_t count = 0;
  std::size_t skipped = 0;
  // of name presentation lengths
  std::size_t min = 0;
  std::size_t max = 0;
  std::size_t mode = 0;  // smallest value among the most frequent
  double mean = 0;
  double stddev = 0;  // population
  double q1 = 0;
  double q2 = 0;
  double q3 = 0;
  // share per record type, descending, ties by type name; sums to 1
  std::vector<std::pair<std::string, double>> type_ratios;
};

// Throws std::invalid_argument on an empty trace.
TraceStats trace_stats(const Trace& trace);

// metric,value rows followed by one ratio[TYPE] row per record type.
void write_stats_csv(const TraceStats& stats, std::ostream& out);

std::string stats_json(const TraceStats& stats);

}  // namespace dnscoap::stats
