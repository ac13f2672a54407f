// Copyright 2026 The lbsn-sim Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "lbsn/geo.hpp"
#include "lbsn/oracle.hpp"

namespace lbsn {

inline constexpr Seconds kDefaultTraceCadenceS = 1800;
inline constexpr Seconds kSecondsPerDay = 86'400;

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : std::runtime_error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class TraceError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct TracePoint {
  Seconds t = 0;
  GeoPoint p;
  friend bool operator==(const TracePoint&, const TracePoint&) = default;
};

/// Time-ordered fixes of one user. Also used for attacker-inferred traces.
struct Trace {
  std::string user_id;
  std::vector<TracePoint> points;

  void validate() const {
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (!is_valid(points[i].p)) {
        throw TraceError(user_id + ": invalid coordinate at index " + std::to_string(i));
      }
      if (i > 0 && points[i].t <= points[i - 1].t) {
        throw TraceError(user_id + ": timestamps not strictly increasing at index " +
                         std::to_string(i));
      }
    }
  }

  bool empty() const { return points.empty(); }
  std::size_t size() const { return points.size(); }

  friend bool operator==(const Trace&, const Trace&) = default;
};

using InferredTrace = Trace;

/// Last fix at or before t (piecewise-constant position).
inline std::optional<GeoPoint> position_at(const Trace& trace, Seconds t) {
  auto it = std::upper_bound(trace.points.begin(), trace.points.end(), t,
                             [](Seconds v, const TracePoint& tp) { return v < tp.t; });
  if (it == trace.points.begin()) return std::nullopt;
  return std::prev(it)->p;
}

/// Points with t in [begin, end).
inline Trace slice(const Trace& trace, Seconds begin, Seconds end) {
  Trace out{trace.user_id, {}};
  for (const auto& tp : trace.points) {
    if (tp.t >= begin && tp.t < end) out.points.push_back(tp);
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

template <class T>
std::optional<T> parse_number(std::string_view s) {
  s = trim(s);
  T value{};
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc{} || ptr != end || s.empty()) return std::nullopt;
  return value;
}

/// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace detail

inline constexpr std::string_view kTraceCsvHeader = "user_id,timestamp_unix_s,lat_deg,lon_deg";

/// Parses the trace CSV into one Trace per user id, in first-seen order.
inline std::vector<Trace> parse_traces(std::istream& in, const std::string& source = "<trace>") {
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) throw ParseError(source, 1, "missing header row");
  ++lineno;
  if (detail::trim(line) != kTraceCsvHeader) {
    throw ParseError(source, lineno, "unexpected header '" + line + "'");
  }
  std::vector<Trace> traces;
  std::map<std::string, std::size_t, std::less<>> index;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto cols = detail::split_csv(line);
    if (cols.size() != 4) {
      throw ParseError(source, lineno, "expected 4 columns, got " + std::to_string(cols.size()));
    }
    const std::string user{detail::trim(cols[0])};
    const auto t = detail::parse_number<Seconds>(cols[1]);
    const auto lat = detail::parse_number<double>(cols[2]);
    const auto lon = detail::parse_number<double>(cols[3]);
    if (user.empty()) throw ParseError(source, lineno, "empty user_id");
    if (!t || !lat || !lon) throw ParseError(source, lineno, "malformed number");
    GeoPoint p;
    try {
      p = GeoPoint::at(*lat, *lon);
    } catch (const GeoError& e) {
      throw TraceError(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
    auto [it, inserted] = index.try_emplace(user, traces.size());
    if (inserted) traces.push_back(Trace{user, {}});
    traces[it->second].points.push_back(TracePoint{*t, p});
  }
  for (const auto& tr : traces) tr.validate();
  return traces;
}

inline std::vector<Trace> load_traces(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trace file: " + path);
  return parse_traces(in, path);
}

/// Loads a file holding exactly one user's trace.
inline Trace load_trace(const std::string& path) {
  auto traces = load_traces(path);
  if (traces.size() != 1) {
    throw TraceError(path + ": expected one user, found " + std::to_string(traces.size()));
  }
  return std::move(traces.front());
}

inline void write_traces_csv(std::ostream& out, const std::vector<Trace>& traces) {
  out << kTraceCsvHeader << '\n';
  for (const auto& tr : traces) {
    for (const auto& tp : tr.points) {
      out << tr.user_id << ',' << tp.t << ',' << detail::format_double(tp.p.lat) << ','
          << detail::format_double(tp.p.lon) << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// Popularity
// ---------------------------------------------------------------------------

/// Expected user count per (cell, hour of day).
class PopularityMap {
 public:
  void set(const CellIndex& cell, int hour, double count) {
    if (hour < 0 || hour > 23) throw std::invalid_argument("hour must be in [0, 23]");
    if (!(count >= 0.0)) throw std::invalid_argument("popularity count must be >= 0");
    counts_[{cell, hour}] = count;
  }

  double count(const CellIndex& cell, int hour) const {
    auto it = counts_.find({cell, hour});
    return it == counts_.end() ? 0.0 : it->second;
  }

  bool empty() const { return counts_.empty(); }

 private:
  std::map<std::pair<CellIndex, int>, double> counts_;
};

inline constexpr std::string_view kPopularityCsvHeader = "cell_ix,cell_iy,hour,count";

inline PopularityMap parse_popularity(std::istream& in, const std::string& source = "<popularity>") {
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(in, line) || detail::trim(line) != kPopularityCsvHeader) {
    throw ParseError(source, lineno, "unexpected popularity header");
  }
  PopularityMap map;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto cols = detail::split_csv(line);
    if (cols.size() != 4) throw ParseError(source, lineno, "expected 4 columns");
    const auto ix = detail::parse_number<std::int64_t>(cols[0]);
    const auto iy = detail::parse_number<std::int64_t>(cols[1]);
    const auto hour = detail::parse_number<int>(cols[2]);
    const auto count = detail::parse_number<double>(cols[3]);
    if (!ix || !iy || !hour || !count) throw ParseError(source, lineno, "malformed number");
    try {
      map.set(CellIndex{*ix, *iy, 0}, *hour, *count);
    } catch (const std::invalid_argument& e) {
      throw ParseError(source, lineno, e.what());
    }
  }
  return map;
}

inline PopularityMap load_popularity(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open popularity file: " + path);
  return parse_popularity(in, path);
}

inline int hour_of_day(Seconds t) {
  Seconds s = t % kSecondsPerDay;
  if (s < 0) s += kSecondsPerDay;
  return static_cast<int>(s / 3600);
}

// ---------------------------------------------------------------------------
// Synthetic traces
// ---------------------------------------------------------------------------

struct DwellModel {
  Seconds mean_dwell_s = 4 * 3600;  // mean stay per visit; >= cadence
  double jitter_m = 0.0;            // std-dev of per-fix scatter around the anchor
};

struct MobilityAnchor {
  GeoPoint point;
  double weight = 1.0;
  DwellModel dwell;
};

struct SynthesisOptions {
  std::string user_id = "victim";
  Seconds start_t = 0;
  Seconds cadence_s = kDefaultTraceCadenceS;
};

/// Semi-Markov walk over weighted anchors: each visit picks an anchor with
/// probability proportional to its weight and stays a geometric number of
/// fixes with mean mean_dwell_s / cadence. The long-run time share of an
/// anchor is proportional to weight * mean_dwell_s.
inline Trace synthesize_trace(std::uint64_t seed, int days,
                              const std::vector<MobilityAnchor>& anchors,
                              const SynthesisOptions& opts = {}) {
  if (anchors.size() < 2) throw ConfigError("synthesize_trace needs at least 2 anchors");
  if (days < 1) throw ConfigError("days must be >= 1");
  if (opts.cadence_s <= 0) throw ConfigError("cadence must be positive");
  std::vector<double> weights;
  for (const auto& a : anchors) {
    if (!(a.weight > 0.0)) throw ConfigError("anchor weight must be > 0");
    if (a.dwell.mean_dwell_s < opts.cadence_s) {
      throw ConfigError("mean dwell must be at least one cadence interval");
    }
    if (!(a.dwell.jitter_m >= 0.0) || a.dwell.jitter_m > 10'000.0) {
      throw ConfigError("jitter must be in [0, 10000] m");
    }
    if (!is_valid(a.point)) throw ConfigError("anchor point invalid");
    weights.push_back(a.weight);
  }

  std::mt19937_64 rng(seed);
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  std::normal_distribution<double> scatter(0.0, 1.0);

  auto visit_length = [&](const MobilityAnchor& a) -> std::int64_t {
    const double p = static_cast<double>(opts.cadence_s) / static_cast<double>(a.dwell.mean_dwell_s);
    if (p >= 1.0) return 1;
    std::geometric_distribution<std::int64_t> extra(p);
    return 1 + extra(rng);
  };

  Trace trace{opts.user_id, {}};
  const std::int64_t n = static_cast<std::int64_t>(days) * kSecondsPerDay / opts.cadence_s;
  trace.points.reserve(static_cast<std::size_t>(n));
  std::size_t current = pick(rng);
  std::int64_t remaining = visit_length(anchors[current]);
  for (std::int64_t k = 0; k < n; ++k) {
    if (remaining == 0) {
      current = pick(rng);
      remaining = visit_length(anchors[current]);
    }
    --remaining;
    const auto& a = anchors[current];
    GeoPoint p = a.point;
    if (a.dwell.jitter_m > 0.0) {
      const double east = scatter(rng) * a.dwell.jitter_m;
      const double north = scatter(rng) * a.dwell.jitter_m;
      p = detail::shift(p, east, north);
    }
    trace.points.push_back(TracePoint{opts.start_t + k * opts.cadence_s, p});
  }
  return trace;
}

// ---------------------------------------------------------------------------
// Victim check-ins
// ---------------------------------------------------------------------------

struct UsagePattern {
  Seconds report_interval_s = 2400;
  double report_prob = 0.8;
  int active_start_h = 0;  // inclusive
  int active_end_h = 24;   // exclusive; may wrap past midnight

  void validate() const {
    if (report_interval_s <= 0) throw ConfigError("report interval must be > 0");
    if (!(report_prob >= 0.0 && report_prob <= 1.0)) {
      throw ConfigError("report probability must be in [0, 1]");
    }
    if (active_start_h < 0 || active_start_h > 24 || active_end_h < 0 || active_end_h > 24) {
      throw ConfigError("active hours must be in [0, 24]");
    }
  }

  bool active_at(Seconds t) const {
    const int h = hour_of_day(t);
    if (active_start_h <= active_end_h) return h >= active_start_h && h < active_end_h;
    return h >= active_start_h || h < active_end_h;
  }
};

struct ReportEvent {
  Seconds t = 0;
  std::string user_id;
  GeoPoint p;
  friend bool operator==(const ReportEvent&, const ReportEvent&) = default;
};

/// Check-in schedule for every victim over [begin, end), merged by (t, user).
/// Each victim draws from its own stream derived from (seed, victim index).
inline std::vector<ReportEvent> plan_reports(const std::vector<Trace>& traces,
                                             const std::map<std::string, UsagePattern>& patterns,
                                             Seconds begin, Seconds end, std::uint64_t seed) {
  std::vector<ReportEvent> log;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const auto& tr = traces[i];
    auto pit = patterns.find(tr.user_id);
    if (pit == patterns.end()) throw ConfigError("no usage pattern for " + tr.user_id);
    const auto& pat = pit->second;
    pat.validate();
    if (tr.empty()) continue;
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(i)};
    std::mt19937_64 rng(seq);
    std::bernoulli_distribution happens(pat.report_prob);
    const Seconds first = std::max(begin, tr.points.front().t);
    for (Seconds t = first; t < end; t += pat.report_interval_s) {
      const bool fire = happens(rng);
      if (!fire || !pat.active_at(t)) continue;
      if (auto p = position_at(tr, t)) log.push_back(ReportEvent{t, tr.user_id, *p});
    }
  }
  std::sort(log.begin(), log.end(), [](const ReportEvent& a, const ReportEvent& b) {
    return std::tie(a.t, a.user_id) < std::tie(b.t, b.user_id);
  });
  return log;
}

/// Drives every planned check-in into the oracle and returns the event log.
inline std::vector<ReportEvent> run_victims(Oracle& oracle, const std::vector<Trace>& traces,
                                            const std::map<std::string, UsagePattern>& patterns,
                                            Seconds begin, Seconds end, std::uint64_t seed) {
  auto log = plan_reports(traces, patterns, begin, end, seed);
  for (const auto& ev : log) oracle.report_location(ev.user_id, ev.p, ev.t);
  return log;
}

}  // namespace lbsn
