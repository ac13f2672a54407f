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
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <stdexcept>
#include <utility>
#include <vector>

#include "lbsn/geo.hpp"
#include "lbsn/mobility.hpp"

namespace lbsn {

inline constexpr double kDefaultLocationCellM = 100.0;

/// Error of each inferred point against the ground-truth fix nearest in
/// time (ties go to the earlier fix).
inline std::vector<double> tracking_error_series(const InferredTrace& inferred, const Trace& truth) {
  if (inferred.empty() || truth.empty()) {
    throw std::invalid_argument("tracking error needs non-empty traces");
  }
  std::vector<TracePoint> sorted = truth.points;
  std::sort(sorted.begin(), sorted.end(),
            [](const TracePoint& a, const TracePoint& b) { return a.t < b.t; });
  std::vector<double> out;
  out.reserve(inferred.size());
  for (const auto& ip : inferred.points) {
    auto hi = std::lower_bound(sorted.begin(), sorted.end(), ip.t,
                               [](const TracePoint& tp, Seconds v) { return tp.t < v; });
    const TracePoint* best = nullptr;
    if (hi == sorted.end()) {
      best = &sorted.back();
    } else if (hi == sorted.begin()) {
      best = &*hi;
    } else {
      const auto lo = std::prev(hi);
      best = (ip.t - lo->t) <= (hi->t - ip.t) ? &*lo : &*hi;
    }
    out.push_back(distance_m(ip.p, best->p));
  }
  return out;
}

struct ErrorSummary {
  double mean = 0.0;
  double median = 0.0;
  std::vector<std::pair<double, double>> cdf;  // (error_m, cumulative fraction) knots
};

/// Mean, median and a 21-knot empirical CDF (every 5th percentile).
inline ErrorSummary summarize_errors(std::vector<double> errors) {
  ErrorSummary s;
  if (errors.empty()) return s;
  std::sort(errors.begin(), errors.end());
  const std::size_t n = errors.size();
  s.mean = std::accumulate(errors.begin(), errors.end(), 0.0) / static_cast<double>(n);
  s.median = n % 2 ? errors[n / 2] : 0.5 * (errors[n / 2 - 1] + errors[n / 2]);
  for (int k = 0; k <= 20; ++k) {
    const double frac = k / 20.0;
    const auto idx = static_cast<std::size_t>(
        std::min<double>(static_cast<double>(n - 1), std::ceil(frac * static_cast<double>(n)) - 1));
    s.cdf.emplace_back(errors[k == 0 ? 0 : idx], frac);
  }
  return s;
}

struct TopNResult {
  std::vector<CellIndex> cells;     // most visited first
  std::vector<std::size_t> counts;  // parallel to cells
};

inline std::map<CellIndex, std::size_t> visit_counts(const Trace& trace, const GridSpec& grid) {
  std::map<CellIndex, std::size_t> counts;
  for (const auto& tp : trace.points) ++counts[cell_of(tp.p, grid)];
  return counts;
}

/// The n most visited cells; ties broken by ascending cell index. Returns
/// fewer than n cells when the trace does not visit n distinct cells.
inline TopNResult top_n(const Trace& trace, std::size_t n, const GridSpec& grid) {
  if (n < 1) throw std::invalid_argument("top_n needs n >= 1");
  const auto counts = visit_counts(trace, grid);
  std::vector<std::pair<CellIndex, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  TopNResult out;
  for (std::size_t i = 0; i < std::min(n, ranked.size()); ++i) {
    out.cells.push_back(ranked[i].first);
    out.counts.push_back(ranked[i].second);
  }
  return out;
}

/// Top-N coverage rate: |TopN(truth) & TopN(inferred)| / N over unordered sets.
inline double tnr(const Trace& truth, const InferredTrace& inferred, std::size_t n,
                  const GridSpec& grid) {
  if (n < 1) throw std::invalid_argument("tnr needs n >= 1");
  if (truth.empty() || inferred.empty()) return 0.0;
  const auto a = top_n(truth, n, grid).cells;
  const auto b = top_n(inferred, n, grid).cells;
  const std::set<CellIndex> sa(a.begin(), a.end());
  std::size_t common = 0;
  for (const auto& c : b) common += sa.count(c);
  return static_cast<double>(common) / static_cast<double>(n);
}

/// Shannon entropy (nats) of the cell-visit distribution.
inline double location_entropy(const Trace& trace, const GridSpec& grid) {
  if (trace.empty()) throw std::invalid_argument("entropy needs a non-empty trace");
  const auto counts = visit_counts(trace, grid);
  const double total = static_cast<double>(trace.size());
  double h = 0.0;
  for (const auto& [cell, c] : counts) {
    const double p = static_cast<double>(c) / total;
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

struct UsageRatio {
  double h_truth = 0.0;
  double h_inferred = 0.0;
  std::optional<double> ratio;  // empty when h_inferred == 0
};

/// H(truth) / H(inferred); undefined (empty) when the inferred entropy is zero.
inline UsageRatio usage_ratio(const Trace& truth, const InferredTrace& inferred,
                              const GridSpec& grid) {
  UsageRatio u;
  u.h_truth = location_entropy(truth, grid);
  u.h_inferred = location_entropy(inferred, grid);
  if (u.h_inferred > 0.0) u.ratio = u.h_truth / u.h_inferred;
  return u;
}

}  // namespace lbsn
