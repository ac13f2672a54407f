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
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "lbsn/geo.hpp"
#include "lbsn/metrics.hpp"
#include "lbsn/mobility.hpp"
#include "lbsn/oracle.hpp"

namespace lbsn {

inline constexpr int kTopLocationLevel = 1;

/// Classified grid: a base grid whose cells are each assigned a privacy
/// level, and a cell size per level. Finer cells are laid out inside each
/// base cell starting at its south-west corner and clipped at its edges, so
/// an obfuscated point never leaves its base cell.
struct PrivacyProfile {
  GridSpec base;                      // level-0 size is the base cell size
  std::map<int, double> class_size_m;  // level -> cell size
  std::map<CellIndex, int> classifier;  // base cell -> level (default 0)

  void validate() const {
    base.validate();
    if (!class_size_m.contains(0)) throw ConfigError("privacy profile needs level 0");
    const double base_size = base.size(0);
    for (const auto& [level, size] : class_size_m) {
      if (!(size > 0.0)) throw ConfigError("class cell size must be positive");
      if (size > base_size * (1.0 + 1e-12)) {
        throw ConfigError("class cell size exceeds base cell size");
      }
      if (level > 0 && size < class_size_m.at(0)) {
        throw ConfigError("top-location cells must not be smaller than normal cells");
      }
    }
    for (const auto& [cell, level] : classifier) {
      if (!class_size_m.contains(level)) {
        throw ConfigError("classifier uses unknown level " + std::to_string(level));
      }
    }
  }

  int level_of(const CellIndex& base_cell) const {
    auto it = classifier.find(CellIndex{base_cell.ix, base_cell.iy, 0});
    return it == classifier.end() ? 0 : it->second;
  }
};

/// Uniform grid reference system: the center of p's cell.
inline GeoPoint obfuscate(const GeoPoint& p, const GridSpec& grid) {
  return cell_center(cell_of(p, grid), grid);
}

inline GeoPoint obfuscate(const GeoPoint& p, const PrivacyProfile& profile) {
  const GridSpec& g = profile.base;
  const CellIndex base_cell = cell_of(p, g);
  const double base_size = g.size(0);
  const double s = profile.class_size_m.at(profile.level_of(base_cell));
  const LocalFrame frame = g.frame();
  const Vec2 v = frame.to_local(p);
  const Vec2 lo{static_cast<double>(base_cell.ix) * base_size,
                static_cast<double>(base_cell.iy) * base_size};
  auto axis = [&](double coord, double base_lo) {
    const double k = std::floor((coord - base_lo) / s);
    const double cell_lo = base_lo + k * s;
    const double cell_hi = std::min(cell_lo + s, base_lo + base_size);
    return 0.5 * (cell_lo + cell_hi);
  };
  return frame.to_geo({axis(v.x, lo.x), axis(v.y, lo.y)});
}

/// Top-n base cells of a trace mapped to the top-location level.
inline std::map<CellIndex, int> classify_top_locations(const Trace& trace, const GridSpec& base,
                                                       std::size_t n,
                                                       int level = kTopLocationLevel) {
  std::map<CellIndex, int> out;
  if (trace.empty()) return out;
  for (const auto& c : top_n(trace, n, base).cells) out[c] = level;
  return out;
}

/// Distance between two obfuscated locations (cell center to cell center).
inline double grs_distance(const GeoPoint& a_obf, const GeoPoint& b_obf) {
  return distance_m(a_obf, b_obf);
}

inline double privacy_gain(const GeoPoint& real, const GeoPoint& obfuscated) {
  return distance_m(real, obfuscated);
}

struct UtilityValue {
  double value = 1.0;
  bool clamped = false;  // displayed gap exceeded dist_max
};

/// 1 - |DDist(real, anchor) - DDist(obfuscated, anchor)| / dist_max, where
/// DDist is the displayed (quantized) distance.
inline UtilityValue utility(const GeoPoint& real, const GeoPoint& obfuscated,
                            const GeoPoint& anchor, double dist_max, const Quantizer& display) {
  if (!(dist_max > 0.0)) throw std::invalid_argument("dist_max must be positive");
  const double a = quantize(distance_m(real, anchor), display).value_m;
  const double b = quantize(distance_m(obfuscated, anchor), display).value_m;
  const double gap = std::abs(a - b);
  if (gap > dist_max) return UtilityValue{0.0, true};
  return UtilityValue{1.0 - gap / dist_max, false};
}

/// Anchors uniform by area in an annulus around a point.
struct AnnulusSampler {
  double inner_m = 500.0;
  double outer_m = 5000.0;
  int count = 32;

  template <class Rng>
  std::vector<GeoPoint> sample(const GeoPoint& around, Rng& rng) const {
    std::uniform_real_distribution<double> r2(inner_m * inner_m, outer_m * outer_m);
    std::uniform_real_distribution<double> theta(0.0, 2 * std::numbers::pi);
    std::vector<GeoPoint> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
      const double r = std::sqrt(r2(rng));
      const double th = theta(rng);
      out.push_back(destination(around, th, r));
    }
    return out;
  }
};

enum class GridMode { Uniform, Classified };

inline const char* to_string(GridMode m) {
  return m == GridMode::Uniform ? "uniform" : "classified";
}

struct TradeoffOptions {
  GeoPoint origin;  // grid origin shared by every trace
  AnnulusSampler anchors;
  double dist_max_m = 1000.0;
  Quantizer display = RoundNearest{10.0};
  double top_cell_m = 1000.0;  // classified mode: size pinned for top locations
  std::size_t top_n = 2;
  std::uint64_t seed = 1;
};

struct TradeoffPoint {
  GridMode mode = GridMode::Uniform;
  double cell_size_m = 0.0;
  double mean_privacy_m = 0.0;
  double mean_utility = 0.0;
  double top_privacy_m = 0.0;  // mean privacy at top-location fixes only
  std::size_t clamped = 0;     // utility samples clamped at 0
};

/// Mean privacy and utility per cell size. Anchor samples are drawn once per
/// trace point and shared across sizes and modes.
inline std::vector<TradeoffPoint> tradeoff_curve(const std::vector<Trace>& traces, GridMode mode,
                                                 const std::vector<double>& sizes,
                                                 const TradeoffOptions& opt) {
  if (traces.empty()) throw std::invalid_argument("tradeoff_curve needs traces");
  for (double s : sizes) {
    if (!(s >= 1.0 && s <= 5000.0)) throw ConfigError("cell size out of [1, 5000] m");
    if (mode == GridMode::Classified && s > opt.top_cell_m) {
      throw ConfigError("normal cell size exceeds top-location cell size");
    }
  }
  std::vector<double> sorted_sizes = sizes;
  std::sort(sorted_sizes.begin(), sorted_sizes.end());

  const GridSpec base = GridSpec::uniform(opt.origin, opt.top_cell_m);
  struct Sampled {
    GeoPoint p;
    bool top;
    std::size_t trace;
    std::vector<GeoPoint> anchors;
  };
  std::vector<Sampled> points;
  std::vector<std::map<CellIndex, int>> classifiers;
  std::mt19937_64 rng(opt.seed);
  for (std::size_t ti = 0; ti < traces.size(); ++ti) {
    classifiers.push_back(classify_top_locations(traces[ti], base, opt.top_n));
    for (const auto& tp : traces[ti].points) {
      const bool top = classifiers.back().contains(cell_of(tp.p, base));
      points.push_back(Sampled{tp.p, top, ti, opt.anchors.sample(tp.p, rng)});
    }
  }
  if (points.empty()) throw std::invalid_argument("tradeoff_curve needs trace points");

  std::vector<TradeoffPoint> curve;
  for (double s : sorted_sizes) {
    std::vector<PrivacyProfile> profiles;
    if (mode == GridMode::Classified) {
      for (const auto& cls : classifiers) {
        PrivacyProfile prof{base, {{0, s}, {kTopLocationLevel, opt.top_cell_m}}, cls};
        prof.validate();
        profiles.push_back(std::move(prof));
      }
    }
    const GridSpec uniform = GridSpec::uniform(opt.origin, s);
    TradeoffPoint tp{mode, s};
    double privacy_sum = 0.0, utility_sum = 0.0, top_sum = 0.0;
    std::size_t utility_n = 0, top_n_pts = 0;
    for (const auto& sp : points) {
      const GeoPoint o = mode == GridMode::Uniform ? obfuscate(sp.p, uniform)
                                                   : obfuscate(sp.p, profiles[sp.trace]);
      const double priv = privacy_gain(sp.p, o);
      privacy_sum += priv;
      if (sp.top) {
        top_sum += priv;
        ++top_n_pts;
      }
      for (const auto& a : sp.anchors) {
        const UtilityValue u = utility(sp.p, o, a, opt.dist_max_m, opt.display);
        utility_sum += u.value;
        tp.clamped += u.clamped ? 1 : 0;
        ++utility_n;
      }
    }
    tp.mean_privacy_m = privacy_sum / static_cast<double>(points.size());
    tp.mean_utility = utility_n ? utility_sum / static_cast<double>(utility_n) : 1.0;
    tp.top_privacy_m = top_n_pts ? top_sum / static_cast<double>(top_n_pts) : 0.0;
    curve.push_back(tp);
  }
  return curve;
}

/// Utility of a curve at a given privacy, interpolating linearly in privacy
/// and extrapolating from the end segments.
inline double utility_at_privacy(const std::vector<TradeoffPoint>& curve, double privacy_m) {
  if (curve.empty()) throw std::invalid_argument("empty curve");
  if (curve.size() == 1) return curve.front().mean_utility;
  std::vector<TradeoffPoint> c = curve;
  std::sort(c.begin(), c.end(), [](const auto& a, const auto& b) {
    return a.mean_privacy_m < b.mean_privacy_m;
  });
  std::size_t i = 1;
  while (i + 1 < c.size() && c[i].mean_privacy_m < privacy_m) ++i;
  const auto& a = c[i - 1];
  const auto& b = c[i];
  const double span = b.mean_privacy_m - a.mean_privacy_m;
  if (span <= 0.0) return 0.5 * (a.mean_utility + b.mean_utility);
  const double w = (privacy_m - a.mean_privacy_m) / span;
  return a.mean_utility + w * (b.mean_utility - a.mean_utility);
}

}  // namespace lbsn
