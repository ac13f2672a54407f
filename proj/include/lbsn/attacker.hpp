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
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "lbsn/geo.hpp"
#include "lbsn/mobility.hpp"
#include "lbsn/oracle.hpp"

namespace lbsn {

class DegenerateGeometry : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown by a probe that is configured to give up when its account is banned.
class RateLimitAbort : public std::runtime_error {
 public:
  explicit RateLimitAbort(Seconds until)
      : std::runtime_error("account banned until " + std::to_string(until)), until_(until) {}
  Seconds until() const { return until_; }

 private:
  Seconds until_;
};

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

struct AnchorReading {
  GeoPoint anchor;
  DisplayedDistance displayed;
  Seconds t = 0;
};

enum class Phase { Trilateration, Scan, Partition };

inline const char* to_string(Phase p) {
  switch (p) {
    case Phase::Trilateration: return "trilateration";
    case Phase::Scan: return "scan";
    case Phase::Partition: return "partition";
  }
  return "?";
}

struct PhaseCost {
  Phase phase;
  std::int64_t queries = 0;
  friend bool operator==(const PhaseCost&, const PhaseCost&) = default;
};

struct Estimate {
  GeoPoint point;
  double bound_m = 0.0;
  std::int64_t queries_used = 0;
  std::int64_t wall_rounds = 0;
  std::vector<PhaseCost> phase_log;
  double wall_time_s = 0.0;  // simulated, from per-query latency and ban waits
  bool converged = true;
  bool reliable = true;

  void charge(Phase phase, std::int64_t queries) {
    phase_log.push_back(PhaseCost{phase, queries});
    queries_used += queries;
  }

  friend bool operator==(const Estimate&, const Estimate&) = default;
};

enum class AttackStatus { Ok, NeedsScan, NotFound, NotVisible, RateLimited, Degenerate };

inline const char* to_string(AttackStatus s) {
  switch (s) {
    case AttackStatus::Ok: return "ok";
    case AttackStatus::NeedsScan: return "needs_scan";
    case AttackStatus::NotFound: return "not_found";
    case AttackStatus::NotVisible: return "not_visible";
    case AttackStatus::RateLimited: return "rate_limited";
    case AttackStatus::Degenerate: return "degenerate";
  }
  return "?";
}

struct AttackResult {
  AttackStatus status = AttackStatus::Ok;
  Estimate estimate;
  std::string detail;
  bool ok() const { return status == AttackStatus::Ok; }
};

/// Lat/lon rectangle.
struct GeoRect {
  GeoPoint south_west;
  GeoPoint north_east;

  void validate() const {
    if (!(north_east.lat > south_west.lat) || !(north_east.lon > south_west.lon)) {
      throw ConfigError("rectangle corners must be ordered south-west, north-east");
    }
  }

  bool contains(const GeoPoint& p) const {
    return p.lat >= south_west.lat && p.lat <= north_east.lat && p.lon >= south_west.lon &&
           p.lon <= north_east.lon;
  }

  /// Extent in meters, measured in the south-west corner's tangent frame.
  Vec2 size_m() const { return LocalFrame(south_west).to_local(north_east); }

  GeoPoint center() const {
    return GeoPoint{(south_west.lat + north_east.lat) / 2, (south_west.lon + north_east.lon) / 2};
  }

  template <class Rng>
  GeoPoint sample(Rng& rng) const {
    std::uniform_real_distribution<double> lat(south_west.lat, north_east.lat);
    std::uniform_real_distribution<double> lon(south_west.lon, north_east.lon);
    const double a = lat(rng);
    const double b = lon(rng);
    return GeoPoint{a, b};
  }

  /// Square of side 2 * half_m centered at c.
  static GeoRect around(const GeoPoint& c, double half_m) {
    return GeoRect{offset_m(c, -half_m, -half_m), offset_m(c, half_m, half_m)};
  }
};

/// Continental-scale default for initial anchors (eastern China).
inline GeoRect default_anchor_box() {
  return GeoRect{GeoPoint{22.0, 100.0}, GeoPoint{42.0, 122.0}};
}

struct AttackConfig {
  double trilateration_threshold_m = 10.0;
  double partition_threshold_m = 25.0;
  std::optional<GeoRect> scan_region;
  double scan_spacing_m = 1000.0;
  GeoRect initial_anchor_box = default_anchor_box();
  std::vector<GeoPoint> initial_anchors;  // used before any random draw
  std::uint64_t seed = 1;
  int max_rounds = 40;
  int max_partition_passes = 6;

  void validate() const {
    if (!(trilateration_threshold_m > 0.0) || !(partition_threshold_m > 0.0)) {
      throw ConfigError("attack thresholds must be positive");
    }
    if (!(scan_spacing_m > 0.0)) throw ConfigError("scan spacing must be positive");
    if (max_rounds < 1 || max_partition_passes < 1) throw ConfigError("round caps must be >= 1");
    initial_anchor_box.validate();
    if (scan_region) scan_region->validate();
  }
};

// ---------------------------------------------------------------------------
// Probe interface
// ---------------------------------------------------------------------------

/// The attacker's only channel: displayed distances to one target from fake
/// anchor positions, plus nearby-list membership.
class DistanceProbe {
 public:
  virtual ~DistanceProbe() = default;
  /// nullopt when the target is not visible from `at`.
  virtual std::optional<DisplayedDistance> distance(const GeoPoint& at) = 0;
  virtual bool nearby_contains(const GeoPoint& at) = 0;
  virtual std::int64_t queries() const = 0;
  virtual Seconds now() const { return 0; }
  virtual double wall_time_s() const { return 0.0; }
};

enum class OnRateLimit { Wait, Abort };

/// Attack session against an in-process oracle: one account, one target.
/// Teleports are instantaneous in oracle time; per-query latency is charged
/// to a separate simulated wall clock.
class OracleSession final : public DistanceProbe {
 public:
  struct Options {
    Seconds start_t = 0;
    double latency_s = 0.0;
    OnRateLimit on_rate_limit = OnRateLimit::Wait;
  };

  OracleSession(Oracle& oracle, std::string account_id, std::string target_id, Options opts)
      : oracle_(oracle),
        account_(std::move(account_id)),
        target_(std::move(target_id)),
        opts_(opts),
        now_(opts.start_t) {}

  std::optional<DisplayedDistance> distance(const GeoPoint& at) override {
    while (true) {
      const QueryResult r = oracle_.query_distance(account_, at, target_, now_);
      charge();
      if (const auto* d = std::get_if<DisplayedDistance>(&r)) return *d;
      if (std::holds_alternative<NotVisible>(r)) return std::nullopt;
      wait_out(std::get<RateLimited>(r));
    }
  }

  bool nearby_contains(const GeoPoint& at) override {
    while (true) {
      const NearbyResult r = oracle_.query_nearby(account_, at, now_);
      charge();
      if (const auto* list = std::get_if<NearbyList>(&r)) {
        return std::any_of(list->begin(), list->end(),
                           [&](const NearbyEntry& e) { return e.user_id == target_; });
      }
      wait_out(std::get<RateLimited>(r));
    }
  }

  std::int64_t queries() const override { return queries_; }
  Seconds now() const override { return now_; }
  double wall_time_s() const override { return wall_time_s_; }
  std::int64_t bans_hit() const { return bans_hit_; }

 private:
  void charge() {
    ++queries_;
    wall_time_s_ += opts_.latency_s;
  }

  void wait_out(const RateLimited& rl) {
    ++bans_hit_;
    if (opts_.on_rate_limit == OnRateLimit::Abort) throw RateLimitAbort(rl.banned_until);
    wall_time_s_ += static_cast<double>(rl.banned_until - now_);
    now_ = rl.banned_until;
  }

  Oracle& oracle_;
  std::string account_;
  std::string target_;
  Options opts_;
  Seconds now_;
  std::int64_t queries_ = 0;
  std::int64_t bans_hit_ = 0;
  double wall_time_s_ = 0.0;
};

// ---------------------------------------------------------------------------
// Least-squares position from ranges
// ---------------------------------------------------------------------------

struct LspSolution {
  GeoPoint point;
  double residual_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

struct LspOptions {
  double step_tolerance_m = 0.01;
  int max_iterations = 100;
  double degenerate_ratio = 1e-6;  // twice-area over squared longest side
};

namespace detail {

inline double range_cost(const GeoPoint& q, std::span<const GeoPoint> anchors,
                         std::span<const double> ranges) {
  double c = 0.0;
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    const double r = distance_m(q, anchors[i]) - ranges[i];
    c += r * r;
  }
  return c;
}

inline void check_geometry(std::span<const Vec2> pts, double ratio) {
  double longest = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t j = i + 1; j < pts.size(); ++j) {
      const double len = (pts[i] - pts[j]).norm();
      if (len < 1e-3) throw DegenerateGeometry("anchors are not distinct");
      longest = std::max(longest, len);
    }
  }
  // Largest triangle spanned by any anchor triple.
  double best = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t j = i + 1; j < pts.size(); ++j) {
      for (std::size_t k = j + 1; k < pts.size(); ++k) {
        const Vec2 u = pts[j] - pts[i];
        const Vec2 v = pts[k] - pts[i];
        best = std::max(best, std::abs(u.x * v.y - u.y * v.x));
      }
    }
  }
  if (best / (longest * longest) < ratio) throw DegenerateGeometry("anchors are collinear");
}

// Closed-form solution of the circle equations linearized against anchor 0.
inline std::optional<Vec2> linearized_guess(std::span<const Vec2> pts,
                                            std::span<const double> ranges) {
  double a11 = 0, a12 = 0, a22 = 0, b1 = 0, b2 = 0;
  const Vec2 p0 = pts[0];
  const double k0 = p0.x * p0.x + p0.y * p0.y - ranges[0] * ranges[0];
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const double rx = 2 * (pts[i].x - p0.x);
    const double ry = 2 * (pts[i].y - p0.y);
    const double rhs = pts[i].x * pts[i].x + pts[i].y * pts[i].y - ranges[i] * ranges[i] - k0;
    a11 += rx * rx;
    a12 += rx * ry;
    a22 += ry * ry;
    b1 += rx * rhs;
    b2 += ry * rhs;
  }
  const double det = a11 * a22 - a12 * a12;
  if (std::abs(det) < 1e-12 * (a11 * a22 + 1e-300)) return std::nullopt;
  return Vec2{(a22 * b1 - a12 * b2) / det, (a11 * b2 - a12 * b1) / det};
}

// Levenberg-damped Gauss-Newton, re-linearized each iteration in the tangent
// frame of the current iterate.
inline LspSolution refine_ranges(GeoPoint q, std::span<const GeoPoint> anchors,
                                 std::span<const double> ranges, const LspOptions& opt) {
  constexpr double kMaxStepM = 2'000'000.0;
  double cost = range_cost(q, anchors, ranges);
  double lambda = 1e-3;
  LspSolution sol{q, std::sqrt(cost), 0, false};
  for (int it = 1; it <= opt.max_iterations; ++it) {
    sol.iterations = it;
    double h11 = 0, h12 = 0, h22 = 0, g1 = 0, g2 = 0;
    for (std::size_t i = 0; i < anchors.size(); ++i) {
      const double d = distance_m(q, anchors[i]);
      const double r = d - ranges[i];
      if (d < 1e-9) continue;
      const double b = initial_bearing_rad(q, anchors[i]);
      const double jx = -std::sin(b);
      const double jy = -std::cos(b);
      h11 += jx * jx;
      h12 += jx * jy;
      h22 += jy * jy;
      g1 += jx * r;
      g2 += jy * r;
    }
    const double a11 = h11 + lambda * (h11 + 1e-9);
    const double a22 = h22 + lambda * (h22 + 1e-9);
    const double det = a11 * a22 - h12 * h12;
    if (!(std::abs(det) > 0.0)) break;
    Vec2 step{-(a22 * g1 - h12 * g2) / det, -(a11 * g2 - h12 * g1) / det};
    const double len = step.norm();
    if (!std::isfinite(len)) break;
    if (len > kMaxStepM) step = (kMaxStepM / len) * step;
    const GeoPoint cand = detail::shift(q, step.x, step.y);
    const double cand_cost = range_cost(cand, anchors, ranges);
    if (cand_cost <= cost) {
      q = cand;
      cost = cand_cost;
      lambda = std::max(lambda / 3.0, 1e-12);
    } else {
      lambda = std::min(lambda * 4.0, 1e12);
    }
    if (step.norm() < opt.step_tolerance_m) {
      sol.converged = true;
      break;
    }
  }
  sol.point = q;
  sol.residual_norm = std::sqrt(cost);
  return sol;
}

}  // namespace detail

/// argmin_q sum_i (distance_m(q, anchor_i) - range_i)^2 for n >= 3 anchors.
/// Starts from the linearized closed form (in the anchors' centroid frame)
/// and from points on the shortest range circle, keeping the best local
/// optimum, so it also behaves at continental distances.
inline LspSolution solve_ranges(std::span<const GeoPoint> anchors, std::span<const double> ranges,
                                const LspOptions& opt = {}) {
  if (anchors.size() < 3 || anchors.size() != ranges.size()) {
    throw std::invalid_argument("solve_ranges needs >= 3 anchors with one range each");
  }
  LocalFrame base(anchors[0]);
  Vec2 centroid;
  for (const auto& a : anchors) centroid = centroid + base.to_local(a);
  centroid = (1.0 / static_cast<double>(anchors.size())) * centroid;
  const LocalFrame frame(base.to_geo(centroid));
  std::vector<Vec2> pts;
  pts.reserve(anchors.size());
  for (const auto& a : anchors) pts.push_back(frame.to_local(a));
  detail::check_geometry(pts, opt.degenerate_ratio);

  std::vector<GeoPoint> starts;
  if (auto g = detail::linearized_guess(pts, ranges)) {
    const GeoPoint gp = frame.to_geo(*g);
    if (is_valid(gp) && std::abs(gp.lat) < 89.0) starts.push_back(gp);
  }
  const std::size_t nearest = static_cast<std::size_t>(
      std::min_element(ranges.begin(), ranges.end()) - ranges.begin());
  starts.push_back(anchors[nearest]);
  if (ranges[nearest] > 0.0) {
    for (int k = 0; k < 8; ++k) {
      starts.push_back(destination(anchors[nearest], k * std::numbers::pi / 4, ranges[nearest]));
    }
  }

  LspSolution best;
  best.residual_norm = std::numeric_limits<double>::infinity();
  for (const auto& s : starts) {
    LspSolution cand = detail::refine_ranges(s, anchors, ranges, opt);
    if (cand.residual_norm < best.residual_norm) best = cand;
  }
  return best;
}

/// Least-squares position from exactly three displayed readings.
inline LspSolution lsp(std::span<const AnchorReading, 3> readings, const LspOptions& opt = {}) {
  std::array<GeoPoint, 3> anchors;
  std::array<double, 3> ranges;
  for (std::size_t i = 0; i < 3; ++i) {
    anchors[i] = readings[i].anchor;
    ranges[i] = readings[i].displayed.value_m;
  }
  return solve_ranges(anchors, ranges, opt);
}

// ---------------------------------------------------------------------------
// Iterative trilateration
// ---------------------------------------------------------------------------

/// One inserted point of the iterative search and its reading.
struct TrilaterationStep {
  GeoPoint point;
  DisplayedDistance shown;
  DisplayedDistance previous_best;  // reading of the list head before insertion
};

struct TrilaterationTrace {
  std::vector<TrilaterationStep> steps;
};

namespace detail {

struct RefPoint {
  GeoPoint p;
  DisplayedDistance shown;
  double range;  // midpoint of the reading's bucket
  std::size_t order;
};

inline void sort_refs(std::vector<RefPoint>& refs) {
  std::stable_sort(refs.begin(), refs.end(), [](const RefPoint& a, const RefPoint& b) {
    if (a.shown.value_m != b.shown.value_m) return a.shown.value_m < b.shown.value_m;
    return a.order < b.order;
  });
}

}  // namespace detail

/// Iterative trilateration: the reference list is kept sorted by displayed
/// distance; each round solves on the three closest references, teleports an
/// anchor to the solution and inserts its reading. Stops once the first and
/// third references are within the threshold, once all three sit on the
/// quantization floor, or at cfg.max_rounds.
inline AttackResult iterative_trilateration(DistanceProbe& probe, const Quantizer& quantizer,
                                            const AttackConfig& cfg,
                                            TrilaterationTrace* trace = nullptr) {
  cfg.validate();
  const std::int64_t q0 = probe.queries();
  std::mt19937_64 rng(cfg.seed);
  std::vector<detail::RefPoint> refs;
  std::size_t order = 0;

  auto observe = [&](const GeoPoint& p) -> bool {
    auto shown = probe.distance(p);
    if (!shown) return false;
    refs.push_back({p, *shown, preimage(*shown, quantizer).midpoint(), order++});
    return true;
  };

  AttackResult result;
  constexpr int kInitialDraws = 12;
  int visible = 0;
  for (const auto& a : cfg.initial_anchors) {
    if (visible == 3) break;
    visible += observe(a) ? 1 : 0;
  }
  for (int draw = 0; draw < kInitialDraws && visible < 3; ++draw) {
    const bool seen = observe(cfg.initial_anchor_box.sample(rng));
    visible += seen ? 1 : 0;
    if (draw == 2 && visible == 0) break;
  }
  auto finish = [&](AttackStatus status, std::string detail) {
    result.status = status;
    result.detail = std::move(detail);
    result.estimate.charge(Phase::Trilateration, probe.queries() - q0);
    result.estimate.wall_time_s = probe.wall_time_s();
    return result;
  };
  if (visible < 3) {
    return finish(AttackStatus::NeedsScan, "target not visible from initial anchors");
  }

  const bool has_floor = !std::holds_alternative<Exact>(quantizer);
  std::int64_t rounds = 0;
  bool converged = false;
  while (true) {
    detail::sort_refs(refs);
    const double spread = distance_m(refs[0].p, refs[2].p);
    if (spread <= cfg.trilateration_threshold_m) {
      converged = true;
      break;
    }
    if (has_floor && refs[0].shown.at_floor && refs[1].shown.at_floor && refs[2].shown.at_floor) {
      converged = true;
      break;
    }
    // Identity display reading zero (to solver precision): the head is on target.
    if (!has_floor && refs[0].shown.value_m <= LspOptions{}.step_tolerance_m) {
      converged = true;
      break;
    }
    if (rounds >= cfg.max_rounds) break;

    // First three by default; fall back to other triples on degenerate geometry.
    std::optional<LspSolution> sol;
    const std::size_t n = std::min<std::size_t>(refs.size(), 6);
    for (std::size_t k = 2; k < n && !sol; ++k) {
      for (std::size_t j = 1; j < k && !sol; ++j) {
        for (std::size_t i = 0; i < j && !sol; ++i) {
          const std::array<GeoPoint, 3> a{refs[i].p, refs[j].p, refs[k].p};
          const std::array<double, 3> r{refs[i].range, refs[j].range, refs[k].range};
          try {
            sol = solve_ranges(a, r);
          } catch (const DegenerateGeometry&) {
          }
        }
      }
    }
    if (!sol) break;

    auto taken = [&](const GeoPoint& p) {
      return std::any_of(refs.begin(), refs.end(),
                         [&](const detail::RefPoint& r) { return r.p == p; });
    };
    GeoPoint next = sol->point;
    if (taken(next)) {
      // The head triple did not change since the last round; use every
      // reference so the latest reading still contributes.
      std::vector<GeoPoint> a;
      std::vector<double> r;
      for (std::size_t i = 0; i < std::min<std::size_t>(refs.size(), 10); ++i) {
        a.push_back(refs[i].p);
        r.push_back(refs[i].range);
      }
      try {
        next = solve_ranges(a, r).point;
      } catch (const DegenerateGeometry&) {
      }
    }
    while (taken(next)) next = detail::shift(next, 1.0, 0.0);

    const DisplayedDistance head = refs[0].shown;
    ++rounds;
    if (observe(next) && trace) {
      trace->steps.push_back({next, refs.back().shown, head});
    }
  }

  detail::sort_refs(refs);
  result.estimate.point = refs[0].p;
  result.estimate.bound_m = distance_m(refs[0].p, refs[2].p);
  result.estimate.wall_rounds = rounds;
  result.estimate.converged = converged;
  return finish(AttackStatus::Ok, converged ? "" : "round cap reached");
}

// ---------------------------------------------------------------------------
// Space partition
// ---------------------------------------------------------------------------

struct PartitionResult {
  GeoPoint point;
  std::int64_t queries = 0;
  double half_width_m = 0.0;  // final max(delta_x, delta_y)
  bool reliable = true;
};

/// Observer hook: called after each probe with the bracket center and
/// half-widths in the tangent frame of p0.
struct PartitionObserver {
  virtual ~PartitionObserver() = default;
  virtual void on_probe(const LocalFrame& frame, Vec2 center, double half_x, double half_y) = 0;
};

/// Alternating X/Y bisection. The target is assumed inside the 2R x 2R box
/// around p0; each probe sits R away from the current center along one axis
/// and its reading certifies membership when the reading's bucket lies
/// within R.
inline PartitionResult space_partition(DistanceProbe& probe, const Quantizer& quantizer,
                                       const GeoPoint& p0, double radius_m, double threshold_m,
                                       PartitionObserver* observer = nullptr) {
  if (!(radius_m > 0.0) || !(threshold_m > 0.0)) {
    throw std::invalid_argument("space_partition needs positive radius and threshold");
  }
  const LocalFrame frame(p0);
  const std::int64_t q0 = probe.queries();
  Vec2 c{0.0, 0.0};
  double delta[2] = {radius_m, radius_m};
  int dim = 0;
  bool reliable = true;
  while (delta[0] >= threshold_m || delta[1] >= threshold_m) {
    Vec2 probe_at = c;
    (dim == 0 ? probe_at.x : probe_at.y) += radius_m;
    const auto shown = probe.distance(frame.to_geo(probe_at));
    bool member = false;
    if (shown) {
      const Bucket b = preimage(*shown, quantizer);
      member = b.hi_m <= radius_m * (1.0 + 1e-9);
      // The farthest bracket corner bounds any consistent reading.
      const double reach = std::hypot(radius_m + delta[dim], delta[1 - dim]);
      if (b.lo_m > reach * (1.0 + 1e-9)) reliable = false;
    } else {
      reliable = false;
    }
    double& coord = dim == 0 ? c.x : c.y;
    coord += member ? delta[dim] / 2 : -delta[dim] / 2;
    delta[dim] /= 2;
    dim = 1 - dim;
    if (observer) observer->on_probe(frame, c, delta[0], delta[1]);
  }
  return PartitionResult{frame.to_geo(c), probe.queries() - q0, std::max(delta[0], delta[1]),
                         reliable};
}

/// Number of probes space_partition issues for a given radius and threshold.
inline std::int64_t partition_probe_count(double radius_m, double threshold_m) {
  std::int64_t k = 0;
  for (double d = radius_m; d >= threshold_m; d /= 2) ++k;
  return 2 * k;
}

/// Repeated space partition: each pass re-centers on the previous result and
/// takes R from the bucket of the reading there, until R is on the floor and
/// a pass moves less than the threshold.
inline PartitionResult refine_by_partition(DistanceProbe& probe, const Quantizer& quantizer,
                                           const GeoPoint& start, double threshold_m,
                                           int max_passes, bool* lost = nullptr) {
  const double floor_r = preimage(DisplayedDistance{floor_value(quantizer), true}, quantizer).hi_m;
  const std::int64_t q0 = probe.queries();
  PartitionResult out{start, 0, 0.0, true};
  if (lost) *lost = false;
  GeoPoint p = start;
  for (int pass = 0; pass < max_passes; ++pass) {
    const auto shown = probe.distance(p);
    if (!shown) {
      if (lost) *lost = true;
      out.reliable = false;
      break;
    }
    const double r = std::max(preimage(*shown, quantizer).hi_m, floor_r);
    if (!(r > 0.0)) break;  // exact reading of zero: already on target
    const PartitionResult pr = space_partition(probe, quantizer, p, r, threshold_m);
    const double moved = distance_m(p, pr.point);
    p = pr.point;
    out.half_width_m = pr.half_width_m;
    out.reliable = out.reliable && pr.reliable;
    if (r <= floor_r * (1.0 + 1e-9) && moved < threshold_m) break;
  }
  out.point = p;
  out.queries = probe.queries() - q0;
  return out;
}

// ---------------------------------------------------------------------------
// Scan
// ---------------------------------------------------------------------------

struct ScanResult {
  std::optional<GeoPoint> found;
  std::int64_t probes = 0;
};

/// Probe positions covering a region: centers of a spacing-sized grid
/// anchored at the region's south-west corner, in visiting order.
inline std::vector<std::pair<CellIndex, GeoPoint>> scan_plan(const GeoRect& region, double spacing_m,
                                                             const PopularityMap* popularity,
                                                             Seconds t) {
  region.validate();
  const Vec2 size = region.size_m();
  const auto nx = static_cast<std::int64_t>(std::max(1.0, std::ceil(size.x / spacing_m - 1e-9)));
  const auto ny = static_cast<std::int64_t>(std::max(1.0, std::ceil(size.y / spacing_m - 1e-9)));
  const GridSpec grid = GridSpec::uniform(region.south_west, spacing_m);
  std::vector<std::pair<CellIndex, GeoPoint>> plan;
  plan.reserve(static_cast<std::size_t>(nx * ny));
  for (std::int64_t iy = 0; iy < ny; ++iy) {
    for (std::int64_t ix = 0; ix < nx; ++ix) {
      const CellIndex c{ix, iy, 0};
      plan.emplace_back(c, cell_center(c, grid));
    }
  }
  if (popularity) {
    const int hour = hour_of_day(t);
    std::stable_sort(plan.begin(), plan.end(), [&](const auto& a, const auto& b) {
      return popularity->count(a.first, hour) > popularity->count(b.first, hour);
    });
  }
  return plan;
}

/// Visits the scan plan until the target shows up in a nearby list.
inline ScanResult scan(DistanceProbe& probe, const GeoRect& region, double spacing_m,
                       const PopularityMap* popularity, Seconds t) {
  ScanResult out;
  for (const auto& [cell, at] : scan_plan(region, spacing_m, popularity, t)) {
    ++out.probes;
    if (probe.nearby_contains(at)) {
      out.found = at;
      return out;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Full attack
// ---------------------------------------------------------------------------

/// Unlimited-coverage policies: iterative trilateration down to the floor,
/// then space partition. Coverage-limited policies: scan, then space
/// partition around the discovered probe point.
inline AttackResult full_attack(DistanceProbe& probe, const ObfuscationPolicy& policy,
                                const AttackConfig& cfg, const PopularityMap* popularity = nullptr) {
  cfg.validate();
  const Quantizer& q = policy.quantizer;
  AttackResult result;
  Estimate& est = result.estimate;
  std::int64_t mark = probe.queries();
  Phase current = policy.coverage_limited() ? Phase::Scan : Phase::Trilateration;
  auto close_phase = [&](Phase next) {
    est.charge(current, probe.queries() - mark);
    mark = probe.queries();
    current = next;
  };
  auto fail = [&](AttackStatus s, std::string why) {
    close_phase(current);
    est.wall_time_s = probe.wall_time_s();
    result.status = s;
    result.detail = std::move(why);
    return result;
  };

  try {
    GeoPoint start;
    if (!policy.coverage_limited()) {
      AttackResult tri = iterative_trilateration(probe, q, cfg);
      if (!tri.ok()) return fail(tri.status, tri.detail);
      start = tri.estimate.point;
      est.point = start;
      est.bound_m = tri.estimate.bound_m;
      est.wall_rounds = tri.estimate.wall_rounds;
      est.converged = tri.estimate.converged;
    } else {
      if (!cfg.scan_region) return fail(AttackStatus::NotFound, "no scan region configured");
      const ScanResult sr = scan(probe, *cfg.scan_region, cfg.scan_spacing_m, popularity, probe.now());
      est.wall_rounds = sr.probes;
      if (!sr.found) return fail(AttackStatus::NotFound, "target not found in scan region");
      start = *sr.found;
      est.point = start;
    }
    close_phase(Phase::Partition);

    bool lost = false;
    const PartitionResult pr = refine_by_partition(probe, q, start, cfg.partition_threshold_m,
                                                   cfg.max_partition_passes, &lost);
    if (lost) return fail(AttackStatus::NotVisible, "target lost during partition");
    est.point = pr.point;
    est.bound_m = pr.half_width_m;
    est.reliable = pr.reliable;
    est.wall_rounds += pr.queries;
    close_phase(Phase::Partition);
  } catch (const RateLimitAbort& e) {
    return fail(AttackStatus::RateLimited, e.what());
  }
  est.wall_time_s = probe.wall_time_s();
  return result;
}

}  // namespace lbsn
