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
#include <compare>
#include <cstdint>
#include <map>
#include <numbers>
#include <stdexcept>
#include <string>
#include <tuple>

namespace lbsn {

inline constexpr double kEarthRadiusM = 6'371'000.0;

class GeoError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

constexpr double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }
constexpr double rad2deg(double rad) { return rad * 180.0 / std::numbers::pi; }

/// Wraps a longitude into [-180, 180).
inline double normalize_lon(double lon) {
  if (lon >= -180.0 && lon < 180.0) return lon;
  double x = std::fmod(lon + 180.0, 360.0);
  if (x < 0) x += 360.0;
  return x - 180.0;
}

struct GeoPoint {
  double lat = 0.0;
  double lon = 0.0;

  /// Validated constructor: rejects non-finite values and |lat| > 90,
  /// wraps lon into [-180, 180).
  static GeoPoint at(double lat, double lon) {
    if (!std::isfinite(lat) || !std::isfinite(lon)) {
      throw GeoError("coordinate is not finite");
    }
    if (lat < -90.0 || lat > 90.0) {
      throw GeoError("latitude out of range: " + std::to_string(lat));
    }
    return GeoPoint{lat, normalize_lon(lon)};
  }

  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

inline bool is_valid(const GeoPoint& p) {
  return std::isfinite(p.lat) && std::isfinite(p.lon) && p.lat >= -90.0 &&
         p.lat <= 90.0 && p.lon >= -180.0 && p.lon < 180.0;
}

/// Great-circle (haversine) distance on a sphere of radius kEarthRadiusM.
inline double distance_m(const GeoPoint& a, const GeoPoint& b) {
  if (std::tie(b.lat, b.lon) < std::tie(a.lat, a.lon)) return distance_m(b, a);
  const double phi1 = deg2rad(a.lat);
  const double phi2 = deg2rad(b.lat);
  const double dphi = phi2 - phi1;
  const double dlambda = deg2rad(normalize_lon(b.lon - a.lon));
  const double s1 = std::sin(dphi / 2);
  const double s2 = std::sin(dlambda / 2);
  double h = s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2;
  if (h > 1.0) h = 1.0;
  return 2.0 * kEarthRadiusM * std::asin(std::sqrt(h));
}

/// Initial bearing from `from` towards `to`, radians clockwise from north.
inline double initial_bearing_rad(const GeoPoint& from, const GeoPoint& to) {
  const double phi1 = deg2rad(from.lat);
  const double phi2 = deg2rad(to.lat);
  const double dlambda = deg2rad(normalize_lon(to.lon - from.lon));
  const double y = std::sin(dlambda) * std::cos(phi2);
  const double x = std::cos(phi1) * std::sin(phi2) -
                   std::sin(phi1) * std::cos(phi2) * std::cos(dlambda);
  return std::atan2(y, x);
}

/// Point reached by travelling `dist` meters along a great circle.
inline GeoPoint destination(const GeoPoint& from, double bearing_rad,
                            double dist) {
  const double delta = dist / kEarthRadiusM;
  const double phi1 = deg2rad(from.lat);
  const double lambda1 = deg2rad(from.lon);
  const double sin_phi2 = std::sin(phi1) * std::cos(delta) +
                          std::cos(phi1) * std::sin(delta) * std::cos(bearing_rad);
  const double phi2 = std::asin(std::clamp(sin_phi2, -1.0, 1.0));
  const double lambda2 =
      lambda1 + std::atan2(std::sin(bearing_rad) * std::sin(delta) * std::cos(phi1),
                           std::cos(delta) - std::sin(phi1) * std::sin(phi2));
  return GeoPoint{rad2deg(phi2), normalize_lon(rad2deg(lambda2))};
}

namespace detail {

// Equirectangular shift without the validity bound. Latitude is clamped just
// short of the poles so that cos(lat) stays usable.
inline GeoPoint shift(const GeoPoint& p, double east_m, double north_m) {
  constexpr double kMaxLat = 89.999999;
  const double cos_lat = std::cos(deg2rad(p.lat));
  double lat = p.lat + rad2deg(north_m / kEarthRadiusM);
  lat = std::clamp(lat, -kMaxLat, kMaxLat);
  const double lon = p.lon + rad2deg(east_m / (kEarthRadiusM * cos_lat));
  return GeoPoint{lat, normalize_lon(lon)};
}

}  // namespace detail

inline constexpr double kMaxOffsetM = 100'000.0;

/// Local-tangent offset of `p` by east/north meters. Offsets must stay below
/// kMaxOffsetM on each axis.
inline GeoPoint offset_m(const GeoPoint& p, double east_m, double north_m) {
  if (!(std::abs(east_m) < kMaxOffsetM) || !(std::abs(north_m) < kMaxOffsetM)) {
    throw GeoError("offset exceeds local-tangent validity bound");
  }
  return detail::shift(p, east_m, north_m);
}

struct Vec2 {
  double x = 0.0;  // east, meters
  double y = 0.0;  // north, meters

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(const Vec2&, const Vec2&) = default;
  double norm() const { return std::hypot(x, y); }
};

/// Equirectangular tangent frame anchored at a reference point.
class LocalFrame {
 public:
  explicit LocalFrame(const GeoPoint& anchor)
      : anchor_(anchor), cos_lat_(std::cos(deg2rad(anchor.lat))) {}

  const GeoPoint& anchor() const { return anchor_; }

  Vec2 to_local(const GeoPoint& p) const {
    return {kEarthRadiusM * deg2rad(normalize_lon(p.lon - anchor_.lon)) * cos_lat_,
            kEarthRadiusM * deg2rad(p.lat - anchor_.lat)};
  }

  GeoPoint to_geo(const Vec2& v) const {
    const double lat = anchor_.lat + rad2deg(v.y / kEarthRadiusM);
    const double lon = anchor_.lon + rad2deg(v.x / (kEarthRadiusM * cos_lat_));
    return GeoPoint{lat, normalize_lon(lon)};
  }

 private:
  GeoPoint anchor_;
  double cos_lat_;
};

struct CellIndex {
  std::int64_t ix = 0;
  std::int64_t iy = 0;
  int level = 0;  // privacy class; 0 is the uniform default

  friend auto operator<=>(const CellIndex&, const CellIndex&) = default;
};

/// Square grid anchored at `origin` in the origin's tangent frame. Each
/// privacy level carries its own cell size.
struct GridSpec {
  GeoPoint origin;
  std::map<int, double> cell_size_m;
  double extent_m = 1'000'000.0;  // half-width of the indexable region

  static GridSpec uniform(const GeoPoint& origin, double cell_size) {
    GridSpec g{origin, {{0, cell_size}}};
    g.validate();
    return g;
  }

  void validate() const {
    if (!cell_size_m.contains(0)) throw GeoError("grid has no level 0");
    for (const auto& [level, size] : cell_size_m) {
      if (!(size > 0.0) || !std::isfinite(size)) {
        throw GeoError("cell size must be positive (level " +
                       std::to_string(level) + ")");
      }
    }
    if (!(extent_m > 0.0)) throw GeoError("grid extent must be positive");
  }

  double size(int level) const {
    auto it = cell_size_m.find(level);
    if (it == cell_size_m.end()) {
      throw GeoError("unknown grid level " + std::to_string(level));
    }
    return it->second;
  }

  LocalFrame frame() const { return LocalFrame(origin); }
};

inline CellIndex cell_of(const GeoPoint& p, const GridSpec& g, int level = 0) {
  const double s = g.size(level);
  const Vec2 v = g.frame().to_local(p);
  if (std::abs(v.x) > g.extent_m || std::abs(v.y) > g.extent_m) {
    throw GeoError("point outside grid region");
  }
  return CellIndex{static_cast<std::int64_t>(std::floor(v.x / s)),
                   static_cast<std::int64_t>(std::floor(v.y / s)), level};
}

inline GeoPoint cell_center(const CellIndex& c, const GridSpec& g) {
  const double s = g.size(c.level);
  return g.frame().to_geo({(static_cast<double>(c.ix) + 0.5) * s,
                           (static_cast<double>(c.iy) + 0.5) * s});
}

}  // namespace lbsn
