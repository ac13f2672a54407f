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

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "lbsn/geo.hpp"

namespace lbsn {
namespace {

// Chord-length form of the great-circle distance, written independently of
// the library's haversine.
double chord_distance(GeoPoint a, GeoPoint b) {
  auto unit = [](GeoPoint p) {
    const double la = p.lat * M_PI / 180, lo = p.lon * M_PI / 180;
    return std::array<double, 3>{std::cos(la) * std::cos(lo), std::cos(la) * std::sin(lo),
                                 std::sin(la)};
  };
  const auto u = unit(a), v = unit(b);
  const double c = std::sqrt((u[0] - v[0]) * (u[0] - v[0]) + (u[1] - v[1]) * (u[1] - v[1]) +
                             (u[2] - v[2]) * (u[2] - v[2]));
  return 2 * 6'371'000.0 * std::asin(c / 2);
}

TEST(Distance, IdenticalPointsAreZero) {
  const GeoPoint p{31.2, 121.5};
  EXPECT_EQ(distance_m(p, p), 0.0);
}

TEST(Distance, OneDegreeOfLongitudeAtEquator) {
  // Frozen from a 30-digit evaluation of the chord formula.
  EXPECT_NEAR(distance_m({0, 0}, {0, 1}), 111194.926644, 0.1);
}

TEST(Distance, BeijingShanghaiMatchesIndependentFormula) {
  const GeoPoint bj{39.9042, 116.4074}, sh{31.2304, 121.4737};
  EXPECT_NEAR(distance_m(bj, sh), chord_distance(bj, sh), 1.0);
  EXPECT_NEAR(distance_m(bj, sh), 1067310.171, 1.0);
}

TEST(Distance, SymmetricAndTriangleInequality) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> lat(-80, 80), lon(-180, 179.999);
  for (int i = 0; i < 1000; ++i) {
    const GeoPoint a{lat(rng), lon(rng)}, b{lat(rng), lon(rng)}, c{lat(rng), lon(rng)};
    EXPECT_DOUBLE_EQ(distance_m(a, b), distance_m(b, a));
    const double ab = distance_m(a, b), bc = distance_m(b, c), ac = distance_m(a, c);
    EXPECT_LE(ac, (ab + bc) * (1 + 1e-6));
  }
}

TEST(GeoPointTest, RejectsOutOfRangeLatitude) {
  EXPECT_THROW(GeoPoint::at(95, 0), GeoError);
  EXPECT_THROW(GeoPoint::at(NAN, 0), GeoError);
  EXPECT_EQ(GeoPoint::at(10, 190).lon, -170);
  EXPECT_EQ(GeoPoint::at(10, 180).lon, -180);
}

TEST(Offset, ZeroOffsetIsIdentity) {
  const GeoPoint p{31.2, 121.5};
  EXPECT_EQ(offset_m(p, 0, 0), p);
}

TEST(Offset, InverseOfEquatorDistance) {
  const GeoPoint q = offset_m({0, 0}, 55597.463322, 0);
  EXPECT_NEAR(q.lat, 0.0, 1e-6);
  EXPECT_NEAR(q.lon, 0.5, 1e-6);
}

TEST(Offset, PythagoreanRoundTrip) {
  const GeoPoint p{45.0, 10.0};
  EXPECT_NEAR(distance_m(p, offset_m(p, 300, 400)), 500.0, 2.5);
}

TEST(Offset, DistanceWithinHalfPercentUpTo100km) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> lat(-60, 60), lon(-180, 179), off(-70'000, 70'000);
  for (int i = 0; i < 1000; ++i) {
    const GeoPoint p{lat(rng), lon(rng)};
    const double e = off(rng), n = off(rng);
    const double want = std::hypot(e, n);
    if (want < 1.0 || want > 100'000) continue;
    EXPECT_NEAR(distance_m(p, offset_m(p, e, n)), want, 0.005 * want);
  }
}

TEST(Offset, ComposesAdditively) {
  const GeoPoint p{30.0, 120.0};
  const GeoPoint a = offset_m(offset_m(p, 20'000, 0), 25'000, 0);
  const GeoPoint b = offset_m(p, 45'000, 0);
  EXPECT_NEAR(distance_m(a, b), 0.0, 1e-3);
}

TEST(Offset, RejectsBeyondValidityBound) {
  EXPECT_THROW(offset_m({0, 0}, 100'000, 0), GeoError);
  EXPECT_THROW(offset_m({0, 0}, 0, -150'000), GeoError);
}

TEST(Grid, OriginIsCellZero) {
  const GeoPoint o{31.2, 121.5};
  const auto g = GridSpec::uniform(o, 100);
  EXPECT_EQ(cell_of(o, g), (CellIndex{0, 0, 0}));
}

TEST(Grid, OneAndAHalfCellsEastIsColumnOne) {
  const GeoPoint o{31.2, 121.5};
  const auto g = GridSpec::uniform(o, 250);
  EXPECT_EQ(cell_of(offset_m(o, 375, 0), g), (CellIndex{1, 0, 0}));
  EXPECT_EQ(cell_of(offset_m(o, -1, -1), g), (CellIndex{-1, -1, 0}));
}

TEST(Grid, CenterRoundTripsForRandomCells) {
  const auto g = GridSpec::uniform({40.0, -74.0}, 137.0);
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::int64_t> idx(-5000, 5000);
  for (int i = 0; i < 1000; ++i) {
    const CellIndex c{idx(rng), idx(rng), 0};
    EXPECT_EQ(cell_of(cell_center(c, g), g), c);
  }
}

TEST(Grid, CenterWithinHalfDiagonalAndNeighboursOneCellApart) {
  const double s = 200.0;
  const auto g = GridSpec::uniform({31.2, 121.5}, s);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> off(-50'000, 50'000);
  for (int i = 0; i < 1000; ++i) {
    const GeoPoint p = offset_m(g.origin, off(rng), off(rng));
    const CellIndex c = cell_of(p, g);
    const Vec2 d = g.frame().to_local(p) - g.frame().to_local(cell_center(c, g));
    EXPECT_LE(d.norm(), s * std::sqrt(2.0) / 2 + 1e-6);
    const double east = distance_m(cell_center(c, g), cell_center({c.ix + 1, c.iy, 0}, g));
    const double north = distance_m(cell_center(c, g), cell_center({c.ix, c.iy + 1, 0}, g));
    EXPECT_NEAR(east, s, 0.005 * s);
    EXPECT_NEAR(north, s, 0.005 * s);
  }
}

TEST(Grid, RejectsPointsOutsideRegion) {
  const auto g = GridSpec::uniform({0, 0}, 100);
  EXPECT_THROW(cell_of({20, 0}, g), GeoError);
}

TEST(Grid, ValidatesCellSizes) {
  GridSpec g{{0, 0}, {{1, 10.0}}};
  EXPECT_THROW(g.validate(), GeoError);
  EXPECT_THROW(GridSpec::uniform({0, 0}, 0.0), GeoError);
  EXPECT_THROW(GridSpec::uniform({0, 0}, -5.0), GeoError);
}

}  // namespace
}  // namespace lbsn
