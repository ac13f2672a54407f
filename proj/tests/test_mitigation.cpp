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

#include "lbsn/mitigation.hpp"

namespace lbsn {
namespace {

const GeoPoint kOrigin{39.85, 116.30};

TEST(Obfuscate, UniformIsIdempotent) {
  const GridSpec g = GridSpec::uniform(kOrigin, 500);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> off(-20'000, 20'000);
  for (int i = 0; i < 500; ++i) {
    const GeoPoint o = obfuscate(offset_m(kOrigin, off(rng), off(rng)), g);
    EXPECT_LE(distance_m(obfuscate(o, g), o), 1e-6);
  }
}

TEST(Obfuscate, PointInsideCellMapsToCenter) {
  const double s = 400;
  const GridSpec g = GridSpec::uniform(kOrigin, s);
  const GeoPoint p = offset_m(kOrigin, 0.3 * s, 0.3 * s);
  EXPECT_LE(distance_m(obfuscate(p, g), offset_m(kOrigin, 0.5 * s, 0.5 * s)), 1e-3);
}

TEST(Obfuscate, CornerPrivacyIsHalfDiagonal) {
  const double s = 300;
  const GridSpec g = GridSpec::uniform(kOrigin, s);
  const GeoPoint corner = offset_m(kOrigin, 0.001, 0.001);
  EXPECT_NEAR(privacy_gain(corner, obfuscate(corner, g)), s * std::sqrt(2.0) / 2, 0.5);
}

TEST(Obfuscate, MeanPrivacyOverUniformPoints) {
  // Mean distance from a uniform point in a unit square to its center,
  // (sqrt2 + asinh 1) / 6, evaluated once and frozen.
  const double s = 200;
  const GridSpec g = GridSpec::uniform(kOrigin, s);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> off(-10'000, 10'000);
  double sum = 0;
  const int n = 20'000;
  for (int i = 0; i < n; ++i) {
    const GeoPoint p = offset_m(kOrigin, off(rng), off(rng));
    const double gain = privacy_gain(p, obfuscate(p, g));
    EXPECT_LE(gain, s * std::sqrt(2.0) / 2 + 1.0);
    sum += gain;
  }
  EXPECT_NEAR(sum / n, 0.382597858 * s, 0.02 * 0.382597858 * s);
}

PrivacyProfile classified(double normal, double top, std::map<CellIndex, int> cls) {
  PrivacyProfile p{GridSpec::uniform(kOrigin, top), {{0, normal}, {kTopLocationLevel, top}},
                   std::move(cls)};
  p.validate();
  return p;
}

TEST(Classified, TopCellUsesCoarseSizeOthersFine) {
  const PrivacyProfile prof = classified(200, 1000, {{{0, 0, 0}, kTopLocationLevel}});
  const GeoPoint home = offset_m(kOrigin, 130, 870);
  EXPECT_LE(distance_m(obfuscate(home, prof), offset_m(kOrigin, 500, 500)), 1e-3);
  const GeoPoint other = offset_m(kOrigin, 1130, 870);
  EXPECT_LE(distance_m(obfuscate(other, prof), offset_m(kOrigin, 1100, 900)), 1e-3);
}

TEST(Classified, NonDividingSizeClipsAtBaseEdge) {
  const PrivacyProfile prof = classified(300, 1000, {});
  // Fourth sub-cell spans [900, 1000) and is clipped to 100 m.
  const GeoPoint p = offset_m(kOrigin, 950, 10);
  EXPECT_LE(distance_m(obfuscate(p, prof), offset_m(kOrigin, 950, 150)), 1e-3);
}

TEST(Classified, IdempotentAndStaysInBaseCell) {
  const PrivacyProfile prof = classified(300, 1000, {{{1, 1, 0}, kTopLocationLevel}});
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> off(-5000, 5000);
  for (int i = 0; i < 500; ++i) {
    const GeoPoint p = offset_m(kOrigin, off(rng), off(rng));
    const GeoPoint o = obfuscate(p, prof);
    EXPECT_LE(distance_m(obfuscate(o, prof), o), 1e-6);
    EXPECT_EQ(cell_of(o, prof.base), cell_of(p, prof.base));
  }
}

TEST(Classified, ValidationRejectsBadProfiles) {
  const GridSpec base = GridSpec::uniform(kOrigin, 1000);
  EXPECT_THROW((PrivacyProfile{base, {{1, 1000}}, {}}.validate()), ConfigError);
  EXPECT_THROW((PrivacyProfile{base, {{0, 1200}}, {}}.validate()), ConfigError);
  EXPECT_THROW((PrivacyProfile{base, {{0, 500}, {1, 200}}, {}}.validate()), ConfigError);
  EXPECT_THROW((PrivacyProfile{base, {{0, 500}}, {{{0, 0, 0}, 3}}}.validate()), ConfigError);
}

TEST(GrsDistance, SameAdjacentAndDiagonalCells) {
  const double s = 250;
  const GridSpec g = GridSpec::uniform(kOrigin, s);
  const GeoPoint a = obfuscate(offset_m(kOrigin, 10, 10), g);
  EXPECT_NEAR(grs_distance(a, obfuscate(offset_m(kOrigin, 240, 200), g)), 0.0, 1e-6);
  EXPECT_NEAR(grs_distance(a, obfuscate(offset_m(kOrigin, 260, 200), g)), s, 0.01 * s);
  EXPECT_NEAR(grs_distance(a, obfuscate(offset_m(kOrigin, 260, 260), g)), s * std::sqrt(2.0),
              0.01 * s);
}

TEST(Utility, EqualFullAndHalf) {
  const Quantizer exact = Exact{};
  const GeoPoint anchor = offset_m(kOrigin, 3000, 0);
  EXPECT_DOUBLE_EQ(utility(kOrigin, kOrigin, anchor, 1000, exact).value, 1.0);
  const UtilityValue half = utility(kOrigin, offset_m(kOrigin, 500, 0), anchor, 1000, exact);
  EXPECT_NEAR(half.value, 0.5, 1e-3);
  EXPECT_FALSE(half.clamped);
  const UtilityValue edge = utility(kOrigin, offset_m(kOrigin, 999.9, 0), anchor, 999.9, exact);
  EXPECT_NEAR(edge.value, 0.0, 1e-3);
}

TEST(Utility, ClampsBeyondDistMax) {
  const GeoPoint anchor = offset_m(kOrigin, 5000, 0);
  const UtilityValue u = utility(kOrigin, offset_m(kOrigin, 2000, 0), anchor, 1000, Exact{});
  EXPECT_EQ(u.value, 0.0);
  EXPECT_TRUE(u.clamped);
  EXPECT_THROW(utility(kOrigin, kOrigin, anchor, 0, Exact{}), std::invalid_argument);
}

TEST(Utility, AnchorsCannotSeparateTwoPointsInOneCell) {
  const GridSpec g = GridSpec::uniform(kOrigin, 500);
  const GeoPoint a = offset_m(kOrigin, 40, 60), b = offset_m(kOrigin, 420, 310);
  ASSERT_EQ(obfuscate(a, g), obfuscate(b, g));
  std::mt19937_64 rng(4);
  for (const GeoPoint& anchor : AnnulusSampler{}.sample(kOrigin, rng)) {
    const auto da = quantize(distance_m(obfuscate(a, g), anchor), RoundNearest{10});
    const auto db = quantize(distance_m(obfuscate(b, g), anchor), RoundNearest{10});
    EXPECT_EQ(da, db);
  }
}

TEST(Annulus, SamplesInsideRing) {
  std::mt19937_64 rng(5);
  AnnulusSampler s{500, 5000, 200};
  for (const GeoPoint& p : s.sample(kOrigin, rng)) {
    const double d = distance_m(kOrigin, p);
    EXPECT_GE(d, 499.0);
    EXPECT_LE(d, 5001.0);
  }
}

std::vector<Trace> two_fixed_traces() {
  Trace a{"a", {}}, b{"b", {}};
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> off(-300, 300);
  for (int i = 0; i < 200; ++i) {
    const GeoPoint base = i % 3 ? offset_m(kOrigin, 2500, 2500) : offset_m(kOrigin, 6000, 1500);
    a.points.push_back({i * 1800, offset_m(base, off(rng), off(rng))});
    b.points.push_back({i * 1800, offset_m(kOrigin, 4000 + off(rng), 4000 + off(rng))});
  }
  return {a, b};
}

TradeoffOptions options() {
  TradeoffOptions o;
  o.origin = kOrigin;
  o.anchors.count = 8;
  return o;
}

TEST(Tradeoff, DegenerateCellSizeKeepsLocation) {
  const auto curve = tradeoff_curve(two_fixed_traces(), GridMode::Uniform, {1.0}, options());
  ASSERT_EQ(curve.size(), 1u);
  EXPECT_LE(curve[0].mean_privacy_m, 1.0);
  EXPECT_GE(curve[0].mean_utility, 0.99);
}

TEST(Tradeoff, UniformTrendsWithSize) {
  const std::vector<double> sizes{1000, 200, 600, 400, 800};
  const auto curve = tradeoff_curve(two_fixed_traces(), GridMode::Uniform, sizes, options());
  ASSERT_EQ(curve.size(), 5u);
  EXPECT_EQ(curve[0].cell_size_m, 200);
  for (std::size_t i = 1; i < curve.size(); ++i) {
    EXPECT_GT(curve[i].mean_privacy_m, curve[i - 1].mean_privacy_m);
    EXPECT_LE(curve[i].mean_utility, curve[i - 1].mean_utility + 1e-9);
  }
}

TEST(Tradeoff, ClassifiedRaisesTopLocationPrivacy) {
  const auto traces = two_fixed_traces();
  const auto u = tradeoff_curve(traces, GridMode::Uniform, {200}, options());
  const auto c = tradeoff_curve(traces, GridMode::Classified, {200}, options());
  EXPECT_GT(c[0].top_privacy_m, u[0].top_privacy_m);
  EXPECT_GE(c[0].mean_privacy_m, u[0].mean_privacy_m);
}

TEST(Tradeoff, SameSeedSameCurve) {
  const auto traces = two_fixed_traces();
  const auto a = tradeoff_curve(traces, GridMode::Classified, {200, 500}, options());
  const auto b = tradeoff_curve(traces, GridMode::Classified, {200, 500}, options());
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].mean_privacy_m, b[i].mean_privacy_m);
    EXPECT_EQ(a[i].mean_utility, b[i].mean_utility);
  }
}

TEST(Tradeoff, RejectsBadSizes) {
  const auto traces = two_fixed_traces();
  EXPECT_THROW(tradeoff_curve(traces, GridMode::Uniform, {6000}, options()), ConfigError);
  EXPECT_THROW(tradeoff_curve(traces, GridMode::Uniform, {0.5}, options()), ConfigError);
  EXPECT_THROW(tradeoff_curve(traces, GridMode::Classified, {1200}, options()), ConfigError);
}

TEST(Tradeoff, InterpolatesUtilityAtPrivacy) {
  std::vector<TradeoffPoint> curve{{GridMode::Uniform, 100, 10, 0.9},
                                   {GridMode::Uniform, 200, 20, 0.7}};
  EXPECT_NEAR(utility_at_privacy(curve, 15), 0.8, 1e-12);
  EXPECT_NEAR(utility_at_privacy(curve, 30), 0.5, 1e-12);
}

}  // namespace
}  // namespace lbsn
