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

#include "lbsn/attacker.hpp"
#include "test_support.hpp"

namespace lbsn {
namespace {

using testing::BoxProbe;
using testing::QuantizedProbe;
using testing::shanghai;

struct Planar {
  LocalFrame frame{shanghai()};
  std::array<GeoPoint, 3> anchors{frame.to_geo({0, 0}), frame.to_geo({100, 0}),
                                  frame.to_geo({0, 100})};
  GeoPoint target = frame.to_geo({30, 40});

  std::array<AnchorReading, 3> readings(const Quantizer& q) const {
    std::array<AnchorReading, 3> r;
    for (int i = 0; i < 3; ++i) r[i] = {anchors[i], quantize(distance_m(anchors[i], target), q), 0};
    return r;
  }
};

double cost(const GeoPoint& q, const std::array<AnchorReading, 3>& r) {
  double c = 0;
  for (const auto& a : r) {
    const double e = distance_m(q, a.anchor) - a.displayed.value_m;
    c += e * e;
  }
  return c;
}

TEST(Lsp, ExactPlanarReadingsRecoverTarget) {
  Planar g;
  const auto r = g.readings(Exact{});
  EXPECT_NEAR(r[0].displayed.value_m, 50.0, 0.01);
  EXPECT_NEAR(r[1].displayed.value_m, 80.623, 0.01);
  EXPECT_NEAR(r[2].displayed.value_m, 67.082, 0.01);
  const LspSolution s = lsp(r);
  const Vec2 v = g.frame.to_local(s.point);
  EXPECT_NEAR(v.x, 30.0, 0.05);
  EXPECT_NEAR(v.y, 40.0, 0.05);
  EXPECT_TRUE(s.converged);
}

TEST(Lsp, ZeroRangePinsToAnchor) {
  Planar g;
  g.target = g.anchors[0];
  const LspSolution s = lsp(g.readings(Exact{}));
  EXPECT_NEAR(distance_m(s.point, g.anchors[0]), 0.0, 0.05);
}

TEST(Lsp, QuantizedReadingsMatchBruteForceArgmin) {
  Planar g;
  const auto r = g.readings(FloorBucket{100});
  const LspSolution s = lsp(r);
  // Reference: exhaustive 1 m lattice search over a 1 km square.
  double best = std::numeric_limits<double>::infinity();
  for (int x = -500; x <= 500; ++x) {
    for (int y = -500; y <= 500; ++y) {
      best = std::min(best, cost(g.frame.to_geo({double(x), double(y)}), r));
    }
  }
  EXPECT_LE(cost(s.point, r), best + 1e-3);
  EXPECT_LE(std::sqrt(cost(s.point, r)), 300.0);
  EXPECT_LE(distance_m(s.point, g.target), 150.0);
}

TEST(Lsp, GradientVanishesAtSolution) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-2000, 2000);
  const LocalFrame f(shanghai());
  for (int trial = 0; trial < 50; ++trial) {
    const GeoPoint t = f.to_geo({u(rng), u(rng)});
    std::array<AnchorReading, 3> r;
    for (auto& a : r) {
      a.anchor = f.to_geo({u(rng), u(rng)});
      a.displayed = quantize(distance_m(a.anchor, t), Exact{});
    }
    LspSolution s;
    try {
      s = lsp(r);
    } catch (const DegenerateGeometry&) {
      continue;
    }
    auto grad = [&](const GeoPoint& p) {
      const LocalFrame pf(p);
      const double h = 0.1;
      const double gx = (cost(pf.to_geo({h, 0}), r) - cost(pf.to_geo({-h, 0}), r)) / (2 * h);
      const double gy = (cost(pf.to_geo({0, h}), r) - cost(pf.to_geo({0, -h}), r)) / (2 * h);
      return std::hypot(gx, gy);
    };
    const double away = grad(LocalFrame(s.point).to_geo({1.0, 0.0}));
    EXPECT_LE(grad(s.point), 1e-3 * away + 1e-6);
  }
}

TEST(Lsp, CollinearAnchorsAreDegenerate) {
  const LocalFrame f(shanghai());
  std::array<AnchorReading, 3> r{AnchorReading{f.to_geo({0, 0}), {10, false}, 0},
                                 AnchorReading{f.to_geo({100, 0}), {10, false}, 0},
                                 AnchorReading{f.to_geo({200, 0}), {10, false}, 0}};
  EXPECT_THROW(lsp(r), DegenerateGeometry);
}

AttackConfig metro_config(const GeoPoint& center, std::uint64_t seed) {
  AttackConfig c;
  c.initial_anchor_box = GeoRect::around(center, 15'000);
  c.seed = seed;
  return c;
}

TEST(Trilateration, ExactOracleConverges) {
  const GeoRect box = GeoRect::around(shanghai(), 15'000);
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    std::mt19937_64 rng(seed + 1000);
    const GeoPoint target = box.sample(rng);
    QuantizedProbe probe(target, Exact{});
    const AttackResult r = iterative_trilateration(probe, Exact{}, metro_config(shanghai(), seed));
    ASSERT_TRUE(r.ok()) << seed;
    EXPECT_LE(distance_m(r.estimate.point, target), 10.0) << seed;
    EXPECT_LE(r.estimate.wall_rounds, 15) << seed;
    EXPECT_EQ(r.estimate.queries_used, probe.queries());
  }
}

TEST(Trilateration, NewReadingsTrendDownward) {
  int good = 0, total = 0;
  const GeoRect box = GeoRect::around(shanghai(), 15'000);
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    std::mt19937_64 rng(seed + 1000);
    QuantizedProbe probe(box.sample(rng), Exact{});
    TrilaterationTrace trace;
    iterative_trilateration(probe, Exact{}, metro_config(shanghai(), seed), &trace);
    for (const auto& st : trace.steps) {
      ++total;
      good += st.shown.value_m <= st.previous_best.value_m + 0.05 ? 1 : 0;
    }
  }
  ASSERT_GT(total, 0);
  EXPECT_GE(static_cast<double>(good) / total, 0.9);
}

TEST(Trilateration, LargeThresholdStopsAtEntry) {
  const GeoPoint target = offset_m(shanghai(), 1234, -567);
  QuantizedProbe probe(target, Exact{});
  AttackConfig c = metro_config(shanghai(), 4);
  c.trilateration_threshold_m = 1e7;
  const AttackResult r = iterative_trilateration(probe, Exact{}, c);
  ASSERT_TRUE(r.ok());
  EXPECT_EQ(r.estimate.wall_rounds, 0);
  EXPECT_EQ(probe.queries(), 3);
  // The returned point is the initial anchor with the smallest reading.
  std::mt19937_64 rng(4);
  double nearest = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 3; ++i) {
    nearest = std::min(nearest, distance_m(c.initial_anchor_box.sample(rng), target));
  }
  EXPECT_NEAR(distance_m(r.estimate.point, target), nearest, 1e-6);
}

TEST(Trilateration, GlobalScaleMomo) {
  const GeoPoint buffalo{42.8864, -78.8784};
  QuantizedProbe probe(buffalo, RoundNearest{10});
  AttackConfig c;
  c.initial_anchors = {{39.9042, 116.4074}, {31.2304, 121.4737}, {30.5728, 104.0668}};
  const AttackResult r = iterative_trilateration(probe, RoundNearest{10}, c);
  ASSERT_TRUE(r.ok());
  EXPECT_LE(r.estimate.wall_rounds, 12);
  EXPECT_LE(distance_m(r.estimate.point, buffalo), 20.0);
}

TEST(Trilateration, SkoutStopsOnFloor) {
  const GeoRect box = GeoRect::around(shanghai(), 15'000);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    std::mt19937_64 rng(seed + 1000);
    const GeoPoint target = box.sample(rng);
    const Quantizer q = MinThenStep{804.5, 1609};
    QuantizedProbe probe(target, q);
    const AttackResult r = iterative_trilateration(probe, q, metro_config(shanghai(), seed));
    ASSERT_TRUE(r.ok());
    EXPECT_TRUE(r.estimate.converged);
    EXPECT_LE(distance_m(r.estimate.point, target), 804.5 + 1e-6);
  }
}

TEST(Trilateration, DeterministicPerSeed) {
  const GeoPoint target = offset_m(shanghai(), 2000, 3000);
  QuantizedProbe a(target, RoundNearest{10}), b(target, RoundNearest{10});
  const auto ra = iterative_trilateration(a, RoundNearest{10}, metro_config(shanghai(), 77));
  const auto rb = iterative_trilateration(b, RoundNearest{10}, metro_config(shanghai(), 77));
  EXPECT_EQ(ra.estimate, rb.estimate);
}

TEST(Trilateration, InvisibleTargetNeedsScan) {
  QuantizedProbe probe(shanghai(), FloorBucket{100}, 1000.0);
  AttackConfig c;  // continental anchors, 1 km coverage
  const AttackResult r = iterative_trilateration(probe, FloorBucket{100}, c);
  EXPECT_EQ(r.status, AttackStatus::NeedsScan);
}

TEST(Partition, ProbeCountFollowsHalvings) {
  // Halving continues while the half-width is at least the threshold.
  EXPECT_EQ(partition_probe_count(804.5, 25), 12);
  EXPECT_EQ(partition_probe_count(800, 25), 12);
  EXPECT_EQ(partition_probe_count(799, 25), 10);
  EXPECT_EQ(partition_probe_count(20, 25), 0);
}

TEST(Partition, TargetAtCenter) {
  BoxProbe probe(shanghai(), 804.5, 1609);
  const PartitionResult r = space_partition(probe, probe.quantizer(), shanghai(), 804.5, 25);
  EXPECT_LE(distance_m(r.point, shanghai()), 25.0 * std::sqrt(2.0));
  EXPECT_EQ(r.queries, partition_probe_count(804.5, 25));
}

TEST(Partition, BoxOracleAxisErrorWithinTwiceThreshold) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-804.5, 804.5);
  const LocalFrame f(shanghai());
  for (int i = 0; i < 100; ++i) {
    const GeoPoint target = f.to_geo({u(rng), u(rng)});
    BoxProbe probe(target, 804.5, 1609);
    const PartitionResult r = space_partition(probe, probe.quantizer(), shanghai(), 804.5, 25);
    const Vec2 e = f.to_local(r.point) - f.to_local(target);
    EXPECT_LE(std::abs(e.x), 50.0);
    EXPECT_LE(std::abs(e.y), 50.0);
    EXPECT_EQ(r.queries, 12);
    EXPECT_TRUE(r.reliable);
  }
}

struct BracketCheck : PartitionObserver {
  GeoPoint target;
  bool inside = true;
  void on_probe(const LocalFrame& frame, Vec2 c, double hx, double hy) override {
    const Vec2 t = frame.to_local(target);
    inside = inside && std::abs(t.x - c.x) <= hx + 1e-6 && std::abs(t.y - c.y) <= hy + 1e-6;
  }
};

TEST(Partition, TargetStaysBracketed) {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(-800, 800);
  const LocalFrame f(shanghai());
  for (int i = 0; i < 100; ++i) {
    BracketCheck obs;
    obs.target = f.to_geo({u(rng), u(rng)});
    BoxProbe probe(obs.target, 804.5, 1609);
    space_partition(probe, probe.quantizer(), shanghai(), 804.5, 25, &obs);
    EXPECT_TRUE(obs.inside) << i;
  }
}

TEST(Partition, TargetOutsideBoxIsUnreliable) {
  const GeoPoint target = offset_m(shanghai(), 20'000, 0);
  QuantizedProbe probe(target, MinThenStep{804.5, 1609});
  const auto r = space_partition(probe, MinThenStep{804.5, 1609}, shanghai(), 804.5, 25);
  EXPECT_FALSE(r.reliable);
}

GeoRect rect_km(const GeoPoint& sw, double east_km, double north_km) {
  return GeoRect{sw, offset_m(sw, east_km * 1000, north_km * 1000)};
}

TEST(Scan, DenseWorstCaseWithin28Probes) {
  const GeoRect region = rect_km(shanghai(), 7, 4);
  const auto plan = scan_plan(region, 1000, nullptr, 0);
  EXPECT_LE(plan.size(), 28u);
  // Target in the last cell's far corner is still found.
  QuantizedProbe probe(offset_m(region.north_east, -1, -1), FloorBucket{100}, 1000.0);
  const ScanResult r = scan(probe, region, 1000, nullptr, 0);
  ASSERT_TRUE(r.found.has_value());
  EXPECT_LE(r.probes, 28);
}

TEST(Scan, SparseDowntownWithinFiveProbes) {
  const GeoRect region{shanghai(), offset_m(shanghai(), 20'000, 20'000)};
  EXPECT_LE(scan_plan(region, 10'000, nullptr, 0).size(), 5u);
}

TEST(Scan, PopularCellFirst) {
  const GeoRect region = rect_km(shanghai(), 7, 4);
  const GridSpec g = GridSpec::uniform(region.south_west, 1000);
  PopularityMap pop;
  pop.set({3, 2, 0}, 20, 500);
  pop.set({1, 1, 0}, 20, 100);
  const Seconds t = 20 * 3600 + 60;
  QuantizedProbe probe(cell_center({3, 2, 0}, g), FloorBucket{100}, 1000.0);
  const ScanResult r = scan(probe, region, 1000, &pop, t);
  ASSERT_TRUE(r.found.has_value());
  EXPECT_EQ(r.probes, 1);
  const auto plan = scan_plan(region, 1000, &pop, t);
  EXPECT_EQ(plan[1].first, (CellIndex{1, 1, 0}));
  EXPECT_EQ(plan[2].first, (CellIndex{0, 0, 0}));
}

TEST(Scan, ExhaustedRegionIsNotFound) {
  const GeoRect region = rect_km(shanghai(), 2, 2);
  QuantizedProbe probe(offset_m(shanghai(), 50'000, 0), FloorBucket{100}, 1000.0);
  const ScanResult r = scan(probe, region, 1000, nullptr, 0);
  EXPECT_FALSE(r.found.has_value());
  EXPECT_EQ(r.probes, 4);
}

TEST(FullAttack, WechatLogsScanThenPartition) {
  Oracle o(OracleConfig{policy_preset("wechat-dense"), {}, 0.0, std::nullopt});
  const GeoRect region = rect_km(shanghai(), 7, 4);
  const GeoPoint target = offset_m(shanghai(), 3300, 2100);
  o.report_location("v", target, 0);
  OracleSession s(o, "atk", "v", {0, 40.0, OnRateLimit::Wait});
  AttackConfig c;
  c.scan_region = region;
  const AttackResult r = full_attack(s, o.policy(), c);
  ASSERT_TRUE(r.ok()) << r.detail;
  ASSERT_EQ(r.estimate.phase_log.size(), 2u);
  EXPECT_EQ(r.estimate.phase_log[0].phase, Phase::Scan);
  EXPECT_EQ(r.estimate.phase_log[1].phase, Phase::Partition);
  EXPECT_GT(r.estimate.phase_log[0].queries, 0);
  EXPECT_GT(r.estimate.phase_log[1].queries, 0);
  EXPECT_EQ(r.estimate.queries_used, o.total_queries("atk"));
  EXPECT_DOUBLE_EQ(r.estimate.wall_time_s, 40.0 * static_cast<double>(r.estimate.queries_used));
  EXPECT_LE(distance_m(r.estimate.point, target), 100.0);
}

TEST(FullAttack, MomoReachesFloor) {
  const GeoRect box = GeoRect::around(shanghai(), 15'000);
  int within = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    std::mt19937_64 rng(seed + 1000);
    const GeoPoint target = box.sample(rng);
    Oracle o(OracleConfig{policy_preset("momo"), {}, 0.0, std::nullopt});
    o.report_location("v", target, 0);
    OracleSession s(o, "atk", "v", {});
    const AttackResult r = full_attack(s, o.policy(), metro_config(shanghai(), seed));
    ASSERT_TRUE(r.ok());
    EXPECT_EQ(r.estimate.queries_used, o.total_queries("atk"));
    within += distance_m(r.estimate.point, target) <= 10.0 ? 1 : 0;
  }
  EXPECT_GE(within, 19);
}

TEST(FullAttack, RateLimitWaitResumesAndAbortFails) {
  const GeoRect region{shanghai(), offset_m(shanghai(), 12'000, 12'000)};
  const GeoPoint target = offset_m(shanghai(), 11'500, 11'500);
  ObfuscationPolicy p = policy_preset("wechat-dense");
  p.rate_limit = RateLimit{20, 3600, 7200};
  p.cache_ttl_s = 1'000'000;
  AttackConfig c;
  c.scan_region = region;
  {
    Oracle o(OracleConfig{p, {}, 0.0, std::nullopt});
    o.report_location("v", target, 0);
    OracleSession s(o, "atk", "v", {0, 1.0, OnRateLimit::Wait});
    const AttackResult r = full_attack(s, p, c);
    ASSERT_TRUE(r.ok()) << r.detail;
    EXPECT_GT(s.bans_hit(), 0);
    EXPECT_GT(s.now(), 0);
    EXPECT_EQ(r.estimate.queries_used, o.total_queries("atk"));
  }
  {
    Oracle o(OracleConfig{p, {}, 0.0, std::nullopt});
    o.report_location("v", target, 0);
    OracleSession s(o, "atk", "v", {0, 1.0, OnRateLimit::Abort});
    const AttackResult r = full_attack(s, p, c);
    EXPECT_EQ(r.status, AttackStatus::RateLimited);
    EXPECT_FALSE(r.estimate.phase_log.empty());
    EXPECT_EQ(r.estimate.queries_used, o.total_queries("atk"));
  }
}

TEST(FullAttack, MissingScanRegionFails) {
  Oracle o(OracleConfig{policy_preset("wechat-dense"), {}, 0.0, std::nullopt});
  o.report_location("v", shanghai(), 0);
  OracleSession s(o, "atk", "v", {});
  const AttackResult r = full_attack(s, o.policy(), AttackConfig{});
  EXPECT_EQ(r.status, AttackStatus::NotFound);
}

TEST(Config, ValidationRejectsBadKnobs) {
  AttackConfig c;
  c.trilateration_threshold_m = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = AttackConfig{};
  c.initial_anchor_box = GeoRect{{10, 10}, {5, 20}};
  EXPECT_THROW(c.validate(), ConfigError);
}

}  // namespace
}  // namespace lbsn
