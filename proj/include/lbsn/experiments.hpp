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
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <future>
#include <json.hpp>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "lbsn/attacker.hpp"
#include "lbsn/geo.hpp"
#include "lbsn/metrics.hpp"
#include "lbsn/mitigation.hpp"
#include "lbsn/mobility.hpp"
#include "lbsn/oracle.hpp"

namespace lbsn {

inline constexpr Seconds kDefaultAttackIntervalS = 2400;
inline constexpr Seconds kSecondsPerWeek = 7 * kSecondsPerDay;
inline constexpr std::size_t kMaxTopN = 5;

/// Independent stream seed derived from a base seed and stream labels.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

// ---------------------------------------------------------------------------
// Scenario
// ---------------------------------------------------------------------------

struct SynthSpec {
  std::vector<MobilityAnchor> anchors;
  int days = 21;
  Seconds cadence_s = kDefaultTraceCadenceS;
};

struct VictimSpec {
  std::string id;
  std::variant<GeoPoint, Trace, SynthSpec> source;
  UsagePattern usage;
};

struct MitigationSpec {
  std::vector<double> sizes{200.0, 400.0, 600.0, 800.0, 1000.0};
  double top_cell_m = 1000.0;
  std::size_t top_n = 2;
  double dist_max_m = 1000.0;
  AnnulusSampler anchors;
  int attack_runs = 20;
  double target_half_m = 5000.0;  // victims drawn in this square around the grid origin
  double anchor_half_m = 15'000.0;
};

struct Scenario {
  std::uint64_t seed = 0;
  ObfuscationPolicy policy;
  std::vector<DensityRegion> regions;
  double default_density = 0.0;
  std::optional<double> grid_reference_m;
  std::optional<GeoPoint> grid_origin;
  std::vector<VictimSpec> victims;
  AttackConfig attack;
  double latency_s = 1.0;
  Seconds attack_interval_s = kDefaultAttackIntervalS;
  OnRateLimit on_rate_limit = OnRateLimit::Wait;
  std::optional<PopularityMap> popularity;
  Seconds start_t = 0;
  Seconds duration_s = 21 * kSecondsPerDay;
  double metric_cell_m = kDefaultLocationCellM;
  MitigationSpec mitigation;
  std::string outputs = "out";
};

namespace scenario_json {

using nlohmann::json;

inline GeoPoint point(const json& j) {
  if (!j.is_object()) throw ConfigError("point must be an object {lat, lon}");
  return GeoPoint::at(j.at("lat").get<double>(), j.at("lon").get<double>());
}

inline GeoRect rect(const json& j) {
  GeoRect r{point(j.at("south_west")), point(j.at("north_east"))};
  r.validate();
  return r;
}

inline Quantizer quantizer(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "exact") return Exact{};
  if (kind == "round") return RoundNearest{j.at("step_m").get<double>()};
  if (kind == "floor") return FloorBucket{j.at("step_m").get<double>()};
  if (kind == "min_then_step") {
    return MinThenStep{j.at("min_m").get<double>(), j.at("step_m").get<double>()};
  }
  throw ConfigError("unknown quantizer kind: " + kind);
}

inline Coverage coverage(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "unlimited") return std::monostate{};
  if (kind == "fixed") return FixedCoverage{j.at("radius_m").get<double>()};
  if (kind == "density") {
    return DensityDependent{j.at("dense_m").get<double>(), j.at("sparse_m").get<double>(),
                            j.at("threshold_per_km2").get<double>()};
  }
  throw ConfigError("unknown coverage kind: " + kind);
}

inline ObfuscationPolicy policy(const json& j) {
  if (j.is_string()) return policy_preset(j.get<std::string>());
  ObfuscationPolicy p = j.contains("preset") ? policy_preset(j.at("preset").get<std::string>())
                                             : ObfuscationPolicy{};
  p.name = j.value("name", p.name.empty() ? std::string("custom") : p.name);
  if (j.contains("quantizer")) p.quantizer = quantizer(j.at("quantizer"));
  p.min_display_m = j.value("min_display_m", p.min_display_m);
  if (j.contains("coverage")) p.coverage = coverage(j.at("coverage"));
  if (j.contains("max_nearby")) p.max_nearby = j.at("max_nearby").get<std::size_t>();
  p.cache_ttl_s = j.value("cache_ttl_s", p.cache_ttl_s);
  if (j.contains("rate_limit")) {
    const auto& r = j.at("rate_limit");
    if (r.is_null()) {
      p.rate_limit.reset();
    } else {
      RateLimit rl;
      rl.max_queries = r.value("max_queries", rl.max_queries);
      rl.window_s = r.value("window_s", rl.window_s);
      rl.ban_s = r.value("ban_s", rl.ban_s);
      p.rate_limit = rl;
    }
  }
  p.validate();
  return p;
}

inline UsagePattern usage(const json& j) {
  UsagePattern u;
  u.report_interval_s = j.value("report_interval_s", u.report_interval_s);
  u.report_prob = j.value("report_prob", u.report_prob);
  u.active_start_h = j.value("active_start_h", u.active_start_h);
  u.active_end_h = j.value("active_end_h", u.active_end_h);
  u.validate();
  return u;
}

inline SynthSpec synth(const json& j) {
  SynthSpec s;
  s.days = j.value("days", s.days);
  s.cadence_s = j.value("cadence_s", s.cadence_s);
  for (const auto& a : j.at("anchors")) {
    MobilityAnchor m;
    m.point = point(a);
    m.weight = a.value("weight", 1.0);
    m.dwell.mean_dwell_s = a.value("mean_dwell_s", m.dwell.mean_dwell_s);
    m.dwell.jitter_m = a.value("jitter_m", m.dwell.jitter_m);
    s.anchors.push_back(m);
  }
  return s;
}

inline std::string resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return (path.is_absolute() ? path : base / path).string();
}

}  // namespace scenario_json

/// Parses a scenario document. Relative file references resolve against
/// base_dir.
inline Scenario parse_scenario(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  namespace sj = scenario_json;
  try {
    Scenario s;
    if (!j.contains("seed")) throw ConfigError("scenario needs a seed");
    s.seed = j.at("seed").get<std::uint64_t>();
    s.policy = sj::policy(j.at("policy"));
    for (const auto& r : j.value("regions", nlohmann::json::array())) {
      const GeoRect box = sj::rect(r);
      s.regions.push_back(DensityRegion{r.value("name", std::string()), box.south_west,
                                        box.north_east, r.at("users_per_km2").get<double>()});
    }
    s.default_density = j.value("default_density", 0.0);
    if (j.contains("grid_reference_m")) s.grid_reference_m = j.at("grid_reference_m").get<double>();
    if (j.contains("grid_origin")) s.grid_origin = sj::point(j.at("grid_origin"));
    s.start_t = j.value("start_t", s.start_t);
    s.duration_s = j.value("duration_s", s.duration_s);
    if (s.duration_s <= 0) throw ConfigError("duration_s must be positive");
    s.metric_cell_m = j.value("metric_cell_m", s.metric_cell_m);
    if (!(s.metric_cell_m > 0.0)) throw ConfigError("metric_cell_m must be positive");
    s.outputs = j.value("outputs", s.outputs);

    for (const auto& v : j.value("victims", nlohmann::json::array())) {
      VictimSpec vs;
      vs.id = v.at("id").get<std::string>();
      if (v.contains("usage")) vs.usage = sj::usage(v.at("usage"));
      if (v.contains("static")) {
        vs.source = sj::point(v.at("static"));
      } else if (v.contains("trace")) {
        const std::string path = sj::resolve(base_dir, v.at("trace").get<std::string>());
        if (!std::filesystem::exists(path)) throw ConfigError("trace file not found: " + path);
        Trace tr = load_trace(path);
        tr.user_id = vs.id;
        vs.source = std::move(tr);
      } else if (v.contains("synth")) {
        vs.source = sj::synth(v.at("synth"));
      } else {
        throw ConfigError("victim " + vs.id + " needs static, trace or synth");
      }
      s.victims.push_back(std::move(vs));
    }

    const auto a = j.value("attack", nlohmann::json::object());
    AttackConfig& c = s.attack;
    c.trilateration_threshold_m = a.value("trilateration_threshold_m", c.trilateration_threshold_m);
    c.partition_threshold_m = a.value("partition_threshold_m", c.partition_threshold_m);
    if (a.contains("scan_region")) c.scan_region = sj::rect(a.at("scan_region"));
    c.scan_spacing_m = a.value("scan_spacing_m", c.scan_spacing_m);
    if (a.contains("anchor_box")) c.initial_anchor_box = sj::rect(a.at("anchor_box"));
    for (const auto& p : a.value("initial_anchors", nlohmann::json::array())) {
      c.initial_anchors.push_back(sj::point(p));
    }
    c.max_rounds = a.value("max_rounds", c.max_rounds);
    c.max_partition_passes = a.value("max_partition_passes", c.max_partition_passes);
    c.validate();
    s.latency_s = a.value("latency_s", s.latency_s);
    if (!(s.latency_s >= 0.0)) throw ConfigError("latency_s must be >= 0");
    s.attack_interval_s = a.value("interval_s", s.attack_interval_s);
    if (s.attack_interval_s <= 0) throw ConfigError("attack interval must be positive");
    const std::string orl = a.value("on_rate_limit", std::string("wait"));
    if (orl == "wait") {
      s.on_rate_limit = OnRateLimit::Wait;
    } else if (orl == "abort") {
      s.on_rate_limit = OnRateLimit::Abort;
    } else {
      throw ConfigError("on_rate_limit must be wait or abort");
    }
    if (a.contains("popularity")) {
      const std::string path = sj::resolve(base_dir, a.at("popularity").get<std::string>());
      if (!std::filesystem::exists(path)) throw ConfigError("popularity file not found: " + path);
      s.popularity = load_popularity(path);
    }

    if (j.contains("mitigation")) {
      const auto& m = j.at("mitigation");
      MitigationSpec& ms = s.mitigation;
      if (m.contains("sizes")) ms.sizes = m.at("sizes").get<std::vector<double>>();
      ms.top_cell_m = m.value("top_cell_m", ms.top_cell_m);
      ms.top_n = m.value("top_n", ms.top_n);
      ms.dist_max_m = m.value("dist_max_m", ms.dist_max_m);
      ms.anchors.inner_m = m.value("anchor_inner_m", ms.anchors.inner_m);
      ms.anchors.outer_m = m.value("anchor_outer_m", ms.anchors.outer_m);
      ms.anchors.count = m.value("anchors_per_point", ms.anchors.count);
      ms.attack_runs = m.value("attack_runs", ms.attack_runs);
      ms.target_half_m = m.value("target_half_m", ms.target_half_m);
      ms.anchor_half_m = m.value("anchor_half_m", ms.anchor_half_m);
      if (ms.sizes.empty() || ms.top_n < 1 || ms.attack_runs < 0 || ms.anchors.count < 1 ||
          !(ms.anchors.outer_m > ms.anchors.inner_m) || !(ms.anchors.inner_m >= 0.0)) {
        throw ConfigError("invalid mitigation block");
      }
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("scenario: ") + e.what());
  } catch (const ParseError& e) {
    throw ConfigError(e.what());
  }
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("scenario " + path + ": " + e.what());
  }
  return parse_scenario(j, std::filesystem::path(path).parent_path());
}

/// Ground-truth trace of victim i (synthetic victims are generated here).
inline Trace victim_trace(const Scenario& s, std::size_t i) {
  const VictimSpec& v = s.victims.at(i);
  return std::visit(
      detail::overloaded{
          [&](const GeoPoint& p) { return Trace{v.id, {TracePoint{s.start_t, p}}}; },
          [&](const Trace& t) { return t; },
          [&](const SynthSpec& sp) {
            SynthesisOptions opt{v.id, s.start_t, sp.cadence_s};
            return synthesize_trace(derive_seed(s.seed, 0x7261ce, i), sp.days, sp.anchors, opt);
          },
      },
      v.source);
}

inline OracleConfig oracle_config(const Scenario& s) {
  OracleConfig c{s.policy, s.regions, s.default_density, std::nullopt};
  if (s.grid_reference_m) {
    if (!s.grid_origin) throw ConfigError("grid_reference_m needs grid_origin");
    c.grid_reference = GridSpec::uniform(*s.grid_origin, *s.grid_reference_m);
  }
  return c;
}

/// Grid for location metrics: the scenario origin, or 1 km south-west of
/// the first truth fix.
inline GridSpec metric_grid(const Scenario& s, const std::vector<Trace>& truths) {
  GeoPoint origin;
  if (s.grid_origin) {
    origin = *s.grid_origin;
  } else {
    for (const auto& t : truths) {
      if (!t.empty()) {
        origin = detail::shift(t.points.front().p, -1000.0, -1000.0);
        break;
      }
    }
  }
  return GridSpec::uniform(origin, s.metric_cell_m);
}

// ---------------------------------------------------------------------------
// attack
// ---------------------------------------------------------------------------

struct AttackReport {
  AttackResult result;
  GeoPoint truth;
  double error_m = 0.0;
  std::int64_t ledger_queries = 0;
  nlohmann::ordered_json json;
  int exit_code = 0;
};

inline nlohmann::ordered_json point_json(const GeoPoint& p) {
  nlohmann::ordered_json j;
  j["lat"] = p.lat;
  j["lon"] = p.lon;
  return j;
}

/// Single synchronous attack: the victim reports once at start_t and the
/// attack launches immediately.
inline AttackReport cmd_attack(const Scenario& s) {
  if (s.victims.empty()) throw ConfigError("attack needs a victim");
  const Trace truth = victim_trace(s, 0);
  if (truth.empty()) throw ConfigError("victim has no location");
  AttackReport rep;
  rep.truth = position_at(truth, s.start_t).value_or(truth.points.front().p);

  Oracle oracle(oracle_config(s));
  const std::string& victim = s.victims[0].id;
  oracle.report_location(victim, rep.truth, s.start_t);
  OracleSession session(oracle, "attacker", victim,
                        {s.start_t, s.latency_s, s.on_rate_limit});
  AttackConfig cfg = s.attack;
  cfg.seed = derive_seed(s.seed, 0xa77ac);
  rep.result = full_attack(session, s.policy, cfg, s.popularity ? &*s.popularity : nullptr);
  rep.ledger_queries = oracle.total_queries("attacker");
  const Estimate& e = rep.result.estimate;

  auto& j = rep.json;
  j["policy"] = s.policy.name;
  j["seed"] = s.seed;
  j["status"] = to_string(rep.result.status);
  if (!rep.result.detail.empty()) j["detail"] = rep.result.detail;
  j["truth"] = point_json(rep.truth);
  if (rep.result.ok()) {
    rep.error_m = distance_m(e.point, rep.truth);
    j["estimate"] = point_json(e.point);
    j["estimate"]["bound_m"] = e.bound_m;
    j["estimate"]["converged"] = e.converged;
    j["estimate"]["reliable"] = e.reliable;
    j["error_m"] = rep.error_m;
  } else {
    j["estimate"] = nullptr;
    j["error_m"] = nullptr;
  }
  nlohmann::ordered_json phases = nlohmann::ordered_json::array();
  for (const auto& pc : e.phase_log) {
    nlohmann::ordered_json p;
    p["phase"] = to_string(pc.phase);
    p["queries"] = pc.queries;
    phases.push_back(p);
  }
  j["queries_by_phase"] = phases;
  j["queries_total"] = session.queries();
  j["ledger_queries"] = rep.ledger_queries;
  j["rounds"] = e.wall_rounds;
  j["bans_hit"] = session.bans_hit();
  j["simulated_wall_time_s"] = e.wall_time_s;
  rep.exit_code = rep.result.ok() ? 0 : 2;
  return rep;
}

// ---------------------------------------------------------------------------
// track
// ---------------------------------------------------------------------------

struct LaunchRecord {
  std::string victim;
  std::int64_t index = 0;
  Seconds t = 0;
  AttackStatus status = AttackStatus::Ok;
  std::optional<GeoPoint> estimate;
  std::int64_t queries = 0;
};

struct TnrRow {
  int weeks = 0;
  Seconds cut_s = 0;
  std::array<double, kMaxTopN> tnr{};  // N = 1..5
  UsageRatio entropy;
};

struct VictimTrack {
  std::string id;
  Trace truth;
  InferredTrace inferred;
  std::vector<LaunchRecord> launches;
  std::vector<double> errors;
  std::vector<TnrRow> table;
  std::int64_t queries = 0;
  std::int64_t ledger_queries = 0;
};

struct TrackReport {
  std::vector<VictimTrack> victims;
  nlohmann::ordered_json json;
};

/// Week cuts for the coverage table: 1, 2 and 3 weeks, limited to the
/// campaign length (a single cut at the end for campaigns under a week).
inline std::vector<std::pair<int, Seconds>> week_cuts(Seconds duration_s) {
  std::vector<std::pair<int, Seconds>> cuts;
  for (int w = 1; w <= 3; ++w) {
    if (w * kSecondsPerWeek <= duration_s) cuts.emplace_back(w, w * kSecondsPerWeek);
  }
  if (cuts.empty()) cuts.emplace_back(0, duration_s);
  return cuts;
}

inline VictimTrack track_victim(const Scenario& s, std::size_t vi, const GridSpec& grid) {
  VictimTrack vt;
  vt.id = s.victims[vi].id;
  vt.truth = victim_trace(s, vi);
  vt.inferred.user_id = vt.id;
  const Seconds end = s.start_t + s.duration_s;

  Oracle oracle(oracle_config(s));
  const std::map<std::string, UsagePattern> patterns{{vt.id, s.victims[vi].usage}};
  const auto reports =
      plan_reports({vt.truth}, patterns, s.start_t, end, derive_seed(s.seed, 0x5e90, vi));
  const std::string account = "attacker-" + vt.id;
  const PopularityMap* pop = s.popularity ? &*s.popularity : nullptr;

  std::size_t next_report = 0;
  std::int64_t k = 0;
  for (Seconds t = s.start_t; t < end; t += s.attack_interval_s, ++k) {
    while (next_report < reports.size() && reports[next_report].t <= t) {
      const auto& ev = reports[next_report++];
      oracle.report_location(ev.user_id, ev.p, ev.t);
    }
    OracleSession session(oracle, account, vt.id, {t, s.latency_s, OnRateLimit::Abort});
    AttackConfig cfg = s.attack;
    cfg.seed = derive_seed(s.seed, vi, static_cast<std::uint64_t>(k) + 1);
    const AttackResult r = full_attack(session, s.policy, cfg, pop);
    LaunchRecord rec{vt.id, k, t, r.status, std::nullopt, session.queries()};
    if (r.ok()) {
      rec.estimate = r.estimate.point;
      vt.inferred.points.push_back(TracePoint{t, r.estimate.point});
    }
    vt.queries += session.queries();
    vt.launches.push_back(rec);
  }
  vt.ledger_queries = oracle.total_queries(account);

  if (!vt.inferred.empty() && !vt.truth.empty()) {
    vt.errors = tracking_error_series(vt.inferred, vt.truth);
  }
  for (const auto& [weeks, cut] : week_cuts(s.duration_s)) {
    TnrRow row{weeks, cut, {}, {}};
    const Trace truth = slice(vt.truth, s.start_t, s.start_t + cut);
    const Trace inferred = slice(vt.inferred, s.start_t, s.start_t + cut);
    for (std::size_t n = 1; n <= kMaxTopN; ++n) row.tnr[n - 1] = tnr(truth, inferred, n, grid);
    if (!truth.empty()) row.entropy.h_truth = location_entropy(truth, grid);
    if (!inferred.empty()) row.entropy.h_inferred = location_entropy(inferred, grid);
    if (row.entropy.h_inferred > 0.0) {
      row.entropy.ratio = row.entropy.h_truth / row.entropy.h_inferred;
    }
    vt.table.push_back(row);
  }
  return vt;
}

/// Periodic tracking campaign. Victims run concurrently on independent
/// oracles; results are merged in victim order.
inline TrackReport cmd_track(const Scenario& s) {
  if (s.victims.empty()) throw ConfigError("track needs at least one victim");
  std::vector<Trace> truths;
  for (std::size_t i = 0; i < s.victims.size(); ++i) truths.push_back(victim_trace(s, i));
  const GridSpec grid = metric_grid(s, truths);

  std::vector<std::future<VictimTrack>> jobs;
  for (std::size_t i = 0; i < s.victims.size(); ++i) {
    jobs.push_back(std::async(std::launch::async, [&s, &grid, i] { return track_victim(s, i, grid); }));
  }
  TrackReport rep;
  for (auto& f : jobs) rep.victims.push_back(f.get());

  auto& j = rep.json;
  j["policy"] = s.policy.name;
  j["seed"] = s.seed;
  j["attack_interval_s"] = s.attack_interval_s;
  j["duration_s"] = s.duration_s;
  j["metric_cell_m"] = s.metric_cell_m;
  nlohmann::ordered_json vs = nlohmann::ordered_json::array();
  for (const auto& vt : rep.victims) {
    nlohmann::ordered_json v;
    v["id"] = vt.id;
    v["launches"] = vt.launches.size();
    std::map<std::string, std::int64_t> by_status;
    for (const auto& l : vt.launches) ++by_status[to_string(l.status)];
    v["launches_by_status"] = by_status;
    v["queries_total"] = vt.queries;
    v["ledger_queries"] = vt.ledger_queries;
    const ErrorSummary es = summarize_errors(vt.errors);
    v["error_mean_m"] = vt.errors.empty() ? nlohmann::ordered_json() : nlohmann::ordered_json(es.mean);
    v["error_median_m"] =
        vt.errors.empty() ? nlohmann::ordered_json() : nlohmann::ordered_json(es.median);
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const auto& row : vt.table) {
      nlohmann::ordered_json r;
      r["weeks"] = row.weeks;
      r["tnr"] = row.tnr;
      r["h_truth"] = row.entropy.h_truth;
      r["h_inferred"] = row.entropy.h_inferred;
      r["usage_ratio"] =
          row.entropy.ratio ? nlohmann::ordered_json(*row.entropy.ratio) : nlohmann::ordered_json();
      rows.push_back(r);
    }
    v["table"] = rows;
    vs.push_back(v);
  }
  j["victims"] = vs;
  return rep;
}

// ---------------------------------------------------------------------------
// mitigate
// ---------------------------------------------------------------------------

struct DegradationPoint {
  double cell_size_m = 0.0;
  double median_error_m = 0.0;
  int runs = 0;
  int failures = 0;
};

struct MitigationReport {
  std::vector<TradeoffPoint> uniform;
  std::vector<TradeoffPoint> classified;
  std::vector<DegradationPoint> degradation;
  bool privacy_increasing = false;
  bool utility_non_increasing = false;
  int dominance = 0;
  nlohmann::ordered_json json;
};

inline bool privacy_strictly_increasing(const std::vector<TradeoffPoint>& c) {
  for (std::size_t i = 1; i < c.size(); ++i) {
    if (!(c[i].mean_privacy_m > c[i - 1].mean_privacy_m)) return false;
  }
  return true;
}

inline bool utility_non_increasing(const std::vector<TradeoffPoint>& c) {
  for (std::size_t i = 1; i < c.size(); ++i) {
    if (c[i].mean_utility > c[i - 1].mean_utility) return false;
  }
  return true;
}

/// Classified points whose utility is at least the uniform curve's utility
/// at the same mean privacy.
inline int dominance_count(const std::vector<TradeoffPoint>& uniform,
                           const std::vector<TradeoffPoint>& classified) {
  int n = 0;
  for (const auto& p : classified) {
    n += p.mean_utility >= utility_at_privacy(uniform, p.mean_privacy_m) ? 1 : 0;
  }
  return n;
}

inline double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Attacks against an oracle protected by a uniform grid of the given size.
inline DegradationPoint attack_degradation(const Scenario& s, const GeoPoint& origin,
                                           double cell_size_m) {
  DegradationPoint d{cell_size_m, 0.0, s.mitigation.attack_runs, 0};
  std::vector<double> errors;
  const GeoRect targets = GeoRect::around(origin, s.mitigation.target_half_m);
  for (int r = 0; r < s.mitigation.attack_runs; ++r) {
    std::mt19937_64 rng(derive_seed(s.seed, 0x9a5, static_cast<std::uint64_t>(r)));
    const GeoPoint target = targets.sample(rng);
    OracleConfig oc = oracle_config(s);
    oc.grid_reference = GridSpec::uniform(origin, cell_size_m);
    Oracle oracle(oc);
    oracle.report_location("victim", target, s.start_t);
    OracleSession session(oracle, "attacker", "victim", {s.start_t, s.latency_s, s.on_rate_limit});
    AttackConfig cfg = s.attack;
    cfg.initial_anchor_box = GeoRect::around(origin, s.mitigation.anchor_half_m);
    cfg.initial_anchors.clear();
    if (s.policy.coverage_limited() && !cfg.scan_region) {
      cfg.scan_region = GeoRect::around(origin, s.mitigation.anchor_half_m);
    }
    cfg.seed = derive_seed(s.seed, 0xa77ac, static_cast<std::uint64_t>(r));
    const AttackResult res = full_attack(session, s.policy, cfg);
    if (res.ok()) {
      errors.push_back(distance_m(res.estimate.point, target));
    } else {
      ++d.failures;
    }
  }
  d.median_error_m = median_of(errors);
  return d;
}

inline MitigationReport cmd_mitigate(const Scenario& s) {
  if (s.victims.empty()) throw ConfigError("mitigate needs victim traces");
  std::vector<Trace> traces;
  for (std::size_t i = 0; i < s.victims.size(); ++i) {
    Trace t = victim_trace(s, i);
    traces.push_back(slice(t, s.start_t, s.start_t + s.duration_s));
  }
  const GeoPoint origin = s.grid_origin ? *s.grid_origin : metric_grid(s, traces).origin;
  const MitigationSpec& m = s.mitigation;
  TradeoffOptions opt;
  opt.origin = origin;
  opt.anchors = m.anchors;
  opt.dist_max_m = m.dist_max_m;
  opt.display = s.policy.quantizer;
  opt.top_cell_m = m.top_cell_m;
  opt.top_n = m.top_n;
  opt.seed = derive_seed(s.seed, 0x7ade);

  MitigationReport rep;
  rep.uniform = tradeoff_curve(traces, GridMode::Uniform, m.sizes, opt);
  rep.classified = tradeoff_curve(traces, GridMode::Classified, m.sizes, opt);
  rep.privacy_increasing = privacy_strictly_increasing(rep.uniform);
  rep.utility_non_increasing = utility_non_increasing(rep.uniform);
  rep.dominance = dominance_count(rep.uniform, rep.classified);
  for (const auto& p : rep.uniform) {
    if (m.attack_runs > 0) rep.degradation.push_back(attack_degradation(s, origin, p.cell_size_m));
  }

  auto& j = rep.json;
  j["policy"] = s.policy.name;
  j["seed"] = s.seed;
  j["privacy_strictly_increasing"] = rep.privacy_increasing;
  j["utility_non_increasing"] = rep.utility_non_increasing;
  j["classified_dominates"] = rep.dominance;
  j["sweep_points"] = rep.classified.size();
  nlohmann::ordered_json deg = nlohmann::ordered_json::array();
  for (const auto& d : rep.degradation) {
    nlohmann::ordered_json x;
    x["cell_size_m"] = d.cell_size_m;
    x["median_error_m"] = d.median_error_m;
    x["runs"] = d.runs;
    x["failures"] = d.failures;
    x["meets_quarter_cell"] = d.median_error_m >= d.cell_size_m / 4;
    deg.push_back(x);
  }
  j["attack_degradation"] = deg;
  return rep;
}

// ---------------------------------------------------------------------------
// gen
// ---------------------------------------------------------------------------

/// Traces of every synthetic victim in the scenario.
inline std::vector<Trace> cmd_gen(const Scenario& s) {
  std::vector<Trace> out;
  for (std::size_t i = 0; i < s.victims.size(); ++i) {
    if (std::holds_alternative<SynthSpec>(s.victims[i].source)) out.push_back(victim_trace(s, i));
  }
  if (out.empty()) throw ConfigError("gen needs at least one synth victim");
  return out;
}

// ---------------------------------------------------------------------------
// Output files
// ---------------------------------------------------------------------------

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

inline void write_attack_outputs(const AttackReport& rep, const std::filesystem::path& dir) {
  write_text(dir / "attack_report.json", rep.json.dump(2) + "\n");
}

inline void write_track_outputs(const TrackReport& rep, const std::filesystem::path& dir) {
  std::vector<Trace> inferred;
  for (const auto& v : rep.victims) inferred.push_back(v.inferred);
  std::ostringstream traces;
  write_traces_csv(traces, inferred);
  write_text(dir / "inferred_traces.csv", traces.str());

  std::ostringstream errors;
  errors << "user_id,timestamp_unix_s,error_m\n";
  std::ostringstream launches;
  launches << "user_id,launch,timestamp_unix_s,status,queries\n";
  std::ostringstream table;
  table << "user_id,weeks,n,tnr\n";
  std::ostringstream entropy;
  entropy << "user_id,weeks,h_truth,h_inferred,usage_ratio\n";
  for (const auto& v : rep.victims) {
    for (std::size_t i = 0; i < v.errors.size(); ++i) {
      errors << v.id << ',' << v.inferred.points[i].t << ',' << detail::format_double(v.errors[i])
             << '\n';
    }
    for (const auto& l : v.launches) {
      launches << v.id << ',' << l.index << ',' << l.t << ',' << to_string(l.status) << ','
               << l.queries << '\n';
    }
    for (const auto& row : v.table) {
      for (std::size_t n = 1; n <= kMaxTopN; ++n) {
        table << v.id << ',' << row.weeks << ',' << n << ','
              << detail::format_double(row.tnr[n - 1]) << '\n';
      }
      entropy << v.id << ',' << row.weeks << ',' << detail::format_double(row.entropy.h_truth)
              << ',' << detail::format_double(row.entropy.h_inferred) << ','
              << (row.entropy.ratio ? detail::format_double(*row.entropy.ratio) : "") << '\n';
    }
  }
  write_text(dir / "tracking_errors.csv", errors.str());
  write_text(dir / "launches.csv", launches.str());
  write_text(dir / "tnr.csv", table.str());
  write_text(dir / "entropy.csv", entropy.str());
  write_text(dir / "track_report.json", rep.json.dump(2) + "\n");
}

inline std::string curve_csv(const MitigationReport& rep) {
  std::ostringstream out;
  out << "mode,cell_size_m,mean_privacy_m,mean_utility\n";
  for (const auto* curve : {&rep.uniform, &rep.classified}) {
    for (const auto& p : *curve) {
      out << to_string(p.mode) << ',' << detail::format_double(p.cell_size_m) << ','
          << detail::format_double(p.mean_privacy_m) << ','
          << detail::format_double(p.mean_utility) << '\n';
    }
  }
  return out.str();
}

inline void write_mitigation_outputs(const MitigationReport& rep, const std::filesystem::path& dir) {
  write_text(dir / "tradeoff_curve.csv", curve_csv(rep));
  std::ostringstream detail_csv;
  detail_csv << "mode,cell_size_m,top_privacy_m,clamped_samples\n";
  for (const auto* curve : {&rep.uniform, &rep.classified}) {
    for (const auto& p : *curve) {
      detail_csv << to_string(p.mode) << ',' << detail::format_double(p.cell_size_m) << ','
                 << detail::format_double(p.top_privacy_m) << ',' << p.clamped << '\n';
    }
  }
  write_text(dir / "tradeoff_detail.csv", detail_csv.str());
  write_text(dir / "mitigation_report.json", rep.json.dump(2) + "\n");
}

inline void write_gen_outputs(const std::vector<Trace>& traces, const std::filesystem::path& dir) {
  std::ostringstream out;
  write_traces_csv(out, traces);
  write_text(dir / "traces.csv", out.str());
}

}  // namespace lbsn
