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
#include <deque>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <variant>
#include <vector>

#include "lbsn/geo.hpp"

namespace lbsn {

/// Simulated time, whole seconds.
using Seconds = std::int64_t;

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// ---------------------------------------------------------------------------
// Quantizers
// ---------------------------------------------------------------------------

/// Identity display: the oracle leaks the true distance.
struct Exact {
  friend bool operator==(const Exact&, const Exact&) = default;
};
/// Nearest multiple of step, halves rounded up.
struct RoundNearest {
  double step_m;
  friend bool operator==(const RoundNearest&, const RoundNearest&) = default;
};
/// floor(d / step) * step.
struct FloorBucket {
  double step_m;
  friend bool operator==(const FloorBucket&, const FloorBucket&) = default;
};
/// min_m for d <= min_m, then min_m plus whole steps rounded up.
struct MinThenStep {
  double min_m;
  double step_m;
  friend bool operator==(const MinThenStep&, const MinThenStep&) = default;
};

using Quantizer = std::variant<Exact, RoundNearest, FloorBucket, MinThenStep>;

struct DisplayedDistance {
  double value_m = 0.0;
  bool at_floor = false;

  friend bool operator==(const DisplayedDistance&, const DisplayedDistance&) = default;
};

/// Closed hull [lo_m, hi_m] of the true distances that map to one reading.
struct Bucket {
  double lo_m = 0.0;
  double hi_m = 0.0;

  bool contains(double d) const { return d >= lo_m && d <= hi_m; }
  double midpoint() const { return 0.5 * (lo_m + hi_m); }
  double width() const { return hi_m - lo_m; }
};

namespace detail {
template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;
}  // namespace detail

/// Smallest value the quantizer can display.
inline double floor_value(const Quantizer& q) {
  return std::visit(detail::overloaded{
                        [](const MinThenStep& m) { return m.min_m; },
                        [](const auto&) { return 0.0; },
                    },
                    q);
}

inline DisplayedDistance quantize(double d, const Quantizer& q) {
  if (!(d >= 0.0)) throw std::invalid_argument("distance must be non-negative");
  const double v = std::visit(
      detail::overloaded{
          [&](const Exact&) { return d; },
          [&](const RoundNearest& r) { return std::floor(d / r.step_m + 0.5) * r.step_m; },
          [&](const FloorBucket& f) { return std::floor(d / f.step_m) * f.step_m; },
          [&](const MinThenStep& m) {
            if (d <= m.min_m) return m.min_m;
            return m.min_m + std::ceil((d - m.min_m) / m.step_m) * m.step_m;
          },
      },
      q);
  return DisplayedDistance{v, v == floor_value(q)};
}

/// Range of true distances consistent with a displayed reading.
inline Bucket preimage(const DisplayedDistance& shown, const Quantizer& q) {
  const double v = shown.value_m;
  return std::visit(
      detail::overloaded{
          [&](const Exact&) { return Bucket{v, v}; },
          [&](const RoundNearest& r) {
            return Bucket{std::max(0.0, v - r.step_m / 2), v + r.step_m / 2};
          },
          [&](const FloorBucket& f) { return Bucket{v, v + f.step_m}; },
          [&](const MinThenStep& m) {
            if (v <= m.min_m) return Bucket{0.0, m.min_m};
            return Bucket{v - m.step_m, v};
          },
      },
      q);
}

/// Quantization step, or 0 for the identity display.
inline double step_of(const Quantizer& q) {
  return std::visit(detail::overloaded{
                        [](const Exact&) { return 0.0; },
                        [](const auto& s) { return s.step_m; },
                    },
                    q);
}

// ---------------------------------------------------------------------------
// Policy
// ---------------------------------------------------------------------------

struct FixedCoverage {
  double radius_m;
};
/// Radius switches between dense_m and sparse_m at a user-density threshold.
struct DensityDependent {
  double dense_m;
  double sparse_m;
  double threshold_per_km2;
};
/// monostate means unlimited coverage.
using Coverage = std::variant<std::monostate, FixedCoverage, DensityDependent>;

struct RateLimit {
  int max_queries = 80;
  Seconds window_s = 3600;
  Seconds ban_s = 86'400;
};

struct ObfuscationPolicy {
  std::string name;
  Quantizer quantizer = Exact{};
  double min_display_m = 0.0;
  Coverage coverage;
  std::optional<std::size_t> max_nearby;
  Seconds cache_ttl_s = 86'400;
  std::optional<RateLimit> rate_limit;

  bool coverage_limited() const { return !std::holds_alternative<std::monostate>(coverage); }

  void validate() const {
    const double step = step_of(quantizer);
    if (!std::holds_alternative<Exact>(quantizer) && !(step > 0.0)) {
      throw ConfigError(name + ": quantizer step must be positive");
    }
    if (const auto* m = std::get_if<MinThenStep>(&quantizer); m && !(m->min_m >= 0.0)) {
      throw ConfigError(name + ": quantizer minimum must be non-negative");
    }
    if (!(min_display_m >= 0.0)) throw ConfigError(name + ": min_display_m must be >= 0");
    auto check_radius = [&](double r) {
      if (!(r > min_display_m)) {
        throw ConfigError(name + ": coverage must exceed min_display_m");
      }
    };
    std::visit(detail::overloaded{
                   [](std::monostate) {},
                   [&](const FixedCoverage& c) { check_radius(c.radius_m); },
                   [&](const DensityDependent& c) {
                     check_radius(c.dense_m);
                     check_radius(c.sparse_m);
                     if (!(c.threshold_per_km2 >= 0.0)) {
                       throw ConfigError(name + ": density threshold must be >= 0");
                     }
                   },
               },
               coverage);
    if (cache_ttl_s < 0) throw ConfigError(name + ": cache_ttl_s must be >= 0");
    if (rate_limit && (rate_limit->max_queries < 1 || rate_limit->window_s <= 0 ||
                       rate_limit->ban_s <= 0)) {
      throw ConfigError(name + ": invalid rate limit");
    }
  }
};

inline DisplayedDistance quantize(double d, const ObfuscationPolicy& policy) {
  return quantize(d, policy.quantizer);
}

/// Coverage radius in force at a given user density; nullopt means unlimited.
inline std::optional<double> effective_coverage(const ObfuscationPolicy& policy,
                                                double density_per_km2) {
  if (density_per_km2 < 0.0) throw std::invalid_argument("density must be >= 0");
  return std::visit(detail::overloaded{
                        [](std::monostate) -> std::optional<double> { return std::nullopt; },
                        [](const FixedCoverage& c) -> std::optional<double> {
                          return c.radius_m;
                        },
                        [&](const DensityDependent& c) -> std::optional<double> {
                          return density_per_km2 >= c.threshold_per_km2 ? c.dense_m
                                                                         : c.sparse_m;
                        },
                    },
                    policy.coverage);
}

/// Preset names: momo, skout, wechat, wechat-dense, wechat-sparse, exact.
inline ObfuscationPolicy policy_preset(const std::string& name) {
  ObfuscationPolicy p;
  p.name = name;
  if (name == "momo") {
    p.quantizer = RoundNearest{10.0};
    p.min_display_m = 10.0;
    p.cache_ttl_s = 86'400;
  } else if (name == "skout") {
    p.quantizer = MinThenStep{804.5, 1609.0};
    p.min_display_m = 804.5;
    p.cache_ttl_s = 86'400;
  } else if (name == "wechat" || name == "wechat-dense" || name == "wechat-sparse") {
    p.quantizer = FloorBucket{100.0};
    p.min_display_m = 100.0;
    p.rate_limit = RateLimit{};
    if (name == "wechat") {
      p.coverage = DensityDependent{1000.0, 10'000.0, 1000.0};
      p.cache_ttl_s = 1800;
    } else if (name == "wechat-dense") {
      p.coverage = FixedCoverage{1000.0};
      p.cache_ttl_s = 1800;
    } else {
      p.coverage = FixedCoverage{10'000.0};
      p.cache_ttl_s = 7200;
    }
  } else if (name == "exact") {
    p.quantizer = Exact{};
  } else {
    throw ConfigError("unknown policy profile: " + name);
  }
  p.validate();
  return p;
}

// ---------------------------------------------------------------------------
// Oracle
// ---------------------------------------------------------------------------

struct NotVisible {
  friend bool operator==(const NotVisible&, const NotVisible&) = default;
};
struct RateLimited {
  Seconds banned_until = 0;
  friend bool operator==(const RateLimited&, const RateLimited&) = default;
};

using QueryResult = std::variant<DisplayedDistance, NotVisible, RateLimited>;

struct NearbyEntry {
  std::string user_id;
  DisplayedDistance distance;
  friend bool operator==(const NearbyEntry&, const NearbyEntry&) = default;
};
using NearbyList = std::vector<NearbyEntry>;
using NearbyResult = std::variant<NearbyList, RateLimited>;

struct UserRecord {
  GeoPoint position;
  Seconds reported_at = 0;
  friend bool operator==(const UserRecord&, const UserRecord&) = default;
};

struct AccountRecord {
  std::deque<Seconds> ledger;  // accepted query times inside the window
  std::optional<Seconds> banned_until;
  std::int64_t total_queries = 0;
  std::int64_t bans = 0;
  friend bool operator==(const AccountRecord&, const AccountRecord&) = default;
};

struct OracleState {
  std::map<std::string, UserRecord> users;
  std::map<std::string, AccountRecord> accounts;
  Seconds clock = 0;
  friend bool operator==(const OracleState&, const OracleState&) = default;
};

/// Named rectangle carrying a user density, used for density-dependent coverage.
struct DensityRegion {
  std::string name;
  GeoPoint south_west;
  GeoPoint north_east;
  double users_per_km2 = 0.0;

  bool contains(const GeoPoint& p) const {
    return p.lat >= south_west.lat && p.lat <= north_east.lat && p.lon >= south_west.lon &&
           p.lon <= north_east.lon;
  }
};

struct OracleConfig {
  ObfuscationPolicy policy;
  std::vector<DensityRegion> regions;
  double default_density = 0.0;
  /// When set, both parties are snapped to cell centers of this uniform grid
  /// before distances are computed (grid reference system defense).
  std::optional<GridSpec> grid_reference;
};

/// The simulated LBSN server. Every public operation takes the internal lock,
/// so one instance can be shared across threads.
class Oracle {
 public:
  explicit Oracle(OracleConfig config) : config_(std::move(config)) {
    config_.policy.validate();
    if (config_.grid_reference) config_.grid_reference->validate();
  }

  const OracleConfig& config() const { return config_; }
  const ObfuscationPolicy& policy() const { return config_.policy; }

  void report_location(const std::string& user_id, const GeoPoint& p, Seconds t) {
    if (!is_valid(p)) throw GeoError("reported location is invalid");
    std::lock_guard lock(mu_);
    if (t < state_.clock) {
      throw std::invalid_argument("report time precedes oracle clock");
    }
    state_.clock = t;
    state_.users[user_id] = UserRecord{p, t};
  }

  QueryResult query_distance(const std::string& account_id, const GeoPoint& attacker_pos,
                             const std::string& target_id, Seconds t) {
    std::lock_guard lock(mu_);
    const Seconds now = advance(t);
    if (auto limited = admit(account_id, now)) return *limited;

    auto it = state_.users.find(target_id);
    if (it == state_.users.end() || !fresh(it->second, now)) return NotVisible{};
    const double d = displayed_basis(attacker_pos, it->second.position);
    if (auto cov = coverage_at(attacker_pos); cov && d > *cov) return NotVisible{};
    return quantize(d, config_.policy.quantizer);
  }

  NearbyResult query_nearby(const std::string& account_id, const GeoPoint& attacker_pos,
                            Seconds t) {
    std::lock_guard lock(mu_);
    const Seconds now = advance(t);
    if (auto limited = admit(account_id, now)) return *limited;

    const auto cov = coverage_at(attacker_pos);
    std::vector<std::tuple<double, std::string>> hits;
    for (const auto& [id, rec] : state_.users) {
      if (!fresh(rec, now)) continue;
      const double d = displayed_basis(attacker_pos, rec.position);
      if (cov && d > *cov) continue;
      hits.emplace_back(d, id);
    }
    std::sort(hits.begin(), hits.end());
    if (config_.policy.max_nearby && hits.size() > *config_.policy.max_nearby) {
      hits.resize(*config_.policy.max_nearby);
    }
    NearbyList out;
    out.reserve(hits.size());
    for (const auto& [d, id] : hits) {
      out.push_back(NearbyEntry{id, quantize(d, config_.policy.quantizer)});
    }
    return out;
  }

  double local_density(const GeoPoint& p) const {
    for (const auto& r : config_.regions) {
      if (r.contains(p)) return r.users_per_km2;
    }
    return config_.default_density;
  }

  std::optional<double> coverage_at(const GeoPoint& p) const {
    return effective_coverage(config_.policy, local_density(p));
  }

  /// Applies the grid reference system, if configured.
  GeoPoint protect(const GeoPoint& p) const {
    if (!config_.grid_reference) return p;
    return cell_center(cell_of(p, *config_.grid_reference), *config_.grid_reference);
  }

  std::int64_t total_queries(const std::string& account_id) const {
    std::lock_guard lock(mu_);
    auto it = state_.accounts.find(account_id);
    return it == state_.accounts.end() ? 0 : it->second.total_queries;
  }

  /// Copy of the state with every ledger pruned to the current window and
  /// expired bans dropped.
  OracleState snapshot() const {
    std::lock_guard lock(mu_);
    OracleState s = state_;
    for (auto& [id, acc] : s.accounts) prune(acc, s.clock);
    return s;
  }

 private:
  Seconds advance(Seconds t) {
    state_.clock = std::max(state_.clock, t);
    return state_.clock;
  }

  bool fresh(const UserRecord& rec, Seconds now) const {
    return now - rec.reported_at <= config_.policy.cache_ttl_s;
  }

  double displayed_basis(const GeoPoint& a, const GeoPoint& b) const {
    return distance_m(protect(a), protect(b));
  }

  void prune(AccountRecord& acc, Seconds now) const {
    if (acc.banned_until && *acc.banned_until <= now) acc.banned_until.reset();
    if (!config_.policy.rate_limit) return;
    const Seconds horizon = now - config_.policy.rate_limit->window_s;
    while (!acc.ledger.empty() && acc.ledger.front() <= horizon) acc.ledger.pop_front();
  }

  // Charges one query to the account; returns the rejection if it is or
  // becomes banned.
  std::optional<RateLimited> admit(const std::string& account_id, Seconds now) {
    auto& acc = state_.accounts[account_id];
    ++acc.total_queries;
    prune(acc, now);
    if (acc.banned_until) return RateLimited{*acc.banned_until};
    const auto& limit = config_.policy.rate_limit;
    if (!limit) return std::nullopt;
    acc.ledger.push_back(now);
    if (acc.ledger.size() > static_cast<std::size_t>(limit->max_queries)) {
      acc.ledger.clear();
      acc.banned_until = now + limit->ban_s;
      ++acc.bans;
      return RateLimited{*acc.banned_until};
    }
    return std::nullopt;
  }

  OracleConfig config_;
  mutable std::mutex mu_;
  OracleState state_;
};

}  // namespace lbsn
