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

#include <httplib.h>

#include <chrono>
#include <cstdint>
#include <json.hpp>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>

#include "lbsn/geo.hpp"
#include "lbsn/mobility.hpp"
#include "lbsn/oracle.hpp"

namespace lbsn {

inline constexpr int kSdkSuccessCode = 161;
inline constexpr const char* kSdkRadius = "70";

struct WireError {
  int code = kSdkSuccessCode;
  std::string message;
};

class ServiceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// SDK-shaped location payload
// ---------------------------------------------------------------------------

/// Location response in the captured SDK layout. Coordinates and time are
/// decimal strings; y carries latitude and x longitude.
inline std::string sdk_response(const GeoPoint& p, Seconds time_s,
                                const std::string& radius = kSdkRadius) {
  if (!is_valid(p)) throw GeoError("sdk_response needs a valid point");
  nlohmann::ordered_json j;
  j["content"]["addr"]["detail"] = "";
  j["content"]["bldg"] = "";
  j["content"]["floor"] = "";
  j["content"]["point"]["y"] = detail::format_double(p.lat);
  j["content"]["point"]["x"] = detail::format_double(p.lon);
  j["content"]["radius"] = radius;
  j["result"]["error"] = kSdkSuccessCode;
  j["result"]["time"] = std::to_string(time_s);
  return j.dump();
}

struct SdkLocation {
  GeoPoint point;
  std::string radius;
  WireError result;
  Seconds time_s = 0;
};

inline SdkLocation parse_sdk_response(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    SdkLocation out;
    const auto& pt = j.at("content").at("point");
    const auto lat = detail::parse_number<double>(pt.at("y").get<std::string>());
    const auto lon = detail::parse_number<double>(pt.at("x").get<std::string>());
    const auto time = detail::parse_number<Seconds>(j.at("result").at("time").get<std::string>());
    if (!lat || !lon || !time) throw ServiceError("malformed sdk response: bad number");
    out.point = GeoPoint::at(*lat, *lon);
    out.radius = j.at("content").at("radius").get<std::string>();
    out.result.code = j.at("result").at("error").get<int>();
    out.time_s = *time;
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw ServiceError(std::string("malformed sdk response: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// JSON encodings shared by server and client
// ---------------------------------------------------------------------------

namespace wire {

inline nlohmann::json to_json(const DisplayedDistance& d) {
  return {{"value_m", d.value_m}, {"at_floor", d.at_floor}};
}

inline DisplayedDistance distance_from_json(const nlohmann::json& j) {
  return DisplayedDistance{j.at("value_m").get<double>(), j.at("at_floor").get<bool>()};
}

inline nlohmann::json to_json(const AccountRecord& a) {
  nlohmann::json j{{"ledger", a.ledger},
                   {"total_queries", a.total_queries},
                   {"bans", a.bans},
                   {"banned_until", nullptr}};
  if (a.banned_until) j["banned_until"] = *a.banned_until;
  return j;
}

inline AccountRecord account_from_json(const nlohmann::json& j) {
  AccountRecord a;
  for (const auto& t : j.at("ledger")) a.ledger.push_back(t.get<Seconds>());
  a.total_queries = j.at("total_queries").get<std::int64_t>();
  a.bans = j.at("bans").get<std::int64_t>();
  if (!j.at("banned_until").is_null()) a.banned_until = j.at("banned_until").get<Seconds>();
  return a;
}

inline double number(const std::string& s, const char* what) {
  const auto v = detail::parse_number<double>(s);
  if (!v) throw std::invalid_argument(std::string("bad number for ") + what);
  return *v;
}

inline std::string param(const httplib::Request& req, const char* key) {
  if (!req.has_param(key)) throw std::invalid_argument(std::string("missing parameter ") + key);
  return req.get_param_value(key);
}

inline double number_param(const httplib::Request& req, const char* key) {
  return number(param(req, key), key);
}

inline Seconds seconds_param(const httplib::Request& req, const char* key) {
  const auto v = detail::parse_number<Seconds>(param(req, key));
  if (!v) throw std::invalid_argument(std::string("bad integer parameter ") + key);
  return *v;
}

inline void reply(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

}  // namespace wire

// ---------------------------------------------------------------------------
// Server
// ---------------------------------------------------------------------------

/// HTTP front end for an oracle. Endpoints:
///   POST /v1/report              {user_id, lat, lon, t}
///   GET  /v1/distance?account=&target=&lat=&lon=&t=
///   GET  /v1/nearby?account=&lat=&lon=&t=
///   GET  /v1/account?id=         ledger, bans and query count
///   GET  /v1/sdk?lat=&lon=&t=    SDK-shaped location payload
class OracleServer {
 public:
  explicit OracleServer(Oracle& oracle) : oracle_(oracle) {
    server_.set_tcp_nodelay(true);
    routes();
  }
  OracleServer(const OracleServer&) = delete;
  OracleServer& operator=(const OracleServer&) = delete;
  ~OracleServer() { stop(); }

  /// Binds and starts serving on a background thread. Port 0 picks a free
  /// port. Returns the bound port; throws when the address cannot be bound.
  int start(const std::string& host, int port) {
    if (thread_.joinable()) throw ServiceError("server already running");
    if (port == 0) {
      port_ = server_.bind_to_any_port(host);
    } else {
      port_ = server_.bind_to_port(host, port) ? port : -1;
    }
    if (port_ < 0) throw ServiceError("cannot bind " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port_;
  }

  /// Blocks serving on the calling thread.
  void run(const std::string& host, int port) {
    if (!server_.bind_to_port(host, port)) {
      throw ServiceError("cannot bind " + host + ":" + std::to_string(port));
    }
    port_ = port;
    server_.listen_after_bind();
  }

  /// Stops accepting and waits for in-flight requests to finish.
  void stop() {
    if (server_.is_running()) server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  int port() const { return port_; }
  httplib::Server& http() { return server_; }

 private:
  template <class F>
  static void guarded(httplib::Response& res, F&& f) {
    try {
      f();
    } catch (const std::exception& e) {
      wire::reply(res, 400, {{"error", "bad_request"}, {"message", e.what()}});
    }
  }

  void routes() {
    server_.Post("/v1/report", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto j = nlohmann::json::parse(req.body);
        const GeoPoint p = GeoPoint::at(j.at("lat").get<double>(), j.at("lon").get<double>());
        oracle_.report_location(j.at("user_id").get<std::string>(), p, j.at("t").get<Seconds>());
        wire::reply(res, 200, {{"ok", true}});
      });
    });
    server_.Get("/v1/distance", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const GeoPoint at =
            GeoPoint::at(wire::number_param(req, "lat"), wire::number_param(req, "lon"));
        const QueryResult r = oracle_.query_distance(wire::param(req, "account"), at,
                                                     wire::param(req, "target"),
                                                     wire::seconds_param(req, "t"));
        write_result(res, r);
      });
    });
    server_.Get("/v1/nearby", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const GeoPoint at =
            GeoPoint::at(wire::number_param(req, "lat"), wire::number_param(req, "lon"));
        const NearbyResult r =
            oracle_.query_nearby(wire::param(req, "account"), at, wire::seconds_param(req, "t"));
        if (const auto* rl = std::get_if<RateLimited>(&r)) {
          wire::reply(res, 429, {{"error", "rate_limited"}, {"banned_until", rl->banned_until}});
          return;
        }
        nlohmann::json users = nlohmann::json::array();
        for (const auto& e : std::get<NearbyList>(r)) {
          users.push_back({{"user_id", e.user_id}, {"distance", wire::to_json(e.distance)}});
        }
        wire::reply(res, 200, {{"users", users}});
      });
    });
    server_.Get("/v1/account", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const OracleState s = oracle_.snapshot();
        const auto it = s.accounts.find(wire::param(req, "id"));
        const AccountRecord acc = it == s.accounts.end() ? AccountRecord{} : it->second;
        wire::reply(res, 200, wire::to_json(acc));
      });
    });
    server_.Get("/v1/sdk", [](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const GeoPoint p =
            GeoPoint::at(wire::number_param(req, "lat"), wire::number_param(req, "lon"));
        res.status = 200;
        res.set_content(sdk_response(p, wire::seconds_param(req, "t")), "application/json");
      });
    });
  }

  static void write_result(httplib::Response& res, const QueryResult& r) {
    std::visit(detail::overloaded{
                   [&](const DisplayedDistance& d) { wire::reply(res, 200, wire::to_json(d)); },
                   [&](const NotVisible&) { wire::reply(res, 404, {{"error", "not_visible"}}); },
                   [&](const RateLimited& rl) {
                     wire::reply(res, 429,
                                 {{"error", "rate_limited"}, {"banned_until", rl.banned_until}});
                   },
               },
               r);
  }

  Oracle& oracle_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = -1;
};

// ---------------------------------------------------------------------------
// Client
// ---------------------------------------------------------------------------

/// Oracle operations over HTTP, mirroring the in-process Oracle API.
class RemoteOracle {
 public:
  RemoteOracle(const std::string& host, int port) : client_(host, port) {
    client_.set_keep_alive(true);
    client_.set_tcp_nodelay(true);
    client_.set_read_timeout(std::chrono::seconds(10));
  }

  void report_location(const std::string& user_id, const GeoPoint& p, Seconds t) {
    const nlohmann::json body{{"user_id", user_id}, {"lat", p.lat}, {"lon", p.lon}, {"t", t}};
    auto res = client_.Post("/v1/report", body.dump(), "application/json");
    check(res);
    if (res->status == 400) throw std::invalid_argument(message(res->body));
  }

  QueryResult query_distance(const std::string& account_id, const GeoPoint& at,
                             const std::string& target_id, Seconds t) {
    httplib::Params q{{"account", account_id},
                      {"target", target_id},
                      {"lat", detail::format_double(at.lat)},
                      {"lon", detail::format_double(at.lon)},
                      {"t", std::to_string(t)}};
    auto res = client_.Get("/v1/distance", q, httplib::Headers{});
    check(res);
    const auto j = nlohmann::json::parse(res->body);
    switch (res->status) {
      case 200:
        return wire::distance_from_json(j);
      case 404:
        return NotVisible{};
      case 429:
        return RateLimited{j.at("banned_until").get<Seconds>()};
      default:
        throw std::invalid_argument(message(res->body));
    }
  }

  NearbyResult query_nearby(const std::string& account_id, const GeoPoint& at, Seconds t) {
    httplib::Params q{{"account", account_id},
                      {"lat", detail::format_double(at.lat)},
                      {"lon", detail::format_double(at.lon)},
                      {"t", std::to_string(t)}};
    auto res = client_.Get("/v1/nearby", q, httplib::Headers{});
    check(res);
    const auto j = nlohmann::json::parse(res->body);
    if (res->status == 429) return RateLimited{j.at("banned_until").get<Seconds>()};
    if (res->status != 200) throw std::invalid_argument(message(res->body));
    NearbyList out;
    for (const auto& u : j.at("users")) {
      out.push_back(NearbyEntry{u.at("user_id").get<std::string>(),
                                wire::distance_from_json(u.at("distance"))});
    }
    return out;
  }

  AccountRecord account(const std::string& account_id) {
    auto res = client_.Get("/v1/account", httplib::Params{{"id", account_id}}, httplib::Headers{});
    check(res);
    if (res->status != 200) throw std::invalid_argument(message(res->body));
    return wire::account_from_json(nlohmann::json::parse(res->body));
  }

  std::string sdk(const GeoPoint& p, Seconds t) {
    httplib::Params q{{"lat", detail::format_double(p.lat)},
                      {"lon", detail::format_double(p.lon)},
                      {"t", std::to_string(t)}};
    auto res = client_.Get("/v1/sdk", q, httplib::Headers{});
    check(res);
    if (res->status != 200) throw std::invalid_argument(message(res->body));
    return res->body;
  }

  /// Drops the kept-alive connection so the server can stop promptly.
  void close() { client_.stop(); }

 private:
  static void check(const httplib::Result& res) {
    if (!res) throw ServiceError("transport error: " + httplib::to_string(res.error()));
  }

  static std::string message(const std::string& body) {
    try {
      const auto j = nlohmann::json::parse(body);
      return j.value("message", j.value("error", body));
    } catch (const nlohmann::json::exception&) {
      return body;
    }
  }

  httplib::Client client_;
};

}  // namespace lbsn
