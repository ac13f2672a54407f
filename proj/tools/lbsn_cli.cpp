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

// Command-line experiment runner: attack, track, mitigate, gen, serve.

#include <CLI11.hpp>

#include <csignal>
#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include "lbsn/experiments.hpp"
#include "lbsn/service.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitAttack = 2;

struct Options {
  std::string scenario;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string profile;
  std::string bind = "127.0.0.1:8080";
};

lbsn::Scenario scenario_from(const Options& o, bool required) {
  lbsn::Scenario s;
  if (!o.scenario.empty()) {
    s = lbsn::load_scenario(o.scenario);
  } else if (required) {
    throw lbsn::ConfigError("--scenario is required");
  } else {
    s.policy = lbsn::policy_preset(o.profile.empty() ? "momo" : o.profile);
  }
  if (o.seed) s.seed = *o.seed;
  if (!o.profile.empty()) s.policy = lbsn::policy_preset(o.profile);
  return s;
}

std::string out_dir(const Options& o, const lbsn::Scenario& s) {
  return o.out.empty() ? s.outputs : o.out;
}

std::pair<std::string, int> split_bind(const std::string& bind) {
  const auto colon = bind.rfind(':');
  if (colon == std::string::npos) throw lbsn::ConfigError("--bind must be host:port");
  const auto port = lbsn::detail::parse_number<int>(bind.substr(colon + 1));
  if (!port || *port < 0 || *port > 65535) throw lbsn::ConfigError("bad port in --bind");
  return {bind.substr(0, colon), *port};
}

lbsn::OracleServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->http().stop();
}

int run_attack(const Options& o) {
  const auto s = scenario_from(o, true);
  const auto rep = lbsn::cmd_attack(s);
  lbsn::write_attack_outputs(rep, out_dir(o, s));
  std::cout << rep.json.dump(2) << '\n';
  return rep.exit_code == 0 ? kExitOk : kExitAttack;
}

int run_track(const Options& o) {
  const auto s = scenario_from(o, true);
  const auto rep = lbsn::cmd_track(s);
  lbsn::write_track_outputs(rep, out_dir(o, s));
  std::cout << rep.json.dump(2) << '\n';
  return kExitOk;
}

int run_mitigate(const Options& o) {
  const auto s = scenario_from(o, true);
  const auto rep = lbsn::cmd_mitigate(s);
  lbsn::write_mitigation_outputs(rep, out_dir(o, s));
  std::cout << lbsn::curve_csv(rep) << rep.json.dump(2) << '\n';
  return kExitOk;
}

int run_gen(const Options& o) {
  const auto s = scenario_from(o, true);
  const auto traces = lbsn::cmd_gen(s);
  const std::string dir = out_dir(o, s);
  lbsn::write_gen_outputs(traces, dir);
  std::cout << "wrote " << dir << "/traces.csv\n";
  return kExitOk;
}

int run_serve(const Options& o) {
  const auto s = scenario_from(o, false);
  const auto [host, port] = split_bind(o.bind);
  lbsn::Oracle oracle(lbsn::oracle_config(s));
  lbsn::OracleServer server(oracle);
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cerr << "serving policy " << s.policy.name << " on " << host << ':' << port << '\n';
  server.run(host, port);
  g_server = nullptr;
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LBSN distance-oracle attack and defense simulator"};
  app.require_subcommand(1);
  Options o;
  std::uint64_t seed = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--scenario", o.scenario, "Scenario JSON file");
    sub->add_option("--seed", seed, "Override the scenario seed")
        ->each([&](const std::string&) { o.seed = seed; });
    sub->add_option("--out", o.out, "Output directory");
    sub->add_option("--profile", o.profile,
                    "Policy preset: momo, skout, wechat, wechat-dense, wechat-sparse, exact");
  };
  auto* attack = app.add_subcommand("attack", "Single synchronous attack");
  auto* track = app.add_subcommand("track", "Periodic tracking campaign");
  auto* mitigate = app.add_subcommand("mitigate", "Grid reference system sweep");
  auto* gen = app.add_subcommand("gen", "Synthesize victim traces");
  auto* serve = app.add_subcommand("serve", "Serve the oracle over HTTP");
  for (auto* sub : {attack, track, mitigate, gen, serve}) add_common(sub);
  serve->add_option("--bind", o.bind, "host:port to listen on");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*attack) return run_attack(o);
    if (*track) return run_track(o);
    if (*mitigate) return run_mitigate(o);
    if (*gen) return run_gen(o);
    if (*serve) return run_serve(o);
  } catch (const lbsn::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const lbsn::ServiceError& e) {
    std::cerr << "service error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitAttack;
  }
  return kExitConfig;
}
