// Copyright 2026 the realmsim authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "realmsim/harness.hpp"

namespace {

using namespace realmsim;

// Scenario files are JSON; "builtin:<name>" selects a built-in scenario.
Status load_scenario(const std::string& spec, ScenarioConfig& out) {
  constexpr const char* kPrefix = "builtin:";
  if (spec.rfind(kPrefix, 0) == 0) {
    auto builtin = builtin_scenario(spec.substr(strlen(kPrefix)));
    if (!builtin) return Status::error("unknown builtin scenario: " + spec);
    out = *builtin;
    return Status::success();
  }
  return load_scenario_file(spec, out);
}

Status apply_overrides(ScenarioConfig& cfg, const std::string& mode,
                       const std::string& strategy, std::optional<uint64_t> seed) {
  if (!mode.empty()) {
    if (mode == "bn") cfg.mode = Mode::Bn;
    else if (mode == "br") cfg.mode = Mode::Br;
    else if (mode == "dmi") cfg.mode = Mode::Dmi;
    else return Status::error("--mode must be one of bn, br, dmi");
  }
  if (!strategy.empty()) {
    std::string name = strategy;
    uint64_t param = 0;
    if (auto colon = strategy.find(':'); colon != std::string::npos) {
      name = strategy.substr(0, colon);
      try {
        param = std::stoull(strategy.substr(colon + 1));
      } catch (const std::exception&) {
        return Status::error("--strategy parameter must be an integer");
      }
    }
    auto kind = strategy_from_string(name);
    if (!kind) return Status::error("unknown strategy: " + name);
    cfg.strategy = {*kind, param};
  }
  if (seed) cfg.seed = *seed;
  return Status::success();
}

int fail_usage(const std::string& message) {
  std::cerr << "error: " << message << "\n";
  return static_cast<int>(ExitStatus::ConfigError);
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"deterministic platform simulator for confidential-VM device attach "
               "and interrupt isolation"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "execute a scenario");
  std::string scenario_spec, mode, strategy, trace_path, metrics_path;
  std::optional<uint64_t> seed;
  run->add_option("scenario", scenario_spec, "scenario file or builtin:<name>")->required();
  run->add_option("--mode", mode, "bn | br | dmi");
  run->add_option("--strategy", strategy, "NAME[:PARAM]");
  run->add_option("--seed", seed, "workload jitter seed");
  run->add_option("--trace", trace_path, "write the trace to this file");
  run->add_option("--metrics", metrics_path, "write the metrics report to this file");

  // compare
  auto* compare = app.add_subcommand("compare", "run two scenarios, report metric ratios");
  std::string file_a, file_b;
  compare->add_option("fileA", file_a, "first scenario")->required();
  compare->add_option("fileB", file_b, "second scenario")->required();

  // replay
  auto* replay = app.add_subcommand("replay", "re-execute and byte-compare a trace");
  std::string replay_trace_path, replay_scenario;
  replay->add_option("trace", replay_trace_path, "trace file from a previous run")->required();
  replay->add_option("scenario", replay_scenario, "scenario file or builtin:<name>")->required();

  // attacks
  auto* attacks = app.add_subcommand("attacks", "list built-in attack scenarios");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : static_cast<int>(ExitStatus::ConfigError);
  }

  if (attacks->parsed()) {
    for (const std::string& name : builtin_scenario_names()) std::cout << name << "\n";
    return 0;
  }

  if (run->parsed()) {
    ScenarioConfig cfg;
    if (Status st = load_scenario(scenario_spec, cfg); !st) return fail_usage(st.message);
    if (Status st = apply_overrides(cfg, mode, strategy, seed); !st)
      return fail_usage(st.message);

    RunResult result = run_scenario(cfg);
    if (result.status == ExitStatus::ConfigError) return fail_usage(result.error);

    if (!trace_path.empty()) {
      if (Status st = result.trace->write_file(trace_path); !st) return fail_usage(st.message);
    }
    if (!metrics_path.empty()) {
      std::ofstream f(metrics_path);
      if (!f) return fail_usage("cannot open metrics file: " + metrics_path);
      f << result.metrics.to_json() << "\n";
    }

    std::cout << result.metrics.to_json() << "\n";
    switch (result.status) {
      case ExitStatus::Clean: std::cout << "status: clean\n"; break;
      case ExitStatus::ViolationsDetected: std::cout << "status: violations-detected\n"; break;
      case ExitStatus::AttackSucceeded: std::cout << "status: attack-succeeded\n"; break;
      default: break;
    }
    return static_cast<int>(result.status);
  }

  if (compare->parsed()) {
    ScenarioConfig a, b;
    if (Status st = load_scenario(file_a, a); !st) return fail_usage(st.message);
    if (Status st = load_scenario(file_b, b); !st) return fail_usage(st.message);
    std::string report;
    if (Status st = compare_runs(a, b, report); !st) return fail_usage(st.message);
    std::cout << report << "\n";
    return 0;
  }

  if (replay->parsed()) {
    ScenarioConfig cfg;
    if (Status st = load_scenario(replay_scenario, cfg); !st) return fail_usage(st.message);
    std::ifstream f(replay_trace_path, std::ios::binary);
    if (!f) return fail_usage("cannot open trace file: " + replay_trace_path);
    std::stringstream buf;
    buf << f.rdbuf();

    ReplayVerdict verdict = replay_trace(buf.str(), cfg);
    if (verdict.identical) {
      std::cout << "identical\n";
      return 0;
    }
    std::cout << "diverged-at-step " << verdict.diverged_at_step << "\n";
    return static_cast<int>(ExitStatus::ViolationsDetected);
  }

  return fail_usage("no subcommand");
}
