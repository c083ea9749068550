// Copyright 2026 The kdisagg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "kdisagg/io.hpp"

namespace kdisagg::testing {

inline std::string shell_quote(const std::string& s) {
  std::string q = "'";
  for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return q + "'";
}

/// Runs the CLI with `args`, stderr discarded; returns its exit status.
inline int run_cli(const std::string& binary, const std::vector<std::string>& args) {
  std::string cmd = shell_quote(binary);
  for (const auto& a : args) cmd += " " + shell_quote(a);
  cmd += " 2>/dev/null";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

/// Every regular file under `dir`, keyed by relative path.
inline std::map<std::string, std::string> snapshot(const std::filesystem::path& dir) {
  std::map<std::string, std::string> out;
  if (!std::filesystem::exists(dir)) return out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out[std::filesystem::relative(e.path(), dir).string()] = read_text_file(e.path());
  return out;
}

/// Fresh, empty scratch directory under the system temp dir.
inline std::filesystem::path scratch(const std::string& name) {
  auto d = std::filesystem::temp_directory_path() / ("kdisagg-" + name);
  std::filesystem::remove_all(d);
  std::filesystem::create_directories(d);
  return d;
}

/// One invocation of every command over the shipped fixtures, writing below
/// `out`. Returns the number of commands that exited non-zero.
inline int run_fixture_suite(const std::string& cli, const std::filesystem::path& fixtures,
                             const std::filesystem::path& out) {
  const std::string F = fixtures.string();
  const std::string O = out.string();
  int failures = 0;
  auto go = [&](std::vector<std::string> args) { failures += run_cli(cli, args) != 0; };
  for (const char* t : {"regular", "indirect", "collective"})
    go({"analyze", F + "/traces/" + t + ".trace.jsonl", "--out", O + "/analyze"});
  for (const char* p : {"decode_step", "gather", "tp_block"}) {
    for (const char* o : {"throughput", "latency"}) {
      go({"plan", "--ddg", O + "/analyze/" + p + ".ddg.json", "--gpus", F + "/gpus/pair.json", "--links",
          F + "/links/nvlink200.json", "--profile", F + "/profiles/pair.profile.json", "--objective", o,
          "--out", O + "/plan"});
      go({"plan", "--ddg", O + "/analyze/" + p + ".ddg.json", "--gpus", F + "/gpus/pair.json", "--links",
          F + "/links/nvlink200.json", "--profile", F + "/profiles/pair.profile.json", "--objective", o,
          "--solver", "lp-export", "--out", O + "/lp"});
    }
  }
  go({"plan", "--ddg", O + "/analyze/decode_step.ddg.json", "--gpus", F + "/gpus/catalog.json", "--links",
      F + "/links/nvlink200.json", "--profile", F + "/profiles/catalog.profile.json", "--solver", "heuristic",
      "--seed", "7", "--pattern", "catalog", "--out", O + "/plan"});
  go({"report", "--problem", O + "/plan/decode_step.problem.json", "--placement",
      O + "/plan/decode_step.throughput.placement.json", "--placement",
      O + "/plan/decode_step.latency.placement.json", "--out", O + "/report"});
  for (const char* s : {"balanced", "phase_aligned"})
    go({"simulate", "--problem", F + "/sim/" + s + ".problem.json", "--placement",
        F + "/sim/" + s + ".placement.json", "--workload", F + "/sim/" + s + ".workload.json", "--ablate",
        "--out", O + "/simulate/" + s});
  const std::vector<std::string> serving = {
      "--problem", F + "/monitor/serve.problem.json", "--latency", F + "/monitor/serve.latency.placement.json",
      "--throughput", F + "/monitor/serve.throughput.placement.json", "--monitor", F + "/monitor/monitor.json"};
  auto with = [&](const std::string& cmd, std::vector<std::string> tail) {
    std::vector<std::string> args{cmd};
    args.insert(args.end(), serving.begin(), serving.end());
    args.insert(args.end(), tail.begin(), tail.end());
    return args;
  };
  for (const std::string w : {"light", "step", "noisy"})
    go(with("serve", {"--workload", F + "/monitor/" + w + ".workload.json", "--events", "--out",
                      O + "/serve/" + w}));
  go(with("sweep", {"--workload", F + "/monitor/noisy.workload.json", "--out", O + "/sweep"}));
  go({"instrument", F + "/kernels/copy.kir", "--out", O + "/instrument"});
  return failures;
}

}  // namespace kdisagg::testing
