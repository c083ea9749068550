// Copyright 2026 The kdisagg Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "kdisagg/monitor.hpp"
#include "kdisagg/solve.hpp"

using namespace kdisagg;

namespace {

const std::filesystem::path kMon = std::filesystem::path(KDISAGG_FIXTURES) / "monitor";

struct Serve {
  SimConfig cfg;
  PolicyPlacements placements;
};

Serve serve(const std::string& workload) {
  Serve s;
  auto lat = load_pattern(kMon / "serve.problem.json", kMon / "serve.latency.placement.json");
  auto thr = load_pattern(kMon / "serve.problem.json", kMon / "serve.throughput.placement.json");
  s.placements = {{lat.assign}, {thr.assign}};
  s.cfg.patterns = {lat};
  apply_workload(read_versioned(kMon / (workload + ".workload.json"), kWorkloadFormat, kSimFileVersion),
                 s.cfg);
  return s;
}

MonitorConfig defaults() {
  return monitor_from_json(read_versioned(kMon / "monitor.json", kMonitorFormat, kMonitorFileVersion));
}

MonitoredRun run(const std::string& workload, double window, double beta) {
  auto s = serve(workload);
  auto mc = defaults();
  mc.window = window;
  mc.beta = beta;
  return run_monitored(s.cfg, s.placements, mc);
}

/// Every decision agrees with the thresholds: switches fire exactly when rho
/// crosses, and never in a window that overlapped a switch.
void check_decisions(const MonitoredRun& r, const MonitorConfig& mc) {
  const double down = mc.beta_down.value_or(mc.beta);
  bool pending = false;
  Objective last = mc.initial;
  for (const auto& w : r.windows) {
    CHECK(w.settling == pending);
    if (pending) {
      CHECK_FALSE(w.switched);
      if (w.policy != last) pending = false;
      last = w.policy;
      continue;
    }
    CHECK(w.policy == last);
    if (w.switched) {
      REQUIRE(w.has_rho());
      if (w.policy == Objective::latency) CHECK(w.rho > mc.beta);
      else CHECK(w.rho <= down);
      pending = true;
    } else if (w.has_rho()) {
      if (w.policy == Objective::latency) CHECK(w.rho <= mc.beta);
      else CHECK(w.rho > down);
    }
  }
}

}  // namespace

TEST_CASE("fixture placements are the exact optima of the serving problem") {
  auto s = serve("light");
  auto p = s.cfg.patterns[0].problem;
  p.objective = Objective::latency;
  CHECK(solve_exact(p).assign == s.placements.latency[0]);
  p.objective = Objective::throughput;
  CHECK(solve_exact(p).assign == s.placements.throughput[0]);
}

TEST_CASE("monitor: constant light load never switches") {
  auto r = run("light", 0.3, 1.5);
  CHECK(r.switches.empty());
  for (const auto& w : r.windows) {
    CHECK(w.policy == Objective::latency);
    if (w.has_rho()) CHECK(w.rho < 1.5);
  }
}

TEST_CASE("monitor: a load step switches up once and back once") {
  auto r = run("step", 0.3, 1.5);
  REQUIRE(r.switches.size() == 2);
  CHECK(r.switches[0].to == Objective::throughput);
  CHECK(r.switches[0].requested > to_nanos(3.0));
  CHECK(r.switches[0].requested <= to_nanos(3.0 + 0.3));
  CHECK(r.switches[1].to == Objective::latency);
  CHECK(r.switches[1].requested > to_nanos(4.0));
  check_decisions(r, defaults());
  const auto csv = windows_csv(r.windows);
  CHECK(csv.rfind("window,start_s,end_s,completed,mean_request_s,mean_exec_s,rho,policy,switched", 0) == 0);
  CHECK(csv.find(",latency,1,") != std::string::npos);
  CHECK(csv.find(",throughput,1,") != std::string::npos);
}

TEST_CASE("monitor: aggressive thresholds and short windows switch more on the noisy trace") {
  const auto b11 = run("noisy", 0.3, 1.1).switches.size();
  const auto b15 = run("noisy", 0.3, 1.5).switches.size();
  const auto w30 = run("noisy", 0.03, 1.5).switches.size();
  CHECK(b11 > b15);
  CHECK(w30 > b15);
}

TEST_CASE("monitor: stall audit, measurement hygiene and kernel groups") {
  for (const char* w : {"step", "noisy"}) {
    auto mc = defaults();
    auto s = serve(w);
    auto r = run_monitored(s.cfg, s.placements, mc);
    check_decisions(r, mc);

    auto a = audit_stalls(r.report.events, mc.stall);
    CHECK(a.switches == r.switches.size());
    CHECK(a.balanced());
    CHECK(a.stalled == static_cast<Nanos>(r.switches.size()) * to_nanos(mc.stall));
    for (const auto& sw : r.switches) {
      CHECK(sw.drained >= sw.requested);
      CHECK(sw.resumed - sw.drained == to_nanos(mc.stall));
    }

    std::size_t total = 0;
    for (const auto& ws : r.windows) {
      double req = 0, exec = 0;
      std::size_t n = 0;
      for (const auto& q : r.report.requests) {
        if (q.completion < ws.start || q.completion >= ws.end) continue;
        ++n;
        req += q.request_latency();
        exec += q.exec_latency();
      }
      REQUIRE(n == ws.completed);
      total += n;
      if (n == 0) continue;
      CHECK(ws.mean_request == Catch::Approx(req / static_cast<double>(n)).epsilon(1e-12));
      CHECK(ws.mean_exec == Catch::Approx(exec / static_cast<double>(n)).epsilon(1e-12));
      CHECK(ws.mean_exec <= ws.mean_request);
      CHECK(ws.rho >= 1.0);
    }
    CHECK(total == r.report.requests.size());
    CHECK(total == s.cfg.workload.arrivals.size());

    // versions alternate latency, throughput, ...; the throughput placement
    // cuts one edge on the path
    for (const auto& q : r.report.requests) CHECK(q.groups.size() == (q.version % 2 == 0 ? 1u : 2u));
  }
}

TEST_CASE("monitor: reruns are identical") {
  auto a = run("noisy", 0.1, 1.3);
  auto b = run("noisy", 0.1, 1.3);
  CHECK(windows_csv(a.windows) == windows_csv(b.windows));
  CHECK(a.report == b.report);
}

TEST_CASE("monitor: dual-threshold mode only steps down below the lower threshold") {
  auto s = serve("noisy");
  auto mc = defaults();
  mc.beta_down = 1.05;
  auto r = run_monitored(s.cfg, s.placements, mc);
  check_decisions(r, mc);
  for (const auto& w : r.windows)
    if (w.switched && w.policy == Objective::throughput) CHECK(w.rho <= 1.05);
}

TEST_CASE("sweep_sensitivity: grid, directions and preconditions") {
  auto s = serve("noisy");
  auto rows = sweep_sensitivity(s.cfg, s.placements, {0.03, 0.3}, {1.1, 1.5});
  REQUIRE(rows.size() == 4);
  auto at = [&](double w, double b) {
    for (const auto& r : rows)
      if (r.window == w && r.beta == b) return r;
    FAIL("missing row");
    return rows[0];
  };
  CHECK(at(0.03, 1.5).switches >= at(0.3, 1.5).switches);
  CHECK(at(0.3, 1.1).switches > at(0.3, 1.5).switches);
  for (const auto& r : rows) CHECK(r.mean_normalized_latency >= 1.0);
  CHECK(sweep_csv(rows).rfind("window_s,beta,mean_normalized_latency,switches\n", 0) == 0);

  auto light = serve("light");
  CHECK_THROWS_AS(sweep_sensitivity(light.cfg, light.placements, {1.0}, {1.5}), SimulationError);
}

TEST_CASE("sweep_sensitivity: identical measurements until the first divergence") {
  auto lo = run("noisy", 0.3, 1.2), hi = run("noisy", 0.3, 1.4);
  std::size_t i = 0;
  while (i < lo.windows.size() && i < hi.windows.size() &&
         lo.windows[i].switched == hi.windows[i].switched)
    ++i;
  for (std::size_t k = 0; k < i && k < lo.windows.size() && k < hi.windows.size(); ++k) {
    CHECK(lo.windows[k].completed == hi.windows[k].completed);
    CHECK(lo.windows[k].policy == hi.windows[k].policy);
  }
  if (i < lo.windows.size() && i < hi.windows.size()) {
    // rho lies between the thresholds; latency mode moves the lower beta up,
    // throughput mode moves the higher beta down
    const auto& w = lo.windows[i];
    CHECK(w.rho > 1.2);
    CHECK(w.rho <= 1.4);
    CHECK((w.policy == Objective::latency ? lo.windows[i].switched : hi.windows[i].switched));
  }
}

TEST_CASE("monitor: a single-window trace switches at most once") {
  auto s = serve("step");
  std::vector<Arrival> burst;
  for (int i = 0; i < 40; ++i) burst.push_back({0.002 * i, 0});
  s.cfg.workload.arrivals = burst;
  auto mc = defaults();
  mc.window = 10;
  auto r = run_monitored(s.cfg, s.placements, mc);
  CHECK(r.switches.size() <= 1);
}

TEST_CASE("monitor: errors and config files") {
  auto s = serve("light");
  auto mc = defaults();
  CHECK_THROWS_AS(run_monitored(s.cfg, {{s.placements.latency[0]}, {}}, mc), SimulationError);
  CHECK_THROWS_AS(run_monitored(s.cfg, {{{0, 0}}, s.placements.throughput}, mc), SimulationError);
  auto closed = s.cfg;
  closed.workload.kind = Workload::Kind::closed;
  CHECK_THROWS_AS(run_monitored(closed, s.placements, mc), SimulationError);
  mc.beta = 0.9;
  CHECK_THROWS_AS(run_monitored(s.cfg, s.placements, mc), SimulationError);

  MonitorConfig m;
  m.window = 0.03;
  m.beta = 1.1;
  m.beta_down = 1.05;
  m.initial = Objective::throughput;
  auto back = monitor_from_json(monitor_to_json(m));
  CHECK(back.window == m.window);
  CHECK(back.beta == m.beta);
  CHECK(back.beta_down == m.beta_down);
  CHECK(back.initial == Objective::throughput);
  auto j = monitor_to_json(m);
  j["version"] = 7;
  CHECK_THROWS_AS(monitor_from_json(j), FormatError);
}
