// Copyright 2026 The kdisagg Authors
// SPDX-License-Identifier: Apache-2.0

// Windowed queueing monitor that switches a running simulation between a
// latency placement (one request at a time) and a throughput placement
// (pipelined).

#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "kdisagg/error.hpp"
#include "kdisagg/io.hpp"
#include "kdisagg/sim.hpp"

namespace kdisagg {

struct MonitorConfig {
  double window = 0.300;  // seconds
  double beta = 1.5;
  double stall = 0.030;  // seconds
  Objective initial = Objective::latency;
  /// Dual-threshold mode: switch back down only when rho <= beta_down.
  std::optional<double> beta_down;

  void validate() const {
    if (!(window > 0) || !std::isfinite(window)) throw SimulationError("monitor window must be positive");
    if (!(beta >= 1)) throw SimulationError("monitor threshold must be at least 1");
    if (!(stall >= 0)) throw SimulationError("switch stall must be non-negative");
    if (beta_down && !(*beta_down >= 1 && *beta_down <= beta))
      throw SimulationError("lower threshold must lie in [1, beta]");
  }
};

/// Both candidate placements, one assignment per pattern.
struct PolicyPlacements {
  std::vector<std::vector<int>> latency, throughput;

  const std::vector<std::vector<int>>& of(Objective o) const {
    return o == Objective::latency ? latency : throughput;
  }
};

struct WindowStats {
  std::size_t index = 0;
  Nanos start = 0, end = 0;
  std::size_t completed = 0;
  double mean_request = 0, mean_exec = 0;
  double rho = std::numeric_limits<double>::quiet_NaN();  // NaN without completions
  Objective policy = Objective::latency;  // active when the window closed
  bool switched = false;                  // this window's decision started a switch
  bool settling = false;                  // overlapped a switch, so made no decision
  std::vector<double> group_means;

  bool has_rho() const { return completed > 0; }
};

struct SwitchRecord {
  std::size_t window = 0;
  Objective to = Objective::throughput;
  Nanos requested = 0, drained = 0, resumed = 0;
};

struct MonitoredRun {
  SimReport report;
  std::vector<WindowStats> windows;
  std::vector<SwitchRecord> switches;
};

namespace detail {

inline std::size_t admission_cap(Objective o, const SimConfig& cfg) {
  return o == Objective::latency ? 1 : cfg.workload.inflight;
}

}  // namespace detail

/// Open-loop serving under the monitor. Requests completed in a window feed
/// rho = mean request latency / mean execution latency; above beta the
/// latency policy yields to the throughput policy, at or below it (or below
/// beta_down) the throughput policy yields back. Windows without completions
/// or overlapping a switch keep the current policy.
inline MonitoredRun run_monitored(SimConfig cfg, const PolicyPlacements& placements,
                                  const MonitorConfig& mc) {
  mc.validate();
  if (cfg.workload.kind != Workload::Kind::open)
    throw SimulationError("monitored serving needs an open-loop workload");
  if (placements.latency.size() != cfg.patterns.size() ||
      placements.throughput.size() != cfg.patterns.size())
    throw SimulationError("policy placements do not cover every pattern");
  for (std::size_t i = 0; i < cfg.patterns.size(); ++i) {
    if (placements.latency[i].size() != cfg.patterns[i].problem.node_count() ||
        placements.throughput[i].size() != cfg.patterns[i].problem.node_count())
      throw SimulationError("policy placements of pattern '" + cfg.patterns[i].id +
                            "' do not cover every node");
  }
  Objective active = mc.initial;
  for (std::size_t i = 0; i < cfg.patterns.size(); ++i) cfg.patterns[i].assign = placements.of(active)[i];
  const std::size_t throughput_cap = cfg.workload.inflight;
  cfg.workload.inflight = detail::admission_cap(active, cfg);
  cfg.record_events = true;

  Simulator sim(cfg);
  MonitoredRun out;
  const Nanos W = to_nanos(mc.window);
  std::size_t seen = 0;
  std::optional<Objective> pending;
  for (std::size_t w = 0;; ++w) {
    const Nanos begin = static_cast<Nanos>(w) * W, end = begin + W;
    sim.run_until(end);
    WindowStats ws;
    ws.index = w;
    ws.start = begin;
    ws.end = end;
    const auto& done = sim.completed();
    double req = 0, exec = 0;
    std::vector<double> gsum;
    std::vector<std::size_t> gcount;
    for (; seen < done.size(); ++seen) {
      const auto& q = done[seen];
      ++ws.completed;
      req += q.request_latency();
      exec += q.exec_latency();
      if (gsum.size() < q.groups.size()) {
        gsum.resize(q.groups.size(), 0);
        gcount.resize(q.groups.size(), 0);
      }
      for (std::size_t i = 0; i < q.groups.size(); ++i) {
        gsum[i] += to_seconds(q.groups[i]);
        ++gcount[i];
      }
    }
    for (std::size_t i = 0; i < gsum.size(); ++i)
      ws.group_means.push_back(gsum[i] / static_cast<double>(gcount[i]));
    if (ws.completed > 0) {
      ws.mean_request = req / static_cast<double>(ws.completed);
      ws.mean_exec = exec / static_cast<double>(ws.completed);
      ws.rho = ws.mean_exec > 0 ? ws.mean_request / ws.mean_exec : 1.0;
    }
    // a window that saw any part of a switch measures the barrier, not the
    // load, so it only carries the policy forward
    const bool settling = pending.has_value();
    if (pending && !sim.switching()) {
      active = *pending;
      pending.reset();
    }
    ws.policy = active;
    ws.settling = settling;
    if (!settling && ws.has_rho()) {
      const double down = mc.beta_down.value_or(mc.beta);
      std::optional<Objective> to;
      if (active == Objective::latency && ws.rho > mc.beta) to = Objective::throughput;
      if (active == Objective::throughput && ws.rho <= down) to = Objective::latency;
      if (to) {
        const std::size_t cap = *to == Objective::latency ? 1 : throughput_cap;
        sim.begin_switch(placements.of(*to), cap, to_nanos(mc.stall));
        out.switches.push_back({w, *to, end, 0, 0});
        ws.switched = true;
        pending = to;
      }
    }
    out.windows.push_back(std::move(ws));
    if (sim.finished() && !sim.switching()) break;
  }
  out.report = sim.report();
  // barrier phases in log order: requested, drained, resumed
  std::size_t s = 0;
  for (const auto& e : out.report.events) {
    if (e.kind != EventKind::policy_switch_barrier || s >= out.switches.size()) continue;
    if (e.node == 1) out.switches[s].drained = e.time;
    if (e.node == 2) out.switches[s++].resumed = e.time;
  }
  return out;
}

struct StallAudit {
  std::size_t switches = 0;
  Nanos stalled = 0;   // sum over switches of resumed - drained
  Nanos expected = 0;  // switches * S
  Nanos drain = 0;     // sum over switches of drained - requested
  std::size_t work_during_stall = 0;  // kernel or send starts inside a stall
  bool balanced(Nanos tick = 1) const {
    return work_during_stall == 0 && std::llabs(stalled - expected) <= tick;
  }
};

/// Recomputes stall time from the barrier events alone.
inline StallAudit audit_stalls(const std::vector<SimEvent>& events, double stall) {
  StallAudit a;
  std::vector<std::pair<Nanos, Nanos>> stalls;
  Nanos requested = 0, drained = 0;
  for (const auto& e : events) {
    if (e.kind != EventKind::policy_switch_barrier) continue;
    if (e.node == 0) requested = e.time;
    if (e.node == 1) {
      drained = e.time;
      a.drain += drained - requested;
    }
    if (e.node == 2) {
      ++a.switches;
      a.stalled += e.time - drained;
      stalls.push_back({drained, e.time});
    }
  }
  a.expected = static_cast<Nanos>(a.switches) * to_nanos(stall);
  for (const auto& e : events) {
    if (e.kind != EventKind::kernel_start && e.kind != EventKind::send_start) continue;
    for (const auto& [lo, hi] : stalls)
      if (e.time >= lo && e.time < hi) ++a.work_during_stall;
  }
  return a;
}

struct SweepRow {
  double window = 0, beta = 0;
  double mean_normalized_latency = 0;
  std::size_t switches = 0;
};

/// Full-factorial sweep over (W, beta). Normalized latency divides each
/// request's latency by its pattern's unloaded latency under the latency
/// placement.
inline std::vector<SweepRow> sweep_sensitivity(const SimConfig& cfg,
                                               const PolicyPlacements& placements,
                                               const std::vector<double>& windows,
                                               const std::vector<double>& betas,
                                               const MonitorConfig& base = {}) {
  if (windows.empty() || betas.empty()) throw SimulationError("sweep grid is empty");
  double last = 0;
  for (const auto& a : cfg.workload.arrivals) last = std::max(last, a.time);
  const double wmax = *std::max_element(windows.begin(), windows.end());
  if (last < 10 * wmax) throw SimulationError("trace must cover at least 10 windows of the largest W");
  std::vector<double> unloaded;
  for (std::size_t i = 0; i < cfg.patterns.size(); ++i) {
    SimConfig one = cfg;
    for (std::size_t j = 0; j < one.patterns.size(); ++j) one.patterns[j].assign = placements.latency[j];
    one.workload.arrivals = {{0.0, i}};
    one.workload.inflight = 1;
    one.record_events = false;
    unloaded.push_back(simulate(one).requests.at(0).request_latency());
  }
  std::vector<SweepRow> rows;
  for (double w : windows) {
    for (double b : betas) {
      MonitorConfig mc = base;
      mc.window = w;
      mc.beta = b;
      if (mc.beta_down && *mc.beta_down > b) mc.beta_down = b;
      auto run = run_monitored(cfg, placements, mc);
      double sum = 0;
      for (const auto& q : run.report.requests) sum += q.request_latency() / unloaded[q.pattern];
      SweepRow r;
      r.window = w;
      r.beta = b;
      r.mean_normalized_latency =
          run.report.requests.empty() ? 0 : sum / static_cast<double>(run.report.requests.size());
      r.switches = run.switches.size();
      rows.push_back(r);
    }
  }
  return rows;
}

// ---- files ------------------------------------------------------------------

inline constexpr const char* kMonitorFormat = "kdisagg.monitor";
inline constexpr int kMonitorFileVersion = 1;

inline MonitorConfig monitor_from_json(const json& j, const std::string& where = "monitor") {
  check_envelope(j, kMonitorFormat, kMonitorFileVersion, where);
  MonitorConfig mc;
  try {
    mc.window = j.value("window_s", mc.window);
    mc.beta = j.value("beta", mc.beta);
    mc.stall = j.value("stall_s", mc.stall);
    if (j.contains("initial")) mc.initial = objective_from(j.at("initial").get<std::string>());
    if (j.contains("beta_down")) mc.beta_down = j.at("beta_down").get<double>();
  } catch (const json::exception& e) {
    throw FormatError(where + ": " + e.what());
  }
  mc.validate();
  return mc;
}

inline json monitor_to_json(const MonitorConfig& mc) {
  json j;
  j["format"] = kMonitorFormat;
  j["version"] = kMonitorFileVersion;
  j["window_s"] = mc.window;
  j["beta"] = mc.beta;
  j["stall_s"] = mc.stall;
  j["initial"] = to_string(mc.initial);
  if (mc.beta_down) j["beta_down"] = *mc.beta_down;
  return j;
}

inline std::string windows_csv(const std::vector<WindowStats>& ws) {
  std::string s =
      "window,start_s,end_s,completed,mean_request_s,mean_exec_s,rho,policy,switched,settling,"
      "group_means_s\n";
  for (const auto& w : ws) {
    std::string groups;
    for (std::size_t i = 0; i < w.group_means.size(); ++i)
      groups += (i ? ";" : "") + format_fixed(w.group_means[i], 9);
    s += std::to_string(w.index) + "," + format_fixed(to_seconds(w.start), 6) + "," +
         format_fixed(to_seconds(w.end), 6) + "," + std::to_string(w.completed) + "," +
         format_fixed(w.mean_request, 9) + "," + format_fixed(w.mean_exec, 9) + "," +
         (w.has_rho() ? format_fixed(w.rho, 6) : std::string()) + "," + to_string(w.policy) +
         "," + (w.switched ? "1" : "0") + "," + (w.settling ? "1" : "0") + "," + groups + "\n";
  }
  return s;
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string s = "window_s,beta,mean_normalized_latency,switches\n";
  for (const auto& r : rows)
    s += format_fixed(r.window, 6) + "," + format_fixed(r.beta, 6) + "," +
         format_fixed(r.mean_normalized_latency, 6) + "," + std::to_string(r.switches) + "\n";
  return s;
}

}  // namespace kdisagg
