// Copyright 2026 The kdisagg Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <random>

#include "kdisagg/sim.hpp"
#include "kdisagg/solve.hpp"
#include "support/random_problem.hpp"
#include "support/sim_fixtures.hpp"

using namespace kdisagg;
using namespace kdisagg::testing;

namespace {

double bottleneck_w(const SimPattern& sp) {
  auto p = sp.problem;
  p.objective = Objective::throughput;
  return evaluate(p, sp.assign).objective_value;
}

/// Chain where the latency optimum stays on the fast GPU and the
/// throughput optimum splits the chain.
PlacementProblem two_speed_chain() {
  PlacementProblem p;
  p.links = LinkMatrix::uniform(2, 10e9, 0);
  for (int k = 0; k < 6; ++k) {
    p.t.push_back({1e-3, 1.5e-3});
    p.pins.push_back(std::nullopt);
    p.kernels.push_back("k" + std::to_string(k));
  }
  for (std::size_t k = 0; k + 1 < 6; ++k) p.edges.push_back({k, k + 1, 1'000'000, 1, "h"});
  return p;
}

std::vector<int> solve_for(PlacementProblem p, Objective o) {
  p.objective = o;
  return solve_exact(p).assign;
}

struct Log {
  std::map<std::tuple<std::int64_t, std::int64_t>, Nanos> start, end;  // (request, node)
  std::map<std::tuple<std::int64_t, std::int64_t, std::int64_t>, Nanos> send, recv;
  std::map<std::int64_t, Nanos> arrival;
};

Log index(const std::vector<SimEvent>& ev) {
  Log l;
  for (const auto& e : ev) {
    switch (e.kind) {
      case EventKind::kernel_start: l.start[{e.request, e.node}] = e.time; break;
      case EventKind::kernel_end: l.end[{e.request, e.node}] = e.time; break;
      case EventKind::send_start: l.send[{e.request, e.node, e.aux}] = e.time; break;
      case EventKind::recv_end: l.recv[{e.request, e.node, e.aux}] = e.time; break;
      case EventKind::request_arrival: l.arrival[e.request] = e.time; break;
      default: break;
    }
  }
  return l;
}

}  // namespace

TEST_CASE("simulate: single request on one GPU takes the serial sum") {
  auto sp = ms_chain(2, {1, 1, 1}, {2, 3, 4}, {5, 5});
  auto c = open_loop(sp, {{0.0, 0}});
  c.overhead = 0;
  auto r = simulate(c);
  REQUIRE(r.requests.size() == 1);
  CHECK(r.requests[0].completion - r.requests[0].start == to_nanos(9e-3));
  for (const auto& g : r.gpus) CHECK(g.comm == 0);
  CHECK(r.channel_utilization[0][1] == 0);
  CHECK(r.channel_utilization[1][0] == 0);
}

TEST_CASE("simulate: a cut two-kernel chain pays compute plus transfer") {
  auto sp = ms_chain(2, {0, 1}, {1000, 1000}, {500});
  auto c = open_loop(sp, {{0.0, 0}});
  c.overhead = 0;
  c.measure = 10;
  auto r = simulate(c);
  REQUIRE(r.requests.size() == 1);
  CHECK(r.requests[0].exec_latency() == 2.5);
  CHECK(r.requests[0].groups == std::vector<Nanos>{to_nanos(1.0), to_nanos(1.5)});

  c.overhead = 0.001;
  CHECK(simulate(c).requests[0].exec_latency() == Catch::Approx(2.5 * 1.001).epsilon(1e-12));
}

TEST_CASE("simulate: fifo-priority finishes the earlier request first, equal interleaves") {
  auto sp = ms_chain(1, {0, 0, 0}, {1, 1, 1}, {0, 0});
  auto c = open_loop(sp, {{0.0, 0}, {0.0001, 0}});
  c.overhead = 0;
  c.priority = Priority::fifo;
  auto f = simulate(c);
  REQUIRE(f.requests.size() == 2);
  CHECK(f.requests[0].id == 0);
  CHECK(f.requests[0].completion == to_nanos(3e-3));
  CHECK(f.requests[1].completion == to_nanos(6e-3));
  c.priority = Priority::equal;
  auto e = simulate(c);
  CHECK(e.requests[0].completion == to_nanos(5e-3));
  CHECK(e.requests[1].completion == to_nanos(6e-3));
}

TEST_CASE("simulate: bottleneck law on balanced synthetic DAGs") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto sp = balanced_dag(seed);
    const double w = bottleneck_w(sp);
    const auto n = saturating_depth(sp);
    auto r = simulate(closed_loop(sp, n, 0.2, 40));
    INFO("seed " << seed << " ratio " << r.throughput * w);
    CHECK(r.throughput * w >= 0.95);
    CHECK(r.throughput * w <= 1.0);
    CHECK(r.gpus[r.bottleneck_gpu()].comm < 0.05);
  }
}

TEST_CASE("simulate: causality, conservation, work conservation and determinism") {
  std::mt19937_64 rng(11);
  RandomProblemOptions opt;
  opt.min_gpus = 2;
  opt.max_kernels = 10;
  for (int trial = 0; trial < 40; ++trial) {
    auto p = random_problem(rng, Objective::throughput, opt);
    SimPattern sp{"r", p, solve_heuristic(p, {.seed = 1}).assign};
    auto c = closed_loop(sp, 1 + trial % 4, 0.001, 0.02);
    c.priority = trial % 2 ? Priority::equal : Priority::fifo;
    c.record_events = true;
    auto r = simulate(c);
    CHECK(r == simulate(c));

    for (std::size_t i = 1; i < r.events.size(); ++i) REQUIRE(r.events[i - 1].time <= r.events[i].time);
    for (const auto& g : r.gpus) {
      CHECK(g.compute + g.comm + g.idle == Catch::Approx(1.0).margin(1e-9));
      CHECK(g.compute >= 0);
      CHECK(g.comm >= 0);
      CHECK(g.idle >= -1e-12);
    }
    for (const auto& row : r.channel_utilization)
      for (double u : row) CHECK(u <= 1.0 + 1e-12);
    for (const auto& q : r.requests) {
      CHECK(q.start >= q.arrival);
      CHECK(q.completion >= q.start);
      Nanos s = 0;
      for (auto g : q.groups) s += g;
      CHECK(s == q.completion - q.start);
    }

    auto l = index(r.events);
    const auto comp = detail::compile(p, sp.assign, c.overhead);
    // transfers: start after the producer ends, take exactly their cost
    for (const auto& [key, t] : l.recv) {
      const auto [req, src, dst] = key;
      REQUIRE(l.send.count(key));
      Nanos dur = -1;
      for (const auto& o : comp.out[static_cast<std::size_t>(src)])
        if (static_cast<std::int64_t>(o.dst) == dst) dur = o.duration;
      CHECK(t == l.send.at(key) + dur);
      CHECK(l.send.at(key) >= l.end.at({req, src}));
    }
    // kernels: start once inputs are available, and GPUs never idle while
    // a runnable kernel waits
    std::vector<std::vector<detail::Interval>> busy(p.gpu_count());
    for (const auto& [key, s] : l.start)
      if (l.end.count(key))
        busy[comp.gpu[static_cast<std::size_t>(std::get<1>(key))]].push_back({s, l.end.at(key)});
    for (auto& b : busy) b = detail::merge(b);
    for (const auto& [key, s] : l.start) {
      const auto [req, k] = key;
      const auto ku = static_cast<std::size_t>(k);
      Nanos ready = l.arrival.at(req);
      for (const auto& e : p.edges) {
        if (e.dst != ku) continue;
        const auto src = static_cast<std::int64_t>(e.src);
        const Nanos avail = comp.gpu[e.src] == comp.gpu[ku] ? l.end.at({req, src})
                                                            : l.recv.at({req, src, k});
        CHECK(s >= avail);
        ready = std::max(ready, avail);
      }
      const auto g = comp.gpu[ku];
      if (comp.stream_pos[ku] > 0) {
        const auto prev = static_cast<std::int64_t>(comp.streams[g][comp.stream_pos[ku] - 1]);
        CHECK(s >= l.end.at({req, prev}));
        ready = std::max(ready, l.end.at({req, prev}));
      }
      if (ready < s) {
        const auto covered = detail::overlap(busy[g], {{ready, s}});
        CHECK(covered == s - ready);
      }
    }
  }
}

TEST_CASE("simulate: kernel groups split at every received cut edge") {
  auto sp = ms_chain(2, {0, 0, 1, 1, 0}, {1, 1, 1, 1, 1}, {0, 1, 0, 1});
  auto c = open_loop(sp, {{0.0, 0}});
  c.overhead = 0;
  auto r = simulate(c);
  REQUIRE(r.requests.size() == 1);
  const auto& q = r.requests[0];
  CHECK(q.groups.size() == 3);  // two cut edges on the path
  CHECK(q.groups == std::vector<Nanos>{to_nanos(2e-3), to_nanos(3e-3), to_nanos(2e-3)});
}

TEST_CASE("ablate_pipeline: overlap arithmetic on a balanced two-stage chain") {
  // G0 does almost nothing, the 2 ms transfer and the 2 ms G1 kernel balance
  auto sp = ms_chain(2, {0, 1}, {0.01, 2}, {2});
  auto c = closed_loop(sp, 4, 0.1, 10);
  c.overhead = 0;
  auto a = ablate_pipeline(c);
  CHECK(a.no_pipeline.throughput == Catch::Approx(1 / 4.01e-3).epsilon(0.01));
  CHECK(a.no_pipeline.throughput == Catch::Approx(1 / 4e-3).epsilon(0.01));
  CHECK(a.priority.throughput == Catch::Approx(1 / 2e-3).epsilon(0.01));
  CHECK(a.no_pipeline.throughput < a.priority.throughput);
}

TEST_CASE("ablate_pipeline: phase-aligned fixture orders the three configurations") {
  auto c = closed_loop(phase_aligned(), 3, 0.5, 10);
  auto a = ablate_pipeline(c);
  const auto b = a.priority.bottleneck_gpu();
  CHECK(a.no_pipeline.throughput < a.naive.throughput);
  CHECK(a.naive.throughput < a.priority.throughput);
  CHECK(a.naive.throughput / a.no_pipeline.throughput >= 1.3);
  CHECK(a.priority.gpus[b].comm < a.naive.gpus[b].comm);
  CHECK(a.priority.throughput * bottleneck_w(c.patterns[0]) >= 0.95);
}

TEST_CASE("compare_policies: light load favors latency, saturation favors throughput") {
  auto p = two_speed_chain();
  const auto lat = solve_for(p, Objective::latency);
  const auto thr = solve_for(p, Objective::throughput);
  REQUIRE(lat != thr);
  SimPattern sp{"two-speed", p, lat};

  std::vector<Arrival> light;
  for (int i = 0; i < 50; ++i) light.push_back({0.05 * i, 0});
  auto c = open_loop(sp, light);
  c.measure = 3;
  auto light_r = compare_policies(c, {lat}, {thr});
  CHECK(light_r.latency.mean_request_latency < light_r.throughput.mean_request_latency);

  auto sat = closed_loop(sp, 6, 0.1, 2);
  auto sat_r = compare_policies(sat, {lat}, {thr});
  CHECK(sat_r.throughput.throughput >= sat_r.latency.throughput);

  auto same = compare_policies(sat, {thr}, {thr});
  auto again = compare_policies(sat, {thr}, {thr});
  CHECK(same.throughput == again.throughput);
  CHECK(same.latency == again.latency);
}

TEST_CASE("simulate: deadlock reports the stuck frontier") {
  // the consumer precedes its producer on the same in-order stream
  auto sp = ms_chain(1, {0, 0}, {1, 1}, {0});
  sp.problem.edges = {{1, 0, 10, 1, "b"}};
  auto c = open_loop(sp, {{0.0, 0}});
  try {
    simulate(c);
    FAIL("expected a deadlock");
  } catch (const SimulationError& e) {
    CHECK_THAT(e.what(), Catch::Matchers::ContainsSubstring("request 0 node 0 on gpu 0"));
  }
}

TEST_CASE("simulate: configuration errors") {
  auto sp = ms_chain(2, {0, 1}, {1, 1}, {1});
  auto c = closed_loop(sp, 0, 0, 1);
  CHECK_THROWS_AS(simulate(c), SimulationError);
  c.workload.inflight = 1;
  c.measure = 0;
  CHECK_THROWS_AS(simulate(c), SimulationError);
  c.measure = 1;
  c.overhead = 0.02;
  CHECK_THROWS_AS(simulate(c), SimulationError);
  c.overhead = 0;
  c.patterns[0].assign = {0};
  CHECK_THROWS_AS(simulate(c), SimulationError);
  c.patterns[0].assign = {0, 2};
  CHECK_THROWS_AS(simulate(c), SimulationError);
  c.patterns[0].assign = {0, 1};
  c.workload.mix = {3};
  CHECK_THROWS_AS(simulate(c), SimulationError);
}

TEST_CASE("workload files: closed, explicit arrivals, Poisson segments and versions") {
  const std::vector<std::string> ids{"decode", "prefill"};
  auto closed = workload_from_json(
      json::parse(R"({"format":"kdisagg.workload","version":1,"kind":"closed","inflight":4,
                       "mix":["prefill","decode"],"tokens_per_request":16})"),
      ids);
  CHECK(closed.kind == Workload::Kind::closed);
  CHECK(closed.inflight == 4);
  CHECK(closed.mix == std::vector<std::size_t>{1, 0});
  CHECK(closed.tokens_per_request == 16);

  auto open = workload_from_json(
      json::parse(R"({"format":"kdisagg.workload","version":1,"kind":"open",
                       "arrivals":[{"t":0.5,"pattern":"decode"},{"t":0.25,"pattern":"prefill"}]})"),
      ids);
  REQUIRE(open.arrivals.size() == 2);
  CHECK(open.arrivals[1].pattern == 1);
  CHECK(open.inflight == 0);

  const auto seg = json::parse(R"({"format":"kdisagg.workload","version":1,"kind":"open",
      "pattern":"decode","seed":5,"segments":[{"duration_s":1,"rate":100},{"duration_s":1,"rate":0},
      {"duration_s":1,"rate":400}]})");
  auto a = workload_from_json(seg, ids), b = workload_from_json(seg, ids);
  REQUIRE(a.arrivals.size() == b.arrivals.size());
  std::size_t first = 0, gap = 0, last = 0;
  for (const auto& x : a.arrivals) (x.time < 1 ? first : x.time < 2 ? gap : last)++;
  CHECK(gap == 0);
  CHECK(first > 60);
  CHECK(first < 140);
  CHECK(last > 320);
  CHECK(last < 480);

  CHECK_THROWS_AS(workload_from_json(json::parse(R"({"format":"kdisagg.workload","version":2,
      "kind":"closed","inflight":1,"mix":["decode"]})"), ids), FormatError);
  CHECK_THROWS_AS(workload_from_json(json::parse(R"({"format":"kdisagg.workload","version":1,
      "kind":"closed","inflight":1,"mix":["missing"]})"), ids), FormatError);
}

TEST_CASE("reports: CSV and JSON emission are stable") {
  auto c = closed_loop(phase_aligned(), 3, 0.01, 0.05);
  c.record_events = true;
  auto r = simulate(c);
  const auto j = report_to_json(c, r);
  CHECK(j["format"] == "kdisagg.simreport");
  CHECK(j["gpus"].size() == 2);
  CHECK(requests_csv(r).rfind("id,pattern,version,arrival_s", 0) == 0);
  CHECK(events_csv(r.events) == events_csv(simulate(c).events));
}
