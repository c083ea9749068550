// Copyright 2026 The kdisagg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "kdisagg/sim.hpp"

namespace kdisagg::testing {

/// Chain whose node k runs on `gpu[k]` for `ms[k]` milliseconds (same on
/// every GPU); edge k -> k+1 moves `xfer_ms[k]` milliseconds worth of bytes
/// over a 1 GB/s, zero-latency link.
inline SimPattern ms_chain(std::size_t gpus, const std::vector<int>& gpu,
                           const std::vector<double>& ms, const std::vector<double>& xfer_ms) {
  SimPattern sp;
  sp.id = "chain";
  auto& p = sp.problem;
  p.links = LinkMatrix::uniform(gpus, 1e9, 0);
  for (std::size_t k = 0; k < ms.size(); ++k) {
    p.t.push_back(std::vector<double>(gpus, ms[k] * 1e-3));
    p.pins.push_back(std::nullopt);
    p.kernels.push_back("k" + std::to_string(k));
  }
  for (std::size_t k = 0; k + 1 < ms.size(); ++k)
    p.edges.push_back({k, k + 1, static_cast<std::uint64_t>(std::llround(xfer_ms[k] * 1e6)), 1, "b"});
  sp.assign = gpu;
  return sp;
}

/// Three-phase pattern whose phases line up across requests under round
/// robin: G0 runs 3 x 0.5 ms, 1 ms to G1, G1 runs 2 x 1.5 ms, 1 ms back,
/// G0 runs 1.5 ms.
inline SimPattern phase_aligned() {
  return ms_chain(2, {0, 0, 0, 1, 1, 0}, {0.5, 0.5, 0.5, 1.5, 1.5, 1.5}, {0, 0, 1, 0, 1});
}

/// Random DAG placed in runs over 2 or 3 GPUs, rescaled so every GPU has the
/// same T_g and every M_g is at most 0.9 T_g.
inline SimPattern balanced_dag(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  const std::size_t G = 2 + seed % 2;
  const std::size_t K = 12 + rng() % 20;
  SimPattern sp;
  sp.id = "balanced" + std::to_string(seed);
  auto& p = sp.problem;
  p.links = LinkMatrix::uniform(G, 10e9, 2e-6);
  int g = 0;
  for (std::size_t k = 0; k < K; ++k) {
    if (k > 0 && u(rng) < 0.3) g = (g + 1) % static_cast<int>(G);
    sp.assign.push_back(g);
    p.t.push_back(std::vector<double>(G, (0.2 + u(rng)) * 1e-3));
    p.pins.push_back(std::nullopt);
    p.kernels.push_back("k" + std::to_string(k));
  }
  for (std::size_t j = 1; j < K; ++j) {
    p.edges.push_back({j - 1, j, static_cast<std::uint64_t>(1e6 * (1 + 9 * u(rng))), 1, "b"});
    if (j >= 2 && u(rng) < 0.3)
      p.edges.push_back({rng() % (j - 1), j, static_cast<std::uint64_t>(1e6 * (1 + 9 * u(rng))), 1, "b"});
  }
  auto pl = evaluate(p, sp.assign);
  const double T = *std::max_element(pl.T.begin(), pl.T.end());
  for (std::size_t k = 0; k < K; ++k)
    for (auto& v : p.t[k]) v *= T / pl.T[static_cast<std::size_t>(sp.assign[k])];
  pl = evaluate(p, sp.assign);
  const double M = *std::max_element(pl.M.begin(), pl.M.end());
  if (M > 0.9 * T)
    for (auto& e : p.edges) e.bytes = static_cast<std::uint64_t>(static_cast<double>(e.bytes) * 0.9 * T / M);
  return sp;
}

/// Requests in flight needed to keep the slowest stage busy: enough to
/// cover four single-request latencies at the bottleneck rate.
inline std::size_t saturating_depth(const SimPattern& sp) {
  auto p = sp.problem;
  p.objective = Objective::latency;
  const double serial = evaluate(p, sp.assign).objective_value;
  p.objective = Objective::throughput;
  const double w = evaluate(p, sp.assign).objective_value;
  return static_cast<std::size_t>(std::ceil(4 * serial / w)) + 1;
}

inline SimConfig closed_loop(SimPattern sp, std::size_t inflight, double warmup, double measure) {
  SimConfig c;
  c.patterns = {std::move(sp)};
  c.workload.kind = Workload::Kind::closed;
  c.workload.inflight = inflight;
  c.warmup = warmup;
  c.measure = measure;
  return c;
}

inline SimConfig open_loop(SimPattern sp, std::vector<Arrival> arrivals, std::size_t cap = 0) {
  SimConfig c;
  c.patterns = {std::move(sp)};
  c.workload.kind = Workload::Kind::open;
  c.workload.inflight = cap;
  c.workload.arrivals = std::move(arrivals);
  return c;
}

}  // namespace kdisagg::testing
