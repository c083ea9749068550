// Copyright 2026 The kdisagg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <tuple>
#include <vector>

#include "kdisagg/problem.hpp"

namespace kdisagg {

/// Nodes [start, start + length * repeats) are `repeats` identical blocks
/// collapsed onto one representative block in the reduced problem.
struct Reduction {
  PlacementProblem reduced;
  std::vector<std::size_t> node_map;  // original node -> reduced node
  std::size_t start = 0, length = 0, repeats = 1;

  bool identity() const { return repeats <= 1; }

  /// Uniform expansion: every block takes the representative's placement.
  std::vector<int> expand(const std::vector<int>& reduced_assign) const {
    std::vector<int> a(node_map.size());
    for (std::size_t k = 0; k < node_map.size(); ++k) a[k] = reduced_assign[node_map[k]];
    return a;
  }
};

namespace detail {

using EdgeSig = std::tuple<std::size_t, std::size_t, std::uint64_t, double>;

/// Internal and next-block edge signatures of m blocks, or false when some
/// edge spans two or more blocks or points backwards across blocks.
inline bool block_edges(const PlacementProblem& p, std::size_t s, std::size_t L, std::size_t m,
                        std::vector<std::vector<EdgeSig>>& internal,
                        std::vector<std::vector<EdgeSig>>& next) {
  internal.assign(m, {});
  next.assign(m > 0 ? m - 1 : 0, {});
  const std::size_t end = s + L * m;
  for (const auto& e : p.edges) {
    const bool si = e.src >= s && e.src < end, di = e.dst >= s && e.dst < end;
    if (!si || !di) continue;
    const std::size_t bi = (e.src - s) / L, bj = (e.dst - s) / L;
    const EdgeSig sig{(e.src - s) % L, (e.dst - s) % L, e.bytes, e.weight};
    if (bi == bj) internal[bi].push_back(sig);
    else if (bj == bi + 1) next[bi].push_back(sig);
    else return false;
  }
  for (auto& v : internal) std::sort(v.begin(), v.end());
  for (auto& v : next) std::sort(v.begin(), v.end());
  for (std::size_t b = 1; b < internal.size(); ++b)
    if (internal[b] != internal[0]) return false;
  for (std::size_t b = 1; b < next.size(); ++b)
    if (next[b] != next[0]) return false;
  return true;
}

}  // namespace detail

/// Finds the repetition removing the most nodes (ties: earliest start, then
/// shortest block) and collapses it. Blocks must agree on kernel names,
/// latency rows, pins, internal edges and block-to-next-block edges; edges
/// to nodes outside the region are remapped onto the representative.
inline Reduction reduce_repeated_layers(const PlacementProblem& p) {
  p.validate();
  const std::size_t K = p.node_count();
  // Node signature ids: equal ids iff kernel, latency row and pin agree.
  std::vector<std::size_t> sig(K);
  {
    std::map<std::tuple<std::string, std::vector<double>, std::optional<int>>, std::size_t> ids;
    for (std::size_t k = 0; k < K; ++k) {
      auto key = std::make_tuple(k < p.kernels.size() ? p.kernels[k] : std::string(), p.t[k],
                                 p.pins[k]);
      sig[k] = ids.try_emplace(std::move(key), ids.size()).first->second;
    }
  }

  std::size_t best_s = 0, best_L = 0, best_m = 1, best_saved = 0;
  std::vector<std::vector<detail::EdgeSig>> internal, next;
  for (std::size_t L = 1; 2 * L <= K; ++L) {
    for (std::size_t s = 0; s + 2 * L <= K; ++s) {
      std::size_t m = 1;
      while (s + (m + 1) * L <= K &&
             std::equal(sig.begin() + static_cast<std::ptrdiff_t>(s),
                        sig.begin() + static_cast<std::ptrdiff_t>(s + L),
                        sig.begin() + static_cast<std::ptrdiff_t>(s + m * L)))
        ++m;
      for (; m >= 2 && L * (m - 1) > best_saved; --m) {
        if (detail::block_edges(p, s, L, m, internal, next)) {
          best_s = s;
          best_L = L;
          best_m = m;
          best_saved = L * (m - 1);
          break;
        }
      }
    }
  }

  Reduction r;
  r.node_map.resize(K);
  if (best_m < 2) {
    r.reduced = p;
    std::iota(r.node_map.begin(), r.node_map.end(), 0);
    return r;
  }
  r.start = best_s;
  r.length = best_L;
  r.repeats = best_m;
  const std::size_t end = best_s + best_L * best_m;
  const double m = static_cast<double>(best_m);
  for (std::size_t k = 0; k < K; ++k) {
    if (k < best_s) r.node_map[k] = k;
    else if (k < end) r.node_map[k] = best_s + (k - best_s) % best_L;
    else r.node_map[k] = k - (best_m - 1) * best_L;
  }

  PlacementProblem& q = r.reduced;
  q.gpus = p.gpus;
  q.links = p.links;
  q.objective = p.objective;
  const std::size_t KR = K - (best_m - 1) * best_L;
  q.t.resize(KR);
  q.pins.resize(KR);
  q.kernels.resize(KR);
  q.footprint.assign(KR, 0);
  for (std::size_t k = 0; k < K; ++k) {
    const std::size_t rk = r.node_map[k];
    const bool rep = k >= best_s && k < end;
    if (rep && k >= best_s + best_L) {
      if (k < p.footprint.size()) q.footprint[rk] += p.footprint[k];
      continue;
    }
    q.t[rk] = p.t[k];
    if (rep)
      for (auto& v : q.t[rk]) v *= m;
    q.pins[rk] = p.pins[k];
    q.kernels[rk] = k < p.kernels.size() ? p.kernels[k] : std::string();
    if (k < p.footprint.size()) q.footprint[rk] += p.footprint[k];
  }
  for (const auto& e : p.edges) {
    const bool si = e.src >= best_s && e.src < end, di = e.dst >= best_s && e.dst < end;
    ProblemEdge re = e;
    re.src = r.node_map[e.src];
    re.dst = r.node_map[e.dst];
    if (si && di) {
      const std::size_t bi = (e.src - best_s) / best_L, bj = (e.dst - best_s) / best_L;
      // one representative stands in for all copies of the block's edges
      if (bi != 0) continue;
      re.weight *= bj == bi ? m : m - 1;
    }
    if (re.src == re.dst) continue;  // never cut under a uniform placement
    q.edges.push_back(re);
  }
  return r;
}

/// Solves the reduced problem with `solver`, expands, and re-evaluates the
/// expanded placement on the original problem.
inline Placement solve_reduced(const PlacementProblem& p, const Reduction& r,
                               const std::function<Placement(const PlacementProblem&)>& solver) {
  Placement reduced = solver(r.reduced);
  Placement pl = evaluate(p, r.expand(reduced.assign));
  pl.solver = reduced.solver + "+reduced";
  pl.explored = reduced.explored;
  pl.optimal = false;
  return pl;
}

}  // namespace kdisagg
