// Copyright 2026 The kdisagg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "kdisagg/error.hpp"
#include "kdisagg/problem.hpp"

namespace kdisagg {

namespace detail {

/// Incrementally maintained T_g, M_g and latency sum for an assignment.
class LoadState {
 public:
  explicit LoadState(const PlacementProblem& p) : p_(p), G_(p.gpu_count()) {
    incident_.resize(p.node_count());
    cost_.resize(p.edges.size());
    for (std::size_t e = 0; e < p.edges.size(); ++e) {
      incident_[p.edges[e].src].push_back(e);
      incident_[p.edges[e].dst].push_back(e);
      cost_[e].assign(G_ * G_, 0);
      for (std::size_t u = 0; u < G_; ++u)
        for (std::size_t g = 0; g < G_; ++g)
          if (u != g) cost_[e][u * G_ + g] = p.edges[e].weight * p.comm_cost(u, g, p.edges[e].bytes);
    }
  }

  void reset(const std::vector<int>& assign) {
    a_ = assign;
    T_.assign(G_, 0);
    M_.assign(G_, 0);
    total_ = 0;
    for (std::size_t k = 0; k < a_.size(); ++k) {
      T_[g(k)] += p_.t[k][g(k)];
      total_ += p_.t[k][g(k)];
    }
    for (std::size_t e = 0; e < p_.edges.size(); ++e) {
      double c = edge_cost(e);
      M_[g(p_.edges[e].dst)] += c;
      total_ += c;
    }
  }

  /// Reassigns node k; only edges incident to k change.
  void move(std::size_t k, int to) {
    for (auto e : incident_[k]) {
      double c = edge_cost(e);
      M_[g(p_.edges[e].dst)] -= c;
      total_ -= c;
    }
    T_[g(k)] -= p_.t[k][g(k)];
    total_ -= p_.t[k][g(k)];
    a_[k] = to;
    T_[g(k)] += p_.t[k][g(k)];
    total_ += p_.t[k][g(k)];
    for (auto e : incident_[k]) {
      double c = edge_cost(e);
      M_[g(p_.edges[e].dst)] += c;
      total_ += c;
    }
  }

  double objective() const {
    if (p_.objective == Objective::latency) return total_;
    double w = 0;
    for (std::size_t i = 0; i < G_; ++i) w = std::max({w, T_[i], M_[i]});
    return w;
  }

  /// Tie-breaker for plateaus of the min-max objective.
  double secondary() const {
    double s = 0;
    for (std::size_t i = 0; i < G_; ++i) s += std::max(T_[i], M_[i]);
    return s;
  }

  const std::vector<int>& assign() const { return a_; }
  int gpu_of(std::size_t k) const { return a_[k]; }

 private:
  std::size_t g(std::size_t k) const { return static_cast<std::size_t>(a_[k]); }
  double edge_cost(std::size_t e) const {
    return cost_[e][g(p_.edges[e].src) * G_ + g(p_.edges[e].dst)];
  }

  const PlacementProblem& p_;
  std::size_t G_;
  std::vector<std::vector<std::size_t>> incident_;
  std::vector<std::vector<double>> cost_;
  std::vector<int> a_;
  std::vector<double> T_, M_;
  double total_ = 0;
};

inline bool better(double a, double b) { return a < b - 1e-12 * std::max(1.0, std::abs(b)); }

}  // namespace detail

/// Each node on its fastest GPU (lowest index on ties), pins honored.
inline std::vector<int> greedy_seed(const PlacementProblem& p) {
  std::vector<int> a(p.node_count(), 0);
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (p.pins[k]) {
      a[k] = *p.pins[k];
      continue;
    }
    std::size_t best = 0;
    for (std::size_t g = 1; g < p.gpu_count(); ++g)
      if (p.t[k][g] < p.t[k][best]) best = g;
    a[k] = static_cast<int>(best);
  }
  return a;
}

struct HeuristicOptions {
  std::uint64_t seed = 0;
  double budget_seconds = 1.0;
  /// Deterministic stop: the wall budget only matters if this is never hit.
  std::uint64_t max_evaluations = 20'000'000;
  bool swaps = true;
  std::size_t max_segment = 8;
};

/// Greedy seed followed by first-improvement local search over single-node
/// moves and pairwise swaps, visited in a seeded random order.
inline Placement solve_heuristic(const PlacementProblem& p, const HeuristicOptions& opt = {}) {
  p.validate();
  const std::size_t K = p.node_count(), G = p.gpu_count();
  detail::LoadState s(p);
  s.reset(greedy_seed(p));
  std::mt19937_64 rng(opt.seed);
  const auto t0 = std::chrono::steady_clock::now();
  std::uint64_t evals = 0;
  bool out_of_budget = false;
  auto tick = [&]() {
    ++evals;
    if (evals >= opt.max_evaluations) out_of_budget = true;
    if ((evals & 1023) == 0 &&
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() >
            opt.budget_seconds)
      out_of_budget = true;
  };
  auto improves = [&](double obj, double sec, double cur_obj, double cur_sec) {
    if (detail::better(obj, cur_obj)) return true;
    if (detail::better(cur_obj, obj)) return false;
    return p.objective == Objective::throughput && detail::better(sec, cur_sec);
  };

  std::vector<std::size_t> movable;
  for (std::size_t k = 0; k < K; ++k)
    if (!p.pins[k]) movable.push_back(k);

  bool improved = G > 1 && !movable.empty();
  while (improved && !out_of_budget) {
    improved = false;
    std::shuffle(movable.begin(), movable.end(), rng);
    for (std::size_t k : movable) {
      for (std::size_t g = 0; g < G && !out_of_budget; ++g) {
        const int from = s.gpu_of(k);
        if (static_cast<int>(g) == from) continue;
        const double cur = s.objective(), cur2 = s.secondary();
        s.move(k, static_cast<int>(g));
        tick();
        if (improves(s.objective(), s.secondary(), cur, cur2)) {
          improved = true;
        } else {
          s.move(k, from);
        }
      }
      if (out_of_budget) break;
    }
    if (improved || out_of_budget) continue;
    // Contiguous runs in seq order: moving a chain segment at once can
    // remove two cuts where any single move would add one.
    std::vector<int> before;
    for (std::size_t start = 0; start < K && !out_of_budget; ++start) {
      for (std::size_t len = 2; len <= opt.max_segment && start + len <= K && !out_of_budget; ++len) {
        for (std::size_t g = 0; g < G && !out_of_budget; ++g) {
          bool changes = false;
          for (std::size_t k = start; k < start + len; ++k)
            changes |= !p.pins[k] && s.gpu_of(k) != static_cast<int>(g);
          if (!changes) continue;
          const double cur = s.objective(), cur2 = s.secondary();
          before.assign(s.assign().begin() + static_cast<std::ptrdiff_t>(start),
                        s.assign().begin() + static_cast<std::ptrdiff_t>(start + len));
          for (std::size_t k = start; k < start + len; ++k)
            if (!p.pins[k]) s.move(k, static_cast<int>(g));
          tick();
          if (improves(s.objective(), s.secondary(), cur, cur2)) {
            improved = true;
          } else {
            for (std::size_t k = start; k < start + len; ++k)
              if (!p.pins[k]) s.move(k, before[k - start]);
          }
        }
      }
    }
    if (improved || !opt.swaps || out_of_budget) continue;
    for (std::size_t i = 0; i < movable.size() && !improved && !out_of_budget; ++i) {
      for (std::size_t j = i + 1; j < movable.size() && !out_of_budget; ++j) {
        const std::size_t a = movable[i], b = movable[j];
        const int ga = s.gpu_of(a), gb = s.gpu_of(b);
        if (ga == gb) continue;
        const double cur = s.objective(), cur2 = s.secondary();
        s.move(a, gb);
        s.move(b, ga);
        tick();
        if (improves(s.objective(), s.secondary(), cur, cur2)) {
          improved = true;
          break;
        }
        s.move(b, gb);
        s.move(a, ga);
      }
    }
  }
  Placement pl = evaluate(p, s.assign());
  pl.solver = "heuristic";
  pl.explored = evals;
  return pl;
}

struct ExactOptions {
  std::size_t max_binary_vars = 60;  // free x variables
  std::uint64_t max_nodes = std::numeric_limits<std::uint64_t>::max();
};

/// Depth-first branch and bound over nodes in seq order, GPUs in index
/// order. Lower bounds relax all communication not yet decided to zero.
inline Placement solve_exact(const PlacementProblem& p, const ExactOptions& opt = {}) {
  p.validate();
  const std::size_t K = p.node_count(), G = p.gpu_count();
  std::size_t free_vars = 0;
  for (std::size_t k = 0; k < K; ++k)
    if (!p.pins[k]) free_vars += G;
  if (G > 1 && free_vars > opt.max_binary_vars)
    throw PlanningError("exact solver size guard: " + std::to_string(free_vars) +
                        " free binary variables exceed the limit of " +
                        std::to_string(opt.max_binary_vars));

  // Edges are charged once both endpoints are placed.
  std::vector<std::vector<std::size_t>> closing(K);
  for (std::size_t e = 0; e < p.edges.size(); ++e)
    closing[std::max(p.edges[e].src, p.edges[e].dst)].push_back(e);
  std::vector<std::vector<double>> cost(p.edges.size(), std::vector<double>(G * G, 0));
  for (std::size_t e = 0; e < p.edges.size(); ++e)
    for (std::size_t u = 0; u < G; ++u)
      for (std::size_t g = 0; g < G; ++g)
        if (u != g) cost[e][u * G + g] = p.edges[e].weight * p.comm_cost(u, g, p.edges[e].bytes);

  std::vector<std::vector<std::size_t>> allowed(K);
  std::vector<double> min_t(K), suffix_min(K + 1, 0);
  for (std::size_t k = 0; k < K; ++k) {
    if (p.pins[k]) allowed[k] = {static_cast<std::size_t>(*p.pins[k])};
    else
      for (std::size_t g = 0; g < G; ++g) allowed[k].push_back(g);
    min_t[k] = std::numeric_limits<double>::infinity();
    for (auto g : allowed[k]) min_t[k] = std::min(min_t[k], p.t[k][g]);
  }
  for (std::size_t k = K; k-- > 0;) suffix_min[k] = suffix_min[k + 1] + min_t[k];

  Placement seed = solve_heuristic(p, HeuristicOptions{0, 1e9, 200'000, true});
  std::vector<int> best_assign = seed.assign;
  double best = seed.objective_value;

  std::vector<int> a(K, -1);
  std::vector<double> T(G, 0), M(G, 0);
  double total = 0, sumT = 0;
  std::uint64_t visited = 0;
  bool exhausted = true;

  auto lower_bound = [&](std::size_t depth) {
    if (p.objective == Objective::latency) return total + suffix_min[depth];
    double lb = 0;
    for (std::size_t g = 0; g < G; ++g) lb = std::max({lb, T[g], M[g]});
    lb = std::max(lb, (sumT + suffix_min[depth]) / static_cast<double>(G));
    for (std::size_t k = depth; k < K; ++k) {
      double m = std::numeric_limits<double>::infinity();
      for (auto g : allowed[k]) m = std::min(m, T[g] + p.t[k][g]);
      lb = std::max(lb, m);
      if (lb >= best) break;
    }
    return lb;
  };
  auto current = [&]() {
    if (p.objective == Objective::latency) return total;
    double w = 0;
    for (std::size_t g = 0; g < G; ++g) w = std::max({w, T[g], M[g]});
    return w;
  };

  auto dfs = [&](auto&& self, std::size_t depth) -> void {
    if (++visited > opt.max_nodes) {
      exhausted = false;
      return;
    }
    if (depth == K) {
      double v = current();
      if (detail::better(v, best)) {
        best = v;
        best_assign = a;
      }
      return;
    }
    for (auto g : allowed[depth]) {
      a[depth] = static_cast<int>(g);
      const double tk = p.t[depth][g];
      T[g] += tk;
      sumT += tk;
      total += tk;
      for (auto e : closing[depth]) {
        const auto& ed = p.edges[e];
        double c = cost[e][static_cast<std::size_t>(a[ed.src]) * G + static_cast<std::size_t>(a[ed.dst])];
        M[static_cast<std::size_t>(a[ed.dst])] += c;
        total += c;
      }
      if (lower_bound(depth + 1) < best - 1e-12 * std::max(1.0, std::abs(best)))
        self(self, depth + 1);
      for (auto e : closing[depth]) {
        const auto& ed = p.edges[e];
        double c = cost[e][static_cast<std::size_t>(a[ed.src]) * G + static_cast<std::size_t>(a[ed.dst])];
        M[static_cast<std::size_t>(a[ed.dst])] -= c;
        total -= c;
      }
      T[g] -= tk;
      sumT -= tk;
      total -= tk;
      a[depth] = -1;
      if (!exhausted) return;
    }
  };
  dfs(dfs, 0);

  Placement pl = evaluate(p, best_assign);
  pl.solver = "exact";
  pl.optimal = exhausted;
  pl.explored = visited;
  return pl;
}

}  // namespace kdisagg
