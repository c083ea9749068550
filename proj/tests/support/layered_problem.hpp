// Copyright 2026 The kdisagg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <random>
#include <string>
#include <vector>

#include "kdisagg/problem.hpp"

namespace kdisagg::testing {

// prefix node, `layers` copies of a 3-kernel layer, suffix node. Kernel a and
// c are fast on GPU 0, b on GPU 1; communication is cheap.
inline PlacementProblem layered(std::size_t layers, Objective obj, std::mt19937_64* jitter = nullptr) {
  PlacementProblem p;
  p.objective = obj;
  p.links = LinkMatrix::uniform(2, 25e9, 5e-6);
  std::vector<std::vector<double>> layer = {{1e-3, 8e-3}, {9e-3, 1.5e-3}, {1.2e-3, 7e-3}};
  if (jitter) {
    std::uniform_real_distribution<double> f(0.8, 1.25);
    for (auto& row : layer)
      for (auto& v : row) v *= f(*jitter);
  }
  auto add = [&](std::string name, std::vector<double> t) {
    p.kernels.push_back(std::move(name));
    p.t.push_back(std::move(t));
    p.pins.push_back(std::nullopt);
    p.footprint.push_back(0);
  };
  add("embed", {2e-3, 2e-3});
  for (std::size_t l = 0; l < layers; ++l) {
    add("a", layer[0]);
    add("b", layer[1]);
    add("c", layer[2]);
  }
  add("head", {3e-3, 4e-3});
  const std::size_t K = p.t.size();
  for (std::size_t k = 1; k < K; ++k) p.edges.push_back({k - 1, k, 1 << 20, 1, "act"});
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t base = 1 + 3 * l;
    p.edges.push_back({base, base + 2, 1 << 16, 1, "res"});
  }
  p.edges.push_back({0, K - 1, 1 << 12, 1, "skip"});
  return p;
}

}  // namespace kdisagg::testing
