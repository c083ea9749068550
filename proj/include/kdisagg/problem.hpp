// Copyright 2026 The kdisagg Authors
// SPDX-License-Identifier: Apache-2.0

// Placement problem: GPUs, links, per-kernel latencies, DDG edges and pins,
// plus the closed-form objective evaluation every solver is audited against.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "kdisagg/ddg.hpp"
#include "kdisagg/error.hpp"
#include "kdisagg/io.hpp"

namespace kdisagg {

enum class Objective { throughput, latency };

inline const char* to_string(Objective o) {
  return o == Objective::throughput ? "throughput" : "latency";
}

inline Objective objective_from(const std::string& s) {
  if (s == "throughput") return Objective::throughput;
  if (s == "latency") return Objective::latency;
  throw Error("unknown objective '" + s + "' (expected throughput or latency)");
}

struct GpuSpec {
  std::string id;
  std::string name;
  std::uint64_t memory_bytes = 0;
  double hbm_gbs = 0;  // display only
  double price = 1.0;
};

/// bw in bytes/second, ell in seconds, indexed [from][to].
struct LinkMatrix {
  std::vector<std::vector<double>> bw;
  std::vector<std::vector<double>> ell;

  static LinkMatrix uniform(std::size_t n, double bw_bytes_per_s, double ell_s) {
    LinkMatrix m;
    m.bw.assign(n, std::vector<double>(n, bw_bytes_per_s));
    m.ell.assign(n, std::vector<double>(n, ell_s));
    for (std::size_t i = 0; i < n; ++i) m.bw[i][i] = m.ell[i][i] = 0;
    return m;
  }

  std::size_t size() const { return bw.size(); }
};

struct ProblemEdge {
  std::size_t src = 0;
  std::size_t dst = 0;
  std::uint64_t bytes = 0;
  double weight = 1.0;  // multiplicity; 1 except in reduced problems
  std::string buffer;
};

struct PlacementProblem {
  std::vector<std::string> kernels;       // per node, for reporting
  std::vector<std::vector<double>> t;     // [node][gpu] seconds
  std::vector<ProblemEdge> edges;
  std::vector<std::optional<int>> pins;   // per node
  std::vector<GpuSpec> gpus;
  LinkMatrix links;
  Objective objective = Objective::throughput;
  std::vector<std::uint64_t> footprint;   // per node bytes, for capacity reports

  std::size_t node_count() const { return t.size(); }
  std::size_t gpu_count() const { return links.size(); }

  /// Cost of moving `bytes` from u to g.
  double comm_cost(std::size_t u, std::size_t g, std::uint64_t bytes) const {
    return links.ell[u][g] + static_cast<double>(bytes) / links.bw[u][g];
  }

  void validate() const {
    const std::size_t G = gpu_count();
    if (G == 0) throw PlanningError("placement problem has no GPUs");
    if (!gpus.empty() && gpus.size() != G)
      throw PlanningError("GPU list and link matrix disagree on the GPU count");
    for (std::size_t u = 0; u < G; ++u) {
      if (links.bw[u].size() != G || links.ell[u].size() != G)
        throw PlanningError("link matrix is not square");
      for (std::size_t g = 0; g < G; ++g) {
        if (u == g) continue;
        if (!(links.bw[u][g] > 0)) throw PlanningError("link bandwidth must be positive");
        if (!(links.ell[u][g] >= 0)) throw PlanningError("link latency must be non-negative");
      }
    }
    if (pins.size() != t.size()) throw PlanningError("pin vector does not match node count");
    for (std::size_t k = 0; k < t.size(); ++k) {
      if (t[k].size() != G)
        throw PlanningError("latency row of node " + std::to_string(k) + " has wrong length");
      for (double v : t[k])
        if (!(v > 0) || !std::isfinite(v))
          throw PlanningError("latency of node " + std::to_string(k) + " must be positive");
      if (pins[k] && (*pins[k] < 0 || static_cast<std::size_t>(*pins[k]) >= G))
        throw PlanningError("node " + std::to_string(k) + " pinned to unknown GPU " +
                            std::to_string(*pins[k]));
    }
    for (const auto& e : edges)
      if (e.src >= t.size() || e.dst >= t.size() || e.src == e.dst)
        throw PlanningError("edge references an invalid node");
  }
};

struct CutEdge {
  std::size_t src = 0, dst = 0;
  std::size_t from = 0, to = 0;
  std::uint64_t bytes = 0;
  double weight = 1.0;
  double cost = 0;  // weight * (ell + d/bw)
};

struct Placement {
  std::vector<int> assign;
  Objective objective = Objective::throughput;
  double objective_value = 0;
  std::vector<double> T, M, W;
  std::vector<CutEdge> cut;
  std::string solver;
  bool optimal = false;
  std::uint64_t explored = 0;
};

/// Recomputes T_g, M_g (incoming cut edges only), W_g and the objective.
inline Placement evaluate(const PlacementProblem& p, const std::vector<int>& assign) {
  const std::size_t G = p.gpu_count();
  if (assign.size() != p.node_count()) throw PlanningError("assignment does not cover every node");
  Placement pl;
  pl.assign = assign;
  pl.objective = p.objective;
  pl.T.assign(G, 0);
  pl.M.assign(G, 0);
  pl.W.assign(G, 0);
  double compute = 0;
  for (std::size_t k = 0; k < assign.size(); ++k) {
    if (assign[k] < 0 || static_cast<std::size_t>(assign[k]) >= G)
      throw PlanningError("node " + std::to_string(k) + " assigned to an invalid GPU");
    pl.T[static_cast<std::size_t>(assign[k])] += p.t[k][static_cast<std::size_t>(assign[k])];
    compute += p.t[k][static_cast<std::size_t>(assign[k])];
  }
  double comm = 0;
  for (const auto& e : p.edges) {
    const auto u = static_cast<std::size_t>(assign[e.src]);
    const auto g = static_cast<std::size_t>(assign[e.dst]);
    if (u == g) continue;
    const double c = e.weight * p.comm_cost(u, g, e.bytes);
    pl.M[g] += c;
    comm += c;
    pl.cut.push_back({e.src, e.dst, u, g, e.bytes, e.weight, c});
  }
  for (std::size_t g = 0; g < G; ++g) pl.W[g] = std::max(pl.T[g], pl.M[g]);
  pl.objective_value = p.objective == Objective::throughput
                           ? *std::max_element(pl.W.begin(), pl.W.end())
                           : compute + comm;
  return pl;
}

inline bool respects_pins(const PlacementProblem& p, const std::vector<int>& assign) {
  for (std::size_t k = 0; k < assign.size(); ++k)
    if (p.pins[k] && *p.pins[k] != assign[k]) return false;
  return true;
}

// ---- file formats -----------------------------------------------------------

inline constexpr const char* kGpusFormat = "kdisagg.gpus";
inline constexpr const char* kLinksFormat = "kdisagg.links";
inline constexpr const char* kProfileFormat = "kdisagg.profile";
inline constexpr const char* kPlacementFormat = "kdisagg.placement";
inline constexpr int kPlannerFileVersion = 1;

inline std::vector<GpuSpec> gpus_from_json(const json& j, const std::string& where) {
  check_envelope(j, kGpusFormat, kPlannerFileVersion, where);
  std::vector<GpuSpec> out;
  try {
    for (const auto& g : j.at("gpus")) {
      GpuSpec s;
      s.id = g.at("id").get<std::string>();
      s.name = g.value("name", s.id);
      s.memory_bytes = static_cast<std::uint64_t>(g.value("memory_gb", 0.0) * 1e9);
      s.hbm_gbs = g.value("hbm_gbs", 0.0);
      s.price = g.value("price", 1.0);
      if (!(s.price > 0)) throw FormatError(where + ": price of '" + s.id + "' must be positive");
      for (const auto& o : out)
        if (o.id == s.id) throw FormatError(where + ": duplicate GPU id '" + s.id + "'");
      out.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw FormatError(where + ": " + e.what());
  }
  if (out.empty()) throw FormatError(where + ": no GPUs");
  return out;
}

inline std::size_t gpu_index(const std::vector<GpuSpec>& gpus, const std::string& id,
                             const std::string& where) {
  for (std::size_t i = 0; i < gpus.size(); ++i)
    if (gpus[i].id == id) return i;
  throw FormatError(where + ": unknown GPU '" + id + "'");
}

/// Links: a default {bw_gbs, latency_us} plus optional per-pair overrides.
/// Pairs are symmetric unless "symmetric": false.
inline LinkMatrix links_from_json(const json& j, const std::vector<GpuSpec>& gpus,
                                  const std::string& where) {
  check_envelope(j, kLinksFormat, kPlannerFileVersion, where);
  try {
    const auto& d = j.at("default");
    LinkMatrix m = LinkMatrix::uniform(gpus.size(), d.at("bw_gbs").get<double>() * 1e9,
                                       d.value("latency_us", 0.0) * 1e-6);
    const bool symmetric = j.value("symmetric", true);
    if (j.contains("pairs")) {
      for (const auto& pr : j["pairs"]) {
        auto u = gpu_index(gpus, pr.at("from").get<std::string>(), where);
        auto g = gpu_index(gpus, pr.at("to").get<std::string>(), where);
        if (u == g) throw FormatError(where + ": link from a GPU to itself");
        double bw = pr.at("bw_gbs").get<double>() * 1e9;
        double ell = pr.value("latency_us", d.value("latency_us", 0.0)) * 1e-6;
        m.bw[u][g] = bw;
        m.ell[u][g] = ell;
        if (symmetric) {
          m.bw[g][u] = bw;
          m.ell[g][u] = ell;
        }
      }
    }
    return m;
  } catch (const json::exception& e) {
    throw FormatError(where + ": " + e.what());
  }
}

/// Profiled latencies: "kernels" maps kernel name -> {gpu id: seconds};
/// "nodes" maps a seq to the same shape and overrides the kernel entry.
inline std::vector<std::vector<double>> latencies_from_json(const json& j,
                                                            const DependencyGraph& g,
                                                            const std::vector<GpuSpec>& gpus,
                                                            const std::string& where) {
  check_envelope(j, kProfileFormat, kPlannerFileVersion, where);
  auto row = [&](const json& r, const std::string& what) {
    std::vector<double> v(gpus.size(), std::numeric_limits<double>::quiet_NaN());
    for (const auto& [id, sec] : r.items()) v[gpu_index(gpus, id, where)] = sec.get<double>();
    for (std::size_t i = 0; i < v.size(); ++i)
      if (std::isnan(v[i]))
        throw FormatError(where + ": " + what + " has no latency for GPU '" + gpus[i].id + "'");
    return v;
  };
  std::vector<std::vector<double>> t;
  try {
    for (const auto& n : g.nodes) {
      const std::string seq = std::to_string(n.seq);
      if (j.contains("nodes") && j["nodes"].contains(seq))
        t.push_back(row(j["nodes"][seq], "node " + seq));
      else if (j.contains("kernels") && j["kernels"].contains(n.kernel))
        t.push_back(row(j["kernels"][n.kernel], "kernel '" + n.kernel + "'"));
      else
        throw FormatError(where + ": no profiled latency for node " + seq + " (" + n.kernel + ")");
    }
  } catch (const json::exception& e) {
    throw FormatError(where + ": " + e.what());
  }
  return t;
}

struct ProblemOptions {
  Objective objective = Objective::throughput;
  int default_pin_gpu = 0;  // GPU for pins that name none (indirect fallback)
};

inline PlacementProblem make_problem(const DependencyGraph& g, std::vector<GpuSpec> gpus,
                                     LinkMatrix links, std::vector<std::vector<double>> t,
                                     const ProblemOptions& opt = {}) {
  PlacementProblem p;
  p.gpus = std::move(gpus);
  p.links = std::move(links);
  p.t = std::move(t);
  p.objective = opt.objective;
  p.pins.assign(g.nodes.size(), std::nullopt);
  for (const auto& n : g.nodes) {
    p.kernels.push_back(n.kernel);
    p.footprint.push_back(n.footprint);
  }
  for (const auto& pin : g.pinned) {
    int gpu = pin.gpu.value_or(opt.default_pin_gpu);
    if (p.pins[pin.node] && *p.pins[pin.node] != gpu)
      throw PlanningError("node " + std::to_string(pin.node) + " pinned to GPUs " +
                          std::to_string(*p.pins[pin.node]) + " and " + std::to_string(gpu));
    p.pins[pin.node] = gpu;
  }
  for (const auto& e : g.edges) p.edges.push_back({e.src, e.dst, e.bytes, 1.0, e.buffer});
  p.validate();
  return p;
}

inline json placement_to_json(const PlacementProblem& p, const Placement& pl,
                              const std::string& pattern) {
  auto gpu_name = [&](std::size_t g) {
    return g < p.gpus.size() ? p.gpus[g].id : std::to_string(g);
  };
  json j;
  j["format"] = kPlacementFormat;
  j["version"] = kPlannerFileVersion;
  j["pattern"] = pattern;
  j["objective"] = to_string(pl.objective);
  j["objective_value"] = pl.objective_value;
  j["solver"] = pl.solver;
  j["optimal"] = pl.optimal;
  j["assign"] = json::array();
  for (std::size_t k = 0; k < pl.assign.size(); ++k)
    j["assign"].push_back({{"node", k},
                           {"kernel", k < p.kernels.size() ? p.kernels[k] : std::string()},
                           {"gpu", gpu_name(static_cast<std::size_t>(pl.assign[k]))}});
  j["gpus"] = json::array();
  for (std::size_t g = 0; g < pl.T.size(); ++g)
    j["gpus"].push_back({{"gpu", gpu_name(g)}, {"T", pl.T[g]}, {"M", pl.M[g]}, {"W", pl.W[g]}});
  j["cut_edges"] = json::array();
  for (const auto& c : pl.cut)
    j["cut_edges"].push_back({{"src", c.src}, {"dst", c.dst}, {"from", gpu_name(c.from)},
                              {"to", gpu_name(c.to)}, {"bytes", c.bytes}, {"cost", c.cost}});
  return j;
}

/// Reads the assignment of a placement file against the problem's GPU list.
inline std::vector<int> assignment_from_json(const json& j, const std::vector<GpuSpec>& gpus,
                                             const std::string& where = "placement") {
  check_envelope(j, kPlacementFormat, kPlannerFileVersion, where);
  std::vector<int> a;
  try {
    for (const auto& e : j.at("assign")) {
      if (e.at("node").get<std::size_t>() != a.size())
        throw FormatError(where + ": assignment must list nodes in order");
      a.push_back(static_cast<int>(gpu_index(gpus, e.at("gpu").get<std::string>(), where)));
    }
  } catch (const json::exception& e) {
    throw FormatError(where + ": " + e.what());
  }
  return a;
}

inline constexpr const char* kProblemFormat = "kdisagg.problem";

/// Self-contained problem file (SI units: seconds, bytes, bytes/second).
inline json problem_to_json(const PlacementProblem& p) {
  json j;
  j["format"] = kProblemFormat;
  j["version"] = kPlannerFileVersion;
  j["objective"] = to_string(p.objective);
  j["gpus"] = json::array();
  for (const auto& g : p.gpus)
    j["gpus"].push_back({{"id", g.id}, {"name", g.name}, {"memory_bytes", g.memory_bytes},
                         {"hbm_gbs", g.hbm_gbs}, {"price", g.price}});
  j["bw"] = p.links.bw;
  j["ell"] = p.links.ell;
  j["kernels"] = p.kernels;
  j["t"] = p.t;
  j["edges"] = json::array();
  for (const auto& e : p.edges)
    j["edges"].push_back({{"src", e.src}, {"dst", e.dst}, {"bytes", e.bytes}, {"weight", e.weight}});
  j["pins"] = json::array();
  for (const auto& pin : p.pins) j["pins"].push_back(pin ? json(*pin) : json(nullptr));
  j["footprint"] = p.footprint;
  return j;
}

inline PlacementProblem problem_from_json(const json& j, const std::string& where = "problem") {
  check_envelope(j, kProblemFormat, kPlannerFileVersion, where);
  PlacementProblem p;
  try {
    p.objective = objective_from(j.at("objective").get<std::string>());
    if (j.contains("gpus"))
      for (const auto& g : j["gpus"])
        p.gpus.push_back({g.at("id").get<std::string>(), g.value("name", std::string()),
                          g.value("memory_bytes", std::uint64_t{0}), g.value("hbm_gbs", 0.0),
                          g.value("price", 1.0)});
    p.links.bw = j.at("bw").get<std::vector<std::vector<double>>>();
    p.links.ell = j.at("ell").get<std::vector<std::vector<double>>>();
    p.t = j.at("t").get<std::vector<std::vector<double>>>();
    p.kernels = j.value("kernels", std::vector<std::string>(p.t.size()));
    for (const auto& e : j.at("edges"))
      p.edges.push_back({e.at("src").get<std::size_t>(), e.at("dst").get<std::size_t>(),
                         e.at("bytes").get<std::uint64_t>(), e.value("weight", 1.0), ""});
    p.pins.assign(p.t.size(), std::nullopt);
    if (j.contains("pins")) {
      if (j["pins"].size() != p.t.size()) throw FormatError(where + ": pins do not match nodes");
      for (std::size_t k = 0; k < p.t.size(); ++k)
        if (!j["pins"][k].is_null()) p.pins[k] = j["pins"][k].get<int>();
    }
    p.footprint = j.value("footprint", std::vector<std::uint64_t>(p.t.size(), 0));
  } catch (const json::exception& e) {
    throw FormatError(where + ": " + e.what());
  } catch (const Error& e) {
    throw FormatError(where + ": " + e.what());
  }
  try {
    p.validate();
  } catch (const PlanningError& e) {
    throw FormatError(where + ": " + e.what());
  }
  return p;
}

struct CapacityReport {
  std::vector<std::uint64_t> used;  // bytes per GPU
  std::vector<std::string> warnings;
};

/// Post-hoc memory check: the footprint of every node placed on a GPU
/// against that GPU's capacity (capacity is not a planning constraint).
inline CapacityReport capacity_report(const PlacementProblem& p, const std::vector<int>& assign) {
  CapacityReport r;
  r.used.assign(p.gpu_count(), 0);
  for (std::size_t k = 0; k < assign.size() && k < p.footprint.size(); ++k)
    r.used[static_cast<std::size_t>(assign[k])] += p.footprint[k];
  for (std::size_t g = 0; g < p.gpus.size(); ++g)
    if (p.gpus[g].memory_bytes && r.used[g] > p.gpus[g].memory_bytes)
      r.warnings.push_back("GPU '" + p.gpus[g].id + "' needs " + std::to_string(r.used[g]) +
                           " bytes but has " + std::to_string(p.gpus[g].memory_bytes));
  return r;
}

}  // namespace kdisagg
