// Copyright 2026 The kdisagg Authors
// SPDX-License-Identifier: Apache-2.0

// Data dependency graph of one execution pattern: launches as nodes, RAW
// edges annotated with the bytes flowing from producer to consumer.

#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "kdisagg/access.hpp"
#include "kdisagg/error.hpp"
#include "kdisagg/io.hpp"
#include "kdisagg/trace.hpp"

namespace kdisagg {

inline constexpr const char* kDdgFormat = "kdisagg.ddg";
inline constexpr int kDdgVersion = 1;

struct DdgNode {
  std::size_t seq = 0;
  std::string kernel;
  LaunchKind kind = LaunchKind::opaque;
  std::uint64_t footprint = 0;  // bytes touched, for capacity reporting

  friend bool operator==(const DdgNode&, const DdgNode&) = default;
};

struct DdgEdge {
  std::size_t src = 0;  // producer seq
  std::size_t dst = 0;  // consumer seq
  std::uint64_t bytes = 0;
  std::string buffer;

  friend auto operator<=>(const DdgEdge&, const DdgEdge&) = default;
};

struct PinnedNode {
  std::size_t node = 0;
  PinReason reason = PinReason::user;
  std::optional<int> gpu;

  friend bool operator==(const PinnedNode&, const PinnedNode&) = default;
};

struct DependencyGraph {
  std::string pattern;
  std::vector<DdgNode> nodes;   // index == seq
  std::vector<DdgEdge> edges;   // sorted by (src, dst, buffer)
  std::vector<PinnedNode> pinned;
  std::vector<std::string> excluded_buffers;  // cross-iteration, replicated
  std::vector<std::string> warnings;

  const PinnedNode* pin_of(std::size_t node) const {
    for (const auto& p : pinned)
      if (p.node == node) return &p;
    return nullptr;
  }

  friend bool operator==(const DependencyGraph&, const DependencyGraph&) = default;
};

struct CrossIterationBuffer {
  std::string buffer;
  std::vector<std::pair<std::size_t, std::size_t>> writers;  // (iteration, seq)
  std::vector<std::pair<std::size_t, std::size_t>> readers;  // (iteration, seq)

  friend bool operator==(const CrossIterationBuffer&, const CrossIterationBuffer&) = default;
};

namespace detail {

/// Byte-range map from disjoint segments [start, end) to the last writer.
template <typename Writer>
class LastWriterMap {
 public:
  struct Segment {
    std::uint64_t end;
    Writer writer;
  };

  void write(std::uint64_t lo, std::uint64_t hi, const Writer& w) {
    if (lo >= hi) return;
    split(lo);
    split(hi);
    segs_.erase(segs_.lower_bound(lo), segs_.lower_bound(hi));
    segs_.emplace(lo, Segment{hi, w});
  }

  /// Calls f(lo, hi, writer*) over [lo, hi) in address order; writer is null
  /// for bytes nobody has written.
  template <typename F>
  void visit(std::uint64_t lo, std::uint64_t hi, F&& f) const {
    std::uint64_t cur = lo;
    auto it = segs_.upper_bound(lo);
    if (it != segs_.begin()) --it;
    for (; it != segs_.end() && it->first < hi; ++it) {
      if (it->second.end <= cur) continue;
      std::uint64_t s = std::max(it->first, cur);
      if (s > cur) f(cur, s, static_cast<const Writer*>(nullptr));
      std::uint64_t e = std::min(it->second.end, hi);
      f(s, e, &it->second.writer);
      cur = e;
    }
    if (cur < hi) f(cur, hi, static_cast<const Writer*>(nullptr));
  }

 private:
  void split(std::uint64_t at) {
    auto it = segs_.upper_bound(at);
    if (it == segs_.begin()) return;
    --it;
    if (it->first < at && at < it->second.end) {
      Segment tail{it->second.end, it->second.writer};
      it->second.end = at;
      segs_.emplace(at, tail);
    }
  }

  std::map<std::uint64_t, Segment> segs_;
};

}  // namespace detail

struct DdgOptions {
  std::string pattern;
  /// Buffers holding weights or inputs: written by the virtual source.
  std::set<std::string> initialized;
  /// Cross-iteration buffers; they never produce intra-pattern edges.
  std::set<std::string> excluded;
};

/// RAW edges from access summaries of one iteration (seq order). The size of
/// edge (i, j) over buffer b is the number of bytes j reads from b whose most
/// recent writer is i. Reads and writes resolve over the covered pieces of
/// each span when the summary carries them, otherwise over the whole span.
inline DependencyGraph build_ddg(const std::vector<AccessSummary>& summaries,
                                 const DdgOptions& opt = {}) {
  DependencyGraph g;
  g.pattern = opt.pattern;
  g.excluded_buffers.assign(opt.excluded.begin(), opt.excluded.end());
  std::map<std::string, detail::LastWriterMap<std::size_t>> last_writer;
  std::map<std::tuple<std::size_t, std::size_t, std::string>, std::uint64_t> edge_bytes;

  for (std::size_t pos = 0; pos < summaries.size(); ++pos) {
    const AccessSummary& s = summaries[pos];
    if (s.seq != pos)
      throw TraceError("build_ddg: summaries must cover one iteration in seq order (expected seq " +
                       std::to_string(pos) + ", got " + std::to_string(s.seq) + ")");
    if (!summaries.empty() && s.iteration != summaries.front().iteration)
      throw TraceError("build_ddg: summaries span several iterations");

    std::map<std::string, std::pair<std::uint64_t, std::uint64_t>> touched;
    for (const auto* dir : {&s.reads, &s.writes})
      for (const auto& sp : *dir) {
        auto [it, fresh] = touched.try_emplace(sp.buffer, sp.offset, sp.end());
        if (!fresh) {
          it->second.first = std::min(it->second.first, sp.offset);
          it->second.second = std::max(it->second.second, sp.end());
        }
      }
    std::uint64_t footprint = 0;
    for (const auto& [b, r] : touched) footprint += r.second - r.first;
    g.nodes.push_back({s.seq, s.kernel, s.kind, footprint});

    const auto& reads = s.read_parts.empty() ? s.reads : s.read_parts;
    const auto& writes = s.write_parts.empty() ? s.writes : s.write_parts;
    // Reads observe writers that precede this launch.
    std::map<std::string, std::uint64_t> unwritten;
    for (const auto& rd : reads) {
      if (opt.excluded.count(rd.buffer)) continue;
      auto& lw = last_writer[rd.buffer];
      lw.visit(rd.offset, rd.end(), [&](std::uint64_t lo, std::uint64_t hi, const std::size_t* w) {
        if (w) edge_bytes[{*w, s.seq, rd.buffer}] += hi - lo;
        else unwritten[rd.buffer] += hi - lo;
      });
    }
    for (const auto& [buffer, bytes] : unwritten)
      if (bytes && !opt.initialized.count(buffer))
        g.warnings.push_back("seq " + std::to_string(s.seq) + " (" + s.kernel + ") reads " +
                             std::to_string(bytes) + " bytes of '" + buffer +
                             "' that were never written");
    for (const auto& wr : writes) {
      if (opt.excluded.count(wr.buffer)) continue;
      last_writer[wr.buffer].write(wr.offset, wr.end(), s.seq);
    }

    if (s.indirect) {
      g.pinned.push_back({s.seq, PinReason::indirect, s.pin ? s.pin->gpu : std::nullopt});
    } else if (s.pin) {
      g.pinned.push_back({s.seq, s.pin->reason, s.pin->gpu});
    }
  }

  for (const auto& [key, bytes] : edge_bytes) {
    const auto& [src, dst, buf] = key;
    g.edges.push_back({src, dst, bytes, buf});
  }
  std::sort(g.edges.begin(), g.edges.end());
  return g;
}

/// Buffers written in one iteration and read in a later one.
inline std::vector<CrossIterationBuffer> detect_cross_iteration(
    const std::vector<AccessSummary>& all) {
  std::set<std::size_t> iterations;
  for (const auto& s : all) iterations.insert(s.iteration);
  if (iterations.size() < 2)
    throw TraceError("cross-iteration detection needs at least two iterations "
                     "(missing iteration markers)");

  using Writer = std::pair<std::size_t, std::size_t>;
  std::map<std::string, detail::LastWriterMap<Writer>> last_writer;
  std::map<std::string, CrossIterationBuffer> flagged;
  for (const auto& s : all) {
    const Writer me{s.iteration, s.seq};
    for (const auto& rd : s.reads) {
      last_writer[rd.buffer].visit(rd.offset, rd.end(),
                                   [&](std::uint64_t, std::uint64_t, const Writer* w) {
        if (!w || w->first >= s.iteration) return;
        auto& f = flagged[rd.buffer];
        f.buffer = rd.buffer;
        if (std::find(f.writers.begin(), f.writers.end(), *w) == f.writers.end())
          f.writers.push_back(*w);
        if (std::find(f.readers.begin(), f.readers.end(), me) == f.readers.end())
          f.readers.push_back(me);
      });
    }
    for (const auto& wr : s.writes) last_writer[wr.buffer].write(wr.offset, wr.end(), me);
  }
  std::vector<CrossIterationBuffer> out;
  for (auto& [b, f] : flagged) {
    std::sort(f.writers.begin(), f.writers.end());
    std::sort(f.readers.begin(), f.readers.end());
    out.push_back(std::move(f));
  }
  return out;
}

/// Stable dispatch key: declared pattern id plus a fingerprint of the launch
/// sequence (kernels, kinds, and the sizes of the buffers they touch).
inline std::string pattern_dispatch_key(const ExecutionTrace& trace) {
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a 64
  auto mix = [&](std::string_view s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ull;
    }
    h ^= 0xff;
    h *= 1099511628211ull;
  };
  mix(trace.pattern);
  if (!trace.iterations.empty()) {
    for (const auto& l : trace.iterations.front()) {
      mix(l.kernel);
      mix(to_string(l.kind));
      for (const auto& a : l.args) {
        const Allocation* buf = trace.registry.find(a);
        mix(std::to_string(buf ? buf->size : 0));
      }
      for (const auto* dir : {&l.reads, &l.writes})
        for (const auto& d : *dir) mix(std::to_string(d.len));
    }
  }
  static const char* digits = "0123456789abcdef";
  std::string hex(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) hex[static_cast<std::size_t>(i)] = digits[h & 0xf];
  return trace.pattern + "#" + hex;
}

/// Maps pattern keys to per-pattern artifacts (DDGs, placements). A lookup
/// miss tells the caller to plan on demand.
template <typename T>
class DispatchTable {
 public:
  void insert(const std::string& key, T value) { table_.insert_or_assign(key, std::move(value)); }

  const T* lookup(const std::string& key) const {
    auto it = table_.find(key);
    return it == table_.end() ? nullptr : &it->second;
  }

  std::size_t size() const { return table_.size(); }

 private:
  std::map<std::string, T> table_;
};

struct AnalysisResult {
  std::string dispatch_key;
  std::vector<AccessSummary> summaries;  // all iterations
  std::vector<CrossIterationBuffer> cross_iteration;
  DependencyGraph graph;                 // built from iteration 0
};

/// Trace to DDG: summaries, cross-iteration detection (when the trace has
/// several iterations), and the graph of the first iteration.
inline AnalysisResult analyze_trace(const ExecutionTrace& trace) {
  AnalysisResult r;
  r.dispatch_key = pattern_dispatch_key(trace);
  r.summaries = summarize_pattern(trace);
  DdgOptions opt;
  opt.pattern = trace.pattern;
  for (const auto& a : trace.registry.allocations())
    if (a.initialized) opt.initialized.insert(a.id);
  if (trace.iterations.size() >= 2) {
    r.cross_iteration = detect_cross_iteration(r.summaries);
    for (const auto& c : r.cross_iteration) opt.excluded.insert(c.buffer);
  }
  r.graph = build_ddg(iteration_summaries(r.summaries, 0), opt);
  return r;
}

inline json ddg_to_json(const DependencyGraph& g) {
  json j;
  j["format"] = kDdgFormat;
  j["version"] = kDdgVersion;
  j["pattern"] = g.pattern;
  j["nodes"] = json::array();
  for (const auto& n : g.nodes)
    j["nodes"].push_back({{"seq", n.seq}, {"kernel", n.kernel}, {"kind", to_string(n.kind)},
                          {"footprint", n.footprint}});
  j["edges"] = json::array();
  for (const auto& e : g.edges)
    j["edges"].push_back({{"src", e.src}, {"dst", e.dst}, {"bytes", e.bytes}, {"buffer", e.buffer}});
  j["pinned"] = json::array();
  for (const auto& p : g.pinned) {
    json pj = {{"node", p.node}, {"reason", to_string(p.reason)}};
    pj["gpu"] = p.gpu ? json(*p.gpu) : json(nullptr);
    j["pinned"].push_back(pj);
  }
  j["cross_iteration"] = g.excluded_buffers;
  j["warnings"] = g.warnings;
  return j;
}

inline DependencyGraph ddg_from_json(const json& j, const std::string& where = "ddg") {
  check_envelope(j, kDdgFormat, kDdgVersion, where);
  DependencyGraph g;
  try {
    g.pattern = j.at("pattern").get<std::string>();
    for (const auto& n : j.at("nodes")) {
      DdgNode node;
      node.seq = n.at("seq").get<std::size_t>();
      node.kernel = n.at("kernel").get<std::string>();
      const auto kind = n.at("kind").get<std::string>();
      node.kind = kind == "library" ? LaunchKind::library
                  : kind == "memcopy" ? LaunchKind::memcopy
                                      : LaunchKind::opaque;
      node.footprint = n.value("footprint", std::uint64_t{0});
      if (node.seq != g.nodes.size()) throw FormatError(where + ": nodes must be listed in seq order");
      g.nodes.push_back(std::move(node));
    }
    for (const auto& e : j.at("edges")) {
      DdgEdge edge{e.at("src").get<std::size_t>(), e.at("dst").get<std::size_t>(),
                   e.at("bytes").get<std::uint64_t>(), e.at("buffer").get<std::string>()};
      if (edge.src >= edge.dst || edge.dst >= g.nodes.size() || edge.bytes == 0)
        throw FormatError(where + ": invalid edge " + std::to_string(edge.src) + " -> " +
                          std::to_string(edge.dst));
      g.edges.push_back(std::move(edge));
    }
    for (const auto& p : j.at("pinned")) {
      PinnedNode pin;
      pin.node = p.at("node").get<std::size_t>();
      pin.reason = pin_reason_from(p.at("reason").get<std::string>());
      if (p.contains("gpu") && !p["gpu"].is_null()) pin.gpu = p["gpu"].get<int>();
      if (pin.node >= g.nodes.size()) throw FormatError(where + ": pin on unknown node");
      g.pinned.push_back(pin);
    }
    if (j.contains("cross_iteration"))
      g.excluded_buffers = j["cross_iteration"].get<std::vector<std::string>>();
    if (j.contains("warnings")) g.warnings = j["warnings"].get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw FormatError(where + ": " + e.what());
  }
  std::sort(g.edges.begin(), g.edges.end());
  return g;
}

inline DependencyGraph read_ddg(const std::filesystem::path& path) {
  return ddg_from_json(parse_json(read_text_file(path), path.string()), path.string());
}

/// Plain edge list, one "src -> dst bytes buffer" line per edge.
inline std::string ddg_edge_list(const DependencyGraph& g) {
  std::ostringstream os;
  os << "# kdisagg edge list v" << kDdgVersion << " pattern=" << g.pattern
     << " nodes=" << g.nodes.size() << " edges=" << g.edges.size() << '\n';
  for (const auto& e : g.edges)
    os << e.src << " -> " << e.dst << ' ' << e.bytes << ' ' << e.buffer << '\n';
  for (const auto& p : g.pinned)
    os << "# pin " << p.node << ' ' << to_string(p.reason)
       << (p.gpu ? " gpu=" + std::to_string(*p.gpu) : std::string()) << '\n';
  return os.str();
}

}  // namespace kdisagg
