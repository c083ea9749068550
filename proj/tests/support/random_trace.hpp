// Copyright 2026 The kdisagg Authors
// SPDX-License-Identifier: Apache-2.0

// Randomized execution traces that retain the exact per-byte access sets of
// every launch, plus the brute-force per-byte last-writer RAW oracle.

#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "kdisagg/trace.hpp"

namespace kdisagg::testing {

struct ByteSets {
  // buffer -> set of byte offsets
  std::map<std::string, std::set<std::uint64_t>> reads;
  std::map<std::string, std::set<std::uint64_t>> writes;
};

struct RandomTrace {
  ExecutionTrace trace;
  std::vector<ByteSets> bytes;  // per launch of iteration 0
};

struct RandomTraceOptions {
  int max_launches = 200;
  int max_buffers = 20;
  std::uint64_t max_buffer_size = 2048;
  /// Read ranges of one launch in one buffer may leave gaps.
  bool gappy_reads = false;
};

inline const char* kRandomKernel =
    ".visible .entry rk(\n"
    "    .param .u64 p0,\n"
    "    .param .u64 p1,\n"
    "    .param .u64 p2\n"
    ")\n"
    "{\n"
    "    ld.param.u64 %rd1, [p0];\n"
    "    ld.param.u64 %rd2, [p1];\n"
    "    ld.param.u64 %rd3, [p2];\n"
    "    ld.global.f32 %f1, [%rd1];\n"
    "    ld.global.f32 %f2, [%rd2];\n"
    "    st.global.f32 [%rd3], %f1;\n"
    "    st.global.f32 [%rd3], %f2;\n"
    "    atom.global.add.u32 %r1, [%rd1], 1;\n"
    "}\n";

/// Instruction indices of kRandomKernel's memory instructions.
inline constexpr std::size_t kLoadA = 3, kLoadB = 4, kStoreA = 5, kStoreB = 6, kAtomic = 7;

inline RandomTrace random_trace(std::mt19937_64& rng, const RandomTraceOptions& opt = {}) {
  RandomTrace out;
  ExecutionTrace& t = out.trace;
  t.pattern = "random";
  t.kernels.emplace("rk", parse_kernel(kRandomKernel));

  auto uni = [&](std::uint64_t lo, std::uint64_t hi) {
    return std::uniform_int_distribution<std::uint64_t>(lo, hi)(rng);
  };

  const int n_buffers = static_cast<int>(uni(1, static_cast<std::uint64_t>(opt.max_buffers)));
  std::vector<std::string> ids;
  std::vector<std::uint64_t> sizes;
  std::uint64_t base = 0x10000;
  std::size_t event = 0;
  for (int b = 0; b < n_buffers; ++b) {
    Allocation a;
    a.id = "b" + std::to_string(b);
    a.base = base;
    a.size = uni(2, opt.max_buffer_size / 4) * 4;
    a.alloc_event = ++event;
    a.initialized = uni(0, 2) == 0;
    base += a.size + 4 * uni(0, 64);
    ids.push_back(a.id);
    sizes.push_back(a.size);
    t.registry.allocate(a);
  }
  t.iterations.emplace_back();

  // A dense 4-byte-aligned range [lo, hi) inside a buffer.
  auto range_in = [&](std::size_t b) {
    std::uint64_t words = sizes[b] / 4;
    std::uint64_t lo = uni(0, words - 1);
    std::uint64_t hi = uni(lo + 1, std::min(words, lo + 1 + uni(1, words)));
    return std::pair<std::uint64_t, std::uint64_t>{lo * 4, hi * 4};
  };
  // A second range overlapping or abutting r, so the union stays one interval.
  auto touching = [&](std::size_t b, std::pair<std::uint64_t, std::uint64_t> r) {
    const std::uint64_t words = sizes[b] / 4;
    const std::uint64_t L = r.first / 4, H = r.second / 4;
    std::uint64_t lo = uni(L > 8 ? L - 8 : 0, std::min(H, words - 1));
    std::uint64_t from = std::max(lo + 1, L);
    std::uint64_t hi = uni(from, std::min(words, from + 15));
    return std::pair<std::uint64_t, std::uint64_t>{lo * 4, hi * 4};
  };
  auto stream_of = [](std::uint64_t buf_base, std::pair<std::uint64_t, std::uint64_t> r) {
    std::vector<std::uint64_t> v;
    for (std::uint64_t a = r.first; a < r.second; a += 4) v.push_back(buf_base + a);
    return v;
  };
  auto add_bytes = [](std::set<std::uint64_t>& s, std::pair<std::uint64_t, std::uint64_t> r) {
    for (std::uint64_t a = r.first; a < r.second; ++a) s.insert(a);
  };

  const int n_launches = static_cast<int>(uni(0, static_cast<std::uint64_t>(opt.max_launches)));
  for (int seq = 0; seq < n_launches; ++seq) {
    KernelLaunch l;
    l.seq = static_cast<std::size_t>(seq);
    l.event = ++event;
    ByteSets bs;
    const auto kind = uni(0, 9);
    if (kind < 7) {
      l.kind = LaunchKind::opaque;
      l.kernel = "rk";
      std::size_t ra = uni(0, ids.size() - 1), rb = uni(0, ids.size() - 1), wc = uni(0, ids.size() - 1);
      l.args = {ids[ra], ids[rb], ids[wc]};
      AddressStream s;
      const auto* base_a = t.registry.find(ids[ra]);
      const auto* base_b = t.registry.find(ids[rb]);
      const auto* base_c = t.registry.find(ids[wc]);

      auto r1 = range_in(ra);
      auto r2 = (rb == ra && !opt.gappy_reads) ? touching(rb, r1) : range_in(rb);
      s.addresses[kLoadA] = stream_of(base_a->base, r1);
      s.addresses[kLoadB] = stream_of(base_b->base, r2);
      add_bytes(bs.reads[ids[ra]], r1);
      add_bytes(bs.reads[ids[rb]], r2);

      auto w1 = range_in(wc);
      s.addresses[kStoreA] = stream_of(base_c->base, w1);
      add_bytes(bs.writes[ids[wc]], w1);
      if (uni(0, 1)) {
        auto w2 = touching(wc, w1);
        s.addresses[kStoreB] = stream_of(base_c->base, w2);
        add_bytes(bs.writes[ids[wc]], w2);
      } else {
        s.not_executed.insert(kStoreB);
      }
      if (ra != wc && ra != rb && uni(0, 3) == 0) {
        // atomic over the first load's range: reads and writes stay one interval
        s.addresses[kAtomic] = stream_of(base_a->base, r1);
        add_bytes(bs.writes[ids[ra]], r1);
      } else {
        s.not_executed.insert(kAtomic);
      }
      l.stream = std::move(s);
    } else if (kind < 9) {
      l.kind = LaunchKind::library;
      l.kernel = "lib";
      std::size_t a = uni(0, ids.size() - 1), c = uni(0, ids.size() - 1);
      auto ra = range_in(a);
      auto wc = range_in(c);
      l.args = {ids[a], ids[c]};
      l.reads.push_back({ids[a], ra.first, ra.second - ra.first});
      l.writes.push_back({ids[c], wc.first, wc.second - wc.first});
      add_bytes(bs.reads[ids[a]], ra);
      add_bytes(bs.writes[ids[c]], wc);
    } else {
      l.kind = LaunchKind::memcopy;
      l.kernel = "memcpy";
      std::size_t a = uni(0, ids.size() - 1), c = uni(0, ids.size() - 1);
      std::uint64_t len = 4 * uni(1, std::min(sizes[a], sizes[c]) / 4);
      std::uint64_t so = 4 * uni(0, (sizes[a] - len) / 4);
      std::uint64_t d = 4 * uni(0, (sizes[c] - len) / 4);
      l.args = {ids[a], ids[c]};
      l.reads.push_back({ids[a], so, len});
      l.writes.push_back({ids[c], d, len});
      add_bytes(bs.reads[ids[a]], {so, so + len});
      add_bytes(bs.writes[ids[c]], {d, d + len});
    }
    t.iterations.back().push_back(std::move(l));
    out.bytes.push_back(std::move(bs));
  }
  return out;
}

using OracleEdges = std::map<std::tuple<std::size_t, std::size_t, std::string>, std::uint64_t>;

/// Per-byte last-writer RAW edges: (producer, consumer, buffer) -> bytes.
inline OracleEdges per_byte_raw_oracle(const std::vector<ByteSets>& launches) {
  std::map<std::string, std::map<std::uint64_t, std::size_t>> last;
  OracleEdges edges;
  for (std::size_t j = 0; j < launches.size(); ++j) {
    for (const auto& [buf, bytes] : launches[j].reads) {
      const auto& lw = last[buf];
      for (auto b : bytes) {
        auto it = lw.find(b);
        if (it != lw.end() && it->second != j) ++edges[{it->second, j, buf}];
      }
    }
    for (const auto& [buf, bytes] : launches[j].writes)
      for (auto b : bytes) last[buf][b] = j;
  }
  return edges;
}

/// True when every launch's per-buffer, per-direction byte set is one interval.
inline bool all_contiguous(const std::vector<ByteSets>& launches) {
  auto dense = [](const std::set<std::uint64_t>& s) {
    return s.empty() || *s.rbegin() - *s.begin() + 1 == s.size();
  };
  for (const auto& l : launches) {
    for (const auto& [b, s] : l.reads)
      if (!dense(s)) return false;
    for (const auto& [b, s] : l.writes)
      if (!dense(s)) return false;
  }
  return true;
}

}  // namespace kdisagg::testing
