// Copyright 2026 The kdisagg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "kdisagg/error.hpp"
#include "kdisagg/instrument.hpp"
#include "kdisagg/trace.hpp"

namespace kdisagg {

/// A byte range [offset, offset + len) inside one buffer.
struct Span {
  std::string buffer;
  std::uint64_t offset = 0;
  std::uint64_t len = 0;

  std::uint64_t end() const { return offset + len; }

  friend bool operator==(const Span&, const Span&) = default;
};

/// Buffers read and written by one launch: at most one span per buffer and
/// direction (the union interval of everything the launch touched).
struct AccessSummary {
  std::size_t seq = 0;
  std::size_t iteration = 0;
  std::string kernel;
  LaunchKind kind = LaunchKind::opaque;
  std::vector<Span> reads;   // sorted by buffer id
  std::vector<Span> writes;  // sorted by buffer id
  /// Disjoint pieces of each span actually covered by some instruction
  /// interval or declared access, sorted by (buffer, offset).
  std::vector<Span> read_parts, write_parts;
  bool indirect = false;
  std::optional<PinRequest> pin;
  std::vector<std::string> notes;
};

namespace detail {

using SpanUnion = std::map<std::string, std::pair<std::uint64_t, std::uint64_t>>;

inline void widen(SpanUnion& u, const std::string& buffer, std::uint64_t lo, std::uint64_t hi) {
  auto [it, inserted] = u.try_emplace(buffer, lo, hi);
  if (!inserted) {
    it->second.first = std::min(it->second.first, lo);
    it->second.second = std::max(it->second.second, hi);
  }
}

using Pieces = std::map<std::string, std::vector<std::pair<std::uint64_t, std::uint64_t>>>;

/// Sorted, merged pieces; touching intervals coalesce.
inline std::vector<Span> to_parts(Pieces p) {
  std::vector<Span> out;
  for (auto& [b, v] : p) {
    std::sort(v.begin(), v.end());
    std::size_t first = out.size();
    for (const auto& [lo, hi] : v) {
      if (out.size() > first && lo <= out.back().end()) {
        out.back().len = std::max(out.back().end(), hi) - out.back().offset;
      } else {
        out.push_back({b, lo, hi - lo});
      }
    }
  }
  return out;
}

inline std::vector<Span> to_spans(const SpanUnion& u) {
  std::vector<Span> out;
  for (const auto& [b, r] : u) out.push_back({b, r.first, r.second - r.first});
  return out;
}

inline std::string hex(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  do {
    s.insert(s.begin(), digits[v & 0xf]);
    v >>= 4;
  } while (v);
  return "0x" + s;
}

}  // namespace detail

/// Maps a launch's accesses onto the buffer registry. For opaque launches
/// `result` holds the per-instruction [min, max] intervals.
inline AccessSummary resolve_accesses(const KernelLaunch& launch,
                                      const InstrumentationResult* result,
                                      const BufferRegistry& reg) {
  AccessSummary s;
  s.seq = launch.seq;
  s.iteration = launch.iteration;
  s.kernel = launch.kernel;
  s.kind = launch.kind;
  s.pin = launch.pin;
  detail::SpanUnion reads, writes;
  detail::Pieces read_parts, write_parts;
  auto add = [&](bool is_read, const std::string& b, std::uint64_t lo, std::uint64_t hi) {
    detail::widen(is_read ? reads : writes, b, lo, hi);
    (is_read ? read_parts : write_parts)[b].emplace_back(lo, hi);
  };
  const std::string who = "launch " + std::to_string(launch.seq) + " (" + launch.kernel + ")";

  auto declared = [&](const DeclaredAccess& a, bool is_read) {
    const Allocation* buf = reg.find(a.buffer);
    if (!buf) throw TraceError(who + ": unknown buffer '" + a.buffer + "'");
    if (!buf->live_at(launch.event))
      throw TraceError(who + ": buffer '" + a.buffer + "' is not live");
    if (a.len == 0) return;
    if (a.offset + a.len > buf->size || a.offset + a.len < a.offset)
      throw TraceError(who + ": access of " + std::to_string(a.len) + " bytes at offset " +
                       std::to_string(a.offset) + " exceeds buffer '" + a.buffer + "'");
    add(is_read, a.buffer, a.offset, a.offset + a.len);
  };

  if (launch.kind == LaunchKind::opaque) {
    if (!result) throw TraceError(who + ": opaque launch without instrumentation result");
    for (const auto& iv : result->intervals) {
      if (iv.min > iv.max) throw TraceError(who + ": inverted interval");
      const Allocation* buf = reg.find_live(iv.min, launch.event);
      if (!buf) {
        s.indirect = true;
        s.notes.push_back("instruction " + std::to_string(iv.instruction_index) + ": address " +
                          detail::hex(iv.min) + " is not in any live buffer");
        continue;
      }
      if (iv.end() > buf->end()) {
        const Allocation* other = reg.find_live(iv.end() - 1, launch.event);
        throw TraceError(who + ": instruction " + std::to_string(iv.instruction_index) +
                         " interval straddles buffer '" + buf->id + "' and " +
                         (other ? "buffer '" + other->id + "'" : std::string("unallocated memory")));
      }
      if (std::find(launch.args.begin(), launch.args.end(), buf->id) == launch.args.end()) {
        s.indirect = true;
        s.notes.push_back("instruction " + std::to_string(iv.instruction_index) +
                          ": buffer '" + buf->id + "' is not reachable from the arguments");
      }
      const std::uint64_t lo = iv.min - buf->base;
      const std::uint64_t hi = iv.end() - buf->base;
      if (iv.access != AccessClass::write) add(true, buf->id, lo, hi);
      if (iv.access != AccessClass::read) add(false, buf->id, lo, hi);
    }
  } else {
    if (launch.kind == LaunchKind::memcopy &&
        (launch.reads.size() != 1 || launch.writes.size() != 1 ||
         launch.reads[0].len != launch.writes[0].len))
      throw TraceError(who + ": memcopy needs one read and one write of equal size");
    for (const auto& a : launch.reads) declared(a, true);
    for (const auto& a : launch.writes) declared(a, false);
  }
  s.reads = detail::to_spans(reads);
  s.writes = detail::to_spans(writes);
  s.read_parts = detail::to_parts(std::move(read_parts));
  s.write_parts = detail::to_parts(std::move(write_parts));
  return s;
}

/// Instruction intervals of an opaque launch, replayed from raw streams or
/// taken from pre-aggregated intervals.
inline InstrumentationResult instrumentation_result(const KernelLaunch& launch,
                                                    const ExecutionTrace& trace) {
  auto kit = trace.kernels.find(launch.kernel);
  if (kit == trace.kernels.end())
    throw TraceError("launch " + std::to_string(launch.seq) + ": unknown kernel '" +
                     launch.kernel + "'");
  const KernelIR& k = kit->second;
  const InstrumentationPlan plan = plan_instrumentation(k);
  if (launch.intervals) {
    InstrumentationResult r;
    r.kernel = k.name;
    for (const auto& [idx, mm] : *launch.intervals) {
      if (!plan.slot_for(idx))
        throw TraceError("launch " + std::to_string(launch.seq) + ": interval for instruction " +
                         std::to_string(idx) + " which is not a memory instruction");
      const Instruction& ins = k.instructions[idx];
      r.intervals.push_back({idx, mm.first, mm.second, ins.access_width, access_class(ins.opcode)});
    }
    return r;
  }
  return replay(k, plan, launch.stream ? *launch.stream : AddressStream{});
}

/// One AccessSummary per launch, iteration by iteration, in seq order.
inline std::vector<AccessSummary> summarize_pattern(const ExecutionTrace& trace) {
  std::vector<AccessSummary> out;
  for (const auto& iteration : trace.iterations) {
    for (const auto& launch : iteration) {
      try {
        if (launch.kind == LaunchKind::opaque) {
          auto r = instrumentation_result(launch, trace);
          out.push_back(resolve_accesses(launch, &r, trace.registry));
        } else {
          out.push_back(resolve_accesses(launch, nullptr, trace.registry));
        }
      } catch (const TraceError& e) {
        throw TraceError("iteration " + std::to_string(launch.iteration) + ", seq " +
                         std::to_string(launch.seq) + ": " + e.what());
      }
    }
  }
  return out;
}

/// The summaries belonging to one iteration.
inline std::vector<AccessSummary> iteration_summaries(const std::vector<AccessSummary>& all,
                                                      std::size_t iteration) {
  std::vector<AccessSummary> out;
  for (const auto& s : all)
    if (s.iteration == iteration) out.push_back(s);
  return out;
}

}  // namespace kdisagg
