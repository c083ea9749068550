// Copyright 2026 The kdisagg Authors
// SPDX-License-Identifier: Apache-2.0

// Memory-access instrumentation of kernels: every global memory instruction
// gets a 16-byte slot in an appended buffer parameter holding the minimum
// (bytes 0..7) and maximum (bytes 8..15) address it touched. Replay feeds
// recorded address streams through the same slot semantics.

#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "kdisagg/error.hpp"
#include "kdisagg/kir.hpp"

namespace kdisagg {

struct InstrumentationSlot {
  std::size_t instruction_index = 0;
  std::uint64_t offset = 0;  // bytes into the instrumentation buffer

  friend bool operator==(const InstrumentationSlot&, const InstrumentationSlot&) = default;
};

struct InstrumentationPlan {
  static constexpr std::uint64_t kSlotStride = 16;
  static constexpr std::uint64_t kMinOffset = 0;
  static constexpr std::uint64_t kMaxOffset = 8;

  std::string kernel;
  std::string buffer_param = "inst_buf";
  std::vector<InstrumentationSlot> slots;

  std::uint64_t buffer_size() const { return slots.size() * kSlotStride; }

  const InstrumentationSlot* slot_for(std::size_t instruction_index) const {
    auto it = std::lower_bound(
        slots.begin(), slots.end(), instruction_index,
        [](const InstrumentationSlot& s, std::size_t i) { return s.instruction_index < i; });
    return it != slots.end() && it->instruction_index == instruction_index ? &*it : nullptr;
  }

  friend bool operator==(const InstrumentationPlan&, const InstrumentationPlan&) = default;
};

/// Addresses observed per memory instruction over all threads of one launch.
struct AddressStream {
  std::map<std::size_t, std::vector<std::uint64_t>> addresses;
  /// Memory instructions that did not execute during the launch.
  std::set<std::size_t> not_executed;
};

struct InstructionInterval {
  std::size_t instruction_index = 0;
  std::uint64_t min = 0;  // lowest base address accessed
  std::uint64_t max = 0;  // highest base address accessed
  unsigned access_width = 0;
  AccessClass access = AccessClass::read;

  /// One past the last byte touched.
  std::uint64_t end() const { return max + access_width; }

  friend bool operator==(const InstructionInterval&, const InstructionInterval&) = default;
};

struct InstrumentationResult {
  std::string kernel;
  std::vector<InstructionInterval> intervals;  // ascending instruction index

  friend bool operator==(const InstrumentationResult&, const InstrumentationResult&) = default;
};

inline InstrumentationPlan plan_instrumentation(const KernelIR& k) {
  InstrumentationPlan plan;
  plan.kernel = k.name;
  while (k.find_param(plan.buffer_param)) plan.buffer_param += "_";
  for (const auto& ins : k.instructions) {
    if (!is_memory(ins.opcode)) continue;
    plan.slots.push_back({ins.index, plan.slots.size() * InstrumentationPlan::kSlotStride});
  }
  return plan;
}

namespace detail {

inline bool text_mentions(const KernelIR& k, const std::string& needle) {
  for (const auto& ins : k.instructions)
    for (const auto& op : ins.operands)
      if (op.find(needle) != std::string::npos) return true;
  for (const auto& b : k.body)
    if (b.text.find(needle) != std::string::npos) return true;
  return false;
}

}  // namespace detail

/// Emits the instrumented kernel. Output is a pure function of (k, p).
inline std::string emit_instrumented(const KernelIR& k, const InstrumentationPlan& p) {
  if (p.kernel != k.name)
    throw Error("instrumentation plan for '" + p.kernel + "' applied to '" + k.name + "'");

  std::string prefix = "%ib_";
  while (detail::text_mentions(k, prefix)) prefix.insert(prefix.size() - 1, "_");
  const std::string base = prefix + "base";
  const std::string slot = prefix + "slot";
  const std::string addr = prefix + "addr";
  const std::string unused = prefix + "unused";

  bool needs_addr = false;
  for (const auto& s : p.slots) {
    const auto& a = k.instructions.at(s.instruction_index).address;
    if (a && (a->offset != 0 || !detail::is_register(a->base))) needs_addr = true;
  }

  std::vector<Param> params = k.params;
  params.push_back({p.buffer_param, ".u64", ParamKind::buffer_handle});

  std::ostringstream os;
  detail::print_header(os, k, params);
  if (!p.slots.empty()) {
    os << "    .reg .b64 " << base << ";\n";
    os << "    .reg .b64 " << slot << ";\n";
    if (needs_addr) os << "    .reg .b64 " << addr << ";\n";
    os << "    .reg .b64 " << unused << ";\n";
    os << "    ld.param.u64 " << base << ", [" << p.buffer_param << "];\n";
  }
  for (const auto& b : k.body) {
    if (b.kind == BodyLine::Kind::instruction) {
      const Instruction& ins = k.instructions[b.instruction];
      if (const auto* s = p.slot_for(ins.index)) {
        const std::string g = ins.guard.empty() ? "" : ins.guard + " ";
        const MemoryOperand& a = *ins.address;
        std::string value = a.base;
        if (!detail::is_register(a.base)) {
          os << "    " << g << "mov.u64 " << addr << ", " << a.base << ";\n";
          value = addr;
        }
        if (a.offset != 0) {
          os << "    " << g << "add.s64 " << addr << ", " << value << ", " << a.offset << ";\n";
          value = addr;
        }
        os << "    " << g << "mad.wide.u32 " << slot << ", "
           << s->offset / InstrumentationPlan::kSlotStride << ", "
           << InstrumentationPlan::kSlotStride << ", " << base << ";\n";
        os << "    " << g << "atom.global.min.u64 " << unused << ", [" << slot << "], "
           << value << ";\n";
        os << "    " << g << "atom.global.max.u64 " << unused << ", [" << slot << "+"
           << InstrumentationPlan::kMaxOffset << "], " << value << ";\n";
      }
    }
    detail::print_body_line(os, k, b);
  }
  os << "}\n";
  return os.str();
}

/// Runs the address streams through the instrumentation slots. Slots start
/// empty and hold a value only after their first access, so the result does
/// not depend on any sentinel seeding. Aggregation is order independent.
inline InstrumentationResult replay(const KernelIR& k, const InstrumentationPlan& p,
                                    const AddressStream& s) {
  if (p.kernel != k.name)
    throw Error("instrumentation plan for '" + p.kernel + "' applied to '" + k.name + "'");
  for (const auto& [idx, addrs] : s.addresses) {
    (void)addrs;
    if (!p.slot_for(idx))
      throw TraceError("kernel '" + k.name + "': address stream for instruction " +
                       std::to_string(idx) + " which is not a memory instruction");
  }

  struct SlotState {
    std::uint64_t min = std::numeric_limits<std::uint64_t>::max();
    std::uint64_t max = 0;
  };
  std::vector<SlotState> buffer(p.slots.size());

  InstrumentationResult r;
  r.kernel = k.name;
  for (std::size_t si = 0; si < p.slots.size(); ++si) {
    const auto& slot = p.slots[si];
    auto it = s.addresses.find(slot.instruction_index);
    if (it == s.addresses.end()) {
      if (s.not_executed.count(slot.instruction_index)) continue;
      throw TraceError("kernel '" + k.name + "': missing address stream for memory instruction " +
                       std::to_string(slot.instruction_index));
    }
    if (it->second.empty())
      throw TraceError("kernel '" + k.name + "': empty address stream for instruction " +
                       std::to_string(slot.instruction_index));
    SlotState& st = buffer[si];
    for (std::uint64_t a : it->second) {
      st.min = std::min(st.min, a);  // atom.global.min
      st.max = std::max(st.max, a);  // atom.global.max
    }
    const Instruction& ins = k.instructions.at(slot.instruction_index);
    r.intervals.push_back({slot.instruction_index, st.min, st.max, ins.access_width,
                           access_class(ins.opcode)});
  }
  return r;
}

}  // namespace kdisagg
