// Copyright 2026 The kdisagg Authors
// SPDX-License-Identifier: Apache-2.0

// Execution traces: the allocation log (BufferRegistry) plus the ordered kernel
// launches of one execution pattern, split into iterations. The on-disk form is
// JSON Lines, documented in docs/trace-format.md.

#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "kdisagg/error.hpp"
#include "kdisagg/instrument.hpp"
#include "kdisagg/io.hpp"
#include "kdisagg/kir.hpp"

namespace kdisagg {

inline constexpr const char* kTraceMagic = "KDTRACE";
inline constexpr int kTraceVersion = 1;

struct Allocation {
  static constexpr std::size_t kNever = std::numeric_limits<std::size_t>::max();

  std::string id;
  std::uint64_t base = 0;
  std::uint64_t size = 0;
  std::size_t alloc_event = 0;  // trace record ordinal of the allocation
  std::size_t free_event = kNever;
  /// Holds model weights or request inputs: written by the virtual source.
  bool initialized = false;

  std::uint64_t end() const { return base + size; }
  bool live_at(std::size_t event) const { return alloc_event < event && event < free_event; }
  bool contains(std::uint64_t addr) const { return addr >= base && addr < end(); }
};

/// Allocation log resolving raw addresses to buffer identities.
class BufferRegistry {
 public:
  void allocate(Allocation a) {
    if (a.base == 0) throw TraceError("buffer '" + a.id + "': base address must be > 0");
    if (a.size == 0) throw TraceError("buffer '" + a.id + "': size must be > 0");
    if (a.end() < a.base) throw TraceError("buffer '" + a.id + "': address range overflows");
    if (index_.count(a.id)) throw TraceError("buffer '" + a.id + "' allocated twice");
    for (const auto& other : allocs_) {
      if (other.free_event != Allocation::kNever) continue;
      if (a.base < other.end() && other.base < a.end())
        throw TraceError("buffer '" + a.id + "' overlaps live buffer '" + other.id + "'");
    }
    index_[a.id] = allocs_.size();
    allocs_.push_back(std::move(a));
  }

  void release(const std::string& id, std::size_t event) {
    auto it = index_.find(id);
    if (it == index_.end()) throw TraceError("free of unknown buffer '" + id + "'");
    Allocation& a = allocs_[it->second];
    if (a.free_event != Allocation::kNever) throw TraceError("buffer '" + id + "' freed twice");
    a.free_event = event;
  }

  const Allocation* find(const std::string& id) const {
    auto it = index_.find(id);
    return it == index_.end() ? nullptr : &allocs_[it->second];
  }

  /// The live allocation containing `addr` at trace record `event`, if any.
  const Allocation* find_live(std::uint64_t addr, std::size_t event) const {
    for (const auto& a : allocs_)
      if (a.live_at(event) && a.contains(addr)) return &a;
    return nullptr;
  }

  const std::vector<Allocation>& allocations() const { return allocs_; }

 private:
  std::vector<Allocation> allocs_;
  std::map<std::string, std::size_t> index_;
};

enum class LaunchKind { opaque, library, memcopy };

inline const char* to_string(LaunchKind k) {
  switch (k) {
    case LaunchKind::opaque: return "opaque";
    case LaunchKind::library: return "library";
    default: return "memcopy";
  }
}

enum class PinReason { indirect, collective, user };

inline const char* to_string(PinReason r) {
  switch (r) {
    case PinReason::indirect: return "indirect";
    case PinReason::collective: return "collective";
    default: return "user";
  }
}

inline PinReason pin_reason_from(const std::string& s) {
  if (s == "indirect") return PinReason::indirect;
  if (s == "collective") return PinReason::collective;
  if (s == "user") return PinReason::user;
  throw FormatError("unknown pin reason '" + s + "'");
}

struct PinRequest {
  PinReason reason = PinReason::user;
  std::optional<int> gpu;  // unset: the pattern's default GPU

  friend bool operator==(const PinRequest&, const PinRequest&) = default;
};

struct DeclaredAccess {
  std::string buffer;
  std::uint64_t offset = 0;
  std::uint64_t len = 0;
};

struct KernelLaunch {
  std::size_t seq = 0;        // ordinal within its iteration
  std::size_t event = 0;      // trace record ordinal, for liveness
  std::size_t iteration = 0;
  std::string kernel;
  LaunchKind kind = LaunchKind::opaque;
  std::vector<std::string> args;
  // library and memcopy launches
  std::vector<DeclaredAccess> reads;
  std::vector<DeclaredAccess> writes;
  // opaque launches: raw streams or pre-aggregated instruction intervals
  std::optional<AddressStream> stream;
  std::optional<std::map<std::size_t, std::pair<std::uint64_t, std::uint64_t>>> intervals;
  std::optional<PinRequest> pin;
};

struct ExecutionTrace {
  std::string pattern;
  std::map<std::string, KernelIR> kernels;
  BufferRegistry registry;
  std::vector<std::vector<KernelLaunch>> iterations;
  bool has_iteration_markers = false;

  std::size_t launch_count() const {
    std::size_t n = 0;
    for (const auto& it : iterations) n += it.size();
    return n;
  }
};

/// Reads/writes of well-known library kernels, derived from the call
/// signature. Returns false when the kernel is not in the catalog.
inline bool library_accesses(const std::string& kernel, const std::vector<std::string>& args,
                             const json& signature, std::vector<DeclaredAccess>& reads,
                             std::vector<DeclaredAccess>& writes) {
  unsigned elem = 0;
  if (kernel == "cublasSgemm" || kernel == "sgemm") elem = 4;
  else if (kernel == "cublasHgemm" || kernel == "hgemm") elem = 2;
  else if (kernel == "cublasDgemm" || kernel == "dgemm") elem = 8;
  else return false;
  if (args.size() != 3)
    throw TraceError(kernel + ": expected arguments (A, B, C)");
  auto dim = [&](const char* name) -> std::uint64_t {
    if (!signature.contains(name) || !signature[name].is_number_integer() ||
        signature[name].get<std::int64_t>() < 0)
      throw TraceError(kernel + ": signature lacks '" + name + "'");
    return signature[name].get<std::uint64_t>();
  };
  const std::uint64_t m = dim("m"), n = dim("n"), k = dim("k");
  reads.push_back({args[0], 0, m * k * elem});
  reads.push_back({args[1], 0, k * n * elem});
  if (signature.contains("beta") && signature["beta"].get<double>() != 0.0)
    reads.push_back({args[2], 0, m * n * elem});
  writes.push_back({args[2], 0, m * n * elem});
  return true;
}

namespace detail {

inline std::string require_string(const json& r, const char* key, const std::string& where) {
  if (!r.contains(key) || !r[key].is_string())
    throw TraceError(where + ": missing string field '" + key + "'");
  return r[key].get<std::string>();
}

inline std::uint64_t require_uint(const json& r, const char* key, const std::string& where) {
  if (!r.contains(key)) throw TraceError(where + ": missing field '" + key + "'");
  return json_address(r[key], where + ": field '" + key + "'");
}

inline std::uint64_t optional_uint(const json& r, const char* key, const std::string& where) {
  return r.contains(key) ? json_address(r[key], where + ": field '" + key + "'") : 0;
}

inline std::vector<DeclaredAccess> declared(const json& r, const char* key,
                                            const std::string& where) {
  std::vector<DeclaredAccess> out;
  if (!r.contains(key)) return out;
  for (const auto& a : r[key])
    out.push_back({require_string(a, "buffer", where), optional_uint(a, "offset", where),
                   require_uint(a, "bytes", where)});
  return out;
}

inline std::size_t parse_index(const std::string& key, const std::string& where) {
  auto v = parse_int(key);
  if (!v || *v < 0) throw TraceError(where + ": bad instruction index '" + key + "'");
  return static_cast<std::size_t>(*v);
}

}  // namespace detail

/// Parses a trace from its JSON Lines text. Kernel sources referenced by
/// "path" are resolved relative to `base_dir`.
inline ExecutionTrace parse_trace(const std::string& text,
                                  const std::filesystem::path& base_dir = {}) {
  ExecutionTrace t;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  std::size_t event = 0;
  bool header_seen = false;

  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    const std::string where = "trace line " + std::to_string(lineno);
    json r;
    try {
      r = json::parse(line);
    } catch (const json::parse_error& e) {
      throw TraceError(where + ": " + e.what());
    }
    if (!header_seen) {
      if (!r.contains("magic") || r["magic"] != kTraceMagic)
        throw FormatError(where + ": missing trace magic '" + std::string(kTraceMagic) + "'");
      if (!r.contains("version") || !r["version"].is_number_integer() ||
          r["version"].get<int>() != kTraceVersion)
        throw FormatError(where + ": unsupported trace version");
      t.pattern = detail::require_string(r, "pattern", where);
      header_seen = true;
      continue;
    }
    ++event;
    const std::string rec = detail::require_string(r, "rec", where);
    if (rec == "kernel") {
      std::string name = detail::require_string(r, "name", where);
      std::string src;
      if (r.contains("source")) src = detail::require_string(r, "source", where);
      else src = read_text_file(base_dir / detail::require_string(r, "path", where));
      KernelIR k;
      try {
        k = parse_kernel(src);
      } catch (const ParseError& e) {
        throw TraceError(where + ": kernel '" + name + "': " + e.what());
      }
      if (k.name != name)
        throw TraceError(where + ": kernel record '" + name + "' holds entry '" + k.name + "'");
      if (!t.kernels.emplace(name, std::move(k)).second)
        throw TraceError(where + ": kernel '" + name + "' declared twice");
    } else if (rec == "alloc") {
      Allocation a;
      a.id = detail::require_string(r, "buffer", where);
      a.base = detail::require_uint(r, "base", where);
      a.size = detail::require_uint(r, "size", where);
      a.alloc_event = event;
      a.initialized = r.value("init", false);
      try {
        t.registry.allocate(std::move(a));
      } catch (const TraceError& e) {
        throw TraceError(where + ": " + e.what());
      }
    } else if (rec == "free") {
      try {
        t.registry.release(detail::require_string(r, "buffer", where), event);
      } catch (const TraceError& e) {
        throw TraceError(where + ": " + e.what());
      }
    } else if (rec == "iteration") {
      if (!t.has_iteration_markers && !t.iterations.empty())
        throw TraceError(where + ": launches precede the first iteration marker");
      auto idx = detail::require_uint(r, "index", where);
      if (idx != t.iterations.size())
        throw TraceError(where + ": iteration markers must count up from 0");
      t.iterations.emplace_back();
      t.has_iteration_markers = true;
    } else if (rec == "launch") {
      if (t.iterations.empty()) t.iterations.emplace_back();
      KernelLaunch l;
      l.iteration = t.iterations.size() - 1;
      l.seq = t.iterations.back().size();
      l.event = event;
      const std::string kind = detail::require_string(r, "kind", where);
      if (kind == "opaque") l.kind = LaunchKind::opaque;
      else if (kind == "library") l.kind = LaunchKind::library;
      else if (kind == "memcopy") l.kind = LaunchKind::memcopy;
      else throw TraceError(where + ": unknown launch kind '" + kind + "'");
      if (r.contains("args"))
        for (const auto& a : r["args"]) l.args.push_back(a.get<std::string>());
      if (r.contains("pin")) {
        const auto& p = r["pin"];
        PinRequest pin;
        pin.reason = pin_reason_from(detail::require_string(p, "reason", where));
        if (p.contains("gpu") && !p["gpu"].is_null()) pin.gpu = p["gpu"].get<int>();
        l.pin = pin;
      }
      if (r.value("conditional", false))
        throw TraceError(where + ": conditional launch; patterns must be straight-line");

      switch (l.kind) {
        case LaunchKind::memcopy: {
          l.kernel = r.value("kernel", std::string("memcpy"));
          auto bytes = detail::require_uint(r, "bytes", where);
          std::string src = detail::require_string(r, "src", where);
          std::string dst = detail::require_string(r, "dst", where);
          l.reads.push_back({src, detail::optional_uint(r, "src_offset", where), bytes});
          l.writes.push_back({dst, detail::optional_uint(r, "dst_offset", where), bytes});
          l.args = {src, dst};
          break;
        }
        case LaunchKind::library: {
          l.kernel = detail::require_string(r, "kernel", where);
          json sig = r.contains("signature") ? r["signature"] : json::object();
          try {
            if (!library_accesses(l.kernel, l.args, sig, l.reads, l.writes)) {
              if (!r.contains("reads") && !r.contains("writes"))
                throw TraceError("library kernel '" + l.kernel +
                                 "' is not in the catalog and declares no reads/writes");
              l.reads = detail::declared(r, "reads", where);
              l.writes = detail::declared(r, "writes", where);
            }
          } catch (const TraceError& e) {
            throw TraceError(where + ": " + e.what());
          }
          break;
        }
        case LaunchKind::opaque: {
          l.kernel = detail::require_string(r, "kernel", where);
          if (!t.kernels.count(l.kernel))
            throw TraceError(where + ": opaque kernel '" + l.kernel + "' has no kernel record");
          if (r.contains("streams")) {
            AddressStream s;
            for (const auto& [key, addrs] : r["streams"].items()) {
              auto& v = s.addresses[detail::parse_index(key, where)];
              for (const auto& a : addrs) v.push_back(json_address(a, where));
            }
            if (r.contains("not_executed"))
              for (const auto& i : r["not_executed"]) s.not_executed.insert(i.get<std::size_t>());
            l.stream = std::move(s);
          } else if (r.contains("intervals")) {
            std::map<std::size_t, std::pair<std::uint64_t, std::uint64_t>> iv;
            for (const auto& [key, mm] : r["intervals"].items()) {
              if (!mm.is_array() || mm.size() != 2)
                throw TraceError(where + ": interval must be [min, max]");
              iv[detail::parse_index(key, where)] = {json_address(mm[0], where),
                                                     json_address(mm[1], where)};
            }
            l.intervals = std::move(iv);
          } else {
            l.stream = AddressStream{};
          }
          break;
        }
      }
      t.iterations.back().push_back(std::move(l));
    } else {
      throw TraceError(where + ": unknown record type '" + rec + "'");
    }
  }
  if (!header_seen) throw FormatError("trace: empty file (missing header)");

  // Straight-line check: every iteration replays the same launch sequence.
  for (std::size_t i = 1; i < t.iterations.size(); ++i) {
    const auto& a = t.iterations[0];
    const auto& b = t.iterations[i];
    std::size_t n = std::min(a.size(), b.size());
    for (std::size_t s = 0; s < n; ++s)
      if (a[s].kernel != b[s].kernel || a[s].kind != b[s].kind)
        throw TraceError("iteration " + std::to_string(i) + " diverges from iteration 0 at seq " +
                         std::to_string(s) + "; patterns must be straight-line");
    if (a.size() != b.size())
      throw TraceError("iteration " + std::to_string(i) + " has " + std::to_string(b.size()) +
                       " launches, iteration 0 has " + std::to_string(a.size()) +
                       "; patterns must be straight-line");
  }
  return t;
}

inline ExecutionTrace read_trace(const std::filesystem::path& path) {
  return parse_trace(read_text_file(path), path.parent_path());
}

}  // namespace kdisagg
