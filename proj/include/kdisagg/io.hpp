// Copyright 2026 The kdisagg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>

#include "json.hpp"
#include "kdisagg/error.hpp"

namespace kdisagg {

using json = nlohmann::ordered_json;

/// Shortest decimal text that parses back to exactly `v`.
inline std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw Error("cannot format number");
  return std::string(buf, p);
}

/// Fixed-precision text for human-facing tables (CSV columns).
inline std::string format_fixed(double v, int digits) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, digits);
  if (ec != std::errc{}) throw Error("cannot format number");
  return std::string(buf, p);
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes through a temporary sibling and renames, so readers never observe
/// a partially written file.
inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw Error("write failed for '" + path.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

inline std::string dump_json(const json& j) { return j.dump(2) + "\n"; }

/// Checks the {"format", "version"} envelope every kdisagg file carries.
inline void check_envelope(const json& j, const std::string& format, int version,
                           const std::string& where) {
  if (!j.is_object() || !j.contains("format") || !j["format"].is_string())
    throw FormatError(where + ": missing format tag");
  if (j["format"].get<std::string>() != format)
    throw FormatError(where + ": expected format '" + format + "', found '" +
                      j["format"].get<std::string>() + "'");
  if (!j.contains("version") || !j["version"].is_number_integer())
    throw FormatError(where + ": missing schema version");
  if (j["version"].get<int>() != version)
    throw FormatError(where + ": unsupported " + format + " version " +
                      std::to_string(j["version"].get<int>()));
}

inline json parse_json(const std::string& text, const std::string& where) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(where + ": " + e.what());
  }
}

inline json read_versioned(const std::filesystem::path& path, const std::string& format,
                           int version) {
  json j = parse_json(read_text_file(path), path.string());
  check_envelope(j, format, version, path.string());
  return j;
}

/// Reads an unsigned address given either as a JSON integer or a "0x..." string.
inline std::uint64_t json_address(const json& v, const std::string& where) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer()) {
    auto s = v.get<std::int64_t>();
    if (s < 0) throw FormatError(where + ": negative address");
    return static_cast<std::uint64_t>(s);
  }
  if (v.is_string()) {
    const auto& s = v.get_ref<const std::string&>();
    std::string_view sv(s);
    int base = 10;
    if (sv.size() > 2 && sv[0] == '0' && (sv[1] == 'x' || sv[1] == 'X')) {
      sv.remove_prefix(2);
      base = 16;
    }
    std::uint64_t out = 0;
    auto [p, ec] = std::from_chars(sv.data(), sv.data() + sv.size(), out, base);
    if (ec == std::errc{} && p == sv.data() + sv.size() && !sv.empty()) return out;
  }
  throw FormatError(where + ": expected an address");
}

}  // namespace kdisagg
