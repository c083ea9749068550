// Copyright 2026 The kdisagg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace kdisagg {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed kernel source, with a 1-based source position.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, std::size_t column, const std::string& what)
      : Error("line " + std::to_string(line) + ", column " +
              std::to_string(column) + ": " + what),
        line_(line),
        column_(column) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

/// Trace file or analysis input that violates the trace schema.
class TraceError : public Error {
 public:
  using Error::Error;
};

/// Versioned file with an unexpected format tag or version.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Invalid placement problem (pin conflicts, missing latencies, size guard).
class PlanningError : public Error {
 public:
  using Error::Error;
};

/// Simulation that cannot make progress or is misconfigured.
class SimulationError : public Error {
 public:
  using Error::Error;
};

}  // namespace kdisagg
