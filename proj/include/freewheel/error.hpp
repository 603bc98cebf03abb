#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace freewheel {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid parameters, malformed configuration or inconsistent input data.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed cycle or configuration file. Carries the 1-based line number.
class ParseError : public ConfigError {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : ConfigError(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// The plant reached zero (or negative) kinetic energy.
class VehicleStoppedError : public Error {
 public:
  using Error::Error;
};

/// Lower and upper velocity bound crossed after corridor construction.
class CorridorCollapseError : public Error {
 public:
  CorridorCollapseError(std::size_t index, const std::string& what)
      : Error(what), index_(index) {}
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

/// An optimal control problem without feasible points.
class InfeasibleError : public Error {
 public:
  InfeasibleError(std::size_t step, const std::string& what)
      : Error(what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

/// The branch-and-bound hit a limit before finding any integral solution.
class SolverLimitError : public Error {
 public:
  SolverLimitError(std::size_t step, const std::string& what)
      : Error(what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

/// Requested trip time lies outside what the corridor permits.
class UnachievableTargetError : public Error {
 public:
  UnachievableTargetError(double fastest, double slowest, const std::string& what)
      : Error(what), fastest_(fastest), slowest_(slowest) {}
  double fastest() const noexcept { return fastest_; }
  double slowest() const noexcept { return slowest_; }

 private:
  double fastest_;
  double slowest_;
};

}  // namespace freewheel
