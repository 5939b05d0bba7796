// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace wlfreq {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A matrix drifted too far from conjugate block structure.
class StructureError : public Error {
public:
  using Error::Error;
};

/// Innovation covariance became singular or non-finite.
class FilterDegenerateError : public Error {
public:
  FilterDegenerateError(const std::string& what, long tick)
      : Error(what), tick_(tick) {}
  long tick() const { return tick_; }

private:
  long tick_;
};

class TopologyError : public Error {
public:
  using Error::Error;
};

/// A diffusion combiner was asked to use an estimate that was never received.
class MissingMessageError : public Error {
public:
  MissingMessageError(const std::string& what, int src, int dst)
      : Error(what), src_(src), dst_(dst) {}
  int src() const { return src_; }
  int dst() const { return dst_; }

private:
  int src_;
  int dst_;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

}  // namespace wlfreq
