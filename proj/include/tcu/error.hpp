#pragma once

#include <stdexcept>
#include <string>

namespace tcu {

/// Base of every error raised by the toolchain. The CLI maps subclasses to
/// exit codes: IoError -> 2, everything else -> 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed text or binary document (config, manifest, model, CSV).
class FormatError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class InvalidArchError : public Error {
 public:
  using Error::Error;
};

class UnsupportedLayerError : public Error {
 public:
  UnsupportedLayerError(std::string layer, const std::string& what)
      : Error(what), layer_(std::move(layer)) {}
  const std::string& layer() const noexcept { return layer_; }

 private:
  std::string layer_;
};

/// A memory region ran out of vectors during allocation.
class CapacityError : public Error {
 public:
  CapacityError(std::string region, std::string layer, long long shortfall);
  const std::string& region() const noexcept { return region_; }
  const std::string& layer() const noexcept { return layer_; }
  long long shortfall() const noexcept { return shortfall_; }

 private:
  std::string region_;
  std::string layer_;
  long long shortfall_;
};

class ChecksumError : public Error {
 public:
  using Error::Error;
};

class IncompatibleBundleError : public Error {
 public:
  using Error::Error;
};

/// Raised by the simulator; carries the program counter of the failing step.
class SimError : public Error {
 public:
  SimError(std::size_t pc, const std::string& what)
      : Error(what), pc_(pc) {}
  std::size_t pc() const noexcept { return pc_; }

 private:
  std::size_t pc_;
};

inline CapacityError::CapacityError(std::string region, std::string layer,
                                    long long shortfall)
    : Error("capacity exceeded in region '" + region + "' at layer '" + layer +
            "': short by " + std::to_string(shortfall) + " vectors"),
      region_(std::move(region)),
      layer_(std::move(layer)),
      shortfall_(shortfall) {}

}  // namespace tcu
