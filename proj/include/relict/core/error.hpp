#pragma once

#include <stdexcept>
#include <string>

namespace relict {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent configuration values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// An upstream artifact (dataset, checkpoint, ...) is absent. `producer` names
/// the command that creates it.
class MissingArtifactError : public Error {
 public:
  MissingArtifactError(const std::string& what, std::string producer)
      : Error(what + " (run `" + producer + "` first)"), producer_(std::move(producer)) {}
  const std::string& producer() const noexcept { return producer_; }

 private:
  std::string producer_;
};

/// NaN/Inf encountered during optimization.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace relict
