#pragma once

#include <stdexcept>
#include <string>

namespace sptlb {

/// Malformed input file or document.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A value violates a domain invariant. `path()` names the offending field,
/// e.g. `apps[3].current_tier`.
class ValidationError : public std::runtime_error {
 public:
  ValidationError(std::string path, const std::string& message)
      : std::runtime_error(path + ": " + message), path_(std::move(path)) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

/// Lookup of an app or tier id that the snapshot does not contain.
class UnknownIdError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// The latency model lacks a distribution that an evaluation needs.
class ModelIncompleteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sptlb
