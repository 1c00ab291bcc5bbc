#pragma once

#include <stdexcept>
#include <string>

namespace oob {

// Single error type with a kind tag so callers (and tests) can distinguish
// bad arguments from bad data from bad environments.
class Error : public std::runtime_error {
 public:
  enum class Kind {
    argument,    // caller violated an operation contract
    validation,  // input data violates a documented invariant
    ingestion,   // referenced resource missing or undecodable
    placement,   // no legal trigger region exists for a box
    config,      // run configuration unusable
    io,          // filesystem / encoding failure
  };

  Error(Kind kind, std::string message)
      : std::runtime_error(std::move(message)), kind_(kind) {}

  Kind kind() const { return kind_; }

  static Error argument(std::string m) { return {Kind::argument, std::move(m)}; }
  static Error validation(std::string m) { return {Kind::validation, std::move(m)}; }
  static Error ingestion(std::string m) { return {Kind::ingestion, std::move(m)}; }
  static Error placement(std::string m) { return {Kind::placement, std::move(m)}; }
  static Error config(std::string m) { return {Kind::config, std::move(m)}; }
  static Error io(std::string m) { return {Kind::io, std::move(m)}; }

 private:
  Kind kind_;
};

}  // namespace oob
