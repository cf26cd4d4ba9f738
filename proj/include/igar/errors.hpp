#pragma once

#include <stdexcept>
#include <string>

namespace igar {

/// Input violated an operation's precondition (shape mismatch, bad range, ...).
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A quantity is mathematically undefined for the given input (e.g. a ratio
/// with a zero denominator).
class UndefinedResult : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The hand-built policy failed its own contract self-check.
class ConstructionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A contradiction variant cannot be applied to a (scene, instruction) pair.
class InapplicableCase : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A benchmark case failed validation; the message names the failed check.
class InvalidCase : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class GenerationExhausted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class LookupError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace igar
