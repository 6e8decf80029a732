#pragma once

#include <stdexcept>
#include <string>

namespace iac {

// Malformed external input (config files, genotype JSON, checkpoints, npy).
// Messages name the offending field or path.
class ParseError : public std::runtime_error {
public:
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

// A weight block that must stay frozen was modified. Always a bug in the
// calling stage, never recoverable.
class FreezeViolation : public std::logic_error {
public:
  explicit FreezeViolation(const std::string& what) : std::logic_error(what) {}
};

// Training or search produced a non-finite loss.
class DivergenceError : public std::runtime_error {
public:
  explicit DivergenceError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace iac
