#pragma once

#include <stdexcept>
#include <string>

namespace ctxdistill {

/// Invalid configuration (bad parameter combinations, unknown config keys).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid input data (empty corpus, mismatched lengths, non-finite values).
class InputError : public std::runtime_error {
 public:
  explicit InputError(const std::string& what) : std::runtime_error(what) {}
};

/// A generation backend failed after exhausting retries.
class BackendError : public std::runtime_error {
 public:
  explicit BackendError(const std::string& what) : std::runtime_error(what) {}
};

/// A pipeline stage failed in a way that aborts the run (for example the
/// per-run skip budget was exceeded, or a chunk could not be decomposed).
class PipelineError : public std::runtime_error {
 public:
  explicit PipelineError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace ctxdistill
