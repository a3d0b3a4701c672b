#pragma once

#include <stdexcept>
#include <string>

namespace thermctl {

/// Invalid or inconsistent configuration; message names the offending field.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// A core command addressed core 0, which is reserved for orchestration.
class ReservedCoreError : public std::invalid_argument {
 public:
  explicit ReservedCoreError(const std::string& what) : std::invalid_argument(what) {}
};

/// Episode trace with no steps cannot be summarized.
class EmptyTraceError : public std::invalid_argument {
 public:
  explicit EmptyTraceError(const std::string& what) : std::invalid_argument(what) {}
};

/// Window metrics over zero episodes cannot be classified.
class EmptyWindowError : public std::invalid_argument {
 public:
  explicit EmptyWindowError(const std::string& what) : std::invalid_argument(what) {}
};

/// Replay buffer holds fewer transitions than one batch.
class EmptyBufferError : public std::runtime_error {
 public:
  explicit EmptyBufferError(const std::string& what) : std::runtime_error(what) {}
};

/// Enqueue attempted on a closed queue.
class QueueClosedError : public std::runtime_error {
 public:
  explicit QueueClosedError(const std::string& what) : std::runtime_error(what) {}
};

/// Entropy coefficient must stay strictly positive.
class NonPositiveAlphaError : public std::invalid_argument {
 public:
  explicit NonPositiveAlphaError(const std::string& what) : std::invalid_argument(what) {}
};

/// A log file required by post-processing is missing.
class MissingLogError : public std::runtime_error {
 public:
  explicit MissingLogError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace thermctl
