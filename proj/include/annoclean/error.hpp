#pragma once

#include <stdexcept>
#include <string>

namespace annoclean {

/// Exit codes shared by the command-line tool and by callers scripting it.
enum class ExitCode : int {
  kOk = 0,
  kInputError = 2,
  kCollision = 3,
  kRuntimeFailure = 4,
};

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what, ExitCode code = ExitCode::kRuntimeFailure)
      : std::runtime_error(what), code_(code) {}

  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

/// Bad configuration, missing paths, malformed inputs.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what, ExitCode::kInputError) {}
};

/// Output location already taken (dataset dir, run id).
class CollisionError : public Error {
 public:
  explicit CollisionError(const std::string& what) : Error(what, ExitCode::kCollision) {}
};

/// Tensor or image shape disagreement.
class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(what, ExitCode::kInputError) {}
};

}  // namespace annoclean
