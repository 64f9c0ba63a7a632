#pragma once

#include <stdexcept>
#include <string>

namespace dipm {

// Error taxonomy mirrored by the C API status codes and the CLI exit codes:
// validation = 1, numerical = 2, io = 3.
struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

// A rollout that tips an agent past the angle guard or hits a singular
// mass matrix; carries which agent/frame failed.
struct SingularityError : NumericalError {
  SingularityError(const std::string& msg, int agent_, int frame_)
      : NumericalError(msg), agent(agent_), frame(frame_) {}
  int agent = -1;
  int frame = -1;
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace dipm
