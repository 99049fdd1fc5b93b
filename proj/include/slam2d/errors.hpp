#pragma once

#include <stdexcept>
#include <string>

namespace slam2d {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidArgument : Error {
  using Error::Error;
};

struct NotFound : Error {
  using Error::Error;
};

struct FormatError : Error {
  using Error::Error;
};

struct DataGap : Error {
  using Error::Error;
};

struct DegenerateGeometry : Error {
  using Error::Error;
};

struct OutOfRange : Error {
  using Error::Error;
};

struct RankDeficient : Error {
  using Error::Error;
};

// Raised when the damped normal equations stay unsolvable with the damping
// parameter at its cap. Carries the diagnostics of the last attempt.
struct SingularSystem : Error {
  SingularSystem(const std::string& msg, double condition, double lambda)
      : Error(msg), condition_estimate(condition), lambda_at_failure(lambda) {}
  double condition_estimate;
  double lambda_at_failure;
};

struct NoOverlap : Error {
  using Error::Error;
};

struct ProtocolError : Error {
  using Error::Error;
};

struct EmptyAssociation : Error {
  using Error::Error;
};

}  // namespace slam2d
