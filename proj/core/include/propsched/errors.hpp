#ifndef PROPSCHED_ERRORS_HPP_
#define PROPSCHED_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace propsched {

/// Base for every error this library raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define PROPSCHED_DEFINE_ERROR(Name)      \
  class Name : public Error {             \
   public:                                \
    using Error::Error;                   \
  }

// Engine
PROPSCHED_DEFINE_ERROR(MalformedSpec);
PROPSCHED_DEFINE_ERROR(UnknownConstraint);
PROPSCHED_DEFINE_ERROR(NotDirty);
PROPSCHED_DEFINE_ERROR(Halted);
// Schedulers
PROPSCHED_DEFINE_ERROR(EmptyDirty);
// Policy network
PROPSCHED_DEFINE_ERROR(NoNeighbors);
PROPSCHED_DEFINE_ERROR(EmptyDirtyMask);
PROPSCHED_DEFINE_ERROR(TapeConsumed);
PROPSCHED_DEFINE_ERROR(CheckpointError);
// Training
PROPSCHED_DEFINE_ERROR(EmptyTrajectory);
PROPSCHED_DEFINE_ERROR(NonFiniteLoss);
// Tasks
PROPSCHED_DEFINE_ERROR(UnknownToken);
// Harness
PROPSCHED_DEFINE_ERROR(HorizonExceeded);
PROPSCHED_DEFINE_ERROR(ConfigError);

#undef PROPSCHED_DEFINE_ERROR

}  // namespace propsched

#endif  // PROPSCHED_ERRORS_HPP_
