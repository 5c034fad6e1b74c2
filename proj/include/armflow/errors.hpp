#pragma once

#include <stdexcept>
#include <string>

namespace armflow {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

#define ARMFLOW_ERROR(Name)          \
  struct Name : ::armflow::Error {   \
    using ::armflow::Error::Error;   \
  }

// tensor / nn
ARMFLOW_ERROR(ShapeMismatch);
ARMFLOW_ERROR(AllMasked);
ARMFLOW_ERROR(ZeroNorm);
ARMFLOW_ERROR(HeadDivisibility);
ARMFLOW_ERROR(NonFinite);
ARMFLOW_ERROR(NonDeterministicLoss);
ARMFLOW_ERROR(CheckpointError);

// kinematics / world
ARMFLOW_ERROR(JointLimit);
ARMFLOW_ERROR(Unreachable);
ARMFLOW_ERROR(PlacementFailure);
ARMFLOW_ERROR(NaNAction);
ARMFLOW_ERROR(UnknownTask);
ARMFLOW_ERROR(UnknownEmbodiment);

// data engine
ARMFLOW_ERROR(PlanningFailure);
ARMFLOW_ERROR(DegenerateSegment);
ARMFLOW_ERROR(YieldTooLow);

// intent / policy
ARMFLOW_ERROR(WindowLength);
ARMFLOW_ERROR(UnknownInstructionToken);
ARMFLOW_ERROR(ConvergenceFailure);
ARMFLOW_ERROR(TauRange);
ARMFLOW_ERROR(ConfigError);

// datastore / metrics / judge
ARMFLOW_ERROR(EmptyDataset);
ARMFLOW_ERROR(TooFewFrames);
ARMFLOW_ERROR(EmptyBenchmark);
ARMFLOW_ERROR(InvalidScore);
ARMFLOW_ERROR(MissingCell);
ARMFLOW_ERROR(ParseFailure);
ARMFLOW_ERROR(EndpointUnavailable);
ARMFLOW_ERROR(RubricViolation);
ARMFLOW_ERROR(MalformedReport);
ARMFLOW_ERROR(IoError);

#undef ARMFLOW_ERROR

}  // namespace armflow
