#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace seqint {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Every failure mode the library can report. Input-shaped problems map to
// CLI exit code 2, numerical problems to exit code 3.
enum class ErrorCode {
  // data / configuration
  TreatmentNotBinary,
  PropensityOutOfRange,
  NonFiniteValue,
  DuplicateName,
  TooFewRows,
  LengthMismatch,
  DimensionMismatch,
  EmptyInput,
  MissingColumn,
  NonNumericCell,
  MissingValue,
  InvalidConfig,
  IoError,
  // numerical
  SingularDesign,
  SingularProjection,
  ConvergenceFailure,
  QuasiSeparation,
  SingleClass,
  ZeroWeightMass,
  DegenerateCandidate,
  AllDegenerate,
  TooManyDegenerateReplicates,
  GridTooShort,
  NonPSDCovariance,
  UnsupportedCalibration,
  InfeasibleLRT,
};

const char* error_name(ErrorCode code);

// True for codes that describe bad input or configuration rather than a
// numerical breakdown.
bool is_input_error(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace seqint
