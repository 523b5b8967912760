#include "seqint/data_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

namespace seqint {

const char* error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::TreatmentNotBinary: return "TreatmentNotBinary";
    case ErrorCode::PropensityOutOfRange: return "PropensityOutOfRange";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::DuplicateName: return "DuplicateName";
    case ErrorCode::TooFewRows: return "TooFewRows";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::NonNumericCell: return "NonNumericCell";
    case ErrorCode::MissingValue: return "MissingValue";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::SingularDesign: return "SingularDesign";
    case ErrorCode::SingularProjection: return "SingularProjection";
    case ErrorCode::ConvergenceFailure: return "ConvergenceFailure";
    case ErrorCode::QuasiSeparation: return "QuasiSeparation";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::ZeroWeightMass: return "ZeroWeightMass";
    case ErrorCode::DegenerateCandidate: return "DegenerateCandidate";
    case ErrorCode::AllDegenerate: return "AllDegenerate";
    case ErrorCode::TooManyDegenerateReplicates:
      return "TooManyDegenerateReplicates";
    case ErrorCode::GridTooShort: return "GridTooShort";
    case ErrorCode::NonPSDCovariance: return "NonPSDCovariance";
    case ErrorCode::UnsupportedCalibration: return "UnsupportedCalibration";
    case ErrorCode::InfeasibleLRT: return "InfeasibleLRT";
  }
  return "UnknownError";
}

bool is_input_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::TreatmentNotBinary:
    case ErrorCode::PropensityOutOfRange:
    case ErrorCode::NonFiniteValue:
    case ErrorCode::DuplicateName:
    case ErrorCode::TooFewRows:
    case ErrorCode::LengthMismatch:
    case ErrorCode::DimensionMismatch:
    case ErrorCode::EmptyInput:
    case ErrorCode::MissingColumn:
    case ErrorCode::NonNumericCell:
    case ErrorCode::MissingValue:
    case ErrorCode::InvalidConfig:
    case ErrorCode::IoError:
    case ErrorCode::UnsupportedCalibration:
      return true;
    default:
      return false;
  }
}

void check_dataset_values(const Dataset& dataset, int min_rows) {
  const int n = dataset.n();
  const int p = dataset.p();
  if (n < min_rows) {
    raise(ErrorCode::TooFewRows, "n = " + std::to_string(n) +
                                     " rows, need at least " +
                                     std::to_string(min_rows));
  }
  if (p < 1) raise(ErrorCode::EmptyInput, "no covariate columns");
  if (dataset.a.size() != n || dataset.x.rows() != n) {
    raise(ErrorCode::LengthMismatch,
          "y, a, and x must share the row count");
  }
  if (static_cast<int>(dataset.names.size()) != p) {
    raise(ErrorCode::LengthMismatch, "need one name per covariate column");
  }
  for (int i = 0; i < n; ++i) {
    if (!std::isfinite(dataset.y[i])) {
      raise(ErrorCode::NonFiniteValue, "y row " + std::to_string(i + 1));
    }
    const double ai = dataset.a[i];
    if (ai != 0.0 && ai != 1.0) {
      raise(ErrorCode::TreatmentNotBinary,
            "a row " + std::to_string(i + 1) + " = " + std::to_string(ai));
    }
  }
  for (int j = 0; j < p; ++j) {
    for (int i = 0; i < n; ++i) {
      if (!std::isfinite(dataset.x(i, j))) {
        raise(ErrorCode::NonFiniteValue, "covariate " + dataset.names[j] +
                                             " row " + std::to_string(i + 1));
      }
    }
  }
  if (dataset.q0) {
    if (dataset.q0->size() != n) {
      raise(ErrorCode::LengthMismatch, "propensity column length");
    }
    for (int i = 0; i < n; ++i) {
      const double qi = (*dataset.q0)[i];
      if (!(qi > 0.0 && qi < 1.0)) {
        raise(ErrorCode::PropensityOutOfRange,
              "q0 row " + std::to_string(i + 1) + " = " + std::to_string(qi));
      }
    }
  }
  std::unordered_set<std::string> seen;
  for (const auto& name : dataset.names) {
    if (!seen.insert(name).second) {
      raise(ErrorCode::DuplicateName, name);
    }
  }
}

Dataset validate(Dataset dataset) {
  check_dataset_values(dataset, 4);
  return dataset;
}

Vec compute_w(const Vec& a, const Vec& q) {
  if (a.size() != q.size()) {
    raise(ErrorCode::LengthMismatch,
          "a has " + std::to_string(a.size()) + " entries, q has " +
              std::to_string(q.size()));
  }
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    if (!(q[i] > 0.0 && q[i] < 1.0)) {
      raise(ErrorCode::PropensityOutOfRange,
            "q row " + std::to_string(i + 1) + " = " + std::to_string(q[i]));
    }
  }
  return a - q;
}

StepContext StepContext::initial(const Dataset& dataset) {
  StepContext ctx;
  const int p = dataset.p();
  ctx.jc_set.resize(p);
  std::iota(ctx.jc_set.begin(), ctx.jc_set.end(), 0);
  // Candidates are consumed in name-sorted order so that permuting columns
  // (with their names) cannot change which random variates any candidate
  // sees downstream.
  std::sort(ctx.jc_set.begin(), ctx.jc_set.end(), [&](int a, int b) {
    return dataset.names[a] < dataset.names[b];
  });
  ctx.xtilde = Mat::Ones(dataset.n(), 1);
  return ctx;
}

StepContext StepContext::advanced(const Dataset& dataset, int k) const {
  StepContext next;
  next.j_set = j_set;
  next.j_set.push_back(k);
  next.jc_set.reserve(jc_set.size());
  for (int idx : jc_set) {
    if (idx != k) next.jc_set.push_back(idx);
  }
  if (next.jc_set.size() == jc_set.size()) {
    raise(ErrorCode::InvalidConfig,
          "covariate " + std::to_string(k + 1) + " is not a candidate");
  }
  const Eigen::Index cols = xtilde.cols();
  next.xtilde.resize(dataset.n(), cols + 1);
  next.xtilde.leftCols(cols) = xtilde;
  next.xtilde.col(cols) = dataset.x.col(k);
  return next;
}

}  // namespace seqint
