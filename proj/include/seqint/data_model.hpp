#pragma once

#include <optional>
#include <string>
#include <vector>

#include "seqint/types.hpp"

namespace seqint {

// One analysis sample: outcome, binary treatment, covariates, and an
// optional known propensity P(A=1|X). Immutable by convention after
// validation; every downstream operation is a pure function of its inputs.
struct Dataset {
  Vec y;                             // outcome, length n
  Vec a;                             // treatment in {0,1}, length n
  Mat x;                             // covariates, n x p (column j = X_j)
  std::optional<Vec> q0;             // known propensity, each in (0,1)
  std::vector<std::string> names;    // p unique covariate labels

  int n() const { return static_cast<int>(y.size()); }
  int p() const { return static_cast<int>(x.cols()); }
};

// Checks every dataset invariant and returns the dataset unchanged.
// Idempotent. Errors name the offending column or row.
Dataset validate(Dataset dataset);

// As validate(), but without the n >= 4 floor; bootstrap resamples may be
// arbitrarily small.
void check_dataset_values(const Dataset& dataset, int min_rows);

// W = A - q elementwise. Requires q strictly inside (0,1), which keeps every
// entry in (-1,1) and away from zero.
Vec compute_w(const Vec& a, const Vec& q);

// State of one forward step: selected indices J (selection order), remaining
// candidates Jc (sorted by covariate name), and the augmented design
// [1, X_J]. All indices are 0-based internally; reports convert to 1-based.
struct StepContext {
  std::vector<int> j_set;
  std::vector<int> jc_set;
  Mat xtilde;                        // n x (|J|+1), first column all ones

  static StepContext initial(const Dataset& dataset);
  StepContext advanced(const Dataset& dataset, int k) const;
};

enum class ResidualSource { Rct, DoublyRobust };

// The residualized view of a sample: W = A - q(X) and r = Y - fitted mean.
// For the RCT recipe r uses phi_hat(X) ~ E(Y|X); for the doubly robust
// recipe r uses h_hat(X) ~ E(Y|X, A=0) and w uses the fitted propensity.
struct Residualized {
  Vec w;
  Vec r;
  ResidualSource source = ResidualSource::Rct;
};

}  // namespace seqint
