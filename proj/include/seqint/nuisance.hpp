#pragma once

#include <vector>

#include "seqint/rng.hpp"
#include "seqint/types.hpp"

namespace seqint {

// Fitted logistic probabilities are clipped into
// [kPropensityClip, 1 - kPropensityClip] so estimated propensities stay
// strictly interior and doubly robust weights A(1 - q_hat) stay positive.
inline constexpr double kPropensityClip = 0.01;

enum class NuisanceKind {
  ConstantMean,
  LeastSquares,
  Ridge,
  AdaptiveLasso,
  Logistic,
  LogisticRidge,
  LogisticAdaptiveLasso,
};

enum class LambdaSelect { Fixed, Bic, Cv };

struct NuisanceSpec {
  NuisanceKind kind = NuisanceKind::ConstantMean;
  double lambda = 0.0;          // ridge penalty, or the forced lasso lambda
  bool gcv = false;             // ridge: pick lambda by generalized CV
  double gamma = 1.0;           // adaptive lasso weight exponent (> 0)
  LambdaSelect select = LambdaSelect::Bic;
  int grid_size = 50;           // lasso path length
  double grid_min_ratio = 1e-4; // lambda_min = ratio * lambda_max
  int cv_folds = 5;
  bool standardize = true;
  std::vector<int> include;     // design column subset; empty means all
};

enum class Link { Identity, Logit };

struct ConvergenceReport {
  int iterations = 0;
  double final_change = 0.0;
  bool converged = true;
};

// A fitted nuisance function. Coefficients are reported on the original
// covariate scale regardless of internal standardization; `center`/`scale`
// record the standardization actually applied (scale 1, center 0 when none).
struct FittedNuisance {
  NuisanceSpec spec;
  double intercept = 0.0;
  Vec coef;                     // length p, zeros for excluded columns
  Vec center;
  Vec scale;
  Link link = Link::Identity;
  ConvergenceReport convergence;
  double lambda_chosen = 0.0;
};

// Sample-mean fit: intercept = mean(y), zero slopes.
FittedNuisance fit_mean(const Vec& y);

// Ridge with unpenalized intercept on standardized columns; lambda = 0 is
// ordinary least squares (SingularDesign on collinear X).
FittedNuisance fit_ridge(const Mat& x, const Vec& y, double lambda,
                         bool standardize = true);

// Ridge with lambda chosen to minimize the GCV score over a log-spaced grid.
FittedNuisance fit_ridge_gcv(const Mat& x, const Vec& y,
                             bool standardize = true);

// Coordinate-descent adaptive lasso: (2n)^-1 ||y - b0 - X b||^2
// + lambda * sum w_j |b_j| with w_j = 1/|ridge init_j|^gamma. Lambda comes
// from BIC or k-fold CV over a log-spaced path, or is forced via
// LambdaSelect::Fixed. `cv_rng` seeds the fold assignment (unused for BIC).
FittedNuisance fit_adaptive_lasso_linear(const Mat& x, const Vec& y,
                                         const NuisanceSpec& spec,
                                         Rng* cv_rng = nullptr);

enum class LogisticPenalty { None, Ridge, AdaptiveLasso };

// IRLS logistic regression, optionally ridge- or adaptive-lasso-penalized.
// Throws SingleClass when y is constant and QuasiSeparation when the
// unpenalized linear predictor diverges.
FittedNuisance fit_logistic(const Mat& x, const Vec& y,
                            LogisticPenalty penalty,
                            const NuisanceSpec& spec, Rng* cv_rng = nullptr);

// Linear predictor for identity link; clipped inverse-logit for logit link.
Vec predict(const FittedNuisance& fit, const Mat& x);

// Dispatch on spec.kind. `y` is the regression target (must be {0,1} for the
// logistic kinds).
FittedNuisance fit_nuisance(const NuisanceSpec& spec, const Mat& x,
                            const Vec& y, Rng* cv_rng = nullptr);

}  // namespace seqint
