#pragma once

#include <vector>

#include "seqint/data_model.hpp"
#include "seqint/types.hpp"

namespace seqint {

// Degenerate-candidate threshold, relative to Pn[W^2] * Var(x_k).
inline constexpr double kDegenerateRel = 1e-12;

// One candidate's interaction statistic. `criterion` is always minimized by
// the selector: residual sum of squares for the randomized-trial paths, and
// -psi_k^2 * denom for the doubly robust path.
struct CandidateStat {
  int k = -1;            // covariate index (0-based)
  double coef = 0.0;     // theta_hat_k or psi_hat_k
  double denom = 0.0;    // Pn[(W Xk')^2], Pn[(W U_k)^2], or Pn[A W_hat L_k^2]
  double criterion = 0.0;
  Vec projection;        // gamma_hat_k / eta_hat_k; empty at step 1 (RCT)
};

// Per-observation realizations of the limit components Z_k for k in Jc,
// plus their scaling denominators d_k. Columns follow the candidate order of
// `columns`.
struct InfluenceMatrix {
  Mat e;                       // n x |Jc|
  Vec denoms;                  // length |Jc|
  std::vector<int> columns;    // covariate index per column
};

// x_k - (Pn[W^2 x_k] / Pn[W^2]) * 1. Throws ZeroWeightMass when Pn[W^2]
// vanishes.
Vec center_covariate(const Vec& xk, const Vec& w);

// Marginal interaction coefficient for one candidate: the theta component of
// the least-squares fit of r on (W, W x_k), computed through the centering
// identity, with criterion = achieved residual sum of squares. Throws
// DegenerateCandidate when the centered candidate carries no weight mass.
CandidateStat marginal_theta(const Vec& r, const Vec& w, const Vec& xk,
                             int k = 0);

// Index (CandidateStat::k) minimizing the criterion; exact ties go to the
// smallest covariate index. Throws AllDegenerate on an empty list.
int select_candidate(const std::vector<CandidateStat>& stats);

struct WeightedProjection {
  Vec coefs;      // length = xtilde cols
  Vec residual;   // xk - xtilde * coefs
};

// Solves Pn[weights * xtilde (xk - xtilde' g)] = 0. With weights = W^2 this
// is the U_k construction; with weights = A(1 - q_hat) it is the L_k
// construction. Throws SingularProjection on a collinear xtilde.
WeightedProjection weighted_projection(const Vec& xk, const Mat& xtilde,
                                       const Vec& weights);

// Doubly robust candidate statistic:
//   psi_k = Pn[W_hat (y - h_hat) L_k] / Pn[A W_hat L_k^2],
// criterion = -psi_k^2 * denom so the shared argmin selector realizes the
// argmax rule.
CandidateStat dr_psi(const Vec& r, const Vec& wtil, const Vec& a,
                     const Vec& lk, int k = 0);

// Plug-in influence values for the randomized-trial limit law. Column c for
// candidate k: e_ik = W_i U_ki * { r_i - theta_k W_i U_ki
//   - W_i xtilde_i' (Pn[W^2 xtilde xtilde'])^-1 Pn[W xtilde r] }.
// With J empty this reduces to the marginal-screening form.
InfluenceMatrix influence_rct(const StepContext& step, const Vec& r,
                              const Vec& w, const Mat& u,
                              const std::vector<CandidateStat>& stats);

// Centered sample covariance (1/n convention) of the influence columns.
Mat influence_covariance(const InfluenceMatrix& influence);

}  // namespace seqint
