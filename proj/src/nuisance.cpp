#include "seqint/nuisance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace seqint {

namespace {

constexpr double kIrlsTol = 1e-8;
constexpr int kIrlsMaxIter = 100;
constexpr double kCdTol = 1e-7;
constexpr int kCdMaxSweeps = 1000;
constexpr double kLinearPredictorBound = 30.0;
constexpr double kZeroWeightTol = 1e-10;

double sigmoid(double eta) { return 1.0 / (1.0 + std::exp(-eta)); }

double soft_threshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

// Centered (and optionally scaled) design restricted to the active columns:
// constant columns are dropped from the solve and keep a zero slope.
struct WorkingDesign {
  Mat z;                    // n x n_active
  std::vector<int> active;  // working column -> original column
  Vec center;               // length p
  Vec scale;                // length p (1 where not scaled)
};

WorkingDesign make_working_design(const Mat& x, bool standardize) {
  const auto n = x.rows();
  const auto p = x.cols();
  WorkingDesign wd;
  wd.center = Vec::Zero(p);
  wd.scale = Vec::Ones(p);
  std::vector<Vec> cols;
  for (Eigen::Index j = 0; j < p; ++j) {
    const double c = x.col(j).mean();
    Vec zj = x.col(j).array() - c;
    const double sd = std::sqrt(zj.squaredNorm() / static_cast<double>(n));
    wd.center[j] = c;
    if (sd <= 1e-13 * std::max(1.0, std::abs(c))) continue;  // constant
    if (standardize) {
      zj /= sd;
      wd.scale[j] = sd;
    }
    wd.active.push_back(static_cast<int>(j));
    cols.push_back(std::move(zj));
  }
  wd.z.resize(n, static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) {
    wd.z.col(static_cast<Eigen::Index>(j)) = cols[j];
  }
  return wd;
}

// Maps working-scale slopes back to the original covariate scale.
FittedNuisance assemble_linear_fit(const WorkingDesign& wd, const Vec& beta,
                                   double y_mean, Eigen::Index p) {
  FittedNuisance fit;
  fit.coef = Vec::Zero(p);
  double shift = 0.0;
  for (std::size_t j = 0; j < wd.active.size(); ++j) {
    const int orig = wd.active[j];
    const double b = beta[static_cast<Eigen::Index>(j)] / wd.scale[orig];
    fit.coef[orig] = b;
    shift += b * wd.center[orig];
  }
  fit.intercept = y_mean - shift;
  fit.center = wd.center;
  fit.scale = wd.scale;
  fit.link = Link::Identity;
  return fit;
}

struct RidgeBasis {
  WorkingDesign wd;
  Eigen::SelfAdjointEigenSolver<Mat> eig;  // of Z'Z
  Vec u;                                   // V' Z' yc
  double yy = 0.0;                         // ||yc||^2
  double y_mean = 0.0;
};

RidgeBasis ridge_basis(const Mat& x, const Vec& y, bool standardize) {
  if (x.rows() < 2) raise(ErrorCode::TooFewRows, "ridge needs n >= 2");
  if (x.rows() != y.size()) {
    raise(ErrorCode::LengthMismatch, "x rows != y length");
  }
  RidgeBasis basis;
  basis.wd = make_working_design(x, standardize);
  basis.y_mean = y.mean();
  const Vec yc = y.array() - basis.y_mean;
  basis.yy = yc.squaredNorm();
  const Mat gram = basis.wd.z.transpose() * basis.wd.z;
  basis.eig.compute(gram);
  basis.u = basis.eig.eigenvectors().transpose() *
            (basis.wd.z.transpose() * yc);
  return basis;
}

Vec ridge_solve(const RidgeBasis& basis, double lambda) {
  const Vec& ev = basis.eig.eigenvalues();
  const auto k = ev.size();
  if (lambda == 0.0 && k > 0) {
    const double top = ev[k - 1];
    if (ev[0] <= 1e-12 * std::max(top, 1.0)) {
      raise(ErrorCode::SingularDesign,
            "collinear design with lambda = 0");
    }
  }
  Vec b(k);
  for (Eigen::Index i = 0; i < k; ++i) b[i] = basis.u[i] / (ev[i] + lambda);
  return basis.eig.eigenvectors() * b;
}

double ridge_gcv_score(const RidgeBasis& basis, double lambda,
                       Eigen::Index n) {
  const Vec& ev = basis.eig.eigenvalues();
  double rss = basis.yy;
  double df = 1.0;  // intercept
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    const double denom = ev[i] + lambda;
    rss += basis.u[i] * basis.u[i] *
           (ev[i] / (denom * denom) - 2.0 / denom);
    df += ev[i] / denom;
  }
  rss = std::max(rss, 0.0);
  const double dof = static_cast<double>(n) - df;
  if (dof <= 0.0) return std::numeric_limits<double>::infinity();
  return static_cast<double>(n) * rss / (dof * dof);
}

std::vector<double> log_grid(double top, double bottom, int size) {
  std::vector<double> grid(size);
  const double step =
      size > 1 ? std::pow(bottom / top, 1.0 / (size - 1)) : 1.0;
  double v = top;
  for (int i = 0; i < size; ++i, v *= step) grid[i] = v;
  return grid;
}

double mean_column_variance(const Mat& z) {
  if (z.cols() == 0) return 1.0;
  const auto n = static_cast<double>(z.rows());
  double total = 0.0;
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    const double c = z.col(j).mean();
    total += (z.col(j).array() - c).square().sum() / n;
  }
  return total / static_cast<double>(z.cols());
}

// One coordinate-descent solve of
//   (2n)^-1 ||yc - Z b||^2 + lambda * sum w_j |b_j|
// using the gram matrix C = Z'Z/n and q = Z'yc/n. Coordinates with
// non-finite weight stay at zero. Returns the sweep count through *sweeps.
Vec cd_lasso(const Mat& gram, const Vec& q, const Vec& weights, double lambda,
             Vec beta, int* sweeps_out, double* final_change) {
  const auto k = q.size();
  int sweeps = 0;
  double max_change = 0.0;
  for (; sweeps < kCdMaxSweeps; ++sweeps) {
    max_change = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) {
      if (!std::isfinite(weights[j])) {
        beta[j] = 0.0;
        continue;
      }
      const double cjj = gram(j, j);
      if (cjj <= 0.0) {
        beta[j] = 0.0;
        continue;
      }
      const double zj = q[j] - gram.row(j).dot(beta) + cjj * beta[j];
      const double updated = soft_threshold(zj, lambda * weights[j]) / cjj;
      max_change = std::max(max_change, std::abs(updated - beta[j]));
      beta[j] = updated;
    }
    if (max_change < kCdTol) break;
  }
  if (sweeps_out) *sweeps_out = sweeps;
  if (final_change) *final_change = max_change;
  return beta;
}

std::vector<int> cv_fold_ids(int n, int folds, Rng* cv_rng) {
  Rng fallback(0xCF01DULL);  // fixed fallback keeps unseeded CV deterministic
  Rng& rng = cv_rng ? *cv_rng : fallback;
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  for (int i = n - 1; i > 0; --i) {
    const auto j = static_cast<int>(rng.uniform_below(i + 1));
    std::swap(perm[i], perm[j]);
  }
  std::vector<int> fold(n);
  for (int i = 0; i < n; ++i) {
    fold[perm[i]] = static_cast<int>(
        (static_cast<std::int64_t>(i) * folds) / n);
  }
  return fold;
}

}  // namespace

FittedNuisance fit_mean(const Vec& y) {
  if (y.size() == 0) raise(ErrorCode::EmptyInput, "empty outcome vector");
  FittedNuisance fit;
  fit.spec.kind = NuisanceKind::ConstantMean;
  fit.intercept = y.mean();
  fit.coef = Vec();
  fit.center = Vec();
  fit.scale = Vec();
  fit.link = Link::Identity;
  return fit;
}

FittedNuisance fit_ridge(const Mat& x, const Vec& y, double lambda,
                         bool standardize) {
  if (lambda < 0.0) raise(ErrorCode::InvalidConfig, "lambda must be >= 0");
  const RidgeBasis basis = ridge_basis(x, y, standardize);
  const Vec beta = ridge_solve(basis, lambda);
  FittedNuisance fit =
      assemble_linear_fit(basis.wd, beta, basis.y_mean, x.cols());
  fit.spec.kind = NuisanceKind::Ridge;
  fit.spec.lambda = lambda;
  fit.spec.standardize = standardize;
  fit.lambda_chosen = lambda;
  return fit;
}

FittedNuisance fit_ridge_gcv(const Mat& x, const Vec& y, bool standardize) {
  const RidgeBasis basis = ridge_basis(x, y, standardize);
  const Vec& ev = basis.eig.eigenvalues();
  const double base =
      ev.size() > 0 ? std::max(ev.sum() / static_cast<double>(ev.size()),
                               1e-12)
                    : 1.0;
  double best_lambda = base;
  double best_score = std::numeric_limits<double>::infinity();
  for (double lambda : log_grid(1e3 * base, 1e-6 * base, 61)) {
    const double score = ridge_gcv_score(basis, lambda, x.rows());
    if (score < best_score) {
      best_score = score;
      best_lambda = lambda;
    }
  }
  const Vec beta = ridge_solve(basis, best_lambda);
  FittedNuisance fit =
      assemble_linear_fit(basis.wd, beta, basis.y_mean, x.cols());
  fit.spec.kind = NuisanceKind::Ridge;
  fit.spec.gcv = true;
  fit.spec.standardize = standardize;
  fit.lambda_chosen = best_lambda;
  return fit;
}

FittedNuisance fit_adaptive_lasso_linear(const Mat& x, const Vec& y,
                                         const NuisanceSpec& spec,
                                         Rng* cv_rng) {
  if (x.rows() < 2) raise(ErrorCode::TooFewRows, "lasso needs n >= 2");
  if (x.rows() != y.size()) {
    raise(ErrorCode::LengthMismatch, "x rows != y length");
  }
  if (spec.gamma <= 0.0) raise(ErrorCode::InvalidConfig, "gamma must be > 0");
  const auto n = x.rows();
  const WorkingDesign wd = make_working_design(x, spec.standardize);
  const double y_mean = y.mean();
  const Vec yc = y.array() - y_mean;
  const auto k = wd.z.cols();

  // Initial ridge estimator for the adaptive weights.
  const double lambda_init = 1e-3 * mean_column_variance(wd.z);
  Vec beta_init(k);
  {
    const Mat gram_abs = wd.z.transpose() * wd.z;
    Eigen::SelfAdjointEigenSolver<Mat> eig(gram_abs);
    const Vec u = eig.eigenvectors().transpose() * (wd.z.transpose() * yc);
    Vec b(k);
    for (Eigen::Index i = 0; i < k; ++i) {
      b[i] = u[i] / (eig.eigenvalues()[i] + lambda_init);
    }
    beta_init = eig.eigenvectors() * b;
  }

  Vec weights(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const double mag = std::abs(beta_init[j]);
    weights[j] = mag < kZeroWeightTol
                     ? std::numeric_limits<double>::infinity()
                     : std::pow(mag, -spec.gamma);
  }

  const Mat gram = (wd.z.transpose() * wd.z) / static_cast<double>(n);
  const Vec q = (wd.z.transpose() * yc) / static_cast<double>(n);
  const double yy_n = yc.squaredNorm() / static_cast<double>(n);
  auto rss_n = [&](const Vec& beta) {
    return std::max(1e-300, yy_n - 2.0 * beta.dot(q) + beta.dot(gram * beta));
  };

  int total_sweeps = 0;
  double final_change = 0.0;
  Vec beta = Vec::Zero(k);
  double lambda_chosen = spec.lambda;

  if (spec.select == LambdaSelect::Fixed) {
    int sweeps = 0;
    beta = cd_lasso(gram, q, weights, spec.lambda, std::move(beta), &sweeps,
                    &final_change);
    total_sweeps = sweeps;
    if (sweeps >= kCdMaxSweeps && final_change >= kCdTol) {
      raise(ErrorCode::ConvergenceFailure,
            "coordinate descent residual change " +
                std::to_string(final_change));
    }
  } else {
    double lambda_max = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) {
      if (std::isfinite(weights[j])) {
        lambda_max = std::max(lambda_max, std::abs(q[j]) / weights[j]);
      }
    }
    if (lambda_max <= 0.0) lambda_max = 1.0;
    const std::vector<double> grid =
        log_grid(lambda_max, spec.grid_min_ratio * lambda_max,
                 std::max(2, spec.grid_size));

    std::vector<double> score(grid.size(), 0.0);
    if (spec.select == LambdaSelect::Bic) {
      Vec warm = Vec::Zero(k);
      for (std::size_t g = 0; g < grid.size(); ++g) {
        int sweeps = 0;
        warm = cd_lasso(gram, q, weights, grid[g], std::move(warm), &sweeps,
                        &final_change);
        total_sweeps += sweeps;
        const int df = static_cast<int>((warm.array() != 0.0).count());
        score[g] = static_cast<double>(n) * std::log(rss_n(warm)) +
                   df * std::log(static_cast<double>(n));
      }
    } else {
      const int folds = std::max(2, spec.cv_folds);
      const std::vector<int> fold = cv_fold_ids(static_cast<int>(n), folds,
                                                cv_rng);
      for (int f = 0; f < folds; ++f) {
        std::vector<int> train;
        std::vector<int> test;
        for (int i = 0; i < static_cast<int>(n); ++i) {
          (fold[i] == f ? test : train).push_back(i);
        }
        if (train.empty() || test.empty()) continue;
        Mat zt(train.size(), k);
        Vec yt(train.size());
        for (std::size_t i = 0; i < train.size(); ++i) {
          zt.row(static_cast<Eigen::Index>(i)) = wd.z.row(train[i]);
          yt[static_cast<Eigen::Index>(i)] = yc[train[i]];
        }
        const Mat gram_f = (zt.transpose() * zt) / static_cast<double>(n);
        const Vec q_f = (zt.transpose() * yt) / static_cast<double>(n);
        Vec warm = Vec::Zero(k);
        for (std::size_t g = 0; g < grid.size(); ++g) {
          int sweeps = 0;
          warm = cd_lasso(gram_f, q_f, weights, grid[g], std::move(warm),
                          &sweeps, &final_change);
          total_sweeps += sweeps;
          double mse = 0.0;
          for (int i : test) {
            const double fitted = wd.z.row(i).dot(warm);
            mse += (yc[i] - fitted) * (yc[i] - fitted);
          }
          score[g] += mse / static_cast<double>(test.size());
        }
      }
    }
    std::size_t best = 0;
    for (std::size_t g = 1; g < grid.size(); ++g) {
      if (score[g] < score[best]) best = g;
    }
    lambda_chosen = grid[best];
    int sweeps = 0;
    beta = cd_lasso(gram, q, weights, lambda_chosen, Vec::Zero(k), &sweeps,
                    &final_change);
    total_sweeps += sweeps;
    if (sweeps >= kCdMaxSweeps && final_change >= kCdTol) {
      raise(ErrorCode::ConvergenceFailure,
            "coordinate descent residual change " +
                std::to_string(final_change));
    }
  }

  FittedNuisance fit = assemble_linear_fit(wd, beta, y_mean, x.cols());
  fit.spec = spec;
  fit.spec.kind = NuisanceKind::AdaptiveLasso;
  fit.lambda_chosen = lambda_chosen;
  fit.convergence = {total_sweeps, final_change, final_change < kCdTol};
  return fit;
}

namespace {

struct LogisticState {
  Vec beta;       // working-scale slopes
  double b0 = 0.0;
};

// Newton/IRLS for the (ridge-)penalized Bernoulli likelihood on the working
// design. Throws QuasiSeparation when the linear predictor escapes the
// plausible range.
LogisticState irls_logistic(const Mat& z, const Vec& y, double lambda,
                            ConvergenceReport* report) {
  const auto n = z.rows();
  const auto k = z.cols();
  LogisticState st;
  st.beta = Vec::Zero(k);
  const double ybar = y.mean();
  st.b0 = std::log(ybar / (1.0 - ybar));
  Vec eta(n), prob(n), wdiag(n), resid(n);
  int iter = 0;
  double change = 0.0;
  for (; iter < kIrlsMaxIter; ++iter) {
    eta = (z * st.beta).array() + st.b0;
    if (eta.cwiseAbs().maxCoeff() > kLinearPredictorBound) {
      raise(ErrorCode::QuasiSeparation,
            "linear predictor exceeded " +
                std::to_string(kLinearPredictorBound));
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      prob[i] = sigmoid(eta[i]);
      wdiag[i] = std::max(prob[i] * (1.0 - prob[i]), 1e-10);
      resid[i] = y[i] - prob[i];
    }
    Mat h(k + 1, k + 1);
    Vec g(k + 1);
    h(0, 0) = wdiag.sum();
    g[0] = resid.sum();
    if (k > 0) {
      const Mat zw = wdiag.asDiagonal() * z;
      h.block(1, 1, k, k) = z.transpose() * zw;
      h.block(0, 1, 1, k) = zw.colwise().sum();
      h.block(1, 0, k, 1) = h.block(0, 1, 1, k).transpose();
      g.tail(k) = z.transpose() * resid;
      for (Eigen::Index j = 0; j < k; ++j) {
        h(j + 1, j + 1) += lambda;
        g[j + 1] -= lambda * st.beta[j];
      }
    }
    const Vec delta = h.ldlt().solve(g);
    if (!delta.allFinite()) {
      raise(ErrorCode::SingularDesign, "IRLS system not solvable");
    }
    st.b0 += delta[0];
    if (k > 0) st.beta += delta.tail(k);
    change = delta.cwiseAbs().maxCoeff();
    if (change < kIrlsTol) break;
  }
  if (report) {
    report->iterations = iter + 1;
    report->final_change = change;
    report->converged = change < kIrlsTol;
  }
  if (change >= kIrlsTol) {
    // A saturated predictor that still refuses to converge is the signature
    // of separation creeping toward the boundary.
    eta = (z * st.beta).array() + st.b0;
    if (eta.cwiseAbs().maxCoeff() > 10.0) {
      raise(ErrorCode::QuasiSeparation,
            "IRLS diverging: |linear predictor| reached " +
                std::to_string(eta.cwiseAbs().maxCoeff()));
    }
    raise(ErrorCode::ConvergenceFailure,
          "IRLS change " + std::to_string(change) + " after " +
              std::to_string(kIrlsMaxIter) + " iterations");
  }
  return st;
}

double bernoulli_loglik(const Mat& z, const Vec& y, const LogisticState& st) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double eta = z.row(i).dot(st.beta) + st.b0;
    const double log1pexp =
        eta > 0.0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
    ll += y[i] * eta - log1pexp;
  }
  return ll;
}

// Penalized weighted least-squares solve of the IRLS quadratic
// approximation; intercept handled as an explicit unpenalized coordinate.
LogisticState logistic_cd_at_lambda(const Mat& z, const Vec& y,
                                    const Vec& weights, double lambda,
                                    LogisticState st, int* iters) {
  const auto n = z.rows();
  const auto k = z.cols();
  Vec eta(n), prob(n), wdiag(n), zwork(n);
  int outer = 0;
  for (; outer < kIrlsMaxIter; ++outer) {
    eta = (z * st.beta).array() + st.b0;
    for (Eigen::Index i = 0; i < n; ++i) {
      prob[i] = sigmoid(std::clamp(eta[i], -kLinearPredictorBound,
                                   kLinearPredictorBound));
      wdiag[i] = std::max(prob[i] * (1.0 - prob[i]), 1e-10);
      zwork[i] = eta[i] + (y[i] - prob[i]) / wdiag[i];
    }
    const double wsum = wdiag.sum();
    const Mat zw = wdiag.asDiagonal() * z;
    const Mat gram = (z.transpose() * zw) / static_cast<double>(n);
    const Vec wz_col = zw.colwise().sum() / static_cast<double>(n);
    const Vec q = (zw.transpose() * zwork) / static_cast<double>(n);
    const double wz_work = wdiag.dot(zwork);
    double max_change = 0.0;
    Vec beta = st.beta;
    double b0 = st.b0;
    for (int sweep = 0; sweep < kCdMaxSweeps; ++sweep) {
      max_change = 0.0;
      // intercept (unpenalized)
      const double b0_new =
          (wz_work - static_cast<double>(n) * wz_col.dot(beta)) / wsum;
      max_change = std::max(max_change, std::abs(b0_new - b0));
      b0 = b0_new;
      for (Eigen::Index j = 0; j < k; ++j) {
        if (!std::isfinite(weights[j])) {
          beta[j] = 0.0;
          continue;
        }
        const double cjj = gram(j, j);
        if (cjj <= 0.0) continue;
        const double zj = q[j] - gram.row(j).dot(beta) + cjj * beta[j] -
                          b0 * wz_col[j];
        const double updated = soft_threshold(zj, lambda * weights[j]) / cjj;
        max_change = std::max(max_change, std::abs(updated - beta[j]));
        beta[j] = updated;
      }
      if (max_change < kCdTol) break;
    }
    const double outer_change =
        std::max(std::abs(b0 - st.b0),
                 k > 0 ? (beta - st.beta).cwiseAbs().maxCoeff() : 0.0);
    st.b0 = b0;
    st.beta = beta;
    if (outer_change < kIrlsTol) break;
  }
  if (iters) *iters += outer + 1;
  return st;
}

}  // namespace

FittedNuisance fit_logistic(const Mat& x, const Vec& y,
                            LogisticPenalty penalty, const NuisanceSpec& spec,
                            Rng* cv_rng) {
  (void)cv_rng;
  if (x.rows() != y.size()) {
    raise(ErrorCode::LengthMismatch, "x rows != y length");
  }
  const auto n = x.rows();
  int ones = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (y[i] != 0.0 && y[i] != 1.0) {
      raise(ErrorCode::TreatmentNotBinary,
            "logistic target row " + std::to_string(i + 1));
    }
    ones += y[i] == 1.0;
  }
  if (ones == 0 || ones == n) {
    raise(ErrorCode::SingleClass, "logistic target has a single class");
  }

  const WorkingDesign wd = make_working_design(x, spec.standardize);
  const auto k = wd.z.cols();
  ConvergenceReport report;
  LogisticState st;
  double lambda_chosen = 0.0;

  switch (penalty) {
    case LogisticPenalty::None:
      st = irls_logistic(wd.z, y, 0.0, &report);
      break;
    case LogisticPenalty::Ridge:
      if (spec.lambda < 0.0) {
        raise(ErrorCode::InvalidConfig, "lambda must be >= 0");
      }
      st = irls_logistic(wd.z, y, spec.lambda, &report);
      lambda_chosen = spec.lambda;
      break;
    case LogisticPenalty::AdaptiveLasso: {
      const double lambda_init = std::max(1e-3 * mean_column_variance(wd.z),
                                          1e-6);
      const LogisticState init = irls_logistic(wd.z, y, lambda_init, &report);
      Vec weights(k);
      for (Eigen::Index j = 0; j < k; ++j) {
        const double mag = std::abs(init.beta[j]);
        weights[j] = mag < kZeroWeightTol
                         ? std::numeric_limits<double>::infinity()
                         : std::pow(mag, -spec.gamma);
      }
      // lambda_max from the null model gradient.
      const double ybar = y.mean();
      double lambda_max = 0.0;
      for (Eigen::Index j = 0; j < k; ++j) {
        if (!std::isfinite(weights[j])) continue;
        double qj = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
          qj += wd.z(i, j) * (y[i] - ybar);
        }
        lambda_max = std::max(lambda_max,
                              std::abs(qj / static_cast<double>(n)) /
                                  weights[j]);
      }
      if (lambda_max <= 0.0) lambda_max = 1.0;
      const std::vector<double> grid =
          log_grid(lambda_max, spec.grid_min_ratio * lambda_max,
                   std::max(2, spec.grid_size));
      int iters = 0;
      LogisticState warm;
      warm.beta = Vec::Zero(k);
      warm.b0 = std::log(ybar / (1.0 - ybar));
      double best_bic = std::numeric_limits<double>::infinity();
      LogisticState best = warm;
      lambda_chosen = grid.front();
      for (double lambda : grid) {
        warm = logistic_cd_at_lambda(wd.z, y, weights, lambda, warm, &iters);
        const int df = static_cast<int>((warm.beta.array() != 0.0).count());
        const double bic = -2.0 * bernoulli_loglik(wd.z, y, warm) +
                           df * std::log(static_cast<double>(n));
        if (bic < best_bic) {
          best_bic = bic;
          best = warm;
          lambda_chosen = lambda;
        }
      }
      st = best;
      report.iterations = iters;
      report.final_change = 0.0;
      report.converged = true;
      break;
    }
  }

  FittedNuisance fit = assemble_linear_fit(wd, st.beta, 0.0, x.cols());
  // assemble_linear_fit treats the target as centered; redo the intercept
  // for the logit link where b0 is estimated directly.
  double shift = 0.0;
  for (std::size_t j = 0; j < wd.active.size(); ++j) {
    const int orig = wd.active[j];
    shift += fit.coef[orig] * wd.center[orig];
  }
  fit.intercept = st.b0 - shift;
  fit.link = Link::Logit;
  fit.spec = spec;
  fit.spec.kind = penalty == LogisticPenalty::None
                      ? NuisanceKind::Logistic
                      : (penalty == LogisticPenalty::Ridge
                             ? NuisanceKind::LogisticRidge
                             : NuisanceKind::LogisticAdaptiveLasso);
  fit.convergence = report;
  fit.lambda_chosen = lambda_chosen;
  return fit;
}

Vec predict(const FittedNuisance& fit, const Mat& x) {
  if (fit.coef.size() > 0 && x.cols() != fit.coef.size()) {
    raise(ErrorCode::DimensionMismatch,
          "fit has " + std::to_string(fit.coef.size()) + " columns, x has " +
              std::to_string(x.cols()));
  }
  Vec eta = Vec::Constant(x.rows(), fit.intercept);
  if (fit.coef.size() > 0) eta += x * fit.coef;
  if (fit.link == Link::Identity) return eta;
  Vec out(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    out[i] = std::clamp(sigmoid(eta[i]), kPropensityClip,
                        1.0 - kPropensityClip);
  }
  return out;
}

FittedNuisance fit_nuisance(const NuisanceSpec& spec, const Mat& x,
                            const Vec& y, Rng* cv_rng) {
  Mat design = x;
  std::vector<int> kept;
  if (!spec.include.empty()) {
    kept = spec.include;
    design.resize(x.rows(), static_cast<Eigen::Index>(kept.size()));
    for (std::size_t j = 0; j < kept.size(); ++j) {
      if (kept[j] < 0 || kept[j] >= x.cols()) {
        raise(ErrorCode::InvalidConfig,
              "include column " + std::to_string(kept[j] + 1) +
                  " out of range");
      }
      design.col(static_cast<Eigen::Index>(j)) = x.col(kept[j]);
    }
  }

  FittedNuisance fit;
  switch (spec.kind) {
    case NuisanceKind::ConstantMean:
      fit = fit_mean(y);
      fit.coef = Vec::Zero(x.cols());
      fit.center = Vec::Zero(x.cols());
      fit.scale = Vec::Ones(x.cols());
      return fit;
    case NuisanceKind::LeastSquares:
      fit = fit_ridge(design, y, 0.0, spec.standardize);
      break;
    case NuisanceKind::Ridge:
      fit = spec.gcv ? fit_ridge_gcv(design, y, spec.standardize)
                     : fit_ridge(design, y, spec.lambda, spec.standardize);
      break;
    case NuisanceKind::AdaptiveLasso:
      fit = fit_adaptive_lasso_linear(design, y, spec, cv_rng);
      break;
    case NuisanceKind::Logistic:
      fit = fit_logistic(design, y, LogisticPenalty::None, spec, cv_rng);
      break;
    case NuisanceKind::LogisticRidge:
      fit = fit_logistic(design, y, LogisticPenalty::Ridge, spec, cv_rng);
      break;
    case NuisanceKind::LogisticAdaptiveLasso:
      fit = fit_logistic(design, y, LogisticPenalty::AdaptiveLasso, spec,
                         cv_rng);
      break;
  }

  if (!kept.empty()) {
    // Scatter back to full width; excluded columns keep zero slopes.
    Vec coef = Vec::Zero(x.cols());
    Vec center = Vec::Zero(x.cols());
    Vec scale = Vec::Ones(x.cols());
    for (std::size_t j = 0; j < kept.size(); ++j) {
      coef[kept[j]] = fit.coef[static_cast<Eigen::Index>(j)];
      center[kept[j]] = fit.center[static_cast<Eigen::Index>(j)];
      scale[kept[j]] = fit.scale[static_cast<Eigen::Index>(j)];
    }
    fit.coef = coef;
    fit.center = center;
    fit.scale = scale;
  }
  fit.spec.include = spec.include;
  return fit;
}

}  // namespace seqint
