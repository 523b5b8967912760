#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "seqint/nuisance.hpp"
#include "seqint/rng.hpp"

using namespace seqint;

namespace {

Mat random_mat(Rng& rng, int n, int p) {
  Mat x(n, p);
  for (int j = 0; j < p; ++j) {
    for (int i = 0; i < n; ++i) x(i, j) = rng.normal();
  }
  return x;
}

Vec random_vec(Rng& rng, int n) {
  Vec v(n);
  for (int i = 0; i < n; ++i) v[i] = rng.normal();
  return v;
}

// Sylvester-construction Hadamard matrix of order 2^k; columns past the
// first are exactly orthogonal, zero-mean, unit-variance regressors.
Mat hadamard(int order) {
  Mat h(1, 1);
  h(0, 0) = 1.0;
  while (h.rows() < order) {
    Mat next(2 * h.rows(), 2 * h.cols());
    next.topLeftCorner(h.rows(), h.cols()) = h;
    next.topRightCorner(h.rows(), h.cols()) = h;
    next.bottomLeftCorner(h.rows(), h.cols()) = h;
    next.bottomRightCorner(h.rows(), h.cols()) = -h;
    h = next;
  }
  return h;
}

// Standardized-scale slopes recovered from a fit on original columns.
Vec standardized_slopes(const FittedNuisance& fit) {
  Vec b = fit.coef;
  for (Eigen::Index j = 0; j < b.size(); ++j) b[j] *= fit.scale[j];
  return b;
}

}  // namespace

TEST_CASE("fit_mean basics") {
  CHECK(fit_mean(Vec{{1.0, 3.0}}).intercept == doctest::Approx(2.0));
  CHECK(fit_mean(Vec{{5.0}}).intercept == doctest::Approx(5.0));
  CHECK_THROWS_WITH_AS(fit_mean(Vec()), doctest::Contains("EmptyInput"),
                       Error);
}

TEST_CASE("ridge at lambda zero equals least squares") {
  Rng rng(30);
  const int n = 20;
  const int p = 3;
  const Mat x = random_mat(rng, n, p);
  const Vec y = random_vec(rng, n);
  const FittedNuisance fit = fit_ridge(x, y, 0.0);
  // Independent check: solve the (p+1) normal equations of the raw design.
  Mat design(n, p + 1);
  design.col(0).setOnes();
  design.rightCols(p) = x;
  const Vec sol = oracle::gauss_solve(design.transpose() * design,
                                      design.transpose() * y);
  CHECK(fit.intercept == doctest::Approx(sol[0]).epsilon(1e-8));
  for (int j = 0; j < p; ++j) {
    CHECK(fit.coef[j] == doctest::Approx(sol[j + 1]).epsilon(1e-8));
  }
}

TEST_CASE("huge ridge penalty shrinks slopes to zero") {
  Rng rng(31);
  const Mat x = random_mat(rng, 15, 2);
  const Vec y = random_vec(rng, 15);
  const FittedNuisance fit = fit_ridge(x, y, 1e9);
  CHECK(fit.coef.cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("ridge matches the closed-form normal equations at lambda one") {
  Rng rng(32);
  const int n = 5;
  const int p = 2;
  const Mat x = random_mat(rng, n, p);
  const Vec y = random_vec(rng, n);
  const double lambda = 1.0;
  const FittedNuisance fit = fit_ridge(x, y, lambda);
  // Reproduce the standardization, then solve the penalized normal
  // equations with a generic dense solve.
  Mat z(n, p);
  Vec scale(p), center(p);
  for (int j = 0; j < p; ++j) {
    center[j] = x.col(j).mean();
    Vec c = x.col(j).array() - center[j];
    scale[j] = std::sqrt(c.squaredNorm() / n);
    z.col(j) = c / scale[j];
  }
  const Vec yc = y.array() - y.mean();
  Mat gram = z.transpose() * z;
  for (int j = 0; j < p; ++j) gram(j, j) += lambda;
  const Vec beta_std = oracle::gauss_solve(gram, z.transpose() * yc);
  for (int j = 0; j < p; ++j) {
    CHECK(fit.coef[j] ==
          doctest::Approx(beta_std[j] / scale[j]).epsilon(1e-8));
  }
}

TEST_CASE("ridge slope norms shrink monotonically in lambda") {
  Rng rng(33);
  const Mat x = random_mat(rng, 30, 4);
  const Vec y = random_vec(rng, 30);
  double previous = std::numeric_limits<double>::infinity();
  for (double lambda : {0.0, 0.5, 2.0, 10.0, 100.0}) {
    const double norm = standardized_slopes(fit_ridge(x, y, lambda)).norm();
    CHECK(norm <= previous + 1e-12);
    previous = norm;
  }
}

TEST_CASE("ridge rejects collinear designs only at lambda zero") {
  Rng rng(34);
  Mat x = random_mat(rng, 12, 2);
  x.conservativeResize(12, 3);
  x.col(2) = x.col(0) + x.col(1);
  const Vec y = random_vec(rng, 12);
  CHECK_THROWS_WITH_AS(fit_ridge(x, y, 0.0),
                       doctest::Contains("SingularDesign"), Error);
  CHECK_NOTHROW(fit_ridge(x, y, 0.5));
}

TEST_CASE("ridge gcv picks a finite lambda and predicts sensibly") {
  Rng rng(35);
  const int n = 40;
  const Mat x = random_mat(rng, n, 3);
  Vec y(n);
  for (int i = 0; i < n; ++i) y[i] = 1.5 * x(i, 0) + 0.5 * rng.normal();
  const FittedNuisance fit = fit_ridge_gcv(x, y);
  CHECK(fit.lambda_chosen > 0.0);
  CHECK(fit.coef[0] == doctest::Approx(1.5).epsilon(0.15));
}

TEST_CASE("adaptive lasso with lambda forced to zero is least squares") {
  Rng rng(36);
  const int n = 25;
  const int p = 3;
  const Mat x = random_mat(rng, n, p);
  const Vec y = random_vec(rng, n);
  NuisanceSpec spec;
  spec.kind = NuisanceKind::AdaptiveLasso;
  spec.select = LambdaSelect::Fixed;
  spec.lambda = 0.0;
  const FittedNuisance lasso = fit_adaptive_lasso_linear(x, y, spec);
  const FittedNuisance ls = fit_ridge(x, y, 0.0);
  CHECK((lasso.coef - ls.coef).cwiseAbs().maxCoeff() < 1e-6);
  CHECK(lasso.intercept == doctest::Approx(ls.intercept).epsilon(1e-6));
}

TEST_CASE("adaptive lasso on an orthonormal design soft-thresholds") {
  const int n = 8;
  const int p = 4;
  const Mat h = hadamard(n);
  Mat x(n, p);
  for (int j = 0; j < p; ++j) x.col(j) = h.col(j + 1);
  Rng rng(37);
  Vec y(n);
  for (int i = 0; i < n; ++i) {
    y[i] = 1.2 * x(i, 0) - 0.4 * x(i, 1) + 0.15 * x(i, 2) + 0.3 * rng.normal();
  }
  const double lambda = 0.25;
  NuisanceSpec spec;
  spec.kind = NuisanceKind::AdaptiveLasso;
  spec.select = LambdaSelect::Fixed;
  spec.lambda = lambda;
  spec.gamma = 1.0;
  const FittedNuisance fit = fit_adaptive_lasso_linear(x, y, spec);

  // Closed-form oracle: the columns are exactly orthonormal in the 1/n
  // inner product, so each slope is the soft-threshold of the least-squares
  // slope at level lambda * w_j, with w_j from the stated ridge init.
  const Vec yc = y.array() - y.mean();
  const double lambda_init = 1e-3;  // mean column variance is exactly 1
  for (int j = 0; j < p; ++j) {
    const double q = x.col(j).dot(yc) / n;
    const double init = q * n / (n + lambda_init);
    const double w = 1.0 / std::abs(init);
    const double expected =
        std::copysign(std::max(std::abs(q) - lambda * w, 0.0), q);
    CHECK(fit.coef[j] == doctest::Approx(expected).epsilon(1e-6));
  }
}

TEST_CASE("BIC selection zeroes noise fits and matches a brute-force grid") {
  const int n = 32;
  const int p = 5;
  const Mat h = hadamard(n);
  Mat x(n, p);
  for (int j = 0; j < p; ++j) x.col(j) = h.col(j + 1);
  Rng rng(38);
  const Vec y = random_vec(rng, n);  // independent of x
  NuisanceSpec spec;
  spec.kind = NuisanceKind::AdaptiveLasso;
  spec.select = LambdaSelect::Bic;
  const FittedNuisance fit = fit_adaptive_lasso_linear(x, y, spec);

  // Brute-force BIC over a dense lambda grid using the closed-form
  // orthonormal-design solution.
  const Vec yc = y.array() - y.mean();
  Vec q(p), w(p);
  const double lambda_init = 1e-3;
  for (int j = 0; j < p; ++j) {
    q[j] = x.col(j).dot(yc) / n;
    w[j] = 1.0 / std::abs(q[j] * n / (n + lambda_init));
  }
  double best_bic = std::numeric_limits<double>::infinity();
  int best_df = -1;
  for (int g = 0; g <= 4000; ++g) {
    const double lambda = 1e-4 + g * (1.0 - 1e-4) / 4000.0;
    // Orthonormal identity: ||yc - Z b||^2 = ||yc||^2 + n sum(b^2 - 2 b q).
    double full_rss = yc.squaredNorm();
    int df = 0;
    for (int j = 0; j < p; ++j) {
      const double slope =
          std::copysign(std::max(std::abs(q[j]) - lambda * w[j], 0.0), q[j]);
      full_rss += n * (slope * slope - 2.0 * slope * q[j]);
      if (slope != 0.0) ++df;
    }
    const double bic = n * std::log(full_rss / n) + df * std::log(double(n));
    if (bic < best_bic) {
      best_bic = bic;
      best_df = df;
    }
  }
  // The all-zero model should win on pure noise, and the library's pick
  // should match the brute-force optimum.
  CHECK(best_df == 0);
  CHECK(fit.coef.cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("adaptive lasso satisfies its KKT conditions") {
  Rng rng(39);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 40;
    const int p = 5;
    const Mat x = random_mat(rng, n, p);
    Vec y(n);
    for (int i = 0; i < n; ++i) {
      y[i] = x(i, 0) - 0.7 * x(i, 2) + rng.normal();
    }
    NuisanceSpec spec;
    spec.kind = NuisanceKind::AdaptiveLasso;
    spec.select = LambdaSelect::Bic;
    const FittedNuisance fit = fit_adaptive_lasso_linear(x, y, spec);

    // Reconstruct the standardized design and the stated adaptive weights.
    Mat z(n, p);
    for (int j = 0; j < p; ++j) {
      z.col(j) = (x.col(j).array() - fit.center[j]) / fit.scale[j];
    }
    const Vec yc = y.array() - y.mean();
    double meanvar = 0.0;
    for (int j = 0; j < p; ++j) meanvar += z.col(j).squaredNorm() / n;
    meanvar /= p;
    Mat gram = z.transpose() * z;
    for (int j = 0; j < p; ++j) gram(j, j) += 1e-3 * meanvar;
    const Vec init = oracle::gauss_solve(gram, z.transpose() * yc);
    const Vec beta = standardized_slopes(fit);
    const Vec resid = yc - z * beta;
    for (int j = 0; j < p; ++j) {
      const double weight = 1.0 / std::abs(init[j]);
      const double grad = std::abs(z.col(j).dot(resid) / n);
      if (beta[j] != 0.0) {
        CHECK(grad == doctest::Approx(fit.lambda_chosen * weight)
                          .epsilon(1e-6));
      } else {
        CHECK(grad <= fit.lambda_chosen * weight + 1e-6);
      }
    }
  }
}

TEST_CASE("logistic fit rejects single-class targets") {
  Rng rng(40);
  const Mat x = random_mat(rng, 10, 2);
  const Vec y = Vec::Ones(10);
  NuisanceSpec spec;
  CHECK_THROWS_WITH_AS(fit_logistic(x, y, LogisticPenalty::None, spec),
                       doctest::Contains("SingleClass"), Error);
}

TEST_CASE("perfectly separated data quasi-separates without a penalty") {
  const int n = 12;
  Mat x(n, 1);
  Vec y(n);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = i < n / 2 ? 0.0 : 1.0;
    y[i] = x(i, 0);
  }
  NuisanceSpec spec;
  CHECK_THROWS_WITH_AS(fit_logistic(x, y, LogisticPenalty::None, spec),
                       doctest::Contains("QuasiSeparation"), Error);
}

TEST_CASE("unpenalized logistic fit zeroes the score equations") {
  Rng rng(41);
  const int n = 20;
  const Mat x = random_mat(rng, n, 2);
  Vec y(n);
  for (int i = 0; i < n; ++i) {
    const double eta = 0.3 + 0.8 * x(i, 0);
    y[i] = rng.bernoulli(1.0 / (1.0 + std::exp(-eta))) ? 1.0 : 0.0;
  }
  NuisanceSpec spec;
  const FittedNuisance fit = fit_logistic(x, y, LogisticPenalty::None, spec);
  CHECK(oracle::logistic_score_norm(x, y, fit.intercept, fit.coef) < 1e-8);
}

TEST_CASE("logistic predictions are clipped into [0.01, 0.99]") {
  FittedNuisance fit;
  fit.link = Link::Logit;
  fit.intercept = 50.0;
  fit.coef = Vec::Zero(1);
  fit.center = Vec::Zero(1);
  fit.scale = Vec::Ones(1);
  Mat x(3, 1);
  x << -1.0, 0.0, 1.0;
  const Vec prob = predict(fit, x);
  for (int i = 0; i < 3; ++i) CHECK(prob[i] == doctest::Approx(0.99));

  Rng rng(42);
  const int n = 60;
  const Mat data = random_mat(rng, n, 2);
  Vec y(n);
  for (int i = 0; i < n; ++i) y[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
  NuisanceSpec spec;
  spec.kind = NuisanceKind::LogisticAdaptiveLasso;
  const FittedNuisance fitted = fit_nuisance(spec, data, y);
  const Vec fitted_prob = predict(fitted, data);
  CHECK(fitted_prob.minCoeff() >= 0.01);
  CHECK(fitted_prob.maxCoeff() <= 0.99);
}

TEST_CASE("predict basics") {
  FittedNuisance constant = fit_mean(Vec{{2.0, 4.0}});
  const Vec out = predict(constant, Mat::Zero(3, 5));
  for (int i = 0; i < 3; ++i) CHECK(out[i] == doctest::Approx(3.0));

  Rng rng(43);
  const Mat x = random_mat(rng, 12, 3);
  const Vec y = random_vec(rng, 12);
  const FittedNuisance fit = fit_ridge(x, y, 0.5);
  const Vec fitted = predict(fit, x);
  for (int i = 0; i < 12; ++i) {
    double expected = fit.intercept;
    for (int j = 0; j < 3; ++j) expected += fit.coef[j] * x(i, j);
    CHECK(fitted[i] == doctest::Approx(expected).epsilon(1e-12));
  }
  CHECK_THROWS_WITH_AS(predict(fit, Mat::Zero(4, 2)),
                       doctest::Contains("DimensionMismatch"), Error);
}

TEST_CASE("excluded design columns keep zero slopes") {
  Rng rng(44);
  const int n = 50;
  Mat x = random_mat(rng, n, 3);
  Vec y(n);
  for (int i = 0; i < n; ++i) y[i] = 2.0 * x(i, 0) + 0.2 * rng.normal();
  NuisanceSpec spec;
  spec.kind = NuisanceKind::Ridge;
  spec.lambda = 0.1;
  spec.include = {1, 2};  // withhold the informative first column
  const FittedNuisance fit = fit_nuisance(spec, x, y);
  CHECK(fit.coef[0] == 0.0);
  CHECK(fit.coef.size() == 3);
  CHECK_NOTHROW(predict(fit, x));
}

TEST_CASE("cv lambda selection is deterministic given the fold seed") {
  Rng rng(45);
  const int n = 40;
  const Mat x = random_mat(rng, n, 4);
  Vec y(n);
  for (int i = 0; i < n; ++i) y[i] = x(i, 1) + 0.5 * rng.normal();
  NuisanceSpec spec;
  spec.kind = NuisanceKind::AdaptiveLasso;
  spec.select = LambdaSelect::Cv;
  spec.cv_folds = 4;
  Rng fold_a(77);
  Rng fold_b(77);
  const FittedNuisance fit_a = fit_adaptive_lasso_linear(x, y, spec, &fold_a);
  const FittedNuisance fit_b = fit_adaptive_lasso_linear(x, y, spec, &fold_b);
  CHECK(fit_a.lambda_chosen == fit_b.lambda_chosen);
  CHECK((fit_a.coef - fit_b.coef).cwiseAbs().maxCoeff() == 0.0);
}
