#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace seqint::oracle {

Vec gauss_solve(Mat a, Vec b) {
  const auto n = a.rows();
  for (Eigen::Index col = 0; col < n; ++col) {
    Eigen::Index pivot = col;
    for (Eigen::Index row = col + 1; row < n; ++row) {
      if (std::abs(a(row, col)) > std::abs(a(pivot, col))) pivot = row;
    }
    if (std::abs(a(pivot, col)) < 1e-300) {
      throw std::runtime_error("oracle: singular system");
    }
    a.row(col).swap(a.row(pivot));
    std::swap(b[col], b[pivot]);
    for (Eigen::Index row = 0; row < n; ++row) {
      if (row == col) continue;
      const double factor = a(row, col) / a(col, col);
      a.row(row) -= factor * a.row(col);
      b[row] -= factor * b[col];
    }
  }
  Vec x(n);
  for (Eigen::Index i = 0; i < n; ++i) x[i] = b[i] / a(i, i);
  return x;
}

TwoColumnFit two_column_least_squares(const Vec& r, const Vec& w,
                                      const Vec& xk) {
  const auto n = r.size();
  Mat gram(2, 2);
  Vec rhs(2);
  gram.setZero();
  rhs.setZero();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double c1 = w[i];
    const double c2 = w[i] * xk[i];
    gram(0, 0) += c1 * c1;
    gram(0, 1) += c1 * c2;
    gram(1, 0) += c1 * c2;
    gram(1, 1) += c2 * c2;
    rhs[0] += c1 * r[i];
    rhs[1] += c2 * r[i];
  }
  const Vec sol = gauss_solve(gram, rhs);
  double rss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double resid = r[i] - sol[0] * w[i] - sol[1] * w[i] * xk[i];
    rss += resid * resid;
  }
  return {sol[0], sol[1], rss / static_cast<double>(n)};
}

Vec weighted_normal_equations(const Vec& xk, const Mat& xtilde,
                              const Vec& weights) {
  const auto d = xtilde.cols();
  Mat gram = Mat::Zero(d, d);
  Vec rhs = Vec::Zero(d);
  for (Eigen::Index i = 0; i < xk.size(); ++i) {
    for (Eigen::Index a = 0; a < d; ++a) {
      rhs[a] += weights[i] * xtilde(i, a) * xk[i];
      for (Eigen::Index b = 0; b < d; ++b) {
        gram(a, b) += weights[i] * xtilde(i, a) * xtilde(i, b);
      }
    }
  }
  return gauss_solve(gram, rhs);
}

double dr_equation_residual(const Vec& r, const Vec& wtil, const Vec& a,
                            const Mat& xtilde, const Vec& xk, double psi) {
  const auto n = r.size();
  const auto d = xtilde.cols();
  // Solve the xtilde block for delta given psi.
  Mat gram = Mat::Zero(d, d);
  Vec rhs = Vec::Zero(d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double aw = a[i] * wtil[i];
    for (Eigen::Index c = 0; c < d; ++c) {
      rhs[c] += xtilde(i, c) * (wtil[i] * r[i] - aw * xk[i] * psi);
      for (Eigen::Index e = 0; e < d; ++e) {
        gram(c, e) += aw * xtilde(i, c) * xtilde(i, e);
      }
    }
  }
  const Vec delta = gauss_solve(gram, rhs);
  // Evaluate every component of the estimating equation.
  Vec eq = Vec::Zero(d + 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double fitted = xtilde.row(i).dot(delta) + xk[i] * psi;
    const double core = wtil[i] * (r[i] - fitted * a[i]);
    for (Eigen::Index c = 0; c < d; ++c) eq[c] += xtilde(i, c) * core;
    eq[d] += xk[i] * core;
  }
  eq /= static_cast<double>(n);
  return eq.cwiseAbs().maxCoeff();
}

Mat double_loop_covariance(const Mat& e) {
  const auto n = e.rows();
  const auto k = e.cols();
  Vec mean = Vec::Zero(k);
  for (Eigen::Index c = 0; c < k; ++c) {
    for (Eigen::Index i = 0; i < n; ++i) mean[c] += e(i, c);
    mean[c] /= static_cast<double>(n);
  }
  Mat cov = Mat::Zero(k, k);
  for (Eigen::Index a = 0; a < k; ++a) {
    for (Eigen::Index b = 0; b < k; ++b) {
      double total = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        total += (e(i, a) - mean[a]) * (e(i, b) - mean[b]);
      }
      cov(a, b) = total / static_cast<double>(n);
    }
  }
  return cov;
}

double ks_distance_counting(const Vec& a, const Vec& b) {
  std::vector<double> points;
  points.reserve(a.size() + b.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) points.push_back(a[i]);
  for (Eigen::Index i = 0; i < b.size(); ++i) points.push_back(b[i]);
  double dist = 0.0;
  for (double t : points) {
    double fa = 0.0;
    double fb = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i) fa += a[i] <= t;
    for (Eigen::Index i = 0; i < b.size(); ++i) fb += b[i] <= t;
    fa /= static_cast<double>(a.size());
    fb /= static_cast<double>(b.size());
    dist = std::max(dist, std::abs(fa - fb));
  }
  return dist;
}

double logistic_score_norm(const Mat& x, const Vec& y, double intercept,
                           const Vec& coef) {
  const auto n = x.rows();
  const auto p = x.cols();
  Vec score = Vec::Zero(p + 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double eta = intercept + x.row(i).dot(coef);
    const double prob = 1.0 / (1.0 + std::exp(-eta));
    const double resid = y[i] - prob;
    score[0] += resid;
    for (Eigen::Index j = 0; j < p; ++j) score[j + 1] += x(i, j) * resid;
  }
  return score.cwiseAbs().maxCoeff();
}

}  // namespace seqint::oracle
