#include "seqint/interaction_core.hpp"

#include <cmath>

namespace seqint {

namespace {

// LDLT solve with an explicit rank check on the diagonal factor.
Vec solve_psd(const Mat& gram, const Vec& rhs, ErrorCode on_singular) {
  Eigen::LDLT<Mat> ldlt(gram);
  const Vec d = ldlt.vectorD();
  const double dmax = d.cwiseAbs().maxCoeff();
  if (!(dmax > 0.0) || d.minCoeff() <= 1e-12 * dmax) {
    raise(on_singular, "rank-deficient weighted Gram matrix");
  }
  return ldlt.solve(rhs);
}

}  // namespace

Vec center_covariate(const Vec& xk, const Vec& w) {
  if (xk.size() != w.size()) {
    raise(ErrorCode::LengthMismatch, "xk and w lengths differ");
  }
  const double sww = w.squaredNorm();
  if (!(sww > 0.0)) raise(ErrorCode::ZeroWeightMass, "Pn[W^2] = 0");
  const double shift = w.cwiseProduct(w).dot(xk) / sww;
  return xk.array() - shift;
}

CandidateStat marginal_theta(const Vec& r, const Vec& w, const Vec& xk,
                             int k) {
  const auto n = r.size();
  if (w.size() != n || xk.size() != n) {
    raise(ErrorCode::LengthMismatch, "r, w, xk lengths differ");
  }
  double sww = 0.0, swwx = 0.0, swwxx = 0.0, swr = 0.0, swxr = 0.0,
         srr = 0.0, sx = 0.0, sxx = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double wi = w[i];
    const double xi = xk[i];
    const double ri = r[i];
    const double w2 = wi * wi;
    sww += w2;
    swwx += w2 * xi;
    swwxx += w2 * xi * xi;
    swr += wi * ri;
    swxr += wi * xi * ri;
    srr += ri * ri;
    sx += xi;
    sxx += xi * xi;
  }
  if (!(sww > 0.0)) raise(ErrorCode::ZeroWeightMass, "Pn[W^2] = 0");
  const double nd = static_cast<double>(n);
  const double shift = swwx / sww;
  const double denom_sum = swwxx - shift * swwx;  // sum of (W (xk - shift))^2
  const double var_x = std::max(0.0, sxx / nd - (sx / nd) * (sx / nd));
  const double scale = (sww / nd) * var_x;
  if (!(denom_sum / nd > kDegenerateRel * scale) || denom_sum <= 0.0) {
    raise(ErrorCode::DegenerateCandidate,
          "candidate " + std::to_string(k + 1) + " carries no weight mass");
  }
  CandidateStat stat;
  stat.k = k;
  stat.coef = (swxr - shift * swr) / denom_sum;
  stat.denom = denom_sum / nd;
  // Achieved RSS of the joint (alpha, theta) fit, via the centering identity.
  stat.criterion =
      (srr - swr * swr / sww - stat.coef * stat.coef * denom_sum) / nd;
  return stat;
}

int select_candidate(const std::vector<CandidateStat>& stats) {
  if (stats.empty()) {
    raise(ErrorCode::AllDegenerate, "no non-degenerate candidates");
  }
  int best = 0;
  for (int i = 1; i < static_cast<int>(stats.size()); ++i) {
    const bool better =
        stats[i].criterion < stats[best].criterion ||
        (stats[i].criterion == stats[best].criterion &&
         stats[i].k < stats[best].k);
    if (better) best = i;
  }
  return stats[best].k;
}

WeightedProjection weighted_projection(const Vec& xk, const Mat& xtilde,
                                       const Vec& weights) {
  const auto n = xk.size();
  if (xtilde.rows() != n || weights.size() != n) {
    raise(ErrorCode::LengthMismatch, "xk, xtilde, weights row counts differ");
  }
  const Mat wx = weights.asDiagonal() * xtilde;
  const Mat gram = xtilde.transpose() * wx;
  const Vec rhs = wx.transpose() * xk;
  WeightedProjection proj;
  proj.coefs = solve_psd(gram, rhs, ErrorCode::SingularProjection);
  proj.residual = xk - xtilde * proj.coefs;
  return proj;
}

CandidateStat dr_psi(const Vec& r, const Vec& wtil, const Vec& a,
                     const Vec& lk, int k) {
  const auto n = r.size();
  if (wtil.size() != n || a.size() != n || lk.size() != n) {
    raise(ErrorCode::LengthMismatch, "dr_psi input lengths differ");
  }
  double denom_sum = 0.0, numer = 0.0, saw = 0.0, sll = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double aw = a[i] * wtil[i];
    denom_sum += aw * lk[i] * lk[i];
    numer += wtil[i] * r[i] * lk[i];
    saw += aw;
    sll += lk[i] * lk[i];
  }
  const double nd = static_cast<double>(n);
  const double scale = (saw / nd) * (sll / nd);
  if (!(denom_sum / nd > kDegenerateRel * scale) || denom_sum <= 0.0) {
    raise(ErrorCode::DegenerateCandidate,
          "candidate " + std::to_string(k + 1) +
              " vanishes on the treated units");
  }
  CandidateStat stat;
  stat.k = k;
  stat.coef = numer / denom_sum;
  stat.denom = denom_sum / nd;
  stat.criterion = -stat.coef * stat.coef * stat.denom;
  return stat;
}

InfluenceMatrix influence_rct(const StepContext& step, const Vec& r,
                              const Vec& w, const Mat& u,
                              const std::vector<CandidateStat>& stats) {
  const auto n = r.size();
  const auto n_cand = u.cols();
  if (static_cast<Eigen::Index>(stats.size()) != n_cand) {
    raise(ErrorCode::DimensionMismatch, "one CandidateStat per u column");
  }
  const Vec w2 = w.cwiseProduct(w);
  const Mat gram =
      (step.xtilde.transpose() * (w2.asDiagonal() * step.xtilde)) /
      static_cast<double>(n);
  const Vec rhs = (step.xtilde.transpose() * w.cwiseProduct(r)) /
                  static_cast<double>(n);
  const Vec beta_w = solve_psd(gram, rhs, ErrorCode::SingularProjection);
  const Vec t = step.xtilde * beta_w;

  InfluenceMatrix influence;
  influence.e.resize(n, n_cand);
  influence.denoms.resize(n_cand);
  influence.columns.resize(static_cast<std::size_t>(n_cand));
  for (Eigen::Index c = 0; c < n_cand; ++c) {
    const double theta = stats[static_cast<std::size_t>(c)].coef;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double wu = w[i] * u(i, c);
      influence.e(i, c) = wu * (r[i] - theta * wu - w[i] * t[i]);
    }
    influence.denoms[c] = stats[static_cast<std::size_t>(c)].denom;
    influence.columns[static_cast<std::size_t>(c)] =
        stats[static_cast<std::size_t>(c)].k;
  }
  return influence;
}

Mat influence_covariance(const InfluenceMatrix& influence) {
  const auto n = influence.e.rows();
  const Vec mean = influence.e.colwise().mean();
  const Mat centered = influence.e.rowwise() - mean.transpose();
  return (centered.transpose() * centered) / static_cast<double>(n);
}

}  // namespace seqint
