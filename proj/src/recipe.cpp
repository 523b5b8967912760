#include "seqint/recipe.hpp"

#include <cmath>
#include <utility>

namespace seqint {

namespace {

Vec control_subsample_target(const Dataset& dataset, Mat* x_out) {
  std::vector<int> rows;
  rows.reserve(dataset.n());
  for (int i = 0; i < dataset.n(); ++i) {
    if (dataset.a[i] == 0.0) rows.push_back(i);
  }
  if (rows.size() < 2) {
    raise(ErrorCode::TooFewRows, "fewer than 2 control rows for the h fit");
  }
  Mat x(rows.size(), dataset.p());
  Vec y(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    x.row(static_cast<Eigen::Index>(i)) = dataset.x.row(rows[i]);
    y[static_cast<Eigen::Index>(i)] = dataset.y[rows[i]];
  }
  *x_out = std::move(x);
  return y;
}

}  // namespace

RecipeState prepare_recipe(const Dataset& dataset,
                           const StatisticRecipe& recipe, Rng* cv_rng) {
  RecipeState state;
  if (recipe.kind == RecipeKind::Rct) {
    if (!dataset.q0) {
      raise(ErrorCode::InvalidConfig,
            "the randomized-trial recipe needs a known propensity column");
    }
    state.residualized.w = compute_w(dataset.a, *dataset.q0);
    const FittedNuisance phi =
        fit_nuisance(recipe.phi, dataset.x, dataset.y, cv_rng);
    state.residualized.r = dataset.y - predict(phi, dataset.x);
    state.residualized.source = ResidualSource::Rct;
    return state;
  }

  FittedNuisance q_fit;
  try {
    q_fit = fit_nuisance(recipe.q, dataset.x, dataset.a, cv_rng);
  } catch (const Error& err) {
    if (err.code() != ErrorCode::QuasiSeparation) throw;
    // Separated propensity fit: fall back to a ridge-penalized model.
    NuisanceSpec ridge = recipe.q;
    ridge.kind = NuisanceKind::LogisticRidge;
    ridge.lambda = 0.01 * static_cast<double>(dataset.n());
    q_fit = fit_nuisance(ridge, dataset.x, dataset.a, cv_rng);
  }
  const Vec q_hat = predict(q_fit, dataset.x);  // clipped into (0,1)
  state.residualized.w = dataset.a - q_hat;

  FittedNuisance h_fit;
  if (recipe.h_on_control_only) {
    Mat x_control;
    const Vec y_control = control_subsample_target(dataset, &x_control);
    h_fit = fit_nuisance(recipe.h, x_control, y_control, cv_rng);
  } else {
    h_fit = fit_nuisance(recipe.h, dataset.x, dataset.y, cv_rng);
  }
  state.residualized.r = dataset.y - predict(h_fit, dataset.x);
  state.residualized.source = ResidualSource::DoublyRobust;
  return state;
}

StepStatistic evaluate_step(const Dataset& dataset, const RecipeState& state,
                            const StepContext& step,
                            const StatisticRecipe& recipe,
                            const EvalOptions& options) {
  const Vec& w = state.residualized.w;
  const Vec& r = state.residualized.r;
  const auto n = dataset.n();
  const bool marginal = step.j_set.empty();

  StepStatistic out;
  out.n_candidates = static_cast<int>(step.jc_set.size());
  if (step.jc_set.empty()) {
    raise(ErrorCode::AllDegenerate, "empty candidate set");
  }

  std::vector<CandidateStat> stats;
  stats.reserve(step.jc_set.size());

  if (recipe.kind == RecipeKind::Rct) {
    // Factor the weighted Gram of xtilde once; every candidate projection
    // shares it.
    Eigen::LDLT<Mat> ldlt;
    Mat wxt;
    const Vec w2 = w.cwiseProduct(w);
    if (!marginal) {
      wxt = w2.asDiagonal() * step.xtilde;
      const Mat gram = step.xtilde.transpose() * wxt;
      ldlt.compute(gram);
      const Vec d = ldlt.vectorD();
      const double dmax = d.cwiseAbs().maxCoeff();
      if (!(dmax > 0.0) || d.minCoeff() <= 1e-12 * dmax) {
        raise(ErrorCode::SingularProjection, "collinear selected design");
      }
    }
    Mat u_all;
    const bool keep_u = options.with_influence;
    if (keep_u) u_all.resize(n, static_cast<Eigen::Index>(step.jc_set.size()));
    Eigen::Index kept = 0;
    for (int k : step.jc_set) {
      try {
        CandidateStat stat;
        if (marginal) {
          stat = marginal_theta(r, w, dataset.x.col(k), k);
          if (keep_u) u_all.col(kept) = center_covariate(dataset.x.col(k), w);
        } else {
          const Vec rhs = wxt.transpose() * dataset.x.col(k);
          const Vec coefs = ldlt.solve(rhs);
          const Vec u = dataset.x.col(k) - step.xtilde * coefs;
          stat = marginal_theta(r, w, u, k);
          stat.projection = coefs;
          if (keep_u) u_all.col(kept) = u;
        }
        stats.push_back(std::move(stat));
        ++kept;
      } catch (const Error& err) {
        if (err.code() != ErrorCode::DegenerateCandidate) throw;
        out.degenerate.push_back(k);
      }
    }
    if (stats.empty()) {
      raise(ErrorCode::AllDegenerate, "every candidate is degenerate");
    }
    const int chosen = select_candidate(stats);
    int chosen_pos = 0;
    for (int i = 0; i < static_cast<int>(stats.size()); ++i) {
      if (stats[i].k == chosen) chosen_pos = i;
    }
    out.selected = stats[chosen_pos];
    out.stat_scaled = std::sqrt(static_cast<double>(n)) * out.selected.coef;
    if (options.with_influence) {
      u_all.conservativeResize(n, kept);
      out.influence = influence_rct(step, r, w, u_all, stats);
      if (options.with_sigma) {
        const Mat sigma = influence_covariance(out.influence);
        out.sigma_hat = std::sqrt(std::max(0.0, sigma(chosen_pos, chosen_pos)))
                        / out.selected.denom;
      }
    }
    if (options.keep_candidates) out.candidates = std::move(stats);
    return out;
  }

  // Doubly robust path.
  const Vec aw = dataset.a.cwiseProduct(w);  // A (1 - q_hat) >= 0
  Eigen::LDLT<Mat> ldlt;
  const Mat wxt = aw.asDiagonal() * step.xtilde;
  const Mat gram = step.xtilde.transpose() * wxt;
  ldlt.compute(gram);
  {
    const Vec d = ldlt.vectorD();
    const double dmax = d.cwiseAbs().maxCoeff();
    if (!(dmax > 0.0) || d.minCoeff() <= 1e-12 * dmax) {
      raise(ErrorCode::SingularProjection,
            "collinear selected design under the treated-unit weights");
    }
  }
  std::vector<Vec> residuals;  // kept only when the sigma plug-in is needed
  for (int k : step.jc_set) {
    try {
      const Vec rhs = wxt.transpose() * dataset.x.col(k);
      const Vec coefs = ldlt.solve(rhs);
      Vec lk = dataset.x.col(k) - step.xtilde * coefs;
      CandidateStat stat = dr_psi(r, w, dataset.a, lk, k);
      stat.projection = coefs;
      stats.push_back(std::move(stat));
      if (options.with_sigma) residuals.push_back(std::move(lk));
    } catch (const Error& err) {
      if (err.code() != ErrorCode::DegenerateCandidate) throw;
      out.degenerate.push_back(k);
    }
  }
  if (stats.empty()) {
    raise(ErrorCode::AllDegenerate, "every candidate is degenerate");
  }
  const int chosen = select_candidate(stats);
  int chosen_pos = 0;
  for (int i = 0; i < static_cast<int>(stats.size()); ++i) {
    if (stats[i].k == chosen) chosen_pos = i;
  }
  out.selected = stats[chosen_pos];
  out.stat_scaled = std::sqrt(static_cast<double>(n)) * out.selected.coef;
  if (options.with_sigma) {
    // Empirical sd of the per-observation estimating-equation contribution
    // W_hat (y - h_hat) L / Pn[A W_hat L^2] for the selected candidate.
    const Vec& lk = residuals[static_cast<std::size_t>(chosen_pos)];
    double mean = 0.0, sq = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double phi = w[i] * r[i] * lk[i] / out.selected.denom;
      mean += phi;
      sq += phi * phi;
    }
    mean /= static_cast<double>(n);
    sq /= static_cast<double>(n);
    out.sigma_hat = std::sqrt(std::max(0.0, sq - mean * mean));
  }
  if (options.keep_candidates) out.candidates = std::move(stats);
  return out;
}

StepStatistic evaluate_step(const Dataset& dataset, const StepContext& step,
                            const StatisticRecipe& recipe, Rng* cv_rng,
                            const EvalOptions& options) {
  const RecipeState state = prepare_recipe(dataset, recipe, cv_rng);
  return evaluate_step(dataset, state, step, recipe, options);
}

}  // namespace seqint
