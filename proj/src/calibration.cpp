#include "seqint/calibration.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

#include "seqint/parallel.hpp"
#include "seqint/stats_util.hpp"

namespace seqint {

namespace {

// Substream tag for null-sampling; far outside any bootstrap m-index.
constexpr std::uint64_t kNullSamplingTag = 0x9A11D7AA0ULL;
constexpr int kMaxReplicateRetries = 20;

StepContext rebuild_context(const Dataset& resampled,
                            const StepContext& step) {
  StepContext ctx;
  ctx.j_set = step.j_set;
  ctx.jc_set = step.jc_set;
  const auto cols = static_cast<Eigen::Index>(step.j_set.size()) + 1;
  ctx.xtilde.resize(resampled.n(), cols);
  ctx.xtilde.col(0).setOnes();
  for (std::size_t i = 0; i < step.j_set.size(); ++i) {
    ctx.xtilde.col(static_cast<Eigen::Index>(i) + 1) =
        resampled.x.col(step.j_set[i]);
  }
  return ctx;
}

}  // namespace

int BootstrapPlan::resolved_m_floor(int n) const {
  if (m_floor > 0) return std::min(m_floor, n);
  const int floor_default =
      std::max(30, static_cast<int>(std::ceil(std::sqrt(
                        static_cast<double>(n)))));
  return std::min(floor_default, n);
}

void BootstrapPlan::check(int n) const {
  if (!(d > 0.0 && d < 1.0)) {
    raise(ErrorCode::InvalidConfig, "d must lie in (0,1)");
  }
  if (B < 100) raise(ErrorCode::InvalidConfig, "B must be >= 100");
  if (!(alpha > 0.0 && alpha < 1.0)) {
    raise(ErrorCode::InvalidConfig, "alpha must lie in (0,1)");
  }
  if (c <= 0.0) raise(ErrorCode::InvalidConfig, "c must be > 0");
  if (M_null < 1) raise(ErrorCode::InvalidConfig, "M_null must be >= 1");
  if (m_floor > n) {
    raise(ErrorCode::InvalidConfig, "m_floor exceeds the sample size");
  }
}

const char* calibration_method_name(CalibrationMethod method) {
  switch (method) {
    case CalibrationMethod::NullSampling: return "null-sampling";
    case CalibrationMethod::MBoot: return "m-boot";
    case CalibrationMethod::NBoot: return "n-boot";
  }
  return "unknown";
}

int pretest_r(double stat_scaled, double sigma_hat, int n, int p_candidates,
              const BootstrapPlan& plan) {
  if (!(sigma_hat > 0.0)) {
    raise(ErrorCode::InvalidConfig, "sigma_hat must be positive");
  }
  const double n_term = std::sqrt(plan.c * std::log(static_cast<double>(n)));
  const double p_term =
      normal_upper_quantile(plan.alpha / (2.0 * p_candidates));
  const double threshold = std::max(n_term, p_term);
  return std::abs(stat_scaled / sigma_hat) < threshold ? 1 : 0;
}

std::vector<int> resample_indices(int n, int m, Rng& stream) {
  std::vector<int> idx(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    idx[static_cast<std::size_t>(i)] =
        static_cast<int>(stream.uniform_below(static_cast<std::uint64_t>(n)));
  }
  return idx;
}

Dataset resample_with_indices(const Dataset& dataset,
                              const std::vector<int>& indices) {
  const auto m = static_cast<Eigen::Index>(indices.size());
  Dataset out;
  out.names = dataset.names;
  out.y.resize(m);
  out.a.resize(m);
  out.x.resize(m, dataset.p());
  for (Eigen::Index i = 0; i < m; ++i) {
    out.y[i] = dataset.y[indices[static_cast<std::size_t>(i)]];
    out.a[i] = dataset.a[indices[static_cast<std::size_t>(i)]];
  }
  for (Eigen::Index j = 0; j < dataset.p(); ++j) {
    for (Eigen::Index i = 0; i < m; ++i) {
      out.x(i, j) = dataset.x(indices[static_cast<std::size_t>(i)], j);
    }
  }
  if (dataset.q0) {
    Vec q(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      q[i] = (*dataset.q0)[indices[static_cast<std::size_t>(i)]];
    }
    out.q0 = std::move(q);
  }
  return out;
}

Dataset resample(const Dataset& dataset, int m, Rng& stream) {
  if (m < 1 || m > dataset.n()) {
    raise(ErrorCode::InvalidConfig,
          "resample size " + std::to_string(m) + " outside [1, n]");
  }
  return resample_with_indices(dataset, resample_indices(dataset.n(), m,
                                                         stream));
}

std::vector<int> bootstrap_grid(int n, double d, int m_floor) {
  std::vector<int> grid;
  for (int j = 0;; ++j) {
    double scaled = std::pow(d, j) * static_cast<double>(n);
    // Nudge away exact-integer roundoff (e.g. 0.8^1 * 100 = 80 + 1e-14)
    // before taking the ceiling.
    scaled -= scaled * 1e-12;
    const int m = std::min(n, static_cast<int>(std::ceil(scaled)));
    if (m < m_floor) break;
    if (grid.empty() || grid.back() != m) grid.push_back(m);
    if (m == 1) break;
  }
  return grid;
}

Vec bootstrap_draws(const Dataset& dataset, const StepContext& step,
                    const StatisticRecipe& recipe, double theta_hat_n, int m,
                    int B, std::uint64_t seed, std::uint64_t step_index,
                    std::uint64_t m_index, int workers) {
  Vec draws(B);
  std::atomic<int> first_attempt_failures{0};
  const double root_m = std::sqrt(static_cast<double>(m));
  const EvalOptions light{};
  parallel_for(workers, B, [&](std::int64_t b) {
    for (int attempt = 0;; ++attempt) {
      if (attempt >= kMaxReplicateRetries) {
        raise(ErrorCode::TooManyDegenerateReplicates,
              "replicate " + std::to_string(b) + " failed " +
                  std::to_string(kMaxReplicateRetries) + " times");
      }
      Rng rng = Rng::from_key(
          seed, {step_index, m_index, static_cast<std::uint64_t>(b),
                 static_cast<std::uint64_t>(attempt)});
      try {
        const Dataset resampled = resample(dataset, m, rng);
        const StepContext ctx = rebuild_context(resampled, step);
        const StepStatistic stat =
            evaluate_step(resampled, ctx, recipe, &rng, light);
        draws[b] = root_m * (stat.selected.coef - theta_hat_n);
        return;
      } catch (const Error& err) {
        if (is_input_error(err.code())) throw;
        if (attempt == 0) {
          first_attempt_failures.fetch_add(1, std::memory_order_relaxed);
        }
      }
    }
  });
  if (first_attempt_failures.load() * 10 > B) {
    raise(ErrorCode::TooManyDegenerateReplicates,
          std::to_string(first_attempt_failures.load()) + " of " +
              std::to_string(B) + " replicates degenerate");
  }
  return draws;
}

std::pair<int, std::vector<std::pair<int, double>>> pick_bickel_sakov(
    const std::vector<int>& grid, const std::vector<Vec>& draws) {
  if (grid.size() < 2) {
    raise(ErrorCode::GridTooShort,
          "need at least 2 grid points above the floor");
  }
  if (draws.size() != grid.size()) {
    raise(ErrorCode::LengthMismatch, "one draw vector per grid point");
  }
  std::vector<std::pair<int, double>> path;
  path.reserve(grid.size() - 1);
  std::size_t best = 0;
  for (std::size_t j = 0; j + 1 < grid.size(); ++j) {
    const double dist = ks_distance(draws[j], draws[j + 1]);
    path.emplace_back(grid[j], dist);
    // Strict improvement keeps ties at the largest m (smallest j).
    if (dist < path[best].second) best = j;
  }
  return {grid[best], path};
}

std::pair<int, std::vector<std::pair<int, double>>> bickel_sakov_m(
    const Dataset& dataset, const StepContext& step,
    const StatisticRecipe& recipe, double theta_hat_n,
    const BootstrapPlan& plan, std::uint64_t step_index) {
  const int n = dataset.n();
  const std::vector<int> grid =
      bootstrap_grid(n, plan.d, plan.resolved_m_floor(n));
  if (grid.size() < 2) {
    raise(ErrorCode::GridTooShort,
          "need at least 2 grid points above the floor");
  }
  std::vector<Vec> draws;
  draws.reserve(grid.size());
  for (std::size_t j = 0; j < grid.size(); ++j) {
    draws.push_back(bootstrap_draws(dataset, step, recipe, theta_hat_n,
                                    grid[j], plan.B, plan.seed, step_index,
                                    static_cast<std::uint64_t>(j),
                                    plan.workers));
  }
  return pick_bickel_sakov(grid, draws);
}

int choose_m(int r_hat, int n, int m_hat_bs) {
  return (1 - r_hat) * n + r_hat * m_hat_bs;
}

double pvalue_from_draws(double stat_scaled, const Vec& draws) {
  // Equal-tail two-sided rule, add-one smoothed. Under the null the draw
  // distribution carries a re-selection lump near -2*stat in one tail, so
  // the symmetric |draw| >= |stat| rule would drown the signal; comparing
  // each tail separately reproduces the bootstrap test the study tables
  // describe (conservative m-out-of-n, anti-conservative n-out-of-n).
  const auto B = draws.size();
  if (B == 0) raise(ErrorCode::EmptyInput, "no draws");
  Eigen::Index ge = 0;
  Eigen::Index le = 0;
  for (Eigen::Index b = 0; b < B; ++b) {
    if (draws[b] >= stat_scaled) ++ge;
    if (draws[b] <= stat_scaled) ++le;
  }
  const double upper = static_cast<double>(1 + ge) / static_cast<double>(B + 1);
  const double lower = static_cast<double>(1 + le) / static_cast<double>(B + 1);
  return std::min(1.0, 2.0 * std::min(upper, lower));
}

Vec sample_null(const InfluenceMatrix& influence, int M_null, Rng& stream) {
  const auto n_cand = influence.e.cols();
  if (n_cand == 0) raise(ErrorCode::EmptyInput, "empty influence matrix");
  for (Eigen::Index c = 0; c < n_cand; ++c) {
    if (!(influence.denoms[c] > 0.0)) {
      raise(ErrorCode::ZeroWeightMass, "non-positive denominator");
    }
  }
  const Mat sigma = influence_covariance(influence);
  Eigen::SelfAdjointEigenSolver<Mat> eig(sigma);
  const Vec& ev = eig.eigenvalues();
  double trace_abs = 0.0;
  double clipped = 0.0;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    trace_abs += std::abs(ev[i]);
    clipped += std::max(-ev[i], 0.0);
  }
  if (trace_abs > 0.0 && clipped > 0.01 * trace_abs) {
    raise(ErrorCode::NonPSDCovariance,
          "eigenvalue clipping removed " +
              std::to_string(100.0 * clipped / trace_abs) +
              "% of the trace mass");
  }
  Mat factor = eig.eigenvectors();
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    factor.col(i) *= std::sqrt(std::max(ev[i], 0.0));
  }

  Vec draws(M_null);
  Vec g(n_cand);
  for (int t = 0; t < M_null; ++t) {
    for (Eigen::Index i = 0; i < n_cand; ++i) g[i] = stream.normal();
    const Vec z = factor * g;
    Eigen::Index best = 0;
    double best_val = z[0] * z[0] / influence.denoms[0];
    for (Eigen::Index c = 1; c < n_cand; ++c) {
      const double val = z[c] * z[c] / influence.denoms[c];
      if (val > best_val ||
          (val == best_val &&
           influence.columns[static_cast<std::size_t>(c)] <
               influence.columns[static_cast<std::size_t>(best)])) {
        best = c;
        best_val = val;
      }
    }
    draws[t] = z[best] / influence.denoms[best];
  }
  return draws;
}

CalibrationResult calibrate_step(const Dataset& dataset,
                                 const StepContext& step,
                                 const StatisticRecipe& recipe,
                                 const StepStatistic& full_stat,
                                 CalibrationMethod method,
                                 const BootstrapPlan& plan,
                                 std::uint64_t step_index) {
  const int n = dataset.n();
  plan.check(n);

  CalibrationResult result;
  result.stat_scaled = full_stat.stat_scaled;
  result.sigma_hat = full_stat.sigma_hat;
  result.method = method;

  if (method == CalibrationMethod::NullSampling) {
    if (recipe.kind == RecipeKind::DoublyRobust) {
      raise(ErrorCode::UnsupportedCalibration,
            "null sampling needs the known-propensity limit law; use the "
            "bootstrap for the doubly robust recipe");
    }
    Rng stream = Rng::from_key(plan.seed, {step_index, kNullSamplingTag});
    const Vec draws = sample_null(full_stat.influence, plan.M_null, stream);
    result.p_value = pvalue_from_draws(result.stat_scaled, draws);
    result.r_hat = 0;
    result.m_hat = n;
    result.draws_used = plan.M_null;
    return result;
  }

  const double theta_hat_n = full_stat.selected.coef;
  if (method == CalibrationMethod::NBoot) {
    result.r_hat = 0;
  } else {
    const int p_candidates = plan.pretest_original_p
                                 ? dataset.p()
                                 : full_stat.n_candidates;
    result.r_hat = pretest_r(result.stat_scaled, result.sigma_hat, n,
                             p_candidates, plan);
  }

  if (result.r_hat == 0) {
    const Vec draws = bootstrap_draws(dataset, step, recipe, theta_hat_n, n,
                                      plan.B, plan.seed, step_index, 0,
                                      plan.workers);
    result.m_hat = n;
    result.p_value = pvalue_from_draws(result.stat_scaled, draws);
    result.draws_used = plan.B;
    return result;
  }

  const std::vector<int> grid =
      bootstrap_grid(n, plan.d, plan.resolved_m_floor(n));
  if (grid.size() < 2) {
    raise(ErrorCode::GridTooShort,
          "need at least 2 grid points above the floor");
  }
  std::vector<Vec> draws;
  draws.reserve(grid.size());
  for (std::size_t j = 0; j < grid.size(); ++j) {
    draws.push_back(bootstrap_draws(dataset, step, recipe, theta_hat_n,
                                    grid[j], plan.B, plan.seed, step_index,
                                    static_cast<std::uint64_t>(j),
                                    plan.workers));
  }
  const auto [m_hat_bs, path] = pick_bickel_sakov(grid, draws);
  result.ks_path = path;
  result.m_hat = choose_m(1, n, m_hat_bs);
  std::size_t pos = 0;
  for (std::size_t j = 0; j < grid.size(); ++j) {
    if (grid[j] == m_hat_bs) pos = j;
  }
  result.p_value = pvalue_from_draws(result.stat_scaled, draws[pos]);
  result.draws_used = plan.B;
  return result;
}

}  // namespace seqint
