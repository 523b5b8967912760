#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "seqint/data_model.hpp"
#include "seqint/recipe.hpp"
#include "seqint/types.hpp"

namespace seqint {

inline constexpr std::uint64_t kDefaultSeed = 20240817ULL;

struct BootstrapPlan {
  int B = 1000;              // bootstrap replicates per resample size
  double d = 0.8;            // grid ratio, m_j = ceil(d^j n)
  double c = 2.0;            // pre-test tuning constant
  double alpha = 0.05;       // significance level
  int m_floor = 0;           // 0 resolves to max(30, ceil(sqrt(n)))
  int M_null = 10000;        // null-sampling draws
  std::uint64_t seed = kDefaultSeed;
  bool pretest_original_p = false;  // use the original p in z_{alpha/(2p)}
  int workers = 1;

  int resolved_m_floor(int n) const;
  void check(int n) const;   // validates invariants against a sample size
};

enum class CalibrationMethod { NullSampling, MBoot, NBoot };

const char* calibration_method_name(CalibrationMethod method);

struct CalibrationResult {
  double stat_scaled = 0.0;    // sqrt(n) * coefficient
  double sigma_hat = 0.0;      // plug-in asymptotic sd of the scaled statistic
  int r_hat = 0;
  int m_hat = 0;
  std::vector<std::pair<int, double>> ks_path;  // (m_j, successive KS dist)
  double p_value = 1.0;
  CalibrationMethod method = CalibrationMethod::MBoot;
  int draws_used = 0;
};

// Pre-test: 1 iff |stat_scaled / sigma_hat| < max(sqrt(c log n),
// upper alpha/(2p) normal quantile). Strict inequality.
int pretest_r(double stat_scaled, double sigma_hat, int n, int p_candidates,
              const BootstrapPlan& plan);

// m rows drawn iid uniformly with replacement; the known-propensity column
// travels with its rows. Resamples skip the n >= 4 validation floor.
std::vector<int> resample_indices(int n, int m, Rng& stream);
Dataset resample_with_indices(const Dataset& dataset,
                              const std::vector<int>& indices);
Dataset resample(const Dataset& dataset, int m, Rng& stream);

// The m_j = ceil(d^j n) grid, truncated at the floor, duplicates collapsed.
std::vector<int> bootstrap_grid(int n, double d, int m_floor);

// B draws of sqrt(m) * (theta*_m,b - theta_n). Replicate b consumes the
// substream (seed, step_index, m_index, b); replicates that come back
// all-degenerate are redrawn on a deeper substream, with a bounded number of
// retries and a cap of 10% of B affected replicates.
Vec bootstrap_draws(const Dataset& dataset, const StepContext& step,
                    const StatisticRecipe& recipe, double theta_hat_n, int m,
                    int B, std::uint64_t seed, std::uint64_t step_index,
                    std::uint64_t m_index, int workers);

// Bickel-Sakov selection from precomputed per-grid draw vectors: the m_j
// whose successive empirical distributions are closest in sup-norm, ties
// toward the largest m.
std::pair<int, std::vector<std::pair<int, double>>> pick_bickel_sakov(
    const std::vector<int>& grid, const std::vector<Vec>& draws);

// Runs the full grid of bootstrap draws and applies the selection rule.
std::pair<int, std::vector<std::pair<int, double>>> bickel_sakov_m(
    const Dataset& dataset, const StepContext& step,
    const StatisticRecipe& recipe, double theta_hat_n,
    const BootstrapPlan& plan, std::uint64_t step_index);

// m_hat = (1 - r_hat) n + r_hat * m_hat_bs.
int choose_m(int r_hat, int n, int m_hat_bs);

// Two-sided add-one-smoothed p-value:
// (1 + #{b : |draws_b| >= |stat|}) / (B + 1).
double pvalue_from_draws(double stat_scaled, const Vec& draws);

// Draws from the estimated null law of the scaled statistic: Z ~ N(0,
// Sigma_hat) via eigen factorization with eigenvalues clipped at zero, K =
// argmax Z_k^2 / d_k (ties to the smallest covariate index), value Z_K/d_K.
// Throws NonPSDCovariance when clipping removes over 1% of the trace mass.
Vec sample_null(const InfluenceMatrix& influence, int M_null, Rng& stream);

// Full calibration of one evaluated step. `full_stat` must hold the
// statistic computed on the complete sample (with influence for RCT
// recipes). Null sampling is only defined for RCT recipes.
CalibrationResult calibrate_step(const Dataset& dataset,
                                 const StepContext& step,
                                 const StatisticRecipe& recipe,
                                 const StepStatistic& full_stat,
                                 CalibrationMethod method,
                                 const BootstrapPlan& plan,
                                 std::uint64_t step_index);

}  // namespace seqint
