#include <doctest.h>

#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "seqint/calibration.hpp"
#include "seqint/simgen.hpp"
#include "seqint/stats_util.hpp"

using namespace seqint;

namespace {

StatisticRecipe rct_recipe() {
  StatisticRecipe recipe;
  recipe.kind = RecipeKind::Rct;
  recipe.phi.kind = NuisanceKind::ConstantMean;
  return recipe;
}

Dataset null_dataset(int n, int p, std::uint64_t seed, double signal = 0.0) {
  Scenario s;
  s.n = n;
  s.p = p;
  s.beta0 = Vec::Zero(p);
  if (signal != 0.0) s.beta0[0] = signal;
  Rng rng(seed);
  return generate(s, rng, true);
}

StepStatistic full_eval(const Dataset& data, const StatisticRecipe& recipe) {
  EvalOptions options;
  options.with_influence = recipe.kind == RecipeKind::Rct;
  options.with_sigma = true;
  return evaluate_step(data, StepContext::initial(data), recipe, nullptr,
                       options);
}

}  // namespace

TEST_CASE("pretest threshold follows the quantile oracle") {
  BootstrapPlan plan;
  plan.alpha = 0.05;
  plan.c = 2.0;
  // n = 100, p = 50: max(sqrt(2 ln 100) ~ 3.035, z_{0.0005} ~ 3.2905).
  CHECK(normal_upper_quantile(0.0005) == doctest::Approx(3.2905).epsilon(1e-4));
  CHECK(std::sqrt(2.0 * std::log(100.0)) ==
        doctest::Approx(3.0349).epsilon(1e-4));
  CHECK(pretest_r(2.0, 1.0, 100, 50, plan) == 1);
  CHECK(pretest_r(10.0, 1.0, 100, 50, plan) == 0);
  // Exact boundary: strict inequality means no pre-test pass.
  const double threshold = normal_upper_quantile(0.0005);
  CHECK(pretest_r(threshold, 1.0, 100, 50, plan) == 0);
}

TEST_CASE("resample with identity indices reproduces the dataset") {
  const Dataset data = null_dataset(12, 2, 5);
  std::vector<int> idx(12);
  std::iota(idx.begin(), idx.end(), 0);
  const Dataset copy = resample_with_indices(data, idx);
  CHECK(copy.y == data.y);
  CHECK(copy.a == data.a);
  CHECK(copy.x == data.x);
  CHECK(*copy.q0 == *data.q0);
}

TEST_CASE("resamples may be smaller than the validation floor") {
  const Dataset data = null_dataset(10, 2, 6);
  Rng rng(1);
  const Dataset tiny = resample(data, 1, rng);
  CHECK(tiny.n() == 1);
  CHECK(tiny.q0.has_value());
}

TEST_CASE("resampling is deterministic given the stream") {
  const Dataset data = null_dataset(20, 2, 7);
  Rng a(901), b(901);
  const Dataset ra = resample(data, 15, a);
  const Dataset rb = resample(data, 15, b);
  CHECK(ra.y == rb.y);
  CHECK(ra.x == rb.x);
}

TEST_CASE("bootstrap grid matches the ceil arithmetic") {
  CHECK(bootstrap_grid(100, 0.8, 30) ==
        std::vector<int>{100, 80, 64, 52, 41, 33});
  CHECK(bootstrap_grid(250, 0.8, 30) ==
        std::vector<int>{250, 200, 160, 128, 103, 82, 66, 53, 42, 34});
}

TEST_CASE("constant outcomes give identically zero bootstrap draws") {
  Dataset data = null_dataset(25, 2, 8);
  data.y.setConstant(3.0);
  const StepContext ctx = StepContext::initial(data);
  const Vec draws = bootstrap_draws(data, ctx, rct_recipe(), 0.0, 25, 120,
                                    11, 1, 0, 1);
  CHECK(draws.cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("bootstrap draws are reproducible pairs at fixed seeds") {
  const Dataset data = null_dataset(25, 2, 9);
  const StepContext ctx = StepContext::initial(data);
  const StepStatistic stat = full_eval(data, rct_recipe());
  const Vec first = bootstrap_draws(data, ctx, rct_recipe(),
                                    stat.selected.coef, 25, 2, 13, 1, 0, 1);
  const Vec second = bootstrap_draws(data, ctx, rct_recipe(),
                                     stat.selected.coef, 25, 2, 13, 1, 0, 1);
  CHECK(first.size() == 2);
  CHECK(first == second);
}

TEST_CASE("null-instance bootstrap draws center near zero (CLT band)") {
  // Single candidate: no selection effect, so the draw mean is within
  // Monte Carlo error of zero.
  const Dataset data = null_dataset(30, 1, 10);
  const StepContext ctx = StepContext::initial(data);
  const StepStatistic stat = full_eval(data, rct_recipe());
  const int B = 4000;
  const Vec draws = bootstrap_draws(data, ctx, rct_recipe(),
                                    stat.selected.coef, 30, B, 17, 1, 0, 2);
  const double mean = draws.mean();
  const double sd = std::sqrt((draws.array() - mean).square().sum() / B);
  CHECK(std::abs(mean) < 3.0 * sd / std::sqrt(static_cast<double>(B)));
}

TEST_CASE("identical draw vectors select the full sample size") {
  Rng rng(18);
  Vec s(200);
  for (int i = 0; i < 200; ++i) s[i] = rng.normal();
  const std::vector<int> grid{100, 80, 64, 52, 41, 33};
  const std::vector<Vec> draws(grid.size(), s);
  const auto [m, path] = pick_bickel_sakov(grid, draws);
  CHECK(m == 100);
  for (const auto& [mj, dist] : path) CHECK(dist == 0.0);
}

TEST_CASE("the closest successive pair wins the sup-norm contest") {
  // Streams at 52 and 41 share one sample; every other successive pair is
  // independent, hence strictly positive in sup-norm.
  Rng rng(19);
  const int B = 400;
  auto draw_normal = [&](double sd) {
    Vec v(B);
    for (int i = 0; i < B; ++i) v[i] = sd * rng.normal();
    return v;
  };
  const std::vector<int> grid{100, 80, 64, 52, 41, 33};
  std::vector<Vec> draws;
  draws.push_back(draw_normal(1.0));   // 100
  draws.push_back(draw_normal(1.0));   // 80
  draws.push_back(draw_normal(1.0));   // 64
  const Vec shared = draw_normal(1.0);
  draws.push_back(shared);             // 52
  draws.push_back(shared);             // 41
  draws.push_back(draw_normal(2.0));   // 33
  const auto [m, path] = pick_bickel_sakov(grid, draws);
  CHECK(m == 52);
  // Verify each reported distance against the counting oracle.
  for (std::size_t j = 0; j < path.size(); ++j) {
    CHECK(path[j].second ==
          doctest::Approx(oracle::ks_distance_counting(draws[j],
                                                       draws[j + 1])));
  }
}

TEST_CASE("a grid with fewer than two points is rejected") {
  CHECK_THROWS_WITH_AS(pick_bickel_sakov({100}, {Vec::Zero(10)}),
                       doctest::Contains("GridTooShort"), Error);
}

TEST_CASE("choose_m applies the step-5 formula") {
  CHECK(choose_m(0, 500, 64) == 500);
  CHECK(choose_m(1, 500, 64) == 64);
  CHECK(choose_m(1, 500, 500) == 500);
}

TEST_CASE("pvalue_from_draws conventions") {
  const Vec zeros = Vec::Zero(99);
  CHECK(pvalue_from_draws(0.0, zeros) == doctest::Approx(1.0));
  // Equal-tail smoothing: the far tail contributes its add-one mass twice.
  CHECK(pvalue_from_draws(2.0, zeros) == doctest::Approx(2.0 / 100.0));
  Vec half(10);
  for (int i = 0; i < 10; ++i) half[i] = i < 5 ? 1.0 : -1.0;
  CHECK(pvalue_from_draws(0.5, half) == doctest::Approx(1.0));
}

TEST_CASE("pvalue monotonicity in the statistic") {
  Rng rng(20);
  Vec draws(500);
  for (int i = 0; i < 500; ++i) draws[i] = rng.normal();
  double previous = 2.0;
  for (double stat : {0.0, 0.5, 1.0, 2.0, 3.0}) {
    const double p = pvalue_from_draws(stat, draws);
    CHECK(p <= previous);
    previous = p;
  }
}

TEST_CASE("sample_null single-candidate draws follow the normal tail") {
  const int n = 400;
  const double sigma = 1.4;
  const double denom = 0.3;
  InfluenceMatrix influence;
  influence.e.resize(n, 1);
  for (int i = 0; i < n; ++i) influence.e(i, 0) = (i % 2 ? sigma : -sigma);
  influence.denoms = Vec::Constant(1, denom);
  influence.columns = {0};
  Rng rng(21);
  const Vec draws = sample_null(influence, 40000, rng);
  const double stat = 1.959964 * sigma / denom;
  const double p = pvalue_from_draws(stat, draws);
  CHECK(p == doctest::Approx(0.05).epsilon(0.12));
}

TEST_CASE("zero influence gives zero null draws") {
  InfluenceMatrix influence;
  influence.e = Mat::Constant(50, 2, 1.7);  // constant columns: covariance 0
  influence.denoms = Vec::Constant(2, 1.0);
  influence.columns = {0, 1};
  Rng rng(22);
  const Vec draws = sample_null(influence, 200, rng);
  CHECK(draws.cwiseAbs().maxCoeff() == doctest::Approx(0.0));
  CHECK(pvalue_from_draws(0.0, draws) == doctest::Approx(1.0));
}

TEST_CASE("n-boot equals m-boot with the pre-test forced off") {
  const Dataset data = null_dataset(40, 3, 23, 2.0);  // strong signal
  const StepContext ctx = StepContext::initial(data);
  const StepStatistic stat = full_eval(data, rct_recipe());
  BootstrapPlan plan;
  plan.B = 150;
  plan.seed = 31;
  const CalibrationResult mboot = calibrate_step(
      data, ctx, rct_recipe(), stat, CalibrationMethod::MBoot, plan, 1);
  const CalibrationResult nboot = calibrate_step(
      data, ctx, rct_recipe(), stat, CalibrationMethod::NBoot, plan, 1);
  CHECK(mboot.r_hat == 0);  // strong signal defeats the pre-test
  CHECK(nboot.r_hat == 0);
  CHECK(mboot.m_hat == nboot.m_hat);
  CHECK(mboot.p_value == nboot.p_value);
}

TEST_CASE("strong signals choose the full sample size") {
  const Dataset data = null_dataset(40, 3, 23, 2.0);
  const StepContext ctx = StepContext::initial(data);
  const StepStatistic stat = full_eval(data, rct_recipe());
  BootstrapPlan plan;
  plan.B = 150;
  plan.seed = 37;
  const CalibrationResult result = calibrate_step(
      data, ctx, rct_recipe(), stat, CalibrationMethod::MBoot, plan, 1);
  // Pre-test arithmetic against the quantile oracle.
  const double threshold =
      std::max(std::sqrt(2.0 * std::log(40.0)),
               normal_upper_quantile(plan.alpha / (2.0 * 3)));
  CHECK(std::abs(stat.stat_scaled / stat.sigma_hat) >= threshold);
  CHECK(result.r_hat == 0);
  CHECK(result.m_hat == 40);
  CHECK(result.ks_path.empty());
}

TEST_CASE("null instances trip the pre-test and shrink m") {
  const Dataset data = null_dataset(60, 3, 24);
  const StepContext ctx = StepContext::initial(data);
  const StepStatistic stat = full_eval(data, rct_recipe());
  BootstrapPlan plan;
  plan.B = 200;
  plan.seed = 41;
  const CalibrationResult result = calibrate_step(
      data, ctx, rct_recipe(), stat, CalibrationMethod::MBoot, plan, 1);
  const double threshold =
      std::max(std::sqrt(2.0 * std::log(60.0)),
               normal_upper_quantile(plan.alpha / (2.0 * 3)));
  CHECK(std::abs(stat.stat_scaled / stat.sigma_hat) < threshold);
  CHECK(result.r_hat == 1);
  CHECK(result.m_hat < 60);
  CHECK(!result.ks_path.empty());
}

TEST_CASE("null sampling is refused for the doubly robust recipe") {
  const Dataset data = null_dataset(40, 3, 25);
  Dataset no_q = data;
  no_q.q0.reset();
  StatisticRecipe recipe;
  recipe.kind = RecipeKind::DoublyRobust;
  recipe.q.kind = NuisanceKind::Logistic;
  recipe.h.kind = NuisanceKind::LeastSquares;
  const StepContext ctx = StepContext::initial(no_q);
  EvalOptions options;
  options.with_sigma = true;
  const StepStatistic stat =
      evaluate_step(no_q, ctx, recipe, nullptr, options);
  BootstrapPlan plan;
  plan.B = 100;
  CHECK_THROWS_WITH_AS(
      calibrate_step(no_q, ctx, recipe, stat,
                     CalibrationMethod::NullSampling, plan, 1),
      doctest::Contains("UnsupportedCalibration"), Error);
}

TEST_CASE("calibration is deterministic and scale invariant") {
  const Dataset data = null_dataset(50, 3, 26);
  const StepContext ctx = StepContext::initial(data);
  const StepStatistic stat = full_eval(data, rct_recipe());
  BootstrapPlan plan;
  plan.B = 120;
  plan.seed = 53;

  const CalibrationResult once = calibrate_step(
      data, ctx, rct_recipe(), stat, CalibrationMethod::MBoot, plan, 1);
  const CalibrationResult twice = calibrate_step(
      data, ctx, rct_recipe(), stat, CalibrationMethod::MBoot, plan, 1);
  CHECK(once.p_value == twice.p_value);
  CHECK(once.m_hat == twice.m_hat);
  CHECK(once.r_hat == twice.r_hat);
  CHECK(once.stat_scaled == twice.stat_scaled);

  // Rescaling one covariate keeps the selection and the pre-test fixed:
  // the t-ratio is scale-free even though the coefficient is not.
  Dataset scaled = data;
  scaled.x.col(stat.selected.k) *= -2.5;
  const StepContext ctx2 = StepContext::initial(scaled);
  const StepStatistic stat2 = full_eval(scaled, rct_recipe());
  CHECK(stat2.selected.k == stat.selected.k);
  CHECK(std::abs(stat2.stat_scaled / stat2.sigma_hat) ==
        doctest::Approx(std::abs(stat.stat_scaled / stat.sigma_hat))
            .epsilon(1e-10));
  const CalibrationResult rescaled = calibrate_step(
      scaled, ctx2, rct_recipe(), stat2, CalibrationMethod::MBoot, plan, 1);
  CHECK(rescaled.r_hat == once.r_hat);

  // A common scale across every covariate commutes with the entire draw
  // stream, so r_hat, m_hat, and the p-value reproduce exactly. A power of
  // two keeps the floating-point arithmetic bit-identical.
  Dataset common = data;
  common.x *= -2.0;
  const StepContext ctx3 = StepContext::initial(common);
  const StepStatistic stat3 = full_eval(common, rct_recipe());
  CHECK(stat3.selected.k == stat.selected.k);
  const CalibrationResult rescaled_all = calibrate_step(
      common, ctx3, rct_recipe(), stat3, CalibrationMethod::MBoot, plan, 1);
  CHECK(rescaled_all.r_hat == once.r_hat);
  CHECK(rescaled_all.m_hat == once.m_hat);
  CHECK(rescaled_all.p_value == once.p_value);
}

TEST_CASE("bootstrap p-values stay within their attainable range") {
  const Dataset data = null_dataset(40, 2, 27);
  const StepContext ctx = StepContext::initial(data);
  const StepStatistic stat = full_eval(data, rct_recipe());
  BootstrapPlan plan;
  plan.B = 100;
  for (auto method : {CalibrationMethod::MBoot, CalibrationMethod::NBoot}) {
    const CalibrationResult result =
        calibrate_step(data, ctx, rct_recipe(), stat, method, plan, 1);
    CHECK(result.p_value >= 2.0 / (plan.B + 1));
    CHECK(result.p_value <= 1.0);
  }
}
