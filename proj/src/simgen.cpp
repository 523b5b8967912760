#include "seqint/simgen.hpp"

#include <chrono>
#include <cmath>
#include <set>

#include "seqint/parallel.hpp"
#include "seqint/sequential_driver.hpp"
#include "seqint/stats_util.hpp"

namespace seqint {

namespace {

constexpr std::uint64_t kRepTag = 0x4E9ULL;
constexpr std::uint64_t kMethodTag = 0x3E7ULL;

double sigmoid(double eta) { return 1.0 / (1.0 + std::exp(-eta)); }

Vec propensity_values(const Scenario& scenario, const Mat& x) {
  const auto n = x.rows();
  Vec q(n);
  if (scenario.propensity.constant) {
    q.setConstant(scenario.propensity.value);
    return q;
  }
  Vec eta = Vec::Constant(n, scenario.propensity.intercept);
  if (scenario.propensity.coef.size() > 0) {
    eta += x * scenario.propensity.coef;
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    q[i] = std::clamp(sigmoid(eta[i]), 1e-6, 1.0 - 1e-6);
  }
  return q;
}

std::vector<int> active_set(const Scenario& scenario) {
  std::vector<int> active;
  for (Eigen::Index k = 0; k < scenario.beta0.size(); ++k) {
    if (scenario.beta0[k] != 0.0) active.push_back(static_cast<int>(k));
  }
  return active;
}

}  // namespace

void check_scenario(const Scenario& scenario) {
  if (scenario.n < 4 || scenario.p < 1) {
    raise(ErrorCode::InvalidConfig, "scenario needs n >= 4 and p >= 1");
  }
  if (scenario.beta0.size() != 0 && scenario.beta0.size() != scenario.p) {
    raise(ErrorCode::InvalidConfig, "beta0 length must equal p");
  }
  if (scenario.h_linear.size() != 0 && scenario.h_linear.size() != scenario.p) {
    raise(ErrorCode::InvalidConfig, "h_linear length must equal p");
  }
  if (scenario.h_quad_index < 0 || scenario.h_quad_index >= scenario.p) {
    raise(ErrorCode::InvalidConfig, "h_quad_index out of range");
  }
  if (scenario.error_sd < 0.0) {
    raise(ErrorCode::InvalidConfig, "error sd must be >= 0");
  }
  switch (scenario.law) {
    case CovariateLaw::IidNormal:
      break;
    case CovariateLaw::Equicorrelated:
      if (!(scenario.rho > -1.0 / (scenario.p - 1 + 1e-12) &&
            scenario.rho < 1.0)) {
        raise(ErrorCode::InvalidConfig,
              "equicorrelation rho breaks positive definiteness");
      }
      break;
    case CovariateLaw::Ar1:
      if (!(std::abs(scenario.rho) < 1.0)) {
        raise(ErrorCode::InvalidConfig, "AR(1) rho must satisfy |rho| < 1");
      }
      break;
  }
  if (scenario.propensity.constant) {
    if (!(scenario.propensity.value > 0.0 &&
          scenario.propensity.value < 1.0)) {
      raise(ErrorCode::InvalidConfig, "constant propensity outside (0,1)");
    }
  } else if (scenario.propensity.coef.size() != 0 &&
             scenario.propensity.coef.size() != scenario.p) {
    raise(ErrorCode::InvalidConfig, "propensity coef length must equal p");
  }
  for (int k : scenario.q_fit_exclude) {
    if (k < 0 || k >= scenario.p) {
      raise(ErrorCode::InvalidConfig, "q_fit_exclude index out of range");
    }
  }
}

Dataset generate(const Scenario& scenario, Rng& stream, bool attach_q0) {
  check_scenario(scenario);
  const int n = scenario.n;
  const int p = scenario.p;
  Dataset data;
  data.x.resize(n, p);
  switch (scenario.law) {
    case CovariateLaw::IidNormal:
      for (int j = 0; j < p; ++j) {
        for (int i = 0; i < n; ++i) data.x(i, j) = stream.normal();
      }
      break;
    case CovariateLaw::Equicorrelated: {
      Vec shared(n);
      for (int i = 0; i < n; ++i) shared[i] = stream.normal();
      const double rho = std::max(scenario.rho, 0.0);
      const double a = std::sqrt(rho);
      const double b = std::sqrt(1.0 - rho);
      for (int j = 0; j < p; ++j) {
        for (int i = 0; i < n; ++i) {
          data.x(i, j) = a * shared[i] + b * stream.normal();
        }
      }
      break;
    }
    case CovariateLaw::Ar1: {
      const double rho = scenario.rho;
      const double scale = std::sqrt(1.0 - rho * rho);
      for (int j = 0; j < p; ++j) {
        for (int i = 0; i < n; ++i) {
          const double z = stream.normal();
          data.x(i, j) = j == 0 ? z : rho * data.x(i, j - 1) + scale * z;
        }
      }
      break;
    }
  }

  const Vec q = propensity_values(scenario, data.x);
  data.a.resize(n);
  for (int i = 0; i < n; ++i) data.a[i] = stream.bernoulli(q[i]) ? 1.0 : 0.0;

  data.y.resize(n);
  for (int i = 0; i < n; ++i) {
    double h = 0.0;
    if (scenario.h_linear.size() > 0) {
      h = data.x.row(i).dot(scenario.h_linear);
    }
    if (scenario.h_quad_coef != 0.0) {
      const double xq = data.x(i, scenario.h_quad_index);
      h += scenario.h_quad_coef * xq * xq;
    }
    double effect = scenario.alpha0;
    if (scenario.beta0.size() > 0) {
      effect += data.x.row(i).dot(scenario.beta0);
    }
    data.y[i] = h + effect * data.a[i] + scenario.error_sd * stream.normal();
  }

  data.names.resize(p);
  const int width = p >= 100 ? 3 : 2;
  for (int j = 0; j < p; ++j) {
    std::string num = std::to_string(j + 1);
    while (static_cast<int>(num.size()) < width) num.insert(0, "0");
    data.names[j] = "x" + num;
  }
  if (attach_q0) data.q0 = q;
  return data;
}

double rct_signal_b(int n, double sigma, double q0, double alpha,
                    double power) {
  const double delta = normal_upper_quantile(alpha / 2.0) +
                       normal_quantile(power);
  const double mass = q0 * (1.0 - q0);
  const double denom = n * mass - 3.0 * delta * delta * q0 * q0;
  if (denom <= 0.0) {
    raise(ErrorCode::InvalidConfig,
          "sample size too small to reach the requested power");
  }
  return delta * sigma / std::sqrt(denom);
}

double dr_signal_b(const Scenario& null_scenario, double alpha, double power,
                   int probe_n, std::uint64_t probe_seed) {
  // Oracle z-test moments for the known-k psi estimator under true
  // nuisances, estimated from one large plug-in sample.
  Scenario probe = null_scenario;
  probe.n = probe_n;
  probe.beta0 = Vec::Zero(null_scenario.p);
  Rng stream(probe_seed);
  const Dataset data = generate(probe, stream, true);
  const Vec& q = *data.q0;
  const Vec wtil = data.a - q;
  const Vec x1 = data.x.col(0);
  double m_aw = 0.0, m_awx = 0.0;
  for (int i = 0; i < probe_n; ++i) {
    const double aw = data.a[i] * wtil[i];
    m_aw += aw;
    m_awx += aw * x1[i];
  }
  const double eta = m_awx / m_aw;
  double d_sum = 0.0, v_sum = 0.0;
  for (int i = 0; i < probe_n; ++i) {
    const double l = x1[i] - eta;
    d_sum += data.a[i] * wtil[i] * l * l;
    v_sum += wtil[i] * wtil[i] * l * l;
  }
  const double d_mean = d_sum / probe_n;
  const double v_mean = v_sum / probe_n;
  const double sigma_psi =
      null_scenario.error_sd * std::sqrt(v_mean) / d_mean;
  const double delta = normal_upper_quantile(alpha / 2.0) +
                       normal_quantile(power);
  return delta * sigma_psi / std::sqrt(static_cast<double>(null_scenario.n));
}

Scenario canonical_scenario(const std::string& name) {
  Scenario s;
  s.name = name;
  if (name == "n1" || name == "s1" || name == "s1-strong" || name == "s2") {
    s.n = 250;
    s.p = 10;
    s.beta0 = Vec::Zero(s.p);
    s.propensity.constant = true;
    s.propensity.value = 0.5;
    s.error_sd = 1.0;
    const double b = rct_signal_b(s.n, s.error_sd, 0.5, 0.05, 0.95);
    if (name == "s1") {
      s.beta0[0] = b;
    } else if (name == "s1-strong") {
      s.beta0[0] = 2.0 * b;
    } else if (name == "s2") {
      s.beta0[0] = b;
      s.beta0[1] = b;
    }
    return s;
  }
  if (name == "d1" || name == "d1-signal" || name == "d2" ||
      name == "d2-signal") {
    s.n = 250;
    s.p = 5;
    s.beta0 = Vec::Zero(s.p);
    s.alpha0 = 0.5;
    s.error_sd = 1.0;
    s.h_linear = Vec::Zero(s.p);
    s.propensity.constant = false;
    s.propensity.coef = Vec::Zero(s.p);
    if (name == "d1" || name == "d1-signal") {
      // Correct propensity model, misspecified outcome model: the fitted
      // linear h misses the quadratic term.
      s.h_linear[1] = 1.0;
      s.h_quad_coef = 1.0;
      s.h_quad_index = 0;
      s.propensity.intercept = 0.3;
      s.propensity.coef[1] = 0.4;
      s.propensity.coef[2] = -0.4;
      s.q_correct = true;
      s.h_correct = false;
    } else {
      // Misspecified propensity model (the fitted design omits the
      // covariate that drives assignment), correct linear outcome model.
      s.h_linear[1] = 1.0;
      s.h_linear[2] = -0.5;
      s.propensity.intercept = 0.2;
      s.propensity.coef[0] = 0.6;
      s.propensity.coef[3] = 0.3;
      s.q_fit_exclude = {0};
      s.q_correct = false;
      s.h_correct = true;
    }
    if (name == "d1-signal" || name == "d2-signal") {
      Scenario null_version = s;
      null_version.name = name.substr(0, 2);
      s.beta0[0] = dr_signal_b(null_version, 0.05, 0.95);
    }
    return s;
  }
  raise(ErrorCode::InvalidConfig, "unknown scenario '" + name + "'");
}

BonferroniResult bonferroni_test(const Dataset& dataset,
                                 const StepContext& step,
                                 const StatisticRecipe& recipe,
                                 double alpha) {
  EvalOptions options;
  options.with_influence = true;
  options.keep_candidates = true;
  const StepStatistic stat =
      evaluate_step(dataset, step, recipe, nullptr, options);
  const Mat sigma = influence_covariance(stat.influence);
  const double root_n = std::sqrt(static_cast<double>(dataset.n()));
  const auto n_cand = static_cast<int>(stat.candidates.size());
  BonferroniResult result;
  result.adjusted_p.reserve(n_cand);
  double best_p = 2.0;
  for (int c = 0; c < n_cand; ++c) {
    const CandidateStat& cand = stat.candidates[static_cast<std::size_t>(c)];
    const double sd = std::sqrt(std::max(sigma(c, c), 0.0)) / cand.denom;
    double adj = 1.0;
    if (sd > 0.0) {
      const double z = std::abs(root_n * cand.coef / sd);
      adj = std::min(1.0, 2.0 * (1.0 - normal_cdf(z)) * n_cand);
    }
    result.adjusted_p.push_back(adj);
    if (adj < best_p) {
      best_p = adj;
      result.best_k = cand.k;
    }
  }
  result.reject = best_p <= alpha;
  return result;
}

LrtResult lrt_test(const Dataset& dataset, const StepContext& step,
                   double alpha) {
  const int n = dataset.n();
  const int p = dataset.p();
  const int n_j = static_cast<int>(step.j_set.size());
  const int n_jc = static_cast<int>(step.jc_set.size());
  if (n_jc == 0) raise(ErrorCode::EmptyInput, "no candidates to test");
  if (n <= 2 * p + 2 + n_j) {
    raise(ErrorCode::InfeasibleLRT,
          "full interaction model needs n > 2p + 2 + |J|");
  }
  const int full_cols = 2 * p + 2;
  const int reduced_cols = p + 2 + n_j;
  Mat design(n, full_cols);
  design.col(0).setOnes();
  design.block(0, 1, n, p) = dataset.x;
  design.col(p + 1) = dataset.a;
  int col = p + 2;
  for (int j : step.j_set) {
    design.col(col++) = dataset.a.cwiseProduct(dataset.x.col(j));
  }
  for (int k : step.jc_set) {
    design.col(col++) = dataset.a.cwiseProduct(dataset.x.col(k));
  }

  const Eigen::ColPivHouseholderQR<Mat> qr_full(design);
  if (qr_full.rank() < full_cols) {
    raise(ErrorCode::InfeasibleLRT, "rank-deficient interaction design");
  }
  const double rss_full =
      (dataset.y - design * qr_full.solve(dataset.y)).squaredNorm();
  const Mat reduced = design.leftCols(reduced_cols);
  const Eigen::ColPivHouseholderQR<Mat> qr_reduced(reduced);
  const double rss_reduced =
      (dataset.y - reduced * qr_reduced.solve(dataset.y)).squaredNorm();

  const double df2 = static_cast<double>(n - 2 * p - 2);
  LrtResult result;
  result.f_stat = ((rss_reduced - rss_full) / n_jc) / (rss_full / df2);
  result.p_value = f_distribution_sf(result.f_stat, n_jc, df2);
  result.reject = result.p_value <= alpha;
  return result;
}

double StepCell::rate() const {
  return executed > 0 ? static_cast<double>(rejected) / executed : 0.0;
}

double StepCell::se() const {
  if (executed <= 0) return 0.0;
  const double r = rate();
  return std::sqrt(r * (1.0 - r) / executed);
}

double StepCell::null_rate() const {
  return null_entries > 0 ? static_cast<double>(null_rejected) / null_entries
                          : 0.0;
}

double StepCell::null_se() const {
  if (null_entries <= 0) return 0.0;
  const double r = null_rate();
  return std::sqrt(r * (1.0 - r) / null_entries);
}

double StepCell::power_rate() const {
  return power_entries > 0
             ? static_cast<double>(power_rejected) / power_entries
             : 0.0;
}

double StepCell::selection_accuracy() const {
  return sel_entries > 0 ? static_cast<double>(sel_correct) / sel_entries
                         : 0.0;
}

namespace {

struct StepOutcome {
  bool executed = false;
  bool rejected = false;
  int selected = -1;
  int r_hat = 0;
  int m_hat = 0;
  bool has_m = false;
};

// One rep x one method: outcomes per step plus the J path for entry
// classification.
std::vector<StepOutcome> run_method(const Dataset& with_q0,
                                    const Dataset& without_q0,
                                    const MethodSpec& method,
                                    const BootstrapPlan& plan,
                                    int eval_steps) {
  std::vector<StepOutcome> outcomes(static_cast<std::size_t>(eval_steps));
  if (method.kind == MethodSpec::Kind::Sequential) {
    const bool rct = method.recipe.kind == RecipeKind::Rct;
    SequenceConfig config;
    config.recipe = method.recipe;
    config.method = method.method;
    config.plan = plan;
    config.alpha = plan.alpha;
    config.max_steps = eval_steps;
    const SequenceResult result =
        run_sequence(rct ? with_q0 : without_q0, config);
    for (const StepResult& step : result.steps) {
      StepOutcome& out = outcomes[static_cast<std::size_t>(step.step_index - 1)];
      out.executed = true;
      out.rejected = step.decision == StepDecision::Rejected;
      out.selected = step.covariate;
      out.r_hat = step.calibration.r_hat;
      out.m_hat = step.calibration.m_hat;
      out.has_m = step.calibration.method != CalibrationMethod::NullSampling;
    }
    return outcomes;
  }

  // Competitors test at each step; the covariate that advances is the one
  // picked by the shared marginal criterion, as in the sequential recipe.
  StepContext ctx = StepContext::initial(with_q0);
  for (int s = 0; s < eval_steps; ++s) {
    StepOutcome& out = outcomes[static_cast<std::size_t>(s)];
    StepStatistic stat;
    try {
      stat = evaluate_step(with_q0, ctx, method.recipe, nullptr, {});
    } catch (const Error& err) {
      if (err.code() == ErrorCode::AllDegenerate) break;
      throw;
    }
    bool rejected = false;
    if (method.kind == MethodSpec::Kind::Bonferroni) {
      rejected = bonferroni_test(with_q0, ctx, method.recipe, plan.alpha)
                     .reject;
    } else {
      rejected = lrt_test(with_q0, ctx, plan.alpha).reject;
    }
    out.executed = true;
    out.rejected = rejected;
    out.selected = stat.selected.k;
    if (!rejected) break;
    ctx = ctx.advanced(with_q0, stat.selected.k);
    if (ctx.jc_set.empty()) break;
  }
  return outcomes;
}

}  // namespace

McReport mc_study(const Scenario& scenario,
                  const std::vector<MethodSpec>& methods, int reps,
                  const BootstrapPlan& plan, int eval_steps, int workers) {
  check_scenario(scenario);
  if (reps < 100) raise(ErrorCode::InvalidConfig, "need reps >= 100");
  if (eval_steps < 1) raise(ErrorCode::InvalidConfig, "need eval_steps >= 1");
  if (methods.empty()) raise(ErrorCode::InvalidConfig, "no methods");

  const auto start = std::chrono::steady_clock::now();
  const std::vector<int> active = active_set(scenario);
  const int n_methods = static_cast<int>(methods.size());

  struct RepRecord {
    bool failed = false;
    std::vector<std::vector<StepOutcome>> outcome;  // [method][step]
  };
  std::vector<RepRecord> records(static_cast<std::size_t>(reps));

  parallel_for(workers, reps, [&](std::int64_t rep) {
    RepRecord& record = records[static_cast<std::size_t>(rep)];
    try {
      Rng data_stream = Rng::from_key(
          plan.seed, {kRepTag, static_cast<std::uint64_t>(rep)});
      const Dataset with_q0 = generate(scenario, data_stream, true);
      Dataset without_q0 = with_q0;
      without_q0.q0.reset();
      record.outcome.resize(static_cast<std::size_t>(n_methods));
      for (int mi = 0; mi < n_methods; ++mi) {
        BootstrapPlan method_plan = plan;
        method_plan.seed = derive_key(
            plan.seed, {kMethodTag, static_cast<std::uint64_t>(rep),
                        static_cast<std::uint64_t>(mi)});
        method_plan.workers = 1;
        record.outcome[static_cast<std::size_t>(mi)] =
            run_method(with_q0, without_q0,
                       methods[static_cast<std::size_t>(mi)], method_plan,
                       eval_steps);
      }
    } catch (const Error&) {
      record.failed = true;
    }
  });

  McReport report;
  report.scenario = scenario;
  report.reps = reps;
  report.eval_steps = eval_steps;
  report.methods.resize(static_cast<std::size_t>(n_methods));
  for (int mi = 0; mi < n_methods; ++mi) {
    report.methods[static_cast<std::size_t>(mi)].name =
        methods[static_cast<std::size_t>(mi)].name;
    report.methods[static_cast<std::size_t>(mi)].steps.resize(
        static_cast<std::size_t>(eval_steps));
  }

  long failures = 0;
  for (const RepRecord& record : records) {
    if (record.failed) {
      ++failures;
      continue;
    }
    for (int mi = 0; mi < n_methods; ++mi) {
      std::set<int> j_entered;
      const auto& outcomes = record.outcome[static_cast<std::size_t>(mi)];
      for (int s = 0; s < eval_steps; ++s) {
        const StepOutcome& out = outcomes[static_cast<std::size_t>(s)];
        if (!out.executed) break;
        StepCell& cell =
            report.methods[static_cast<std::size_t>(mi)]
                .steps[static_cast<std::size_t>(s)];
        ++cell.executed;
        if (out.rejected) ++cell.rejected;
        bool active_remaining = false;
        for (int k : active) {
          if (j_entered.find(k) == j_entered.end()) active_remaining = true;
        }
        if (active_remaining) {
          ++cell.power_entries;
          if (out.rejected) ++cell.power_rejected;
          ++cell.sel_entries;
          bool correct = false;
          for (int k : active) correct = correct || out.selected == k;
          if (correct) ++cell.sel_correct;
        } else {
          ++cell.null_entries;
          if (out.rejected) ++cell.null_rejected;
        }
        if (out.r_hat == 1) ++cell.r1_count;
        if (out.has_m && out.m_hat == scenario.n) ++cell.m_eq_n_count;
        if (out.selected >= 0) j_entered.insert(out.selected);
      }
    }
  }
  report.failed_reps = failures;
  if (failures * 100 > reps) {
    raise(ErrorCode::ConvergenceFailure,
          std::to_string(failures) + " of " + std::to_string(reps) +
              " repetitions failed");
  }
  const auto end = std::chrono::steady_clock::now();
  report.wall_clock_s =
      std::chrono::duration<double>(end - start).count();
  return report;
}

}  // namespace seqint
