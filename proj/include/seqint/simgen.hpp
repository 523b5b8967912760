#pragma once

#include <string>
#include <vector>

#include "seqint/calibration.hpp"
#include "seqint/data_model.hpp"
#include "seqint/recipe.hpp"
#include "seqint/rng.hpp"

namespace seqint {

enum class CovariateLaw { IidNormal, Equicorrelated, Ar1 };

struct PropensityModel {
  bool constant = true;
  double value = 0.5;        // constant propensity
  double intercept = 0.0;    // logistic propensity
  Vec coef;                  // logistic slopes, length p (zeros allowed)
};

// Data-generating configuration for Y = h0(X) + (alpha0 + X' beta0) A + eps.
struct Scenario {
  std::string name;
  int n = 250;
  int p = 10;
  CovariateLaw law = CovariateLaw::IidNormal;
  double rho = 0.0;
  Vec beta0;                 // interaction coefficients, length p
  double alpha0 = 0.0;       // treatment main effect
  Vec h_linear;              // linear main effect, length p (empty = zero)
  double h_quad_coef = 0.0;  // optional omitted-quadratic term
  int h_quad_index = 0;      // covariate carrying the quadratic term
  PropensityModel propensity;
  double error_sd = 1.0;
  bool q_correct = true;     // truth flags for reporting
  bool h_correct = true;
  std::vector<int> q_fit_exclude;  // columns withheld from the fitted q model
};

void check_scenario(const Scenario& scenario);

// Draws X from the covariate law, A ~ Bernoulli(q0(X)), eps ~ N(0, sd^2),
// and Y from the model. The true propensity is attached as the known
// propensity column only when attach_q0 is set.
Dataset generate(const Scenario& scenario, Rng& stream, bool attach_q0);

// Signal strength b with beta0 = (b, 0, ..., 0) giving the stated power for
// the oracle single-covariate z-test under the iid-normal, constant-q0
// randomized-trial design with a constant-mean outcome fit.
double rct_signal_b(int n, double sigma, double q0, double alpha,
                    double power);

// Same calibration for doubly robust scenarios; the oracle moments have no
// closed form, so they are estimated by a large fixed-seed plug-in sample.
double dr_signal_b(const Scenario& null_scenario, double alpha, double power,
                   int probe_n = 400000,
                   std::uint64_t probe_seed = 0x51D0A7ULL);

// Named canonical scenarios: n1 (null), s1 (one active), s1-strong,
// s2 (two equally active), d1/d2 (doubly robust nulls), d1-signal/d2-signal.
Scenario canonical_scenario(const std::string& name);

struct BonferroniResult {
  bool reject = false;
  std::vector<double> adjusted_p;  // jc order
  int best_k = -1;                 // covariate index with min adjusted p
};

// Per-candidate two-sided z-tests from the plug-in influence matrix,
// Bonferroni-adjusted by the candidate count.
BonferroniResult bonferroni_test(const Dataset& dataset,
                                 const StepContext& step,
                                 const StatisticRecipe& recipe, double alpha);

struct LrtResult {
  bool reject = false;
  double p_value = 1.0;
  double f_stat = 0.0;
};

// F-test of Y ~ (1, X, A, A X_J, A X_Jc) against Y ~ (1, X, A, A X_J) on
// (|Jc|, n - 2p - 2) degrees of freedom. Throws InfeasibleLRT when the full
// model is not estimable.
LrtResult lrt_test(const Dataset& dataset, const StepContext& step,
                   double alpha);

struct MethodSpec {
  enum class Kind { Sequential, Bonferroni, Lrt };
  std::string name;
  Kind kind = Kind::Sequential;
  StatisticRecipe recipe;
  CalibrationMethod method = CalibrationMethod::MBoot;
};

// Per-method, per-step tallies. A step entry counts toward power when at
// least one truly active covariate remains in the candidate set, else toward
// type I error.
struct StepCell {
  long executed = 0;
  long rejected = 0;
  long null_entries = 0;
  long null_rejected = 0;
  long power_entries = 0;
  long power_rejected = 0;
  long sel_entries = 0;    // entries with >= 1 active candidate remaining
  long sel_correct = 0;    // of those, selected covariate truly active
  long r1_count = 0;       // pre-test returned 1
  long m_eq_n_count = 0;   // chosen m equals n

  double rate() const;
  double se() const;
  double null_rate() const;
  double null_se() const;
  double power_rate() const;
  double selection_accuracy() const;
};

struct MethodReport {
  std::string name;
  std::vector<StepCell> steps;
};

struct McReport {
  Scenario scenario;
  int reps = 0;
  int eval_steps = 0;
  std::vector<MethodReport> methods;
  long failed_reps = 0;
  double wall_clock_s = 0.0;  // console-only; serialized as 0 by default
};

// Runs `reps` repetitions: one generated dataset per rep shared by all
// methods, each method running its own sequential procedure with randomness
// keyed by (seed, rep, method). Per-rep failures are tolerated up to 1% of
// reps.
McReport mc_study(const Scenario& scenario,
                  const std::vector<MethodSpec>& methods, int reps,
                  const BootstrapPlan& plan, int eval_steps, int workers);

}  // namespace seqint
