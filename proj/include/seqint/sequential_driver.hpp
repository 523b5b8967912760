#pragma once

#include <string>
#include <vector>

#include "seqint/calibration.hpp"
#include "seqint/data_model.hpp"
#include "seqint/recipe.hpp"

namespace seqint {

enum class StepDecision { Rejected, AcceptedNull };

struct StepResult {
  int step_index = 0;            // 1-based
  int covariate = -1;            // 0-based internal index
  std::string covariate_name;
  double coef = 0.0;
  double stat_scaled = 0.0;
  CalibrationResult calibration;
  StepDecision decision = StepDecision::AcceptedNull;
};

enum class StopReason {
  PExceededAlpha,
  MaxSteps,
  CandidatesExhausted,
  AllDegenerate,
};

const char* stop_reason_name(StopReason reason);

struct SequenceResult {
  std::vector<StepResult> steps;
  std::vector<int> final_j;    // selection order, 0-based
  StopReason stop_reason = StopReason::MaxSteps;
};

struct SequenceConfig {
  StatisticRecipe recipe;
  CalibrationMethod method = CalibrationMethod::MBoot;
  BootstrapPlan plan;
  double alpha = 0.05;
  int max_steps = 5;
};

// Forward-stepwise procedure: evaluate, calibrate, and continue while
// p <= alpha (the boundary counts as rejection). Stops on acceptance,
// candidate exhaustion, the step cap, or an all-degenerate step. Each step's
// randomness is keyed by (seed, step_index).
SequenceResult run_sequence(const Dataset& dataset,
                            const SequenceConfig& config);

// Ignores the stopping rule: always executes fixed_steps steps (fewer only
// on exhaustion or degeneracy), advancing the selected index each step and
// reporting every p-value.
SequenceResult run_sequence_exploratory(const Dataset& dataset,
                                        const SequenceConfig& config,
                                        int fixed_steps);

}  // namespace seqint
