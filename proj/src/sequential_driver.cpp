#include "seqint/sequential_driver.hpp"

namespace seqint {

const char* stop_reason_name(StopReason reason) {
  switch (reason) {
    case StopReason::PExceededAlpha: return "p-exceeded-alpha";
    case StopReason::MaxSteps: return "max-steps";
    case StopReason::CandidatesExhausted: return "candidates-exhausted";
    case StopReason::AllDegenerate: return "all-degenerate";
  }
  return "unknown";
}

namespace {

SequenceResult run_impl(const Dataset& dataset, const SequenceConfig& config,
                        int fixed_steps) {
  check_dataset_values(dataset, 4);
  config.plan.check(dataset.n());
  const bool exploratory = fixed_steps > 0;
  const int limit = exploratory ? fixed_steps : config.max_steps;
  if (limit < 1) raise(ErrorCode::InvalidConfig, "need at least one step");
  if (config.recipe.kind == RecipeKind::Rct && !dataset.q0) {
    raise(ErrorCode::InvalidConfig,
          "the randomized-trial recipe needs a known propensity column");
  }

  Rng fit_rng = Rng::from_key(config.plan.seed, {0xF17ULL});
  const RecipeState state = prepare_recipe(dataset, config.recipe, &fit_rng);

  EvalOptions options;
  options.with_sigma = true;
  options.with_influence = config.recipe.kind == RecipeKind::Rct;

  SequenceResult result;
  StepContext ctx = StepContext::initial(dataset);
  result.stop_reason = StopReason::MaxSteps;
  for (int step = 1; step <= limit; ++step) {
    StepStatistic stat;
    try {
      stat = evaluate_step(dataset, state, ctx, config.recipe, options);
    } catch (const Error& err) {
      if (err.code() == ErrorCode::AllDegenerate) {
        result.stop_reason = StopReason::AllDegenerate;
        return result;
      }
      throw;
    }
    const CalibrationResult calibration =
        calibrate_step(dataset, ctx, config.recipe, stat, config.method,
                       config.plan, static_cast<std::uint64_t>(step));
    StepResult record;
    record.step_index = step;
    record.covariate = stat.selected.k;
    record.covariate_name = dataset.names[stat.selected.k];
    record.coef = stat.selected.coef;
    record.stat_scaled = stat.stat_scaled;
    record.calibration = calibration;
    // The boundary p = alpha still counts as a rejection; the sequence stops
    // only when the p-value strictly exceeds the level.
    record.decision = calibration.p_value <= config.alpha
                          ? StepDecision::Rejected
                          : StepDecision::AcceptedNull;
    result.steps.push_back(std::move(record));

    if (!exploratory &&
        result.steps.back().decision == StepDecision::AcceptedNull) {
      result.stop_reason = StopReason::PExceededAlpha;
      return result;
    }
    ctx = ctx.advanced(dataset, stat.selected.k);
    result.final_j = ctx.j_set;
    if (ctx.jc_set.empty()) {
      result.stop_reason = StopReason::CandidatesExhausted;
      return result;
    }
  }
  result.stop_reason = StopReason::MaxSteps;
  return result;
}

}  // namespace

SequenceResult run_sequence(const Dataset& dataset,
                            const SequenceConfig& config) {
  return run_impl(dataset, config, 0);
}

SequenceResult run_sequence_exploratory(const Dataset& dataset,
                                        const SequenceConfig& config,
                                        int fixed_steps) {
  return run_impl(dataset, config, fixed_steps);
}

}  // namespace seqint
