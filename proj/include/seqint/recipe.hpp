#pragma once

#include <cstdint>
#include <vector>

#include "seqint/data_model.hpp"
#include "seqint/interaction_core.hpp"
#include "seqint/nuisance.hpp"
#include "seqint/types.hpp"

namespace seqint {

enum class RecipeKind { Rct, DoublyRobust };

// The full per-step statistic pipeline: which nuisances to fit and which
// candidate statistic/selection rule to use. Bootstrap replicates re-run the
// entire recipe (nuisance refits included) on each resample.
struct StatisticRecipe {
  RecipeKind kind = RecipeKind::Rct;
  NuisanceSpec phi;                  // E(Y|X) estimate (RCT path)
  NuisanceSpec q;                    // propensity estimate (DR path)
  NuisanceSpec h;                    // E(Y|X, A=0) estimate (DR path)
  bool h_on_control_only = true;     // fit h on the A=0 subsample
};

// Nuisance fits realized on one sample.
struct RecipeState {
  Residualized residualized;
  // For the DR path, w is A - q_hat with clipped q_hat; the projection
  // weights A * w are derived where needed.
};

// Fits the recipe's nuisances on `dataset` and forms (w, r). The RCT path
// requires a known propensity column. The DR path falls back to a ridge
// penalty if the propensity fit quasi-separates.
RecipeState prepare_recipe(const Dataset& dataset,
                           const StatisticRecipe& recipe, Rng* cv_rng);

struct EvalOptions {
  bool with_influence = false;   // build the influence matrix (RCT only)
  bool with_sigma = false;       // plug-in sd of the scaled statistic
  bool keep_candidates = false;  // retain per-candidate stats
};

// Everything a step produces on one sample.
struct StepStatistic {
  CandidateStat selected;
  double stat_scaled = 0.0;             // sqrt(n) * selected.coef
  double sigma_hat = 0.0;               // plug-in asymptotic sd (if requested)
  InfluenceMatrix influence;            // empty unless requested
  std::vector<CandidateStat> candidates;  // jc order (if requested)
  std::vector<int> degenerate;            // skipped candidate indices
  int n_candidates = 0;                   // |Jc| at this step
};

// Builds every candidate statistic on the current candidate set, selects,
// and (optionally) attaches influence values and the plug-in sd. Candidates
// whose denominator falls under the degeneracy threshold are skipped with a
// record; throws AllDegenerate when none survive.
StepStatistic evaluate_step(const Dataset& dataset, const RecipeState& state,
                            const StepContext& step,
                            const StatisticRecipe& recipe,
                            const EvalOptions& options);

// Convenience: prepare + evaluate in one call (used on resamples).
StepStatistic evaluate_step(const Dataset& dataset, const StepContext& step,
                            const StatisticRecipe& recipe, Rng* cv_rng,
                            const EvalOptions& options);

}  // namespace seqint
