#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "seqint/cli_io.hpp"

namespace {

// Shared flag surface for both subcommands; only flags the user actually set
// are forwarded, so the file/env/flag layering stays intact.
struct FlagSet {
  std::string config, data, outcome, treatment, propensity, recipe, method,
      out, format, scenario;
  double alpha = 0, d = 0, c = 0;
  long long steps = 0, fixed_steps = 0, B = 0, workers = 0, reps = 0,
            eval_steps = 0;
  unsigned long long seed = 0;
  bool entropy = false;
};

void add_common_flags(CLI::App* cmd, FlagSet* flags) {
  cmd->add_option("--config", flags->config, "configuration file (JSON)");
  cmd->add_option("--data", flags->data, "input CSV path");
  cmd->add_option("--outcome", flags->outcome, "outcome column name");
  cmd->add_option("--treatment", flags->treatment, "treatment column name");
  cmd->add_option("--propensity", flags->propensity,
                  "propensity column name, or 'none'");
  cmd->add_option("--recipe", flags->recipe, "rct|dr");
  cmd->add_option("--method", flags->method, "null|mboot|nboot");
  cmd->add_option("--alpha", flags->alpha, "significance level");
  cmd->add_option("--steps", flags->steps, "maximum sequential steps");
  cmd->add_option("--fixed-steps", flags->fixed_steps,
                  "run exactly this many steps, ignoring the stopping rule");
  cmd->add_option("--B", flags->B, "bootstrap replicates per resample size");
  cmd->add_option("--d", flags->d, "resample-size grid ratio");
  cmd->add_option("--c", flags->c, "pre-test tuning constant");
  cmd->add_option("--seed", flags->seed, "RNG seed");
  cmd->add_option("--workers", flags->workers,
                  "worker threads (0 = hardware)");
  cmd->add_option("--out", flags->out, "output path stem");
  cmd->add_option("--format", flags->format, "json|csv");
  cmd->add_flag("--entropy", flags->entropy,
                "seed from the clock instead of the fixed default");
}

std::map<std::string, std::string> collect(const CLI::App* cmd,
                                           const FlagSet& flags) {
  std::map<std::string, std::string> set;
  auto maybe = [&](const char* name, const std::string& value) {
    if (cmd->count(std::string("--") + name) > 0) set[name] = value;
  };
  maybe("data", flags.data);
  maybe("outcome", flags.outcome);
  maybe("treatment", flags.treatment);
  maybe("propensity", flags.propensity);
  maybe("recipe", flags.recipe);
  maybe("method", flags.method);
  maybe("alpha", std::to_string(flags.alpha));
  maybe("steps", std::to_string(flags.steps));
  maybe("fixed-steps", std::to_string(flags.fixed_steps));
  maybe("B", std::to_string(flags.B));
  maybe("d", std::to_string(flags.d));
  maybe("c", std::to_string(flags.c));
  maybe("seed", std::to_string(flags.seed));
  maybe("workers", std::to_string(flags.workers));
  maybe("out", flags.out);
  maybe("format", flags.format);
  maybe("scenario", flags.scenario);
  maybe("reps", std::to_string(flags.reps));
  maybe("eval-steps", std::to_string(flags.eval_steps));
  if (cmd->count("--entropy") > 0) set["entropy"] = "true";
  return set;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sequential treatment-by-covariate interaction tests"};
  app.require_subcommand(1);

  FlagSet test_flags;
  CLI::App* test_cmd =
      app.add_subcommand("test", "run the sequential test on a CSV dataset");
  add_common_flags(test_cmd, &test_flags);

  FlagSet sim_flags;
  CLI::App* sim_cmd =
      app.add_subcommand("simulate", "run a Monte Carlo study");
  add_common_flags(sim_cmd, &sim_flags);
  sim_cmd->add_option("--scenario", sim_flags.scenario,
                      "canonical scenario name (n1, s1, s2, d1, d2, ...)");
  sim_cmd->add_option("--reps", sim_flags.reps, "Monte Carlo repetitions");
  sim_cmd->add_option("--eval-steps", sim_flags.eval_steps,
                      "steps to tabulate per repetition");

  CLI11_PARSE(app, argc, argv);

  try {
    if (test_cmd->parsed()) {
      auto flags = collect(test_cmd, test_flags);
      flags["mode"] = "test";
      seqint::RunConfig config =
          seqint::resolve_config(test_flags.config, flags);
      return seqint::cmd_test(config);
    }
    auto flags = collect(sim_cmd, sim_flags);
    flags["mode"] = "simulate";
    seqint::RunConfig config = seqint::resolve_config(sim_flags.config, flags);
    return seqint::cmd_simulate(config);
  } catch (const seqint::Error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return seqint::is_input_error(err.code()) ? 2 : 3;
  } catch (const std::exception& err) {
    std::cerr << "internal error: " << err.what() << "\n";
    return 4;
  }
}
