#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "seqint/sequential_driver.hpp"
#include "seqint/simgen.hpp"

namespace seqint {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kReportSchema = "seqint/report/v1";

enum class RunMode { Test, Simulate };
enum class ReportFormat { Json, Csv };

struct ColumnBindings {
  std::string outcome;
  std::string treatment;
  std::string propensity;              // empty or "none" = absent
  std::vector<std::string> covariates; // empty = all remaining columns
};

struct RunConfig {
  RunMode mode = RunMode::Test;
  std::string data_path;               // test mode
  ColumnBindings columns;
  bool drop_incomplete = false;
  StatisticRecipe recipe;
  bool q_spec_provided = false;  // an explicit q-hat spec was configured
  CalibrationMethod method = CalibrationMethod::MBoot;
  BootstrapPlan plan;
  double alpha = 0.05;
  int max_steps = 5;
  int fixed_steps = 0;                 // > 0 switches to exploratory mode
  std::uint64_t seed = kDefaultSeed;
  bool entropy_seed = false;           // opt into time-based seeding
  int workers = 0;                     // 0 = hardware concurrency
  std::string out_path;
  ReportFormat format = ReportFormat::Json;
  // simulate mode
  std::string scenario_name;           // canonical name, or empty if inline
  std::optional<Scenario> scenario;
  int reps = 1000;
  int eval_steps = 1;
  std::vector<std::string> method_names;  // null|mboot|nboot|bonf|lrt
};

// Parses the layered configuration: defaults < config file < environment
// (SEQINT_SEED, SEQINT_WORKERS) < command-line flags. `flag_overrides` maps
// flag names (e.g. "alpha") to raw string values.
RunConfig resolve_config(const std::string& config_path,
                         const std::map<std::string, std::string>& flags);

// FNV-1a hash over the canonical serialization of the semantically
// meaningful fields (out path, format, and worker count excluded).
std::uint64_t config_hash(const RunConfig& config);

// CSV ingestion: UTF-8, header row, comma separators, '.' decimals, empty
// cell = missing. Treatment cells must be the literals 0 or 1. Rows with a
// missing bound field are dropped when drop_incomplete is set (count
// reported via *dropped_rows), otherwise MissingValue is thrown.
Dataset load_csv(const std::string& path, const ColumnBindings& bindings,
                 bool drop_incomplete, int* dropped_rows = nullptr);

// Runs the configured sequential test, writes the report document (JSON and
// flat CSV, atomically), prints the step table. Returns the process exit
// code: 0 ok, 2 input/config error, 3 numerical failure, 4 internal error.
int cmd_test(const RunConfig& config);

// Runs the Monte Carlo study and writes the report plus the flat CSV of
// (method, step, rate, se).
int cmd_simulate(const RunConfig& config);

// Serialization helpers (JSON text round-trips field-for-field).
std::string report_to_json(const RunConfig& config,
                           const SequenceResult& result);
std::string report_to_json(const RunConfig& config, const McReport& report);
std::string sequence_table_csv(const SequenceResult& result);
std::string mc_table_csv(const McReport& report);

// Write-to-temp + atomic rename; never leaves partial files behind.
void write_file_atomic(const std::string& path, const std::string& content);

}  // namespace seqint
