#include "seqint/cli_io.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "seqint/parallel.hpp"

namespace seqint {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// enum <-> string maps
// ---------------------------------------------------------------------------

std::string kind_name(NuisanceKind kind) {
  switch (kind) {
    case NuisanceKind::ConstantMean: return "constant-mean";
    case NuisanceKind::LeastSquares: return "least-squares";
    case NuisanceKind::Ridge: return "ridge";
    case NuisanceKind::AdaptiveLasso: return "adaptive-lasso";
    case NuisanceKind::Logistic: return "logistic";
    case NuisanceKind::LogisticRidge: return "logistic-ridge";
    case NuisanceKind::LogisticAdaptiveLasso:
      return "logistic-adaptive-lasso";
  }
  return "unknown";
}

NuisanceKind kind_from_name(const std::string& name) {
  if (name == "constant-mean") return NuisanceKind::ConstantMean;
  if (name == "least-squares") return NuisanceKind::LeastSquares;
  if (name == "ridge") return NuisanceKind::Ridge;
  if (name == "adaptive-lasso") return NuisanceKind::AdaptiveLasso;
  if (name == "logistic") return NuisanceKind::Logistic;
  if (name == "logistic-ridge") return NuisanceKind::LogisticRidge;
  if (name == "logistic-adaptive-lasso") {
    return NuisanceKind::LogisticAdaptiveLasso;
  }
  raise(ErrorCode::InvalidConfig, "unknown nuisance kind '" + name + "'");
}

CalibrationMethod method_from_name(const std::string& name) {
  if (name == "null") return CalibrationMethod::NullSampling;
  if (name == "mboot") return CalibrationMethod::MBoot;
  if (name == "nboot") return CalibrationMethod::NBoot;
  raise(ErrorCode::InvalidConfig, "unknown method '" + name + "'");
}

std::string method_cli_name(CalibrationMethod method) {
  switch (method) {
    case CalibrationMethod::NullSampling: return "null";
    case CalibrationMethod::MBoot: return "mboot";
    case CalibrationMethod::NBoot: return "nboot";
  }
  return "unknown";
}

const char* law_name(CovariateLaw law) {
  switch (law) {
    case CovariateLaw::IidNormal: return "iid";
    case CovariateLaw::Equicorrelated: return "equicorrelated";
    case CovariateLaw::Ar1: return "ar1";
  }
  return "unknown";
}

CovariateLaw law_from_name(const std::string& name) {
  if (name == "iid") return CovariateLaw::IidNormal;
  if (name == "equicorrelated") return CovariateLaw::Equicorrelated;
  if (name == "ar1") return CovariateLaw::Ar1;
  raise(ErrorCode::InvalidConfig, "unknown covariate law '" + name + "'");
}

// ---------------------------------------------------------------------------
// JSON helpers
// ---------------------------------------------------------------------------

json vec_to_json(const Vec& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

Vec vec_from_json(const json& arr) {
  Vec v(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) {
    v[static_cast<Eigen::Index>(i)] = arr[i].get<double>();
  }
  return v;
}

json spec_to_json(const NuisanceSpec& spec) {
  json j;
  j["kind"] = kind_name(spec.kind);
  if (spec.gcv) {
    j["lambda"] = "gcv";
  } else {
    j["lambda"] = spec.lambda;
  }
  j["gamma"] = spec.gamma;
  j["select"] = spec.select == LambdaSelect::Bic
                    ? "bic"
                    : (spec.select == LambdaSelect::Cv ? "cv" : "fixed");
  j["grid_size"] = spec.grid_size;
  j["grid_min_ratio"] = spec.grid_min_ratio;
  j["folds"] = spec.cv_folds;
  j["standardize"] = spec.standardize;
  json inc = json::array();
  for (int k : spec.include) inc.push_back(k + 1);  // 1-based externally
  j["include"] = inc;
  return j;
}

NuisanceSpec spec_from_json(const json& j) {
  NuisanceSpec spec;
  if (j.contains("kind")) spec.kind = kind_from_name(j["kind"]);
  if (j.contains("lambda")) {
    if (j["lambda"].is_string()) {
      if (j["lambda"] != "gcv") {
        raise(ErrorCode::InvalidConfig, "lambda must be a number or 'gcv'");
      }
      spec.gcv = true;
    } else {
      spec.lambda = j["lambda"].get<double>();
    }
  }
  if (j.contains("gamma")) spec.gamma = j["gamma"].get<double>();
  if (j.contains("select")) {
    const std::string sel = j["select"];
    if (sel == "bic") {
      spec.select = LambdaSelect::Bic;
    } else if (sel == "cv") {
      spec.select = LambdaSelect::Cv;
    } else if (sel == "fixed") {
      spec.select = LambdaSelect::Fixed;
    } else {
      raise(ErrorCode::InvalidConfig, "unknown selector '" + sel + "'");
    }
  }
  if (j.contains("grid_size")) spec.grid_size = j["grid_size"].get<int>();
  if (j.contains("grid_min_ratio")) {
    spec.grid_min_ratio = j["grid_min_ratio"].get<double>();
  }
  if (j.contains("folds")) spec.cv_folds = j["folds"].get<int>();
  if (j.contains("standardize")) {
    spec.standardize = j["standardize"].get<bool>();
  }
  if (j.contains("include")) {
    for (const auto& v : j["include"]) {
      spec.include.push_back(v.get<int>() - 1);
    }
  }
  return spec;
}

json scenario_to_json(const Scenario& s) {
  json j;
  j["name"] = s.name;
  j["n"] = s.n;
  j["p"] = s.p;
  j["law"] = law_name(s.law);
  j["rho"] = s.rho;
  j["beta0"] = vec_to_json(s.beta0);
  j["alpha0"] = s.alpha0;
  j["h_linear"] = vec_to_json(s.h_linear);
  j["h_quad_coef"] = s.h_quad_coef;
  j["h_quad_index"] = s.h_quad_index + 1;
  json prop;
  prop["constant"] = s.propensity.constant;
  prop["value"] = s.propensity.value;
  prop["intercept"] = s.propensity.intercept;
  prop["coef"] = vec_to_json(s.propensity.coef);
  j["propensity"] = prop;
  j["error_sd"] = s.error_sd;
  j["q_correct"] = s.q_correct;
  j["h_correct"] = s.h_correct;
  json excl = json::array();
  for (int k : s.q_fit_exclude) excl.push_back(k + 1);
  j["q_fit_exclude"] = excl;
  return j;
}

Scenario scenario_from_json(const json& j) {
  Scenario s;
  if (j.contains("name")) s.name = j["name"];
  if (j.contains("n")) s.n = j["n"].get<int>();
  if (j.contains("p")) s.p = j["p"].get<int>();
  if (j.contains("law")) s.law = law_from_name(j["law"]);
  if (j.contains("rho")) s.rho = j["rho"].get<double>();
  s.beta0 = j.contains("beta0") ? vec_from_json(j["beta0"])
                                : Vec::Zero(s.p);
  if (j.contains("alpha0")) s.alpha0 = j["alpha0"].get<double>();
  if (j.contains("h_linear")) s.h_linear = vec_from_json(j["h_linear"]);
  if (j.contains("h_quad_coef")) {
    s.h_quad_coef = j["h_quad_coef"].get<double>();
  }
  if (j.contains("h_quad_index")) {
    s.h_quad_index = j["h_quad_index"].get<int>() - 1;
  }
  if (j.contains("propensity")) {
    const json& prop = j["propensity"];
    if (prop.contains("constant")) {
      s.propensity.constant = prop["constant"].get<bool>();
    }
    if (prop.contains("value")) {
      s.propensity.value = prop["value"].get<double>();
    }
    if (prop.contains("intercept")) {
      s.propensity.intercept = prop["intercept"].get<double>();
    }
    if (prop.contains("coef")) {
      s.propensity.coef = vec_from_json(prop["coef"]);
    }
  }
  if (j.contains("error_sd")) s.error_sd = j["error_sd"].get<double>();
  if (j.contains("q_correct")) s.q_correct = j["q_correct"].get<bool>();
  if (j.contains("h_correct")) s.h_correct = j["h_correct"].get<bool>();
  if (j.contains("q_fit_exclude")) {
    for (const auto& v : j["q_fit_exclude"]) {
      s.q_fit_exclude.push_back(v.get<int>() - 1);
    }
  }
  return s;
}

json config_to_json(const RunConfig& config) {
  json j;
  j["mode"] = config.mode == RunMode::Test ? "test" : "simulate";
  j["data"] = config.data_path;
  json cols;
  cols["outcome"] = config.columns.outcome;
  cols["treatment"] = config.columns.treatment;
  cols["propensity"] =
      config.columns.propensity.empty() ? "none" : config.columns.propensity;
  if (config.columns.covariates.empty()) {
    cols["covariates"] = "all";
  } else {
    cols["covariates"] = config.columns.covariates;
  }
  j["columns"] = cols;
  j["drop_incomplete"] = config.drop_incomplete;
  j["recipe"] = config.recipe.kind == RecipeKind::Rct ? "rct" : "dr";
  j["method"] = method_cli_name(config.method);
  j["alpha"] = config.alpha;
  j["steps"] = config.max_steps;
  j["fixed_steps"] = config.fixed_steps;
  json plan;
  plan["B"] = config.plan.B;
  plan["d"] = config.plan.d;
  plan["c"] = config.plan.c;
  plan["m_floor"] = config.plan.m_floor;
  plan["M_null"] = config.plan.M_null;
  plan["pretest_original_p"] = config.plan.pretest_original_p;
  j["plan"] = plan;
  json nuis;
  nuis["phi"] = spec_to_json(config.recipe.phi);
  nuis["q"] = spec_to_json(config.recipe.q);
  nuis["h"] = spec_to_json(config.recipe.h);
  nuis["h_on_control_only"] = config.recipe.h_on_control_only;
  j["nuisance"] = nuis;
  j["seed"] = config.seed;
  // The worker count cannot influence results, so the echo pins it at zero
  // to keep reports byte-identical across pool sizes.
  j["workers"] = 0;
  j["out"] = config.out_path;
  j["format"] = config.format == ReportFormat::Json ? "json" : "csv";
  if (config.mode == RunMode::Simulate) {
    if (config.scenario) {
      j["scenario"] = scenario_to_json(*config.scenario);
    } else {
      j["scenario"] = config.scenario_name;
    }
    j["reps"] = config.reps;
    j["eval_steps"] = config.eval_steps;
    j["methods"] = config.method_names;
  }
  return j;
}

void apply_config_json(const json& j, RunConfig* config) {
  if (j.contains("mode")) {
    const std::string mode = j["mode"];
    if (mode == "test") {
      config->mode = RunMode::Test;
    } else if (mode == "simulate") {
      config->mode = RunMode::Simulate;
    } else {
      raise(ErrorCode::InvalidConfig, "unknown mode '" + mode + "'");
    }
  }
  if (j.contains("data")) config->data_path = j["data"];
  if (j.contains("columns")) {
    const json& cols = j["columns"];
    if (cols.contains("outcome")) config->columns.outcome = cols["outcome"];
    if (cols.contains("treatment")) {
      config->columns.treatment = cols["treatment"];
    }
    if (cols.contains("propensity")) {
      const std::string prop = cols["propensity"];
      config->columns.propensity = prop == "none" ? "" : prop;
    }
    if (cols.contains("covariates") && !cols["covariates"].is_string()) {
      config->columns.covariates =
          cols["covariates"].get<std::vector<std::string>>();
    }
  }
  if (j.contains("drop_incomplete")) {
    config->drop_incomplete = j["drop_incomplete"].get<bool>();
  }
  if (j.contains("recipe")) {
    const std::string recipe = j["recipe"];
    if (recipe == "rct") {
      config->recipe.kind = RecipeKind::Rct;
    } else if (recipe == "dr") {
      config->recipe.kind = RecipeKind::DoublyRobust;
    } else {
      raise(ErrorCode::InvalidConfig, "unknown recipe '" + recipe + "'");
    }
  }
  if (j.contains("method")) config->method = method_from_name(j["method"]);
  if (j.contains("alpha")) config->alpha = j["alpha"].get<double>();
  if (j.contains("steps")) config->max_steps = j["steps"].get<int>();
  if (j.contains("fixed_steps")) {
    config->fixed_steps = j["fixed_steps"].get<int>();
  }
  if (j.contains("plan")) {
    const json& plan = j["plan"];
    if (plan.contains("B")) config->plan.B = plan["B"].get<int>();
    if (plan.contains("d")) config->plan.d = plan["d"].get<double>();
    if (plan.contains("c")) config->plan.c = plan["c"].get<double>();
    if (plan.contains("m_floor")) {
      config->plan.m_floor = plan["m_floor"].get<int>();
    }
    if (plan.contains("M_null")) {
      config->plan.M_null = plan["M_null"].get<int>();
    }
    if (plan.contains("pretest_original_p")) {
      config->plan.pretest_original_p =
          plan["pretest_original_p"].get<bool>();
    }
  }
  if (j.contains("nuisance")) {
    const json& nuis = j["nuisance"];
    if (nuis.contains("phi")) {
      config->recipe.phi = spec_from_json(nuis["phi"]);
    }
    if (nuis.contains("q")) {
      config->recipe.q = spec_from_json(nuis["q"]);
      config->q_spec_provided = true;
    }
    if (nuis.contains("h")) config->recipe.h = spec_from_json(nuis["h"]);
    if (nuis.contains("h_on_control_only")) {
      config->recipe.h_on_control_only =
          nuis["h_on_control_only"].get<bool>();
    }
  }
  if (j.contains("seed")) config->seed = j["seed"].get<std::uint64_t>();
  if (j.contains("workers")) config->workers = j["workers"].get<int>();
  if (j.contains("out")) config->out_path = j["out"];
  if (j.contains("format")) {
    const std::string format = j["format"];
    if (format == "json") {
      config->format = ReportFormat::Json;
    } else if (format == "csv") {
      config->format = ReportFormat::Csv;
    } else {
      raise(ErrorCode::InvalidConfig, "unknown format '" + format + "'");
    }
  }
  if (j.contains("scenario")) {
    if (j["scenario"].is_string()) {
      config->scenario_name = j["scenario"];
      config->scenario.reset();
    } else {
      config->scenario = scenario_from_json(j["scenario"]);
      config->scenario_name.clear();
    }
  }
  if (j.contains("reps")) config->reps = j["reps"].get<int>();
  if (j.contains("eval_steps")) {
    config->eval_steps = j["eval_steps"].get<int>();
  }
  if (j.contains("methods")) {
    config->method_names = j["methods"].get<std::vector<std::string>>();
  }
}

double parse_double(const std::string& value, const std::string& flag) {
  try {
    std::size_t used = 0;
    const double parsed = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return parsed;
  } catch (const std::exception&) {
    raise(ErrorCode::InvalidConfig,
          "flag --" + flag + " needs a number, got '" + value + "'");
  }
}

long long parse_int(const std::string& value, const std::string& flag) {
  try {
    std::size_t used = 0;
    const long long parsed = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return parsed;
  } catch (const std::exception&) {
    raise(ErrorCode::InvalidConfig,
          "flag --" + flag + " needs an integer, got '" + value + "'");
  }
}

std::uint64_t parse_u64(const std::string& value, const std::string& flag) {
  try {
    std::size_t used = 0;
    const std::uint64_t parsed = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return parsed;
  } catch (const std::exception&) {
    raise(ErrorCode::InvalidConfig,
          "flag --" + flag + " needs an unsigned integer, got '" + value +
              "'");
  }
}

}  // namespace

RunConfig resolve_config(const std::string& config_path,
                         const std::map<std::string, std::string>& flags) {
  RunConfig config;
  // Layer 1: config file.
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) raise(ErrorCode::IoError, "cannot read " + config_path);
    json doc;
    try {
      in >> doc;
    } catch (const json::exception& err) {
      raise(ErrorCode::InvalidConfig,
            std::string("config parse failure: ") + err.what());
    }
    apply_config_json(doc, &config);
  }
  // Layer 2: environment overrides.
  if (const char* env_seed = std::getenv("SEQINT_SEED")) {
    config.seed = parse_u64(env_seed, "SEQINT_SEED");
  }
  if (const char* env_workers = std::getenv("SEQINT_WORKERS")) {
    config.workers = static_cast<int>(parse_int(env_workers,
                                                "SEQINT_WORKERS"));
  }
  // Layer 3: command-line flags.
  json overrides;
  for (const auto& [flag, value] : flags) {
    if (flag == "data") {
      overrides["data"] = value;
    } else if (flag == "outcome") {
      overrides["columns"]["outcome"] = value;
    } else if (flag == "treatment") {
      overrides["columns"]["treatment"] = value;
    } else if (flag == "propensity") {
      overrides["columns"]["propensity"] = value;
    } else if (flag == "recipe") {
      overrides["recipe"] = value;
    } else if (flag == "method") {
      overrides["method"] = value;
    } else if (flag == "alpha") {
      overrides["alpha"] = parse_double(value, flag);
    } else if (flag == "steps") {
      overrides["steps"] = parse_int(value, flag);
    } else if (flag == "fixed-steps") {
      overrides["fixed_steps"] = parse_int(value, flag);
    } else if (flag == "B") {
      overrides["plan"]["B"] = parse_int(value, flag);
    } else if (flag == "d") {
      overrides["plan"]["d"] = parse_double(value, flag);
    } else if (flag == "c") {
      overrides["plan"]["c"] = parse_double(value, flag);
    } else if (flag == "seed") {
      overrides["seed"] = parse_u64(value, flag);
    } else if (flag == "workers") {
      overrides["workers"] = parse_int(value, flag);
    } else if (flag == "out") {
      overrides["out"] = value;
    } else if (flag == "format") {
      overrides["format"] = value;
    } else if (flag == "mode") {
      overrides["mode"] = value;
    } else if (flag == "scenario") {
      overrides["scenario"] = value;
    } else if (flag == "reps") {
      overrides["reps"] = parse_int(value, flag);
    } else if (flag == "eval-steps") {
      overrides["eval_steps"] = parse_int(value, flag);
    } else if (flag == "entropy") {
      config.entropy_seed = value == "1" || value == "true";
    } else {
      raise(ErrorCode::InvalidConfig, "unknown flag --" + flag);
    }
  }
  apply_config_json(overrides, &config);

  if (config.entropy_seed) {
    config.seed = static_cast<std::uint64_t>(
        std::chrono::steady_clock::now().time_since_epoch().count());
  }
  config.plan.seed = config.seed;
  return config;
}

std::uint64_t config_hash(const RunConfig& config) {
  json j = config_to_json(config);
  // Presentation-only fields do not affect results.
  j.erase("out");
  j.erase("format");
  j.erase("workers");
  const std::string dump = j.dump();
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char ch : dump) {
    hash ^= ch;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cell);
      cell.clear();
    } else if (ch != '\r' && ch != '"') {
      cell.push_back(ch);
    }
  }
  cells.push_back(cell);
  for (auto& c : cells) {
    const auto first = c.find_first_not_of(" \t");
    const auto last = c.find_last_not_of(" \t");
    c = first == std::string::npos ? "" : c.substr(first, last - first + 1);
  }
  return cells;
}

double parse_cell(const std::string& cell, int row, const std::string& col) {
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(cell, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != cell.size()) {
    raise(ErrorCode::NonNumericCell,
          "row " + std::to_string(row) + ", column " + col + ": '" + cell +
              "'");
  }
  return value;
}

}  // namespace

Dataset load_csv(const std::string& path, const ColumnBindings& bindings,
                 bool drop_incomplete, int* dropped_rows) {
  std::ifstream in(path);
  if (!in) raise(ErrorCode::IoError, "cannot read " + path);
  std::string line;
  if (!std::getline(in, line)) {
    raise(ErrorCode::EmptyInput, path + " has no header row");
  }
  const std::vector<std::string> header = split_csv_line(line);
  auto column_index = [&](const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return static_cast<int>(i);
    }
    raise(ErrorCode::MissingColumn, name);
  };

  const int outcome_col = column_index(bindings.outcome);
  const int treatment_col = column_index(bindings.treatment);
  const bool has_propensity =
      !bindings.propensity.empty() && bindings.propensity != "none";
  const int propensity_col =
      has_propensity ? column_index(bindings.propensity) : -1;

  std::vector<std::string> covariate_names = bindings.covariates;
  if (covariate_names.empty()) {
    for (const std::string& name : header) {
      if (name == bindings.outcome || name == bindings.treatment) continue;
      if (has_propensity && name == bindings.propensity) continue;
      covariate_names.push_back(name);
    }
  }
  std::vector<int> covariate_cols;
  covariate_cols.reserve(covariate_names.size());
  for (const std::string& name : covariate_names) {
    covariate_cols.push_back(column_index(name));
  }

  std::vector<double> y_rows, a_rows, q_rows;
  std::vector<std::vector<double>> x_rows;
  int dropped = 0;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const std::vector<std::string> cells = split_csv_line(line);
    auto cell_at = [&](int col) -> const std::string& {
      static const std::string empty;
      return col < static_cast<int>(cells.size()) ? cells[col] : empty;
    };
    bool missing = cell_at(outcome_col).empty() ||
                   cell_at(treatment_col).empty() ||
                   (has_propensity && cell_at(propensity_col).empty());
    for (int col : covariate_cols) missing = missing || cell_at(col).empty();
    if (missing) {
      if (drop_incomplete) {
        ++dropped;
        continue;
      }
      raise(ErrorCode::MissingValue,
            "row " + std::to_string(row) +
                " has an empty bound cell (use drop-incomplete to skip)");
    }
    y_rows.push_back(parse_cell(cell_at(outcome_col), row, bindings.outcome));
    const double a =
        parse_cell(cell_at(treatment_col), row, bindings.treatment);
    if (a != 0.0 && a != 1.0) {
      raise(ErrorCode::TreatmentNotBinary,
            "row " + std::to_string(row) + ": " + std::to_string(a));
    }
    a_rows.push_back(a);
    if (has_propensity) {
      q_rows.push_back(
          parse_cell(cell_at(propensity_col), row, bindings.propensity));
    }
    std::vector<double> x_row;
    x_row.reserve(covariate_cols.size());
    for (std::size_t j = 0; j < covariate_cols.size(); ++j) {
      x_row.push_back(
          parse_cell(cell_at(covariate_cols[j]), row, covariate_names[j]));
    }
    x_rows.push_back(std::move(x_row));
  }
  if (dropped_rows) *dropped_rows = dropped;

  const auto n = static_cast<Eigen::Index>(y_rows.size());
  const auto p = static_cast<Eigen::Index>(covariate_names.size());
  Dataset data;
  data.y = Eigen::Map<Vec>(y_rows.data(), n);
  data.a = Eigen::Map<Vec>(a_rows.data(), n);
  data.x.resize(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) {
      data.x(i, j) = x_rows[static_cast<std::size_t>(i)]
                           [static_cast<std::size_t>(j)];
    }
  }
  if (has_propensity) {
    data.q0 = Eigen::Map<Vec>(q_rows.data(), n);
  }
  data.names = covariate_names;
  return validate(std::move(data));
}

// ---------------------------------------------------------------------------
// report documents
// ---------------------------------------------------------------------------

namespace {

json provenance_json(const RunConfig& config) {
  json j;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(config_hash(config)));
  j["config_hash"] = std::string(buf);
  j["seed"] = config.seed;
  j["version"] = kVersion;
  // Wall-clock provenance breaks byte-reproducibility, so it is only
  // embedded when the run opted into entropy seeding.
  if (config.entropy_seed) {
    const auto now = std::chrono::system_clock::now();
    j["created"] = std::chrono::duration_cast<std::chrono::seconds>(
                       now.time_since_epoch())
                       .count();
  } else {
    j["created"] = nullptr;
  }
  return j;
}

json calibration_to_json(const CalibrationResult& c) {
  json j;
  j["stat_scaled"] = c.stat_scaled;
  j["sigma_hat"] = c.sigma_hat;
  j["r_hat"] = c.r_hat;
  j["m_hat"] = c.m_hat;
  j["p_value"] = c.p_value;
  j["method"] = calibration_method_name(c.method);
  j["draws_used"] = c.draws_used;
  json path = json::array();
  for (const auto& [m, dist] : c.ks_path) {
    path.push_back(json::array({m, dist}));
  }
  j["ks_path"] = path;
  return j;
}

json sequence_to_json(const SequenceResult& result) {
  json j;
  json steps = json::array();
  for (const StepResult& step : result.steps) {
    json s;
    s["step"] = step.step_index;
    s["covariate"] = step.covariate + 1;  // 1-based in reports
    s["name"] = step.covariate_name;
    s["coef"] = step.coef;
    s["stat_scaled"] = step.stat_scaled;
    s["calibration"] = calibration_to_json(step.calibration);
    s["decision"] = step.decision == StepDecision::Rejected
                        ? "rejected"
                        : "accepted-null";
    steps.push_back(s);
  }
  j["steps"] = steps;
  json final_j = json::array();
  for (int k : result.final_j) final_j.push_back(k + 1);
  j["final_j"] = final_j;
  j["stop_reason"] = stop_reason_name(result.stop_reason);
  return j;
}

json mc_to_json(const McReport& report, bool embed_timing) {
  json j;
  j["scenario"] = scenario_to_json(report.scenario);
  j["reps"] = report.reps;
  j["eval_steps"] = report.eval_steps;
  j["failed_reps"] = report.failed_reps;
  j["wall_clock_s"] = embed_timing ? report.wall_clock_s : 0.0;
  json methods = json::array();
  for (const MethodReport& method : report.methods) {
    json m;
    m["name"] = method.name;
    json steps = json::array();
    for (std::size_t s = 0; s < method.steps.size(); ++s) {
      const StepCell& cell = method.steps[s];
      json c;
      c["step"] = s + 1;
      c["executed"] = cell.executed;
      c["rejected"] = cell.rejected;
      c["rate"] = cell.rate();
      c["se"] = cell.se();
      c["null_entries"] = cell.null_entries;
      c["null_rate"] = cell.null_rate();
      c["null_se"] = cell.null_se();
      c["power_entries"] = cell.power_entries;
      c["power_rate"] = cell.power_rate();
      c["sel_entries"] = cell.sel_entries;
      c["selection_accuracy"] = cell.selection_accuracy();
      c["r1_count"] = cell.r1_count;
      c["m_eq_n_count"] = cell.m_eq_n_count;
      steps.push_back(c);
    }
    m["steps"] = steps;
    methods.push_back(m);
  }
  j["methods"] = methods;
  return j;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return std::string(buf);
}

}  // namespace

std::string report_to_json(const RunConfig& config,
                           const SequenceResult& result) {
  json j;
  j["schema"] = kReportSchema;
  j["mode"] = "test";
  j["config"] = config_to_json(config);
  j["provenance"] = provenance_json(config);
  j["sequence"] = sequence_to_json(result);
  return j.dump(2) + "\n";
}

std::string report_to_json(const RunConfig& config, const McReport& report) {
  json j;
  j["schema"] = kReportSchema;
  j["mode"] = "simulate";
  j["config"] = config_to_json(config);
  j["provenance"] = provenance_json(config);
  j["mc"] = mc_to_json(report, config.entropy_seed);
  return j.dump(2) + "\n";
}

std::string sequence_table_csv(const SequenceResult& result) {
  std::ostringstream out;
  out << "step,covariate,coef,m_hat,r_hat,p_value\n";
  for (const StepResult& step : result.steps) {
    out << step.step_index << ',' << step.covariate_name << ','
        << format_double(step.coef) << ',' << step.calibration.m_hat << ','
        << step.calibration.r_hat << ','
        << format_double(step.calibration.p_value) << '\n';
  }
  return out.str();
}

std::string mc_table_csv(const McReport& report) {
  std::ostringstream out;
  out << "method,step,rate,se\n";
  for (const MethodReport& method : report.methods) {
    for (std::size_t s = 0; s < method.steps.size(); ++s) {
      const StepCell& cell = method.steps[s];
      // A rate never ships without its Monte Carlo standard error.
      out << method.name << ',' << s + 1 << ',' << format_double(cell.rate())
          << ',' << format_double(cell.se()) << '\n';
    }
  }
  return out.str();
}

void write_file_atomic(const std::string& path, const std::string& content) {
  const fs::path target(path);
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      raise(ErrorCode::IoError, "cannot create " + tmp.string());
    }
    out << content;
    if (!out.good()) {
      out.close();
      std::error_code ec;
      fs::remove(tmp, ec);
      raise(ErrorCode::IoError, "short write to " + tmp.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp, ec);
    raise(ErrorCode::IoError,
          "cannot move report into place: " + target.string());
  }
}

namespace {

// The hierarchical document and the flat CSV are always both written; the
// --out path supplies the stem.
std::pair<std::string, std::string> output_paths(const RunConfig& config) {
  std::string stem = config.out_path;
  if (stem.empty()) {
    stem = config.mode == RunMode::Test ? "seqint-test" : "seqint-sim";
  }
  const auto dot = stem.rfind('.');
  if (dot != std::string::npos) {
    const std::string ext = stem.substr(dot);
    if (ext == ".json" || ext == ".csv") stem = stem.substr(0, dot);
  }
  return {stem + ".json", stem + ".csv"};
}

int exit_code_for(const Error& err) {
  return is_input_error(err.code()) ? 2 : 3;
}

std::vector<MethodSpec> build_methods(const RunConfig& config) {
  std::vector<std::string> names = config.method_names;
  if (names.empty()) names = {method_cli_name(config.method)};
  std::vector<MethodSpec> methods;
  for (const std::string& name : names) {
    MethodSpec spec;
    spec.name = name;
    if (name == "bonf") {
      spec.kind = MethodSpec::Kind::Bonferroni;
      spec.recipe.kind = RecipeKind::Rct;
      spec.recipe.phi = config.recipe.phi;
    } else if (name == "lrt") {
      spec.kind = MethodSpec::Kind::Lrt;
      spec.recipe.kind = RecipeKind::Rct;
      spec.recipe.phi = config.recipe.phi;
    } else {
      spec.kind = MethodSpec::Kind::Sequential;
      spec.recipe = config.recipe;
      spec.method = method_from_name(name);
    }
    methods.push_back(std::move(spec));
  }
  return methods;
}

}  // namespace

int cmd_test(const RunConfig& config) {
  try {
    int dropped = 0;
    Dataset data = load_csv(config.data_path, config.columns,
                            config.drop_incomplete, &dropped);
    if (dropped > 0) {
      std::cerr << "dropped " << dropped << " incomplete rows\n";
    }
    if (config.recipe.kind == RecipeKind::Rct && !data.q0) {
      if (!config.q_spec_provided) {
        raise(ErrorCode::MissingColumn,
              "recipe rct needs a propensity column or an explicit q spec");
      }
      // Propensity modeled once on the full data and treated as known.
      Rng q_rng = Rng::from_key(config.seed, {0x9F17ULL});
      const FittedNuisance q_fit =
          fit_nuisance(config.recipe.q, data.x, data.a, &q_rng);
      data.q0 = predict(q_fit, data.x);
    }

    SequenceConfig seq;
    seq.recipe = config.recipe;
    seq.method = config.method;
    seq.plan = config.plan;
    seq.plan.seed = config.seed;
    seq.plan.alpha = config.alpha;
    seq.plan.workers = resolve_workers(config.workers);
    seq.alpha = config.alpha;
    seq.max_steps = config.max_steps;

    const SequenceResult result =
        config.fixed_steps > 0
            ? run_sequence_exploratory(data, seq, config.fixed_steps)
            : run_sequence(data, seq);

    const auto [json_path, csv_path] = output_paths(config);
    write_file_atomic(json_path, report_to_json(config, result));
    write_file_atomic(csv_path, sequence_table_csv(result));

    std::printf("%-5s %-24s %12s %6s %6s %10s\n", "step", "covariate", "coef",
                "r_hat", "m_hat", "p");
    for (const StepResult& step : result.steps) {
      std::printf("%-5d %-24s %12.4f %6d %6d %10.4f\n", step.step_index,
                  step.covariate_name.c_str(), step.coef,
                  step.calibration.r_hat, step.calibration.m_hat,
                  step.calibration.p_value);
    }
    std::printf("stop: %s\n", stop_reason_name(result.stop_reason));
    return 0;
  } catch (const Error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return exit_code_for(err);
  } catch (const std::exception& err) {
    std::cerr << "internal error: " << err.what() << "\n";
    return 4;
  }
}

int cmd_simulate(const RunConfig& config) {
  try {
    Scenario scenario;
    if (config.scenario) {
      scenario = *config.scenario;
    } else if (!config.scenario_name.empty()) {
      scenario = canonical_scenario(config.scenario_name);
    } else {
      raise(ErrorCode::InvalidConfig, "simulate mode needs a scenario");
    }

    BootstrapPlan plan = config.plan;
    plan.seed = config.seed;
    plan.alpha = config.alpha;
    plan.workers = 1;  // parallelism lives at the repetition level

    const McReport report =
        mc_study(scenario, build_methods(config), config.reps, plan,
                 config.eval_steps, resolve_workers(config.workers));

    const auto [json_path, csv_path] = output_paths(config);
    write_file_atomic(json_path, report_to_json(config, report));
    write_file_atomic(csv_path, mc_table_csv(report));

    std::printf("scenario %s: n=%d p=%d reps=%d\n", scenario.name.c_str(),
                scenario.n, scenario.p, report.reps);
    std::printf("%-12s %5s %9s %9s %9s %9s\n", "method", "step", "rate", "se",
                "null", "power");
    for (const MethodReport& method : report.methods) {
      for (std::size_t s = 0; s < method.steps.size(); ++s) {
        const StepCell& cell = method.steps[s];
        std::printf("%-12s %5zu %9.4f %9.4f %9.4f %9.4f\n",
                    method.name.c_str(), s + 1, cell.rate(), cell.se(),
                    cell.null_rate(), cell.power_rate());
      }
    }
    std::fprintf(stderr, "wall clock: %.1fs\n", report.wall_clock_s);
    return 0;
  } catch (const Error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return exit_code_for(err);
  } catch (const std::exception& err) {
    std::cerr << "internal error: " << err.what() << "\n";
    return 4;
  }
}

}  // namespace seqint
