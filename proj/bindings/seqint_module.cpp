#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

#include "seqint/calibration.hpp"
#include "seqint/data_model.hpp"
#include "seqint/interaction_core.hpp"
#include "seqint/nuisance.hpp"
#include "seqint/sequential_driver.hpp"
#include "seqint/simgen.hpp"

namespace py = pybind11;
using namespace seqint;

namespace {

StatisticRecipe make_recipe(const std::string& kind,
                            const std::string& phi,
                            const std::string& q,
                            const std::string& h,
                            bool h_on_control_only) {
  StatisticRecipe recipe;
  if (kind == "rct") {
    recipe.kind = RecipeKind::Rct;
  } else if (kind == "dr") {
    recipe.kind = RecipeKind::DoublyRobust;
  } else {
    throw py::value_error("recipe must be 'rct' or 'dr'");
  }
  auto parse_kind = [](const std::string& name) {
    if (name == "constant-mean") return NuisanceKind::ConstantMean;
    if (name == "least-squares") return NuisanceKind::LeastSquares;
    if (name == "ridge") return NuisanceKind::Ridge;
    if (name == "ridge-gcv") return NuisanceKind::Ridge;
    if (name == "adaptive-lasso") return NuisanceKind::AdaptiveLasso;
    if (name == "logistic") return NuisanceKind::Logistic;
    if (name == "logistic-ridge") return NuisanceKind::LogisticRidge;
    if (name == "logistic-adaptive-lasso") {
      return NuisanceKind::LogisticAdaptiveLasso;
    }
    throw py::value_error("unknown nuisance kind '" + name + "'");
  };
  recipe.phi.kind = parse_kind(phi);
  if (phi == "ridge-gcv") recipe.phi.gcv = true;
  recipe.q.kind = parse_kind(q);
  recipe.h.kind = parse_kind(h);
  recipe.h_on_control_only = h_on_control_only;
  return recipe;
}

CalibrationMethod parse_method(const std::string& name) {
  if (name == "null") return CalibrationMethod::NullSampling;
  if (name == "mboot") return CalibrationMethod::MBoot;
  if (name == "nboot") return CalibrationMethod::NBoot;
  throw py::value_error("method must be 'null', 'mboot', or 'nboot'");
}

Dataset make_dataset(const Vec& y, const Vec& a, const Mat& x,
                     std::optional<Vec> q0,
                     std::optional<std::vector<std::string>> names) {
  Dataset d;
  d.y = y;
  d.a = a;
  d.x = x;
  d.q0 = std::move(q0);
  if (names) {
    d.names = *names;
  } else {
    d.names.resize(static_cast<std::size_t>(x.cols()));
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      d.names[static_cast<std::size_t>(j)] = "x" + std::to_string(j + 1);
    }
  }
  return validate(std::move(d));
}

py::dict calibration_dict(const CalibrationResult& c) {
  py::dict out;
  out["stat_scaled"] = c.stat_scaled;
  out["sigma_hat"] = c.sigma_hat;
  out["r_hat"] = c.r_hat;
  out["m_hat"] = c.m_hat;
  out["p_value"] = c.p_value;
  out["method"] = calibration_method_name(c.method);
  out["draws_used"] = c.draws_used;
  py::list path;
  for (const auto& [m, dist] : c.ks_path) {
    path.append(py::make_tuple(m, dist));
  }
  out["ks_path"] = path;
  return out;
}

py::dict sequence_dict(const SequenceResult& result,
                       const std::vector<std::string>& names) {
  py::dict out;
  py::list steps;
  for (const StepResult& step : result.steps) {
    py::dict s;
    s["step"] = step.step_index;
    s["covariate"] = step.covariate + 1;
    s["name"] = names[static_cast<std::size_t>(step.covariate)];
    s["coef"] = step.coef;
    s["stat_scaled"] = step.stat_scaled;
    s["calibration"] = calibration_dict(step.calibration);
    s["decision"] = step.decision == StepDecision::Rejected
                        ? "rejected"
                        : "accepted-null";
    steps.append(s);
  }
  out["steps"] = steps;
  py::list final_j;
  for (int k : result.final_j) final_j.append(k + 1);
  out["final_j"] = final_j;
  out["stop_reason"] = stop_reason_name(result.stop_reason);
  return out;
}

}  // namespace

PYBIND11_MODULE(_seqint, m) {
  m.doc() = "sequential treatment-by-covariate interaction tests";

  py::register_exception<Error>(m, "SeqintError");

  py::class_<Dataset>(m, "Dataset")
      .def(py::init(&make_dataset), py::arg("y"), py::arg("a"), py::arg("x"),
           py::arg("q0") = std::nullopt, py::arg("names") = std::nullopt)
      .def_property_readonly("n", &Dataset::n)
      .def_property_readonly("p", &Dataset::p)
      .def_readonly("y", &Dataset::y)
      .def_readonly("a", &Dataset::a)
      .def_readonly("x", &Dataset::x)
      .def_readonly("names", &Dataset::names)
      .def_property_readonly("q0", [](const Dataset& d) {
        return d.q0 ? py::cast(*d.q0) : py::none();
      });

  m.def("compute_w", &compute_w, py::arg("a"), py::arg("q"),
        "W = A - q elementwise; q must lie strictly inside (0, 1).");

  m.def("center_covariate", &center_covariate, py::arg("xk"), py::arg("w"));

  m.def(
      "marginal_theta",
      [](const Vec& r, const Vec& w, const Vec& xk) {
        const CandidateStat stat = marginal_theta(r, w, xk, 0);
        py::dict out;
        out["coef"] = stat.coef;
        out["denom"] = stat.denom;
        out["criterion"] = stat.criterion;
        return out;
      },
      py::arg("r"), py::arg("w"), py::arg("xk"));

  m.def(
      "weighted_projection",
      [](const Vec& xk, const Mat& xtilde, const Vec& weights) {
        const WeightedProjection proj =
            weighted_projection(xk, xtilde, weights);
        return py::make_tuple(proj.coefs, proj.residual);
      },
      py::arg("xk"), py::arg("xtilde"), py::arg("weights"));

  m.def(
      "fit_ridge",
      [](const Mat& x, const Vec& y, double lambda, bool standardize) {
        const FittedNuisance fit = fit_ridge(x, y, lambda, standardize);
        py::dict out;
        out["intercept"] = fit.intercept;
        out["coef"] = fit.coef;
        out["lambda"] = fit.lambda_chosen;
        return out;
      },
      py::arg("x"), py::arg("y"), py::arg("lambda_") = 0.0,
      py::arg("standardize") = true);

  m.def(
      "fit_adaptive_lasso",
      [](const Mat& x, const Vec& y, double gamma, const std::string& select,
         std::uint64_t seed) {
        NuisanceSpec spec;
        spec.kind = NuisanceKind::AdaptiveLasso;
        spec.gamma = gamma;
        spec.select = select == "cv" ? LambdaSelect::Cv : LambdaSelect::Bic;
        Rng rng(seed);
        const FittedNuisance fit = fit_adaptive_lasso_linear(x, y, spec, &rng);
        py::dict out;
        out["intercept"] = fit.intercept;
        out["coef"] = fit.coef;
        out["lambda"] = fit.lambda_chosen;
        return out;
      },
      py::arg("x"), py::arg("y"), py::arg("gamma") = 1.0,
      py::arg("select") = "bic", py::arg("seed") = kDefaultSeed);

  m.def(
      "fit_logistic",
      [](const Mat& x, const Vec& y, const std::string& penalty,
         double lambda) {
        NuisanceSpec spec;
        spec.lambda = lambda;
        LogisticPenalty pen = LogisticPenalty::None;
        if (penalty == "ridge") pen = LogisticPenalty::Ridge;
        if (penalty == "adaptive-lasso") pen = LogisticPenalty::AdaptiveLasso;
        const FittedNuisance fit = fit_logistic(x, y, pen, spec);
        py::dict out;
        out["intercept"] = fit.intercept;
        out["coef"] = fit.coef;
        return out;
      },
      py::arg("x"), py::arg("y"), py::arg("penalty") = "none",
      py::arg("lambda_") = 0.0);

  m.def(
      "run_sequence",
      [](const Dataset& data, const std::string& recipe,
         const std::string& method, double alpha, int max_steps, int B,
         double d, double c, std::uint64_t seed, int workers,
         const std::string& phi, const std::string& q, const std::string& h,
         bool h_on_control_only, int fixed_steps, int m_null) {
        SequenceConfig config;
        config.recipe = make_recipe(recipe, phi, q, h, h_on_control_only);
        config.method = parse_method(method);
        config.plan.B = B;
        config.plan.d = d;
        config.plan.c = c;
        config.plan.alpha = alpha;
        config.plan.M_null = m_null;
        config.plan.seed = seed;
        config.plan.workers = workers;
        config.alpha = alpha;
        config.max_steps = max_steps;
        const SequenceResult result =
            fixed_steps > 0
                ? run_sequence_exploratory(data, config, fixed_steps)
                : run_sequence(data, config);
        return sequence_dict(result, data.names);
      },
      py::arg("dataset"), py::arg("recipe") = "rct",
      py::arg("method") = "mboot", py::arg("alpha") = 0.05,
      py::arg("max_steps") = 5, py::arg("B") = 1000, py::arg("d") = 0.8,
      py::arg("c") = 2.0, py::arg("seed") = kDefaultSeed,
      py::arg("workers") = 1, py::arg("phi") = "constant-mean",
      py::arg("q") = "logistic-adaptive-lasso",
      py::arg("h") = "adaptive-lasso", py::arg("h_on_control_only") = true,
      py::arg("fixed_steps") = 0, py::arg("m_null") = 10000,
      "Forward-stepwise interaction test; returns the step table as dicts.");

  m.def(
      "generate",
      [](const std::string& name, std::uint64_t seed, bool attach_q0,
         std::optional<int> n) {
        Scenario scenario = canonical_scenario(name);
        if (n) scenario.n = *n;
        Rng rng(seed);
        return generate(scenario, rng, attach_q0);
      },
      py::arg("scenario"), py::arg("seed") = kDefaultSeed,
      py::arg("attach_q0") = true, py::arg("n") = std::nullopt,
      "Draw one dataset from a canonical scenario (n1, s1, s2, d1, d2, ...).");

  m.def(
      "mc_study",
      [](const std::string& scenario_name,
         const std::vector<std::string>& methods, int reps, int eval_steps,
         int B, double alpha, std::uint64_t seed, int workers) {
        const Scenario scenario = canonical_scenario(scenario_name);
        std::vector<MethodSpec> specs;
        for (const std::string& name : methods) {
          MethodSpec spec;
          spec.name = name;
          spec.recipe.kind = RecipeKind::Rct;
          spec.recipe.phi.kind = NuisanceKind::ConstantMean;
          if (name == "bonf") {
            spec.kind = MethodSpec::Kind::Bonferroni;
          } else if (name == "lrt") {
            spec.kind = MethodSpec::Kind::Lrt;
          } else {
            spec.kind = MethodSpec::Kind::Sequential;
            spec.method = parse_method(name);
          }
          specs.push_back(std::move(spec));
        }
        BootstrapPlan plan;
        plan.B = B;
        plan.alpha = alpha;
        plan.seed = seed;
        const McReport report =
            mc_study(scenario, specs, reps, plan, eval_steps, workers);
        py::dict out;
        out["scenario"] = report.scenario.name;
        out["reps"] = report.reps;
        out["failed_reps"] = report.failed_reps;
        py::list method_list;
        for (const MethodReport& method : report.methods) {
          py::dict md;
          md["name"] = method.name;
          py::list steps;
          for (std::size_t s = 0; s < method.steps.size(); ++s) {
            const StepCell& cell = method.steps[s];
            py::dict cd;
            cd["step"] = s + 1;
            cd["executed"] = cell.executed;
            cd["rejected"] = cell.rejected;
            cd["rate"] = cell.rate();
            cd["se"] = cell.se();
            cd["null_rate"] = cell.null_rate();
            cd["power_rate"] = cell.power_rate();
            cd["selection_accuracy"] = cell.selection_accuracy();
            steps.append(cd);
          }
          md["steps"] = steps;
          method_list.append(md);
        }
        out["methods"] = method_list;
        return out;
      },
      py::arg("scenario"), py::arg("methods"), py::arg("reps") = 200,
      py::arg("eval_steps") = 1, py::arg("B") = 200, py::arg("alpha") = 0.05,
      py::arg("seed") = kDefaultSeed, py::arg("workers") = 1,
      "Monte Carlo rejection-rate study over canonical scenarios.");

  m.attr("__version__") = "0.1.0";
}
