#include "abelscale/cli.hpp"

#include <cmath>
#include <iostream>
#include <memory>

#include <CLI11.hpp>
#include <json.hpp>

#include "abelscale/diagnostics.hpp"
#include "abelscale/error.hpp"
#include "abelscale/hilbert_scale.hpp"
#include "abelscale/io.hpp"
#include "abelscale/operators.hpp"
#include "abelscale/solver.hpp"
#include "abelscale/tuning.hpp"
#include "abelscale/version.hpp"

namespace abelscale {

using nlohmann::json;

namespace {

const char* command_name(Command c) {
  switch (c) {
    case Command::Forward: return "forward";
    case Command::Invert: return "invert";
    case Command::RateStudy: return "rate-study";
    case Command::DiagnoseKernel: return "diagnose-kernel";
    case Command::MakeMatrix: return "make-matrix";
  }
  return "unknown";
}

int scale_index(const RunConfig& c) {
  return c.r.value_or(std::max(1, static_cast<int>(std::ceil(c.a - 1e-12))));
}

json echo_config(const RunConfig& c) {
  json j;
  j["command"] = command_name(c.command);
  j["a"] = c.a;
  j["r"] = scale_index(c);
  j["p"] = c.p;
  j["n"] = c.n;
  j["kernel"] = c.kernel;
  j["kernel_file"] = c.kernel_file;
  j["alpha_rule"] = c.alpha ? "fixed" : c.alpha_rule;
  j["alpha"] = c.alpha ? json(*c.alpha) : json(nullptr);
  j["apriori_c"] = c.apriori_c;
  j["q"] = c.q;
  j["tau"] = c.tau;
  j["quiet_prefix"] = c.quiet_prefix;
  j["delta"] = c.delta;
  j["seed"] = c.seed;
  j["solver"] = c.solver;
  j["cg_tol"] = c.cg_tol;
  j["cg_max_iter"] = c.cg_max_iter;
  j["input"] = c.input;
  j["truth"] = c.truth;
  j["output"] = c.output;
  j["summary"] = c.summary;
  j["plan"] = c.plan;
  j["matrix"] = c.matrix;
  j["fine_n"] = c.fine_n;
  j["samples"] = c.samples;
  j["max_nodes"] = c.max_nodes;
  return j;
}

json base_summary(const RunConfig& c, const std::vector<std::string>& warnings) {
  json j;
  j["version"] = kVersion;
  j["config"] = echo_config(c);
  j["warnings"] = warnings;
  return j;
}

void emit_summary(const RunConfig& c, const json& summary) {
  const std::string text = summary.dump(2) + "\n";
  if (c.summary.empty()) {
    std::cout << text;
  } else {
    write_file_atomic(c.summary, text);
  }
}

Kernel make_kernel(const RunConfig& c) {
  if (c.kernel == "constant") return Kernel::constant();
  if (c.kernel == "stereology") return Kernel::stereology();
  if (c.kernel == "file") {
    if (c.kernel_file.empty()) throw ValidationError("--kernel file needs --kernel-file");
    return read_kernel_table(c.kernel_file);
  }
  throw ValidationError("unknown kernel '" + c.kernel + "'");
}

// The series must sample t_i = i / n.
Grid grid_of(const Series& s, const RunConfig& c, const std::string& what) {
  const Grid grid(static_cast<int>(s.t.size()), c.max_nodes);
  for (Eigen::Index i = 0; i < s.t.size(); ++i)
    if (std::abs(s.t[i] - grid.node(static_cast<int>(i))) > 1e-9)
      throw ValidationError(what + " must sample t_i = i/n on [0, 1); row " + std::to_string(i) +
                            " has t = " + format_double(s.t[i]));
  return grid;
}

std::vector<std::string> check_scale(const RunConfig& c, int r) {
  std::vector<std::string> warnings;
  if (r < static_cast<int>(std::ceil(c.a - 1e-12)))
    warnings.push_back("r = " + std::to_string(r) + " is below ceil(a); the scale may not match the operator order");
  if (r > 3) warnings.push_back("r > 3 uses experimental boundary closures");
  return warnings;
}

void report_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
}

int run_forward(const RunConfig& c) {
  if (c.input.empty()) throw ValidationError("forward needs --input");
  const Series x = read_series_csv(c.input);
  const Grid grid = grid_of(x, c, "input");
  const ForwardOperator op = build_abel_matrix(c.a, grid, make_kernel(c));
  Eigen::VectorXd y = apply_forward(op, x.value);
  if (c.delta > 0.0) y = add_noise(y, {c.delta, c.seed});
  if (!c.output.empty()) write_series_csv(c.output, grid.nodes(), y);
  json s = base_summary(c, {});
  s["n"] = grid.size();
  s["output_norm"] = weighted_norm(y, grid);
  emit_summary(c, s);
  return kExitOk;
}

int run_invert(const RunConfig& c) {
  if (c.input.empty()) throw ValidationError("invert needs --input");
  const Series data = read_series_csv(c.input);
  const Grid grid = grid_of(data, c, "input");
  const int r = scale_index(c);
  std::vector<std::string> warnings = check_scale(c, r);
  report_warnings(warnings);

  auto forward = std::make_shared<const ForwardOperator>(build_abel_matrix(c.a, grid, make_kernel(c)));
  auto penalty = std::make_shared<const PenaltyMatrix>(build_penalty(r, c.p, grid));
  Eigen::VectorXd y = data.value;
  if (c.delta > 0.0) y = add_noise(y, {c.delta, c.seed});
  const NormalEquations system(forward, penalty, y);

  std::optional<Eigen::VectorXd> truth;
  if (!c.truth.empty()) {
    const Series t = read_series_csv(c.truth);
    if (t.value.size() != grid.size()) throw ValidationError("--truth has a different length than --input");
    truth = t.value;
  }
  const std::string solver = c.solver.empty()
                                 ? (grid.size() <= kDirectSolverMaxNodes ? "direct" : "cg")
                                 : c.solver;
  if (solver != "direct" && solver != "cg") throw ValidationError("unknown solver '" + solver + "'");
  auto solve = [&](double alpha) {
    return solver == "cg" ? system.solve_cg(alpha, c.cg_tol, c.cg_max_iter) : system.solve_direct(alpha);
  };
  const int prefix = c.quiet_prefix > 0 ? c.quiet_prefix : grid.size() / 10;

  json s = base_summary(c, {});
  Reconstruction rec;
  double alpha = 0.0;
  const AlphaRule rule = c.alpha ? AlphaRule::Fixed : alpha_rule_from_string(c.alpha_rule);
  switch (rule) {
    case AlphaRule::Fixed:
      if (!c.alpha) throw ValidationError("the fixed rule needs --alpha");
      alpha = *c.alpha;
      rec = solve(alpha);
      break;
    case AlphaRule::Oracle: {
      if (!truth) throw ValidationError("the oracle rule needs --truth");
      OracleChoice choice = oracle_alpha(system, *truth);
      alpha = choice.alpha;
      rec = std::move(choice.reconstruction);
      break;
    }
    case AlphaRule::Discrepancy: {
      DiscrepancyChoice choice = discrepancy_alpha(system, prefix, c.tau);
      alpha = choice.alpha;
      rec = std::move(choice.reconstruction);
      s["delta_hat"] = choice.delta_hat;
      s["discrepancy_target"] = choice.target;
      s["discrepancy_satisfied"] = choice.satisfied;
      break;
    }
    case AlphaRule::Apriori: {
      double delta = c.delta;
      if (!(delta > 0.0)) {
        delta = estimate_noise_level(y, prefix);
        s["delta_hat"] = delta;
      }
      const double q = c.q > 0.0 ? c.q : 2.0 * c.p + c.a;
      alpha = apriori_alpha(delta, c.a, c.p, q, c.apriori_c);
      rec = solve(alpha);
      break;
    }
  }
  warnings.insert(warnings.end(), rec.warnings.begin(), rec.warnings.end());
  if (!c.output.empty()) write_series_csv(c.output, grid.nodes(), rec.x);

  s["warnings"] = warnings;
  s["alpha"] = alpha;
  s["alpha_rule"] = to_string(rule);
  s["residual_norm"] = rec.residual_norm;
  s["penalty_value"] = rec.penalty_value;
  s["normal_residual"] = rec.normal_residual;
  s["solver"] = to_string(rec.solver_id);
  s["iterations"] = rec.iterations;
  s["converged"] = rec.converged;
  s["ridge"] = rec.ridge;
  if (truth) s["error"] = weighted_norm(rec.x - *truth, grid);
  emit_summary(c, s);
  return rec.converged ? kExitOk : kExitNumerical;
}

TestFunction test_function_from(const json& j) {
  if (j.is_null()) return TestFunction::centered_gaussian();
  const std::string kind = j.value("kind", "centered-gaussian");
  const double sigma = j.value("sigma", 0.05);
  if (kind == "centered-gaussian") return TestFunction::centered_gaussian(j.value("center", 0.5), sigma);
  if (kind == "off-center-gaussian") return TestFunction::off_center_gaussian(j.value("center", 0.2), sigma);
  throw ValidationError("unknown test function '" + kind + "'");
}

RatePlan plan_from(const json& j, const RunConfig& c) {
  RatePlan plan;
  plan.a = j.value("a", 1.0);
  plan.r = j.contains("r") ? j.at("r").get<int>() : std::max(1, static_cast<int>(std::ceil(plan.a - 1e-12)));
  plan.p = j.value("p", 1.0);
  if (j.contains("q") && !j.at("q").is_null()) plan.q = j.at("q").get<double>();
  plan.test_function = test_function_from(j.value("test_function", json()));
  plan.deltas = j.contains("deltas") ? j.at("deltas").get<std::vector<double>>() : default_deltas();
  plan.replicates = j.value("replicates", 5);
  plan.alpha_rule = alpha_rule_from_string(j.value("alpha_rule", std::string("oracle")));
  plan.n = j.value("n", 100);
  plan.seed = j.value("seed", std::uint64_t{0});
  const std::string solver = j.value("solver", std::string("direct"));
  if (solver != "direct" && solver != "cg") throw ValidationError("unknown solver '" + solver + "'");
  plan.solver = solver == "cg" ? SolverId::Cg : SolverId::Direct;
  const std::string kernel = j.value("kernel", std::string("constant"));
  RunConfig kc = c;
  kc.kernel = kernel;
  kc.kernel_file = j.value("kernel_file", std::string());
  plan.kernel = make_kernel(kc);
  plan.fixed_alpha = j.value("alpha", plan.fixed_alpha);
  plan.apriori_c = j.value("apriori_c", plan.apriori_c);
  plan.tau = j.value("tau", plan.tau);
  plan.quiet_prefix_len = j.value("quiet_prefix", 0);
  plan.threads = j.value("threads", 0);
  plan.sweep.alpha_min = j.value("alpha_min", plan.sweep.alpha_min);
  plan.sweep.alpha_max = j.value("alpha_max", plan.sweep.alpha_max);
  plan.sweep.step_factor = j.value("step_factor", plan.sweep.step_factor);
  plan.sweep.patience = j.value("patience", plan.sweep.patience);
  if (plan.n > c.max_nodes) throw ValidationError("plan grid exceeds --max-nodes");
  return plan;
}

json plan_to_json(const RatePlan& p) {
  json j;
  j["a"] = p.a;
  j["r"] = p.r;
  j["p"] = p.p;
  j["q"] = p.q ? json(*p.q) : json(nullptr);
  j["test_function"] = {{"kind", p.test_function.name},
                        {"center", p.test_function.center},
                        {"sigma", p.test_function.sigma}};
  j["deltas"] = p.deltas;
  j["replicates"] = p.replicates;
  j["alpha_rule"] = to_string(p.alpha_rule);
  j["n"] = p.n;
  j["seed"] = p.seed;
  j["solver"] = to_string(p.solver);
  j["kernel"] = p.kernel.name();
  j["alpha"] = p.fixed_alpha;
  j["apriori_c"] = p.apriori_c;
  j["tau"] = p.tau;
  j["quiet_prefix"] = p.quiet_prefix_len;
  j["alpha_min"] = p.sweep.alpha_min;
  j["alpha_max"] = p.sweep.alpha_max;
  j["step_factor"] = p.sweep.step_factor;
  j["patience"] = p.sweep.patience;
  return j;
}

void write_rate_outputs(const RunConfig& c, const RatePlan& plan, const RateStudyResult& res,
                        const std::string& error) {
  if (!c.output.empty()) {
    std::string csv = "delta,mean_error,std_error,alpha\n";
    for (const RatePoint& pt : res.points)
      csv += format_double(pt.delta) + "," + format_double(pt.mean_error) + "," +
             format_double(pt.std_error) + "," + format_double(pt.mean_alpha) + "\n";
    write_file_atomic(c.output, csv);
  }
  std::vector<std::string> warnings = res.warnings;
  if (plan.r < static_cast<int>(std::ceil(plan.a - 1e-12)))
    warnings.push_back("r is below ceil(a); the scale may not match the operator order");
  json s = base_summary(c, warnings);
  s["plan"] = plan_to_json(plan);
  s["complete"] = res.complete;
  if (!error.empty()) s["error"] = error;
  if (res.points.size() >= 4) {
    s["fitted_slope"] = res.fit.slope;
    s["intercept"] = res.fit.intercept;
    s["r_squared"] = res.fit.r_squared;
  }
  s["theoretical_slope"] = res.theory.slope;
  s["q_effective"] = res.theory.q_effective;
  s["p_star"] = res.theory.p_star ? json(*res.theory.p_star) : json(nullptr);
  s["saturated"] = res.theory.saturated;
  s["alpha_trace"] = res.alpha_trace;
  emit_summary(c, s);
}

int run_rate_study(const RunConfig& c) {
  if (c.plan.empty()) throw ValidationError("rate-study needs a plan file");
  json j;
  try {
    j = json::parse(read_file(c.plan));
  } catch (const json::exception& e) {
    throw ValidationError("cannot parse plan '" + c.plan + "': " + e.what());
  }
  RatePlan plan;
  try {
    plan = plan_from(j, c);
  } catch (const json::exception& e) {
    throw ValidationError("invalid plan '" + c.plan + "': " + e.what());
  }
  try {
    const RateStudyResult res = rate_study(plan);
    report_warnings(res.warnings);
    write_rate_outputs(c, plan, res, "");
  } catch (const RateStudyAborted& e) {
    write_rate_outputs(c, plan, e.partial(), e.what());
    throw;
  }
  return kExitOk;
}

int run_diagnose(const RunConfig& c) {
  const Kernel kernel = make_kernel(c);
  const Grid fine(c.fine_n, std::max(c.fine_n, c.max_nodes));
  const ResidualKernelReport rep = hs_condition_check(kernel, c.a, fine);
  if (!c.samples.empty()) {
    std::string csv = "t,s,h\n";
    const Eigen::MatrixXd& h = rep.samples.h;
    for (int i = 0; i < fine.size(); ++i)
      for (int j = 1; j + rep.samples.band <= i; ++j)
        csv += format_double(fine.node(i)) + "," + format_double(fine.node(j)) + "," +
               format_double(h(i, j)) + "\n";
    write_file_atomic(c.samples, csv);
  }
  json s = base_summary(c, rep.flags);
  auto finite_or_null = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  s["a"] = rep.a;
  s["kernel"] = kernel.name();
  s["fine_n"] = rep.fine_n;
  s["hs_norm_estimate"] = finite_or_null(rep.hs_norm_estimate);
  s["hs_norm_infinite"] = std::isinf(rep.hs_norm_estimate);
  s["band_bound"] = finite_or_null(rep.band_bound);
  s["coarse_estimate"] = finite_or_null(rep.coarse_estimate);
  s["refinement_stable"] = rep.refinement_stable;
  s["condition_met"] = to_string(rep.condition_met);
  s["flags"] = rep.flags;
  s["notes"] = rep.notes;
  if (c.output.empty()) {
    emit_summary(c, s);
  } else {
    write_file_atomic(c.output, s.dump(2) + "\n");
    if (!c.summary.empty()) emit_summary(c, s);
  }
  return kExitOk;
}

int run_make_matrix(const RunConfig& c) {
  if (c.output.empty()) throw ValidationError("make-matrix needs --output");
  const Grid grid(c.n, c.max_nodes);
  const int r = scale_index(c);
  json meta = base_summary(c, check_scale(c, r));
  meta["r"] = r;
  meta["n"] = c.n;
  if (c.matrix == "B") {
    const ScaleOperator b = build_scale_operator(r, grid);
    write_matrix_csv(c.output, b.matrix());
    meta["matrix"] = "B";
    meta["p"] = nullptr;
    meta["experimental"] = b.experimental();
  } else if (c.matrix == "P") {
    const PenaltyMatrix p = build_penalty(r, c.p, grid);
    write_matrix_csv(c.output, p.matrix());
    meta["matrix"] = "P";
    meta["p"] = c.p;
    meta["experimental"] = p.experimental();
  } else {
    throw ValidationError("unknown matrix '" + c.matrix + "' (expected B or P)");
  }
  const std::string sidecar = c.summary.empty() ? c.output + ".json" : c.summary;
  write_file_atomic(sidecar, meta.dump(2) + "\n");
  return kExitOk;
}

}  // namespace

int run(const RunConfig& config) {
  try {
    switch (config.command) {
      case Command::Forward: return run_forward(config);
      case Command::Invert: return run_invert(config);
      case Command::RateStudy: return run_rate_study(config);
      case Command::DiagnoseKernel: return run_diagnose(config);
      case Command::MakeMatrix: return run_make_matrix(config);
    }
    throw ValidationError("unknown command");
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitIo;
  }
}

int main_entry(int argc, char** argv) {
  CLI::App app{"Tikhonov inversion of Abel integral operators in adapted Hilbert scales"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  RunConfig c;
  int r = 0;
  double alpha = 0.0;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--max-nodes", c.max_nodes, "Upper bound on the grid size")->capture_default_str();
    sub->add_option("--summary", c.summary, "Summary JSON path (default: standard output)");
  };
  auto kernel_opts = [&](CLI::App* sub) {
    sub->add_option("--kernel", c.kernel, "Kernel k(t,s)")
        ->check(CLI::IsMember({"constant", "stereology", "file"}))
        ->capture_default_str();
    sub->add_option("--kernel-file", c.kernel_file, "CSV table t,s,value for --kernel file");
  };

  auto* fwd = app.add_subcommand("forward", "Apply the discretized Abel operator to a sampled signal");
  fwd->add_option("--a", c.a, "Abel order a > 0")->capture_default_str();
  kernel_opts(fwd);
  fwd->add_option("--input", c.input, "Input CSV t,value sampling t_i = i/n")->required();
  fwd->add_option("--output", c.output, "Output CSV t,value");
  fwd->add_option("--delta", c.delta, "Standard deviation of added Gaussian noise")->capture_default_str();
  fwd->add_option("--seed", c.seed, "Noise seed")->capture_default_str();
  common(fwd);

  auto* inv = app.add_subcommand("invert", "Reconstruct a signal by Tikhonov regularization");
  inv->add_option("--a", c.a, "Abel order a > 0")->capture_default_str();
  inv->add_option("--r", r, "Scale index (default ceil(a))");
  inv->add_option("--p", c.p, "Penalty order p >= 0")->capture_default_str();
  inv->add_option("--alpha", alpha, "Fixed regularization parameter (implies --alpha-rule fixed)");
  inv->add_option("--alpha-rule", c.alpha_rule, "Parameter choice rule")
      ->check(CLI::IsMember({"fixed", "oracle", "discrepancy", "apriori"}))
      ->capture_default_str();
  kernel_opts(inv);
  inv->add_option("--input", c.input, "Data CSV t,value")->required();
  inv->add_option("--output", c.output, "Reconstruction CSV t,value");
  inv->add_option("--truth", c.truth, "True signal CSV, required by the oracle rule");
  inv->add_option("--solver", c.solver, "Linear solver (default: direct up to 2000 nodes)")
      ->check(CLI::IsMember({"direct", "cg"}));
  inv->add_option("--cg-tol", c.cg_tol, "CG relative tolerance")->capture_default_str();
  inv->add_option("--cg-max-iter", c.cg_max_iter, "CG iteration limit")->capture_default_str();
  inv->add_option("--delta", c.delta,
                  "Noise level: added to the data when positive, and used by the apriori rule")
      ->capture_default_str();
  inv->add_option("--seed", c.seed, "Noise seed")->capture_default_str();
  inv->add_option("--tau", c.tau, "Discrepancy factor")->capture_default_str();
  inv->add_option("--quiet-prefix", c.quiet_prefix, "Samples used to estimate the noise (default n/10)");
  inv->add_option("--apriori-c", c.apriori_c, "Constant C of the a-priori rule")->capture_default_str();
  inv->add_option("--q", c.q, "Smoothness of the truth for the a-priori rule (default 2p + a)");
  common(inv);

  auto* rs = app.add_subcommand("rate-study", "Measure convergence rates over noise levels");
  rs->add_option("plan", c.plan, "JSON plan file")->required();
  rs->add_option("--output", c.output, "Points CSV delta,mean_error,std_error,alpha");
  common(rs);

  auto* dk = app.add_subcommand("diagnose-kernel", "Check the Hilbert-Schmidt condition on the residual kernel");
  dk->add_option("--a", c.a, "Abel order a > 0")->capture_default_str();
  kernel_opts(dk);
  dk->add_option("--fine-n", c.fine_n, "Fine grid size")->capture_default_str();
  dk->add_option("--output", c.output, "Report JSON (default: standard output)");
  dk->add_option("--samples", c.samples, "CSV t,s,h of the sampled residual kernel");
  common(dk);

  auto* mm = app.add_subcommand("make-matrix", "Export a scale operator or penalty matrix");
  mm->add_option("--matrix", c.matrix, "B (scale operator) or P (penalty)")
      ->check(CLI::IsMember({"B", "P"}))
      ->capture_default_str();
  mm->add_option("--r", r, "Scale index")->required();
  mm->add_option("--p", c.p, "Penalty order for --matrix P")->capture_default_str();
  mm->add_option("--n", c.n, "Grid size")->capture_default_str();
  mm->add_option("--output", c.output, "Matrix CSV, row-major")->required();
  common(mm);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  const std::vector<std::pair<CLI::App*, Command>> commands = {
      {fwd, Command::Forward}, {inv, Command::Invert}, {rs, Command::RateStudy},
      {dk, Command::DiagnoseKernel}, {mm, Command::MakeMatrix}};
  for (const auto& [sub, cmd] : commands) {
    if (!sub->parsed()) continue;
    c.command = cmd;
    const auto given = [sub](const char* name) {
      const CLI::Option* opt = sub->get_option_no_throw(name);
      return opt != nullptr && opt->count() > 0;
    };
    if (given("--r")) c.r = r;
    if (given("--alpha")) c.alpha = alpha;
  }
  return run(c);
}

}  // namespace abelscale
