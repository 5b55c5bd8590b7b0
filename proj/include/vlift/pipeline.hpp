#pragma once

// Experiment stages shared by the command-line runner and the acceptance
// harness. Every stage appends checks to the report and leaves its artifacts
// as strings, so runs can be compared byte for byte.

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vlift/bsde.hpp"
#include "vlift/config.hpp"
#include "vlift/control.hpp"
#include "vlift/csv.hpp"
#include "vlift/forward.hpp"
#include "vlift/kernels.hpp"
#include "vlift/statespace.hpp"

namespace vlift {

struct Check {
  std::string stage;
  std::string name;
  bool pass = true;
  /// Informational checks are reported but do not fail the run.
  bool assertion = true;
  double value = 0.0;
  double threshold = 0.0;
  std::string detail;
};

struct RunOptions {
  int workers = 1;
  /// Relative lift/oracle discrepancy allowed by oracle-compare.
  double tolerance = 1e-2;
  int oracle_paths = 100;
  int hjb_probes = 16;
  int hjb_steps = 10;
};

class Pipeline {
 public:
  Pipeline(ExperimentConfig config, RunOptions opts)
      : cfg_(std::move(config)),
        opts_(opts),
        space_(config_space(cfg_)),
        problem_(config_problem(cfg_)),
        x0_(config_initial_state(cfg_, space_)),
        hash_(config_hash(cfg_.source)) {
    cfg_.bsde.workers = opts_.workers;
    sections_ = nlohmann::json::object();
  }

  const ExperimentConfig& config() const noexcept { return cfg_; }
  const LiftedSpace& space() const noexcept { return space_; }
  const ControlProblem& problem() const noexcept { return problem_; }
  const State& initial_state() const noexcept { return x0_; }
  const std::string& hash() const noexcept { return hash_; }
  const std::vector<Check>& checks() const noexcept { return checks_; }
  const std::map<std::string, std::string>& files() const noexcept { return files_; }

  bool ok() const {
    for (const auto& c : checks_) {
      if (c.assertion && !c.pass) return false;
    }
    return true;
  }

  void kernel_check() {
    const auto a = alpha_index(cfg_.kernel);
    const auto exps = a.smoothing_condition ? std::optional(select_exponents(a.alpha)) : std::nullopt;
    const auto cm = check_shifted_cm(cfg_.kernel, 0.0);
    const double sigma = space_.kappa().minCoeff();
    const auto lifted_cm = check_shifted_cm(make_discrete(space_.measure().nodes(), space_.measure().weights()), sigma);
    const double omega = spectral_bound(space_);
    add("kernel-check", "alpha_gt_half", a.smoothing_condition, a.alpha, 0.5, "", false);
    add("kernel-check", "lifted_shifted_cm", lifted_cm.pass, sigma, 0.0, "sigma = smallest node", false);
    add("kernel-check", "spectral_bound_negative", omega < 0.0, omega, 0.0, "", false);
    nlohmann::json j = {{"alpha", a.alpha},
                        {"alpha_gt_half", a.smoothing_condition},
                        {"kernel_cm", cm.pass},
                        {"lifted_sigma", sigma},
                        {"lifted_shifted_cm", lifted_cm.pass},
                        {"spectral_bound", omega}};
    if (exps) j["exponents"] = {{"eta", exps->eta}, {"theta", exps->theta}};
    sections_["kernel_check"] = j;
  }

  void fit() {
    nlohmann::json j = {{"nodes", space_.measure().nodes()}, {"weights", space_.measure().weights()}};
    if (cfg_.discretization) {
      const auto& d = *cfg_.discretization;
      const auto rep = discretize(cfg_.kernel, d.n, d.kappa_min, d.kappa_max);
      j["sup_rel_error"] = rep.sup_rel_error;
      j["l1_error"] = rep.l1_error;
      j["t_window"] = {rep.t_window.first, rep.t_window.second};
      add("fit", "fit_sup_rel_error", true, rep.sup_rel_error, 0.0, "window [1/kmax, 1/kmin]", false);
    } else {
      j["exact"] = true;
    }
    sections_["fit"] = j;
  }

  void simulate() {
    SimulationOptions o;
    o.workers = opts_.workers;
    const auto b = vlift::simulate(space_, problem_, Policy::uncontrolled(), x0_, cfg_.scheme.T, cfg_.scheme.dt,
                                   cfg_.scheme.paths, cfg_.seed, o);
    std::ostringstream os;
    write_paths_csv(os, b, hash_, false);
    files_["paths.csv"] = os.str();
    const double err = output_consistency_error(space_, b);
    add("simulate", "output_consistency", err <= 1e-12, err, 1e-12);
    const double m = moment_estimate(b, space_, 0.25, 2.0);
    add("simulate", "moment_finite", std::isfinite(m), m, 0.0);
    sections_["simulate"] = bundle_summary(b);
    sections_["simulate"]["moment_eta_0.25_p_2"] = m;
  }

  void oracle_compare() {
    const auto family = make_discrete(space_.measure().nodes(), space_.measure().weights());
    const int paths = std::min(cfg_.scheme.paths, opts_.oracle_paths);
    // The oracle starts from the history value at 0, so the lift does too.
    SimulationOptions o;
    o.workers = opts_.workers;
    o.initial_output = history_value(cfg_.history, 0.0);
    const auto b = vlift::simulate(space_, problem_, Policy::uncontrolled(), x0_, cfg_.scheme.T, cfg_.scheme.dt, paths,
                                   cfg_.seed, o);
    std::vector<double> worst(b.steps() + 1, 0.0);
    std::vector<std::vector<Vector>> oracle(paths);
    parallel_for(static_cast<std::size_t>(paths), opts_.workers, [&](std::size_t p) {
      oracle[p] = oracle_solve(family, space_.A(), problem_, cfg_.history, b.increments(static_cast<int>(p)), {},
                               cfg_.scheme.T, cfg_.scheme.dt);
    });
    double max_u = 0.0, max_diff = 0.0;
    for (int p = 0; p < paths; ++p) {
      for (int k = 0; k <= b.steps(); ++k) {
        const Vector lift = b.output(p, k);
        const double diff = (lift - oracle[p][k]).lpNorm<Eigen::Infinity>();
        worst[k] = std::max(worst[k], diff);
        max_diff = std::max(max_diff, diff);
        max_u = std::max(max_u, lift.lpNorm<Eigen::Infinity>());
      }
    }
    std::ostringstream os;
    CsvWriter w(os);
    w.row({"t", "max_abs_discrepancy", "config_hash", "seed"});
    for (int k = 0; k <= b.steps(); ++k) {
      w.row({csv_number(b.time(k)), csv_number(worst[k]), hash_, std::to_string(cfg_.seed)});
    }
    files_["oracle_compare.csv"] = os.str();
    const double limit = opts_.tolerance * std::max(max_u, 1e-300);
    add("oracle-compare", "lift_vs_oracle", max_diff <= limit, max_diff, limit,
        std::to_string(paths) + " paths, shared noise");
    sections_["oracle_compare"] = {{"paths", paths}, {"max_discrepancy", max_diff}, {"max_abs_u", max_u}};
  }

  const BsdeSolution& solution() {
    if (!solution_) {
      solution_ = std::make_shared<const BsdeSolution>(solve_truncated(space_, problem_, x0_, cfg_.bsde, cfg_.seed));
    }
    return *solution_;
  }

  void solve_bsde() {
    const auto& sol = solution();
    files_["bsde_solution.json"] = with_provenance(to_json(sol)).dump(1) + "\n";
    add("solve-bsde", "value_bound_violations", sol.diagnostics.violation_fraction() < 0.01,
        sol.diagnostics.violation_fraction(), 0.01, "pre-clamp |Y| > M/lambda");
    add("solve-bsde", "psi_constants_certified", sol.constants_certified, sol.K, problem_.r.bound);
    add("solve-bsde", "y0_within_bound", std::abs(sol.y0) <= sol.bound(), std::abs(sol.y0), sol.bound());
    nlohmann::json j = {{"y0", sol.y0},         {"y0_std_error", sol.y0_std_error}, {"M", sol.M},
                        {"K", sol.K},           {"certificate", sol.certificate},   {"z0", sol.z0},
                        {"max_condition", sol.diagnostics.max_condition}};
    if (cfg_.horizons.size() >= 3) {
      const auto tr = truncation_study(space_, problem_, x0_, cfg_.horizons, cfg_.bsde, cfg_.seed);
      add("solve-bsde", "truncation_within_certificate", tr.within_certificate, tr.slope, -problem_.lambda,
          tr.degenerate ? tr.note : "value = fitted slope");
      j["truncation"] = {{"horizons", tr.horizons},       {"y0", tr.y0},       {"differences", tr.differences},
                         {"certificates", tr.certificates}, {"slope", tr.slope}, {"degenerate", tr.degenerate}};
    }
    sections_["solve_bsde"] = j;
  }

  void verify_hjb() {
    const auto rep = verify_mild_hjb(space_, problem_, cfg_.bsde, x0_, opts_.hjb_steps * cfg_.bsde.dt, cfg_.seed,
                                     opts_.hjb_probes);
    add("verify-hjb", "mild_hjb_residual", rep.pass, rep.residual, 3.0 * rep.std_error + 2.0 * rep.certificate);
    sections_["verify_hjb"] = {{"lhs", rep.lhs},           {"rhs", rep.rhs},     {"residual", rep.residual},
                               {"std_error", rep.std_error}, {"probes", rep.probes}, {"check_steps", rep.check_steps}};
  }

  void synthesize() {
    const auto& sol = solution();
    auto cands = constant_candidates(problem_.controls, cfg_.control.constants);
    cands.emplace_back("feedback", feedback_policy(space_, problem_, solution_));
    FundamentalBudget budget{cfg_.control.T, cfg_.control.dt, cfg_.control.paths, opts_.workers};
    const auto rep = fundamental_relation_check(space_, problem_, sol, x0_, cands, budget, cfg_.seed);
    std::ostringstream os;
    CsvWriter w(os);
    w.row({"candidate", "J", "std_error", "tail_bound", "epsilon", "verdict", "config_hash", "seed"});
    for (const auto& c : rep.candidates) {
      w.row({c.name, csv_number(c.cost.J), csv_number(c.cost.std_error), csv_number(c.cost.tail_bound),
             csv_number(c.epsilon), c.above_value ? "pass" : "fail", hash_, std::to_string(cfg_.seed)});
    }
    w.row({"value", csv_number(rep.v), csv_number(rep.v_std_error), csv_number(rep.certificate), "", "", hash_,
           std::to_string(cfg_.seed)});
    files_["cost_report.csv"] = os.str();
    add("synthesize", "value_below_every_cost", rep.value_inequality, rep.v, rep.min_J);
    const double fb = rep.feedback_index >= 0 ? rep.candidates[rep.feedback_index].cost.J : 0.0;
    add("synthesize", "feedback_attains_minimum", rep.feedback_optimal, fb, rep.min_J);
    sections_["synthesize"] = {{"v", rep.v}, {"min_J", rep.min_J}, {"feedback_J", fb}};
  }

  void all() {
    kernel_check();
    fit();
    simulate();
    oracle_compare();
    solve_bsde();
    verify_hjb();
    synthesize();
  }

  nlohmann::json verdicts() const {
    nlohmann::json checks = nlohmann::json::array();
    for (const auto& c : checks_) {
      checks.push_back({{"stage", c.stage},
                        {"name", c.name},
                        {"pass", c.pass},
                        {"assertion", c.assertion},
                        {"value", c.value},
                        {"threshold", c.threshold},
                        {"detail", c.detail}});
    }
    return with_provenance({{"ok", ok()}, {"checks", checks}, {"sections", sections_}});
  }

  /// All artifacts including verdicts.json.
  std::map<std::string, std::string> artifacts() const {
    auto out = files_;
    out["verdicts.json"] = verdicts().dump(1) + "\n";
    return out;
  }

 private:
  nlohmann::json with_provenance(nlohmann::json j) const {
    j["config_hash"] = hash_;
    j["seed"] = cfg_.seed;
    j["scenario"] = cfg_.name;
    return j;
  }

  void add(std::string stage, std::string name, bool pass, double value, double threshold, std::string detail = "",
           bool assertion = true) {
    checks_.push_back({std::move(stage), std::move(name), pass, assertion, value, threshold, std::move(detail)});
  }

  ExperimentConfig cfg_;
  RunOptions opts_;
  LiftedSpace space_;
  ControlProblem problem_;
  State x0_;
  std::string hash_;
  std::shared_ptr<const BsdeSolution> solution_;
  std::vector<Check> checks_;
  std::map<std::string, std::string> files_;
  nlohmann::json sections_;
};

}  // namespace vlift
