// shortcut_lab: command-line front end for the shortcut-learning laboratory.
//
// Exit codes: 0 success, 2 usage error, 3 numerical failure.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "shortcut/experiments.hpp"

namespace {

using namespace shortcut;

constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;

struct GlobalOptions {
  std::uint64_t seed = kDefaultSeed;
  double lambda = 0.1;
  double tol = 1e-12;
  double tol_sign = 1e-8;
  std::string out;
  std::string format = "csv";
  std::string preset = "paper";
  unsigned threads = 1;

  RidgeConfig ridge() const {
    RidgeConfig c;
    c.lambda = lambda;
    c.tol = tol;
    c.tol_sign = tol_sign;
    c.validate();
    return c;
  }

  OutputFormat output_format() const {
    return format == "json" ? OutputFormat::Json : OutputFormat::Csv;
  }
};

/// Prints to stdout when no --out directory is given, otherwise writes files.
void emit(const GlobalOptions& g, const std::string& stem, const Table& table,
          const nlohmann::json& manifest) {
  if (g.out.empty()) {
    if (g.output_format() == OutputFormat::Json) {
      std::cout << to_json(table).dump(2) << '\n';
    } else {
      write_csv(table, std::cout);
    }
    return;
  }
  const auto path = write_output(g.out, stem, table, manifest, g.output_format());
  std::cerr << "wrote " << path.string() << '\n';
}

nlohmann::json common_params(const GlobalOptions& g) {
  nlohmann::json p = ridge_params(g.ridge());
  p["preset"] = g.preset;
  return p;
}

double resolve_rho_bar(std::optional<double> rho_bar, const std::vector<double>& families,
                       const std::vector<double>& weights, double fallback) {
  if (!families.empty()) {
    if (rho_bar) throw UsageError("give either --rho-bar or --families, not both");
    return make_mixture(families, weights).rho_bar();
  }
  return rho_bar.value_or(fallback);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-coordinate shortcut-learning laboratory"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  const PaperProtocol paper;
  app.add_option("--seed", g.seed, "Master seed for Monte Carlo streams");
  app.add_option("--lambda", g.lambda, "Ridge strength")->check(CLI::PositiveNumber);
  app.add_option("--tol", g.tol, "Root tolerance on channel derivatives")
      ->check(CLI::PositiveNumber);
  app.add_option("--tol-sign", g.tol_sign, "Threshold for sign decisions")
      ->check(CLI::PositiveNumber);
  app.add_option("--out", g.out, "Output directory (stdout when omitted for table commands)");
  app.add_option("--format", g.format, "Output format")->check(CLI::IsMember({"csv", "json"}));
  app.add_option("--preset", g.preset, "Named protocol preset")
      ->check(CLI::IsMember({"paper"}));
  app.add_option("--threads", g.threads, "Worker threads for grids and repetitions")
      ->check(CLI::PositiveNumber);

  // risk
  auto* risk = app.add_subcommand("risk", "Exact 0-1 risk of a linear rule on deterministic families");
  double wz = 1.0, ws = 0.0;
  std::vector<double> risk_rhos;
  std::optional<double> risk_rho_test;
  risk->add_option("--wz", wz, "Invariant weight");
  risk->add_option("--ws", ws, "Shortcut weight");
  risk->add_option("--rho", risk_rhos, "Family shortcut correlation (repeatable)")->required();
  risk->add_option("--rho-test", risk_rho_test, "Test family correlation for margin and gap");

  // optimize-det
  auto* opt_det = app.add_subcommand("optimize-det", "Deterministic ridge-logistic minimizer");
  std::optional<double> det_rho_bar;
  std::vector<double> det_families, det_weights;
  opt_det->add_option("--rho-bar", det_rho_bar, "Average training shortcut correlation");
  opt_det->add_option("--families", det_families, "Training family correlations");
  opt_det->add_option("--weights", det_weights, "Training family weights");

  // optimize-noisy
  auto* opt_noisy = app.add_subcommand("optimize-noisy", "Noisy-regime ridge-logistic minimizer");
  double noisy_gamma = paper.gamma;
  std::optional<double> noisy_rho_bar;
  std::vector<double> noisy_families, noisy_weights;
  std::vector<double> noisy_test = paper.test_rhos;
  opt_noisy->add_option("--gamma", noisy_gamma, "Invariant agreement E[A]");
  opt_noisy->add_option("--rho-bar", noisy_rho_bar, "Average training shortcut correlation");
  opt_noisy->add_option("--families", noisy_families, "Training family correlations");
  opt_noisy->add_option("--weights", noisy_weights, "Training family weights");
  opt_noisy->add_option("--rho-test", noisy_test, "Test family correlations");

  // phase
  auto* phase = app.add_subcommand("phase", "Sign of w_z - w_s over a (gamma, rho_bar) grid");
  double g_min = 0.01, g_max = 0.99, r_min = 0.01, r_max = 0.99;
  std::size_t g_points = paper.phase_points, r_points = paper.phase_points;
  phase->add_option("--gamma-min", g_min);
  phase->add_option("--gamma-max", g_max);
  phase->add_option("--gamma-points", g_points);
  phase->add_option("--rho-min", r_min);
  phase->add_option("--rho-max", r_max);
  phase->add_option("--rho-points", r_points);

  // fig-population
  auto* fig_pop = app.add_subcommand("fig-population", "Data for the population-geometry figure");
  std::size_t pop_points = paper.population_points;
  fig_pop->add_option("--rho-points", pop_points, "Points in the deterministic rho_bar grid");
  fig_pop->add_option("--phase-points", g_points, "Points per axis of the phase grid");

  // fig-finite-sample
  auto* fig_fs = app.add_subcommand("fig-finite-sample", "Data for the finite-sample figure");
  double fs_gamma = paper.gamma;
  std::vector<double> fs_families = paper.families, fs_weights = paper.weights;
  std::vector<double> fs_test = paper.test_rhos;
  std::vector<std::int64_t> fs_sizes;
  std::int64_t size_min = paper.size_min, size_max = paper.size_max;
  std::size_t size_count = paper.size_count;
  std::int64_t reps = paper.reps;
  fig_fs->add_option("--gamma", fs_gamma, "Invariant agreement E[A]");
  fig_fs->add_option("--families", fs_families, "Training family correlations");
  fig_fs->add_option("--weights", fs_weights, "Training family weights");
  fig_fs->add_option("--rho-test", fs_test, "Test family correlations");
  fig_fs->add_option("--sizes", fs_sizes, "Explicit sample sizes (overrides the linear grid)");
  fig_fs->add_option("--size-min", size_min);
  fig_fs->add_option("--size-max", size_max);
  fig_fs->add_option("--size-count", size_count);
  fig_fs->add_option("--reps", reps, "Repetitions per sample size");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Generic grid over one or two parameters");
  std::vector<std::string> axis_specs;
  std::string stat;
  SweepPoint base;
  sweep->add_option("--axis", axis_specs, "name=start:stop:count (one or two)")->required();
  sweep->add_option("--stat", stat, "Statistic to evaluate")->required();
  sweep->add_option("--gamma", base.gamma);
  sweep->add_option("--rho-bar", base.rho_bar);
  sweep->add_option("--rho-test", base.rho_test);
  sweep->add_option("--n", base.n);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    const RidgeConfig ridge = g.ridge();
    if (risk->parsed()) {
      const Table t = risk_table({wz, ws}, risk_rhos, risk_rho_test);
      nlohmann::json p = {{"w_z", wz}, {"w_s", ws}, {"rho", risk_rhos}};
      if (risk_rho_test) p["rho_test"] = *risk_rho_test;
      emit(g, "risk", t, make_manifest("risk", p));
    } else if (opt_det->parsed()) {
      const double rb = resolve_rho_bar(det_rho_bar, det_families, det_weights, 0.8);
      nlohmann::json p = common_params(g);
      p["rho_bar"] = rb;
      emit(g, "optimize_det", optimize_det_table(rb, ridge), make_manifest("optimize-det", p));
    } else if (opt_noisy->parsed()) {
      const double rb = resolve_rho_bar(noisy_rho_bar, noisy_families, noisy_weights, 0.8);
      nlohmann::json p = common_params(g);
      p["gamma"] = noisy_gamma;
      p["rho_bar"] = rb;
      p["rho_test"] = noisy_test;
      emit(g, "optimize_noisy", optimize_noisy_table(noisy_gamma, rb, noisy_test, ridge),
           make_manifest("optimize-noisy", p));
    } else if (phase->parsed()) {
      if (g_points < 1 || r_points < 1) throw UsageError("empty phase grid");
      const PhaseGrid grid = phase_grid(linspace(g_min, g_max, g_points),
                                        linspace(r_min, r_max, r_points), ridge, g.threads);
      nlohmann::json p = common_params(g);
      p["gamma_grid"] = {{"min", g_min}, {"max", g_max}, {"points", g_points}};
      p["rho_bar_grid"] = {{"min", r_min}, {"max", r_max}, {"points", r_points}};
      emit(g, "phase", phase_table(grid), make_manifest("phase", p));
    } else if (fig_pop->parsed()) {
      if (pop_points < 1 || g_points < 1) throw UsageError("empty grid");
      const std::string dir = g.out.empty() ? "out" : g.out;
      const auto start = std::chrono::steady_clock::now();
      const Table det = population_deterministic_table(linspace(0.01, 0.99, pop_points), ridge);
      const auto axis = linspace(0.01, 0.99, g_points);
      const Table ph = phase_table(phase_grid(axis, axis, ridge, g.threads));
      nlohmann::json p = common_params(g);
      p["rho_bar_grid"] = {{"min", 0.01}, {"max", 0.99}, {"points", pop_points}};
      p["phase_grid"] = {{"min", 0.01}, {"max", 0.99}, {"points", g_points}};
      write_output(dir, "population_deterministic", det,
                   make_manifest("fig-population", p), g.output_format());
      write_output(dir, "population_phase", ph, make_manifest("fig-population", p),
                   g.output_format());
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      std::cerr << "fig-population: wrote " << dir << " in " << secs << " s\n";
    } else if (fig_fs->parsed()) {
      if (fs_sizes.empty()) {
        if (size_count < 1) throw UsageError("empty size grid");
        fs_sizes = linear_sizes(size_min, size_max, size_count);
      }
      RepetitionPlan plan;
      plan.gamma = fs_gamma;
      plan.mixture = make_mixture(fs_families, fs_weights);
      plan.test_rhos = fs_test;
      plan.sizes = fs_sizes;
      plan.reps = reps;
      plan.ridge = ridge;
      plan.master_seed = g.seed;
      plan.threads = g.threads;
      const std::string dir = g.out.empty() ? "out" : g.out;
      const auto start = std::chrono::steady_clock::now();
      const auto summaries = run_repetitions(plan);
      nlohmann::json p = plan_params(plan);
      p["preset"] = g.preset;
      p["size_spacing"] = "linear, rounded to nearest integer";
      std::int64_t degenerate = 0;
      for (const auto& s : summaries) degenerate += s.degenerate_count;
      p["degenerate_rule_count"] = degenerate;
      write_output(dir, "finite_sample", finite_sample_table(plan, summaries),
                   make_manifest("fig-finite-sample", p), g.output_format());
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      std::cerr << "fig-finite-sample: wrote " << dir << " in " << secs << " s\n";
    } else if (sweep->parsed()) {
      std::vector<SweepAxis> axes;
      for (const auto& s : axis_specs) axes.push_back(parse_axis(s));
      base.lambda = g.lambda;
      const Table t = sweep_table(axes, stat, base, ridge);
      nlohmann::json p = common_params(g);
      p["axes"] = axis_specs;
      p["statistic"] = stat;
      p["base"] = {{"gamma", base.gamma}, {"rho_bar", base.rho_bar},
                   {"rho_test", base.rho_test}, {"n", base.n}};
      emit(g, "sweep", t, make_manifest("sweep", p));
    }
  } catch (const SolverError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
