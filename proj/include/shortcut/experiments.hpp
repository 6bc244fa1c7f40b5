// Reproduction pipeline: tabular results, serialization, run manifests,
// figure-data generation and the generic parameter sweep.

#ifndef SHORTCUT_EXPERIMENTS_HPP
#define SHORTCUT_EXPERIMENTS_HPP

#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <fmt/format.h>

#include "json.hpp"
#include "shortcut/closed_form.hpp"
#include "shortcut/model.hpp"
#include "shortcut/montecarlo.hpp"
#include "shortcut/optimizer.hpp"

namespace shortcut {

inline constexpr const char* kToolVersion = "0.1.0";

/// Bad user input; maps to exit code 2.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using Cell = std::variant<double, std::int64_t, std::string>;

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;

  void add_row(std::vector<Cell> row) {
    if (row.size() != columns.size()) {
      throw std::logic_error("row width does not match header");
    }
    rows.push_back(std::move(row));
  }

  std::size_t column_index(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i) {
      if (columns[i] == name) return i;
    }
    throw std::out_of_range("no column named " + name);
  }
};

/// Decimal with 12 significant digits.
inline std::string format_number(double x) { return fmt::format("{:.12g}", x); }

inline std::string format_cell(const Cell& cell) {
  if (const auto* d = std::get_if<double>(&cell)) return format_number(*d);
  if (const auto* i = std::get_if<std::int64_t>(&cell)) return std::to_string(*i);
  return std::get<std::string>(cell);
}

inline void write_csv(const Table& table, std::ostream& out) {
  for (std::size_t i = 0; i < table.columns.size(); ++i) {
    out << (i ? "," : "") << table.columns[i];
  }
  out << '\n';
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << format_cell(row[i]);
    out << '\n';
  }
}

inline nlohmann::json cell_json(const Cell& cell) {
  if (const auto* d = std::get_if<double>(&cell)) {
    if (!std::isfinite(*d)) return nullptr;
    return std::stod(format_number(*d));
  }
  if (const auto* i = std::get_if<std::int64_t>(&cell)) return *i;
  return std::get<std::string>(cell);
}

/// Array of row objects keyed by column name.
inline nlohmann::json to_json(const Table& table) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : table.rows) {
    nlohmann::json obj = nlohmann::json::object();
    for (std::size_t i = 0; i < row.size(); ++i) obj[table.columns[i]] = cell_json(row[i]);
    rows.push_back(std::move(obj));
  }
  return rows;
}

enum class OutputFormat { Csv, Json };

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Flat manifest: command, tool version, timestamp and every parameter that
/// affects the output.
inline nlohmann::json make_manifest(const std::string& command, const nlohmann::json& params) {
  nlohmann::json m = nlohmann::json::object();
  m["command"] = command;
  m["tool_version"] = kToolVersion;
  m["timestamp"] = utc_timestamp();
  for (const auto& [key, value] : params.items()) m[key] = value;
  return m;
}

inline nlohmann::json ridge_params(const RidgeConfig& config) {
  return {{"lambda", config.lambda},
          {"tol", config.tol},
          {"tol_sign", config.tol_sign},
          {"max_iter", config.max_iter}};
}

/// Writes `<stem>.csv` (plus `<stem>.json` for JSON output) and
/// `<stem>.manifest.json` into `dir`. Returns the CSV path.
inline std::filesystem::path write_output(const std::filesystem::path& dir,
                                          const std::string& stem, const Table& table,
                                          const nlohmann::json& manifest,
                                          OutputFormat format) {
  std::filesystem::create_directories(dir);
  const auto csv_path = dir / (stem + ".csv");
  {
    std::ofstream out(csv_path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + csv_path.string());
    write_csv(table, out);
  }
  if (format == OutputFormat::Json) {
    std::ofstream out(dir / (stem + ".json"), std::ios::binary);
    out << to_json(table).dump(2) << '\n';
  }
  nlohmann::json m = manifest;
  m["output"] = csv_path.filename().string();
  m["format"] = format == OutputFormat::Json ? "csv+json" : "csv";
  std::ofstream out(dir / (stem + ".manifest.json"), std::ios::binary);
  out << m.dump(2) << '\n';
  return csv_path;
}

/// Protocol defaults for the finite-sample and population figures.
struct PaperProtocol {
  double gamma = 0.55;
  std::vector<double> families = {0.9, 0.7};
  std::vector<double> weights = {0.5, 0.5};
  std::vector<double> test_rhos = {-0.30, 0.70};
  std::int64_t size_min = 20;
  std::int64_t size_max = 600;
  std::size_t size_count = 15;
  std::int64_t reps = 1400;
  double lambda = 0.1;
  std::uint64_t seed = kDefaultSeed;
  std::size_t population_points = 99;  // rho_bar grid 0.01..0.99
  std::size_t phase_points = 101;
};

inline TrainingMixture make_mixture(const std::vector<double>& rhos,
                                    const std::vector<double>& weights) {
  std::vector<FamilySpec> families;
  for (double r : rhos) families.emplace_back(r);
  return TrainingMixture(std::move(families), weights.empty()
                                                  ? std::vector<double>(rhos.size(), 1.0)
                                                  : weights);
}

// --- risk -----------------------------------------------------------------

inline Table risk_table(const Weights& w, const std::vector<double>& rhos,
                        std::optional<double> rho_test) {
  if (!w.finite()) throw UsageError("weights must be finite");
  Table t;
  t.columns = {"w_z", "w_s", "rho", "risk", "cone"};
  if (rho_test) {
    t.columns.insert(t.columns.end(), {"rho_test", "test_margin", "cone_gap"});
  }
  const Cone cone = classify_cone(w);
  for (double rho : rhos) {
    if (!(std::abs(rho) <= 1.0)) throw UsageError("rho must lie in [-1, 1]");
    std::vector<Cell> row = {w.w_z, w.w_s, rho, deterministic_risk(w, rho),
                             std::string(to_string(cone))};
    if (rho_test) {
      if (!(std::abs(*rho_test) <= 1.0)) throw UsageError("rho_test must lie in [-1, 1]");
      row.emplace_back(*rho_test);
      row.emplace_back(test_margin(w, *rho_test));
      // The gap formula holds only on the shortcut cone.
      if (cone == Cone::Shortcut) {
        row.emplace_back(cone_gap(rho, *rho_test));
      } else {
        row.emplace_back(std::string());
      }
    }
    t.add_row(std::move(row));
  }
  return t;
}

// --- single solves ---------------------------------------------------------

inline Table optimize_det_table(double rho_bar, const RidgeConfig& config) {
  const ChannelSolution sol = solve_deterministic(rho_bar, config);
  Table t;
  t.columns = {"rho_bar", "lambda", "u_star", "v_star", "w_z", "w_s",
               "residual_u", "residual_v", "cone", "train_risk"};
  t.add_row({rho_bar, config.lambda, sol.u_star, sol.v_star, sol.w.w_z, sol.w.w_s,
             sol.residual_u, sol.residual_v, std::string(to_string(classify_cone(sol.w))),
             deterministic_risk(sol.w, rho_bar)});
  return t;
}

inline std::string rho_tag(double rho) {
  const long hundredths = std::lround(std::abs(rho) * 100.0);
  return fmt::format("{}{:03d}", rho < 0 ? 'm' : 'p', hundredths);
}

inline Table optimize_noisy_table(double gamma, double rho_bar,
                                  const std::vector<double>& test_rhos,
                                  const RidgeConfig& config) {
  const ChannelSolution sol = solve_noisy(gamma, rho_bar, config);
  const InducedRule rule = induced_rule(sol, config.tol_sign);
  Table t;
  t.columns = {"gamma", "rho_bar", "lambda", "u_star", "v_star", "w_z", "w_s",
               "residual_u", "residual_v", "phase", "induced_rule"};
  std::vector<Cell> row = {gamma, rho_bar, config.lambda, sol.u_star, sol.v_star, sol.w.w_z,
                           sol.w.w_s, sol.residual_u, sol.residual_v,
                           std::string(to_string(classify_phase(sol.v_star, config.tol_sign))),
                           to_string(rule)};
  for (double r : test_rhos) {
    if (!(std::abs(r) <= 1.0)) throw UsageError("rho_test must lie in [-1, 1]");
    t.columns.push_back("test_error_" + rho_tag(r));
    row.emplace_back(exact_test_error(sol, gamma, r));
  }
  t.add_row(std::move(row));
  return t;
}

// --- population figure ------------------------------------------------------

/// Deterministic weights over a rho_bar grid; aborts naming the failing point.
inline Table population_deterministic_table(const std::vector<double>& rho_bars,
                                            const RidgeConfig& config) {
  Table t;
  t.columns = {"rho_bar", "w_z", "w_s"};
  for (double r : rho_bars) {
    ChannelSolution sol;
    try {
      sol = solve_deterministic(r, config);
    } catch (const SolverError& e) {
      throw SolverError(e.kind(), std::string(e.what()) + " at rho_bar=" + format_number(r));
    }
    t.add_row({r, sol.w.w_z, sol.w.w_s});
  }
  return t;
}

inline Table phase_table(const PhaseGrid& grid) {
  Table t;
  t.columns = {"gamma", "rho_bar", "v_star", "phase"};
  for (const auto& cell : grid.cells) {
    t.add_row({cell.gamma, cell.rho_bar, cell.solution.v_star,
               std::string(to_string(cell.phase))});
  }
  return t;
}

// --- finite-sample figure ---------------------------------------------------

inline Table finite_sample_table(const RepetitionPlan& plan,
                                 const std::vector<RepetitionSummary>& summaries) {
  Table t;
  t.columns = {"n", "shortcut_rate", "shortcut_rate_ci", "selector_rate",
               "selector_rate_ci", "hoeffding_bound"};
  for (double r : plan.test_rhos) {
    t.columns.push_back("test_error_" + rho_tag(r));
    t.columns.push_back("test_error_" + rho_tag(r) + "_ci");
  }
  t.columns.push_back("invariant_baseline");
  t.columns.push_back("chance_baseline");

  const double delta = plan.mixture.rho_bar() - plan.gamma;
  for (const auto& s : summaries) {
    std::vector<Cell> row = {s.n, s.shortcut_rate, s.shortcut_rate_ci, s.selector_shortcut_rate,
                             s.selector_rate_ci};
    if (delta > 0.0) {
      row.emplace_back(hoeffding_selection_bound(s.n, delta));
    } else {
      row.emplace_back(std::string());  // bound only covers rho_bar > gamma
    }
    for (std::size_t i = 0; i < plan.test_rhos.size(); ++i) {
      row.emplace_back(s.mean_test_error[i]);
      row.emplace_back(s.test_error_ci[i]);
    }
    row.emplace_back(noisy_rule_risk(RulePair::InvariantRule, plan.gamma, 0.0));
    row.emplace_back(0.5);
    t.add_row(std::move(row));
  }
  return t;
}

inline nlohmann::json plan_params(const RepetitionPlan& plan) {
  std::vector<double> rhos;
  for (const auto& f : plan.mixture.families()) rhos.push_back(f.rho());
  nlohmann::json p = ridge_params(plan.ridge);
  p["gamma"] = plan.gamma;
  p["families"] = rhos;
  p["weights"] = plan.mixture.weights();
  p["rho_bar"] = plan.mixture.rho_bar();
  p["rho_test"] = plan.test_rhos;
  p["sizes"] = plan.sizes;
  p["reps"] = plan.reps;
  p["seed"] = plan.master_seed;
  p["rng"] = "mt19937_64 per (seed, n, rep) via splitmix64";
  p["family_sampling"] = "largest-remainder stratified";
  p["ci_method"] = "normal approximation, mean +/- 1.959964 sd/sqrt(reps)";
  p["test_error_method"] = "exact over (A,B) states";
  p["degenerate_rule_policy"] = "counted as non-shortcut";
  return p;
}

// --- sweep ------------------------------------------------------------------

struct SweepAxis {
  std::string name;
  std::vector<double> values;
};

inline const std::vector<std::string>& sweep_parameters() {
  static const std::vector<std::string> names = {"gamma", "rho_bar", "rho_test", "lambda", "n"};
  return names;
}

inline const std::vector<std::string>& sweep_statistics() {
  static const std::vector<std::string> names = {
      "u_star",       "v_star",          "w_z",          "w_s",
      "det_w_z",      "det_w_s",         "noisy_test_gap", "invariant_rule_risk",
      "shortcut_rule_test_risk", "learned_test_error", "hoeffding_bound", "det_shortcut_derivative"};
  return names;
}

/// Parses `name=start:stop:count`.
inline SweepAxis parse_axis(const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos) throw UsageError("axis must look like name=start:stop:count");
  SweepAxis axis;
  axis.name = spec.substr(0, eq);
  bool known = false;
  for (const auto& p : sweep_parameters()) known = known || p == axis.name;
  if (!known) throw UsageError("unknown sweep parameter: " + axis.name);
  std::stringstream rest(spec.substr(eq + 1));
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(rest, part, ':')) parts.push_back(part);
  if (parts.size() != 3) throw UsageError("axis must look like name=start:stop:count");
  double lo = 0.0, hi = 0.0;
  long count = 0;
  try {
    lo = std::stod(parts[0]);
    hi = std::stod(parts[1]);
    count = std::stol(parts[2]);
  } catch (const std::exception&) {
    throw UsageError("malformed axis: " + spec);
  }
  if (count < 1) throw UsageError("empty sweep grid for " + axis.name);
  axis.values = linspace(lo, hi, static_cast<std::size_t>(count));
  return axis;
}

/// Base point for a sweep; axes override individual fields.
struct SweepPoint {
  double gamma = 0.55;
  double rho_bar = 0.80;
  double rho_test = -0.30;
  double lambda = 0.1;
  double n = 600;

  void set(const std::string& name, double value) {
    if (name == "gamma") gamma = value;
    else if (name == "rho_bar") rho_bar = value;
    else if (name == "rho_test") rho_test = value;
    else if (name == "lambda") lambda = value;
    else if (name == "n") n = value;
    else throw UsageError("unknown sweep parameter: " + name);
  }
};

inline double evaluate_statistic(const std::string& stat, const SweepPoint& p,
                                 RidgeConfig config) {
  config.lambda = p.lambda;
  if (stat == "u_star") return solve_noisy(p.gamma, p.rho_bar, config).u_star;
  if (stat == "v_star") return solve_noisy(p.gamma, p.rho_bar, config).v_star;
  if (stat == "w_z") return solve_noisy(p.gamma, p.rho_bar, config).w.w_z;
  if (stat == "w_s") return solve_noisy(p.gamma, p.rho_bar, config).w.w_s;
  if (stat == "det_w_z") return solve_deterministic(p.rho_bar, config).w.w_z;
  if (stat == "det_w_s") return solve_deterministic(p.rho_bar, config).w.w_s;
  if (stat == "noisy_test_gap") return noisy_test_gap(p.gamma, p.rho_test);
  if (stat == "invariant_rule_risk") {
    return noisy_rule_risk(RulePair::InvariantRule, p.gamma, p.rho_test);
  }
  if (stat == "shortcut_rule_test_risk") {
    return noisy_rule_risk(RulePair::ShortcutRule, p.gamma, p.rho_test);
  }
  if (stat == "learned_test_error") {
    return exact_test_error(solve_noisy(p.gamma, p.rho_bar, config), p.gamma, p.rho_test);
  }
  if (stat == "hoeffding_bound") {
    const double delta = p.rho_bar - p.gamma;
    if (!(delta > 0.0)) return std::nan("");
    return hoeffding_selection_bound(std::llround(p.n), delta);
  }
  if (stat == "det_shortcut_derivative") return det_shortcut_derivative(0.0, p.rho_bar);
  throw UsageError("unknown statistic: " + stat);
}

/// Long-format sweep over one or two axes. Rows follow the axis order with the
/// last axis varying fastest.
inline Table sweep_table(const std::vector<SweepAxis>& axes, const std::string& stat,
                         const SweepPoint& base, const RidgeConfig& config) {
  if (axes.empty() || axes.size() > 2) throw UsageError("sweep takes one or two axes");
  bool known = false;
  for (const auto& s : sweep_statistics()) known = known || s == stat;
  if (!known) throw UsageError("unknown statistic: " + stat);
  for (const auto& a : axes) {
    if (a.values.empty()) throw UsageError("empty sweep grid for " + a.name);
  }
  if (axes.size() == 2 && axes[0].name == axes[1].name) {
    throw UsageError("sweep axes must be distinct");
  }
  Table t;
  for (const auto& a : axes) t.columns.push_back(a.name);
  t.columns.push_back("statistic");
  t.columns.push_back("value");

  auto emit = [&](const std::vector<double>& coords) {
    SweepPoint p = base;
    for (std::size_t i = 0; i < axes.size(); ++i) p.set(axes[i].name, coords[i]);
    std::vector<Cell> row(coords.begin(), coords.end());
    row.emplace_back(stat);
    row.emplace_back(evaluate_statistic(stat, p, config));
    t.add_row(std::move(row));
  };
  if (axes.size() == 1) {
    for (double x : axes[0].values) emit({x});
  } else {
    for (double x : axes[0].values) {
      for (double y : axes[1].values) emit({x, y});
    }
  }
  return t;
}

}  // namespace shortcut

#endif  // SHORTCUT_EXPERIMENTS_HPP
