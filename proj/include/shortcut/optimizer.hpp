// Population ridge-logistic minimization.
//
// In both regimes the ridge objective splits over u = w_z + w_s and
// v = w_z - w_s into independent scalar problems of the form
//
//   Phi(x) = k * ell(x) + c * x + (lambda / 4) * x^2,
//
// each strictly convex with a strictly increasing derivative. Each channel is
// minimized by a bracketed root solve of Phi'.

#ifndef SHORTCUT_OPTIMIZER_HPP
#define SHORTCUT_OPTIMIZER_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <exception>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <variant>
#include <vector>

#include "shortcut/closed_form.hpp"
#include "shortcut/model.hpp"

namespace shortcut {

struct RidgeConfig {
  double lambda = 0.1;
  /// Root tolerance on the channel derivative value.
  double tol = 1e-12;
  int max_iter = 500;
  /// Threshold for sign decisions on channel roots.
  double tol_sign = 1e-8;

  void validate() const {
    if (!(lambda > 0.0) || !std::isfinite(lambda)) {
      throw std::invalid_argument("ridge strength lambda must be positive");
    }
    if (!(tol > 0.0)) throw std::invalid_argument("root tolerance must be positive");
    if (!(tol_sign > 0.0)) throw std::invalid_argument("sign tolerance must be positive");
    if (max_iter < 1) throw std::invalid_argument("max_iter must be positive");
  }
};

class SolverError : public std::runtime_error {
 public:
  enum class Kind { NoBracket, MaxIter };

  SolverError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

inline constexpr double kBracketLimit = 1e6;

/// Root of a strictly increasing function. Brackets by doubling outward from
/// zero, then refines with secant steps guarded by bisection. The returned x
/// satisfies |dphi(x)| <= config.tol.
template <typename F>
double solve_scalar_channel(F&& dphi, const RidgeConfig& config) {
  const double f0 = dphi(0.0);
  if (std::abs(f0) <= config.tol) return 0.0;

  // Root lies on the side where dphi changes sign.
  const double direction = f0 < 0.0 ? 1.0 : -1.0;
  double inner = 0.0;
  double f_inner = f0;
  double step = 1.0;
  double outer = direction * step;
  double f_outer = dphi(outer);
  while ((f_outer < 0.0) == (f0 < 0.0)) {
    if (std::abs(f_outer) <= config.tol) return outer;
    inner = outer;
    f_inner = f_outer;
    step *= 2.0;
    if (step > kBracketLimit) {
      throw SolverError(SolverError::Kind::NoBracket,
                        "no sign change of the channel derivative within |x| <= 1e6");
    }
    outer = direction * step;
    f_outer = dphi(outer);
  }
  if (std::abs(f_outer) <= config.tol) return outer;

  double lo = inner, f_lo = f_inner;
  double hi = outer, f_hi = f_outer;
  if (lo > hi) {
    std::swap(lo, hi);
    std::swap(f_lo, f_hi);
  }

  double width = hi - lo;
  bool force_bisect = false;
  for (int iter = 0; iter < config.max_iter; ++iter) {
    double x;
    if (!force_bisect) {
      x = lo - f_lo * (hi - lo) / (f_hi - f_lo);
      if (!(x > lo && x < hi)) x = lo + (hi - lo) / 2.0;
    } else {
      x = lo + (hi - lo) / 2.0;
    }
    if (x <= lo || x >= hi) break;  // bracket exhausted at double resolution

    const double fx = dphi(x);
    if (std::abs(fx) <= config.tol) return x;
    if (fx < 0.0) {
      lo = x;
      f_lo = fx;
    } else {
      hi = x;
      f_hi = fx;
    }
    // Secant steps that fail to halve the bracket are followed by a bisection.
    const double new_width = hi - lo;
    force_bisect = !force_bisect && new_width > 0.5 * width;
    width = new_width;
  }
  throw SolverError(SolverError::Kind::MaxIter,
                    "channel root not within tolerance after " +
                        std::to_string(config.max_iter) + " iterations");
}

/// Phi(x) = weight * ell(x) + offset * x + (lambda / 4) x^2.
struct ChannelObjective {
  double weight = 0.0;
  double offset = 0.0;
  double lambda = 0.0;

  double value(double x) const {
    return weight * logistic_loss(x) + offset * x + lambda / 4.0 * x * x;
  }
  double derivative(double x) const {
    return -weight * sigmoid(-x) + offset + lambda / 2.0 * x;
  }
};

struct ChannelPair {
  ChannelObjective u;
  ChannelObjective v;
};

/// Deterministic regime: weights (1 + rho_bar)/2 and (1 - rho_bar)/2, no offset.
inline ChannelPair deterministic_channels(double rho_bar, double lambda) {
  return {{(1.0 + rho_bar) / 2.0, 0.0, lambda}, {(1.0 - rho_bar) / 2.0, 0.0, lambda}};
}

/// Noisy regime under the population state law.
inline ChannelPair noisy_channels(double gamma, double rho_bar, double lambda) {
  return {{(1.0 + gamma * rho_bar) / 2.0, (1.0 - gamma) * (1.0 - rho_bar) / 4.0, lambda},
          {(1.0 - gamma * rho_bar) / 2.0, (1.0 - gamma) * (1.0 + rho_bar) / 4.0, lambda}};
}

/// Any state law (population or empirical). ell(-x) = ell(x) + x folds the
/// (-,-) and (-,+) cells into the u and v channels.
inline ChannelPair state_channels(const StateDistribution& states, double lambda) {
  return {{states.p_pp + states.p_mm, states.p_mm, lambda},
          {states.p_pm + states.p_mp, states.p_mp, lambda}};
}

struct ChannelSolution {
  double u_star = 0.0;
  double v_star = 0.0;
  Weights w;
  double residual_u = 0.0;
  double residual_v = 0.0;
};

inline ChannelSolution solve_channels(const ChannelPair& channels, const RidgeConfig& config) {
  config.validate();
  ChannelSolution sol;
  sol.u_star = solve_scalar_channel([&](double x) { return channels.u.derivative(x); }, config);
  sol.v_star = solve_scalar_channel([&](double x) { return channels.v.derivative(x); }, config);
  sol.w = Weights::from_channels({sol.u_star, sol.v_star});
  sol.residual_u = std::abs(channels.u.derivative(sol.u_star));
  sol.residual_v = std::abs(channels.v.derivative(sol.v_star));
  return sol;
}

/// Ridge-logistic minimizer on the deterministic family mixture.
inline ChannelSolution solve_deterministic(double rho_bar, const RidgeConfig& config) {
  if (!(std::abs(rho_bar) < 1.0)) {
    throw std::invalid_argument("deterministic solve needs rho_bar in (-1, 1)");
  }
  return solve_channels(deterministic_channels(rho_bar, config.lambda), config);
}

/// Ridge-logistic minimizer in the noisy-invariant regime.
inline ChannelSolution solve_noisy(double gamma, double rho_bar, const RidgeConfig& config) {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must lie in (0, 1]");
  if (!(std::abs(rho_bar) <= 1.0)) throw std::invalid_argument("rho_bar must lie in [-1, 1]");
  return solve_channels(noisy_channels(gamma, rho_bar, config.lambda), config);
}

/// Full ridge objective L(w) + (lambda / 2) |w|^2 for the deterministic regime.
inline double det_ridge_objective(const Weights& w, double rho_bar, double lambda) {
  return det_surrogate(w, rho_bar) + lambda / 2.0 * (w.w_z * w.w_z + w.w_s * w.w_s);
}

inline double noisy_ridge_objective(const Weights& w, const StateDistribution& states,
                                    double lambda) {
  return noisy_surrogate(w, states) + lambda / 2.0 * (w.w_z * w.w_z + w.w_s * w.w_s);
}

inline Gradient det_ridge_gradient(const Weights& w, double rho_bar, double lambda) {
  Gradient g = det_surrogate_gradient(w, rho_bar);
  return {g.d_wz + lambda * w.w_z, g.d_ws + lambda * w.w_s};
}

inline Gradient noisy_ridge_gradient(const Weights& w, const StateDistribution& states,
                                     double lambda) {
  Gradient g = noisy_surrogate_gradient(w, states);
  return {g.d_wz + lambda * w.w_z, g.d_ws + lambda * w.w_s};
}

struct Degenerate {
  std::string reason;
};

using InducedRule = std::variant<RulePair, Degenerate>;

/// Which of f_Z, f_S the learned linear score reproduces on all four binary
/// inputs. Score on z = s inputs is u* s, on z = -s inputs is v* z.
inline InducedRule induced_rule(const ChannelSolution& sol, double tol_sign) {
  const double u = sol.u_star;
  const double v = sol.v_star;
  if (std::abs(u) <= tol_sign) return Degenerate{"tie on z=s inputs"};
  if (u < 0.0) return Degenerate{"negative u channel: predicts -s on z=s inputs"};
  if (std::abs(v) <= tol_sign) return Degenerate{"tie on z=-s inputs"};
  return v < 0.0 ? InducedRule{RulePair::ShortcutRule} : InducedRule{RulePair::InvariantRule};
}

inline bool is_rule(const InducedRule& rule, RulePair which) {
  const auto* r = std::get_if<RulePair>(&rule);
  return r != nullptr && *r == which;
}

inline std::string to_string(const InducedRule& rule) {
  if (const auto* r = std::get_if<RulePair>(&rule)) return std::string(to_string(*r));
  return "degenerate";
}

enum class Phase { InvariantSide, BoundaryLine, ShortcutSide };

inline Phase classify_phase(double v_star, double tol_sign) {
  if (std::abs(v_star) <= tol_sign) return Phase::BoundaryLine;
  return v_star > 0.0 ? Phase::InvariantSide : Phase::ShortcutSide;
}

inline std::string_view to_string(Phase phase) {
  switch (phase) {
    case Phase::InvariantSide: return "invariant";
    case Phase::BoundaryLine: return "boundary";
    case Phase::ShortcutSide: return "shortcut";
  }
  return "boundary";
}

/// n evenly spaced points on [lo, hi], endpoints included.
inline std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> out;
  out.reserve(n);
  if (n == 1) {
    out.push_back(lo);
    return out;
  }
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1));
  }
  return out;
}

/// Default phase axis: 101 points on [0.01, 0.99].
inline std::vector<double> default_phase_axis() { return linspace(0.01, 0.99, 101); }

struct PhaseCell {
  double gamma = 0.0;
  double rho_bar = 0.0;
  ChannelSolution solution;
  Phase phase = Phase::BoundaryLine;
};

/// Phase map over (gamma, rho_bar), stored gamma-major.
struct PhaseGrid {
  std::vector<double> gammas;
  std::vector<double> rho_bars;
  double tol_sign = 0.0;
  std::vector<PhaseCell> cells;

  const PhaseCell& at(std::size_t gamma_index, std::size_t rho_index) const {
    return cells[gamma_index * rho_bars.size() + rho_index];
  }
};

class GridCellError : public SolverError {
 public:
  GridCellError(const SolverError& cause, double gamma, double rho_bar)
      : SolverError(cause.kind(), std::string(cause.what()) + " at cell gamma=" +
                                      std::to_string(gamma) + ", rho_bar=" +
                                      std::to_string(rho_bar)) {}
};

/// Run `body(i)` for i in [0, count) on up to `threads` workers. Results must
/// be written to preallocated slots so output order does not depend on
/// scheduling.
template <typename Body>
void parallel_for(std::size_t count, unsigned threads, Body&& body) {
  if (threads <= 1 || count < 2) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  const std::size_t workers = std::min<std::size_t>(threads, count);
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t t = 0; t < workers; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (std::size_t i = t; i < count; i += workers) body(i);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

inline PhaseGrid phase_grid(const std::vector<double>& gammas,
                            const std::vector<double>& rho_bars, const RidgeConfig& config,
                            unsigned threads = 1) {
  if (gammas.empty() || rho_bars.empty()) throw std::invalid_argument("empty phase grid");
  PhaseGrid grid{gammas, rho_bars, config.tol_sign, {}};
  grid.cells.resize(gammas.size() * rho_bars.size());
  parallel_for(grid.cells.size(), threads, [&](std::size_t idx) {
    const double g = gammas[idx / rho_bars.size()];
    const double r = rho_bars[idx % rho_bars.size()];
    PhaseCell& cell = grid.cells[idx];
    cell.gamma = g;
    cell.rho_bar = r;
    try {
      cell.solution = solve_noisy(g, r, config);
    } catch (const SolverError& e) {
      throw GridCellError(e, g, r);
    }
    cell.phase = classify_phase(cell.solution.v_star, config.tol_sign);
  });
  return grid;
}

}  // namespace shortcut

#endif  // SHORTCUT_OPTIMIZER_HPP
