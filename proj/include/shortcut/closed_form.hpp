// Exact population quantities: 0-1 risks, logistic surrogates and their
// derivatives, train-test gaps, rule-level risks, and the selector bound.

#ifndef SHORTCUT_CLOSED_FORM_HPP
#define SHORTCUT_CLOSED_FORM_HPP

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string_view>

#include "shortcut/model.hpp"

namespace shortcut {

/// 0-1 loss of a margin: 1 below zero, 1/2 at an exact tie, 0 above.
inline double psi(double t) {
  if (t < 0.0) return 1.0;
  if (t == 0.0) return 0.5;
  return 0.0;
}

/// ell(t) = log(1 + exp(-t)).
inline double logistic_loss(double t) {
  if (t > 0.0) return std::log1p(std::exp(-t));
  return -t + std::log1p(std::exp(t));
}

inline double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

/// Derivative of ell.
inline double logistic_loss_derivative(double t) { return -sigmoid(-t); }

/// 0-1 risk of sign(w_z z + w_s s) on a deterministic family (Z = Y) with
/// shortcut correlation rho.
inline double deterministic_risk(const Weights& w, double rho) {
  const ChannelCoords c = w.channels();
  return (1.0 + rho) / 2.0 * psi(c.u) + (1.0 - rho) / 2.0 * psi(c.v);
}

/// Test-minus-train 0-1 risk for any weight in the shortcut cone. Constant on
/// the cone, so it takes no weights; pair it with classify_cone.
inline double cone_gap(double rho_bar, double rho_test) { return (rho_bar - rho_test) / 2.0; }

inline double cone_gap(const TrainingMixture& mixture, double rho_test) {
  return cone_gap(mixture.rho_bar(), rho_test);
}

/// Expected test margin E[Y g_w(X)] on a deterministic family.
inline double test_margin(const Weights& w, double rho_test) {
  return w.w_z + rho_test * w.w_s;
}

struct Gradient {
  double d_wz = 0.0;
  double d_ws = 0.0;
};

/// Population logistic surrogate on the deterministic training mixture.
inline double det_surrogate(const Weights& w, double rho_bar) {
  const ChannelCoords c = w.channels();
  return (1.0 + rho_bar) / 2.0 * logistic_loss(c.u) +
         (1.0 - rho_bar) / 2.0 * logistic_loss(c.v);
}

inline Gradient det_surrogate_gradient(const Weights& w, double rho_bar) {
  const ChannelCoords c = w.channels();
  const double du = (1.0 + rho_bar) / 2.0 * logistic_loss_derivative(c.u);
  const double dv = (1.0 - rho_bar) / 2.0 * logistic_loss_derivative(c.v);
  return {du + dv, du - dv};
}

/// dL_train/dw_s at w_s = 0. Negative whenever rho_bar > 0.
inline double det_shortcut_derivative(double w_z, double rho_bar) {
  return -rho_bar * sigmoid(-w_z);
}

/// L_test - L_train for the deterministic surrogate.
inline double det_surrogate_gap(const Weights& w, double rho_bar, double rho_test) {
  const ChannelCoords c = w.channels();
  return (rho_test - rho_bar) / 2.0 * (logistic_loss(c.u) - logistic_loss(c.v));
}

/// The two hand-picked rules: f_Z(z, s) = z and f_S(z, s) = s.
enum class RulePair { InvariantRule, ShortcutRule };

inline std::string_view to_string(RulePair rule) {
  return rule == RulePair::InvariantRule ? "invariant" : "shortcut";
}

/// 0-1 risk of a rule in the noisy regime. rho is the shortcut correlation of
/// the distribution being evaluated.
inline double noisy_rule_risk(RulePair rule, double gamma, double rho) {
  return rule == RulePair::InvariantRule ? (1.0 - gamma) / 2.0 : (1.0 - rho) / 2.0;
}

/// R_test(f_S) - R_test(f_Z).
inline double noisy_test_gap(double gamma, double rho_test) { return (gamma - rho_test) / 2.0; }

/// E[ell(Y (w_z Z + w_s S))] under the given state law.
inline double noisy_surrogate(const Weights& w, const StateDistribution& states) {
  const ChannelCoords c = w.channels();
  return states.p_pp * logistic_loss(c.u) + states.p_pm * logistic_loss(c.v) +
         states.p_mp * logistic_loss(-c.v) + states.p_mm * logistic_loss(-c.u);
}

inline Gradient noisy_surrogate_gradient(const Weights& w, const StateDistribution& states) {
  const ChannelCoords c = w.channels();
  const double g_pp = states.p_pp * logistic_loss_derivative(c.u);
  const double g_pm = states.p_pm * logistic_loss_derivative(c.v);
  const double g_mp = -states.p_mp * logistic_loss_derivative(-c.v);
  const double g_mm = -states.p_mm * logistic_loss_derivative(-c.u);
  // u = w_z + w_s, v = w_z - w_s
  return {g_pp + g_pm + g_mp + g_mm, g_pp - g_pm - g_mp + g_mm};
}

/// Right-hand side of L(w_z, w_s) - L(w_s, w_z) under the population noisy law.
inline double swap_difference(const Weights& w, double gamma, double rho_bar) {
  return (rho_bar - gamma) / 2.0 * (w.w_z - w.w_s);
}

/// Lower bound on P(selector ERM picks f_S) from n i.i.d. training draws when
/// rho_bar - gamma = delta_train > 0.
inline double hoeffding_selection_bound(std::int64_t n, double delta_train) {
  if (n < 1) throw std::invalid_argument("sample size must be positive");
  if (!(delta_train > 0.0)) {
    throw std::invalid_argument("selection bound needs rho_bar - gamma > 0");
  }
  return -std::expm1(-static_cast<double>(n) * delta_train * delta_train / 8.0);
}

}  // namespace shortcut

#endif  // SHORTCUT_CLOSED_FORM_HPP
