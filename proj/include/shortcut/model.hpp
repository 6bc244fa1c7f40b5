// Domain types for the two-coordinate family model.
//
// Every sample carries an invariant coordinate Z and a shortcut coordinate S.
// With A = YZ and B = YS, the pair (A, B) in {-1,+1}^2 is a sufficient
// statistic for everything this library computes, so distributions are kept
// as four cell probabilities.

#ifndef SHORTCUT_MODEL_HPP
#define SHORTCUT_MODEL_HPP

#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace shortcut {

inline constexpr double kProbabilityTolerance = 1e-12;

/// A training or test family, described by its shortcut-label correlation.
class FamilySpec {
 public:
  explicit FamilySpec(double rho) : rho_(rho) {
    if (!std::isfinite(rho) || rho < -1.0 || rho > 1.0) {
      throw std::invalid_argument("family correlation must lie in [-1, 1], got " +
                                  std::to_string(rho));
    }
  }

  double rho() const { return rho_; }

 private:
  double rho_;
};

/// Weighted mixture of training families. Weights are rescaled to sum to one.
class TrainingMixture {
 public:
  TrainingMixture(std::vector<FamilySpec> families, std::vector<double> weights)
      : families_(std::move(families)), weights_(std::move(weights)) {
    if (families_.empty()) {
      throw std::invalid_argument("mixture needs at least one family");
    }
    if (families_.size() != weights_.size()) {
      throw std::invalid_argument("mixture has " + std::to_string(families_.size()) +
                                  " families but " + std::to_string(weights_.size()) +
                                  " weights");
    }
    double total = 0.0;
    for (double w : weights_) {
      if (!std::isfinite(w) || w < 0.0) {
        throw std::invalid_argument("mixture weights must be finite and nonnegative");
      }
      total += w;
    }
    if (total <= 0.0) {
      throw std::invalid_argument("mixture weights are all zero");
    }
    if (std::abs(total - 1.0) > kProbabilityTolerance) {
      for (double& w : weights_) w /= total;
    }
    rho_bar_ = 0.0;
    for (std::size_t i = 0; i < families_.size(); ++i) {
      rho_bar_ += weights_[i] * families_[i].rho();
    }
  }

  /// Equal weights over the given correlations.
  static TrainingMixture balanced(const std::vector<double>& rhos) {
    std::vector<FamilySpec> families;
    families.reserve(rhos.size());
    for (double r : rhos) families.emplace_back(r);
    return TrainingMixture(std::move(families), std::vector<double>(rhos.size(), 1.0));
  }

  static TrainingMixture single(double rho) {
    return TrainingMixture({FamilySpec(rho)}, {1.0});
  }

  const std::vector<FamilySpec>& families() const { return families_; }
  const std::vector<double>& weights() const { return weights_; }
  std::size_t size() const { return families_.size(); }

  /// Weight-averaged training shortcut correlation.
  double rho_bar() const { return rho_bar_; }

 private:
  std::vector<FamilySpec> families_;
  std::vector<double> weights_;
  double rho_bar_ = 0.0;
};

inline double rho_bar(const TrainingMixture& mixture) { return mixture.rho_bar(); }

/// Channel coordinates u = w_z + w_s, v = w_z - w_s.
struct ChannelCoords {
  double u = 0.0;
  double v = 0.0;
};

/// Linear score weights on (z, s).
struct Weights {
  double w_z = 0.0;
  double w_s = 0.0;

  ChannelCoords channels() const { return {w_z + w_s, w_z - w_s}; }

  static Weights from_channels(ChannelCoords c) {
    return {(c.u + c.v) / 2.0, (c.u - c.v) / 2.0};
  }

  bool finite() const { return std::isfinite(w_z) && std::isfinite(w_s); }

  friend bool operator==(const Weights&, const Weights&) = default;
};

/// Noisy-invariant regime: E[A] = gamma, training E[B] = rho_bar of the mixture,
/// held-out family E[B] = rho_test.
class NoisyParams {
 public:
  NoisyParams(double gamma, TrainingMixture mixture, double rho_test)
      : gamma_(gamma), mixture_(std::move(mixture)), rho_test_(rho_test) {
    if (!std::isfinite(gamma) || gamma <= 0.0 || gamma > 1.0) {
      throw std::invalid_argument("gamma must lie in (0, 1], got " + std::to_string(gamma));
    }
    FamilySpec check(rho_test);
    (void)check;
  }

  double gamma() const { return gamma_; }
  const TrainingMixture& mixture() const { return mixture_; }
  double rho_bar() const { return mixture_.rho_bar(); }
  double rho_test() const { return rho_test_; }

 private:
  double gamma_;
  TrainingMixture mixture_;
  double rho_test_;
};

enum class Side { Train, Test };

/// Probability (or empirical fraction) of each (A, B) state.
/// Suffixes: pp = (+,+), pm = (+,-), mp = (-,+), mm = (-,-).
struct StateDistribution {
  enum class Kind { Population, Empirical };

  double p_pp = 0.0;
  double p_pm = 0.0;
  double p_mp = 0.0;
  double p_mm = 0.0;
  Kind kind = Kind::Population;

  static StateDistribution make(double pp, double pm, double mp, double mm,
                                Kind kind = Kind::Population) {
    for (double p : {pp, pm, mp, mm}) {
      if (!std::isfinite(p) || p < 0.0 || p > 1.0) {
        throw std::invalid_argument("state probabilities must lie in [0, 1]");
      }
    }
    if (std::abs(pp + pm + mp + mm - 1.0) > kProbabilityTolerance) {
      throw std::invalid_argument("state probabilities must sum to 1");
    }
    return {pp, pm, mp, mm, kind};
  }

  double mean_a() const { return (p_pp + p_pm) - (p_mp + p_mm); }
  double mean_b() const { return (p_pp + p_mp) - (p_pm + p_mm); }
};

/// Product law of independent A and B with the given means.
inline StateDistribution population_states(double mean_a, double mean_b) {
  if (!(std::abs(mean_a) <= 1.0) || !(std::abs(mean_b) <= 1.0)) {
    throw std::invalid_argument("state means must lie in [-1, 1]");
  }
  const double a_plus = (1.0 + mean_a) / 2.0;
  const double a_minus = (1.0 - mean_a) / 2.0;
  const double b_plus = (1.0 + mean_b) / 2.0;
  const double b_minus = (1.0 - mean_b) / 2.0;
  return {a_plus * b_plus, a_plus * b_minus, a_minus * b_plus, a_minus * b_minus,
          StateDistribution::Kind::Population};
}

inline StateDistribution population_states(const NoisyParams& params, Side side) {
  const double mean_b = side == Side::Train ? params.rho_bar() : params.rho_test();
  return population_states(params.gamma(), mean_b);
}

enum class Cone { Invariant, Shortcut, AntiShortcut, AntiInvariant, Boundary };

inline Cone classify_cone(const Weights& w) {
  const double az = std::abs(w.w_z);
  const double as = std::abs(w.w_s);
  if (w.w_z > as) return Cone::Invariant;
  if (w.w_s > az) return Cone::Shortcut;
  if (-w.w_s > az) return Cone::AntiShortcut;
  if (w.w_z < -as) return Cone::AntiInvariant;
  return Cone::Boundary;
}

inline std::string_view to_string(Cone cone) {
  switch (cone) {
    case Cone::Invariant: return "invariant";
    case Cone::Shortcut: return "shortcut";
    case Cone::AntiShortcut: return "anti_shortcut";
    case Cone::AntiInvariant: return "anti_invariant";
    case Cone::Boundary: return "boundary";
  }
  return "boundary";
}

}  // namespace shortcut

#endif  // SHORTCUT_MODEL_HPP
