// Finite-sample machinery for the noisy-invariant regime.
//
// A training sample only matters through its counts over the four (A, B)
// states, so batches are drawn and stored as counts. Each (n, rep) task gets
// its own generator whose seed is a pure function of (master_seed, n, rep).

#ifndef SHORTCUT_MONTECARLO_HPP
#define SHORTCUT_MONTECARLO_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

#include "shortcut/closed_form.hpp"
#include "shortcut/model.hpp"
#include "shortcut/optimizer.hpp"

namespace shortcut {

inline constexpr std::uint64_t kDefaultSeed = 20240917;

/// SplitMix64 finalizer.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Per-task random stream: std::mt19937_64 seeded by hashing
/// (master_seed, n, rep) through SplitMix64. Uniforms use the top 53 bits so
/// results do not depend on the standard library's distribution classes.
class TaskStream {
 public:
  TaskStream(std::uint64_t master_seed, std::uint64_t n, std::uint64_t rep)
      : engine_(mix64(mix64(mix64(master_seed) ^ n) ^ rep)) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// +1 with probability (1 + mean) / 2, else -1.
  int sign_with_mean(double mean) { return uniform() < (1.0 + mean) / 2.0 ? 1 : -1; }

 private:
  std::mt19937_64 engine_;
};

struct StateCounts {
  std::int64_t pp = 0;
  std::int64_t pm = 0;
  std::int64_t mp = 0;
  std::int64_t mm = 0;

  std::int64_t total() const { return pp + pm + mp + mm; }

  void add(int a, int b) {
    if (a > 0) {
      (b > 0 ? pp : pm) += 1;
    } else {
      (b > 0 ? mp : mm) += 1;
    }
  }

  StateCounts& operator+=(const StateCounts& o) {
    pp += o.pp;
    pm += o.pm;
    mp += o.mp;
    mm += o.mm;
    return *this;
  }

  friend bool operator==(const StateCounts&, const StateCounts&) = default;
};

struct SampleBatch {
  StateCounts counts;
  std::vector<StateCounts> per_family;

  std::int64_t n() const { return counts.total(); }

  StateDistribution fractions() const {
    const double n_total = static_cast<double>(n());
    if (n_total < 1.0) throw std::invalid_argument("empty sample batch");
    return {counts.pp / n_total, counts.pm / n_total, counts.mp / n_total,
            counts.mm / n_total, StateDistribution::Kind::Empirical};
  }
};

/// Deterministic largest-remainder split of n across the mixture weights.
/// Ties on the remainder go to the lower family index.
inline std::vector<std::int64_t> allocate_families(const TrainingMixture& mixture,
                                                   std::int64_t n) {
  const auto& weights = mixture.weights();
  std::vector<std::int64_t> alloc(weights.size());
  std::vector<double> remainder(weights.size());
  std::int64_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double exact = weights[i] * static_cast<double>(n);
    alloc[i] = static_cast<std::int64_t>(std::floor(exact));
    remainder[i] = exact - static_cast<double>(alloc[i]);
    assigned += alloc[i];
  }
  std::vector<std::size_t> order(weights.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) {
    alloc[order[k % order.size()]] += 1;
  }
  return alloc;
}

/// Stratified sample: fixed per-family sizes, then A ~ mean gamma and
/// B_e ~ mean rho_e independently within each family.
inline SampleBatch sample_batch(double gamma, const TrainingMixture& mixture, std::int64_t n,
                                TaskStream& stream) {
  if (n < 1) throw std::invalid_argument("sample size must be positive");
  SampleBatch batch;
  const auto alloc = allocate_families(mixture, n);
  batch.per_family.resize(alloc.size());
  for (std::size_t f = 0; f < alloc.size(); ++f) {
    const double rho = mixture.families()[f].rho();
    StateCounts& c = batch.per_family[f];
    for (std::int64_t i = 0; i < alloc[f]; ++i) {
      const int a = stream.sign_with_mean(gamma);
      const int b = stream.sign_with_mean(rho);
      c.add(a, b);
    }
    batch.counts += c;
  }
  return batch;
}

inline SampleBatch sample_batch(const NoisyParams& params, std::int64_t n, TaskStream& stream) {
  return sample_batch(params.gamma(), params.mixture(), n, stream);
}

/// Ridge-logistic ERM on the batch, solved channel by channel.
inline ChannelSolution empirical_erm(const SampleBatch& batch, const RidgeConfig& config) {
  return solve_channels(state_channels(batch.fractions(), config.lambda), config);
}

/// ERM over {f_Z, f_S}. f_Z errs on A = -1, f_S on B = -1, so the comparison
/// reduces to n_pm versus n_mp. Ties go to f_Z.
inline RulePair selector_erm(const SampleBatch& batch) {
  return batch.counts.pm < batch.counts.mp ? RulePair::ShortcutRule : RulePair::InvariantRule;
}

/// Exact 0-1 test risk of sign(w_z z + w_s s) on a noisy family with
/// E[A] = gamma and E[B] = rho_test.
inline double exact_test_error(const Weights& w, double gamma, double rho_test) {
  const StateDistribution s = population_states(gamma, rho_test);
  return s.p_pp * psi(w.w_z + w.w_s) + s.p_pm * psi(w.w_z - w.w_s) +
         s.p_mp * psi(-w.w_z + w.w_s) + s.p_mm * psi(-w.w_z - w.w_s);
}

inline double exact_test_error(const ChannelSolution& sol, double gamma, double rho_test) {
  return exact_test_error(sol.w, gamma, rho_test);
}

/// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline constexpr double kNormalQuantile975 = 1.959963984540054;

/// Mean and normal-approximation 95% half-width across repetitions.
struct MeanCi {
  double mean = 0.0;
  double half_width = 0.0;
  double sd = 0.0;
};

inline MeanCi mean_ci(const std::vector<double>& values) {
  if (values.size() < 2) throw std::invalid_argument("confidence interval needs >= 2 values");
  CompensatedSum sum;
  for (double x : values) sum.add(x);
  const double count = static_cast<double>(values.size());
  const double mean = sum.value() / count;
  CompensatedSum sq;
  for (double x : values) sq.add((x - mean) * (x - mean));
  const double sd = std::sqrt(sq.value() / (count - 1.0));
  return {mean, kNormalQuantile975 * sd / std::sqrt(count), sd};
}

/// Configuration for the repetition harness.
struct RepetitionPlan {
  double gamma = 0.55;
  TrainingMixture mixture = TrainingMixture::balanced({0.9, 0.7});
  std::vector<double> test_rhos = {-0.30, 0.70};
  std::vector<std::int64_t> sizes;
  std::int64_t reps = 1400;
  RidgeConfig ridge;
  std::uint64_t master_seed = kDefaultSeed;
  unsigned threads = 1;
};

struct RepetitionSummary {
  std::int64_t n = 0;
  std::int64_t reps = 0;
  std::uint64_t seed = 0;
  double shortcut_rate = 0.0;
  double shortcut_rate_ci = 0.0;
  double selector_shortcut_rate = 0.0;
  double selector_rate_ci = 0.0;
  std::vector<double> mean_test_error;
  std::vector<double> test_error_ci;
  std::int64_t degenerate_count = 0;
};

/// Outcome of one repetition; kept so aggregation runs in rep order.
struct RepetitionOutcome {
  bool shortcut = false;
  bool degenerate = false;
  bool selector_shortcut = false;
  std::vector<double> test_errors;
};

inline RepetitionOutcome run_one(const RepetitionPlan& plan, std::int64_t n, std::int64_t rep) {
  TaskStream stream(plan.master_seed, static_cast<std::uint64_t>(n),
                    static_cast<std::uint64_t>(rep));
  const SampleBatch batch = sample_batch(plan.gamma, plan.mixture, n, stream);
  const ChannelSolution sol = empirical_erm(batch, plan.ridge);
  const InducedRule rule = induced_rule(sol, plan.ridge.tol_sign);
  RepetitionOutcome out;
  out.shortcut = is_rule(rule, RulePair::ShortcutRule);
  out.degenerate = std::holds_alternative<Degenerate>(rule);
  out.selector_shortcut = selector_erm(batch) == RulePair::ShortcutRule;
  out.test_errors.reserve(plan.test_rhos.size());
  for (double rho_test : plan.test_rhos) {
    out.test_errors.push_back(exact_test_error(sol, plan.gamma, rho_test));
  }
  return out;
}

inline std::vector<RepetitionSummary> run_repetitions(const RepetitionPlan& plan) {
  if (plan.sizes.empty()) throw std::invalid_argument("no sample sizes given");
  if (plan.reps < 2) throw std::invalid_argument("need at least 2 repetitions");
  for (auto n : plan.sizes) {
    if (n < 1) throw std::invalid_argument("sample sizes must be positive");
  }
  for (double r : plan.test_rhos) FamilySpec check(r);
  if (!(plan.gamma > 0.0 && plan.gamma <= 1.0)) {
    throw std::invalid_argument("gamma must lie in (0, 1]");
  }
  plan.ridge.validate();

  std::vector<RepetitionSummary> summaries;
  summaries.reserve(plan.sizes.size());
  const auto reps = static_cast<std::size_t>(plan.reps);
  std::vector<RepetitionOutcome> outcomes(reps);
  for (std::int64_t n : plan.sizes) {
    parallel_for(reps, plan.threads, [&](std::size_t rep) {
      outcomes[rep] = run_one(plan, n, static_cast<std::int64_t>(rep));
    });

    RepetitionSummary s;
    s.n = n;
    s.reps = plan.reps;
    s.seed = plan.master_seed;
    std::vector<double> column(reps);
    for (std::size_t r = 0; r < reps; ++r) column[r] = outcomes[r].shortcut ? 1.0 : 0.0;
    MeanCi ci = mean_ci(column);
    s.shortcut_rate = ci.mean;
    s.shortcut_rate_ci = ci.half_width;
    for (std::size_t r = 0; r < reps; ++r) column[r] = outcomes[r].selector_shortcut ? 1.0 : 0.0;
    ci = mean_ci(column);
    s.selector_shortcut_rate = ci.mean;
    s.selector_rate_ci = ci.half_width;
    for (std::size_t t = 0; t < plan.test_rhos.size(); ++t) {
      for (std::size_t r = 0; r < reps; ++r) column[r] = outcomes[r].test_errors[t];
      ci = mean_ci(column);
      s.mean_test_error.push_back(ci.mean);
      s.test_error_ci.push_back(ci.half_width);
    }
    for (const auto& o : outcomes) s.degenerate_count += o.degenerate ? 1 : 0;
    summaries.push_back(std::move(s));
  }
  return summaries;
}

/// `count` sample sizes linearly spaced on [lo, hi], rounded to integers.
inline std::vector<std::int64_t> linear_sizes(std::int64_t lo, std::int64_t hi,
                                              std::size_t count) {
  std::vector<std::int64_t> out;
  for (double x : linspace(static_cast<double>(lo), static_cast<double>(hi), count)) {
    out.push_back(std::llround(x));
  }
  return out;
}

}  // namespace shortcut

#endif  // SHORTCUT_MONTECARLO_HPP
