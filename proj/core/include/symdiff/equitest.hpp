#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "symdiff/geometry.hpp"
#include "symdiff/rng.hpp"
#include "symdiff/symkernel.hpp"

namespace symdiff {

using SampleSet = std::vector<std::vector<double>>;

// Flattened states (row-major x, then row-major h), one row per state.
SampleSet flatten_all(const std::vector<NBodyState>& states);

/// Energy distance 2 E|a - b| - E|a - a'| - E|b - b'| with U-statistic within-sample terms.
double energy_distance(const SampleSet& a, const SampleSet& b);

struct TwoSampleResult {
  double statistic = 0.0;
  double p_value = 1.0;
  bool reject = false;
};

/// Permutation test on the energy distance: p = (1 + #{perm stat >= observed}) / (n_perm + 1).
TwoSampleResult perm_two_sample_test(const SampleSet& a, const SampleSet& b, int n_perm, double alpha, RngStream& stream);

struct EquivarianceReport {
  std::string kind;  // "equivariance" or "invariance"
  std::size_t n = 0;
  int n_perm = 0;
  double alpha = 0.0;
  TwoSampleResult result;
  std::vector<double> mean_a;
  std::vector<double> mean_b;

  std::string to_text() const;
};

inline constexpr int kDefaultPermutations = 200;

/// Compares n draws of k(. | g x) with n draws of g k(. | x).
EquivarianceReport test_stochastic_equivariance(const KernelSampler& k, const NBodyState& x, const GroupElement& g, std::size_t n,
                                                double alpha, RngStream& stream, int n_perm = kDefaultPermutations);

/// Compares n draws of the sampler with g applied to n further, independent draws.
EquivarianceReport test_distributional_invariance(const std::function<NBodyState(RngStream&)>& sampler, const GroupElement& g,
                                                  std::size_t n, double alpha, RngStream& stream, int n_perm = kDefaultPermutations);
// Same test on two pre-drawn independent pools of equal size: pool_a against g pool_b.
EquivarianceReport test_distributional_invariance(const std::vector<NBodyState>& pool_a, const std::vector<NBodyState>& pool_b,
                                                  const GroupElement& g, double alpha, RngStream& stream, int n_perm = kDefaultPermutations);

}  // namespace symdiff
