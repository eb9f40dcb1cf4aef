#pragma once

#include <functional>

#include "symdiff/geometry.hpp"
#include "symdiff/rng.hpp"

namespace symdiff {

/// Conditional sampler k(dy | x), optionally with a density.
struct KernelSampler {
  std::function<NBodyState(const NBodyState& x, RngStream& stream)> sample;
  // log k(y | x); empty when the kernel has no tractable density.
  std::function<double(const NBodyState& y, const NBodyState& x)> log_density;
};

/// Kernel into O(3). Only the rotation component of S_N x O(3) is sampled: the permutation
/// part is carried by the S_N-equivariance of the networks themselves.
struct GammaSampler {
  std::function<Tensor(const NBodyState& x, RngStream& stream)> sample;
};

// f(z, eta) -> 3x3 orthogonal matrix; must be S_N-invariant for jointly permuted (z, eta).
using RotationNet = std::function<Tensor(const NBodyState& z, const Tensor& eta)>;

/// One draw from sym_gamma(k)(. | x): g ~ gamma(. | x), y ~ k(. | g^T x), return g y.
NBodyState symmetrise_sample(const GammaSampler& gamma, const KernelSampler& k, const NBodyState& x, RngStream& stream);

/// log k(y | g, x) = log k(g^T y | g^T x); valid because the O(3) action has unit Jacobian.
double conjugated_log_density(const KernelSampler& k, const Tensor& g, const NBodyState& y, const NBodyState& x);

GammaSampler make_haar_gamma();
GammaSampler make_dirac_gamma();
GammaSampler make_fixed_gamma(Tensor rot);

/// Recursive base case: R0 ~ Haar, then eta ~ N_U(0, I) on N x 3, return R0 f(R0^T z, eta).
/// Draw order from the stream is R0 first, then eta.
GammaSampler make_recursive_gamma(RotationNet f);

// Centred standard normal noise eta of shape N x 3.
Tensor sample_rotation_noise(std::size_t n, RngStream& stream);

/// Monte-Carlo estimate of log sym_gamma(k)(y | x) = log E_gamma[k(y | g, x)] by log-mean-exp
/// over n_mc draws. Biased low for finite n_mc; meant for diagnostics.
double mc_log_density_symmetrised(const GammaSampler& gamma, const KernelSampler& k, const NBodyState& y,
                                  const NBodyState& x, int n_mc, RngStream& stream);

/// Mean of log k(y | g, x) over n_mc draws of g: the surrogate (Jensen) term.
double mc_expected_log_density(const GammaSampler& gamma, const KernelSampler& k, const NBodyState& y, const NBodyState& x,
                               int n_mc, RngStream& stream);

/// Projected Gaussian kernel N_U(y; mean(x), sigma^2 I).
KernelSampler make_projected_gaussian_kernel(std::function<NBodyState(const NBodyState&)> mean, double sigma);

// Log of the mean of exp(values), computed stably.
double log_mean_exp(const std::vector<double>& values);

}  // namespace symdiff
