#include "symdiff/symkernel.hpp"

#include <algorithm>
#include <cmath>

#include "symdiff/errors.hpp"
#include "symdiff/linalg3.hpp"
#include "symdiff/ortho.hpp"
#include "symdiff/schedule.hpp"

namespace symdiff {

NBodyState symmetrise_sample(const GammaSampler& gamma, const KernelSampler& k, const NBodyState& x, RngStream& stream) {
  if (!is_centered(x, 1e-9)) throw ContractError("symmetrise_sample input must be centred");
  const Tensor g = gamma.sample(x, stream);
  const NBodyState y = k.sample(rotate(g.transposed(), x), stream);
  return rotate(g, y);
}

double conjugated_log_density(const KernelSampler& k, const Tensor& g, const NBodyState& y, const NBodyState& x) {
  if (!k.log_density) throw ContractError("kernel has no log_density");
  const Tensor gt = g.transposed();
  return k.log_density(rotate(gt, y), rotate(gt, x));
}

GammaSampler make_haar_gamma() {
  return {[](const NBodyState&, RngStream& stream) { return sample_haar(stream); }};
}

GammaSampler make_dirac_gamma() {
  return {[](const NBodyState&, RngStream&) { return Tensor::identity(3); }};
}

GammaSampler make_fixed_gamma(Tensor rot) {
  return {[rot = std::move(rot)](const NBodyState&, RngStream&) { return rot; }};
}

Tensor sample_rotation_noise(std::size_t n, RngStream& stream) { return center_rows(randn(stream, {n, 3})); }

GammaSampler make_recursive_gamma(RotationNet f) {
  return {[f = std::move(f)](const NBodyState& z, RngStream& stream) {
    const Tensor r0 = sample_haar(stream);
    const Tensor eta = sample_rotation_noise(z.n(), stream);
    Tensor r = matmul(r0, f(rotate(r0.transposed(), z), eta));
    if (linalg3::orthogonality_error(r) > 1e-10) r = linalg3::gram_schmidt(r);
    return r;
  }};
}

double log_mean_exp(const std::vector<double>& values) {
  if (values.empty()) throw ContractError("log_mean_exp of empty set");
  const double m = *std::max_element(values.begin(), values.end());
  double s = 0.0;
  for (double v : values) s += std::exp(v - m);
  return m + std::log(s / static_cast<double>(values.size()));
}

namespace {
std::vector<double> conjugated_draws(const GammaSampler& gamma, const KernelSampler& k, const NBodyState& y, const NBodyState& x,
                                     int n_mc, RngStream& stream) {
  if (n_mc < 1) throw ContractError("n_mc must be >= 1");
  std::vector<double> logs;
  logs.reserve(static_cast<std::size_t>(n_mc));
  for (int i = 0; i < n_mc; ++i) logs.push_back(conjugated_log_density(k, gamma.sample(x, stream), y, x));
  return logs;
}
}  // namespace

double mc_log_density_symmetrised(const GammaSampler& gamma, const KernelSampler& k, const NBodyState& y,
                                  const NBodyState& x, int n_mc, RngStream& stream) {
  return log_mean_exp(conjugated_draws(gamma, k, y, x, n_mc, stream));
}

double mc_expected_log_density(const GammaSampler& gamma, const KernelSampler& k, const NBodyState& y, const NBodyState& x,
                               int n_mc, RngStream& stream) {
  const auto logs = conjugated_draws(gamma, k, y, x, n_mc, stream);
  double s = 0.0;
  for (double v : logs) s += v;
  return s / static_cast<double>(logs.size());
}

KernelSampler make_projected_gaussian_kernel(std::function<NBodyState(const NBodyState&)> mean, double sigma) {
  KernelSampler k;
  k.sample = [mean, sigma](const NBodyState& x, RngStream& stream) { return sample_projected_gaussian(mean(x), sigma, stream); };
  k.log_density = [mean, sigma](const NBodyState& y, const NBodyState& x) { return log_density_projected_gaussian(y, mean(x), sigma); };
  return k;
}

}  // namespace symdiff
