#pragma once

#include <vector>

#include "symdiff/geometry.hpp"
#include "symdiff/rng.hpp"

namespace symdiff {

/// Discrete variance-preserving noise schedule (alpha_t, sigma_t), t = 0..T.
///
/// Invariants: alpha_t, sigma_t > 0; alpha_t^2 + sigma_t^2 = 1 within 1e-12; SNR(t) =
/// alpha_t^2 / sigma_t^2 strictly decreasing.
class NoiseSchedule {
 public:
  NoiseSchedule(std::vector<double> alpha, std::vector<double> sigma);

  int T() const noexcept { return static_cast<int>(alpha_.size()) - 1; }
  double alpha(int t) const;
  double sigma(int t) const;
  double snr(int t) const;

  // Transition constants of q(z_t | z_{t-1}), t >= 1.
  double alpha_ts(int t) const;
  double sigma2_ts(int t) const;
  // Variance of the posterior q(z_{t-1} | z_t, z_0), t >= 1.
  double sigma_q2(int t) const;
  // Positive ELBO weight SNR(t-1)/SNR(t) - 1, t >= 1.
  double w_snr(int t) const;

  const std::vector<double>& alphas() const noexcept { return alpha_; }
  const std::vector<double>& sigmas() const noexcept { return sigma_; }

 private:
  void check_step(int t, int lo) const;

  std::vector<double> alpha_;
  std::vector<double> sigma_;
};

enum class ScheduleKind { cosine, linear };

// alpha_bar_t proportional to cos^2(((t/T) + s)/(1 + s) * pi/2), per-step ratios clipped to
// [0.001, 1], then mapped to [1e-5, 1 - 1e-5] so that both alpha and sigma stay positive.
NoiseSchedule make_cosine_schedule(int T, double s = 0.008);
// alpha_bar_t linear in t from 1 to 0, with the same clipping and endpoint mapping.
NoiseSchedule make_linear_schedule(int T);
NoiseSchedule make_schedule(ScheduleKind kind, int T);

/// Continuous-time counterpart of the cosine schedule on tau in [0, 1].
class ContinuousSchedule {
 public:
  explicit ContinuousSchedule(double s = 0.008) : s_(s) {}
  double alpha(double tau) const;
  // Clamped below at 1e-4.
  double sigma(double tau) const;

 private:
  double alpha_bar(double tau) const;
  double s_;
};

struct PosteriorParams {
  NBodyState mu_q;
  double sigma_q = 0.0;
};

// Dimension of the centre-of-mass-free subspace: (N - 1) * 3 + N * d.
std::size_t subspace_dim(std::size_t n, std::size_t d);

// alpha_t z0 + sigma_t eps; both inputs must be centred within 1e-9.
NBodyState forward_sample(const NBodyState& z0, int t, const NBodyState& eps, const NoiseSchedule& sched);
NBodyState forward_sample(const NBodyState& z0, const NBodyState& eps, double alpha, double sigma);

// Parameters of q(z_{t-1} | z_t, z_0) for 2 <= t <= T.
PosteriorParams posterior_params(const NBodyState& zt, const NBodyState& z0, int t, const NoiseSchedule& sched);

// mu + sigma proj_U(eps) with eps standard normal on N x (3 + d); positions drawn before features.
NBodyState sample_projected_gaussian(const NBodyState& mu, double sigma, RngStream& stream);
// Standard projected Gaussian N_U(0, I) of the given size.
NBodyState sample_projected_normal(std::size_t n, std::size_t d, RngStream& stream);

// log N_U(z; mu, sigma^2 I) = -|z - mu|^2 / (2 sigma^2) - D/2 log(2 pi sigma^2).
double log_density_projected_gaussian(const NBodyState& z, const NBodyState& mu, double sigma);

}  // namespace symdiff
