#include "symdiff/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "symdiff/errors.hpp"

namespace symdiff {

namespace {

constexpr double kCenterTol = 1e-9;
constexpr double kEndpoint = 1e-5;
constexpr double kMinStep = 0.001;

NoiseSchedule from_alpha_bar(std::vector<double> abar) {
  // Clip per-step ratios, then rebuild the cumulative product.
  std::vector<double> clipped(abar.size());
  clipped[0] = 1.0;
  for (std::size_t t = 1; t < abar.size(); ++t) {
    const double ratio = abar[t - 1] > 0.0 ? abar[t] / abar[t - 1] : 0.0;
    clipped[t] = clipped[t - 1] * std::clamp(ratio, kMinStep, 1.0);
  }
  std::vector<double> alpha(abar.size()), sigma(abar.size());
  for (std::size_t t = 0; t < abar.size(); ++t) {
    const double a2 = (1.0 - 2.0 * kEndpoint) * clipped[t] + kEndpoint;
    alpha[t] = std::sqrt(a2);
    sigma[t] = std::sqrt(1.0 - a2);
  }
  return NoiseSchedule(std::move(alpha), std::move(sigma));
}

void require_centered(const NBodyState& z, const char* what) {
  if (!is_centered(z, kCenterTol)) throw ContractError(std::string(what) + " must be centred (CoM-free)");
}

}  // namespace

NoiseSchedule::NoiseSchedule(std::vector<double> alpha, std::vector<double> sigma) : alpha_(std::move(alpha)), sigma_(std::move(sigma)) {
  if (alpha_.size() != sigma_.size() || alpha_.size() < 2) throw ContractError("schedule needs matching alpha/sigma arrays with T >= 1");
  for (std::size_t t = 0; t < alpha_.size(); ++t) {
    if (!(alpha_[t] > 0.0) || !(sigma_[t] > 0.0)) throw ContractError("schedule alpha and sigma must be positive");
    if (std::abs(alpha_[t] * alpha_[t] + sigma_[t] * sigma_[t] - 1.0) > 1e-12) {
      throw ContractError("schedule violates alpha^2 + sigma^2 = 1 at t = " + std::to_string(t));
    }
    if (t > 0 && !(snr(static_cast<int>(t)) < snr(static_cast<int>(t) - 1))) {
      throw ContractError("schedule SNR not strictly decreasing at t = " + std::to_string(t));
    }
  }
}

void NoiseSchedule::check_step(int t, int lo) const {
  if (t < lo || t > T()) throw ContractError("timestep " + std::to_string(t) + " outside [" + std::to_string(lo) + ", " + std::to_string(T()) + "]");
}

double NoiseSchedule::alpha(int t) const {
  check_step(t, 0);
  return alpha_[t];
}

double NoiseSchedule::sigma(int t) const {
  check_step(t, 0);
  return sigma_[t];
}

double NoiseSchedule::snr(int t) const {
  check_step(t, 0);
  return alpha_[t] * alpha_[t] / (sigma_[t] * sigma_[t]);
}

double NoiseSchedule::alpha_ts(int t) const {
  check_step(t, 1);
  return alpha_[t] / alpha_[t - 1];
}

double NoiseSchedule::sigma2_ts(int t) const {
  const double a = alpha_ts(t);
  return sigma_[t] * sigma_[t] - a * a * sigma_[t - 1] * sigma_[t - 1];
}

double NoiseSchedule::sigma_q2(int t) const { return sigma2_ts(t) * sigma_[t - 1] * sigma_[t - 1] / (sigma_[t] * sigma_[t]); }

double NoiseSchedule::w_snr(int t) const {
  check_step(t, 1);
  return snr(t - 1) / snr(t) - 1.0;
}

NoiseSchedule make_cosine_schedule(int T, double s) {
  if (T < 2) throw ContractError("cosine schedule needs T >= 2");
  auto f = [&](double t) {
    const double c = std::cos(((t / T) + s) / (1.0 + s) * std::numbers::pi / 2.0);
    return c * c;
  };
  std::vector<double> abar(static_cast<std::size_t>(T) + 1);
  for (int t = 0; t <= T; ++t) abar[t] = f(t) / f(0);
  return from_alpha_bar(std::move(abar));
}

NoiseSchedule make_linear_schedule(int T) {
  if (T < 1) throw ContractError("linear schedule needs T >= 1");
  std::vector<double> abar(static_cast<std::size_t>(T) + 1);
  for (int t = 0; t <= T; ++t) abar[t] = 1.0 - static_cast<double>(t) / T;
  return from_alpha_bar(std::move(abar));
}

NoiseSchedule make_schedule(ScheduleKind kind, int T) {
  return kind == ScheduleKind::cosine ? make_cosine_schedule(T) : make_linear_schedule(T);
}

double ContinuousSchedule::alpha_bar(double tau) const {
  auto f = [&](double t) {
    const double c = std::cos((t + s_) / (1.0 + s_) * std::numbers::pi / 2.0);
    return c * c;
  };
  const double raw = std::clamp(f(std::clamp(tau, 0.0, 1.0)) / f(0.0), 0.0, 1.0);
  return (1.0 - 2.0 * kEndpoint) * raw + kEndpoint;
}

double ContinuousSchedule::alpha(double tau) const { return std::sqrt(alpha_bar(tau)); }

double ContinuousSchedule::sigma(double tau) const { return std::max(std::sqrt(1.0 - alpha_bar(tau)), 1e-4); }

std::size_t subspace_dim(std::size_t n, std::size_t d) { return (n - 1) * 3 + n * d; }

NBodyState forward_sample(const NBodyState& z0, const NBodyState& eps, double alpha, double sigma) {
  require_centered(z0, "forward_sample z0");
  require_centered(eps, "forward_sample eps");
  return alpha * z0 + sigma * eps;
}

NBodyState forward_sample(const NBodyState& z0, int t, const NBodyState& eps, const NoiseSchedule& sched) {
  if (t < 1 || t > sched.T()) throw ContractError("forward_sample timestep out of range");
  return forward_sample(z0, eps, sched.alpha(t), sched.sigma(t));
}

PosteriorParams posterior_params(const NBodyState& zt, const NBodyState& z0, int t, const NoiseSchedule& sched) {
  if (t < 2 || t > sched.T()) throw ContractError("posterior_params needs 2 <= t <= T");
  require_centered(zt, "posterior_params z_t");
  require_centered(z0, "posterior_params z_0");
  const double s2t = sched.sigma(t) * sched.sigma(t);
  const double s2prev = sched.sigma(t - 1) * sched.sigma(t - 1);
  const double c_t = sched.alpha_ts(t) * s2prev / s2t;
  const double c_0 = sched.alpha(t - 1) * sched.sigma2_ts(t) / s2t;
  return {c_t * zt + c_0 * z0, std::sqrt(sched.sigma_q2(t))};
}

NBodyState sample_projected_normal(std::size_t n, std::size_t d, RngStream& stream) {
  Tensor x = randn(stream, {n, 3});
  Tensor h = randn(stream, {n, d});
  return proj_u(NBodyState(std::move(x), std::move(h)));
}

NBodyState sample_projected_gaussian(const NBodyState& mu, double sigma, RngStream& stream) {
  if (!(sigma >= 0.0)) throw ContractError("projected Gaussian needs sigma >= 0");
  require_centered(mu, "projected Gaussian mean");
  NBodyState eps = sample_projected_normal(mu.n(), mu.d(), stream);
  if (sigma == 0.0) return mu;
  return mu + sigma * eps;
}

double log_density_projected_gaussian(const NBodyState& z, const NBodyState& mu, double sigma) {
  if (!(sigma > 0.0)) throw ContractError("projected Gaussian log-density needs sigma > 0");
  const double dim = static_cast<double>(subspace_dim(z.n(), z.d()));
  const double r2 = squared_norm(z - mu);
  return -r2 / (2.0 * sigma * sigma) - 0.5 * dim * std::log(2.0 * std::numbers::pi * sigma * sigma);
}

}  // namespace symdiff
