#pragma once

#include <functional>

#include "symdiff/autodiff.hpp"
#include "symdiff/geometry.hpp"
#include "symdiff/nets.hpp"
#include "symdiff/rng.hpp"
#include "symdiff/schedule.hpp"

namespace symdiff {

// Which O(3)-valued kernel conjugates the network.
//   recursive: R0 ~ Haar, R = R0 f(R0^T z, eta)   (learned, reparameterised)
//   haar:      R ~ Haar, independent of z
//   dirac:     R = I
//   none:      no conjugation at all (the unsymmetrised model)
enum class GammaKind { recursive, haar, dirac, none };

enum class WeightMode { unit, snr };

/// A differentiable model seen by the losses: a per-point field (noise, score or velocity
/// prediction) and a reparameterised rotation sampler. Rotation draws read the stream.
struct ModelView {
  std::function<ad::Var(ad::Var z, double t)> field;
  std::function<ad::Var(ad::Var z, double t, RngStream& stream)> rotation;
};

// Binds the networks of `graph`. For GammaKind::none the rotation sampler returns I without
// touching the stream.
ModelView bind_model(NetGraph& graph, GammaKind gamma);

double loss_weight(const NoiseSchedule& sched, int t, WeightMode mode);

/// 1/2 w(t) |eps - R eps_theta(R^T z_t)|^2 with z_t = alpha_t z0 + sigma_t eps. Draws eps, then R.
ad::Var symdiff_step_loss(ad::Tape& tape, const ModelView& model, const NBodyState& z0, int t, const NoiseSchedule& sched,
                          RngStream& stream, WeightMode w);
ad::Var symdiff_step_loss_given(ad::Tape& tape, const ModelView& model, const NBodyState& z0, const NBodyState& eps, ad::Var rot,
                                int t, const NoiseSchedule& sched, WeightMode w);

/// Standard diffusion loss 1/2 w(t) |eps - eps_theta(z_t)|^2.
ad::Var plain_step_loss(ad::Tape& tape, const ModelView& model, const NBodyState& z0, int t, const NoiseSchedule& sched,
                        RngStream& stream, WeightMode w);
ad::Var plain_step_loss_given(ad::Tape& tape, const ModelView& model, const NBodyState& z0, const NBodyState& eps, int t,
                              const NoiseSchedule& sched, WeightMode w);

/// Augmentation loss 1/2 w(t) |eps - eps_theta(alpha_t R z0 + sigma_t eps)|^2, R ~ Haar. Draws eps, then R.
ad::Var aug_step_loss(ad::Tape& tape, const ModelView& model, const NBodyState& z0, int t, const NoiseSchedule& sched,
                      RngStream& stream, WeightMode w);
ad::Var aug_step_loss_given(ad::Tape& tape, const ModelView& model, const NBodyState& z0, const NBodyState& eps, const Tensor& rot,
                            int t, const NoiseSchedule& sched, WeightMode w);

/// KL(N_U(alpha_T z0, sigma_T^2 I) || N_U(0, I)) on the (N-1)*3 + N*d dimensional subspace.
double prior_kl(const NBodyState& z0, const NoiseSchedule& sched);

/// -log k(z0 | R, z1) for the final Gaussian kernel with mean z1/alpha_1 - (sigma_1/alpha_1) R eps_theta(R^T z1)
/// and variance sigma_1^2/alpha_1^2. Positions and features are both treated as continuous.
ad::Var final_step_loss(ad::Tape& tape, const ModelView& model, const NBodyState& z0, const NoiseSchedule& sched, RngStream& stream);
ad::Var final_step_loss_given(ad::Tape& tape, const ModelView& model, const NBodyState& z0, const NBodyState& eps, ad::Var rot,
                              const NoiseSchedule& sched);
// Same kernel without conjugation.
ad::Var plain_final_step_loss(ad::Tape& tape, const ModelView& model, const NBodyState& z0, const NoiseSchedule& sched,
                              RngStream& stream);
// Additive constant D/2 log(2 pi sigma_1^2 / alpha_1^2) of the final-step loss.
double final_step_constant(std::size_t n, std::size_t d, const NoiseSchedule& sched);

struct NllBound {
  double prior_kl = 0.0;
  double diffusion = 0.0;  // (T - 1) * mean of sampled L_t
  double final_step = 0.0; // L_1
  double total() const { return prior_kl + diffusion + final_step; }
};

/// Unbiased estimate of the negative surrogate bound, in nats. Timesteps are drawn uniformly
/// from {2..T} with importance weight T - 1; L_t uses the SNR weight. GammaKind::none gives the
/// standard diffusion bound.
NllBound estimate_nll_bound(ad::Tape& tape, const ModelView& model, GammaKind gamma, const NBodyState& z0, const NoiseSchedule& sched,
                            RngStream& stream, int n_t_samples);

// Convenience: evaluates the bound with the networks in `params`.
NllBound estimate_nll_bound(const ParamStore& params, const NetConfig& cfg, GammaKind gamma, const NBodyState& z0,
                            const NoiseSchedule& sched, RngStream& stream, int n_t_samples);

}  // namespace symdiff
