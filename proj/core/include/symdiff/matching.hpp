#pragma once

#include "symdiff/autodiff.hpp"
#include "symdiff/geometry.hpp"
#include "symdiff/objective.hpp"
#include "symdiff/rng.hpp"
#include "symdiff/sampler.hpp"
#include "symdiff/schedule.hpp"

namespace symdiff {

/// Symmetrised denoising score matching on the VP conditional p(x_t | x0) = N_U(alpha x0, sigma^2 I):
///   sigma^2 |R s_theta(R^T x_t) - score|^2,   score = -(x_t - alpha x0) / sigma^2 = -eps / sigma.
/// Draws tau ~ U(0, 1], then eps, then R. The network sees time tau.
ad::Var sym_score_loss(ad::Tape& tape, const ModelView& model, const NBodyState& x0, const ContinuousSchedule& cs, RngStream& stream);
ad::Var sym_score_loss_given(ad::Tape& tape, const ModelView& model, const NBodyState& x0, const NBodyState& eps, double tau,
                             ad::Var rot, const ContinuousSchedule& cs);
// Unsymmetrised counterpart; draws tau, then eps.
ad::Var score_loss(ad::Tape& tape, const ModelView& model, const NBodyState& x0, const ContinuousSchedule& cs, RngStream& stream);
ad::Var score_loss_given(ad::Tape& tape, const ModelView& model, const NBodyState& x0, const NBodyState& eps, double tau,
                         const ContinuousSchedule& cs);

/// Symmetrised conditional flow matching on the linear path x_t = (1 - tau) x0 + tau x1 with
/// x0 ~ N_U(0, I): |R v_theta(R^T x_t) - (x1 - x0)|^2. Draws tau ~ U[0, 1), then x0, then R.
ad::Var sym_flow_loss(ad::Tape& tape, const ModelView& model, const NBodyState& x1, RngStream& stream);
ad::Var sym_flow_loss_given(ad::Tape& tape, const ModelView& model, const NBodyState& x1, const NBodyState& x0, double tau,
                            ad::Var rot);
ad::Var flow_loss(ad::Tape& tape, const ModelView& model, const NBodyState& x1, RngStream& stream);
ad::Var flow_loss_given(ad::Tape& tape, const ModelView& model, const NBodyState& x1, const NBodyState& x0, double tau);

/// Euler integration of the symmetrised flow: x0 ~ N_U(0, I), then per step draw R and set
/// x <- x + dt R v(R^T x, t_i), t_i = i / steps.
NBodyState euler_generate_flow(const ReverseModel& model, std::size_t n, std::size_t d, int steps, RngStream& stream);

}  // namespace symdiff
