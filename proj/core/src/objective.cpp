#include "symdiff/objective.hpp"

#include <cmath>
#include <numbers>

#include "symdiff/errors.hpp"
#include "symdiff/ortho.hpp"
#include "symdiff/symkernel.hpp"

namespace symdiff {

namespace {

constexpr double kCenterTol = 1e-9;

void require_centered(const NBodyState& z, const char* what) {
  if (!is_centered(z, kCenterTol)) throw ContractError(std::string(what) + " must be centred");
}

void require_step(int t, const NoiseSchedule& sched) {
  if (t < 2 || t > sched.T()) throw ContractError("step loss needs 2 <= t <= T, got t = " + std::to_string(t));
}

double normalised_time(int t, const NoiseSchedule& sched) { return static_cast<double>(t) / sched.T(); }

// R eps_theta(R^T z).
ad::Var conjugated_field(const ModelView& model, ad::Var z, ad::Var rot, double t) {
  ad::Var inner = ad::rotate_points(z, ad::transpose(rot));
  return ad::rotate_points(model.field(inner, t), rot);
}

ad::Var half_weighted_error(ad::Var target, ad::Var pred, double w) {
  return ad::scale(ad::sum_squares(ad::sub(target, pred)), 0.5 * w);
}

}  // namespace

ModelView bind_model(NetGraph& graph, GammaKind gamma) {
  ModelView view;
  view.field = [&graph](ad::Var z, double t) { return graph.eps(z, t); };
  switch (gamma) {
    case GammaKind::recursive:
      view.rotation = [&graph](ad::Var z, double t, RngStream& stream) {
        ad::Tape& tape = graph.tape();
        const Tensor r0 = sample_haar(stream);
        const Tensor eta = sample_rotation_noise(z.value().rows(), stream);
        ad::Var r0v = tape.constant(r0);
        ad::Var inner = ad::rotate_points(z, tape.constant(r0.transposed()));
        auto f = graph.rotation(inner, tape.constant(eta), t);
        return ad::matmul(r0v, f.rot);
      };
      break;
    case GammaKind::haar:
      view.rotation = [&graph](ad::Var, double, RngStream& stream) { return graph.tape().constant(sample_haar(stream)); };
      break;
    case GammaKind::dirac:
    case GammaKind::none:
      view.rotation = [&graph](ad::Var, double, RngStream&) { return graph.tape().constant(Tensor::identity(3)); };
      break;
  }
  return view;
}

double loss_weight(const NoiseSchedule& sched, int t, WeightMode mode) { return mode == WeightMode::unit ? 1.0 : sched.w_snr(t); }

ad::Var symdiff_step_loss_given(ad::Tape& tape, const ModelView& model, const NBodyState& z0, const NBodyState& eps, ad::Var rot,
                                int t, const NoiseSchedule& sched, WeightMode w) {
  require_step(t, sched);
  const NBodyState zt = forward_sample(z0, t, eps, sched);
  ad::Var pred = conjugated_field(model, tape.constant(zt.pack()), rot, normalised_time(t, sched));
  return half_weighted_error(tape.constant(eps.pack()), pred, loss_weight(sched, t, w));
}

ad::Var symdiff_step_loss(ad::Tape& tape, const ModelView& model, const NBodyState& z0, int t, const NoiseSchedule& sched,
                          RngStream& stream, WeightMode w) {
  require_step(t, sched);
  require_centered(z0, "symdiff_step_loss z0");
  const NBodyState eps = sample_projected_normal(z0.n(), z0.d(), stream);
  const NBodyState zt = forward_sample(z0, t, eps, sched);
  ad::Var rot = model.rotation(tape.constant(zt.pack()), normalised_time(t, sched), stream);
  return symdiff_step_loss_given(tape, model, z0, eps, rot, t, sched, w);
}

ad::Var plain_step_loss_given(ad::Tape& tape, const ModelView& model, const NBodyState& z0, const NBodyState& eps, int t,
                              const NoiseSchedule& sched, WeightMode w) {
  require_step(t, sched);
  const NBodyState zt = forward_sample(z0, t, eps, sched);
  ad::Var pred = model.field(tape.constant(zt.pack()), normalised_time(t, sched));
  return half_weighted_error(tape.constant(eps.pack()), pred, loss_weight(sched, t, w));
}

ad::Var plain_step_loss(ad::Tape& tape, const ModelView& model, const NBodyState& z0, int t, const NoiseSchedule& sched,
                        RngStream& stream, WeightMode w) {
  require_step(t, sched);
  require_centered(z0, "plain_step_loss z0");
  const NBodyState eps = sample_projected_normal(z0.n(), z0.d(), stream);
  return plain_step_loss_given(tape, model, z0, eps, t, sched, w);
}

ad::Var aug_step_loss_given(ad::Tape& tape, const ModelView& model, const NBodyState& z0, const NBodyState& eps, const Tensor& rot,
                            int t, const NoiseSchedule& sched, WeightMode w) {
  require_step(t, sched);
  const NBodyState zt = forward_sample(rotate(rot, z0), t, eps, sched);
  ad::Var pred = model.field(tape.constant(zt.pack()), normalised_time(t, sched));
  return half_weighted_error(tape.constant(eps.pack()), pred, loss_weight(sched, t, w));
}

ad::Var aug_step_loss(ad::Tape& tape, const ModelView& model, const NBodyState& z0, int t, const NoiseSchedule& sched,
                      RngStream& stream, WeightMode w) {
  require_step(t, sched);
  require_centered(z0, "aug_step_loss z0");
  const NBodyState eps = sample_projected_normal(z0.n(), z0.d(), stream);
  const Tensor rot = sample_haar(stream);
  return aug_step_loss_given(tape, model, z0, eps, rot, t, sched, w);
}

double prior_kl(const NBodyState& z0, const NoiseSchedule& sched) {
  require_centered(z0, "prior_kl z0");
  const double dim = static_cast<double>(subspace_dim(z0.n(), z0.d()));
  const double a = sched.alpha(sched.T());
  const double s2 = sched.sigma(sched.T()) * sched.sigma(sched.T());
  return 0.5 * (dim * s2 + a * a * squared_norm(z0) - dim - dim * std::log(s2));
}

double final_step_constant(std::size_t n, std::size_t d, const NoiseSchedule& sched) {
  const double ratio = sched.sigma(1) / sched.alpha(1);
  return 0.5 * static_cast<double>(subspace_dim(n, d)) * std::log(2.0 * std::numbers::pi * ratio * ratio);
}

namespace {
ad::Var final_from_prediction(ad::Tape& tape, const NBodyState& z0, const NBodyState& z1, ad::Var pred, const NoiseSchedule& sched) {
  const double a1 = sched.alpha(1), s1 = sched.sigma(1);
  const double sd = s1 / a1;
  // mean = z1 / alpha_1 - (sigma_1 / alpha_1) pred
  ad::Var mean = ad::sub(tape.constant(z1.pack() * (1.0 / a1)), ad::scale(pred, sd));
  ad::Var sq = ad::sum_squares(ad::sub(tape.constant(z0.pack()), mean));
  return ad::add_scalar(ad::scale(sq, 1.0 / (2.0 * sd * sd)), final_step_constant(z0.n(), z0.d(), sched));
}
}  // namespace

ad::Var final_step_loss_given(ad::Tape& tape, const ModelView& model, const NBodyState& z0, const NBodyState& eps, ad::Var rot,
                              const NoiseSchedule& sched) {
  const NBodyState z1 = forward_sample(z0, 1, eps, sched);
  ad::Var pred = conjugated_field(model, tape.constant(z1.pack()), rot, normalised_time(1, sched));
  return final_from_prediction(tape, z0, z1, pred, sched);
}

ad::Var final_step_loss(ad::Tape& tape, const ModelView& model, const NBodyState& z0, const NoiseSchedule& sched, RngStream& stream) {
  require_centered(z0, "final_step_loss z0");
  const NBodyState eps = sample_projected_normal(z0.n(), z0.d(), stream);
  const NBodyState z1 = forward_sample(z0, 1, eps, sched);
  ad::Var rot = model.rotation(tape.constant(z1.pack()), normalised_time(1, sched), stream);
  return final_step_loss_given(tape, model, z0, eps, rot, sched);
}

ad::Var plain_final_step_loss(ad::Tape& tape, const ModelView& model, const NBodyState& z0, const NoiseSchedule& sched,
                              RngStream& stream) {
  require_centered(z0, "plain_final_step_loss z0");
  const NBodyState eps = sample_projected_normal(z0.n(), z0.d(), stream);
  const NBodyState z1 = forward_sample(z0, 1, eps, sched);
  ad::Var pred = model.field(tape.constant(z1.pack()), normalised_time(1, sched));
  return final_from_prediction(tape, z0, z1, pred, sched);
}

NllBound estimate_nll_bound(ad::Tape& tape, const ModelView& model, GammaKind gamma, const NBodyState& z0, const NoiseSchedule& sched,
                            RngStream& stream, int n_t_samples) {
  if (n_t_samples < 1) throw ContractError("estimate_nll_bound needs n_t_samples >= 1");
  NllBound out;
  out.prior_kl = prior_kl(z0, sched);
  const int T = sched.T();
  if (T >= 2) {
    double acc = 0.0;
    for (int i = 0; i < n_t_samples; ++i) {
      const int t = 2 + static_cast<int>(stream.below(static_cast<std::uint64_t>(T - 1)));
      ad::Var l = gamma == GammaKind::none ? plain_step_loss(tape, model, z0, t, sched, stream, WeightMode::snr)
                                           : symdiff_step_loss(tape, model, z0, t, sched, stream, WeightMode::snr);
      acc += l.value().item();
    }
    out.diffusion = static_cast<double>(T - 1) * acc / n_t_samples;
  }
  ad::Var l1 = gamma == GammaKind::none ? plain_final_step_loss(tape, model, z0, sched, stream) : final_step_loss(tape, model, z0, sched, stream);
  out.final_step = l1.value().item();
  return out;
}

NllBound estimate_nll_bound(const ParamStore& params, const NetConfig& cfg, GammaKind gamma, const NBodyState& z0,
                            const NoiseSchedule& sched, RngStream& stream, int n_t_samples) {
  ad::Tape tape(false);
  NetGraph graph(tape, params, cfg);
  const ModelView view = bind_model(graph, gamma);
  return estimate_nll_bound(tape, view, gamma, z0, sched, stream, n_t_samples);
}

}  // namespace symdiff
