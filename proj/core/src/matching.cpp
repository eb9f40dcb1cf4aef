#include "symdiff/matching.hpp"

#include <cmath>
#include <string>

#include "symdiff/errors.hpp"

namespace symdiff {

namespace {

void require_centered(const NBodyState& z, const char* what) {
  if (!is_centered(z, 1e-9)) throw ContractError(std::string(what) + " must be centred");
}

ad::Var conjugated_field(const ModelView& model, ad::Var z, ad::Var rot, double t) {
  ad::Var inner = ad::rotate_points(z, ad::transpose(rot));
  return ad::rotate_points(model.field(inner, t), rot);
}

// sigma^2 |pred - score|^2 with score = -eps / sigma.
ad::Var score_error(ad::Tape& tape, ad::Var pred, const NBodyState& eps, double sigma) {
  ad::Var target = tape.constant(eps.pack() * (-1.0 / sigma));
  return ad::scale(ad::sum_squares(ad::sub(pred, target)), sigma * sigma);
}

NBodyState score_state(const NBodyState& x0, const NBodyState& eps, double tau, const ContinuousSchedule& cs) {
  return forward_sample(x0, eps, cs.alpha(tau), cs.sigma(tau));
}

NBodyState flow_state(const NBodyState& x1, const NBodyState& x0, double tau) { return (1.0 - tau) * x0 + tau * x1; }

}  // namespace

ad::Var sym_score_loss_given(ad::Tape& tape, const ModelView& model, const NBodyState& x0, const NBodyState& eps, double tau,
                             ad::Var rot, const ContinuousSchedule& cs) {
  const NBodyState xt = score_state(x0, eps, tau, cs);
  ad::Var pred = conjugated_field(model, tape.constant(xt.pack()), rot, tau);
  return score_error(tape, pred, eps, cs.sigma(tau));
}

ad::Var sym_score_loss(ad::Tape& tape, const ModelView& model, const NBodyState& x0, const ContinuousSchedule& cs, RngStream& stream) {
  require_centered(x0, "sym_score_loss x0");
  const double tau = stream.uniform_open();
  const NBodyState eps = sample_projected_normal(x0.n(), x0.d(), stream);
  const NBodyState xt = score_state(x0, eps, tau, cs);
  ad::Var rot = model.rotation(tape.constant(xt.pack()), tau, stream);
  return sym_score_loss_given(tape, model, x0, eps, tau, rot, cs);
}

ad::Var score_loss_given(ad::Tape& tape, const ModelView& model, const NBodyState& x0, const NBodyState& eps, double tau,
                         const ContinuousSchedule& cs) {
  const NBodyState xt = score_state(x0, eps, tau, cs);
  ad::Var pred = model.field(tape.constant(xt.pack()), tau);
  return score_error(tape, pred, eps, cs.sigma(tau));
}

ad::Var score_loss(ad::Tape& tape, const ModelView& model, const NBodyState& x0, const ContinuousSchedule& cs, RngStream& stream) {
  require_centered(x0, "score_loss x0");
  const double tau = stream.uniform_open();
  const NBodyState eps = sample_projected_normal(x0.n(), x0.d(), stream);
  return score_loss_given(tape, model, x0, eps, tau, cs);
}

ad::Var sym_flow_loss_given(ad::Tape& tape, const ModelView& model, const NBodyState& x1, const NBodyState& x0, double tau,
                            ad::Var rot) {
  const NBodyState xt = flow_state(x1, x0, tau);
  ad::Var pred = conjugated_field(model, tape.constant(xt.pack()), rot, tau);
  return ad::sum_squares(ad::sub(pred, tape.constant((x1 - x0).pack())));
}

ad::Var sym_flow_loss(ad::Tape& tape, const ModelView& model, const NBodyState& x1, RngStream& stream) {
  require_centered(x1, "sym_flow_loss x1");
  const double tau = stream.uniform();
  const NBodyState x0 = sample_projected_normal(x1.n(), x1.d(), stream);
  const NBodyState xt = flow_state(x1, x0, tau);
  ad::Var rot = model.rotation(tape.constant(xt.pack()), tau, stream);
  return sym_flow_loss_given(tape, model, x1, x0, tau, rot);
}

ad::Var flow_loss_given(ad::Tape& tape, const ModelView& model, const NBodyState& x1, const NBodyState& x0, double tau) {
  const NBodyState xt = flow_state(x1, x0, tau);
  ad::Var pred = model.field(tape.constant(xt.pack()), tau);
  return ad::sum_squares(ad::sub(pred, tape.constant((x1 - x0).pack())));
}

ad::Var flow_loss(ad::Tape& tape, const ModelView& model, const NBodyState& x1, RngStream& stream) {
  require_centered(x1, "flow_loss x1");
  const double tau = stream.uniform();
  const NBodyState x0 = sample_projected_normal(x1.n(), x1.d(), stream);
  return flow_loss_given(tape, model, x1, x0, tau);
}

NBodyState euler_generate_flow(const ReverseModel& model, std::size_t n, std::size_t d, int steps, RngStream& stream) {
  if (steps < 1) throw ContractError("euler_generate_flow needs steps >= 1");
  const double dt = 1.0 / steps;
  NBodyState x = sample_projected_normal(n, d, stream);
  for (int i = 0; i < steps; ++i) {
    const double t = static_cast<double>(i) / steps;
    const Tensor r = model.gamma(x, t, stream);
    x += dt * rotate(r, model.field(rotate(r.transposed(), x), t));
    if (!x.x().all_finite() || !x.h().all_finite()) throw NumericError("non-finite state in flow integration at step " + std::to_string(i));
  }
  return x;
}

}  // namespace symdiff
