#include "symdiff/sampler.hpp"

#include <cmath>
#include <string>

#include "symdiff/errors.hpp"

namespace symdiff {

ReverseModel make_reverse_model(const ParamStore& params, const NetConfig& cfg, GammaKind gamma) {
  ReverseModel m;
  m.field = [&params, cfg](const NBodyState& z, double t) { return eps_forward(params, cfg, z, t); };
  m.gamma = [&params, cfg, gamma](const NBodyState& z, double t, RngStream& stream) {
    ad::Tape tape(false);
    NetGraph graph(tape, params, cfg);
    const ModelView view = bind_model(graph, gamma);
    return view.rotation(tape.constant(z.pack()), t, stream).value();
  };
  return m;
}

namespace {

void check_state(const NBodyState& z, int step, ChainTrace* trace) {
  const Tensor c = com(z.x());
  const double norm = std::sqrt(squared_norm(c));
  if (norm > 1e-9) throw NumericError("reverse chain left the centred subspace at step " + std::to_string(step));
  if (trace) {
    trace->max_com = std::max(trace->max_com, norm);
    ++trace->steps;
  }
}

// R field(R^T z).
NBodyState conjugated(const ReverseModel& model, const NBodyState& z, double t, RngStream& stream) {
  const Tensor r = model.gamma(z, t, stream);
  return rotate(r, model.field(rotate(r.transposed(), z), t));
}

}  // namespace

NBodyState reverse_step(const ReverseModel& model, const NBodyState& z, int t, const NoiseSchedule& sched, RngStream& stream) {
  const int T = sched.T();
  if (t < 1 || t > T) throw ContractError("reverse_step needs 1 <= t <= T");
  const NBodyState pred = conjugated(model, z, static_cast<double>(t) / T, stream);
  if (t == 1) {
    const double a1 = sched.alpha(1), s1 = sched.sigma(1);
    return sample_projected_gaussian((1.0 / a1) * z - (s1 / a1) * pred, s1 / a1, stream);
  }
  const double a = sched.alpha_ts(t);
  const double c = sched.sigma2_ts(t) / (a * sched.sigma(t));
  return sample_projected_gaussian((1.0 / a) * z - c * pred, std::sqrt(sched.sigma_q2(t)), stream);
}

NBodyState generate(const ReverseModel& model, std::size_t n, std::size_t d, const NoiseSchedule& sched, RngStream& stream,
                    ChainTrace* trace) {
  if (n < 2) throw ContractError("generate needs at least 2 points");
  const int T = sched.T();
  NBodyState z = sample_projected_normal(n, d, stream);
  check_state(z, T, trace);
  for (int t = T; t >= 1; --t) {
    try {
      z = reverse_step(model, z, t, sched, stream);
    } catch (const NumericError& e) {
      throw NumericError("reverse chain failed at step " + std::to_string(t) + ": " + e.what());
    }
    check_state(z, t - 1, trace);
  }
  return z;
}

std::vector<NBodyState> generate_batch(const ReverseModel& model, std::size_t count, std::size_t n, std::size_t d,
                                       const NoiseSchedule& sched, const RngStream& stream, std::size_t workers) {
  if (count < 1) throw ContractError("generate_batch needs count >= 1");
  std::vector<NBodyState> out(count);
  parallel_for(
      count,
      [&](std::size_t i) {
        RngStream child = stream.split(i);
        out[i] = generate(model, n, d, sched, child);
      },
      workers);
  return out;
}

}  // namespace symdiff
