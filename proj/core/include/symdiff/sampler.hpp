#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "symdiff/geometry.hpp"
#include "symdiff/nets.hpp"
#include "symdiff/objective.hpp"
#include "symdiff/parallel.hpp"
#include "symdiff/rng.hpp"
#include "symdiff/schedule.hpp"

namespace symdiff {

// Per-point field evaluated at normalised time t in [0, 1] (noise prediction, velocity, ...).
using StateField = std::function<NBodyState(const NBodyState& z, double t)>;
// Rotation kernel gamma(. | z) at normalised time t.
using TimedGamma = std::function<Tensor(const NBodyState& z, double t, RngStream& stream)>;

/// Everything the reverse chain needs. Both callables must be safe to call concurrently.
struct ReverseModel {
  StateField field;
  TimedGamma gamma;
};

// Evaluates the networks in `params` without recording. The draws made by `gamma` match
// the ones the training losses make for the same kind.
ReverseModel make_reverse_model(const ParamStore& params, const NetConfig& cfg, GammaKind gamma);

struct ChainTrace {
  double max_com = 0.0;  // largest centre-of-mass norm over all visited states
  int steps = 0;
};

/// One draw from the symmetrised reverse kernel p(z_{t-1} | z_t): R ~ gamma(. | z_t), then
/// fresh noise around the mean built from R field(R^T z_t). t = 1 uses the final kernel.
NBodyState reverse_step(const ReverseModel& model, const NBodyState& z, int t, const NoiseSchedule& sched, RngStream& stream);

/// Ancestral sampling through the symmetrised reverse chain. z_T ~ N_U(0, I); each step
/// t = T..2 draws a fresh R, then fresh noise; the last step samples the continuous final
/// kernel with variance sigma_1^2 / alpha_1^2.
NBodyState generate(const ReverseModel& model, std::size_t n, std::size_t d, const NoiseSchedule& sched, RngStream& stream,
                    ChainTrace* trace = nullptr);

// count independent chains; chain i runs on stream.split(i).
std::vector<NBodyState> generate_batch(const ReverseModel& model, std::size_t count, std::size_t n, std::size_t d,
                                       const NoiseSchedule& sched, const RngStream& stream, std::size_t workers = worker_count());

}  // namespace symdiff
