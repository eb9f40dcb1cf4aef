#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "symdiff/geometry.hpp"
#include "symdiff/nets.hpp"
#include "symdiff/objective.hpp"
#include "symdiff/schedule.hpp"

namespace symdiff {

enum class TrainMode { symdiff, aug, plain, symdiff_haar, score, flow };

std::string to_string(TrainMode m);
std::optional<TrainMode> parse_train_mode(const std::string& s);

// Diffusion modes use the discrete schedule; score and flow are continuous-time.
bool is_diffusion_mode(TrainMode m);
// Rotation kernel used by a mode (GammaKind::none for plain and aug).
GammaKind gamma_for(TrainMode m, bool gamma_dirac);

/// Adam with decoupled weight decay.
class AdamW {
 public:
  AdamW(const ParamStore& params, double lr, double weight_decay = 0.0, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(ParamStore& params, const std::vector<Tensor>& grads);
  long steps() const noexcept { return t_; }

 private:
  double lr_, wd_, b1_, b2_, eps_;
  long t_ = 0;
  std::vector<Tensor> m_, v_;
};

struct TrainConfig {
  TrainMode mode = TrainMode::symdiff;
  int steps = 200;
  std::size_t batch = 16;
  double lr = 1e-3;
  double weight_decay = 0.0;
  int T = 100;
  ScheduleKind schedule = ScheduleKind::cosine;
  bool gamma_dirac = false;  // debug: force gamma = identity in the symdiff modes
  std::uint64_t seed = 0;
};

struct StepRecord {
  int step = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
  double wall_ms = 0.0;
};

/// Training loss for one data item. For the diffusion modes t ~ U{1..T}; t >= 2 gives the
/// unit-weight step loss and t = 1 the final-step loss without its constant. Draws t first.
ad::Var item_loss(ad::Tape& tape, const ModelView& model, const NBodyState& z0, const TrainConfig& cfg, const NoiseSchedule& sched,
                  RngStream& stream);

/// Batch loss and parameter gradient at the current parameters for one optimiser step.
/// Step s uses RngStream(seed, kTrainStream).split(s); batch indices come from that stream
/// and item i uses its split(1 + i). Gradients are averaged in item order.
struct BatchResult {
  double loss = 0.0;
  std::vector<Tensor> grads;
};
inline constexpr std::uint64_t kTrainStream = 0x747261696e;
BatchResult batch_gradient(const ParamStore& params, const NetConfig& net, const std::vector<NBodyState>& data, const TrainConfig& cfg,
                           const NoiseSchedule& sched, int step);

/// Runs cfg.steps optimiser steps (numbered 1..steps), calling on_step after each.
void train(ParamStore& params, const NetConfig& net, const std::vector<NBodyState>& data, const TrainConfig& cfg,
           const std::function<void(const StepRecord&)>& on_step = {});

}  // namespace symdiff
