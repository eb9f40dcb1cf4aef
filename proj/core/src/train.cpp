#include "symdiff/train.hpp"

#include <chrono>
#include <cmath>

#include "symdiff/errors.hpp"
#include "symdiff/matching.hpp"
#include "symdiff/ortho.hpp"
#include "symdiff/parallel.hpp"

namespace symdiff {

std::string to_string(TrainMode m) {
  switch (m) {
    case TrainMode::symdiff: return "symdiff";
    case TrainMode::aug: return "aug";
    case TrainMode::plain: return "plain";
    case TrainMode::symdiff_haar: return "symdiff-haar";
    case TrainMode::score: return "score";
    case TrainMode::flow: return "flow";
  }
  return "?";
}

std::optional<TrainMode> parse_train_mode(const std::string& s) {
  for (TrainMode m : {TrainMode::symdiff, TrainMode::aug, TrainMode::plain, TrainMode::symdiff_haar, TrainMode::score, TrainMode::flow})
    if (to_string(m) == s) return m;
  return std::nullopt;
}

bool is_diffusion_mode(TrainMode m) { return m != TrainMode::score && m != TrainMode::flow; }

GammaKind gamma_for(TrainMode m, bool gamma_dirac) {
  switch (m) {
    case TrainMode::plain:
    case TrainMode::aug: return GammaKind::none;
    case TrainMode::symdiff_haar: return gamma_dirac ? GammaKind::dirac : GammaKind::haar;
    default: return gamma_dirac ? GammaKind::dirac : GammaKind::recursive;
  }
}

AdamW::AdamW(const ParamStore& params, double lr, double weight_decay, double beta1, double beta2, double eps)
    : lr_(lr), wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps) {
  if (!(lr > 0.0)) throw ContractError("learning rate must be positive");
  if (weight_decay < 0.0) throw ContractError("weight decay must be >= 0");
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_.push_back(Tensor::zeros(params.value(i).shape()));
    v_.push_back(Tensor::zeros(params.value(i).shape()));
  }
}

void AdamW::step(ParamStore& params, const std::vector<Tensor>& grads) {
  if (grads.size() != params.size()) throw DimensionError("gradient count does not match parameters");
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params.value(i).data();
    auto g = grads[i].data();
    auto m = m_[i].data();
    auto v = v_[i].data();
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = b1_ * m[k] + (1.0 - b1_) * g[k];
      v[k] = b2_ * v[k] + (1.0 - b2_) * g[k] * g[k];
      p[k] -= lr_ * (m[k] / c1 / (std::sqrt(v[k] / c2) + eps_) + wd_ * p[k]);
    }
  }
}

ad::Var item_loss(ad::Tape& tape, const ModelView& model, const NBodyState& z0, const TrainConfig& cfg, const NoiseSchedule& sched,
                  RngStream& stream) {
  switch (cfg.mode) {
    case TrainMode::score: {
      static const ContinuousSchedule cs;
      return sym_score_loss(tape, model, z0, cs, stream);
    }
    case TrainMode::flow: return sym_flow_loss(tape, model, z0, stream);
    default: break;
  }
  const int t = 1 + static_cast<int>(stream.below(static_cast<std::uint64_t>(sched.T())));
  const double c = final_step_constant(z0.n(), z0.d(), sched);
  switch (cfg.mode) {
    case TrainMode::plain:
      if (t == 1) return ad::add_scalar(plain_final_step_loss(tape, model, z0, sched, stream), -c);
      return plain_step_loss(tape, model, z0, t, sched, stream, WeightMode::unit);
    case TrainMode::aug:
      if (t == 1) {
        const NBodyState eps = sample_projected_normal(z0.n(), z0.d(), stream);
        const Tensor rot = sample_haar(stream);
        return ad::add_scalar(final_step_loss_given(tape, model, rotate(rot, z0), eps, tape.constant(Tensor::identity(3)), sched), -c);
      }
      return aug_step_loss(tape, model, z0, t, sched, stream, WeightMode::unit);
    default:
      if (t == 1) return ad::add_scalar(final_step_loss(tape, model, z0, sched, stream), -c);
      return symdiff_step_loss(tape, model, z0, t, sched, stream, WeightMode::unit);
  }
}

BatchResult batch_gradient(const ParamStore& params, const NetConfig& net, const std::vector<NBodyState>& data, const TrainConfig& cfg,
                           const NoiseSchedule& sched, int step) {
  if (data.empty()) throw ContractError("training data is empty");
  if (cfg.batch < 1) throw ContractError("batch size must be >= 1");
  RngStream ss = RngStream(cfg.seed, kTrainStream).split(static_cast<std::uint64_t>(step));
  std::vector<std::size_t> idx(cfg.batch);
  for (auto& i : idx) i = static_cast<std::size_t>(ss.below(data.size()));

  const GammaKind gamma = gamma_for(cfg.mode, cfg.gamma_dirac);
  std::vector<double> losses(cfg.batch);
  std::vector<std::vector<Tensor>> grads(cfg.batch);
  parallel_for(cfg.batch, [&](std::size_t i) {
    RngStream s = ss.split(1 + i);
    ad::Tape tape;
    NetGraph graph(tape, params, net);
    const ModelView view = bind_model(graph, gamma);
    ad::Var loss = item_loss(tape, view, data[idx[i]], cfg, sched, s);
    tape.backward(loss);
    losses[i] = loss.value().item();
    grads[i] = graph.gradients();
  });

  BatchResult out;
  const double inv = 1.0 / static_cast<double>(cfg.batch);
  out.grads = std::move(grads[0]);
  out.loss = losses[0];
  for (std::size_t i = 1; i < cfg.batch; ++i) {
    out.loss += losses[i];
    for (std::size_t k = 0; k < out.grads.size(); ++k) out.grads[k] += grads[i][k];
  }
  out.loss *= inv;
  for (auto& g : out.grads) g *= inv;
  return out;
}

void train(ParamStore& params, const NetConfig& net, const std::vector<NBodyState>& data, const TrainConfig& cfg,
           const std::function<void(const StepRecord&)>& on_step) {
  if (cfg.steps < 0) throw ContractError("steps must be >= 0");
  const NoiseSchedule sched = make_schedule(cfg.schedule, cfg.T);
  AdamW opt(params, cfg.lr, cfg.weight_decay);
  for (int step = 1; step <= cfg.steps; ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    BatchResult b;
    try {
      b = batch_gradient(params, net, data, cfg, sched, step);
    } catch (const NumericError& e) {
      throw NumericError("training failed at step " + std::to_string(step) + ": " + e.what());
    }
    double gn = 0.0;
    for (const auto& g : b.grads) gn += squared_norm(g);
    if (!std::isfinite(b.loss) || !std::isfinite(gn)) throw NumericError("non-finite loss or gradient at step " + std::to_string(step));
    opt.step(params, b.grads);
    const auto t1 = std::chrono::steady_clock::now();
    if (on_step) on_step({step, b.loss, std::sqrt(gn), std::chrono::duration<double, std::milli>(t1 - t0).count()});
  }
}

}  // namespace symdiff
