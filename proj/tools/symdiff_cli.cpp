#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "symdiff/equitest.hpp"
#include "symdiff/errors.hpp"
#include "symdiff/io.hpp"
#include "symdiff/matching.hpp"
#include "symdiff/nets.hpp"
#include "symdiff/objective.hpp"
#include "symdiff/parallel.hpp"
#include "symdiff/sampler.hpp"
#include "symdiff/train.hpp"

using namespace symdiff;
using json = nlohmann::json;

namespace {

// Stream ids for the independent consumers of a command's --seed.
constexpr std::uint64_t kInitStream = 0x696e6974;
constexpr std::uint64_t kSampleStream = 0x73616d70;
constexpr std::uint64_t kEvalStream = 0x6576616c;

struct RuntimeFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NetFlags {
  std::size_t hidden = 32, depth = 2, n_basis = 16, n_emb = 16, time_dim = 64, head_hidden = 16;
  std::string activation = "silu";

  void add(CLI::App* cmd) {
    cmd->add_option("--hidden", hidden, "per-point hidden width")->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--depth", depth, "residual blocks per network")->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--n-basis", n_basis, "Gaussian distance kernels")->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--n-emb", n_emb, "embedding width")->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--time-dim", time_dim, "time embedding width (even)")->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--head-hidden", head_hidden, "rotation head width")->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--activation", activation, "silu or gelu")->check(CLI::IsMember({"silu", "gelu"}))->capture_default_str();
  }
  NetConfig config(std::size_t d) const {
    NetConfig c;
    c.feature_dim = d;
    c.hidden = hidden;
    c.depth = depth;
    c.n_basis = n_basis;
    c.n_emb = n_emb;
    c.time_dim = time_dim;
    c.head_hidden = head_hidden;
    c.activation = activation == "gelu" ? Activation::gelu : Activation::silu;
    return c;
  }
};

// Everything `train` records next to the parameters.
struct LoadedModel {
  ParamStore params;
  NetConfig net;
  TrainMode mode = TrainMode::symdiff;
  bool gamma_dirac = false;
  int T = 1;
  ScheduleKind schedule = ScheduleKind::cosine;
  std::size_t n = 0, d = 0;
};

ModelMeta make_meta(const NetConfig& c, const TrainConfig& tc, std::size_t n) {
  return {{"T", tc.T},
          {"schedule", tc.schedule == ScheduleKind::linear ? 1.0 : 0.0},
          {"mode", static_cast<double>(tc.mode)},
          {"gamma_dirac", tc.gamma_dirac ? 1.0 : 0.0},
          {"n_points", static_cast<double>(n)},
          {"feature_dim", static_cast<double>(c.feature_dim)},
          {"hidden", static_cast<double>(c.hidden)},
          {"depth", static_cast<double>(c.depth)},
          {"n_basis", static_cast<double>(c.n_basis)},
          {"n_emb", static_cast<double>(c.n_emb)},
          {"time_dim", static_cast<double>(c.time_dim)},
          {"head_hidden", static_cast<double>(c.head_hidden)},
          {"activation", c.activation == Activation::gelu ? 1.0 : 0.0}};
}

LoadedModel load_model(const std::string& path) {
  auto [params, meta] = split_meta(load_params(path));
  auto get = [&](const char* key) {
    auto it = meta.find(key);
    if (it == meta.end()) throw RuntimeFailure(path + ": missing model metadata '" + key + "'");
    return it->second;
  };
  auto size = [&](const char* key) { return static_cast<std::size_t>(get(key)); };
  LoadedModel m;
  m.net.feature_dim = size("feature_dim");
  m.net.hidden = size("hidden");
  m.net.depth = size("depth");
  m.net.n_basis = size("n_basis");
  m.net.n_emb = size("n_emb");
  m.net.time_dim = size("time_dim");
  m.net.head_hidden = size("head_hidden");
  m.net.activation = get("activation") != 0.0 ? Activation::gelu : Activation::silu;
  m.mode = static_cast<TrainMode>(static_cast<int>(get("mode")));
  m.gamma_dirac = get("gamma_dirac") != 0.0;
  m.T = static_cast<int>(get("T"));
  m.schedule = get("schedule") != 0.0 ? ScheduleKind::linear : ScheduleKind::cosine;
  m.n = size("n_points");
  m.d = m.net.feature_dim;

  // The stored tensors must be exactly what this configuration would create.
  RngStream s(0);
  const ParamStore ref = init_params(m.net, s);
  if (ref.names() != params.names()) throw RuntimeFailure(path + ": parameters do not match the stored network configuration");
  for (std::size_t i = 0; i < ref.size(); ++i) {
    if (ref.value(i).shape() != params.value(i).shape()) {
      throw RuntimeFailure(path + ": parameter " + ref.names()[i] + " has shape " + shape_string(params.value(i).shape()) + ", expected " +
                           shape_string(ref.value(i).shape()));
    }
  }
  m.params = std::move(params);
  return m;
}

std::vector<NBodyState> load_data(const std::string& path) {
  try {
    return load_dataset(path);
  } catch (const FormatError& e) {
    throw RuntimeFailure(path + ": " + e.what());
  }
}

// ---- gen-data ----

struct GenDataArgs {
  std::string out;
  ToyDatasetSpec spec;
};

int run_gen_data(const GenDataArgs& a) {
  const auto data = generate_toy_dataset(a.spec);
  save_dataset(data, a.out);
  std::cout << "wrote " << data.size() << " states (N=" << a.spec.n_points << ", d=" << a.spec.d << ") to " << a.out << "\n";
  return 0;
}

// ---- train ----

struct TrainArgs {
  std::string data, out, metrics, mode = "symdiff", schedule = "cosine";
  TrainConfig cfg;
  NetFlags net;
};

int run_train(TrainArgs a) {
  const auto data = load_data(a.data);
  a.cfg.mode = *parse_train_mode(a.mode);
  a.cfg.schedule = a.schedule == "linear" ? ScheduleKind::linear : ScheduleKind::cosine;
  const NetConfig net = a.net.config(data.front().d());
  RngStream init(a.cfg.seed, kInitStream);
  ParamStore params = init_params(net, init);

  const std::string metrics = a.metrics.empty() ? a.out + ".metrics.csv" : a.metrics;
  std::ofstream csv(metrics, std::ios::trunc);
  if (!csv) throw RuntimeFailure("cannot write " + metrics);
  csv << "step,loss,grad_norm,wall_ms\n";
  char line[160];
  train(params, net, data, a.cfg, [&](const StepRecord& r) {
    std::snprintf(line, sizeof line, "%d,%.17g,%.17g,%.3f\n", r.step, r.loss, r.grad_norm, r.wall_ms);
    csv << line;
  });
  csv.close();
  save_params(with_meta(params, make_meta(net, a.cfg, data.front().n())), a.out);
  std::cout << "trained " << a.cfg.steps << " steps (" << a.mode << "), params -> " << a.out << ", metrics -> " << metrics << "\n";
  return 0;
}

// ---- sample ----

std::vector<NBodyState> draw_samples(const LoadedModel& m, std::size_t count, std::size_t n, const RngStream& root, int flow_steps) {
  if (m.mode == TrainMode::score) throw RuntimeFailure("sampling from score models is not supported (only the training loss is implemented)");
  const ReverseModel model = make_reverse_model(m.params, m.net, gamma_for(m.mode, m.gamma_dirac));
  if (m.mode == TrainMode::flow) {
    std::vector<NBodyState> out(count);
    parallel_for(count, [&](std::size_t i) {
      RngStream s = root.split(i);
      out[i] = euler_generate_flow(model, n, m.d, flow_steps, s);
    });
    return out;
  }
  return generate_batch(model, count, n, m.d, make_schedule(m.schedule, m.T), root);
}

struct SampleArgs {
  std::string params, out;
  std::size_t count = 100, n_points = 0;
  std::uint64_t seed = 0;
  int flow_steps = 100;
};

int run_sample(const SampleArgs& a) {
  const LoadedModel m = load_model(a.params);
  const std::size_t n = a.n_points ? a.n_points : m.n;
  const auto out = draw_samples(m, a.count, n, RngStream(a.seed, kSampleStream), a.flow_steps);
  save_dataset(out, a.out);
  std::cout << "wrote " << out.size() << " samples to " << a.out << "\n";
  return 0;
}

// ---- eval ----

struct EvalArgs {
  std::string params, data, out;
  std::uint64_t seed = 0;
  int n_t = 1;
  bool equivariance = false;
  std::size_t n = 1000;
  double alpha = 0.01;
  int n_rot = 5, n_perm_g = 5, n_perm = kDefaultPermutations, flow_steps = 100;
};

json nll_summary(const LoadedModel& m, const std::vector<NBodyState>& data, const RngStream& root, int n_t) {
  if (!is_diffusion_mode(m.mode)) return json{{"nll_bound", nullptr}, {"note", "bound is defined for diffusion models only"}};
  const NoiseSchedule sched = make_schedule(m.schedule, m.T);
  const GammaKind gamma = gamma_for(m.mode, m.gamma_dirac);
  std::vector<NllBound> per(data.size());
  parallel_for(data.size(), [&](std::size_t i) {
    RngStream s = root.split(i);
    per[i] = estimate_nll_bound(m.params, m.net, gamma, data[i], sched, s, n_t);
  });
  double kl = 0.0, diff = 0.0, l1 = 0.0;
  for (const auto& b : per) {
    kl += b.prior_kl;
    diff += b.diffusion;
    l1 += b.final_step;
  }
  const double c = static_cast<double>(data.size());
  kl /= c;
  diff /= c;
  l1 /= c;
  return json{{"nll_bound", kl + diff + l1},
              {"prior_kl", kl},
              {"diffusion", diff},
              {"mean_L_t", m.T >= 2 ? json(diff / (m.T - 1)) : json(nullptr)},
              {"L_1", l1},
              {"n_items", data.size()},
              {"n_t_samples", n_t}};
}

json equivariance_battery(const LoadedModel& m, const EvalArgs& a, const RngStream& root) {
  // Two independent pools; each test compares pool A with g applied to pool B.
  const auto pool = draw_samples(m, 2 * a.n, m.n, root.split(0), a.flow_steps);
  const std::vector<NBodyState> pa(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(a.n));
  const std::vector<NBodyState> pb(pool.begin() + static_cast<std::ptrdiff_t>(a.n), pool.end());
  RngStream gs = root.split(1);
  std::vector<std::pair<std::string, GroupElement>> battery;
  for (int k = 0; k < a.n_rot; ++k) battery.emplace_back("rotation", GroupElement::rotation(m.n, sample_haar(gs)));
  for (int k = 0; k < a.n_perm_g; ++k) battery.emplace_back("permutation", GroupElement::permutation(random_permutation(m.n, gs)));

  json tests = json::array();
  bool all_pass = true;
  for (std::size_t k = 0; k < battery.size(); ++k) {
    RngStream ps = root.split(2 + k);
    const auto rep = test_distributional_invariance(pa, pb, battery[k].second, a.alpha, ps, a.n_perm);
    all_pass = all_pass && !rep.result.reject;
    tests.push_back({{"group", battery[k].first},
                     {"statistic", rep.result.statistic},
                     {"p_value", rep.result.p_value},
                     {"reject", rep.result.reject}});
  }
  return json{{"n", a.n}, {"alpha", a.alpha}, {"n_perm", a.n_perm}, {"tests", tests}, {"all_pass", all_pass}};
}

int run_eval(const EvalArgs& a) {
  const LoadedModel m = load_model(a.params);
  const auto data = load_data(a.data);
  if (data.front().n() != m.n || data.front().d() != m.d) throw RuntimeFailure("held-out data does not match the model's N and d");
  const RngStream root(a.seed, kEvalStream);
  json out = nll_summary(m, data, root.split(0), a.n_t);
  out["mode"] = to_string(m.mode);
  if (a.equivariance) out["equivariance"] = equivariance_battery(m, a, root.split(1));
  const std::string text = out.dump(2) + "\n";
  if (a.out.empty()) {
    std::cout << text;
  } else {
    std::ofstream f(a.out, std::ios::trunc);
    if (!f) throw RuntimeFailure("cannot write " + a.out);
    f << text;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Symmetrised diffusion models for N-body point clouds"};
  app.require_subcommand(1);

  GenDataArgs gd;
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic rigid-body dataset");
  gen->add_option("--out", gd.out, "output dataset file")->required();
  gen->add_option("--n-templates", gd.spec.n_templates, "number of rigid templates")->check(CLI::PositiveNumber)->capture_default_str();
  gen->add_option("--n-points", gd.spec.n_points, "points per body")->check(CLI::Range(std::size_t{2}, std::size_t{1} << 20))->capture_default_str();
  gen->add_option("--d", gd.spec.d, "feature dimensions")->capture_default_str();
  gen->add_option("--jitter", gd.spec.jitter, "Gaussian jitter scale")->check(CLI::NonNegativeNumber)->capture_default_str();
  gen->add_option("--count", gd.spec.count, "number of states")->check(CLI::PositiveNumber)->capture_default_str();
  gen->add_option("--seed", gd.spec.seed, "random seed")->capture_default_str();

  TrainArgs tr;
  auto* trc = app.add_subcommand("train", "train a model");
  trc->add_option("--data", tr.data, "training dataset")->required();
  trc->add_option("--out", tr.out, "output parameter file")->required();
  trc->add_option("--metrics", tr.metrics, "metrics CSV (default <out>.metrics.csv)");
  trc->add_option("--steps", tr.cfg.steps, "optimiser steps")->check(CLI::NonNegativeNumber)->capture_default_str();
  trc->add_option("--batch", tr.cfg.batch, "batch size")->check(CLI::PositiveNumber)->capture_default_str();
  trc->add_option("--lr", tr.cfg.lr, "learning rate")->check(CLI::PositiveNumber)->capture_default_str();
  trc->add_option("--weight-decay", tr.cfg.weight_decay, "decoupled weight decay")->check(CLI::NonNegativeNumber)->capture_default_str();
  trc->add_option("--seed", tr.cfg.seed, "random seed")->capture_default_str();
  trc->add_option("--mode", tr.mode, "objective")
      ->check(CLI::IsMember({"symdiff", "aug", "plain", "symdiff-haar", "score", "flow"}))
      ->capture_default_str();
  trc->add_option("--T", tr.cfg.T, "diffusion steps")->check(CLI::PositiveNumber)->capture_default_str();
  trc->add_option("--schedule", tr.schedule, "noise schedule")->check(CLI::IsMember({"cosine", "linear"}))->capture_default_str();
  trc->add_flag("--gamma-dirac", tr.cfg.gamma_dirac, "debug: replace gamma by the identity");
  tr.net.add(trc);

  SampleArgs sa;
  auto* smp = app.add_subcommand("sample", "generate states from a trained model");
  smp->add_option("--params", sa.params, "parameter file")->required();
  smp->add_option("--out", sa.out, "output dataset file")->required();
  smp->add_option("--count", sa.count, "number of samples")->check(CLI::PositiveNumber)->capture_default_str();
  smp->add_option("--seed", sa.seed, "random seed")->capture_default_str();
  smp->add_option("--n-points", sa.n_points, "points per sample (default: training N)");
  smp->add_option("--flow-steps", sa.flow_steps, "Euler steps for flow models")->check(CLI::PositiveNumber)->capture_default_str();

  EvalArgs ev;
  auto* evc = app.add_subcommand("eval", "NLL bound and equivariance battery");
  evc->add_option("--params", ev.params, "parameter file")->required();
  evc->add_option("--data", ev.data, "held-out dataset")->required();
  evc->add_option("--seed", ev.seed, "random seed")->capture_default_str();
  evc->add_option("--out", ev.out, "JSON output (default stdout)");
  evc->add_option("--n-t", ev.n_t, "timesteps sampled per item")->check(CLI::PositiveNumber)->capture_default_str();
  evc->add_flag("--equivariance", ev.equivariance, "run the invariance battery on generated samples");
  evc->add_option("--n", ev.n, "samples per side")->check(CLI::Range(std::size_t{1000}, std::size_t{1} << 24))->capture_default_str();
  evc->add_option("--alpha", ev.alpha, "test level")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  evc->add_option("--n-rot", ev.n_rot, "rotations in the battery")->check(CLI::NonNegativeNumber)->capture_default_str();
  evc->add_option("--n-perm-g", ev.n_perm_g, "permutations in the battery")->check(CLI::NonNegativeNumber)->capture_default_str();
  evc->add_option("--n-perm", ev.n_perm, "permutation replicates per test")->check(CLI::Range(200, 1 << 20))->capture_default_str();
  evc->add_option("--flow-steps", ev.flow_steps, "Euler steps for flow models")->check(CLI::PositiveNumber)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen) return run_gen_data(gd);
    if (*trc) return run_train(tr);
    if (*smp) return run_sample(sa);
    if (*evc) return run_eval(ev);
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
