#include <doctest.h>

#include <cmath>
#include <limits>
#include <string>

#include "symdiff/equitest.hpp"
#include "symdiff/errors.hpp"
#include "symdiff/ortho.hpp"
#include "symdiff/sampler.hpp"
#include "test_support.hpp"

using namespace symdiff;
using testing::random_params;
using testing::small_net;

namespace {

ReverseModel zero_model() {
  ReverseModel m;
  m.field = [](const NBodyState& z, double) { return NBodyState::zeros(z.n(), z.d()); };
  m.gamma = [](const NBodyState&, double, RngStream& s) { return sample_haar(s); };
  return m;
}

}  // namespace

TEST_CASE("single step chain is one final-kernel draw") {
  const NetConfig cfg = small_net(1);
  RngStream s(1);
  const ParamStore p = random_params(cfg, s);
  const ReverseModel model = make_reverse_model(p, cfg, GammaKind::recursive);
  const NoiseSchedule sched = make_linear_schedule(1);
  RngStream a(2), b(2);
  const NBodyState out = generate(model, 3, 1, sched, a);

  const NBodyState z1 = sample_projected_normal(3, 1, b);
  const Tensor r = model.gamma(z1, 1.0, b);
  const NBodyState pred = rotate(r, eps_forward(p, cfg, rotate(r.transposed(), z1), 1.0));
  const double a1 = sched.alpha(1), s1 = sched.sigma(1);
  const NBodyState expect = sample_projected_gaussian((1.0 / a1) * z1 - (s1 / a1) * pred, s1 / a1, b);
  CHECK(out == expect);
}

TEST_CASE("zero denoiser chain matches the iterated covariance") {
  const NoiseSchedule sched = make_cosine_schedule(10);
  double c = 1.0;
  for (int t = 10; t >= 2; --t) c = c / (sched.alpha_ts(t) * sched.alpha_ts(t)) + sched.sigma_q2(t);
  c = (c + sched.sigma(1) * sched.sigma(1)) / (sched.alpha(1) * sched.alpha(1));

  const ReverseModel model = zero_model();
  const int runs = 100000;
  std::vector<double> cov(36, 0.0);
  RngStream s(3);
  for (int i = 0; i < runs; ++i) {
    const auto v = generate(model, 2, 0, sched, s).x();
    for (std::size_t a = 0; a < 6; ++a)
      for (std::size_t b = 0; b < 6; ++b) cov[a * 6 + b] += v[a] * v[b];
  }
  double worst = 0.0;
  for (std::size_t a = 0; a < 6; ++a)
    for (std::size_t b = 0; b < 6; ++b) {
      const double expect = a % 3 == b % 3 ? (a / 3 == b / 3 ? 0.5 : -0.5) : 0.0;
      worst = std::max(worst, std::abs(cov[a * 6 + b] / runs / c - expect));
    }
  CHECK(worst < 0.02);
}

TEST_CASE("chain states stay centred") {
  const NetConfig cfg = small_net(2);
  RngStream s(4);
  // Large random weights make the untrained chain diverge, so keep the perturbation small.
  const ParamStore p = random_params(cfg, s, 0.05);
  const NoiseSchedule sched = make_cosine_schedule(40);
  for (GammaKind g : {GammaKind::recursive, GammaKind::haar, GammaKind::none}) {
    const ReverseModel model = make_reverse_model(p, cfg, g);
    for (int i = 0; i < 5; ++i) {
      ChainTrace trace;
      const NBodyState z = generate(model, 5, 2, sched, s, &trace);
      CHECK(trace.steps == 41);
      CHECK(trace.max_com < 1e-9);
      CHECK(is_centered(z, 1e-9));
    }
  }
}

TEST_CASE("chain reports the failing step") {
  ReverseModel model = zero_model();
  model.field = [](const NBodyState& z, double t) {
    if (t < 0.55) return NBodyState(Tensor::filled(z.x().shape(), std::numeric_limits<double>::quiet_NaN()));
    return NBodyState::zeros(z.n(), z.d());
  };
  RngStream s(5);
  try {
    generate(model, 3, 0, make_cosine_schedule(10), s);
    FAIL("expected a numeric error");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("step 5") != std::string::npos);
  }
  CHECK_THROWS_AS(generate(zero_model(), 1, 0, make_cosine_schedule(10), s), ContractError);
}

TEST_CASE("batch generation is deterministic") {
  const NetConfig cfg = small_net(1);
  RngStream s(6);
  const ParamStore p = random_params(cfg, s);
  const ReverseModel model = make_reverse_model(p, cfg, GammaKind::recursive);
  const NoiseSchedule sched = make_cosine_schedule(15);
  const RngStream root(7);
  const auto one = generate_batch(model, 12, 4, 1, sched, root, 1);
  const auto four = generate_batch(model, 12, 4, 1, sched, root, 4);
  CHECK(one == four);
  RngStream child = root.split(0);
  CHECK(generate_batch(model, 1, 4, 1, sched, root)[0] == generate(model, 4, 1, sched, child));
  CHECK(generate_batch(model, 3, 4, 1, sched, RngStream(8)) != generate_batch(model, 3, 4, 1, sched, RngStream(9)));
  CHECK_THROWS_AS(generate_batch(model, 0, 4, 1, sched, root), ContractError);
}

TEST_CASE("generated distribution is rotation invariant") {
  const NetConfig cfg = small_net(1);
  RngStream s(10);
  const ParamStore p = random_params(cfg, s, 0.5);
  const ReverseModel model = make_reverse_model(p, cfg, GammaKind::recursive);
  const NoiseSchedule sched = make_cosine_schedule(10);
  const auto pool_a = generate_batch(model, 3000, 4, 1, sched, RngStream(11));
  const auto pool_b = generate_batch(model, 3000, 4, 1, sched, RngStream(12));
  for (int k = 0; k < 5; ++k) {
    const GroupElement g(random_permutation(4, s), sample_haar(s));
    RngStream ps = s.split(100 + k);
    CHECK_FALSE(test_distributional_invariance(pool_a, pool_b, g, 0.01, ps).result.reject);
  }
}
