#include <doctest.h>

#include <cmath>

#include "symdiff/equitest.hpp"
#include "symdiff/errors.hpp"
#include "symdiff/matching.hpp"
#include "symdiff/ortho.hpp"
#include "test_support.hpp"

using namespace symdiff;
using testing::random_centered;
using testing::random_params;
using testing::small_net;

namespace {

double flat_gradient_error(const NetConfig& cfg, const ParamStore& p0, GammaKind gamma,
                           const std::function<ad::Var(ad::Tape&, const ModelView&, RngStream&)>& loss, const RngStream& stream) {
  ad::Tape tape;
  NetGraph net(tape, p0, cfg);
  RngStream s = stream;
  tape.backward(loss(tape, bind_model(net, gamma), s));
  const auto analytic = testing::flat_grads(net.gradients());
  auto value = [&](const std::vector<double>& flat) {
    ParamStore p = p0;
    p.set_flat(flat);
    ad::Tape t2(false);
    NetGraph n2(t2, p, cfg);
    RngStream s2 = stream;
    return loss(t2, bind_model(n2, gamma), s2).value().item();
  };
  return testing::max_rel_error(analytic, testing::numeric_gradient(value, p0.flat(), 1e-5));
}

}  // namespace

TEST_CASE("zero score network") {
  const NetConfig cfg = small_net(1);
  const ContinuousSchedule cs;
  RngStream s(1);
  const ParamStore p = init_params(cfg, s);
  ad::Tape tape(false);
  NetGraph net(tape, p, cfg);
  const ModelView view = bind_model(net, GammaKind::recursive);
  for (int i = 0; i < 20; ++i) {
    const NBodyState x0 = random_centered(4, 1, s);
    RngStream a = s.split(i), b = s.split(i);
    const double loss = sym_score_loss(tape, view, x0, cs, a).value().item();
    const double tau = b.uniform_open();
    const NBodyState eps = sample_projected_normal(4, 1, b);
    const double sg = cs.sigma(tau);
    const NBodyState xt = forward_sample(x0, eps, cs.alpha(tau), sg);
    const NBodyState score = (-1.0 / (sg * sg)) * (xt - cs.alpha(tau) * x0);
    CHECK(loss == doctest::Approx(sg * sg * squared_norm(score)).epsilon(1e-12));
  }
}

TEST_CASE("zero velocity network") {
  const NetConfig cfg = small_net(0);
  RngStream s(2);
  const ParamStore p = init_params(cfg, s);
  ad::Tape tape(false);
  NetGraph net(tape, p, cfg);
  const ModelView view = bind_model(net, GammaKind::recursive);
  for (int i = 0; i < 20; ++i) {
    const NBodyState x1 = random_centered(5, 0, s);
    RngStream a = s.split(i), b = s.split(i);
    const double loss = sym_flow_loss(tape, view, x1, a).value().item();
    b.uniform();
    const NBodyState x0 = sample_projected_normal(5, 0, b);
    CHECK(loss == doctest::Approx(squared_norm(x1 - x0)).epsilon(1e-13));
  }
}

TEST_CASE("dirac symmetrisation reduces to the standard losses") {
  const NetConfig cfg = small_net(2);
  const ContinuousSchedule cs;
  RngStream s(3);
  const ParamStore p = random_params(cfg, s);
  for (int i = 0; i < 20; ++i) {
    const NBodyState x0 = random_centered(4, 2, s);
    ad::Tape ta, tb;
    NetGraph na(ta, p, cfg), nb(tb, p, cfg);
    const ModelView va = bind_model(na, GammaKind::dirac), vb = bind_model(nb, GammaKind::none);
    RngStream a = s.split(i), b = s.split(i);
    CHECK(sym_score_loss(ta, va, x0, cs, a).value().item() == score_loss(tb, vb, x0, cs, b).value().item());
    CHECK(sym_flow_loss(ta, va, x0, a).value().item() == flow_loss(tb, vb, x0, b).value().item());
    CHECK(a.next_u64() == b.next_u64());
  }
}

TEST_CASE("equivariant field makes the loss independent of the rotation") {
  const NetConfig cfg = small_net(1);
  const ContinuousSchedule cs;
  RngStream s(4);
  const ParamStore p = random_params(cfg, s);
  ad::Tape tape(false);
  NetGraph net(tape, p, cfg);
  ModelView view = bind_model(net, GammaKind::recursive);
  view.field = [](ad::Var z, double) { return ad::scale(z, 0.7); };
  for (int i = 0; i < 20; ++i) {
    const NBodyState x = random_centered(4, 1, s), x0 = sample_projected_normal(4, 1, s);
    const double tau = s.uniform();
    const double ref = flow_loss_given(tape, view, x, x0, tau).value().item();
    const double sref = score_loss_given(tape, view, x, x0, tau, cs).value().item();
    for (int k = 0; k < 5; ++k) {
      ad::Var r = view.rotation(tape.constant(x.pack()), tau, s);
      CHECK(std::abs(sym_flow_loss_given(tape, view, x, x0, tau, r).value().item() - ref) < 1e-12 * (1.0 + ref));
      CHECK(std::abs(sym_score_loss_given(tape, view, x, x0, tau, r, cs).value().item() - sref) < 1e-12 * (1.0 + sref));
    }
  }
}

TEST_CASE("matching loss gradients") {
  const NetConfig cfg = small_net(1);
  const ContinuousSchedule cs;
  RngStream s(5);
  const ParamStore p = random_params(cfg, s);
  const NBodyState x = random_centered(4, 1, s);
  const RngStream st = s.split(7);
  auto score = [&](ad::Tape& t, const ModelView& v, RngStream& r) { return sym_score_loss(t, v, x, cs, r); };
  auto flow = [&](ad::Tape& t, const ModelView& v, RngStream& r) { return sym_flow_loss(t, v, x, r); };
  CHECK(flat_gradient_error(cfg, p, GammaKind::recursive, score, st) < 1e-4);
  CHECK(flat_gradient_error(cfg, p, GammaKind::recursive, flow, st) < 1e-4);
}

TEST_CASE("euler flow examples") {
  ReverseModel zero;
  zero.field = [](const NBodyState& z, double) { return NBodyState::zeros(z.n(), z.d()); };
  zero.gamma = [](const NBodyState&, double, RngStream& st) { return sample_haar(st); };
  RngStream a(6), b(6);
  CHECK(euler_generate_flow(zero, 3, 1, 10, a) == sample_projected_normal(3, 1, b));

  ReverseModel ident = zero;
  ident.field = [](const NBodyState& z, double) { return z; };
  RngStream c(7), d(7);
  const NBodyState out = euler_generate_flow(ident, 4, 0, 1, c);
  CHECK(max_abs_diff(out, 2.0 * sample_projected_normal(4, 0, d)) < 1e-12);
  CHECK(is_centered(out, 1e-12));
  CHECK_THROWS_AS(euler_generate_flow(zero, 3, 0, 0, c), ContractError);
}

TEST_CASE("symmetrised flow samples are rotation invariant") {
  const NetConfig cfg = small_net(1);
  RngStream s(8);
  const ParamStore p = random_params(cfg, s);
  const ReverseModel model = make_reverse_model(p, cfg, GammaKind::recursive);
  std::vector<NBodyState> a, b;
  for (int i = 0; i < 1500; ++i) {
    a.push_back(euler_generate_flow(model, 4, 1, 10, s));
    b.push_back(euler_generate_flow(model, 4, 1, 10, s));
  }
  const GroupElement g(random_permutation(4, s), sample_haar(s));
  RngStream ps(9);
  CHECK_FALSE(test_distributional_invariance(a, b, g, 0.01, ps).result.reject);
}
