#include <doctest.h>

#include <cmath>
#include <numbers>

#include "symdiff/errors.hpp"
#include "symdiff/linalg3.hpp"
#include "symdiff/nets.hpp"
#include "symdiff/ortho.hpp"
#include "symdiff/symkernel.hpp"
#include "test_support.hpp"

using namespace symdiff;
using testing::random_centered;
using testing::random_params;
using testing::small_net;

TEST_CASE("config validation") {
  NetConfig c;
  CHECK_NOTHROW(c.validate());
  c.hidden = 0;
  CHECK_THROWS_AS(c.validate(), ContractError);
  c = NetConfig{};
  c.n_emb = c.hidden;
  CHECK_THROWS_AS(c.validate(), ContractError);
}

TEST_CASE("param store") {
  RngStream s(1);
  ParamStore p = init_params(small_net(1), s);
  CHECK(p.contains("emb.mu"));
  CHECK_FALSE(p.contains("missing"));
  CHECK_THROWS_AS(p.index("missing"), ContractError);
  const auto flat = p.flat();
  CHECK(flat.size() == p.num_scalars());
  ParamStore q = init_params(small_net(1), s);
  q.set_flat(flat);
  CHECK(q.flat() == flat);
  CHECK_THROWS_AS(q.set_flat(std::vector<double>(3, 0.0)), DimensionError);
  CHECK_THROWS_AS(ParamStore({{"a", Tensor::zeros({1})}, {"a", Tensor::zeros({1})}}), ContractError);
  CHECK(init_params(NetConfig{}, s).num_scalars() == 18621);
}

TEST_CASE("time embedding") {
  const Tensor e = time_embedding(0.0, 8);
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(e[k] == 1.0);
    CHECK(e[4 + k] == 0.0);
  }
  const Tensor f = time_embedding(0.3, 8);
  CHECK(f[0] == doctest::Approx(std::cos(300.0)));
  CHECK(f[4] == doctest::Approx(std::sin(300.0)));
}

TEST_CASE("embeddings of coincident points") {
  const NetConfig cfg = small_net(0);
  RngStream s(2);
  const ParamStore p = random_params(cfg, s);
  const Tensor x = Tensor::zeros({3, 3});
  const Tensor psi = gaussian_embeddings(p, cfg, x);
  const Tensor& mu = p.value("emb.mu");
  const Tensor& sigma = p.value("emb.sigma");
  const Tensor& wd = p.value("emb.W_D");
  for (std::size_t e = 0; e < cfg.n_emb; ++e) {
    double expect = 0.0;
    for (std::size_t k = 0; k < cfg.n_basis; ++k) {
      const double sg = std::max(std::abs(sigma[k]), 1e-3);
      const double psik = -std::exp(-0.5 * (mu[k] / sg) * (mu[k] / sg)) / (std::sqrt(2 * std::numbers::pi) * sg);
      expect += psik * wd(k, e);
    }
    for (std::size_t i = 0; i < 3; ++i) CHECK(psi(i, e) == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("embeddings are rotation invariant and permutation equivariant") {
  const NetConfig cfg = small_net(0);
  RngStream s(3);
  const ParamStore p = random_params(cfg, s);
  for (int i = 0; i < 20; ++i) {
    const Tensor x = randn(s, {5, 3});
    const Tensor psi = gaussian_embeddings(p, cfg, x);
    const Tensor r = sample_haar(s);
    CHECK(max_abs_diff(gaussian_embeddings(p, cfg, matmul(x, r.transposed())), psi) < 1e-12);
    const auto perm = random_permutation(5, s);
    CHECK(max_abs_diff(gaussian_embeddings(p, cfg, permute_rows(perm, x)), permute_rows(perm, psi)) < 1e-12);
  }
}

TEST_CASE("fresh denoiser outputs zero and fresh head outputs identity") {
  const NetConfig cfg = small_net(2);
  RngStream s(4);
  const ParamStore p = init_params(cfg, s);
  const NBodyState z = random_centered(4, 2, s);
  const NBodyState e = eps_forward(p, cfg, z, 0.5);
  CHECK(squared_norm(e.x()) == 0.0);
  CHECK(squared_norm(e.h()) == 0.0);
  const OrthoResult f = f_forward(p, cfg, z, sample_rotation_noise(4, s), 0.5);
  CHECK_FALSE(f.degenerate);
  CHECK(max_abs_diff(f.q, Tensor::identity(3)) < 1e-15);
}

TEST_CASE("denoiser is permutation equivariant and centred") {
  const NetConfig cfg = small_net(2);
  RngStream s(5);
  const ParamStore p = random_params(cfg, s);
  for (int i = 0; i < 20; ++i) {
    const NBodyState z = random_centered(6, 2, s);
    const double t = s.uniform();
    const NBodyState e = eps_forward(p, cfg, z, t);
    CHECK(is_centered(e, 1e-12));
    const GroupElement g = GroupElement::permutation(random_permutation(6, s));
    CHECK(max_abs_diff(eps_forward(p, cfg, act(g, z), t), act(g, e)) < 1e-12);
  }
}

TEST_CASE("denoiser is not rotation equivariant") {
  const NetConfig cfg = small_net(1);
  RngStream s(6);
  const ParamStore p = random_params(cfg, s);
  const NBodyState z = random_centered(4, 1, s);
  const Tensor r = sample_haar(s);
  CHECK(max_abs_diff(eps_forward(p, cfg, rotate(r, z), 0.4), rotate(r, eps_forward(p, cfg, z, 0.4))) > 1e-3);
}

TEST_CASE("denoiser rejects mismatched shapes") {
  const NetConfig cfg = small_net(1);
  RngStream s(7);
  const ParamStore p = init_params(cfg, s);
  CHECK_THROWS_AS(eps_forward(p, cfg, random_centered(3, 2, s), 0.5), ContractError);
}

TEST_CASE("rotation head is orthogonal and jointly permutation invariant") {
  const NetConfig cfg = small_net(1);
  RngStream s(8);
  const ParamStore p = random_params(cfg, s, 0.5);
  for (int i = 0; i < 50; ++i) {
    const NBodyState z = random_centered(5, 1, s);
    const Tensor eta = sample_rotation_noise(5, s);
    const OrthoResult f = f_forward(p, cfg, z, eta, 0.3);
    CHECK(linalg3::orthogonality_error(f.q) < 1e-9);
    const auto perm = random_permutation(5, s);
    const OrthoResult fp = f_forward(p, cfg, act(GroupElement::permutation(perm), z), permute_rows(perm, eta), 0.3);
    CHECK(max_abs_diff(fp.q, f.q) < 1e-12);
  }
}

TEST_CASE("zero head flags degeneracy") {
  const NetConfig cfg = small_net(0);
  RngStream s(9);
  ParamStore p = random_params(cfg, s);
  p.value("f.head.W2") = Tensor::zeros(p.value("f.head.W2").shape());
  p.value("f.head.b2") = Tensor::zeros({9});
  const OrthoResult f = f_forward(p, cfg, random_centered(3, 0, s), sample_rotation_noise(3, s), 0.5);
  CHECK(f.degenerate);
  CHECK(f.q == Tensor::identity(3));
}

TEST_CASE("network gradients match finite differences") {
  const NetConfig cfg = small_net(1);
  RngStream s(10);
  const ParamStore p0 = random_params(cfg, s);
  const NBodyState z = random_centered(4, 1, s);
  const Tensor eta = sample_rotation_noise(4, s);
  const Tensor ce = randn(s, {4, 4}), cf = randn(s, {3, 3});
  const double t = 0.37;

  auto build = [&](ad::Tape& tape, NetGraph& net) {
    ad::Var e = net.eps(tape.constant(z.pack()), t);
    ad::Var f = net.rotation(tape.constant(z.pack()), tape.constant(eta), t).rot;
    return ad::add(ad::sum(ad::mul(e, tape.constant(ce))), ad::sum(ad::mul(f, tape.constant(cf))));
  };

  ad::Tape tape;
  NetGraph net(tape, p0, cfg);
  tape.backward(build(tape, net));
  const auto analytic = testing::flat_grads(net.gradients());

  auto value = [&](const std::vector<double>& flat) {
    ParamStore p = p0;
    p.set_flat(flat);
    ad::Tape t2(false);
    NetGraph n2(t2, p, cfg);
    return build(t2, n2).value().item();
  };
  const auto fd = testing::numeric_gradient(value, p0.flat(), 1e-6);
  CHECK(testing::max_rel_error(analytic, fd) < 1e-4);
}
