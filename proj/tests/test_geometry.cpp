#include <doctest.h>

#include "symdiff/errors.hpp"
#include "symdiff/geometry.hpp"
#include "symdiff/ortho.hpp"
#include "test_support.hpp"

using namespace symdiff;

namespace {

GroupElement random_element(std::size_t n, RngStream& s) { return GroupElement(random_permutation(n, s), sample_haar(s)); }

NBodyState random_state(std::size_t n, std::size_t d, RngStream& s) { return NBodyState(randn(s, {n, 3}), randn(s, {n, d})); }

}  // namespace

TEST_CASE("state validation") {
  CHECK_THROWS_AS(NBodyState(Tensor::zeros({2, 2}), Tensor::zeros({2, 0})), DimensionError);
  CHECK_THROWS_AS(NBodyState(Tensor::zeros({2, 3}), Tensor::zeros({3, 1})), DimensionError);
  CHECK_THROWS_AS(NBodyState(Tensor::zeros({0, 3}), Tensor::zeros({0, 0})), DimensionError);
  const NBodyState z = NBodyState::zeros(3, 2);
  CHECK(z.n() == 3);
  CHECK(z.d() == 2);
  CHECK(NBodyState::unpack(z.pack()) == z);
}

TEST_CASE("group element validation") {
  CHECK_THROWS_AS(GroupElement({0, 0}, Tensor::identity(3)), ContractError);
  CHECK_THROWS_AS(GroupElement({0, 2}, Tensor::identity(3)), ContractError);
  CHECK_THROWS_AS(GroupElement({0, 1}, Tensor::matrix({{1, 0, 0}, {0, 1, 0}, {0, 0, 2}})), ContractError);
  CHECK_NOTHROW(GroupElement({1, 0}, Tensor::matrix({{-1, 0, 0}, {0, 1, 0}, {0, 0, 1}})));
  const NBodyState z = NBodyState::zeros(3, 0);
  CHECK_THROWS_AS(act(GroupElement::identity(2), z), DimensionError);
}

TEST_CASE("act examples") {
  RngStream s(1);
  const NBodyState z = random_state(4, 2, s);
  CHECK(act(GroupElement::identity(4), z) == z);

  const NBodyState two(Tensor::matrix({{1, 0, 0}, {0, 1, 0}}), Tensor::matrix({{5}, {6}}));
  const NBodyState swapped = act(GroupElement::permutation({1, 0}), two);
  CHECK(swapped.x() == Tensor::matrix({{0, 1, 0}, {1, 0, 0}}));
  CHECK(swapped.h() == Tensor::matrix({{6}, {5}}));

  const NBodyState one(Tensor::matrix({{1, 2, 3}}));
  const NBodyState refl = act(GroupElement::rotation(1, Tensor::matrix({{-1, 0, 0}, {0, -1, 0}, {0, 0, 1}})), one);
  CHECK(refl.x() == Tensor::matrix({{-1, -2, 3}}));
}

TEST_CASE("group action laws") {
  RngStream s(2);
  for (int trial = 0; trial < 50; ++trial) {
    const GroupElement g = random_element(5, s), h = random_element(5, s);
    const NBodyState z = random_state(5, 2, s);
    CHECK(max_abs_diff(act(g * h, z), act(g, act(h, z))) < 1e-12);
    CHECK(max_abs_diff(act(g.inverse(), act(g, z)), z) < 1e-12);
    CHECK(max_abs_diff(act(g * g.inverse(), z), z) < 1e-12);
    CHECK(std::abs(squared_norm(act(g, z).x()) - squared_norm(z.x())) < 1e-12);
  }
}

TEST_CASE("composition is associative") {
  RngStream s(3);
  const GroupElement a = random_element(6, s), b = random_element(6, s), c = random_element(6, s);
  const GroupElement l = (a * b) * c, r = a * (b * c);
  CHECK(l.perm() == r.perm());
  CHECK(max_abs_diff(l.rot(), r.rot()) < 1e-14);
}

TEST_CASE("com examples") {
  CHECK(com(Tensor::matrix({{1, 0, 0}, {-1, 0, 0}})) == Tensor::vector({0, 0, 0}));
  CHECK(com(Tensor::matrix({{2, 2, 2}})) == Tensor::vector({2, 2, 2}));
  CHECK(com(Tensor::matrix({{1, 0, 0}, {3, 0, 0}})) == Tensor::vector({2, 0, 0}));
}

TEST_CASE("proj_u examples and properties") {
  const NBodyState z(Tensor::matrix({{1, 0, 0}, {3, 0, 0}}), Tensor::matrix({{0.25}, {-7}}));
  const NBodyState p = proj_u(z);
  CHECK(p.x() == Tensor::matrix({{-1, 0, 0}, {1, 0, 0}}));
  CHECK(p.h() == z.h());

  RngStream s(4);
  for (int trial = 0; trial < 20; ++trial) {
    const NBodyState r = random_state(5, 3, s);
    const NBodyState c = proj_u(r);
    CHECK(max_abs_diff(proj_u(c), c) < 1e-15);
    CHECK(c.h() == r.h());
    CHECK(is_centered(c, 1e-12));
    const GroupElement g = random_element(5, s);
    CHECK(max_abs_diff(proj_u(act(g, r)), act(g, proj_u(r))) < 1e-12);
  }
}

TEST_CASE("is_centered examples") {
  const NBodyState off(Tensor::matrix({{1, 0, 0}, {1, 0, 0}}));
  CHECK_FALSE(is_centered(off, 1e-6));
  CHECK(is_centered(NBodyState::zeros(3, 1), 1e-12));
  CHECK_THROWS_AS(is_centered(off, 0.0), ContractError);
}

TEST_CASE("random permutation is a bijection") {
  RngStream s(5);
  for (int i = 0; i < 20; ++i) {
    auto p = random_permutation(7, s);
    std::sort(p.begin(), p.end());
    for (std::size_t k = 0; k < 7; ++k) CHECK(p[k] == k);
  }
}

TEST_CASE("flatten order is positions then features") {
  const NBodyState z(Tensor::matrix({{1, 2, 3}, {4, 5, 6}}), Tensor::matrix({{7}, {8}}));
  CHECK(z.flatten() == std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8});
}
