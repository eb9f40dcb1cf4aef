#include <doctest.h>

#include "symdiff/equitest.hpp"
#include "symdiff/linalg3.hpp"
#include "symdiff/ortho.hpp"
#include "test_support.hpp"

using namespace symdiff;

TEST_CASE("haar draws are orthogonal") {
  RngStream s(1);
  for (int i = 0; i < 10000; ++i) {
    const Tensor q = sample_haar(s);
    REQUIRE(linalg3::orthogonality_error(q) < 1e-10);
    REQUIRE(std::abs(std::abs(det3(q)) - 1.0) < 1e-10);
  }
}

TEST_CASE("haar mean is zero and both determinant signs occur") {
  RngStream s(2);
  Tensor mean = Tensor::zeros({3, 3});
  int negative = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const Tensor q = sample_haar(s);
    mean += q;
    if (det3(q) < 0) ++negative;
  }
  mean *= 1.0 / n;
  for (double v : mean.data()) CHECK(std::abs(v) < 0.02);
  CHECK(std::abs(negative - n / 2) < 1000);
}

TEST_CASE("haar is left and right invariant") {
  RngStream s(3);
  const Tensor r0 = sample_haar(s);
  const std::size_t n = 2000;
  SampleSet base, left, right;
  for (std::size_t i = 0; i < n; ++i) {
    const Tensor a = sample_haar(s), b = sample_haar(s), c = sample_haar(s);
    base.emplace_back(a.data().begin(), a.data().end());
    const Tensor lb = matmul(r0, b), rc = matmul(c, r0);
    left.emplace_back(lb.data().begin(), lb.data().end());
    right.emplace_back(rc.data().begin(), rc.data().end());
  }
  RngStream ps(4);
  CHECK_FALSE(perm_two_sample_test(base, left, 200, 0.01, ps).reject);
  CHECK_FALSE(perm_two_sample_test(base, right, 200, 0.01, ps).reject);
}

TEST_CASE("a sign-constrained variant is detectably not haar") {
  // Negative control for the invariance test: forcing Q(0,0) >= 0 breaks left invariance.
  RngStream s(5);
  const std::size_t n = 2000;
  SampleSet haar, naive;
  for (std::size_t i = 0; i < n; ++i) {
    const Tensor q = sample_haar(s);
    haar.emplace_back(q.data().begin(), q.data().end());
    Tensor qn = sample_haar(s);
    const double sign = qn(0, 0) < 0 ? -1.0 : 1.0;
    for (std::size_t r = 0; r < 3; ++r) qn(r, 0) *= sign;
    naive.emplace_back(qn.data().begin(), qn.data().end());
  }
  RngStream ps(6);
  CHECK(perm_two_sample_test(haar, naive, 200, 0.01, ps).reject);
}

TEST_CASE("qr_orthogonalize examples") {
  auto r = qr_orthogonalize(Tensor::identity(3));
  CHECK(r.q == Tensor::identity(3));
  CHECK_FALSE(r.degenerate);
  r = qr_orthogonalize(Tensor::matrix({{2, 0, 0}, {0, 3, 0}, {0, 0, 4}}));
  CHECK(max_abs_diff(r.q, Tensor::identity(3)) < 1e-15);

  RngStream s(7);
  Tensor m = randn(s, {3, 3});
  for (std::size_t i = 0; i < 3; ++i) m(i, 1) = -m(i, 1);
  r = qr_orthogonalize(m);
  CHECK(linalg3::orthogonality_error(r.q) < 1e-12);
  CHECK(std::abs(std::abs(det3(r.q)) - 1.0) < 1e-12);
}

TEST_CASE("qr_orthogonalize is left equivariant") {
  RngStream s(8);
  for (int i = 0; i < 200; ++i) {
    const Tensor m = randn(s, {3, 3});
    const Tensor r = sample_haar(s);
    CHECK(max_abs_diff(qr_orthogonalize(matmul(r, m)).q, matmul(r, qr_orthogonalize(m).q)) < 1e-9);
  }
}

TEST_CASE("degenerate input falls back to identity") {
  const Tensor rank2 = Tensor::matrix({{1, 2, 3}, {2, 4, 6}, {0, 1, 1}});
  const auto r = qr_orthogonalize(rank2);
  CHECK(r.degenerate);
  CHECK(r.q == Tensor::identity(3));
  CHECK(is_degenerate_head(Tensor::zeros({3, 3})));
  CHECK_FALSE(is_degenerate_head(Tensor::identity(3)));

  RngStream s(9);
  const Tensor rr = sample_haar(s), q = sample_haar(s);
  const Tensor thin = matmul(matmul(rr, Tensor::matrix({{3, 0, 0}, {0, 1, 0}, {0, 0, 1e-10}})), q);
  CHECK(linalg3::singular_values(thin)[0] == doctest::Approx(1e-10).epsilon(1e-3));
  CHECK(is_degenerate_head(thin));
  const Tensor thick = matmul(matmul(rr, Tensor::matrix({{3, 0, 0}, {0, 1, 0}, {0, 0, 1e-7}})), q);
  CHECK_FALSE(is_degenerate_head(thick));
}
