#include "symdiff/linalg3.hpp"

#include <algorithm>
#include <cmath>

#include "symdiff/errors.hpp"

namespace symdiff::linalg3 {

namespace {

void require_3x3(const Tensor& m, const char* what) {
  if (m.shape() != Shape{3, 3}) throw DimensionError(std::string(what) + " expects a 3x3 matrix, got " + shape_string(m.shape()));
}

}  // namespace

QR householder_qr(const Tensor& m) {
  require_3x3(m, "householder_qr");
  Tensor r = m;
  Tensor q = Tensor::identity(3);
  for (std::size_t k = 0; k < 2; ++k) {
    double norm = 0.0;
    for (std::size_t i = k; i < 3; ++i) norm += r(i, k) * r(i, k);
    norm = std::sqrt(norm);
    if (norm == 0.0) continue;
    const double alpha = r(k, k) > 0.0 ? -norm : norm;
    std::array<double, 3> v{0.0, 0.0, 0.0};
    for (std::size_t i = k; i < 3; ++i) v[i] = r(i, k);
    v[k] -= alpha;
    double vnorm2 = 0.0;
    for (std::size_t i = k; i < 3; ++i) vnorm2 += v[i] * v[i];
    if (vnorm2 == 0.0) continue;
    // r <- (I - 2 v v^T / |v|^2) r ; q <- q (I - 2 v v^T / |v|^2)
    for (std::size_t j = 0; j < 3; ++j) {
      double s = 0.0;
      for (std::size_t i = k; i < 3; ++i) s += v[i] * r(i, j);
      s *= 2.0 / vnorm2;
      for (std::size_t i = k; i < 3; ++i) r(i, j) -= s * v[i];
    }
    for (std::size_t i = 0; i < 3; ++i) {
      double s = 0.0;
      for (std::size_t j = k; j < 3; ++j) s += q(i, j) * v[j];
      s *= 2.0 / vnorm2;
      for (std::size_t j = k; j < 3; ++j) q(i, j) -= s * v[j];
    }
  }
  for (std::size_t i = 1; i < 3; ++i)
    for (std::size_t j = 0; j < i; ++j) r(i, j) = 0.0;
  for (std::size_t k = 0; k < 3; ++k) {
    if (r(k, k) < 0.0) {
      for (std::size_t i = 0; i < 3; ++i) q(i, k) = -q(i, k);
      for (std::size_t j = 0; j < 3; ++j) r(k, j) = -r(k, j);
    }
  }
  return {std::move(q), std::move(r)};
}

std::array<double, 3> symmetric_eigenvalues(const Tensor& s) {
  require_3x3(s, "symmetric_eigenvalues");
  Tensor a = s;
  for (int sweep = 0; sweep < 64; ++sweep) {
    const double off = a(0, 1) * a(0, 1) + a(0, 2) * a(0, 2) + a(1, 2) * a(1, 2);
    if (off < 1e-300) break;
    for (std::size_t p = 0; p < 2; ++p) {
      for (std::size_t q = p + 1; q < 3; ++q) {
        if (a(p, q) == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double sn = t * c;
        for (std::size_t k = 0; k < 3; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - sn * akq;
          a(k, q) = sn * akp + c * akq;
        }
        for (std::size_t k = 0; k < 3; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - sn * aqk;
          a(q, k) = sn * apk + c * aqk;
        }
      }
    }
  }
  std::array<double, 3> ev{a(0, 0), a(1, 1), a(2, 2)};
  std::sort(ev.begin(), ev.end());
  return ev;
}

std::array<double, 3> singular_values(const Tensor& m) {
  const Tensor mtm = matmul(m.transposed(), m);
  auto ev = symmetric_eigenvalues(mtm);
  for (double& v : ev) v = std::sqrt(std::max(v, 0.0));
  // The eigenvalues of m^T m lose the smallest singular value below sqrt(eps) * largest.
  // Recover it from |det m| = s0 * s1 * s2 instead.
  if (ev[1] > 0.0) ev[0] = std::min(std::abs(det3(m)) / (ev[1] * ev[2]), ev[1]);
  return ev;
}

Tensor upper_triangular_inverse(const Tensor& r) {
  require_3x3(r, "upper_triangular_inverse");
  Tensor inv = Tensor::zeros({3, 3});
  for (std::size_t i = 0; i < 3; ++i) {
    if (r(i, i) == 0.0) throw NumericError("singular triangular factor");
    inv(i, i) = 1.0 / r(i, i);
  }
  // Back substitution column by column.
  for (std::size_t j = 0; j < 3; ++j) {
    for (std::size_t ii = j; ii-- > 0;) {
      double s = 0.0;
      for (std::size_t k = ii + 1; k <= j; ++k) s += r(ii, k) * inv(k, j);
      inv(ii, j) = -s / r(ii, ii);
    }
  }
  return inv;
}

Tensor gram_schmidt(const Tensor& m) {
  require_3x3(m, "gram_schmidt");
  Tensor q = m;
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t j = 0; j < k; ++j) {
      double d = 0.0;
      for (std::size_t i = 0; i < 3; ++i) d += q(i, j) * q(i, k);
      for (std::size_t i = 0; i < 3; ++i) q(i, k) -= d * q(i, j);
    }
    double n = 0.0;
    for (std::size_t i = 0; i < 3; ++i) n += q(i, k) * q(i, k);
    n = std::sqrt(n);
    if (n == 0.0) throw NumericError("gram_schmidt on rank-deficient matrix");
    for (std::size_t i = 0; i < 3; ++i) q(i, k) /= n;
  }
  return q;
}

double orthogonality_error(const Tensor& q) {
  require_3x3(q, "orthogonality_error");
  double err = 0.0;
  for (std::size_t a = 0; a < 3; ++a) {
    for (std::size_t b = 0; b < 3; ++b) {
      double s = 0.0;
      for (std::size_t i = 0; i < 3; ++i) s += q(i, a) * q(i, b);
      err = std::max(err, std::abs(s - (a == b ? 1.0 : 0.0)));
    }
  }
  return err;
}

}  // namespace symdiff::linalg3
