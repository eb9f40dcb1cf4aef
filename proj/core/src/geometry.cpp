#include "symdiff/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "symdiff/errors.hpp"
#include "symdiff/linalg3.hpp"

namespace symdiff {

namespace {
constexpr double kOrthoTol = 1e-10;
}

NBodyState::NBodyState(Tensor x, Tensor h) : x_(std::move(x)), h_(std::move(h)) {
  if (x_.rank() != 2 || x_.cols() != 3) throw DimensionError("positions must be N x 3, got " + shape_string(x_.shape()));
  if (x_.rows() < 1) throw DimensionError("N-body state needs at least one point");
  if (h_.rank() != 2 || h_.rows() != x_.rows()) {
    throw DimensionError("features must be N x d with N = " + std::to_string(x_.rows()) + ", got " + shape_string(h_.shape()));
  }
  if (!x_.all_finite() || !h_.all_finite()) throw NumericError("N-body state has non-finite entries");
}

NBodyState::NBodyState(Tensor x) : NBodyState(x, Tensor::zeros({x.rank() == 2 ? x.rows() : 0, 0})) {}

NBodyState NBodyState::zeros(std::size_t n, std::size_t d) { return NBodyState(Tensor::zeros({n, 3}), Tensor::zeros({n, d})); }

NBodyState NBodyState::unpack(const Tensor& packed) {
  if (packed.rank() != 2 || packed.cols() < 3) throw DimensionError("packed state must be N x (3 + d), got " + shape_string(packed.shape()));
  const std::size_t n = packed.rows(), d = packed.cols() - 3;
  Tensor x = Tensor::zeros({n, 3}), h = Tensor::zeros({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < 3; ++a) x(i, a) = packed(i, a);
    for (std::size_t a = 0; a < d; ++a) h(i, a) = packed(i, 3 + a);
  }
  return NBodyState(std::move(x), std::move(h));
}

Tensor NBodyState::pack() const {
  const std::size_t n = this->n(), dd = d();
  Tensor out = Tensor::zeros({n, 3 + dd});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < 3; ++a) out(i, a) = x_(i, a);
    for (std::size_t a = 0; a < dd; ++a) out(i, 3 + a) = h_(i, a);
  }
  return out;
}

std::vector<double> NBodyState::flatten() const {
  std::vector<double> out(x_.data().begin(), x_.data().end());
  out.insert(out.end(), h_.data().begin(), h_.data().end());
  return out;
}

NBodyState& NBodyState::operator+=(const NBodyState& other) {
  x_ += other.x_;
  h_ += other.h_;
  return *this;
}

NBodyState& NBodyState::operator*=(double s) {
  x_ *= s;
  h_ *= s;
  return *this;
}

NBodyState operator+(NBodyState a, const NBodyState& b) { return a += b; }
NBodyState operator-(NBodyState a, const NBodyState& b) {
  a.x() -= b.x();
  a.h() -= b.h();
  return a;
}
NBodyState operator*(double s, NBodyState a) { return a *= s; }

double squared_norm(const NBodyState& z) { return squared_norm(z.x()) + squared_norm(z.h()); }

double max_abs_diff(const NBodyState& a, const NBodyState& b) {
  return std::max(max_abs_diff(a.x(), b.x()), max_abs_diff(a.h(), b.h()));
}

GroupElement::GroupElement(std::vector<std::size_t> perm, Tensor rot) : perm_(std::move(perm)), rot_(std::move(rot)) {
  std::vector<bool> seen(perm_.size(), false);
  for (std::size_t p : perm_) {
    if (p >= perm_.size() || seen[p]) throw ContractError("group element permutation is not a bijection");
    seen[p] = true;
  }
  if (rot_.shape() != Shape{3, 3}) throw DimensionError("group element rotation must be 3x3");
  if (linalg3::orthogonality_error(rot_) > kOrthoTol || std::abs(std::abs(det3(rot_)) - 1.0) > kOrthoTol) {
    throw ContractError("group element rotation is not orthogonal within 1e-10");
  }
}

GroupElement GroupElement::identity(std::size_t n) { return rotation(n, Tensor::identity(3)); }

GroupElement GroupElement::rotation(std::size_t n, Tensor rot) {
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  return GroupElement(std::move(perm), std::move(rot));
}

GroupElement GroupElement::permutation(std::vector<std::size_t> perm) { return GroupElement(std::move(perm), Tensor::identity(3)); }

GroupElement GroupElement::operator*(const GroupElement& other) const {
  if (other.size() != size()) throw DimensionError("composing group elements of different sizes");
  std::vector<std::size_t> perm(size());
  for (std::size_t i = 0; i < size(); ++i) perm[i] = other.perm_[perm_[i]];
  Tensor rot = matmul(rot_, other.rot_);
  if (linalg3::orthogonality_error(rot) > kOrthoTol) rot = linalg3::gram_schmidt(rot);
  return GroupElement(std::move(perm), std::move(rot));
}

GroupElement GroupElement::inverse() const {
  std::vector<std::size_t> perm(size());
  for (std::size_t i = 0; i < size(); ++i) perm[perm_[i]] = i;
  return GroupElement(std::move(perm), rot_.transposed());
}

NBodyState rotate(const Tensor& rot, const NBodyState& z) {
  if (rot.shape() != Shape{3, 3}) throw DimensionError("rotation must be 3x3");
  const std::size_t n = z.n();
  Tensor x = Tensor::zeros({n, 3});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < 3; ++a)
      x(i, a) = rot(a, 0) * z.x()(i, 0) + rot(a, 1) * z.x()(i, 1) + rot(a, 2) * z.x()(i, 2);
  return NBodyState(std::move(x), z.h());
}

Tensor permute_rows(const std::vector<std::size_t>& perm, const Tensor& m) {
  if (m.rank() != 2 || perm.size() != m.rows()) throw DimensionError("permutation size does not match row count");
  const std::size_t c = m.cols();
  Tensor out = Tensor::zeros(m.shape());
  for (std::size_t i = 0; i < perm.size(); ++i)
    for (std::size_t a = 0; a < c; ++a) out(i, a) = m(perm[i], a);
  return out;
}

NBodyState permute(const std::vector<std::size_t>& perm, const NBodyState& z) {
  return NBodyState(permute_rows(perm, z.x()), permute_rows(perm, z.h()));
}

NBodyState act(const GroupElement& g, const NBodyState& z) {
  if (g.size() != z.n()) {
    throw DimensionError("group element acts on " + std::to_string(g.size()) + " points, state has " + std::to_string(z.n()));
  }
  return rotate(g.rot(), permute(g.perm(), z));
}

Tensor com(const Tensor& x) {
  if (x.rank() != 2 || x.cols() != 3 || x.rows() < 1) throw DimensionError("com expects N x 3 with N >= 1");
  Tensor c = Tensor::zeros({3});
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t a = 0; a < 3; ++a) c[a] += x(i, a);
  return c * (1.0 / static_cast<double>(x.rows()));
}

Tensor center_rows(const Tensor& x) {
  const Tensor c = com(x);
  Tensor out = x;
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t a = 0; a < 3; ++a) out(i, a) -= c[a];
  return out;
}

NBodyState proj_u(const NBodyState& z) { return NBodyState(center_rows(z.x()), z.h()); }

bool is_centered(const NBodyState& z, double tol) {
  if (!(tol > 0.0)) throw ContractError("is_centered requires tol > 0");
  const Tensor c = com(z.x());
  return std::max({std::abs(c[0]), std::abs(c[1]), std::abs(c[2])}) <= tol;
}

std::vector<std::size_t> random_permutation(std::size_t n, RngStream& stream) {
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[stream.below(i)]);
  return perm;
}

}  // namespace symdiff
