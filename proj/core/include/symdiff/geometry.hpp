#pragma once

#include <cstddef>
#include <vector>

#include "symdiff/rng.hpp"
#include "symdiff/tensor.hpp"

namespace symdiff {

/// State of an N-body system: positions x (N x 3) and per-point features h (N x d), d >= 0.
class NBodyState {
 public:
  NBodyState() = default;
  NBodyState(Tensor x, Tensor h);
  // Positions only (d = 0).
  explicit NBodyState(Tensor x);

  static NBodyState zeros(std::size_t n, std::size_t d);
  // Splits an N x (3 + d) matrix into positions and features.
  static NBodyState unpack(const Tensor& packed);

  const Tensor& x() const noexcept { return x_; }
  const Tensor& h() const noexcept { return h_; }
  Tensor& x() noexcept { return x_; }
  Tensor& h() noexcept { return h_; }
  std::size_t n() const noexcept { return x_.shape()[0]; }
  std::size_t d() const noexcept { return h_.shape()[1]; }

  // N x (3 + d) matrix [x, h].
  Tensor pack() const;
  // Row-major x followed by row-major h.
  std::vector<double> flatten() const;

  NBodyState& operator+=(const NBodyState& other);
  NBodyState& operator*=(double s);

  friend bool operator==(const NBodyState& a, const NBodyState& b) = default;

 private:
  Tensor x_ = Tensor::zeros({1, 3});
  Tensor h_ = Tensor::zeros({1, 0});
};

NBodyState operator+(NBodyState a, const NBodyState& b);
NBodyState operator-(NBodyState a, const NBodyState& b);
NBodyState operator*(double s, NBodyState a);

double squared_norm(const NBodyState& z);
double max_abs_diff(const NBodyState& a, const NBodyState& b);

/// Element (sigma, R) of S_N x O(3).
///
/// Composition is (sigma, R) . (sigma', R') = (sigma o sigma', R R'), where the permutation
/// product is taken so that act(g . g', z) == act(g, act(g', z)); with the row convention of
/// act() this means (sigma o sigma')[i] = sigma'[sigma[i]].
class GroupElement {
 public:
  // Validates that perm is a bijection and rot is orthogonal within 1e-10.
  GroupElement(std::vector<std::size_t> perm, Tensor rot);

  static GroupElement identity(std::size_t n);
  static GroupElement rotation(std::size_t n, Tensor rot);
  static GroupElement permutation(std::vector<std::size_t> perm);

  const std::vector<std::size_t>& perm() const noexcept { return perm_; }
  const Tensor& rot() const noexcept { return rot_; }
  std::size_t size() const noexcept { return perm_.size(); }

  GroupElement operator*(const GroupElement& other) const;
  GroupElement inverse() const;

 private:
  std::vector<std::size_t> perm_;
  Tensor rot_;
};

// Output row i is (R x_{sigma(i)}, h_{sigma(i)}).
NBodyState act(const GroupElement& g, const NBodyState& z);
// Applies x_i -> R x_i to every point, h unchanged.
NBodyState rotate(const Tensor& rot, const NBodyState& z);
// Output row i is row perm[i] of the input.
NBodyState permute(const std::vector<std::size_t>& perm, const NBodyState& z);
Tensor permute_rows(const std::vector<std::size_t>& perm, const Tensor& m);

// Mean of the rows of an N x 3 matrix, shape [3].
Tensor com(const Tensor& x);
// Removes the centre of mass from the positions; h unchanged.
NBodyState proj_u(const NBodyState& z);
Tensor center_rows(const Tensor& x);
bool is_centered(const NBodyState& z, double tol);

// Random permutation of {0..n-1} by Fisher-Yates.
std::vector<std::size_t> random_permutation(std::size_t n, RngStream& stream);

}  // namespace symdiff
