#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

#include "symdiff/tensor.hpp"

namespace symdiff::ad {

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Define-by-run reverse-mode tape.
///
/// Nodes are appended in evaluation order, so reverse insertion order is a reverse topological
/// order and backward() visits each node exactly once. A tape built with record=false only
/// evaluates values and keeps no local Jacobians.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value);
  Var constant(Tensor value);

  // Records an op result. `fn` is dropped when no parent needs a gradient.
  Var push(Tensor value, std::span<const Var> parents, BackwardFn fn);
  Var push(Tensor value, std::initializer_list<Var> parents, BackwardFn fn) {
    return push(std::move(value), std::span<const Var>(parents.begin(), parents.size()), std::move(fn));
  }

  // Seeds d(root)/d(root) = 1 and propagates. Root must hold a single element.
  void backward(Var root);

  // Gradient of the last backward() root with respect to v; zeros if v was unreachable.
  Tensor grad(Var v) const;

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  void accumulate(std::size_t id, const Tensor& g);
  // Gradient buffer of a node, zero-initialised on first access.
  Tensor& grad_slot(std::size_t id);

  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool needs_grad = false;
    BackwardFn backward;
  };

  bool record_;
  std::vector<Node> nodes_;
};

// ---- primitives -------------------------------------------------------------

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
// a: n x k, bias: k-vector (rank 1) or 1 x k; adds bias to every row.
Var add_row(Var a, Var bias);
Var silu(Var a);
Var gelu(Var a);
// Column means of an n x k matrix, shape 1 x k.
Var mean_rows(Var a);
// Repeats a 1 x k row n times.
Var broadcast_rows(Var row, std::size_t n);
Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
Var transpose(Var a);
Var reshape(Var a, Shape shape);
Var sum(Var a);
Var sum_squares(Var a);

// Euclidean distances between the rows of an n x 3 matrix, n x n. Diagonal is exactly zero.
Var pairwise_distances(Var x);

// Row-mean of Gaussian basis responses: out(i, k) = (1/n) sum_j psi_k(dist(i, j)) with
// psi_k(r) = -exp(-((r - mu_k) / s_k)^2 / 2) / (sqrt(2 pi) s_k) and s_k = max(|sigma_k|, 1e-3).
Var gaussian_basis(Var dist, Var mu, Var sigma);

// Orthogonal factor of the QR decomposition of a 3x3 matrix, normalised so the triangular
// factor has a positive diagonal. Caller must ensure the input is full rank.
Var qr_q(Var m);

// Rotates the first three columns of every row: [x, h] -> [x R^T, h]. z is n x (3 + d).
Var rotate_points(Var z, Var rot);

// Subtracts the column mean from the first three columns (removes the centre of mass).
Var center_points(Var z);

}  // namespace symdiff::ad
