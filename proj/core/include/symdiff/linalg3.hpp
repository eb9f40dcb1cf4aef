#pragma once

#include <array>

#include "symdiff/tensor.hpp"

// Small dense kernels for 3x3 matrices shared by the orthogonal-group code and the tape.
namespace symdiff::linalg3 {

struct QR {
  Tensor q;  // orthogonal
  Tensor r;  // upper triangular, non-negative diagonal
};

// Householder QR followed by the sign correction Q <- Q diag(s), R <- diag(s) R with
// s_k = sign(R_kk) (s_k = +1 when R_kk == 0).
QR householder_qr(const Tensor& m);

// Eigenvalues of a symmetric 3x3 matrix in ascending order (cyclic Jacobi).
std::array<double, 3> symmetric_eigenvalues(const Tensor& s);

// Singular values of a 3x3 matrix in ascending order.
std::array<double, 3> singular_values(const Tensor& m);

// Inverse of an upper-triangular 3x3 matrix with non-zero diagonal.
Tensor upper_triangular_inverse(const Tensor& r);

// Re-orthogonalises the columns of a nearly orthogonal matrix by Gram-Schmidt, keeping the
// orientation of the first column.
Tensor gram_schmidt(const Tensor& m);

// max |Q^T Q - I| elementwise.
double orthogonality_error(const Tensor& q);

}  // namespace symdiff::linalg3
