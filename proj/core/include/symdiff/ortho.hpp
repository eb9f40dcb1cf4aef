#pragma once

#include "symdiff/rng.hpp"
#include "symdiff/tensor.hpp"

namespace symdiff {

struct OrthoResult {
  Tensor q;
  // Set when the input was rank-deficient and the identity was returned instead.
  bool degenerate = false;
};

/// Draws a 3x3 matrix from the Haar measure on O(3): QR-factorise a standard normal matrix
/// and fix the signs so the triangular factor has a positive diagonal. A rank-deficient draw is
/// resampled up to 8 times before NumericError.
Tensor sample_haar(RngStream& stream);

/// Q factor of m with the positive-diagonal sign convention. Exactly left-equivariant:
/// qr_orthogonalize(R m) = R qr_orthogonalize(m) for orthogonal R. Inputs whose smallest
/// singular value is below 1e-8 map to the identity with `degenerate` set.
OrthoResult qr_orthogonalize(const Tensor& m);

// True when the smallest singular value of m is below the degeneracy threshold.
bool is_degenerate_head(const Tensor& m);

}  // namespace symdiff
