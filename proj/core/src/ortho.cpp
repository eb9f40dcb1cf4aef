#include "symdiff/ortho.hpp"

#include "symdiff/errors.hpp"
#include "symdiff/linalg3.hpp"

namespace symdiff {

namespace {
constexpr double kRankTol = 1e-8;
constexpr int kHaarAttempts = 8;
constexpr double kOrthoTol = 1e-10;

Tensor finish(Tensor q) {
  if (linalg3::orthogonality_error(q) > kOrthoTol) q = linalg3::gram_schmidt(q);
  return q;
}
}  // namespace

bool is_degenerate_head(const Tensor& m) { return linalg3::singular_values(m)[0] < kRankTol; }

Tensor sample_haar(RngStream& stream) {
  for (int attempt = 0; attempt < kHaarAttempts; ++attempt) {
    Tensor g = randn(stream, {3, 3});
    if (is_degenerate_head(g)) continue;
    return finish(linalg3::householder_qr(g).q);
  }
  throw NumericError("sample_haar: 8 consecutive rank-deficient Gaussian draws");
}

OrthoResult qr_orthogonalize(const Tensor& m) {
  if (m.shape() != Shape{3, 3}) throw DimensionError("qr_orthogonalize expects a 3x3 matrix");
  if (is_degenerate_head(m)) return {Tensor::identity(3), true};
  return {finish(linalg3::householder_qr(m).q), false};
}

}  // namespace symdiff
