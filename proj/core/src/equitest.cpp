#include "symdiff/equitest.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "symdiff/errors.hpp"
#include "symdiff/parallel.hpp"

namespace symdiff {

SampleSet flatten_all(const std::vector<NBodyState>& states) {
  SampleSet out;
  out.reserve(states.size());
  for (const auto& s : states) out.push_back(s.flatten());
  return out;
}

namespace {

std::size_t check_sets(const SampleSet& a, const SampleSet& b) {
  if (a.size() < 2 || b.size() < 2) throw ContractError("energy distance needs at least 2 samples per side");
  const std::size_t dim = a.front().size();
  for (const auto* set : {&a, &b})
    for (const auto& v : *set)
      if (v.size() != dim) throw ContractError("sample dimension mismatch");
  return dim;
}

double dist(const std::vector<double>& u, const std::vector<double>& v) {
  double s = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    const double d = u[k] - v[k];
    s += d * d;
  }
  return std::sqrt(s);
}

double pair_mean(const SampleSet& u, const SampleSet& v) {
  double s = 0.0;
  for (const auto& p : u)
    for (const auto& q : v) s += dist(p, q);
  return s / (static_cast<double>(u.size()) * static_cast<double>(v.size()));
}

double within_mean(const SampleSet& u) {
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i)
    for (std::size_t j = i + 1; j < u.size(); ++j) s += dist(u[i], u[j]);
  const double m = static_cast<double>(u.size());
  return 2.0 * s / (m * (m - 1.0));
}

std::vector<double> column_mean(const SampleSet& s) {
  std::vector<double> m(s.front().size(), 0.0);
  for (const auto& v : s)
    for (std::size_t k = 0; k < m.size(); ++k) m[k] += v[k];
  for (double& x : m) x /= static_cast<double>(s.size());
  return m;
}

typedef float f4 __attribute__((vector_size(16)));

// Energy statistics for many labelings of the pooled sample at once. Column c of `labels`
// (row stride `stride`) marks the members of the first group under labeling c. Distances are
// recomputed tile by tile, so memory stays linear in the pool size.
std::vector<double> labelled_statistics(const SampleSet& pool, const std::vector<float>& labels, std::size_t cols, std::size_t stride,
                                        std::size_t n_a) {
  const std::size_t n = pool.size();
  const std::size_t dim = pool.front().size();
  // Coordinate-major copy so the distance loop runs over contiguous j.
  std::vector<float> xt(dim * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < dim; ++k) xt[k * n + i] = static_cast<float>(pool[i][k]);

  constexpr std::size_t kRowBlock = 64, kTile = 256, kR = 4, kC = 8;
  const std::size_t blocks = (n + kRowBlock - 1) / kRowBlock;
  // Per block: sum over rows of (D a)_i a_i, sum of (D a)_i, and the plain distance sum.
  std::vector<double> s_aa(blocks * cols, 0.0), s_a(blocks * cols, 0.0), total(blocks, 0.0);

  parallel_for(blocks, [&](std::size_t blk) {
    const std::size_t r0 = blk * kRowBlock, r1 = std::min(n, r0 + kRowBlock);
    std::vector<float> acc(kRowBlock * stride, 0.0f);
    std::vector<float> dtile(kRowBlock * kTile, 0.0f);
    double tot = 0.0;
    for (std::size_t j0 = 0; j0 < n; j0 += kTile) {
      const std::size_t j1 = std::min(n, j0 + kTile), tj = j1 - j0;
      for (std::size_t i = r0; i < r1; ++i) {
        float* drow = &dtile[(i - r0) * kTile];
        std::fill(drow, drow + tj, 0.0f);
        for (std::size_t k = 0; k < dim; ++k) {
          const float xik = xt[k * n + i];
          const float* col = &xt[k * n + j0];
          for (std::size_t j = 0; j < tj; ++j) {
            const float d = xik - col[j];
            drow[j] += d * d;
          }
        }
        float row_sum = 0.0f;
        for (std::size_t j = 0; j < tj; ++j) {
          drow[j] = std::sqrt(drow[j]);
          row_sum += drow[j];
        }
        tot += row_sum;
      }
      for (std::size_t ib = 0; ib < kRowBlock; ib += kR) {
        const float* d0 = &dtile[ib * kTile];
        for (std::size_t c0 = 0; c0 < stride; c0 += kC) {
          f4 a[kR][2] = {};
          for (std::size_t j = 0; j < tj; ++j) {
            f4 l0, l1;
            std::memcpy(&l0, &labels[(j0 + j) * stride + c0], sizeof(f4));
            std::memcpy(&l1, &labels[(j0 + j) * stride + c0 + 4], sizeof(f4));
            for (std::size_t r = 0; r < kR; ++r) {
              const float d = d0[r * kTile + j];
              a[r][0] += d * l0;
              a[r][1] += d * l1;
            }
          }
          for (std::size_t r = 0; r < kR; ++r)
            for (std::size_t c = 0; c < kC; ++c) acc[(ib + r) * stride + c0 + c] += a[r][c / 4][c % 4];
        }
      }
    }
    for (std::size_t i = r0; i < r1; ++i) {
      const float* out = &acc[(i - r0) * stride];
      const float* lab = &labels[i * stride];
      for (std::size_t c = 0; c < cols; ++c) {
        s_aa[blk * cols + c] += static_cast<double>(out[c]) * lab[c];
        s_a[blk * cols + c] += out[c];
      }
    }
    total[blk] = tot;
  });

  double tot = 0.0;
  for (double t : total) tot += t;
  const double na = static_cast<double>(n_a), nb = static_cast<double>(n - n_a);
  std::vector<double> stats(cols);
  for (std::size_t c = 0; c < cols; ++c) {
    double aa = 0.0, a = 0.0;
    for (std::size_t blk = 0; blk < blocks; ++blk) {
      aa += s_aa[blk * cols + c];
      a += s_a[blk * cols + c];
    }
    const double ab = a - aa;
    const double bb = tot - aa - 2.0 * ab;
    stats[c] = 2.0 * ab / (na * nb) - aa / (na * (na - 1.0)) - bb / (nb * (nb - 1.0));
  }
  return stats;
}

}  // namespace

double energy_distance(const SampleSet& a, const SampleSet& b) {
  check_sets(a, b);
  return 2.0 * pair_mean(a, b) - within_mean(a) - within_mean(b);
}

TwoSampleResult perm_two_sample_test(const SampleSet& a, const SampleSet& b, int n_perm, double alpha, RngStream& stream) {
  check_sets(a, b);
  if (n_perm < 200) throw ContractError("perm_two_sample_test needs n_perm >= 200");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ContractError("alpha must be in (0, 1)");
  SampleSet pool = a;
  pool.insert(pool.end(), b.begin(), b.end());
  const std::size_t n = pool.size(), cols = static_cast<std::size_t>(n_perm) + 1;

  // Column 0 is the observed split; the others are uniform relabelings.
  const std::size_t stride = (cols + 7) / 8 * 8;
  std::vector<float> labels(n * stride, 0.0f);
  for (std::size_t i = 0; i < a.size(); ++i) labels[i * stride] = 1.0f;
  for (std::size_t c = 1; c < cols; ++c) {
    const auto perm = random_permutation(n, stream);
    for (std::size_t i = 0; i < a.size(); ++i) labels[perm[i] * stride + c] = 1.0f;
  }
  const auto stats = labelled_statistics(pool, labels, cols, stride, a.size());
  std::size_t exceed = 0;
  for (std::size_t c = 1; c < cols; ++c)
    if (stats[c] >= stats[0]) ++exceed;

  TwoSampleResult r;
  r.statistic = energy_distance(a, b);
  r.p_value = static_cast<double>(1 + exceed) / static_cast<double>(cols);
  r.reject = r.p_value < alpha;
  return r;
}

std::string EquivarianceReport::to_text() const {
  std::ostringstream os;
  os.precision(17);
  auto vec = [&](const std::vector<double>& v) {
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  };
  os << "kind: " << kind << "\n";
  os << "n: " << n << "\n";
  os << "n_perm: " << n_perm << "\n";
  os << "alpha: " << alpha << "\n";
  os << "statistic: " << result.statistic << "\n";
  os << "p_value: " << result.p_value << "\n";
  os << "reject: " << (result.reject ? "true" : "false") << "\n";
  os << "mean_a: ";
  vec(mean_a);
  os << "\nmean_b: ";
  vec(mean_b);
  os << "\n";
  return os.str();
}

namespace {

EquivarianceReport finish(std::string kind, const SampleSet& a, const SampleSet& b, double alpha, int n_perm, RngStream& stream) {
  EquivarianceReport rep;
  rep.kind = std::move(kind);
  rep.n = a.size();
  rep.n_perm = n_perm;
  rep.alpha = alpha;
  rep.result = perm_two_sample_test(a, b, n_perm, alpha, stream);
  rep.mean_a = column_mean(a);
  rep.mean_b = column_mean(b);
  return rep;
}

void require_size(std::size_t n) {
  if (n < 1000) throw ContractError("equivariance tests need n >= 1000 samples per side");
}

}  // namespace

EquivarianceReport test_stochastic_equivariance(const KernelSampler& k, const NBodyState& x, const GroupElement& g, std::size_t n,
                                                double alpha, RngStream& stream, int n_perm) {
  require_size(n);
  const NBodyState gx = act(g, x);
  const RngStream sa = stream.split(1), sb = stream.split(2);
  SampleSet a(n), b(n);
  parallel_for(n, [&](std::size_t i) {
    RngStream s1 = sa.split(i), s2 = sb.split(i);
    a[i] = k.sample(gx, s1).flatten();
    b[i] = act(g, k.sample(x, s2)).flatten();
  });
  RngStream sp = stream.split(3);
  return finish("equivariance", a, b, alpha, n_perm, sp);
}

EquivarianceReport test_distributional_invariance(const std::function<NBodyState(RngStream&)>& sampler, const GroupElement& g,
                                                  std::size_t n, double alpha, RngStream& stream, int n_perm) {
  require_size(n);
  const RngStream sa = stream.split(1), sb = stream.split(2);
  SampleSet a(n), b(n);
  parallel_for(n, [&](std::size_t i) {
    RngStream s1 = sa.split(i), s2 = sb.split(i);
    a[i] = sampler(s1).flatten();
    b[i] = act(g, sampler(s2)).flatten();
  });
  RngStream sp = stream.split(3);
  return finish("invariance", a, b, alpha, n_perm, sp);
}

EquivarianceReport test_distributional_invariance(const std::vector<NBodyState>& pool_a, const std::vector<NBodyState>& pool_b,
                                                  const GroupElement& g, double alpha, RngStream& stream, int n_perm) {
  if (pool_a.size() != pool_b.size()) throw ContractError("invariance pools must have equal size");
  require_size(pool_a.size());
  SampleSet a = flatten_all(pool_a), b(pool_b.size());
  for (std::size_t i = 0; i < pool_b.size(); ++i) b[i] = act(g, pool_b[i]).flatten();
  RngStream sp = stream.split(3);
  return finish("invariance", a, b, alpha, n_perm, sp);
}

}  // namespace symdiff
