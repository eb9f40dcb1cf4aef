#include "symdiff/autodiff.hpp"

#include <cmath>
#include <numbers>

#include "symdiff/errors.hpp"
#include "symdiff/linalg3.hpp"

namespace symdiff::ad {

const Tensor& Var::value() const { return tape_->value(id_); }

Var Tape::leaf(Tensor value) {
  nodes_.push_back(Node{std::move(value), Tensor(), false, record_, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), Tensor(), false, false, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::push(Tensor value, std::span<const Var> parents, BackwardFn fn) {
  bool needs = false;
  if (record_) {
    for (const Var& p : parents) needs = needs || nodes_[p.id()].needs_grad;
  }
  nodes_.push_back(Node{std::move(value), Tensor(), false, needs, needs ? std::move(fn) : nullptr});
  return Var(this, nodes_.size() - 1);
}

void Tape::accumulate(std::size_t id, const Tensor& g) {
  Node& n = nodes_[id];
  if (!n.needs_grad) return;
  if (!n.has_grad) {
    n.grad = g;
    n.has_grad = true;
  } else {
    n.grad += g;
  }
}

Tensor& Tape::grad_slot(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = Tensor::zeros(n.value.shape());
    n.has_grad = true;
  }
  return n.grad;
}

void Tape::backward(Var root) {
  if (root.value().size() != 1) {
    throw ContractError("backward() requires a scalar root, got shape " + shape_string(root.shape()));
  }
  for (Node& n : nodes_) n.has_grad = false;
  if (!nodes_[root.id()].needs_grad) return;
  grad_slot(root.id())[0] = 1.0;
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.has_grad && n.backward) n.backward(*this, n.grad);
  }
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  return n.has_grad ? n.grad : Tensor::zeros(n.value.shape());
}

namespace {

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw DimensionError(std::string(op) + " expects a matrix, got " + shape_string(t.shape()));
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + " shape mismatch: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
}

// a * b^T
Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
  Tensor out = Tensor::zeros({n, m});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a(i, p) * b(j, p);
      out(i, j) = s;
    }
  return out;
}

// a^T * b
Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  const std::size_t k = a.rows(), n = a.cols(), m = b.cols();
  Tensor out = Tensor::zeros({n, m});
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t i = 0; i < n; ++i) {
      const double av = a(p, i);
      if (av == 0.0) continue;
      for (std::size_t j = 0; j < m; ++j) out(i, j) += av * b(p, j);
    }
  return out;
}

Tensor column_sums(const Tensor& g) {
  const std::size_t n = g.rows(), k = g.cols();
  Tensor out = Tensor::zeros({1, k});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) out[j] += g(i, j);
  return out;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

constexpr double kInvSqrt2Pi = 0.3989422804014327;
constexpr double kSigmaFloor = 1e-3;

}  // namespace

Var matmul(Var a, Var b) {
  Tape& tape = a.tape();
  const std::size_t ia = a.id(), ib = b.id();
  return tape.push(symdiff::matmul(a.value(), b.value()), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    if (t.needs_grad(ia)) t.accumulate(ia, matmul_nt(g, t.value(ib)));
    if (t.needs_grad(ib)) t.accumulate(ib, matmul_tn(t.value(ia), g));
  });
}

Var add(Var a, Var b) {
  require_same(a.value(), b.value(), "add");
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().push(a.value() + b.value(), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, g);
  });
}

Var sub(Var a, Var b) {
  require_same(a.value(), b.value(), "sub");
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().push(a.value() - b.value(), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    t.accumulate(ia, g);
    if (t.needs_grad(ib)) t.accumulate(ib, g * -1.0);
  });
}

Var mul(Var a, Var b) {
  require_same(a.value(), b.value(), "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().push(std::move(out), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    if (t.needs_grad(ia)) {
      Tensor ga = g;
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= t.value(ib)[i];
      t.accumulate(ia, ga);
    }
    if (t.needs_grad(ib)) {
      Tensor gb = g;
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] *= t.value(ia)[i];
      t.accumulate(ib, gb);
    }
  });
}

Var scale(Var a, double s) {
  const std::size_t ia = a.id();
  return a.tape().push(a.value() * s, {a}, [ia, s](Tape& t, const Tensor& g) { t.accumulate(ia, g * s); });
}

Var add_scalar(Var a, double s) {
  Tensor out = a.value();
  for (double& v : out.data()) v += s;
  const std::size_t ia = a.id();
  return a.tape().push(std::move(out), {a}, [ia](Tape& t, const Tensor& g) { t.accumulate(ia, g); });
}

Var add_row(Var a, Var bias) {
  require_matrix(a.value(), "add_row");
  const std::size_t n = a.value().rows(), k = a.value().cols();
  if (bias.value().size() != k) {
    throw DimensionError("add_row bias " + shape_string(bias.shape()) + " does not match " + shape_string(a.shape()));
  }
  Tensor out = a.value();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) out(i, j) += bias.value()[j];
  const std::size_t ia = a.id(), ib = bias.id();
  return a.tape().push(std::move(out), {a, bias}, [ia, ib](Tape& t, const Tensor& g) {
    t.accumulate(ia, g);
    if (t.needs_grad(ib)) t.accumulate(ib, column_sums(g).reshaped(t.value(ib).shape()));
  });
}

Var silu(Var a) {
  Tensor out = a.value();
  for (double& v : out.data()) v = v * sigmoid(v);
  const std::size_t ia = a.id();
  return a.tape().push(std::move(out), {a}, [ia](Tape& t, const Tensor& g) {
    Tensor ga = g;
    const Tensor& x = t.value(ia);
    for (std::size_t i = 0; i < ga.size(); ++i) {
      const double s = sigmoid(x[i]);
      ga[i] *= s * (1.0 + x[i] * (1.0 - s));
    }
    t.accumulate(ia, ga);
  });
}

Var gelu(Var a) {
  Tensor out = a.value();
  for (double& v : out.data()) v = v * 0.5 * std::erfc(-v / std::numbers::sqrt2);
  const std::size_t ia = a.id();
  return a.tape().push(std::move(out), {a}, [ia](Tape& t, const Tensor& g) {
    Tensor ga = g;
    const Tensor& x = t.value(ia);
    for (std::size_t i = 0; i < ga.size(); ++i) {
      const double cdf = 0.5 * std::erfc(-x[i] / std::numbers::sqrt2);
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x[i] * x[i]);
      ga[i] *= cdf + x[i] * pdf;
    }
    t.accumulate(ia, ga);
  });
}

Var mean_rows(Var a) {
  require_matrix(a.value(), "mean_rows");
  const std::size_t n = a.value().rows();
  Tensor out = column_sums(a.value()) * (1.0 / static_cast<double>(n));
  const std::size_t ia = a.id();
  return a.tape().push(std::move(out), {a}, [ia, n](Tape& t, const Tensor& g) {
    Tensor& slot = t.grad_slot(ia);
    const std::size_t k = slot.cols();
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < k; ++j) slot(i, j) += g[j] * inv;
  });
}

Var broadcast_rows(Var row, std::size_t n) {
  const std::size_t k = row.value().size();
  Tensor out = Tensor::zeros({n, k});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) out(i, j) = row.value()[j];
  const std::size_t ir = row.id();
  return row.tape().push(std::move(out), {row}, [ir](Tape& t, const Tensor& g) {
    t.accumulate(ir, column_sums(g).reshaped(t.value(ir).shape()));
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols of nothing");
  Tape& tape = parts.front().tape();
  const std::size_t n = parts.front().value().rows();
  std::size_t total = 0;
  for (const Var& p : parts) {
    require_matrix(p.value(), "concat_cols");
    if (p.value().rows() != n) throw DimensionError("concat_cols row mismatch");
    total += p.value().cols();
  }
  Tensor out = Tensor::zeros({n, total});
  std::vector<std::size_t> ids, offsets;
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < v.cols(); ++j) out(i, off + j) = v(i, j);
    ids.push_back(p.id());
    offsets.push_back(off);
    off += v.cols();
  }
  return tape.push(std::move(out), std::span<const Var>(parts), [ids, offsets, n](Tape& t, const Tensor& g) {
    for (std::size_t q = 0; q < ids.size(); ++q) {
      if (!t.needs_grad(ids[q])) continue;
      Tensor& slot = t.grad_slot(ids[q]);
      const std::size_t k = slot.cols();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j) slot(i, j) += g(i, offsets[q] + j);
    }
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  require_matrix(a.value(), "slice_cols");
  const Tensor& v = a.value();
  if (begin > end || end > v.cols()) throw DimensionError("slice_cols range out of bounds");
  const std::size_t n = v.rows(), k = end - begin;
  Tensor out = Tensor::zeros({n, k});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) out(i, j) = v(i, begin + j);
  const std::size_t ia = a.id();
  return a.tape().push(std::move(out), {a}, [ia, begin, n, k](Tape& t, const Tensor& g) {
    Tensor& slot = t.grad_slot(ia);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < k; ++j) slot(i, begin + j) += g(i, j);
  });
}

Var transpose(Var a) {
  require_matrix(a.value(), "transpose");
  const std::size_t ia = a.id();
  return a.tape().push(a.value().transposed(), {a}, [ia](Tape& t, const Tensor& g) { t.accumulate(ia, g.transposed()); });
}

Var reshape(Var a, Shape shape) {
  const std::size_t ia = a.id();
  return a.tape().push(a.value().reshaped(std::move(shape)), {a}, [ia](Tape& t, const Tensor& g) {
    t.accumulate(ia, g.reshaped(t.value(ia).shape()));
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const std::size_t ia = a.id();
  return a.tape().push(Tensor::scalar(s), {a}, [ia](Tape& t, const Tensor& g) {
    t.accumulate(ia, Tensor::filled(t.value(ia).shape(), g[0]));
  });
}

Var sum_squares(Var a) {
  const std::size_t ia = a.id();
  return a.tape().push(Tensor::scalar(squared_norm(a.value())), {a}, [ia](Tape& t, const Tensor& g) {
    t.accumulate(ia, t.value(ia) * (2.0 * g[0]));
  });
}

Var pairwise_distances(Var x) {
  require_matrix(x.value(), "pairwise_distances");
  const Tensor& v = x.value();
  const std::size_t n = v.rows(), c = v.cols();
  Tensor out = Tensor::zeros({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t a = 0; a < c; ++a) {
        const double d = v(i, a) - v(j, a);
        s += d * d;
      }
      out(i, j) = out(j, i) = std::sqrt(s);
    }
  const std::size_t ix = x.id();
  const std::size_t id_out = x.tape().size();
  return x.tape().push(std::move(out), {x}, [ix, id_out, n, c](Tape& t, const Tensor& g) {
    const Tensor& pos = t.value(ix);
    const Tensor& dist = t.value(id_out);
    Tensor& slot = t.grad_slot(ix);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        const double r = dist(i, j);
        if (r == 0.0) continue;
        const double w = (g(i, j) + g(j, i)) / r;
        for (std::size_t a = 0; a < c; ++a) {
          const double d = (pos(i, a) - pos(j, a)) * w;
          slot(i, a) += d;
          slot(j, a) -= d;
        }
      }
  });
}

Var gaussian_basis(Var dist, Var mu, Var sigma) {
  require_matrix(dist.value(), "gaussian_basis");
  const std::size_t n = dist.value().rows();
  const std::size_t k = mu.value().size();
  if (sigma.value().size() != k) throw DimensionError("gaussian_basis: mu and sigma sizes differ");
  Tensor out = Tensor::zeros({n, k});
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t q = 0; q < k; ++q) {
    const double s = std::max(std::abs(sigma.value()[q]), kSigmaFloor);
    const double m = mu.value()[q];
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double u = (dist.value()(i, j) - m) / s;
        acc += -kInvSqrt2Pi / s * std::exp(-0.5 * u * u);
      }
      out(i, q) = acc * inv_n;
    }
  }
  const std::size_t id = dist.id(), im = mu.id(), is = sigma.id();
  return dist.tape().push(std::move(out), {dist, mu, sigma}, [id, im, is, n, k, inv_n](Tape& t, const Tensor& g) {
    const Tensor& dv = t.value(id);
    const Tensor& mv = t.value(im);
    const Tensor& sv = t.value(is);
    Tensor gd = Tensor::zeros({n, n});
    Tensor gm = Tensor::zeros(mv.shape());
    Tensor gs = Tensor::zeros(sv.shape());
    for (std::size_t q = 0; q < k; ++q) {
      const double raw = sv[q];
      const double s = std::max(std::abs(raw), kSigmaFloor);
      const double ds_draw = std::abs(raw) > kSigmaFloor ? (raw > 0.0 ? 1.0 : -1.0) : 0.0;
      const double m = mv[q];
      for (std::size_t i = 0; i < n; ++i) {
        const double gi = g(i, q) * inv_n;
        for (std::size_t j = 0; j < n; ++j) {
          const double u = (dv(i, j) - m) / s;
          const double e = std::exp(-0.5 * u * u);
          const double dpsi_dd = kInvSqrt2Pi * e * u / (s * s);
          const double dpsi_ds = kInvSqrt2Pi * e * (1.0 - u * u) / (s * s);
          gd(i, j) += gi * dpsi_dd;
          gm[q] -= gi * dpsi_dd;
          gs[q] += gi * dpsi_ds * ds_draw;
        }
      }
    }
    t.accumulate(id, gd);
    t.accumulate(im, gm);
    t.accumulate(is, gs);
  });
}

Var qr_q(Var m) {
  auto qr = linalg3::householder_qr(m.value());
  const std::size_t im = m.id();
  Tensor r = std::move(qr.r);
  Tensor q = qr.q;
  return m.tape().push(std::move(qr.q), {m}, [im, q, r](Tape& t, const Tensor& gq) {
    // A = QR, gR = 0: gA = (gQ + Q copyltu(M)) R^{-T}, M = -gQ^T Q.
    Tensor mm = matmul_tn(gq, q) * -1.0;
    Tensor sym = Tensor::zeros({3, 3});
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) sym(i, j) = (i >= j) ? mm(i, j) : mm(j, i);
    Tensor inner = gq + symdiff::matmul(q, sym);
    const Tensor rinv = linalg3::upper_triangular_inverse(r);
    t.accumulate(im, matmul_nt(inner, rinv));
  });
}

Var rotate_points(Var z, Var rot) {
  require_matrix(z.value(), "rotate_points");
  const Tensor& zv = z.value();
  const Tensor& rv = rot.value();
  if (zv.cols() < 3 || rv.shape() != Shape{3, 3}) throw DimensionError("rotate_points expects n x (3+d) and 3x3");
  const std::size_t n = zv.rows();
  Tensor out = zv;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < 3; ++a) {
      double s = 0.0;
      for (std::size_t b = 0; b < 3; ++b) s += rv(a, b) * zv(i, b);
      out(i, a) = s;
    }
  const std::size_t iz = z.id(), ir = rot.id();
  return z.tape().push(std::move(out), {z, rot}, [iz, ir, n](Tape& t, const Tensor& g) {
    const Tensor& r = t.value(ir);
    if (t.needs_grad(iz)) {
      Tensor gz = g;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t b = 0; b < 3; ++b) {
          double s = 0.0;
          for (std::size_t a = 0; a < 3; ++a) s += g(i, a) * r(a, b);
          gz(i, b) = s;
        }
      t.accumulate(iz, gz);
    }
    if (t.needs_grad(ir)) {
      const Tensor& zv = t.value(iz);
      Tensor gr = Tensor::zeros({3, 3});
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t a = 0; a < 3; ++a)
          for (std::size_t b = 0; b < 3; ++b) gr(a, b) += g(i, a) * zv(i, b);
      t.accumulate(ir, gr);
    }
  });
}

Var center_points(Var z) {
  require_matrix(z.value(), "center_points");
  const std::size_t n = z.value().rows();
  if (z.value().cols() < 3) throw DimensionError("center_points expects at least 3 columns");
  auto centered = [n](const Tensor& v) {
    Tensor out = v;
    for (std::size_t a = 0; a < 3; ++a) {
      double m = 0.0;
      for (std::size_t i = 0; i < n; ++i) m += v(i, a);
      m /= static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) out(i, a) -= m;
    }
    return out;
  };
  const std::size_t iz = z.id();
  return z.tape().push(centered(z.value()), {z}, [iz, centered](Tape& t, const Tensor& g) { t.accumulate(iz, centered(g)); });
}

}  // namespace symdiff::ad
