#include "symdiff/nets.hpp"

#include <cmath>

#include "symdiff/errors.hpp"

namespace symdiff {

ParamStore::ParamStore(std::vector<std::pair<std::string, Tensor>> entries) {
  for (auto& [name, value] : entries) {
    if (lookup_.contains(name)) throw ContractError("duplicate parameter name: " + name);
    lookup_.emplace(name, names_.size());
    grads_.push_back(Tensor::zeros(value.shape()));
    names_.push_back(std::move(name));
    values_.push_back(std::move(value));
  }
}

bool ParamStore::contains(std::string_view name) const { return lookup_.contains(std::string(name)); }

std::size_t ParamStore::index(std::string_view name) const {
  auto it = lookup_.find(std::string(name));
  if (it == lookup_.end()) throw ContractError("unknown parameter: " + std::string(name));
  return it->second;
}

void ParamStore::zero_grad() {
  for (auto& g : grads_) g = Tensor::zeros(g.shape());
}

std::size_t ParamStore::num_scalars() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

std::vector<double> ParamStore::flat() const {
  std::vector<double> out;
  out.reserve(num_scalars());
  for (const auto& v : values_) out.insert(out.end(), v.data().begin(), v.data().end());
  return out;
}

void ParamStore::set_flat(std::span<const double> flat) {
  if (flat.size() != num_scalars()) throw DimensionError("flat parameter vector has wrong length");
  std::size_t off = 0;
  for (auto& v : values_) {
    for (double& x : v.data()) x = flat[off++];
  }
}

std::vector<double> ParamStore::flat_grad() const {
  std::vector<double> out;
  out.reserve(num_scalars());
  for (const auto& g : grads_) out.insert(out.end(), g.data().begin(), g.data().end());
  return out;
}

void NetConfig::validate() const {
  if (hidden == 0 || depth == 0 || n_basis == 0 || n_emb == 0 || time_dim == 0 || head_hidden == 0) {
    throw ContractError("network sizes must be positive");
  }
  if (n_emb >= hidden) throw ContractError("n_emb must be smaller than hidden width");
  if (time_dim % 2 != 0) throw ContractError("time embedding width must be even");
}

namespace {

Tensor uniform_fan_in(std::size_t rows, std::size_t cols, RngStream& stream) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
  Tensor t = Tensor::zeros({rows, cols});
  for (double& v : t.data()) v = (2.0 * stream.uniform() - 1.0) * bound;
  return t;
}

void add_blocks(std::vector<std::pair<std::string, Tensor>>& e, const std::string& prefix, const NetConfig& cfg, RngStream& s) {
  const std::size_t h = cfg.hidden;
  e.emplace_back(prefix + ".time.W", uniform_fan_in(cfg.time_dim, h, s));
  e.emplace_back(prefix + ".time.b", Tensor::zeros({h}));
  for (std::size_t l = 0; l < cfg.depth; ++l) {
    const std::string b = prefix + ".block" + std::to_string(l);
    e.emplace_back(b + ".W_in", uniform_fan_in(h, h, s));
    e.emplace_back(b + ".W_ctx", uniform_fan_in(h, h, s));
    e.emplace_back(b + ".b", Tensor::zeros({h}));
    e.emplace_back(b + ".W_out", uniform_fan_in(h, h, s));
    e.emplace_back(b + ".b_out", Tensor::zeros({h}));
  }
}

}  // namespace

ParamStore init_params(const NetConfig& cfg, RngStream& stream) {
  cfg.validate();
  const std::size_t in_dim = 3 + cfg.feature_dim;
  std::vector<std::pair<std::string, Tensor>> e;

  Tensor mu = Tensor::zeros({cfg.n_basis});
  for (std::size_t k = 0; k < cfg.n_basis; ++k) mu[k] = 4.0 * static_cast<double>(k) / static_cast<double>(cfg.n_basis);
  e.emplace_back("emb.mu", std::move(mu));
  e.emplace_back("emb.sigma", Tensor::filled({cfg.n_basis}, 0.5));
  e.emplace_back("emb.W_D", uniform_fan_in(cfg.n_basis, cfg.n_emb, stream));

  e.emplace_back("eps.W_I", uniform_fan_in(in_dim, cfg.hidden - cfg.n_emb, stream));
  e.emplace_back("eps.b_I", Tensor::zeros({cfg.hidden - cfg.n_emb}));
  add_blocks(e, "eps", cfg, stream);
  e.emplace_back("eps.out.W", Tensor::zeros({cfg.hidden, in_dim}));
  e.emplace_back("eps.out.b", Tensor::zeros({in_dim}));

  e.emplace_back("f.W_G", uniform_fan_in(3 + kRotationNoiseDim + cfg.n_emb, cfg.hidden, stream));
  e.emplace_back("f.b_G", Tensor::zeros({cfg.hidden}));
  add_blocks(e, "f", cfg, stream);
  e.emplace_back("f.head.W1", uniform_fan_in(cfg.hidden, cfg.head_hidden, stream));
  e.emplace_back("f.head.b1", Tensor::zeros({cfg.head_hidden}));
  e.emplace_back("f.head.W2", Tensor::zeros({cfg.head_hidden, 9}));
  e.emplace_back("f.head.b2", Tensor({9}, {1, 0, 0, 0, 1, 0, 0, 0, 1}));
  return ParamStore(std::move(e));
}

void perturb_params(ParamStore& params, double scale, RngStream& stream) {
  for (std::size_t i = 0; i < params.size(); ++i)
    for (double& v : params.value(i).data()) v += scale * stream.normal();
}

Tensor time_embedding(double t, std::size_t dim) {
  const std::size_t half = dim / 2;
  Tensor out = Tensor::zeros({1, dim});
  for (std::size_t k = 0; k < half; ++k) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(k) / static_cast<double>(half));
    const double arg = 1000.0 * t * freq;
    out[k] = std::cos(arg);
    out[half + k] = std::sin(arg);
  }
  return out;
}

NetGraph::NetGraph(ad::Tape& tape, const ParamStore& params, const NetConfig& cfg) : tape_(&tape), params_(&params), cfg_(cfg) {
  cfg_.validate();
  leaves_.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) leaves_.push_back(tape.recording() ? tape.leaf(params.value(i)) : tape.constant(params.value(i)));
}

ad::Var NetGraph::param(std::string_view name) const { return leaves_[params_->index(name)]; }

ad::Var NetGraph::activate(ad::Var v) const { return cfg_.activation == Activation::silu ? ad::silu(v) : ad::gelu(v); }

ad::Var NetGraph::embeddings(ad::Var x) {
  ad::Var dist = ad::pairwise_distances(x);
  ad::Var basis = ad::gaussian_basis(dist, param("emb.mu"), param("emb.sigma"));
  return ad::matmul(basis, param("emb.W_D"));
}

ad::Var NetGraph::time_features(const std::string& prefix, double t) {
  ad::Var emb = tape_->constant(time_embedding(t, cfg_.time_dim));
  return ad::silu(ad::add_row(ad::matmul(emb, param(prefix + ".time.W")), param(prefix + ".time.b")));
}

ad::Var NetGraph::blocks(const std::string& prefix, ad::Var h, ad::Var temb) {
  const std::size_t n = h.value().rows();
  for (std::size_t l = 0; l < cfg_.depth; ++l) {
    const std::string b = prefix + ".block" + std::to_string(l);
    ad::Var ctx = ad::add(ad::matmul(ad::mean_rows(h), param(b + ".W_ctx")), temb);
    ad::Var pre = ad::add(ad::matmul(h, param(b + ".W_in")), ad::broadcast_rows(ad::add_row(ctx, param(b + ".b")), n));
    ad::Var u = ad::add_row(ad::matmul(activate(pre), param(b + ".W_out")), param(b + ".b_out"));
    h = ad::add(h, u);
  }
  return h;
}

ad::Var NetGraph::eps(ad::Var z, double t) {
  const Tensor& zv = z.value();
  if (zv.rank() != 2 || zv.cols() != 3 + cfg_.feature_dim) {
    throw ContractError("eps network expects N x " + std::to_string(3 + cfg_.feature_dim) + " input, got " + shape_string(zv.shape()));
  }
  ad::Var psi = embeddings(ad::slice_cols(z, 0, 3));
  ad::Var inp = ad::add_row(ad::matmul(z, param("eps.W_I")), param("eps.b_I"));
  ad::Var h = ad::concat_cols({inp, psi});
  h = blocks("eps", h, time_features("eps", t));
  ad::Var out = ad::add_row(ad::matmul(h, param("eps.out.W")), param("eps.out.b"));
  return ad::center_points(out);
}

NetGraph::Rotation NetGraph::rotation(ad::Var z, ad::Var eta, double t) {
  const Tensor& zv = z.value();
  if (zv.rank() != 2 || zv.cols() != 3 + cfg_.feature_dim) throw ContractError("rotation network input has wrong shape");
  if (eta.value().rank() != 2 || eta.value().rows() != zv.rows() || eta.value().cols() != kRotationNoiseDim) {
    throw ContractError("rotation noise must be N x 3");
  }
  ad::Var x = ad::slice_cols(z, 0, 3);
  ad::Var psi = embeddings(x);
  ad::Var h = ad::add_row(ad::matmul(ad::concat_cols({x, eta, psi}), param("f.W_G")), param("f.b_G"));
  h = blocks("f", h, time_features("f", t));
  ad::Var pooled = ad::mean_rows(h);
  ad::Var hidden = ad::gelu(ad::add_row(ad::matmul(pooled, param("f.head.W1")), param("f.head.b1")));
  ad::Var head = ad::reshape(ad::add_row(ad::matmul(hidden, param("f.head.W2")), param("f.head.b2")), {3, 3});
  if (is_degenerate_head(head.value())) return {tape_->constant(Tensor::identity(3)), true};
  return {ad::qr_q(head), false};
}

std::vector<Tensor> NetGraph::gradients() const {
  std::vector<Tensor> out;
  out.reserve(leaves_.size());
  for (const auto& v : leaves_) out.push_back(tape_->grad(v));
  return out;
}

Tensor gaussian_embeddings(const ParamStore& params, const NetConfig& cfg, const Tensor& x) {
  ad::Tape tape(false);
  NetGraph g(tape, params, cfg);
  return g.embeddings(tape.constant(x)).value();
}

NBodyState eps_forward(const ParamStore& params, const NetConfig& cfg, const NBodyState& z, double t) {
  if (!is_centered(z, 1e-9)) throw ContractError("eps_forward input must be centred");
  ad::Tape tape(false);
  NetGraph g(tape, params, cfg);
  return NBodyState::unpack(g.eps(tape.constant(z.pack()), t).value());
}

OrthoResult f_forward(const ParamStore& params, const NetConfig& cfg, const NBodyState& z, const Tensor& eta, double t) {
  if (!is_centered(z, 1e-9)) throw ContractError("f_forward input must be centred");
  ad::Tape tape(false);
  NetGraph g(tape, params, cfg);
  auto r = g.rotation(tape.constant(z.pack()), tape.constant(eta), t);
  return {r.rot.value(), r.degenerate};
}

}  // namespace symdiff
