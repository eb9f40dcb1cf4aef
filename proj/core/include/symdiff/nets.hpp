#pragma once

#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "symdiff/autodiff.hpp"
#include "symdiff/geometry.hpp"
#include "symdiff/ortho.hpp"
#include "symdiff/rng.hpp"

namespace symdiff {

/// Named parameter tensors with per-tensor gradient slots. The name set is fixed at construction.
class ParamStore {
 public:
  ParamStore() = default;
  explicit ParamStore(std::vector<std::pair<std::string, Tensor>> entries);

  std::size_t size() const noexcept { return names_.size(); }
  const std::vector<std::string>& names() const noexcept { return names_; }
  bool contains(std::string_view name) const;
  std::size_t index(std::string_view name) const;

  const Tensor& value(std::size_t i) const { return values_[i]; }
  Tensor& value(std::size_t i) { return values_[i]; }
  const Tensor& value(std::string_view name) const { return values_[index(name)]; }
  Tensor& value(std::string_view name) { return values_[index(name)]; }
  const Tensor& grad(std::size_t i) const { return grads_[i]; }
  Tensor& grad(std::size_t i) { return grads_[i]; }

  void zero_grad();
  std::size_t num_scalars() const;
  // Concatenation of all values in name order.
  std::vector<double> flat() const;
  void set_flat(std::span<const double> flat);
  std::vector<double> flat_grad() const;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
  std::vector<Tensor> grads_;
  std::unordered_map<std::string, std::size_t> lookup_;
};

enum class Activation { silu, gelu };

/// Sizes for the denoiser and the rotation head. Both share the Gaussian embedding parameters.
struct NetConfig {
  std::size_t feature_dim = 1;  // d
  std::size_t hidden = 32;      // per-point width
  std::size_t depth = 2;        // residual DeepSets blocks per network
  std::size_t n_basis = 16;     // K Gaussian distance kernels
  std::size_t n_emb = 16;       // embedding width; the input projection gets hidden - n_emb
  std::size_t time_dim = 64;    // sinusoidal time embedding width
  std::size_t head_hidden = 16; // hidden width of the rotation head MLP
  Activation activation = Activation::silu;

  void validate() const;
  friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

// Width of the positional noise fed to the rotation head.
inline constexpr std::size_t kRotationNoiseDim = 3;

/// Fresh parameters: fan-in uniform hidden layers, zero final layers. The rotation head bias
/// starts at vec(I) so the head initially outputs the identity.
ParamStore init_params(const NetConfig& cfg, RngStream& stream);
// Gaussian perturbation of every parameter (including zero-initialised ones), for tests.
void perturb_params(ParamStore& params, double scale, RngStream& stream);

// Sinusoidal embedding of t in [0, 1], width `dim`: [cos(1000 t w_k), sin(1000 t w_k)].
Tensor time_embedding(double t, std::size_t dim);

/// Binds a ParamStore onto a tape and evaluates both networks on it.
class NetGraph {
 public:
  NetGraph(ad::Tape& tape, const ParamStore& params, const NetConfig& cfg);

  ad::Tape& tape() const { return *tape_; }
  const NetConfig& config() const { return cfg_; }
  ad::Var param(std::string_view name) const;

  // Psi (N x n_emb) from positions (N x 3).
  ad::Var embeddings(ad::Var x);
  // Noise prediction for packed z (N x (3 + d)); output is centred and S_N-equivariant.
  ad::Var eps(ad::Var z, double t);

  struct Rotation {
    ad::Var rot;
    bool degenerate = false;
  };
  // f(z, eta): S_N-invariant for jointly permuted rows of z and eta; output in O(3).
  Rotation rotation(ad::Var z, ad::Var eta, double t);

  // Parameter gradients after tape.backward(), in ParamStore order.
  std::vector<Tensor> gradients() const;

 private:
  ad::Var activate(ad::Var v) const;
  ad::Var time_features(const std::string& prefix, double t);
  ad::Var blocks(const std::string& prefix, ad::Var h, ad::Var temb);

  ad::Tape* tape_;
  const ParamStore* params_;
  NetConfig cfg_;
  std::vector<ad::Var> leaves_;
};

Tensor gaussian_embeddings(const ParamStore& params, const NetConfig& cfg, const Tensor& x);
NBodyState eps_forward(const ParamStore& params, const NetConfig& cfg, const NBodyState& z, double t);
OrthoResult f_forward(const ParamStore& params, const NetConfig& cfg, const NBodyState& z, const Tensor& eta, double t);

}  // namespace symdiff
