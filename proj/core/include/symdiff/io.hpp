#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "symdiff/geometry.hpp"
#include "symdiff/nets.hpp"

namespace symdiff {

/// Synthetic rigid-body dataset. Templates are drawn once from the seed; every sample is a
/// template under a Haar rotation and a uniform permutation, plus isotropic jitter, centred.
struct ToyDatasetSpec {
  std::size_t n_templates = 4;
  std::size_t n_points = 6;
  std::size_t d = 1;
  double jitter = 0.05;
  std::size_t count = 1000;
  std::uint64_t seed = 0;

  void validate() const;
};

std::vector<NBodyState> generate_toy_dataset(const ToyDatasetSpec& spec);

inline constexpr std::uint32_t kFormatVersion = 1;

// "SYMD" | u32 version | u64 entries | per entry: u64 name_len, name, u64 rank, u64 dims[rank], f64 data.
void save_params(const ParamStore& store, const std::filesystem::path& path);
ParamStore load_params(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_params(const ParamStore& store);
ParamStore decode_params(const std::vector<std::uint8_t>& bytes);

// "SYDS" | u32 version | u64 count | u64 N | u64 d | per state: f64 x (N x 3), f64 h (N x d).
void save_dataset(const std::vector<NBodyState>& data, const std::filesystem::path& path);
std::vector<NBodyState> load_dataset(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_dataset(const std::vector<NBodyState>& data);
std::vector<NBodyState> decode_dataset(const std::vector<std::uint8_t>& bytes);

// Scalar metadata stored next to the network parameters as "meta.<key>" entries of shape [1].
using ModelMeta = std::map<std::string, double>;
ParamStore with_meta(const ParamStore& params, const ModelMeta& meta);
// Splits a loaded store into network parameters and metadata.
std::pair<ParamStore, ModelMeta> split_meta(const ParamStore& stored);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace symdiff
