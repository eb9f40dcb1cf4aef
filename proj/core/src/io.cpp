#include "symdiff/io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "symdiff/errors.hpp"
#include "symdiff/ortho.hpp"
#include "symdiff/parallel.hpp"

namespace symdiff {

void ToyDatasetSpec::validate() const {
  if (count < 1) throw ContractError("dataset count must be >= 1");
  if (n_templates < 1) throw ContractError("need at least one template");
  if (n_points < 2) throw ContractError("need at least 2 points per body");
  if (!(jitter >= 0.0) || !std::isfinite(jitter)) throw ContractError("jitter must be finite and >= 0");
}

std::vector<NBodyState> generate_toy_dataset(const ToyDatasetSpec& spec) {
  spec.validate();
  const RngStream root(spec.seed, 0x746f79);
  RngStream ts = root.split(0);
  std::vector<NBodyState> templates;
  for (std::size_t k = 0; k < spec.n_templates; ++k) {
    Tensor x = center_rows(randn(ts, {spec.n_points, 3}));
    Tensor h = randn(ts, {spec.n_points, spec.d});
    templates.emplace_back(std::move(x), std::move(h));
  }
  std::vector<NBodyState> out(spec.count);
  parallel_for(spec.count, [&](std::size_t i) {
    RngStream s = root.split(1 + i);
    const auto& tpl = templates[s.below(spec.n_templates)];
    const Tensor rot = sample_haar(s);
    const auto perm = random_permutation(spec.n_points, s);
    NBodyState z = act(GroupElement(perm, rot), tpl);
    if (spec.jitter > 0.0) {
      z.x() += randn(s, {spec.n_points, 3}) * spec.jitter;
      z.h() += randn(s, {spec.n_points, spec.d}) * spec.jitter;
    }
    out[i] = proj_u(z);
  });
  return out;
}

namespace {

constexpr char kParamMagic[4] = {'S', 'Y', 'M', 'D'};
constexpr char kDataMagic[4] = {'S', 'Y', 'D', 'S'};
constexpr std::uint64_t kMaxName = 4096;
constexpr std::uint64_t kMaxRank = 8;

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& buf) : buf_(buf) {}

  std::uint64_t offset() const { return pos_; }
  std::uint64_t remaining() const { return buf_.size() - pos_; }

  void need(std::uint64_t n, const char* what) const {
    if (remaining() < n) throw FormatError(std::string("truncated file while reading ") + what, pos_);
  }
  void magic(const char (&m)[4]) {
    need(4, "magic");
    if (std::memcmp(buf_.data() + pos_, m, 4) != 0) throw FormatError("bad magic, expected \"" + std::string(m, 4) + "\"", pos_);
    pos_ += 4;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64(const char* what) {
    const std::uint64_t at = pos_;
    const double v = std::bit_cast<double>(u64(what));
    if (!std::isfinite(v)) throw FormatError(std::string("non-finite value in ") + what, at);
    return v;
  }
  std::string str(std::uint64_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void version() {
    const std::uint64_t at = pos_;
    const std::uint32_t v = u32("version");
    if (v != kFormatVersion) {
      throw FormatError("unsupported format version " + std::to_string(v) + " (this build reads version " + std::to_string(kFormatVersion) + ")", at);
    }
  }
  void finish() const {
    if (remaining() != 0) throw FormatError("unexpected trailing bytes", pos_);
  }

 private:
  const std::vector<std::uint8_t>& buf_;
  std::uint64_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::vector<std::uint8_t> encode_params(const ParamStore& store) {
  Writer w;
  w.bytes(kParamMagic, 4);
  w.u32(kFormatVersion);
  w.u64(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) {
    const std::string& name = store.names()[i];
    const Tensor& t = store.value(i);
    w.u64(name.size());
    w.bytes(name.data(), name.size());
    w.u64(t.rank());
    for (std::size_t d : t.shape()) w.u64(d);
    for (double v : t.data()) w.f64(v);
  }
  return w.take();
}

ParamStore decode_params(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  r.magic(kParamMagic);
  r.version();
  const std::uint64_t count = r.u64("entry count");
  // Every entry takes at least 16 bytes, which bounds a corrupted count.
  if (count > r.remaining() / 16) throw FormatError("entry count " + std::to_string(count) + " exceeds file size", r.offset() - 8);
  std::vector<std::pair<std::string, Tensor>> entries;
  for (std::uint64_t e = 0; e < count; ++e) {
    const std::uint64_t at = r.offset();
    const std::uint64_t len = r.u64("name length");
    if (len == 0 || len > kMaxName) throw FormatError("invalid name length " + std::to_string(len), at);
    std::string name = r.str(len, "name");
    const std::uint64_t rank_at = r.offset();
    const std::uint64_t rank = r.u64("rank");
    if (rank > kMaxRank) throw FormatError("invalid rank " + std::to_string(rank), rank_at);
    Shape shape;
    std::uint64_t size = 1;
    for (std::uint64_t k = 0; k < rank; ++k) {
      const std::uint64_t dim_at = r.offset();
      const std::uint64_t dim = r.u64("dimension");
      if (dim != 0 && size > r.remaining() / 8 / dim) throw FormatError("tensor size exceeds file size", dim_at);
      size *= dim;
      shape.push_back(static_cast<std::size_t>(dim));
    }
    r.need(size * 8, "tensor payload");
    std::vector<double> data(size);
    for (auto& v : data) v = r.f64("tensor payload");
    for (const auto& [n, _] : entries)
      if (n == name) throw FormatError("duplicate entry " + name, at);
    entries.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  r.finish();
  return ParamStore(std::move(entries));
}

void save_params(const ParamStore& store, const std::filesystem::path& path) { write_file(path, encode_params(store)); }
ParamStore load_params(const std::filesystem::path& path) { return decode_params(read_file(path)); }

std::vector<std::uint8_t> encode_dataset(const std::vector<NBodyState>& data) {
  if (data.empty()) throw ContractError("cannot save an empty dataset");
  const std::size_t n = data.front().n(), d = data.front().d();
  for (const auto& z : data)
    if (z.n() != n || z.d() != d) throw DimensionError("dataset states must share N and d");
  Writer w;
  w.bytes(kDataMagic, 4);
  w.u32(kFormatVersion);
  w.u64(data.size());
  w.u64(n);
  w.u64(d);
  for (const auto& z : data) {
    for (double v : z.x().data()) w.f64(v);
    for (double v : z.h().data()) w.f64(v);
  }
  return w.take();
}

std::vector<NBodyState> decode_dataset(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  r.magic(kDataMagic);
  r.version();
  const std::uint64_t count_at = r.offset();
  const std::uint64_t count = r.u64("count");
  const std::uint64_t n = r.u64("N");
  const std::uint64_t d = r.u64("d");
  if (count == 0) throw FormatError("empty dataset", count_at);
  if (n == 0) throw FormatError("dataset has N = 0", count_at + 8);
  if (n > (1ull << 32) || d > (1ull << 20)) throw FormatError("implausible dataset dimensions", count_at + 8);
  const std::uint64_t record = 8 * n * (3 + d);
  const std::uint64_t held = r.remaining() / record;
  if (held != count || r.remaining() % record != 0) {
    if (r.remaining() % record == 0) {
      throw FormatError("count mismatch: header says " + std::to_string(count) + " states, payload holds " + std::to_string(held), count_at);
    }
    throw FormatError("payload is not a whole number of states (truncated or padded)", r.offset() + held * record);
  }
  std::vector<NBodyState> out;
  out.reserve(count);
  for (std::uint64_t s = 0; s < count; ++s) {
    std::vector<double> x(n * 3), h(n * d);
    for (auto& v : x) v = r.f64("positions");
    for (auto& v : h) v = r.f64("features");
    out.emplace_back(Tensor({n, 3}, std::move(x)), Tensor({n, d}, std::move(h)));
  }
  return out;
}

void save_dataset(const std::vector<NBodyState>& data, const std::filesystem::path& path) { write_file(path, encode_dataset(data)); }
std::vector<NBodyState> load_dataset(const std::filesystem::path& path) { return decode_dataset(read_file(path)); }

ParamStore with_meta(const ParamStore& params, const ModelMeta& meta) {
  std::vector<std::pair<std::string, Tensor>> e;
  for (std::size_t i = 0; i < params.size(); ++i) e.emplace_back(params.names()[i], params.value(i));
  for (const auto& [k, v] : meta) e.emplace_back("meta." + k, Tensor({1}, {v}));
  return ParamStore(std::move(e));
}

std::pair<ParamStore, ModelMeta> split_meta(const ParamStore& stored) {
  std::vector<std::pair<std::string, Tensor>> e;
  ModelMeta meta;
  for (std::size_t i = 0; i < stored.size(); ++i) {
    const std::string& name = stored.names()[i];
    if (name.starts_with("meta.")) {
      if (stored.value(i).size() != 1) throw ContractError("metadata entry " + name + " must hold one value");
      meta[name.substr(5)] = stored.value(i)[0];
    } else {
      e.emplace_back(name, stored.value(i));
    }
  }
  return {ParamStore(std::move(e)), meta};
}

}  // namespace symdiff
