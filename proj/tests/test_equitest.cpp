#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <string>

#include "symdiff/equitest.hpp"
#include "symdiff/errors.hpp"
#include "symdiff/ortho.hpp"
#include "symdiff/schedule.hpp"
#include "test_support.hpp"

using namespace symdiff;
using testing::random_centered;

namespace {

SampleSet gaussian_set(std::size_t n, std::size_t dim, double shift, RngStream& s) {
  SampleSet out(n, std::vector<double>(dim));
  for (auto& row : out)
    for (std::size_t k = 0; k < dim; ++k) row[k] = s.normal() + (k == 0 ? shift : 0.0);
  return out;
}

double dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(s);
}

// Direct O(n^2) evaluation of the U-statistic energy distance.
double brute_energy(const SampleSet& a, const SampleSet& b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (const auto& x : a)
    for (const auto& y : b) ab += dist(x, y);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a.size(); ++j)
      if (i != j) aa += dist(a[i], a[j]);
  for (std::size_t i = 0; i < b.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j)
      if (i != j) bb += dist(b[i], b[j]);
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  return 2.0 * ab / (na * nb) - aa / (na * (na - 1)) - bb / (nb * (nb - 1));
}

struct ThreadsOverride {
  explicit ThreadsOverride(const char* v) { setenv("SYMDIFF_THREADS", v, 1); }
  ~ThreadsOverride() { unsetenv("SYMDIFF_THREADS"); }
};

}  // namespace

TEST_CASE("energy distance examples") {
  const SampleSet a = {{0.0}, {2.0}}, b = {{1.0}, {3.0}};
  CHECK(energy_distance(a, b) == doctest::Approx(-1.0));
  CHECK(energy_distance(a, a) == doctest::Approx(2.0 * 1.0 - 2.0 - 2.0));
  CHECK_THROWS_AS(energy_distance({{0.0}}, b), ContractError);
  CHECK_THROWS_AS(energy_distance(a, {{1.0, 2.0}, {3.0, 4.0}}), ContractError);
}

TEST_CASE("energy distance matches the direct sum") {
  RngStream s(1);
  for (std::size_t dim : {1, 5, 13}) {
    const SampleSet a = gaussian_set(37, dim, 0.0, s), b = gaussian_set(51, dim, 0.3, s);
    CHECK(energy_distance(a, b) == doctest::Approx(brute_energy(a, b)).epsilon(1e-12));
  }
}

TEST_CASE("permutation test reports the observed statistic") {
  RngStream s(2);
  const SampleSet a = gaussian_set(300, 7, 0.0, s), b = gaussian_set(300, 7, 0.0, s);
  RngStream ps(3);
  const TwoSampleResult r = perm_two_sample_test(a, b, 200, 0.05, ps);
  CHECK(r.statistic == doctest::Approx(energy_distance(a, b)).epsilon(1e-12));
  CHECK(r.p_value > 0.0);
  CHECK(r.p_value <= 1.0);
  CHECK(r.reject == (r.p_value <= 0.05));
  RngStream bad(4);
  CHECK_THROWS_AS(perm_two_sample_test(a, b, 199, 0.05, bad), ContractError);
  CHECK_THROWS_AS(perm_two_sample_test(a, b, 200, 0.0, bad), ContractError);
}

TEST_CASE("type I error is calibrated") {
  RngStream s(5);
  const int reps = 300;
  int rejections = 0;
  double mean_p = 0.0;
  for (int r = 0; r < reps; ++r) {
    const SampleSet a = gaussian_set(40, 3, 0.0, s), b = gaussian_set(40, 3, 0.0, s);
    const TwoSampleResult res = perm_two_sample_test(a, b, 200, 0.05, s);
    rejections += res.reject;
    mean_p += res.p_value;
  }
  const double rate = static_cast<double>(rejections) / reps;
  CHECK(rate < 0.05 + 3.0 * std::sqrt(0.05 * 0.95 / reps));
  CHECK(mean_p / reps == doctest::Approx(0.5).epsilon(0.1));
}

TEST_CASE("test has power against a mean shift") {
  RngStream s(6);
  for (int r = 0; r < 10; ++r) {
    const SampleSet a = gaussian_set(300, 6, 0.0, s), b = gaussian_set(300, 6, 0.5, s);
    CHECK(perm_two_sample_test(a, b, 200, 0.01, s).reject);
  }
}

TEST_CASE("p-values stabilise with more permutations") {
  RngStream s(7);
  for (int r = 0; r < 5; ++r) {
    const SampleSet a = gaussian_set(200, 4, 0.0, s), b = gaussian_set(200, 4, 0.12, s);
    RngStream p1 = s.split(2 * r), p2 = s.split(2 * r + 1);
    const double few = perm_two_sample_test(a, b, 200, 0.05, p1).p_value;
    const double many = perm_two_sample_test(a, b, 2000, 0.05, p2).p_value;
    // Binomial standard error of the 200-permutation estimate, with slack.
    CHECK(std::abs(few - many) < 4.0 * std::sqrt(many * (1 - many) / 200) + 0.01);
  }
}

TEST_CASE("permutation test is independent of the worker count") {
  RngStream s(8);
  const SampleSet a = gaussian_set(700, 9, 0.0, s), b = gaussian_set(650, 9, 0.05, s);
  TwoSampleResult one, four;
  {
    ThreadsOverride t("1");
    RngStream ps(9);
    one = perm_two_sample_test(a, b, 200, 0.05, ps);
  }
  {
    ThreadsOverride t("4");
    RngStream ps(9);
    four = perm_two_sample_test(a, b, 200, 0.05, ps);
  }
  CHECK(one.statistic == four.statistic);
  CHECK(one.p_value == four.p_value);
}

TEST_CASE("stochastic equivariance examples") {
  RngStream s(10);
  const NBodyState x = random_centered(3, 1, s);
  const GroupElement g(random_permutation(3, s), sample_haar(s));
  KernelSampler iso;
  iso.sample = [](const NBodyState& z, RngStream& st) { return sample_projected_gaussian(0.5 * z, 0.3, st); };
  const EquivarianceReport ok = test_stochastic_equivariance(iso, x, g, 1000, 0.01, s);
  CHECK_FALSE(ok.result.reject);
  CHECK(ok.kind == "equivariance");
  CHECK(ok.n == 1000);
  CHECK(ok.mean_a.size() == 12);

  KernelSampler broken;
  broken.sample = [](const NBodyState& z, RngStream& st) {
    NBodyState y = sample_projected_gaussian(z, 0.3, st);
    Tensor x = y.x();
    x(0, 0) += 0.5;
    x(1, 0) -= 0.5;
    return NBodyState(x, y.h());
  };
  CHECK(test_stochastic_equivariance(broken, x, g, 1000, 0.01, s).result.reject);
  CHECK_THROWS_AS(test_stochastic_equivariance(iso, x, g, 999, 0.01, s), ContractError);

  const std::string text = ok.to_text();
  for (const char* key : {"kind: equivariance", "n: 1000", "n_perm: 200", "alpha: 0.01", "statistic: ", "p_value: ", "reject: false",
                          "mean_a: ", "mean_b: "})
    CHECK(text.find(key) != std::string::npos);
}

TEST_CASE("distributional invariance examples") {
  RngStream s(11);
  auto isotropic = [](RngStream& st) { return sample_projected_normal(4, 0, st); };
  auto anisotropic = [](RngStream& st) {
    NBodyState z = sample_projected_normal(4, 0, st);
    return NBodyState(matmul(z.x(), Tensor::matrix({{3, 0, 0}, {0, 1, 0}, {0, 0, 1}})));
  };
  const GroupElement g = GroupElement::rotation(4, testing::rotation_about_z(0.9));
  CHECK_FALSE(test_distributional_invariance(isotropic, g, 1000, 0.01, s).result.reject);
  CHECK(test_distributional_invariance(anisotropic, g, 1000, 0.01, s).result.reject);
  // Permutations alone leave the anisotropic law invariant.
  const GroupElement p = GroupElement::permutation({2, 0, 3, 1});
  CHECK_FALSE(test_distributional_invariance(anisotropic, p, 1000, 0.01, s).result.reject);

  std::vector<NBodyState> a(1000, NBodyState::zeros(4, 0)), b(999, NBodyState::zeros(4, 0));
  CHECK_THROWS_AS(test_distributional_invariance(a, b, g, 0.01, s), ContractError);
}

TEST_CASE("equivariance tests are reproducible") {
  KernelSampler iso;
  iso.sample = [](const NBodyState& z, RngStream& st) { return sample_projected_gaussian(z, 0.3, st); };
  RngStream s(12);
  const NBodyState x = random_centered(3, 0, s);
  const GroupElement g = GroupElement::rotation(3, sample_haar(s));
  RngStream a(13), b(13);
  CHECK(test_stochastic_equivariance(iso, x, g, 1000, 0.01, a).to_text() == test_stochastic_equivariance(iso, x, g, 1000, 0.01, b).to_text());
}
