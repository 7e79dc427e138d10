#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "adactx/kernels.hpp"
#include "adactx/tensor.hpp"
#include "test_util.hpp"

namespace adactx {
namespace {

using kernels::Isa;

std::vector<double> randv(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = normal(rng);
  return v;
}

const kernels::KernelTable* avx2_or_skip() {
  const auto* t = kernels::avx2_table();
  if (t == nullptr || !kernels::cpu_supports(Isa::Avx2)) return nullptr;
  return t;
}

TEST(Kernels, ParseAndNames) {
  EXPECT_EQ(kernels::parse_isa("scalar"), Isa::Scalar);
  EXPECT_EQ(kernels::parse_isa("avx2"), Isa::Avx2);
  EXPECT_FALSE(kernels::parse_isa("sse9").has_value());
  EXPECT_EQ(kernels::to_string(Isa::Scalar), "scalar");
}

TEST(Kernels, ScalarGemmMatchesNaiveLoop) {
  Rng rng(3);
  const std::size_t m = 5, n = 7, k = 4;
  const auto a = randv(m * k, rng), b = randv(k * n, rng);
  std::vector<double> c(m * n, 0.0);
  kernels::scalar_table().gemm_nn(m, n, k, a.data(), k, b.data(), n, c.data(), n, false);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      EXPECT_NEAR(c[i * n + j], s, 1e-12);
    }
}

class KernelEquivalence : public ::testing::TestWithParam<std::tuple<int, int, int>> {};

TEST_P(KernelEquivalence, Avx2MatchesScalar) {
  const auto* avx = avx2_or_skip();
  if (avx == nullptr) GTEST_SKIP() << "AVX2 not available";
  const auto& sc = kernels::scalar_table();
  const auto [mi, ni, ki] = GetParam();
  const std::size_t m = mi, n = ni, k = ki;
  Rng rng(m * 131 + n * 17 + k);
  const double tol = 1e-12 * static_cast<double>(k + 1);

  for (bool acc : {false, true}) {
    // nn
    auto a = randv(m * k, rng), b = randv(k * n, rng), c0 = randv(m * n, rng);
    auto c1 = c0;
    sc.gemm_nn(m, n, k, a.data(), k, b.data(), n, c0.data(), n, acc);
    avx->gemm_nn(m, n, k, a.data(), k, b.data(), n, c1.data(), n, acc);
    for (std::size_t i = 0; i < c0.size(); ++i) ASSERT_NEAR(c0[i], c1[i], tol) << "nn " << i;
    // nt: B is n x k
    auto bt = randv(n * k, rng);
    c1 = c0;
    sc.gemm_nt(m, n, k, a.data(), k, bt.data(), k, c0.data(), n, acc);
    avx->gemm_nt(m, n, k, a.data(), k, bt.data(), k, c1.data(), n, acc);
    for (std::size_t i = 0; i < c0.size(); ++i) ASSERT_NEAR(c0[i], c1[i], tol) << "nt " << i;
    // tn: A is k x m
    auto at = randv(k * m, rng);
    c1 = c0;
    sc.gemm_tn(m, n, k, at.data(), m, b.data(), n, c0.data(), n, acc);
    avx->gemm_tn(m, n, k, at.data(), m, b.data(), n, c1.data(), n, acc);
    for (std::size_t i = 0; i < c0.size(); ++i) ASSERT_NEAR(c0[i], c1[i], tol) << "tn " << i;
  }
  auto x = randv(k * 3 + 1, rng), y = randv(k * 3 + 1, rng);
  EXPECT_NEAR(sc.dot(x.data(), y.data(), x.size()), avx->dot(x.data(), y.data(), x.size()),
              1e-12 * static_cast<double>(x.size()));
  auto y0 = y, y1 = y;
  sc.axpy(0.37, x.data(), y0.data(), x.size());
  avx->axpy(0.37, x.data(), y1.data(), x.size());
  for (std::size_t i = 0; i < y0.size(); ++i) ASSERT_NEAR(y0[i], y1[i], 1e-14);
}

INSTANTIATE_TEST_SUITE_P(Shapes, KernelEquivalence,
                         ::testing::Values(std::make_tuple(1, 1, 1), std::make_tuple(3, 5, 2),
                                           std::make_tuple(4, 16, 8), std::make_tuple(7, 17, 9),
                                           std::make_tuple(13, 33, 31), std::make_tuple(32, 64, 32),
                                           std::make_tuple(5, 3, 64), std::make_tuple(9, 41, 16)));

TEST(Kernels, MatmulAgreesAcrossSelections) {
  if (avx2_or_skip() == nullptr) GTEST_SKIP() << "AVX2 not available";
  Rng rng(9);
  const Matrix a = testing::random_matrix(11, 19, rng), b = testing::random_matrix(19, 23, rng);
  Matrix c_scalar, c_avx;
  const Isa before = kernels::active().isa;
  kernels::select(Isa::Scalar);
  matmul(a, b, c_scalar);
  kernels::select(Isa::Avx2);
  matmul(a, b, c_avx);
  kernels::select(before);
  ASSERT_TRUE(c_scalar.same_shape(c_avx));
  for (std::size_t i = 0; i < c_scalar.size(); ++i) EXPECT_NEAR(c_scalar[i], c_avx[i], 1e-12);
}

}  // namespace
}  // namespace adactx
