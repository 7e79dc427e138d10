#include <gtest/gtest.h>

#include <cmath>

#include "adactx/error.hpp"
#include "adactx/losses.hpp"
#include "loss_oracles.hpp"
#include "test_util.hpp"

namespace adactx {
namespace {

constexpr double kTol = 1e-9;
constexpr int kCases = 25;

TEST(Nll, UniformLogitsIsLogVocab) {
  const Matrix logits(3, 8, 0.7);
  EXPECT_NEAR(nll(logits, std::vector<std::int32_t>{1, 5, 7}, std::vector<std::uint8_t>{1, 0, 1}),
              std::log(8.0), 1e-12);
}

TEST(Nll, MatchesOracle) {
  Rng rng(1);
  for (int k = 0; k < kCases; ++k) {
    const std::size_t rows = 1 + uniform_index(rng, 6), v = 2 + uniform_index(rng, 10);
    const Matrix logits = testing::random_matrix(rows, v, rng, 3.0);
    std::vector<std::int32_t> targets(rows);
    std::vector<std::uint8_t> mask(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      targets[r] = static_cast<std::int32_t>(uniform_index(rng, v));
      mask[r] = uniform01(rng) < 0.7;
    }
    mask[uniform_index(rng, rows)] = 1;
    const double got = nll(logits, targets, mask);
    EXPECT_NEAR(got, oracle::nll(logits, targets, mask), kTol);
    EXPECT_GE(got, 0.0);
    EXPECT_TRUE(std::isfinite(got));
  }
}

TEST(Nll, NoScoredPositionsIsAnError) {
  EXPECT_THROW(nll(Matrix(2, 4), std::vector<std::int32_t>{0, 1}, std::vector<std::uint8_t>{0, 0}),
               Error);
}

TEST(WeightedMt, UniformLambda) {
  const std::vector<double> losses{1, 2, 3, 4}, lambda(4, 0.25);
  EXPECT_NEAR(weighted_mt_loss(losses, lambda), 2.5, 1e-15);
}

TEST(WeightedMt, MatchesOracleAndBounds) {
  Rng rng(2);
  for (int k = 0; k < kCases; ++k) {
    const std::size_t n = 3 + uniform_index(rng, 2);
    std::vector<double> losses(n);
    for (double& x : losses) x = 5.0 * uniform01(rng);
    const auto lambda = oracle::random_simplex(rng, n);
    const double got = weighted_mt_loss(losses, lambda);
    EXPECT_NEAR(got, oracle::weighted_mt(losses, lambda), kTol);
    EXPECT_GE(got, *std::min_element(losses.begin(), losses.end()) - 1e-12);
    EXPECT_LE(got, *std::max_element(losses.begin(), losses.end()) + 1e-12);
  }
  EXPECT_THROW(weighted_mt_loss(std::vector<double>{1.0}, std::vector<double>{0.5, 0.5}), Error);
}

TEST(Diversity, Oracle) {
  const std::vector<std::vector<double>> pis{{0.75, 0.25}};
  EXPECT_NEAR(diversity_loss(pis), -0.5 * (std::log(0.75) + std::log(0.25)) - std::log(2.0), 1e-15);
  EXPECT_NEAR(diversity_loss(pis), 0.1438410362258904, 1e-12);
}

TEST(Diversity, UsesBatchMean) {
  // two opposite one-hot-ish rows average to uniform
  const std::vector<std::vector<double>> pis{{0.9, 0.1}, {0.1, 0.9}};
  EXPECT_NEAR(diversity_loss(pis), 0.0, 1e-15);
}

TEST(Diversity, MatchesOracleAndNonNegative) {
  Rng rng(3);
  for (int k = 0; k < kCases; ++k) {
    const std::size_t b = 1 + uniform_index(rng, 8), n = 3 + uniform_index(rng, 2);
    std::vector<std::vector<double>> pis(b);
    for (auto& p : pis) p = oracle::random_simplex(rng, n);
    const double got = diversity_loss(pis);
    EXPECT_NEAR(got, oracle::diversity(pis), kTol);
    EXPECT_GE(got, -1e-15);
  }
}

TEST(Uniformity, Oracle) {
  const std::vector<std::vector<double>> pis{{0.75, 0.25}};
  EXPECT_NEAR(uniformity_loss(pis), -0.1438410362258904, 1e-12);
  const std::vector<std::vector<double>> uniform{{0.25, 0.25, 0.25, 0.25}};
  EXPECT_NEAR(uniformity_loss(uniform), 0.0, 1e-15);
}

TEST(Uniformity, MatchesOracleAndNonPositive) {
  Rng rng(4);
  for (int k = 0; k < kCases; ++k) {
    const std::size_t b = 1 + uniform_index(rng, 8), n = 3 + uniform_index(rng, 2);
    std::vector<std::vector<double>> pis(b);
    for (auto& p : pis) p = oracle::random_simplex(rng, n);
    const double got = uniformity_loss(pis);
    EXPECT_NEAR(got, oracle::uniformity(pis), kTol);
    EXPECT_LE(got, 1e-15);
  }
}

TEST(Uniformity, ClampKeepsZeroProbabilitiesFinite) {
  const std::vector<std::vector<double>> pis{{1.0, 0.0}};
  const double got = uniformity_loss(pis);
  EXPECT_TRUE(std::isfinite(got));
  EXPECT_NEAR(got, 0.5 * std::log(1e-8) + std::log(2.0), 1e-12);
  EXPECT_TRUE(std::isfinite(diversity_loss(pis)));
}

TEST(MaskLoss, UniformHeadIsLogVocab) {
  Rng rng(5);
  const Matrix hidden = testing::random_matrix(6, 4, rng);
  const Matrix w(4, 8, 0.0), b(1, 8, 0.3);
  const std::vector<std::size_t> pos{0, 3, 5};
  const std::vector<std::int32_t> ids{1, 7, 2};
  EXPECT_NEAR(mask_loss(hidden, pos, ids, w, b), std::log(8.0), 1e-12);
  EXPECT_EQ(mask_loss(hidden, {}, {}, w, b), 0.0);
}

TEST(MaskLoss, MatchesOracle) {
  Rng rng(6);
  for (int k = 0; k < kCases; ++k) {
    const Matrix hidden = testing::random_matrix(5, 3, rng);
    const Matrix w = testing::random_matrix(3, 7, rng), b = testing::random_matrix(1, 7, rng);
    std::vector<std::size_t> pos{uniform_index(rng, 5)};
    std::vector<std::int32_t> ids{static_cast<std::int32_t>(uniform_index(rng, 7))};
    Matrix logits(5, 7);
    for (std::size_t r = 0; r < 5; ++r)
      for (std::size_t c = 0; c < 7; ++c) {
        logits(r, c) = b(0, c);
        for (std::size_t k = 0; k < 3; ++k) logits(r, c) += hidden(r, k) * w(k, c);
      }
    std::vector<std::int32_t> targets(5, 0);
    std::vector<std::uint8_t> mask(5, 0);
    targets[pos[0]] = ids[0];
    mask[pos[0]] = 1;
    EXPECT_NEAR(mask_loss(hidden, pos, ids, w, b), oracle::nll(logits, targets, mask), kTol);
  }
}

TEST(TotalLoss, Oracle) {
  const LossWeights w{1.0, 1.0, 1.0};
  EXPECT_NEAR(total_loss(1.0, 0.2, -0.1, 0.5, w).total, 1.6, 1e-15);
}

TEST(TotalLoss, ExactComposition) {
  Rng rng(7);
  for (int k = 0; k < kCases; ++k) {
    const double mt = 3 * uniform01(rng), div = uniform01(rng), uni = -uniform01(rng),
                 mask = 2 * uniform01(rng);
    const LossWeights w{uniform01(rng), uniform01(rng), uniform01(rng)};
    const LossBreakdown b = total_loss(mt, div, uni, mask, w);
    EXPECT_NEAR(b.total, oracle::total(mt, div, uni, mask, w.beta1, w.beta2, w.beta3), kTol);
    EXPECT_EQ(b.l_mt, mt);
    EXPECT_EQ(b.l_uni, uni);
  }
}

TEST(TotalLoss, NonFiniteComponentIsNamed) {
  try {
    total_loss(1.0, 0.1, NAN, 0.0, LossWeights{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Numeric);
    EXPECT_NE(std::string(e.what()).find("l_uni"), std::string::npos);
  }
  EXPECT_THROW(total_loss(1.0, 0.0, 0.0, 0.0, LossWeights{-1.0, 0.0, 0.0}), Error);
}

TEST(Losses, EmptyBatch) {
  const std::vector<std::vector<double>> none;
  EXPECT_THROW(diversity_loss(none), Error);
  EXPECT_THROW(uniformity_loss(none), Error);
}

TEST(Losses, TapeGradientsMatchFiniteDifferences) {
  Rng rng(8);
  Matrix pis(3, 4);
  for (std::size_t r = 0; r < 3; ++r) {
    const auto p = oracle::random_simplex(rng, 4);
    for (std::size_t c = 0; c < 4; ++c) pis(r, c) = p[c];
  }
  auto f = [](const Matrix& x, Matrix* g) {
    ag::Tape t(g != nullptr);
    ag::Var v = t.parameter(x, g);
    ag::Var y = ag::add(t, ag::diversity_loss(t, v), ag::scale(t, ag::uniformity_loss(t, v), 0.3));
    if (g) t.backward(y);
    return t.value(y)[0];
  };
  Matrix g(3, 4);
  f(pis, &g);
  for (std::size_t i = 0; i < pis.size(); ++i) {
    Matrix a = pis, b = pis;
    a[i] += 1e-7;
    b[i] -= 1e-7;
    EXPECT_NEAR(g[i], (f(a, nullptr) - f(b, nullptr)) / 2e-7, 1e-6);
  }
}

}  // namespace
}  // namespace adactx
