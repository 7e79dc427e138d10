#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "adactx/error.hpp"
#include "adactx/predictor.hpp"
#include "test_util.hpp"

namespace adactx {
namespace {

PredictorHead identity_head(std::size_t n) {
  PredictorHead h;
  h.w = Matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) h.w(i, i) = 1.0;
  h.b = Matrix(1, n);
  return h;
}

TEST(Pool, MeanOfRows) {
  EncoderOutput enc;
  enc.hidden = Matrix(2, 2, {1.0, 0.0, 0.0, 1.0});
  enc.pad_mask = {0, 0};
  EXPECT_EQ(pool(enc), (std::vector<double>{0.5, 0.5}));
}

TEST(Pool, SkipsPadRows) {
  EncoderOutput enc;
  enc.hidden = Matrix(3, 2, {1.0, 2.0, 3.0, 4.0, 100.0, 100.0});
  enc.pad_mask = {0, 0, 1};
  EXPECT_EQ(pool(enc), (std::vector<double>{2.0, 3.0}));
  enc.pad_mask = {1, 1, 1};
  EXPECT_THROW(pool(enc), Error);
}

TEST(OptionProbs, SoftmaxOracle) {
  const std::vector<double> pooled{std::log(3.0), 0.0};
  const auto pi = option_probs(pooled, identity_head(2));
  EXPECT_NEAR(pi[0], 0.75, 1e-15);
  EXPECT_NEAR(pi[1], 0.25, 1e-15);
}

TEST(OptionProbs, SimplexAndShiftInvariance) {
  Rng rng(3);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> z(4);
    for (double& x : z) x = 5.0 * normal(rng);
    const auto p = softmax(z);
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-9);
    for (double x : p) EXPECT_GT(x, 0.0);
    std::vector<double> shifted = z;
    for (double& x : shifted) x += 123.25;
    const auto q = softmax(shifted);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(p[i], q[i], 1e-12);
  }
  const std::vector<double> huge{1000.0, 0.0};
  EXPECT_NEAR(softmax(huge)[0], 1.0, 1e-15);
  const std::vector<double> bad{0.0, NAN};
  EXPECT_THROW(softmax(bad), Error);
}

TEST(Gumbel, ZeroNoiseUnitTemperatureIsPi) {
  const std::vector<double> pi{0.1, 0.2, 0.3, 0.4};
  const std::vector<double> g(4, 0.0);
  const auto lam = gumbel_weights(pi, g, 1.0);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(lam[i], pi[i], 1e-12);
}

TEST(Gumbel, WeightsOnSimplex) {
  Rng rng(11);
  const std::vector<double> pi{0.05, 0.15, 0.3, 0.5};
  for (double tau : {0.1, 0.5, 1.0, 4.0}) {
    for (int rep = 0; rep < 100; ++rep) {
      const auto d = gumbel_weights(pi, tau, rng);
      EXPECT_NEAR(std::accumulate(d.lambda.begin(), d.lambda.end(), 0.0), 1.0, 1e-9);
      for (double x : d.lambda) EXPECT_GE(x, 0.0);
    }
  }
}

TEST(Gumbel, LowTemperatureIsOneHot) {
  Rng rng(12);
  const std::vector<double> pi{0.25, 0.25, 0.5};
  for (int rep = 0; rep < 50; ++rep) {
    const auto d = gumbel_weights(pi, 1e-4, rng);
    const int k = argmax(d.lambda);
    std::vector<double> perturbed(3);
    for (std::size_t i = 0; i < 3; ++i) perturbed[i] = std::log(pi[i]) + d.gumbel_noise[i];
    EXPECT_EQ(k, argmax(perturbed));
    EXPECT_GT(d.lambda[static_cast<std::size_t>(k)], 1.0 - 1e-6);
  }
}

TEST(Gumbel, ArgmaxFrequenciesMatchPi) {
  Rng rng(2024);
  const std::vector<double> pi{0.15, 0.25, 0.15, 0.45};
  std::vector<double> counts(4, 0.0);
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) counts[argmax(gumbel_weights(pi, 1e-3, rng).lambda)] += 1.0;
  EXPECT_LT(testing::chi_square(counts, pi), testing::kChiSquare3Df01);
}

TEST(Gumbel, WeightGradientMatchesFiniteDifferences) {
  const std::vector<double> noise{0.3, -0.7, 1.1};
  const double tau = 0.7;
  const std::vector<double> c{0.5, -1.0, 2.0};
  auto f = [&](const Matrix& log_pi, Matrix* grad) {
    ag::Tape t(grad != nullptr);
    ag::Var lp = t.parameter(log_pi, grad);
    ag::Var lam = ag::gumbel_weights(t, lp, noise, tau);
    Matrix cm(1, 3, c);
    ag::Var y = ag::dot(t, lam, t.constant(cm));
    if (grad) t.backward(y);
    return t.value(y)(0, 0);
  };
  Matrix lp(1, 3, {std::log(0.2), std::log(0.3), std::log(0.5)});
  Matrix grad(1, 3);
  f(lp, &grad);
  for (std::size_t i = 0; i < 3; ++i) {
    Matrix a = lp, b = lp;
    a[i] += 1e-6;
    b[i] -= 1e-6;
    EXPECT_NEAR(grad[i], (f(a, nullptr) - f(b, nullptr)) / 2e-6, 1e-8);
  }
}

TEST(Gumbel, Errors) {
  const std::vector<double> pi{0.5, 0.5};
  const std::vector<double> g{0.0, 0.0};
  EXPECT_THROW(gumbel_weights(pi, g, 0.0), Error);
  EXPECT_THROW(gumbel_weights(pi, std::vector<double>{0.0}, 1.0), Error);
  EXPECT_THROW(gumbel_weights(std::vector<double>{1.0, 0.0}, g, 1.0), Error);
}

TEST(Select, ArgmaxLowestIndexOnTies) {
  EXPECT_EQ(argmax(std::vector<double>{0.3, 0.7, 0.7}), 1);
  EXPECT_EQ(argmax(std::vector<double>{2.0, 2.0}), 0);
  EXPECT_THROW(argmax(std::vector<double>{}), Error);
}

TEST(Select, InvariantToShiftAndPositiveScaling) {
  Rng rng(5);
  for (int rep = 0; rep < 100; ++rep) {
    PredictorHead h;
    h.w = testing::random_matrix(3, 4, rng);
    h.b = testing::random_matrix(1, 4, rng);
    std::vector<double> x(3);
    for (double& v : x) v = normal(rng);
    const int k = select_option(x, h);
    EXPECT_EQ(k, argmax(option_probs(x, h)));
    PredictorHead scaled = h, shifted = h;
    const double s = 0.1 + 10.0 * uniform01(rng);
    for (double& v : scaled.w.flat()) v *= s;
    for (double& v : scaled.b.flat()) v *= s;
    for (double& v : shifted.b.flat()) v += 3.5;
    EXPECT_EQ(select_option(x, scaled), k);
    EXPECT_EQ(select_option(x, shifted), k);
  }
}

TEST(Select, ShapeErrors) {
  PredictorHead h = identity_head(2);
  EXPECT_THROW(select_option(std::vector<double>{1.0, 2.0, 3.0}, h), Error);
  h.tau = 0.0;
  EXPECT_THROW(h.validate(), Error);
}

}  // namespace
}  // namespace adactx
