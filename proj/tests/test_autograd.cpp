#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "adactx/autograd.hpp"
#include "adactx/error.hpp"
#include "test_util.hpp"

namespace adactx {
namespace {

using Builder = std::function<ag::Var(ag::Tape&, const std::vector<ag::Var>&)>;

// Reduces an op output to a scalar with fixed random weights so every output
// element carries gradient.
ag::Var weighted_sum(ag::Tape& t, ag::Var y, std::uint64_t seed) {
  Rng rng(seed);
  const Matrix& v = t.value(y);
  return ag::dot(t, y, t.constant(testing::random_matrix(v.rows(), v.cols(), rng)));
}

double eval(const Builder& f, const std::vector<Matrix>& inputs) {
  ag::Tape t(false);
  std::vector<ag::Var> vs;
  for (const auto& m : inputs) vs.push_back(t.parameter(m, nullptr));
  return t.value(weighted_sum(t, f(t, vs), 77))(0, 0);
}

void check_gradients(const Builder& f, std::vector<Matrix> inputs, double tol = 1e-6) {
  std::vector<Matrix> grads;
  for (const auto& m : inputs) grads.emplace_back(m.rows(), m.cols());
  {
    ag::Tape t(true);
    std::vector<ag::Var> vs;
    for (std::size_t i = 0; i < inputs.size(); ++i) vs.push_back(t.parameter(inputs[i], &grads[i]));
    t.backward(weighted_sum(t, f(t, vs), 77));
  }
  const double eps = 1e-6;
  for (std::size_t i = 0; i < inputs.size(); ++i)
    for (std::size_t j = 0; j < inputs[i].size(); ++j) {
      const double x0 = inputs[i][j];
      inputs[i][j] = x0 + eps;
      const double fp = eval(f, inputs);
      inputs[i][j] = x0 - eps;
      const double fm = eval(f, inputs);
      inputs[i][j] = x0;
      const double num = (fp - fm) / (2 * eps);
      EXPECT_NEAR(grads[i][j], num, tol * std::max(1.0, std::abs(num)))
          << "input " << i << " element " << j;
    }
}

class AutogradFd : public ::testing::Test {
 protected:
  Rng rng{42};
  Matrix rnd(std::size_t r, std::size_t c, double s = 1.0) {
    return testing::random_matrix(r, c, rng, s);
  }
};

TEST_F(AutogradFd, Elementwise) {
  check_gradients([](ag::Tape& t, auto& v) { return ag::add(t, v[0], v[1]); }, {rnd(3, 4), rnd(3, 4)});
  check_gradients([](ag::Tape& t, auto& v) { return ag::sub(t, v[0], v[1]); }, {rnd(3, 4), rnd(3, 4)});
  check_gradients([](ag::Tape& t, auto& v) { return ag::mul(t, v[0], v[1]); }, {rnd(3, 4), rnd(3, 4)});
  check_gradients([](ag::Tape& t, auto& v) { return ag::add_row(t, v[0], v[1]); }, {rnd(3, 4), rnd(1, 4)});
  check_gradients([](ag::Tape& t, auto& v) { return ag::scale(t, v[0], -1.7); }, {rnd(2, 5)});
  check_gradients([](ag::Tape& t, auto& v) { return ag::add_scalar(t, v[0], 0.3); }, {rnd(2, 5)});
  check_gradients([](ag::Tape& t, auto& v) { return ag::mul_scalar(t, v[0], v[1]); }, {rnd(2, 5), rnd(1, 1)});
  check_gradients([](ag::Tape& t, auto& v) { return ag::gelu(t, v[0]); }, {rnd(3, 6, 2.0)});
}

TEST_F(AutogradFd, Structural) {
  check_gradients([](ag::Tape& t, auto& v) { return ag::element(t, v[0], 1, 2); }, {rnd(3, 4)});
  check_gradients(
      [](ag::Tape& t, auto& v) {
        std::vector<ag::Var> xs{v[0], v[1]};
        return ag::concat_cols(t, xs);
      },
      {rnd(1, 3), rnd(1, 2)});
  check_gradients(
      [](ag::Tape& t, auto& v) {
        std::vector<ag::Var> xs{v[0], v[1]};
        return ag::concat_rows(t, xs);
      },
      {rnd(2, 3), rnd(1, 3)});
  check_gradients([](ag::Tape& t, auto& v) { return ag::slice_rows(t, v[0], 1, 3); }, {rnd(4, 3)});
  check_gradients(
      [](ag::Tape& t, auto& v) {
        const std::vector<std::int32_t> ids{2, 0, 2, 1};
        return ag::gather_rows(t, v[0], ids, 1.5);
      },
      {rnd(3, 4)});
  check_gradients([](ag::Tape& t, auto& v) { return ag::sum(t, v[0]); }, {rnd(3, 4)});
  check_gradients([](ag::Tape& t, auto& v) { return ag::mean(t, v[0]); }, {rnd(3, 4)});
  check_gradients([](ag::Tape& t, auto& v) { return ag::mean_rows(t, v[0]); }, {rnd(3, 4)});
  check_gradients(
      [](ag::Tape& t, auto& v) {
        const std::vector<std::uint8_t> keep{1, 0, 1};
        return ag::mean_rows_masked(t, v[0], keep);
      },
      {rnd(3, 4)});
  check_gradients([](ag::Tape& t, auto& v) { return ag::dot(t, v[0], v[1]); }, {rnd(2, 3), rnd(2, 3)});
}

TEST_F(AutogradFd, LogClamped) {
  Matrix x(2, 3);
  Rng r(5);
  for (double& v : x.flat()) v = 0.1 + uniform01(r);
  check_gradients([](ag::Tape& t, auto& v) { return ag::log_clamped(t, v[0], 1e-8); }, {x});
}

TEST_F(AutogradFd, LogClampedFloorBlocksGradient) {
  Matrix x(1, 2, 1e-12), g(1, 2);
  ag::Tape t;
  ag::Var v = t.parameter(x, &g);
  ag::Var y = ag::log_clamped(t, v, 1e-8);
  EXPECT_DOUBLE_EQ(t.value(y)(0, 0), std::log(1e-8));
  t.backward(ag::sum(t, y));
  EXPECT_EQ(g(0, 0), 0.0);
}

TEST_F(AutogradFd, Linear) {
  check_gradients([](ag::Tape& t, auto& v) { return ag::matmul(t, v[0], v[1]); }, {rnd(3, 4), rnd(4, 5)});
  check_gradients([](ag::Tape& t, auto& v) { return ag::affine(t, v[0], v[1], v[2]); },
                  {rnd(3, 4), rnd(4, 5), rnd(1, 5)});
}

TEST_F(AutogradFd, Normalisation) {
  check_gradients([](ag::Tape& t, auto& v) { return ag::layer_norm(t, v[0], v[1], v[2]); },
                  {rnd(3, 6), rnd(1, 6), rnd(1, 6)});
  check_gradients([](ag::Tape& t, auto& v) { return ag::softmax_rows(t, v[0]); }, {rnd(3, 5)});
  check_gradients([](ag::Tape& t, auto& v) { return ag::log_softmax_rows(t, v[0]); }, {rnd(3, 5)});
}

TEST_F(AutogradFd, Attention) {
  const std::vector<std::uint8_t> keep{1, 1, 0, 1};
  for (bool causal : {false, true}) {
    check_gradients(
        [&](ag::Tape& t, auto& v) { return ag::attention(t, v[0], v[1], v[2], 2, keep, causal); },
        {rnd(4, 6), rnd(4, 6), rnd(4, 6)});
  }
  // cross shape: 3 queries over 5 keys
  const std::vector<std::uint8_t> keep5{1, 0, 1, 1, 1};
  check_gradients(
      [&](ag::Tape& t, auto& v) { return ag::attention(t, v[0], v[1], v[2], 3, keep5, false); },
      {rnd(3, 6), rnd(5, 6), rnd(5, 6)});
}

TEST_F(AutogradFd, CrossEntropy) {
  const std::vector<std::int32_t> targets{1, 4, 0};
  const std::vector<std::uint8_t> keep{1, 0, 1};
  check_gradients(
      [&](ag::Tape& t, auto& v) { return ag::cross_entropy(t, v[0], targets, keep); }, {rnd(3, 5)});
}

TEST(Autograd, CrossEntropyUniformIsLogV) {
  ag::Tape t(false);
  const std::vector<std::int32_t> targets{3, 7};
  const std::vector<std::uint8_t> keep{1, 1};
  ag::Var l = ag::cross_entropy(t, t.constant(Matrix(2, 8, 0.25)), targets, keep);
  EXPECT_NEAR(t.value(l)(0, 0), std::log(8.0), 1e-12);
}

TEST(Autograd, Errors) {
  ag::Tape t(false);
  ag::Var a = t.constant(Matrix(2, 3));
  ag::Var b = t.constant(Matrix(3, 2));
  EXPECT_THROW(ag::add(t, a, b), Error);
  const std::vector<std::uint8_t> none{0, 0};
  EXPECT_THROW(ag::mean_rows_masked(t, a, none), Error);
  const std::vector<std::int32_t> bad{0, 9};
  const std::vector<std::uint8_t> keep{1, 1};
  EXPECT_THROW(ag::cross_entropy(t, a, bad, keep), Error);
}

TEST(Autograd, AttentionMaskedKeysHaveNoInfluence) {
  Rng rng(1);
  Matrix q = testing::random_matrix(2, 4, rng), k = testing::random_matrix(3, 4, rng),
         v = testing::random_matrix(3, 4, rng);
  const std::vector<std::uint8_t> keep{1, 1, 0};
  ag::Tape t(false);
  const Matrix out1 = t.value(ag::attention(t, t.constant(q), t.constant(k), t.constant(v), 2, keep, false));
  for (std::size_t c = 0; c < 4; ++c) {
    k(2, c) = 100.0;
    v(2, c) = -50.0;
  }
  const Matrix out2 = t.value(ag::attention(t, t.constant(q), t.constant(k), t.constant(v), 2, keep, false));
  for (std::size_t i = 0; i < out1.size(); ++i) EXPECT_EQ(out1[i], out2[i]);
}

TEST(Autograd, GradientsAccumulateIntoSinks) {
  Matrix w(1, 1, 2.0), g(1, 1, 0.0);
  for (int rep = 0; rep < 2; ++rep) {
    ag::Tape t;
    ag::Var x = t.parameter(w, &g);
    t.backward(ag::mul(t, x, x));
  }
  EXPECT_DOUBLE_EQ(g(0, 0), 8.0);
}

}  // namespace
}  // namespace adactx
