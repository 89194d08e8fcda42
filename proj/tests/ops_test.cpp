#include "flavr/ops.hpp"

#include <gtest/gtest.h>

#include <random>

#include "flavr/tensor.hpp"
#include "oracles.hpp"

using flavr::Shape;
using flavr::Tensor;

TEST(Relu, ClampsNegatives) {
  Tensor<double> x = Tensor<double>::from({3}, {-1.0, 0.0, 2.0});
  Tensor<double> y = flavr::relu(x);
  EXPECT_EQ(y[0], 0.0);
  EXPECT_EQ(y[1], 0.0);
  EXPECT_EQ(y[2], 2.0);

  Tensor<double> neg({2, 3}, -4.0);
  for (auto v : flavr::relu(neg)) EXPECT_EQ(v, 0.0);
}

TEST(Relu, GradientMatchesFiniteDifferencesAwayFromKink) {
  std::mt19937_64 rng(3);
  Tensor<double> x = flavr::uniform_tensor<double>({4, 5}, -1.0, 1.0, rng);
  for (auto& v : x)
    if (std::abs(v) < 1e-2) v += 0.05;  // keep clear of the kink
  Tensor<double> proj = flavr::uniform_tensor<double>({4, 5}, -1.0, 1.0, rng);
  auto f = [&]() { return oracle::dot(flavr::relu(x), proj); };
  Tensor<double> analytic = flavr::relu_backward(proj, flavr::relu(x));
  EXPECT_LE(oracle::max_rel_err(analytic, oracle::finite_diff(x, f)), 1e-6);
}

TEST(Sigmoid, MidpointAndSymmetry) {
  Tensor<double> zero({1}, 0.0);
  EXPECT_DOUBLE_EQ(flavr::sigmoid(zero)[0], 0.5);

  std::mt19937_64 rng(5);
  Tensor<double> x = flavr::uniform_tensor<double>({32}, -6.0, 6.0, rng);
  Tensor<double> nx = x;
  for (auto& v : nx) v = -v;
  Tensor<double> a = flavr::sigmoid(x), b = flavr::sigmoid(nx);
  for (std::int64_t i = 0; i < x.size(); ++i) EXPECT_NEAR(a[i] + b[i], 1.0, 1e-15);
}

TEST(Sigmoid, StableAtLargeMagnitude) {
  Tensor<double> x = Tensor<double>::from({2}, {700.0, -700.0});
  Tensor<double> y = flavr::sigmoid(x);
  EXPECT_DOUBLE_EQ(y[0], 1.0);
  EXPECT_GT(y[1], 0.0);
  EXPECT_LT(y[1], 1e-300);
}

TEST(Sigmoid, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(7);
  Tensor<double> x = flavr::uniform_tensor<double>({16}, -3.0, 3.0, rng);
  Tensor<double> proj = flavr::uniform_tensor<double>({16}, -1.0, 1.0, rng);
  auto f = [&]() { return oracle::dot(flavr::sigmoid(x), proj); };
  Tensor<double> analytic = flavr::sigmoid_backward(proj, flavr::sigmoid(x));
  EXPECT_LE(oracle::max_rel_err(analytic, oracle::finite_diff(x, f)), 1e-6);
}

TEST(GlobalAvgPool, ConstantAndSingleton) {
  Tensor<double> c({2, 3, 2, 4, 4}, 0.75);
  Tensor<double> pooled = flavr::global_avg_pool(c);
  ASSERT_EQ(pooled.shape(), (Shape{2, 3}));
  for (auto v : pooled) EXPECT_DOUBLE_EQ(v, 0.75);

  std::mt19937_64 rng(11);
  Tensor<double> x = flavr::uniform_tensor<double>({2, 4, 1, 1, 1}, -1.0, 1.0, rng);
  Tensor<double> p = flavr::global_avg_pool(x);
  for (std::int64_t i = 0; i < 8; ++i) EXPECT_DOUBLE_EQ(p[i], x[i]);
}

TEST(GlobalAvgPool, MatchesNaiveMeanAndFiniteDifferences) {
  std::mt19937_64 rng(13);
  Tensor<double> x = flavr::uniform_tensor<double>({2, 3, 2, 5, 4}, -1.0, 1.0, rng);
  Tensor<double> pooled = flavr::global_avg_pool(x);
  for (std::int64_t b = 0; b < 2; ++b)
    for (std::int64_t c = 0; c < 3; ++c) {
      long double acc = 0.0L;
      for (std::int64_t i = 0; i < 40; ++i) acc += x[(b * 3 + c) * 40 + i];
      ASSERT_NEAR(pooled[b * 3 + c], static_cast<double>(acc / 40.0L), 1e-12);
    }

  Tensor<double> proj = flavr::uniform_tensor<double>({2, 3}, -1.0, 1.0, rng);
  auto f = [&]() { return oracle::dot(flavr::global_avg_pool(x), proj); };
  Tensor<double> analytic = flavr::global_avg_pool_backward(proj, x.shape());
  EXPECT_LE(oracle::max_rel_err(analytic, oracle::finite_diff(x, f)), 1e-6);
}

TEST(Concat, ChannelAxis) {
  std::mt19937_64 rng(17);
  Tensor<double> a = flavr::uniform_tensor<double>({1, 2, 4, 4, 4}, -1.0, 1.0, rng);
  Tensor<double> b = flavr::uniform_tensor<double>({1, 2, 4, 4, 4}, -1.0, 1.0, rng);
  Tensor<double> cat = flavr::concat(a, b, 1);
  ASSERT_EQ(cat.shape(), (Shape{1, 4, 4, 4, 4}));
  for (std::int64_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(cat[i], a[i]);
    EXPECT_EQ(cat[a.size() + i], b[i]);
  }
  auto parts = flavr::split(cat, 1, {2, 2});
  EXPECT_LE(oracle::max_abs_diff(parts[0], a), 0.0);
  EXPECT_LE(oracle::max_abs_diff(parts[1], b), 0.0);

  Tensor<double> mism({1, 2, 3, 4, 4});
  EXPECT_THROW(flavr::concat(a, mism, 1), flavr::ShapeError);
}

TEST(Reshape, PreservesFlatBuffer) {
  std::mt19937_64 rng(19);
  Tensor<double> x = flavr::uniform_tensor<double>({1, 8, 2, 4, 4}, -1.0, 1.0, rng);
  Tensor<double> y = x.reshaped({1, 16, 4, 4});
  ASSERT_EQ(y.shape(), (Shape{1, 16, 4, 4}));
  for (std::int64_t i = 0; i < x.size(); ++i) ASSERT_EQ(x[i], y[i]);
  EXPECT_THROW(x.reshaped({1, 15, 4, 4}), flavr::ShapeError);
}

TEST(Flip, IsAnInvolution) {
  std::mt19937_64 rng(23);
  Tensor<double> x = flavr::uniform_tensor<double>({2, 3, 4, 5}, -1.0, 1.0, rng);
  for (std::int64_t axis = 0; axis < 4; ++axis) {
    Tensor<double> twice = flavr::flip(flavr::flip(x, axis), axis);
    ASSERT_LE(oracle::max_abs_diff(twice, x), 0.0) << "axis " << axis;
  }
  // spot-check the relocation on the last axis
  Tensor<double> f = flavr::flip(x, 3);
  for (std::int64_t i = 0; i < 5; ++i) EXPECT_EQ(f[i], x[4 - i]);
}
