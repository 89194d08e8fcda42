#include "flavr/conv.hpp"

#include <gtest/gtest.h>

#include <random>

#include "flavr/ops.hpp"
#include "flavr/threading.hpp"
#include "oracles.hpp"

using flavr::Conv2dSpec;
using flavr::Conv3dSpec;
using flavr::Shape;
using flavr::Tensor;

namespace {

Conv3dSpec random_spec(std::mt19937_64& rng, std::int64_t ci, std::int64_t co) {
  std::uniform_int_distribution<std::int64_t> kd(1, 3), sd(1, 2), pd(0, 2);
  Conv3dSpec spec;
  spec.in_channels = ci;
  spec.out_channels = co;
  for (int a = 0; a < 3; ++a) {
    spec.kernel[a] = kd(rng);
    spec.stride[a] = sd(rng);
    spec.pad[a] = pd(rng);
  }
  return spec;
}

template <typename T>
Tensor<T> rand_tensor(Shape shape, std::mt19937_64& rng, T lo = T(-1), T hi = T(1)) {
  return flavr::uniform_tensor<T>(std::move(shape), lo, hi, rng);
}

}  // namespace

TEST(Conv3d, ScalarKernelScalesInput) {
  Tensor<double> in({1, 1, 2, 2, 2}, 1.0);
  Tensor<double> w = Tensor<double>::from({1, 1, 1, 1, 1}, {2.0});
  Tensor<double> b({1}, 0.0);
  Conv3dSpec spec{1, 1, {1, 1, 1}, {1, 1, 1}, {0, 0, 0}};
  Tensor<double> out = flavr::conv3d(in, w, b, spec);
  ASSERT_EQ(out.shape(), (Shape{1, 1, 2, 2, 2}));
  for (auto v : out) EXPECT_DOUBLE_EQ(v, 2.0);
}

TEST(Conv3d, CenteredDeltaKernelIsIdentity) {
  std::mt19937_64 rng(7);
  Tensor<double> in = rand_tensor<double>({1, 2, 3, 4, 4}, rng);
  Tensor<double> w({2, 2, 3, 3, 3}, 0.0);
  // delta at the center of each co==ci filter
  for (std::int64_t c = 0; c < 2; ++c)
    w[(((c * 2 + c) * 3 + 1) * 3 + 1) * 3 + 1] = 1.0;
  Tensor<double> b({2}, 0.0);
  Conv3dSpec spec{2, 2, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}};
  Tensor<double> out = flavr::conv3d(in, w, b, spec);
  EXPECT_EQ(out.shape(), in.shape());
  EXPECT_LE(oracle::max_abs_diff(out, in), 0.0);
}

TEST(Conv3d, MatchesDirectSummationOracle) {
  std::mt19937_64 rng(11);
  Tensor<double> in = rand_tensor<double>({2, 3, 4, 8, 8}, rng);
  Tensor<double> w = rand_tensor<double>({5, 3, 3, 3, 3}, rng);
  Tensor<double> b = rand_tensor<double>({5}, rng);
  Conv3dSpec spec{3, 5, {3, 3, 3}, {1, 2, 2}, {1, 1, 1}};
  Tensor<double> got = flavr::conv3d(in, w, b, spec);
  Tensor<double> want = oracle::conv3d(in, w, b, spec);
  EXPECT_LE(oracle::max_abs_diff(got, want), 1e-12);
}

TEST(Conv3d, RandomShapesMatchOracle) {
  std::mt19937_64 rng(23);
  std::uniform_int_distribution<std::int64_t> cd(1, 4), bd(1, 2), ed(1, 8);
  for (int trial = 0; trial < 40; ++trial) {
    const std::int64_t ci = cd(rng), co = cd(rng);
    Conv3dSpec spec = random_spec(rng, ci, co);
    Shape in_shape{bd(rng), ci, 0, 0, 0};
    for (int a = 0; a < 3; ++a) {
      // keep padded extent >= kernel so the output is nonempty
      std::int64_t e = ed(rng);
      e = std::max(e, spec.kernel[a] - 2 * spec.pad[a]);
      in_shape[static_cast<std::size_t>(2 + a)] = e;
    }
    Tensor<double> in = rand_tensor<double>(in_shape, rng);
    Tensor<double> w = rand_tensor<double>({co, ci, spec.kernel[0], spec.kernel[1], spec.kernel[2]}, rng);
    Tensor<double> b = rand_tensor<double>({co}, rng);
    Tensor<double> got = flavr::conv3d(in, w, b, spec);
    Tensor<double> want = oracle::conv3d(in, w, b, spec);
    ASSERT_LE(oracle::max_abs_diff(got, want), 1e-12) << "trial " << trial;
  }
}

TEST(Conv3d, Float32MatchesOracleLoosely) {
  std::mt19937_64 rng(29);
  Tensor<float> in = rand_tensor<float>({1, 3, 3, 6, 6}, rng);
  Tensor<float> w = rand_tensor<float>({4, 3, 3, 3, 3}, rng);
  Tensor<float> b = rand_tensor<float>({4}, rng);
  Conv3dSpec spec{3, 4, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}};
  EXPECT_LE(oracle::max_abs_diff(flavr::conv3d(in, w, b, spec), oracle::conv3d(in, w, b, spec)),
            1e-5);
}

TEST(Conv3d, ZeroInputIsBiasBroadcast) {
  Tensor<double> in({1, 2, 3, 4, 4}, 0.0);
  std::mt19937_64 rng(3);
  Tensor<double> w = rand_tensor<double>({3, 2, 3, 3, 3}, rng);
  Tensor<double> b = Tensor<double>::from({3}, {0.5, -1.25, 2.0});
  Conv3dSpec spec{2, 3, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}};
  Tensor<double> out = flavr::conv3d(in, w, b, spec);
  for (std::int64_t c = 0; c < 3; ++c)
    for (std::int64_t i = 0; i < 3 * 4 * 4; ++i)
      ASSERT_EQ(out[c * 3 * 4 * 4 + i], b[c]);
}

TEST(Conv3d, DeterministicAcrossWorkerCounts) {
  std::mt19937_64 rng(31);
  Tensor<double> in = rand_tensor<double>({2, 3, 4, 8, 8}, rng);
  Tensor<double> w = rand_tensor<double>({5, 3, 3, 3, 3}, rng);
  Tensor<double> b = rand_tensor<double>({5}, rng);
  Conv3dSpec spec{3, 5, {3, 3, 3}, {1, 2, 2}, {1, 1, 1}};
  flavr::set_worker_count(1);
  Tensor<double> one = flavr::conv3d(in, w, b, spec);
  flavr::set_worker_count(4);
  Tensor<double> four = flavr::conv3d(in, w, b, spec);
  flavr::set_worker_count(1);
  for (std::int64_t i = 0; i < one.size(); ++i) ASSERT_EQ(one[i], four[i]);
}

TEST(Conv3d, ShapeErrorsNameTheAxis) {
  Tensor<double> in({1, 2, 4, 4, 4});
  Tensor<double> w({3, 2, 3, 3, 3});
  Tensor<double> b({3});
  Conv3dSpec spec{3, 3, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}};  // expects ci=3, input has 2
  try {
    flavr::conv3d(in, w, b, spec);
    FAIL() << "expected ShapeError";
  } catch (const flavr::ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("channel axis"), std::string::npos);
  }

  Conv3dSpec degenerate{2, 3, {3, 5, 5}, {1, 1, 1}, {0, 0, 0}};
  Tensor<double> w2({3, 2, 3, 5, 5});
  Tensor<double> tiny({1, 2, 3, 4, 4});
  EXPECT_THROW(flavr::conv3d(tiny, w2, b, degenerate), flavr::ShapeError);
}

TEST(Conv3dBackward, ZeroUpstreamGivesZeroGrads) {
  std::mt19937_64 rng(5);
  Tensor<double> in = rand_tensor<double>({1, 2, 3, 4, 4}, rng);
  Tensor<double> w = rand_tensor<double>({3, 2, 3, 3, 3}, rng);
  Conv3dSpec spec{2, 3, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}};
  Tensor<double> g0({1, 3, 3, 4, 4}, 0.0);
  auto grads = flavr::conv3d_backward(g0, in, w, spec);
  for (auto v : grads.input) ASSERT_EQ(v, 0.0);
  for (auto v : grads.weight) ASSERT_EQ(v, 0.0);
  for (auto v : grads.bias) ASSERT_EQ(v, 0.0);
}

TEST(Conv3dBackward, ScalarChainRule) {
  std::mt19937_64 rng(13);
  Tensor<double> in = rand_tensor<double>({1, 1, 2, 3, 3}, rng);
  const double wv = 1.75;
  Tensor<double> w = Tensor<double>::from({1, 1, 1, 1, 1}, {wv});
  Conv3dSpec spec{1, 1, {1, 1, 1}, {1, 1, 1}, {0, 0, 0}};
  Tensor<double> g = rand_tensor<double>({1, 1, 2, 3, 3}, rng);
  auto grads = flavr::conv3d_backward(g, in, w, spec);
  long double dw = 0.0L;
  for (std::int64_t i = 0; i < in.size(); ++i) {
    EXPECT_DOUBLE_EQ(grads.input[i], wv * g[i]);
    dw += static_cast<long double>(in[i]) * static_cast<long double>(g[i]);
  }
  EXPECT_NEAR(grads.weight[0], static_cast<double>(dw), 1e-12);
}

TEST(Conv3dBackward, MatchesFiniteDifferences) {
  std::mt19937_64 rng(17);
  Tensor<double> in = rand_tensor<double>({1, 2, 3, 4, 4}, rng);
  Tensor<double> w = rand_tensor<double>({3, 2, 2, 3, 3}, rng);
  Tensor<double> b = rand_tensor<double>({3}, rng);
  Conv3dSpec spec{2, 3, {2, 3, 3}, {1, 2, 2}, {1, 1, 1}};
  const auto out0 = flavr::conv3d(in, w, b, spec);
  Tensor<double> proj = rand_tensor<double>(out0.shape(), rng);

  auto f = [&]() { return oracle::dot(flavr::conv3d(in, w, b, spec), proj); };
  auto grads = flavr::conv3d_backward(proj, in, w, spec);
  EXPECT_LE(oracle::max_rel_err(grads.input, oracle::finite_diff(in, f)), 1e-6);
  EXPECT_LE(oracle::max_rel_err(grads.weight, oracle::finite_diff(w, f)), 1e-6);
  EXPECT_LE(oracle::max_rel_err(grads.bias, oracle::finite_diff(b, f)), 1e-6);
}

TEST(ConvTranspose3d, Stride2ScatterReplicates) {
  Tensor<double> in = Tensor<double>::from({1, 1, 1, 2, 2}, {1.0, 2.0, 3.0, 4.0});
  Tensor<double> w({1, 1, 1, 2, 2}, 1.0);
  Tensor<double> b({1}, 0.0);
  Conv3dSpec spec{1, 1, {1, 2, 2}, {1, 2, 2}, {0, 0, 0}};
  Tensor<double> out = flavr::conv_transpose3d(in, w, b, spec);
  ASSERT_EQ(out.shape(), (Shape{1, 1, 1, 4, 4}));
  const double want[16] = {1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4};
  for (int i = 0; i < 16; ++i) EXPECT_DOUBLE_EQ(out[i], want[i]);
}

TEST(ConvTranspose3d, ScalarKernelScales) {
  std::mt19937_64 rng(37);
  Tensor<double> in = rand_tensor<double>({1, 2, 2, 3, 3}, rng);
  Tensor<double> w({2, 2, 1, 1, 1}, 0.0);
  w[0 * 2 + 0] = -0.5;
  w[1 * 2 + 1] = -0.5;
  Tensor<double> b({2}, 0.0);
  Conv3dSpec spec{2, 2, {1, 1, 1}, {1, 1, 1}, {0, 0, 0}};
  Tensor<double> out = flavr::conv_transpose3d(in, w, b, spec);
  for (std::int64_t i = 0; i < in.size(); ++i) EXPECT_DOUBLE_EQ(out[i], -0.5 * in[i]);
}

TEST(ConvTranspose3d, MatchesScatterOracle) {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 30; ++trial) {
    std::uniform_int_distribution<std::int64_t> cd(1, 3), ed(2, 6);
    const std::int64_t ci = cd(rng), co = cd(rng);
    Conv3dSpec spec = random_spec(rng, ci, co);
    for (int a = 0; a < 3; ++a) spec.pad[a] = std::min(spec.pad[a], (spec.kernel[a] - 1) / 2);
    Shape in_shape{1, ci, ed(rng), ed(rng), ed(rng)};
    Tensor<double> in = rand_tensor<double>(in_shape, rng);
    Tensor<double> w = rand_tensor<double>({ci, co, spec.kernel[0], spec.kernel[1], spec.kernel[2]}, rng);
    Tensor<double> b = rand_tensor<double>({co}, rng);
    Tensor<double> got = flavr::conv_transpose3d(in, w, b, spec);
    Tensor<double> want = oracle::conv_transpose3d(in, w, b, spec);
    ASSERT_LE(oracle::max_abs_diff(got, want), 1e-12) << "trial " << trial;
  }
}

TEST(ConvTranspose3d, AdjointIdentity) {
  std::mt19937_64 rng(43);
  for (int trial = 0; trial < 20; ++trial) {
    std::uniform_int_distribution<std::int64_t> cd(1, 3), ed(3, 8);
    const std::int64_t ci = cd(rng), co = cd(rng);
    Conv3dSpec spec = random_spec(rng, ci, co);
    Shape x_shape{2, ci, 0, 0, 0};
    for (int a = 0; a < 3; ++a) {
      // the transpose output extent equals x's only when the stride divides
      // exactly, so draw exact-fit extents (the network always uses these)
      std::int64_t e = std::max(ed(rng), spec.kernel[a] - 2 * spec.pad[a]);
      while ((e + 2 * spec.pad[a] - spec.kernel[a]) % spec.stride[a] != 0) ++e;
      x_shape[static_cast<std::size_t>(2 + a)] = e;
    }
    Tensor<double> x = rand_tensor<double>(x_shape, rng);
    Tensor<double> w = rand_tensor<double>({co, ci, spec.kernel[0], spec.kernel[1], spec.kernel[2]}, rng);
    Tensor<double> zero_co({co}, 0.0), zero_ci({ci}, 0.0);
    Tensor<double> cx = flavr::conv3d(x, w, zero_co, spec);
    Tensor<double> y = rand_tensor<double>(cx.shape(), rng);
    // transpose consumes the same weight buffer with its axes read as [ci_t=co, co_t=ci]
    Conv3dSpec tspec = spec;
    tspec.in_channels = co;
    tspec.out_channels = ci;
    Tensor<double> ty = flavr::conv_transpose3d(y, w, zero_ci, tspec);
    const double lhs = oracle::dot(cx, y);
    const double rhs = oracle::dot(x, ty);
    ASSERT_LE(std::abs(lhs - rhs), 1e-10 * std::max(1.0, std::max(std::abs(lhs), std::abs(rhs))))
        << "trial " << trial;
  }
}

TEST(ConvTranspose3dBackward, MatchesFiniteDifferences) {
  std::mt19937_64 rng(47);
  Tensor<double> in = rand_tensor<double>({1, 2, 2, 3, 3}, rng);
  Tensor<double> w = rand_tensor<double>({2, 3, 3, 4, 4}, rng);
  Tensor<double> b = rand_tensor<double>({3}, rng);
  Conv3dSpec spec{2, 3, {3, 4, 4}, {1, 2, 2}, {1, 1, 1}};
  const auto out0 = flavr::conv_transpose3d(in, w, b, spec);
  Tensor<double> proj = rand_tensor<double>(out0.shape(), rng);
  auto f = [&]() { return oracle::dot(flavr::conv_transpose3d(in, w, b, spec), proj); };
  auto grads = flavr::conv_transpose3d_backward(proj, in, w, spec);
  EXPECT_LE(oracle::max_rel_err(grads.input, oracle::finite_diff(in, f)), 1e-6);
  EXPECT_LE(oracle::max_rel_err(grads.weight, oracle::finite_diff(w, f)), 1e-6);
  EXPECT_LE(oracle::max_rel_err(grads.bias, oracle::finite_diff(b, f)), 1e-6);
}

TEST(Conv2d, OneByOneKernelAddsBias) {
  std::mt19937_64 rng(53);
  Tensor<double> in = rand_tensor<double>({1, 2, 4, 4}, rng);
  Tensor<double> w({2, 2, 1, 1}, 0.0);
  w[0 * 2 + 0] = 1.0;
  w[1 * 2 + 1] = 1.0;
  Tensor<double> b = Tensor<double>::from({2}, {0.25, -0.5});
  Conv2dSpec spec{2, 2, {1, 1}, {1, 1}, {0, 0}};
  Tensor<double> out = flavr::conv2d(in, w, b, spec);
  for (std::int64_t c = 0; c < 2; ++c)
    for (std::int64_t i = 0; i < 16; ++i)
      ASSERT_DOUBLE_EQ(out[c * 16 + i], in[c * 16 + i] + b[c]);
}

TEST(Conv2d, SevenBySevenDeltaIsIdentity) {
  std::mt19937_64 rng(59);
  Tensor<double> in = rand_tensor<double>({1, 3, 8, 8}, rng);
  Tensor<double> w({3, 3, 7, 7}, 0.0);
  for (std::int64_t c = 0; c < 3; ++c) w[((c * 3 + c) * 7 + 3) * 7 + 3] = 1.0;
  Tensor<double> b({3}, 0.0);
  Conv2dSpec spec{3, 3, {7, 7}, {1, 1}, {3, 3}};
  Tensor<double> out = flavr::conv2d(in, w, b, spec);
  EXPECT_LE(oracle::max_abs_diff(out, in), 0.0);
}

TEST(Conv2d, MatchesOracleAndFiniteDifferences) {
  std::mt19937_64 rng(61);
  Tensor<double> in = rand_tensor<double>({2, 2, 5, 6}, rng);
  Tensor<double> w = rand_tensor<double>({3, 2, 3, 3}, rng);
  Tensor<double> b = rand_tensor<double>({3}, rng);
  Conv2dSpec spec{2, 3, {3, 3}, {2, 1}, {1, 1}};
  Tensor<double> got = flavr::conv2d(in, w, b, spec);
  // 2D oracle: run the 3D one on lifted tensors
  Tensor<double> want = oracle::conv3d(in.reshaped({2, 2, 1, 5, 6}), w.reshaped({3, 2, 1, 3, 3}),
                                       b, spec.as3d());
  EXPECT_LE(oracle::max_abs_diff(got, want.reshaped(got.shape())), 1e-12);

  Tensor<double> proj = rand_tensor<double>(got.shape(), rng);
  auto f = [&]() { return oracle::dot(flavr::conv2d(in, w, b, spec), proj); };
  auto grads = flavr::conv2d_backward(proj, in, w, spec);
  EXPECT_LE(oracle::max_rel_err(grads.input, oracle::finite_diff(in, f)), 1e-6);
  EXPECT_LE(oracle::max_rel_err(grads.weight, oracle::finite_diff(w, f)), 1e-6);
}
