#include "flavr/metrics.hpp"

#include <gtest/gtest.h>

#include <random>

#include "flavr/data.hpp"
#include "oracles.hpp"

using flavr::Shape;
using flavr::Tensor;


TEST(Psnr, IdenticalImagesAreCapped) {
  Tensor<double> x({3, 8, 8}, 0.25);
  EXPECT_DOUBLE_EQ(flavr::psnr(x, x), 99.0);
}

TEST(Psnr, UniformErrorClosedForms) {
  Tensor<double> gt({3, 16, 16}, 0.5);
  Tensor<double> pred({3, 16, 16}, 0.6);
  EXPECT_NEAR(flavr::psnr(pred, gt), 20.0, 1e-9);

  Tensor<double> pred2({3, 16, 16}, 0.0);  // |d| = 0.5
  EXPECT_NEAR(flavr::psnr(pred2, gt), 20.0 * std::log10(2.0), 1e-9);
}

TEST(Psnr, MatchesNaiveMseLoop) {
  std::mt19937_64 rng(3);
  Tensor<double> a = flavr::uniform_tensor<double>({3, 12, 12}, 0.0, 1.0, rng);
  Tensor<double> b = flavr::uniform_tensor<double>({3, 12, 12}, 0.0, 1.0, rng);
  long double mse = 0.0L;
  for (std::int64_t i = 0; i < a.size(); ++i) mse += (a[i] - b[i]) * (a[i] - b[i]);
  mse /= a.size();
  EXPECT_NEAR(flavr::psnr(a, b), 10.0 * std::log10(1.0 / static_cast<double>(mse)), 1e-9);

  EXPECT_THROW(flavr::psnr(a, Tensor<double>({3, 12, 11})), flavr::ShapeError);
}

TEST(Psnr, StrictlyDecreasesWithNoiseAmplitude) {
  std::mt19937_64 rng(5);
  Tensor<double> gt = flavr::uniform_tensor<double>({3, 16, 16}, 0.2, 0.8, rng);
  Tensor<double> noise = flavr::uniform_tensor<double>({3, 16, 16}, -1.0, 1.0, rng);
  double prev = flavr::psnr(gt, gt);
  for (double amp : {0.01, 0.02, 0.05, 0.1, 0.2}) {
    Tensor<double> noisy = gt;
    for (std::int64_t i = 0; i < noisy.size(); ++i) noisy[i] += amp * noise[i];
    const double p = flavr::psnr(noisy, gt);
    EXPECT_LT(p, prev) << "amp " << amp;
    prev = p;
  }
}

TEST(Ssim, IdenticalImagesGiveExactlyOne) {
  std::mt19937_64 rng(7);
  Tensor<double> x = flavr::uniform_tensor<double>({3, 16, 16}, 0.0, 1.0, rng);
  EXPECT_DOUBLE_EQ(flavr::ssim(x, x), 1.0);
}

TEST(Ssim, SymmetricInItsArguments) {
  std::mt19937_64 rng(11);
  Tensor<double> a = flavr::uniform_tensor<double>({3, 16, 16}, 0.0, 1.0, rng);
  Tensor<double> b = flavr::uniform_tensor<double>({3, 16, 16}, 0.0, 1.0, rng);
  EXPECT_DOUBLE_EQ(flavr::ssim(a, b), flavr::ssim(b, a));
}

TEST(Ssim, AntiCorrelatedBinaryImageIsNegative) {
  std::mt19937_64 rng(13);
  Tensor<double> gt({3, 16, 16});
  std::bernoulli_distribution coin(0.5);
  for (auto& v : gt) v = coin(rng) ? 1.0 : 0.0;
  Tensor<double> pred = gt;
  for (auto& v : pred) v = 1.0 - v;
  EXPECT_LT(flavr::ssim(pred, gt), 0.0);
}

TEST(Ssim, MatchesNaiveWindowOracle) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor<double> a = flavr::uniform_tensor<double>({3, 32, 32}, 0.0, 1.0, rng);
    Tensor<double> b = flavr::uniform_tensor<double>({3, 32, 32}, 0.0, 1.0, rng);
    EXPECT_NEAR(flavr::ssim(a, b), oracle::ssim_naive(a, b), 1e-10);
  }
}

TEST(Ssim, RejectsImagesSmallerThanTheWindow) {
  Tensor<double> tiny({3, 10, 16}, 0.5);
  EXPECT_THROW(flavr::ssim(tiny, tiny), flavr::ShapeError);
}

namespace {

flavr::NamedClip gray_clip(const std::string& name, float input_value, float target_value,
                           std::int64_t n = 3) {
  flavr::NamedClip clip;
  clip.name = name;
  for (std::int64_t t = 0; t < n; ++t)
    clip.seq.frames.push_back(
        flavr::make_image(16, 16, t % 2 == 0 ? input_value : target_value));
  return clip;
}

}  // namespace

TEST(Evaluate, ExactStubIsCappedAndSsimOne) {
  // k=2, C=1: inputs are frames 0 and 2, target is frame 1
  std::vector<flavr::NamedClip> clips{gray_clip("a", 0.25f, 0.75f)};
  // the stub reproduces the target exactly, pre-denormalization
  auto stub = [&](const Tensor<float>& in) {
    Tensor<float> out({1, 3, in.extent(3), in.extent(4)}, 0.75f - 0.25f);
    return std::vector<Tensor<float>>{out};
  };
  auto report = flavr::evaluate_with<float>(stub, clips, 2, 1);
  EXPECT_DOUBLE_EQ(report.mean_psnr, 99.0);
  EXPECT_DOUBLE_EQ(report.mean_ssim, 1.0);
}

TEST(Evaluate, ZeroNetOnMidGrayTargets) {
  // black inputs (means 0) with 0.5-gray targets: a zero network scores
  // 20*log10(1/0.5) ~ 6.02 dB
  std::vector<flavr::NamedClip> clips{gray_clip("a", 0.0f, 0.5f)};
  auto zero = [&](const Tensor<float>& in) {
    return std::vector<Tensor<float>>{Tensor<float>({1, 3, in.extent(3), in.extent(4)}, 0.0f)};
  };
  auto report = flavr::evaluate_with<float>(zero, clips, 2, 1);
  EXPECT_NEAR(report.mean_psnr, 20.0 * std::log10(2.0), 1e-4);
}

TEST(Evaluate, AggregateIsTheMeanOfPerClipValues) {
  // two clips with different sample counts: frames->samples->clips averaging
  // weights clips equally, not samples
  flavr::SynthSpec spec;
  spec.n_frames = 6;
  spec.vx = 1.0;
  flavr::NamedClip short_clip{"short", flavr::synth_motion(spec)};
  spec.n_frames = 12;
  spec.seed = 1;
  flavr::NamedClip long_clip{"long", flavr::synth_motion(spec)};
  std::vector<flavr::NamedClip> clips{long_clip, short_clip};

  auto gray = [&](const Tensor<float>& in) {
    return std::vector<Tensor<float>>{Tensor<float>({1, 3, in.extent(3), in.extent(4)}, 0.1f)};
  };
  auto report = flavr::evaluate_with<float>(gray, clips, 2, 1);
  ASSERT_EQ(report.clip_psnr.size(), 2u);
  const double mean_of_clips = (report.clip_psnr[0].second + report.clip_psnr[1].second) / 2.0;
  EXPECT_NEAR(report.mean_psnr, mean_of_clips, 1e-12);
  // the clips genuinely differ, so sample-weighted averaging would not match
  EXPECT_GT(std::abs(report.clip_psnr[0].second - report.clip_psnr[1].second), 1e-6);

  // CSV has one row per clip x offset plus the summary row
  const std::string csv = report.to_csv();
  std::int64_t lines = std::count(csv.begin(), csv.end(), '\n');
  EXPECT_EQ(lines, 1 + 2 + 1);  // header + rows + summary

  // per-target-offset breakdown covers each of the k-1 gap positions
  ASSERT_EQ(report.offset_psnr.size(), 1u);
  EXPECT_GT(report.offset_psnr[0], 0.0);
}
