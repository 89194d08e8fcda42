#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "flavr/data.hpp"
#include "flavr/net.hpp"
#include "flavr/ops.hpp"
#include "flavr/tensor.hpp"

namespace flavr {

inline constexpr double kPsnrCap = 99.0;  // reported for identical images

// 10*log10(1/MSE) with MAX=1; inputs are expected in [0,1].
template <typename T>
double psnr(const Tensor<T>& pred, const Tensor<T>& gt) {
  if (!pred.same_shape(gt))
    throw ShapeError("psnr: shape " + shape_str(pred.shape()) + " vs " + shape_str(gt.shape()));
  long double acc = 0.0L;
  for (std::int64_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(gt[i]);
    acc += static_cast<long double>(d) * d;
  }
  const double mse = static_cast<double>(acc / pred.size());
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

namespace detail {

inline std::vector<double> gaussian_window(int radius, double sigma) {
  std::vector<double> w(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    w[static_cast<std::size_t>(i + radius)] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    sum += w[static_cast<std::size_t>(i + radius)];
  }
  for (auto& v : w) v /= sum;
  return w;
}

// Separable Gaussian filter, valid region only: [H,W] -> [H-2r, W-2r].
inline std::vector<double> filter_valid(const std::vector<double>& img, std::int64_t h,
                                        std::int64_t w, const std::vector<double>& win) {
  const int r = static_cast<int>(win.size() / 2);
  const std::int64_t wo = w - 2 * r;
  std::vector<double> horiz(static_cast<std::size_t>(h * wo));
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < wo; ++x) {
      double acc = 0.0;
      for (int i = 0; i < static_cast<int>(win.size()); ++i)
        acc += win[static_cast<std::size_t>(i)] * img[static_cast<std::size_t>(y * w + x + i)];
      horiz[static_cast<std::size_t>(y * wo + x)] = acc;
    }
  const std::int64_t ho = h - 2 * r;
  std::vector<double> out(static_cast<std::size_t>(ho * wo));
  for (std::int64_t y = 0; y < ho; ++y)
    for (std::int64_t x = 0; x < wo; ++x) {
      double acc = 0.0;
      for (int i = 0; i < static_cast<int>(win.size()); ++i)
        acc += win[static_cast<std::size_t>(i)] * horiz[static_cast<std::size_t>((y + i) * wo + x)];
      out[static_cast<std::size_t>(y * wo + x)] = acc;
    }
  return out;
}

}  // namespace detail

// Structural similarity with an 11x11 Gaussian window (sigma 1.5), K1=0.01,
// K2=0.03, L=1, computed per RGB channel over valid windows and averaged.
template <typename T>
double ssim(const Tensor<T>& pred, const Tensor<T>& gt) {
  if (!pred.same_shape(gt))
    throw ShapeError("ssim: shape " + shape_str(pred.shape()) + " vs " + shape_str(gt.shape()));
  if (pred.rank() != 3 || pred.extent(0) != 3)
    throw ShapeError("ssim: expected [3,H,W], got " + shape_str(pred.shape()));
  const std::int64_t h = pred.extent(1), w = pred.extent(2);
  constexpr int kRadius = 5;
  if (h < 2 * kRadius + 1 || w < 2 * kRadius + 1)
    throw ShapeError("ssim: image " + std::to_string(w) + "x" + std::to_string(h) +
                     " is smaller than the 11x11 window");
  const auto win = detail::gaussian_window(kRadius, 1.5);
  constexpr double kC1 = 0.01 * 0.01;  // (K1*L)^2
  constexpr double kC2 = 0.03 * 0.03;  // (K2*L)^2

  double channel_sum = 0.0;
  for (std::int64_t c = 0; c < 3; ++c) {
    const std::size_t n = static_cast<std::size_t>(h * w);
    std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
    const T* p = pred.data() + c * h * w;
    const T* g = gt.data() + c * h * w;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = static_cast<double>(p[i]);
      y[i] = static_cast<double>(g[i]);
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const auto mx = detail::filter_valid(x, h, w, win);
    const auto my = detail::filter_valid(y, h, w, win);
    const auto mxx = detail::filter_valid(xx, h, w, win);
    const auto myy = detail::filter_valid(yy, h, w, win);
    const auto mxy = detail::filter_valid(xy, h, w, win);
    long double acc = 0.0L;
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double vx = mxx[i] - mx[i] * mx[i];
      const double vy = myy[i] - my[i] * my[i];
      const double cov = mxy[i] - mx[i] * my[i];
      const double num = (2.0 * mx[i] * my[i] + kC1) * (2.0 * cov + kC2);
      const double den = (mx[i] * mx[i] + my[i] * my[i] + kC1) * (vx + vy + kC2);
      acc += num / den;
    }
    channel_sum += static_cast<double>(acc / static_cast<long double>(mx.size()));
  }
  return channel_sum / 3.0;
}

struct EvalRow {
  std::string clip;
  std::int64_t offset = 0;  // 1..k-1, position inside the gap
  double psnr = 0.0;
  double ssim = 0.0;
};

struct EvalReport {
  std::vector<EvalRow> rows;  // per clip x offset, averaged over anchors
  std::vector<std::pair<std::string, double>> clip_psnr;
  std::vector<std::pair<std::string, double>> clip_ssim;
  std::vector<double> offset_psnr;  // per target offset, averaged over clips' samples
  std::vector<double> offset_ssim;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  std::int64_t samples = 0;

  std::string to_csv() const {
    std::ostringstream os;
    os.precision(10);
    os << "clip,offset,psnr,ssim\n";
    for (const auto& r : rows)
      os << r.clip << ',' << r.offset << ',' << r.psnr << ',' << r.ssim << '\n';
    os << "all,all," << mean_psnr << ',' << mean_ssim << '\n';
    return os.str();
  }
};

// Forward callable: (Tensor [1,3,2C,H,W]) -> k-1 frames [1,3,H,W], fed
// normalized inputs; outputs are de-normalized and clamped here. Metrics are
// averaged over the k-1 predicted frames, then over a clip's samples, then
// over clips.
template <typename T, typename ForwardFn>
EvalReport evaluate_with(ForwardFn&& forward, const std::vector<NamedClip>& clips, std::int64_t k,
                         std::int64_t context) {
  EvalReport report;
  const std::int64_t n_offsets = k - 1;
  report.offset_psnr.assign(static_cast<std::size_t>(n_offsets), 0.0);
  report.offset_ssim.assign(static_cast<std::size_t>(n_offsets), 0.0);
  std::int64_t total_samples = 0;

  for (const auto& clip : clips) {
    const auto specs = enumerate_samples(clip.seq, k, context);
    if (specs.empty()) continue;
    std::vector<double> off_psnr(static_cast<std::size_t>(n_offsets), 0.0);
    std::vector<double> off_ssim(static_cast<std::size_t>(n_offsets), 0.0);
    double clip_psnr_acc = 0.0, clip_ssim_acc = 0.0;

    for (const auto& spec : specs) {
      Sample s = materialize(clip.seq, spec);
      normalize(s);
      auto preds = forward(sample_input_tensor<T>(s));
      double ps = 0.0, ss = 0.0;
      for (std::int64_t j = 0; j < n_offsets; ++j) {
        Tensor<T>& pred = preds[static_cast<std::size_t>(j)];
        add_channel_means(pred, s.means);
        Tensor<T> frame =
            clamp01(pred).reshaped({3, pred.extent(2), pred.extent(3)});
        Tensor<T> target = image_to_tensor<T>(s.targets[static_cast<std::size_t>(j)]);
        const double p = psnr(frame, target);
        const double m = ssim(frame, target);
        ps += p;
        ss += m;
        off_psnr[static_cast<std::size_t>(j)] += p;
        off_ssim[static_cast<std::size_t>(j)] += m;
      }
      clip_psnr_acc += ps / n_offsets;
      clip_ssim_acc += ss / n_offsets;
    }

    const auto n = static_cast<double>(specs.size());
    report.clip_psnr.emplace_back(clip.name, clip_psnr_acc / n);
    report.clip_ssim.emplace_back(clip.name, clip_ssim_acc / n);
    for (std::int64_t j = 0; j < n_offsets; ++j) {
      report.rows.push_back(EvalRow{clip.name, j + 1, off_psnr[static_cast<std::size_t>(j)] / n,
                                    off_ssim[static_cast<std::size_t>(j)] / n});
      report.offset_psnr[static_cast<std::size_t>(j)] += off_psnr[static_cast<std::size_t>(j)];
      report.offset_ssim[static_cast<std::size_t>(j)] += off_ssim[static_cast<std::size_t>(j)];
    }
    total_samples += static_cast<std::int64_t>(specs.size());
  }

  if (report.clip_psnr.empty()) throw Error("evaluate: no clip yielded a valid sample");
  for (auto& [name, v] : report.clip_psnr) report.mean_psnr += v;
  for (auto& [name, v] : report.clip_ssim) report.mean_ssim += v;
  report.mean_psnr /= static_cast<double>(report.clip_psnr.size());
  report.mean_ssim /= static_cast<double>(report.clip_ssim.size());
  for (auto& v : report.offset_psnr) v /= static_cast<double>(total_samples);
  for (auto& v : report.offset_ssim) v /= static_cast<double>(total_samples);
  report.samples = total_samples;
  return report;
}

template <typename T>
EvalReport evaluate(Network<T>& net, const std::vector<NamedClip>& clips) {
  return evaluate_with<T>([&net](const Tensor<T>& in) { return net.forward(in); }, clips,
                          net.config().k, net.config().context);
}

}  // namespace flavr
