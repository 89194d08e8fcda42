#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "flavr/tensor.hpp"
#include "flavr/threading.hpp"

// Direct 3D convolution, transposed convolution and their exact gradients.
// Every output element is accumulated sequentially in double (even for float
// tensors) by exactly one worker, so results are bitwise reproducible across
// runs and worker counts.

namespace flavr {

struct Conv3dSpec {
  std::int64_t in_channels = 1;
  std::int64_t out_channels = 1;
  std::array<std::int64_t, 3> kernel{1, 1, 1};  // t, h, w
  std::array<std::int64_t, 3> stride{1, 1, 1};
  std::array<std::int64_t, 3> pad{0, 0, 0};

  void validate() const {
    if (in_channels < 1 || out_channels < 1)
      throw ShapeError("conv spec: channel counts must be >= 1");
    for (int a = 0; a < 3; ++a) {
      if (kernel[a] < 1) throw ShapeError("conv spec: kernel extent of axis " + std::to_string(a) + " must be >= 1");
      if (stride[a] < 1) throw ShapeError("conv spec: stride of axis " + std::to_string(a) + " must be >= 1");
      if (pad[a] < 0) throw ShapeError("conv spec: padding of axis " + std::to_string(a) + " must be >= 0");
    }
  }

  std::array<std::int64_t, 3> out_extents(const std::array<std::int64_t, 3>& in) const {
    std::array<std::int64_t, 3> out{};
    for (int a = 0; a < 3; ++a) {
      out[a] = (in[a] + 2 * pad[a] - kernel[a]) / stride[a] + 1;
      if (in[a] + 2 * pad[a] < kernel[a] || out[a] < 1)
        throw ShapeError("conv3d: output extent of spatial axis " + std::to_string(a) +
                         " would be < 1 (in " + std::to_string(in[a]) + ", pad " +
                         std::to_string(pad[a]) + ", kernel " + std::to_string(kernel[a]) +
                         ", stride " + std::to_string(stride[a]) + ")");
    }
    return out;
  }

  std::array<std::int64_t, 3> transpose_out_extents(const std::array<std::int64_t, 3>& in) const {
    std::array<std::int64_t, 3> out{};
    for (int a = 0; a < 3; ++a) {
      out[a] = (in[a] - 1) * stride[a] - 2 * pad[a] + kernel[a];
      if (out[a] < 1)
        throw ShapeError("conv_transpose3d: output extent of spatial axis " + std::to_string(a) +
                         " would be < 1 (in " + std::to_string(in[a]) + ", pad " +
                         std::to_string(pad[a]) + ", kernel " + std::to_string(kernel[a]) +
                         ", stride " + std::to_string(stride[a]) + ")");
    }
    return out;
  }
};

template <typename T>
struct ConvGrads {
  Tensor<T> input;
  Tensor<T> weight;
  Tensor<T> bias;
};

namespace detail {

inline std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  const std::int64_t q = a / b;
  return (a % b != 0 && (a < 0) != (b < 0)) ? q - 1 : q;
}

inline std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return -floor_div(-a, b); }

inline void check_rank5(const Shape& s, const char* what) {
  if (s.size() != 5) throw ShapeError(std::string(what) + ": expected rank 5, got " + shape_str(s));
}

template <typename T>
void check_conv_args(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>* bias,
                     const Conv3dSpec& spec, bool transpose) {
  spec.validate();
  check_rank5(input.shape(), transpose ? "conv_transpose3d input" : "conv3d input");
  check_rank5(weight.shape(), transpose ? "conv_transpose3d weight" : "conv3d weight");
  // conv weight is [co, ci, t, h, w]; transposed weight is [ci, co, t, h, w]
  const std::int64_t w_out = transpose ? weight.extent(1) : weight.extent(0);
  const std::int64_t w_in = transpose ? weight.extent(0) : weight.extent(1);
  if (w_out != spec.out_channels)
    throw ShapeError("conv weight: output channel axis: got " + std::to_string(w_out) +
                     ", spec expects " + std::to_string(spec.out_channels));
  if (w_in != spec.in_channels)
    throw ShapeError("conv weight: input channel axis: got " + std::to_string(w_in) +
                     ", spec expects " + std::to_string(spec.in_channels));
  for (int a = 0; a < 3; ++a)
    if (weight.extent(2 + a) != spec.kernel[a])
      throw ShapeError("conv weight: kernel axis " + std::to_string(a) + ": got " +
                       std::to_string(weight.extent(2 + a)) + ", spec expects " +
                       std::to_string(spec.kernel[a]));
  if (input.extent(1) != spec.in_channels)
    throw ShapeError("conv input: channel axis (1): got " + std::to_string(input.extent(1)) +
                     ", spec expects " + std::to_string(spec.in_channels));
  if (bias && (bias->rank() != 1 || bias->extent(0) != spec.out_channels))
    throw ShapeError("conv bias: expected [" + std::to_string(spec.out_channels) + "], got " +
                     shape_str(bias->shape()));
}

// Cross-correlation core. `bias` may be null (gradient paths). Up to four
// output channels are produced per sweep: their accumulator chains are
// independent, which hides FMA latency while every individual output element
// keeps its sequential summation order.
template <typename T>
Tensor<T> conv3d_core(const Tensor<T>& input, const Tensor<T>& weight, const T* bias,
                      const Conv3dSpec& spec) {
  const std::int64_t B = input.extent(0), CI = spec.in_channels, CO = spec.out_channels;
  const std::int64_t TI = input.extent(2), HI = input.extent(3), WI = input.extent(4);
  const auto out3 = spec.out_extents({TI, HI, WI});
  const std::int64_t TO = out3[0], HO = out3[1], WO = out3[2];
  const auto [KT, KH, KW] = spec.kernel;
  const auto [ST, SH, SW] = spec.stride;
  const auto [PT, PH, PW] = spec.pad;

  Tensor<T> out({B, CO, TO, HO, WO});
  const T* in = input.data();
  const T* w = weight.data();
  T* o = out.data();
  const std::int64_t co_blocks = (CO + 3) / 4;

  parallel_for(B * co_blocks * TO, [&](std::int64_t begin, std::int64_t end) {
    for (std::int64_t row = begin; row < end; ++row) {
      const std::int64_t to = row % TO;
      const std::int64_t cb = (row / TO) % co_blocks;
      const std::int64_t b = row / (TO * co_blocks);
      const std::int64_t co0 = cb * 4;
      const std::int64_t nc = std::min<std::int64_t>(4, CO - co0);
      const std::int64_t t0 = to * ST - PT;
      const std::int64_t kt_lo = t0 < 0 ? -t0 : 0;
      const std::int64_t kt_hi = std::min(KT, TI - t0);
      for (std::int64_t ho = 0; ho < HO; ++ho) {
        const std::int64_t h0 = ho * SH - PH;
        const std::int64_t kh_lo = h0 < 0 ? -h0 : 0;
        const std::int64_t kh_hi = std::min(KH, HI - h0);
        for (std::int64_t wo = 0; wo < WO; ++wo) {
          const std::int64_t w0 = wo * SW - PW;
          const std::int64_t kw_lo = w0 < 0 ? -w0 : 0;
          const std::int64_t kw_hi = std::min(KW, WI - w0);
          double acc[4] = {0.0, 0.0, 0.0, 0.0};
          if (bias)
            for (std::int64_t u = 0; u < nc; ++u) acc[u] = static_cast<double>(bias[co0 + u]);
          for (std::int64_t ci = 0; ci < CI; ++ci) {
            const T* in_c = in + (b * CI + ci) * TI * HI * WI;
            const T* w_c = w + (co0 * CI + ci) * KT * KH * KW;
            const std::int64_t w_stride = CI * KT * KH * KW;
            for (std::int64_t kt = kt_lo; kt < kt_hi; ++kt) {
              const T* in_t = in_c + (t0 + kt) * HI * WI;
              const std::int64_t w_off = kt * KH * KW;
              for (std::int64_t kh = kh_lo; kh < kh_hi; ++kh) {
                const T* in_row = in_t + (h0 + kh) * WI + w0;
                const T* w_row = w_c + w_off + kh * KW;
                if (nc == 4) {
                  const T* w1 = w_row + w_stride;
                  const T* w2 = w_row + 2 * w_stride;
                  const T* w3 = w_row + 3 * w_stride;
                  for (std::int64_t kw = kw_lo; kw < kw_hi; ++kw) {
                    const double v = static_cast<double>(in_row[kw]);
                    acc[0] += v * static_cast<double>(w_row[kw]);
                    acc[1] += v * static_cast<double>(w1[kw]);
                    acc[2] += v * static_cast<double>(w2[kw]);
                    acc[3] += v * static_cast<double>(w3[kw]);
                  }
                } else {
                  for (std::int64_t u = 0; u < nc; ++u) {
                    const T* wu = w_row + u * w_stride;
                    double a = acc[u];
                    for (std::int64_t kw = kw_lo; kw < kw_hi; ++kw)
                      a += static_cast<double>(in_row[kw]) * static_cast<double>(wu[kw]);
                    acc[u] = a;
                  }
                }
              }
            }
          }
          for (std::int64_t u = 0; u < nc; ++u)
            o[(((b * CO + co0 + u) * TO + to) * HO + ho) * WO + wo] = static_cast<T>(acc[u]);
        }
      }
    }
  });
  return out;
}

// Adjoint of conv3d_core: gathers strided taps. The weight's leading axis
// always matches the gather input's channels — a transposed-conv weight
// [ci, co, t, h, w] applied forward, and a conv weight [co, ci, t, h, w]
// applied in reverse to backprop the conv's input, index identically.
template <typename T>
Tensor<T> transpose_gather_core(const Tensor<T>& input, const Tensor<T>& weight, const T* bias,
                                const Conv3dSpec& spec,
                                const std::array<std::int64_t, 3>& out3) {
  const std::int64_t B = input.extent(0), CI = input.extent(1), CO = weight.extent(1);
  const std::int64_t TI = input.extent(2), HI = input.extent(3), WI = input.extent(4);
  const std::int64_t TO = out3[0], HO = out3[1], WO = out3[2];
  const auto [KT, KH, KW] = spec.kernel;
  const auto [ST, SH, SW] = spec.stride;
  const auto [PT, PH, PW] = spec.pad;

  // Per-axis lists of valid (tap, source index) pairs for each output index.
  auto build_taps = [](std::int64_t out_n, std::int64_t in_n, std::int64_t k, std::int64_t s,
                       std::int64_t p) {
    std::vector<std::vector<std::pair<std::int64_t, std::int64_t>>> taps(
        static_cast<std::size_t>(out_n));
    for (std::int64_t idx = 0; idx < out_n; ++idx)
      for (std::int64_t kk = 0; kk < k; ++kk) {
        const std::int64_t num = idx + p - kk;
        if (num < 0 || num % s != 0) continue;
        const std::int64_t src = num / s;
        if (src >= in_n) continue;
        taps[static_cast<std::size_t>(idx)].emplace_back(kk, src);
      }
    return taps;
  };
  const auto t_taps = build_taps(TO, TI, KT, ST, PT);
  const auto h_taps = build_taps(HO, HI, KH, SH, PH);
  const auto w_taps = build_taps(WO, WI, KW, SW, PW);

  Tensor<T> out({B, CO, TO, HO, WO});
  const T* in = input.data();
  const T* w = weight.data();
  T* o = out.data();
  const std::int64_t kvol = KT * KH * KW;
  const std::int64_t co_blocks = (CO + 3) / 4;

  parallel_for(B * co_blocks * TO, [&](std::int64_t begin, std::int64_t end) {
    for (std::int64_t row = begin; row < end; ++row) {
      const std::int64_t to = row % TO;
      const std::int64_t cb = (row / TO) % co_blocks;
      const std::int64_t b = row / (TO * co_blocks);
      const std::int64_t co0 = cb * 4;
      const std::int64_t nc = std::min<std::int64_t>(4, CO - co0);
      for (std::int64_t ho = 0; ho < HO; ++ho) {
        for (std::int64_t wo = 0; wo < WO; ++wo) {
          double acc[4] = {0.0, 0.0, 0.0, 0.0};
          if (bias)
            for (std::int64_t u = 0; u < nc; ++u) acc[u] = static_cast<double>(bias[co0 + u]);
          for (std::int64_t ci = 0; ci < CI; ++ci) {
            const T* in_c = in + (b * CI + ci) * TI * HI * WI;
            const T* w_c = w + (ci * CO + co0) * kvol;  // channels co0..co0+nc are adjacent
            for (const auto& [kt, ti] : t_taps[static_cast<std::size_t>(to)]) {
              const T* in_t = in_c + ti * HI * WI;
              const std::int64_t w_off = kt * KH * KW;
              for (const auto& [kh, hi] : h_taps[static_cast<std::size_t>(ho)]) {
                const T* in_row = in_t + hi * WI;
                const T* w_row = w_c + w_off + kh * KW;
                if (nc == 4) {
                  const T* w1 = w_row + kvol;
                  const T* w2 = w_row + 2 * kvol;
                  const T* w3 = w_row + 3 * kvol;
                  for (const auto& [kw, wi] : w_taps[static_cast<std::size_t>(wo)]) {
                    const double v = static_cast<double>(in_row[wi]);
                    acc[0] += v * static_cast<double>(w_row[kw]);
                    acc[1] += v * static_cast<double>(w1[kw]);
                    acc[2] += v * static_cast<double>(w2[kw]);
                    acc[3] += v * static_cast<double>(w3[kw]);
                  }
                } else {
                  for (std::int64_t u = 0; u < nc; ++u) {
                    const T* wu = w_row + u * kvol;
                    double a = acc[u];
                    for (const auto& [kw, wi] : w_taps[static_cast<std::size_t>(wo)])
                      a += static_cast<double>(in_row[wi]) * static_cast<double>(wu[kw]);
                    acc[u] = a;
                  }
                }
              }
            }
          }
          for (std::int64_t u = 0; u < nc; ++u)
            o[(((b * CO + co0 + u) * TO + to) * HO + ho) * WO + wo] = static_cast<T>(acc[u]);
        }
      }
    }
  });
  return out;
}

// Weight gradient shared by conv3d (swap=false) and conv_transpose3d (swap=true).
// For each weight element, accumulates over batch and all aligned positions.
template <typename T>
Tensor<T> conv_weight_grad(const Tensor<T>& grad_out, const Tensor<T>& input,
                           const Conv3dSpec& spec, bool transpose) {
  // In both cases the correlation pairs a "wide" tensor (stride-1 walked) with
  // a "narrow" one (stride-s walked): forward conv correlates input with
  // grad_out; transposed conv correlates grad_out with input.
  const Tensor<T>& wide = transpose ? grad_out : input;
  const Tensor<T>& narrow = transpose ? input : grad_out;
  const std::int64_t B = wide.extent(0);
  const std::int64_t CW = wide.extent(1), CN = narrow.extent(1);
  const std::int64_t TW = wide.extent(2), HW_ = wide.extent(3), WW = wide.extent(4);
  const std::int64_t TN = narrow.extent(2), HN = narrow.extent(3), WN = narrow.extent(4);
  const auto [KT, KH, KW] = spec.kernel;
  const auto [ST, SH, SW] = spec.stride;
  const auto [PT, PH, PW] = spec.pad;

  // Output layout: conv [co, ci, t, h, w] = [narrow_ch, wide_ch, ...];
  // transpose [ci, co, t, h, w] = [narrow_ch, wide_ch, ...] as well, since for
  // the transposed op the narrow tensor is its input (ci) and the wide one its
  // grad_out (co). Both collapse to [cn, cw, t, h, w].
  Tensor<T> grad_w({CN, CW, KT, KH, KW});
  const T* wd = wide.data();
  const T* nr = narrow.data();
  T* gw = grad_w.data();
  const std::int64_t plane = TW * HW_ * WW;
  const std::int64_t cw_blocks = (CW + 3) / 4;

  parallel_for(CN * cw_blocks * KT, [&](std::int64_t begin, std::int64_t end) {
    for (std::int64_t row = begin; row < end; ++row) {
      const std::int64_t kt = row % KT;
      const std::int64_t cb = (row / KT) % cw_blocks;
      const std::int64_t cn = row / (KT * cw_blocks);
      const std::int64_t cw0 = cb * 4;
      const std::int64_t ncw = std::min<std::int64_t>(4, CW - cw0);
      // narrow index n walks its own extent; wide index = n*stride - pad + k
      const std::int64_t tn_lo = std::max<std::int64_t>(0, ceil_div(PT - kt, ST));
      const std::int64_t tn_hi = std::min(TN, floor_div(TW - 1 + PT - kt, ST) + 1);
      for (std::int64_t kh = 0; kh < KH; ++kh) {
        const std::int64_t hn_lo = std::max<std::int64_t>(0, ceil_div(PH - kh, SH));
        const std::int64_t hn_hi = std::min(HN, floor_div(HW_ - 1 + PH - kh, SH) + 1);
        for (std::int64_t kw = 0; kw < KW; ++kw) {
          const std::int64_t wn_lo = std::max<std::int64_t>(0, ceil_div(PW - kw, SW));
          const std::int64_t wn_hi = std::min(WN, floor_div(WW - 1 + PW - kw, SW) + 1);
          double acc[4] = {0.0, 0.0, 0.0, 0.0};
          for (std::int64_t b = 0; b < B; ++b) {
            const T* wd_c = wd + (b * CW + cw0) * plane;
            const T* nr_c = nr + (b * CN + cn) * TN * HN * WN;
            for (std::int64_t tn = tn_lo; tn < tn_hi; ++tn) {
              const std::int64_t wd_toff = (tn * ST - PT + kt) * HW_ * WW;
              const T* nr_t = nr_c + tn * HN * WN;
              for (std::int64_t hn = hn_lo; hn < hn_hi; ++hn) {
                const T* wd_row = wd_c + wd_toff + (hn * SH - PH + kh) * WW + (kw - PW);
                const T* nr_row = nr_t + hn * WN;
                if (ncw == 4) {
                  const T* wd1 = wd_row + plane;
                  const T* wd2 = wd_row + 2 * plane;
                  const T* wd3 = wd_row + 3 * plane;
                  for (std::int64_t wn = wn_lo; wn < wn_hi; ++wn) {
                    const double v = static_cast<double>(nr_row[wn]);
                    acc[0] += static_cast<double>(wd_row[wn * SW]) * v;
                    acc[1] += static_cast<double>(wd1[wn * SW]) * v;
                    acc[2] += static_cast<double>(wd2[wn * SW]) * v;
                    acc[3] += static_cast<double>(wd3[wn * SW]) * v;
                  }
                } else {
                  for (std::int64_t u = 0; u < ncw; ++u) {
                    const T* wdu = wd_row + u * plane;
                    double a = acc[u];
                    for (std::int64_t wn = wn_lo; wn < wn_hi; ++wn)
                      a += static_cast<double>(wdu[wn * SW]) * static_cast<double>(nr_row[wn]);
                    acc[u] = a;
                  }
                }
              }
            }
          }
          for (std::int64_t u = 0; u < ncw; ++u)
            gw[((cn * CW + cw0 + u) * KT + kt) * KH * KW + kh * KW + kw] = static_cast<T>(acc[u]);
        }
      }
    }
  });
  return grad_w;
}

template <typename T>
Tensor<T> channel_sum(const Tensor<T>& grad_out) {
  const std::int64_t B = grad_out.extent(0), C = grad_out.extent(1);
  const std::int64_t inner = grad_out.size() / (B * C);
  Tensor<T> gb({C});
  const T* g = grad_out.data();
  for (std::int64_t c = 0; c < C; ++c) {
    double acc = 0.0;
    for (std::int64_t b = 0; b < B; ++b) {
      const T* row = g + (b * C + c) * inner;
      for (std::int64_t i = 0; i < inner; ++i) acc += static_cast<double>(row[i]);
    }
    gb[c] = static_cast<T>(acc);
  }
  return gb;
}

}  // namespace detail

template <typename T>
Tensor<T> conv3d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 const Conv3dSpec& spec) {
  detail::check_conv_args(input, weight, &bias, spec, false);
  return detail::conv3d_core(input, weight, bias.data(), spec);
}

template <typename T>
ConvGrads<T> conv3d_backward(const Tensor<T>& grad_out, const Tensor<T>& input,
                             const Tensor<T>& weight, const Conv3dSpec& spec) {
  detail::check_conv_args(input, weight, static_cast<const Tensor<T>*>(nullptr), spec, false);
  const auto out3 = spec.out_extents({input.extent(2), input.extent(3), input.extent(4)});
  const Shape expect{input.extent(0), spec.out_channels, out3[0], out3[1], out3[2]};
  if (grad_out.shape() != expect)
    throw ShapeError("conv3d_backward: grad_out shape " + shape_str(grad_out.shape()) +
                     " does not match forward output " + shape_str(expect));
  ConvGrads<T> g;
  g.input = detail::transpose_gather_core(grad_out, weight, static_cast<const T*>(nullptr), spec,
                                          {input.extent(2), input.extent(3), input.extent(4)});
  g.weight = detail::conv_weight_grad(grad_out, input, spec, false);
  g.bias = detail::channel_sum(grad_out);
  return g;
}

template <typename T>
Tensor<T> conv_transpose3d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                           const Conv3dSpec& spec) {
  detail::check_conv_args(input, weight, &bias, spec, true);
  const auto out3 =
      spec.transpose_out_extents({input.extent(2), input.extent(3), input.extent(4)});
  return detail::transpose_gather_core(input, weight, bias.data(), spec, out3);
}

// 2D convolution as the t=1 case of conv3d.
struct Conv2dSpec {
  std::int64_t in_channels = 1;
  std::int64_t out_channels = 1;
  std::array<std::int64_t, 2> kernel{1, 1};
  std::array<std::int64_t, 2> stride{1, 1};
  std::array<std::int64_t, 2> pad{0, 0};

  Conv3dSpec as3d() const {
    return Conv3dSpec{in_channels,
                      out_channels,
                      {1, kernel[0], kernel[1]},
                      {1, stride[0], stride[1]},
                      {0, pad[0], pad[1]}};
  }
};

namespace detail {

template <typename T>
Tensor<T> lift_to_5d(const Tensor<T>& x, const char* what) {
  if (x.rank() != 4) throw ShapeError(std::string(what) + ": expected rank 4, got " + shape_str(x.shape()));
  return x.reshaped({x.extent(0), x.extent(1), 1, x.extent(2), x.extent(3)});
}

template <typename T>
Tensor<T> drop_unit_axis2(Tensor<T> x) {
  Shape s{x.extent(0), x.extent(1), x.extent(3), x.extent(4)};
  return std::move(x).reshaped(std::move(s));
}

}  // namespace detail

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 const Conv2dSpec& spec) {
  const auto in5 = detail::lift_to_5d(input, "conv2d input");
  const auto w5 = detail::lift_to_5d(weight, "conv2d weight");
  return detail::drop_unit_axis2(conv3d(in5, w5, bias, spec.as3d()));
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& grad_out, const Tensor<T>& input,
                             const Tensor<T>& weight, const Conv2dSpec& spec) {
  const auto g5 = detail::lift_to_5d(grad_out, "conv2d grad_out");
  const auto in5 = detail::lift_to_5d(input, "conv2d input");
  const auto w5 = detail::lift_to_5d(weight, "conv2d weight");
  ConvGrads<T> g5d = conv3d_backward(g5, in5, w5, spec.as3d());
  ConvGrads<T> g;
  g.input = detail::drop_unit_axis2(std::move(g5d.input));
  g.weight = detail::drop_unit_axis2(std::move(g5d.weight));
  g.bias = std::move(g5d.bias);
  return g;
}

template <typename T>
ConvGrads<T> conv_transpose3d_backward(const Tensor<T>& grad_out, const Tensor<T>& input,
                                       const Tensor<T>& weight, const Conv3dSpec& spec) {
  detail::check_conv_args(input, weight, static_cast<const Tensor<T>*>(nullptr), spec, true);
  const auto out3 =
      spec.transpose_out_extents({input.extent(2), input.extent(3), input.extent(4)});
  const Shape expect{input.extent(0), spec.out_channels, out3[0], out3[1], out3[2]};
  if (grad_out.shape() != expect)
    throw ShapeError("conv_transpose3d_backward: grad_out shape " + shape_str(grad_out.shape()) +
                     " does not match forward output " + shape_str(expect));
  ConvGrads<T> g;
  // d/dinput of the adjoint map is the forward correlation with the same
  // weight; its [ci, co, ...] layout already matches conv3d_core's
  // expectations with grad_out as input.
  Conv3dSpec back = spec;
  back.in_channels = spec.out_channels;
  back.out_channels = spec.in_channels;
  g.input = detail::conv3d_core(grad_out, weight, static_cast<const T*>(nullptr), back);
  g.weight = detail::conv_weight_grad(grad_out, input, spec, true);
  g.bias = detail::channel_sum(grad_out);
  return g;
}

}  // namespace flavr
