#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "flavr/conv.hpp"
#include "flavr/ops.hpp"
#include "flavr/tensor.hpp"

namespace flavr {

enum class FusionMode { none, add, concat };
enum class LossMode { l1, l2, huber, l1_feat };

inline const char* to_string(FusionMode m) {
  switch (m) {
    case FusionMode::none: return "none";
    case FusionMode::add: return "add";
    case FusionMode::concat: return "concat";
  }
  return "?";
}

inline const char* to_string(LossMode m) {
  switch (m) {
    case LossMode::l1: return "l1";
    case LossMode::l2: return "l2";
    case LossMode::huber: return "huber";
    case LossMode::l1_feat: return "l1+feat";
  }
  return "?";
}

inline FusionMode fusion_from_string(const std::string& s) {
  if (s == "none") return FusionMode::none;
  if (s == "add") return FusionMode::add;
  if (s == "concat") return FusionMode::concat;
  throw ConfigError("unknown fusion mode '" + s + "' (none|add|concat)");
}

inline LossMode loss_from_string(const std::string& s) {
  if (s == "l1") return LossMode::l1;
  if (s == "l2") return LossMode::l2;
  if (s == "huber") return LossMode::huber;
  if (s == "l1+feat") return LossMode::l1_feat;
  throw ConfigError("unknown loss mode '" + s + "' (l1|l2|huber|l1+feat)");
}

// Architecture and sampling hyperparameters. Defaults reproduce the standard
// 4-input, 18-layer-backbone interpolation network.
struct FlavrConfig {
  std::int64_t k = 2;        // interpolation factor; predicts k-1 frames
  std::int64_t context = 2;  // C; network input is 2C frames
  std::array<std::int64_t, 5> widths{64, 64, 128, 256, 512};  // conv1..conv5
  std::array<std::int64_t, 3> stem_kernel{3, 7, 7};
  std::array<std::int64_t, 3> block_kernel{3, 3, 3};
  std::array<bool, 5> spatial_stride{true, false, true, true, false};  // conv1..conv5
  std::array<std::int64_t, 5> temporal_stride{1, 1, 1, 1, 1};
  FusionMode fusion = FusionMode::concat;
  bool gating = true;
  std::int64_t fusion_kernel = 3;
  std::int64_t pred_kernel = 7;
  LossMode loss = LossMode::l1;

  std::int64_t input_frames() const { return 2 * context; }
  std::int64_t out_channels() const { return 3 * (k - 1); }

  std::int64_t spatial_divisor() const {
    std::int64_t d = 1;
    for (bool s : spatial_stride)
      if (s) d *= 2;
    return d;
  }

  void validate() const {
    if (k < 2) throw ConfigError("k must be >= 2");
    if (context < 1) throw ConfigError("context must be >= 1");
    for (auto w : widths)
      if (w < 1) throw ConfigError("channel widths must be >= 1");
    auto odd3 = [](const std::array<std::int64_t, 3>& ks, const char* what) {
      for (auto e : ks)
        if (e < 1 || e % 2 == 0)
          throw ConfigError(std::string(what) + " extents must be odd and >= 1");
    };
    odd3(stem_kernel, "stem_kernel");
    odd3(block_kernel, "block_kernel");
    if (fusion_kernel < 1 || fusion_kernel % 2 == 0)
      throw ConfigError("fusion_kernel must be odd and >= 1");
    if (pred_kernel < 1 || pred_kernel % 2 == 0)
      throw ConfigError("pred_kernel must be odd and >= 1");
    bool any_stride = false;
    for (bool s : spatial_stride) any_stride |= s;
    if (!any_stride) throw ConfigError("at least one block must have spatial stride 2");
    for (int i = 0; i < 5; ++i) {
      if (temporal_stride[i] != 1 && temporal_stride[i] != 2)
        throw ConfigError("temporal_stride must be 1 or 2");
      // the decoder undoes temporal striding where it undoes spatial striding,
      // so temporal stride is only allowed on spatially strided blocks
      if (temporal_stride[i] == 2 && !spatial_stride[i])
        throw ConfigError("temporal_stride 2 requires spatial stride at block conv" +
                          std::to_string(i + 1));
    }
  }
};

template <typename T>
struct Param {
  Tensor<T> value;
  Tensor<T> grad;

  Param() = default;
  explicit Param(Shape shape) : value(shape), grad(shape) {}

  void zero_grad() { grad.fill(T(0)); }
};

namespace detail {

template <typename T>
void init_uniform(Param<T>& p, double scale, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  for (auto& v : p.value) v = static_cast<T>(dist(rng));
}

// fan-in-scaled uniform: s = sqrt(1 / input taps per output element)
template <typename T>
void init_conv_param(Param<T>& w, Param<T>& b, std::int64_t out_channels, std::mt19937_64& rng) {
  const double fan_in = static_cast<double>(w.value.size() / out_channels);
  const double s = std::sqrt(1.0 / fan_in);
  init_uniform(w, s, rng);
  init_uniform(b, s, rng);
}

}  // namespace detail

// One convolution with optional trailing ReLU.
template <typename T>
struct Conv3dUnit {
  Param<T> w, b;
  Conv3dSpec spec;
  bool relu_after = true;
  Tensor<T> x_cache, out_cache;

  void init(std::int64_t ci, std::int64_t co, std::array<std::int64_t, 3> kernel,
            std::array<std::int64_t, 3> stride, std::array<std::int64_t, 3> pad, bool relu_,
            std::mt19937_64& rng) {
    spec = Conv3dSpec{ci, co, kernel, stride, pad};
    w = Param<T>({co, ci, kernel[0], kernel[1], kernel[2]});
    b = Param<T>({co});
    relu_after = relu_;
    detail::init_conv_param(w, b, co, rng);
  }

  Tensor<T> forward(const Tensor<T>& x, bool train) {
    Tensor<T> y = conv3d(x, w.value, b.value, spec);
    if (relu_after) y = relu(y);
    if (train) {
      x_cache = x;
      out_cache = y;
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& grad_out) {
    if (x_cache.empty()) throw Error("conv3d backward before forward");
    Tensor<T> g = relu_after ? relu_backward(grad_out, out_cache) : grad_out;
    ConvGrads<T> grads = conv3d_backward(g, x_cache, w.value, spec);
    add_in_place(w.grad, grads.weight);
    add_in_place(b.grad, grads.bias);
    return std::move(grads.input);
  }
};

template <typename T>
struct ConvT3dUnit {
  Param<T> w, b;  // [ci, co, t, h, w]
  Conv3dSpec spec;
  Tensor<T> x_cache, out_cache;

  void init(std::int64_t ci, std::int64_t co, std::array<std::int64_t, 3> kernel,
            std::array<std::int64_t, 3> stride, std::array<std::int64_t, 3> pad,
            std::mt19937_64& rng) {
    spec = Conv3dSpec{ci, co, kernel, stride, pad};
    w = Param<T>({ci, co, kernel[0], kernel[1], kernel[2]});
    b = Param<T>({co});
    detail::init_conv_param(w, b, co, rng);
  }

  Tensor<T> forward(const Tensor<T>& x, bool train) {
    Tensor<T> y = relu(conv_transpose3d(x, w.value, b.value, spec));
    if (train) {
      x_cache = x;
      out_cache = y;
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& grad_out) {
    if (x_cache.empty()) throw Error("conv_transpose3d backward before forward");
    Tensor<T> g = relu_backward(grad_out, out_cache);
    ConvGrads<T> grads = conv_transpose3d_backward(g, x_cache, w.value, spec);
    add_in_place(w.grad, grads.weight);
    add_in_place(b.grad, grads.bias);
    return std::move(grads.input);
  }
};

template <typename T>
struct Conv2dUnit {
  Param<T> w, b;
  Conv2dSpec spec;
  bool relu_after = true;
  Tensor<T> x_cache, out_cache;

  void init(std::int64_t ci, std::int64_t co, std::array<std::int64_t, 2> kernel,
            std::array<std::int64_t, 2> pad, bool relu_, std::mt19937_64& rng) {
    spec = Conv2dSpec{ci, co, kernel, {1, 1}, pad};
    w = Param<T>({co, ci, kernel[0], kernel[1]});
    b = Param<T>({co});
    relu_after = relu_;
    detail::init_conv_param(w, b, co, rng);
  }

  Tensor<T> forward(const Tensor<T>& x, bool train) {
    Tensor<T> y = conv2d(x, w.value, b.value, spec);
    if (relu_after) y = relu(y);
    if (train) {
      x_cache = x;
      out_cache = y;
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& grad_out) {
    if (x_cache.empty()) throw Error("conv2d backward before forward");
    Tensor<T> g = relu_after ? relu_backward(grad_out, out_cache) : grad_out;
    ConvGrads<T> grads = conv2d_backward(g, x_cache, w.value, spec);
    add_in_place(w.grad, grads.weight);
    add_in_place(b.grad, grads.bias);
    return std::move(grads.input);
  }
};

// Per-channel multiplicative attention: g = sigmoid(W . pool(f) + b), applied
// channel-wise to f. The gate values, not the raw sigmoid output, carry the
// feature map — a gate with saturated bias is an identity.
template <typename T>
Tensor<T> channel_gate(const Tensor<T>& f_in, const Tensor<T>& W, const Tensor<T>& b) {
  const std::int64_t C = f_in.extent(1);
  if (W.rank() != 2 || W.extent(0) != C || W.extent(1) != C)
    throw ShapeError("channel_gate: W must be [" + std::to_string(C) + "," + std::to_string(C) +
                     "], got " + shape_str(W.shape()));
  if (b.rank() != 1 || b.extent(0) != C)
    throw ShapeError("channel_gate: b must be [" + std::to_string(C) + "], got " +
                     shape_str(b.shape()));
  const Tensor<T> pooled = global_avg_pool(f_in);
  const std::int64_t B = f_in.extent(0);
  Tensor<T> gate({B, C});
  for (std::int64_t bi = 0; bi < B; ++bi)
    for (std::int64_t c = 0; c < C; ++c) {
      double acc = static_cast<double>(b[c]);
      for (std::int64_t c2 = 0; c2 < C; ++c2)
        acc += static_cast<double>(W[c * C + c2]) * static_cast<double>(pooled[bi * C + c2]);
      gate[bi * C + c] = stable_sigmoid(static_cast<T>(acc));
    }
  Tensor<T> out = f_in;
  const std::int64_t inner = f_in.size() / (B * C);
  for (std::int64_t bc = 0; bc < B * C; ++bc) {
    T* row = out.data() + bc * inner;
    const T gv = gate[bc];
    for (std::int64_t i = 0; i < inner; ++i) row[i] *= gv;
  }
  return out;
}

template <typename T>
struct GateUnit {
  Param<T> W, b;
  Tensor<T> x_cache, pooled_cache, gate_cache;

  void init(std::int64_t channels, std::mt19937_64& rng) {
    W = Param<T>({channels, channels});
    b = Param<T>({channels});
    const double s = std::sqrt(1.0 / static_cast<double>(channels));
    detail::init_uniform(W, s, rng);
    detail::init_uniform(b, s, rng);
  }

  Tensor<T> forward(const Tensor<T>& x, bool train) {
    Tensor<T> y = channel_gate(x, W.value, b.value);
    if (train) {
      x_cache = x;
      pooled_cache = global_avg_pool(x);
      const std::int64_t B = x.extent(0), C = x.extent(1);
      gate_cache = Tensor<T>({B, C});
      // recover the gate from y = g * x is ill-posed where x == 0; recompute
      for (std::int64_t bi = 0; bi < B; ++bi)
        for (std::int64_t c = 0; c < C; ++c) {
          double acc = static_cast<double>(b.value[c]);
          for (std::int64_t c2 = 0; c2 < C; ++c2)
            acc += static_cast<double>(W.value[c * C + c2]) *
                   static_cast<double>(pooled_cache[bi * C + c2]);
          gate_cache[bi * C + c] = stable_sigmoid(static_cast<T>(acc));
        }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& grad_out) {
    if (x_cache.empty()) throw Error("channel_gate backward before forward");
    const std::int64_t B = x_cache.extent(0), C = x_cache.extent(1);
    const std::int64_t inner = x_cache.size() / (B * C);

    Tensor<T> gx = grad_out;
    Tensor<T> dz({B, C});
    for (std::int64_t bc = 0; bc < B * C; ++bc) {
      const T* grow = grad_out.data() + bc * inner;
      const T* xrow = x_cache.data() + bc * inner;
      double dg = 0.0;
      for (std::int64_t i = 0; i < inner; ++i)
        dg += static_cast<double>(grow[i]) * static_cast<double>(xrow[i]);
      const T gv = gate_cache[bc];
      dz[bc] = static_cast<T>(dg) * gv * (T(1) - gv);
      T* gxrow = gx.data() + bc * inner;
      for (std::int64_t i = 0; i < inner; ++i) gxrow[i] *= gv;
    }

    // dW[c,c2] += sum_b dz[b,c] * pooled[b,c2]; db[c] += sum_b dz[b,c]
    for (std::int64_t c = 0; c < C; ++c) {
      for (std::int64_t c2 = 0; c2 < C; ++c2) {
        double acc = 0.0;
        for (std::int64_t bi = 0; bi < B; ++bi)
          acc += static_cast<double>(dz[bi * C + c]) * static_cast<double>(pooled_cache[bi * C + c2]);
        W.grad[c * C + c2] += static_cast<T>(acc);
      }
      double accb = 0.0;
      for (std::int64_t bi = 0; bi < B; ++bi) accb += static_cast<double>(dz[bi * C + c]);
      b.grad[c] += static_cast<T>(accb);
    }

    // route dz through the pooling: dpool[b,c2] = sum_c dz[b,c] W[c,c2]
    for (std::int64_t bi = 0; bi < B; ++bi)
      for (std::int64_t c2 = 0; c2 < C; ++c2) {
        double acc = 0.0;
        for (std::int64_t c = 0; c < C; ++c)
          acc += static_cast<double>(dz[bi * C + c]) * static_cast<double>(W.value[c * C + c2]);
        const T spread = static_cast<T>(acc / static_cast<double>(inner));
        T* gxrow = gx.data() + (bi * C + c2) * inner;
        for (std::int64_t i = 0; i < inner; ++i) gxrow[i] += spread;
      }
    return gx;
  }
};

// Residual unit of two 3x3x3 convolutions; the skip gets a 1x1x1 projection
// when the extents or widths change.
template <typename T>
struct ResBlock3d {
  Conv3dUnit<T> conv_a, conv_b;
  std::optional<Conv3dUnit<T>> proj;
  Tensor<T> out_cache;

  void init(std::int64_t ci, std::int64_t co, std::array<std::int64_t, 3> kernel,
            std::array<std::int64_t, 3> stride, std::mt19937_64& rng) {
    const std::array<std::int64_t, 3> pad{kernel[0] / 2, kernel[1] / 2, kernel[2] / 2};
    conv_a.init(ci, co, kernel, stride, pad, /*relu=*/true, rng);
    conv_b.init(co, co, kernel, {1, 1, 1}, pad, /*relu=*/false, rng);
    if (ci != co || stride != std::array<std::int64_t, 3>{1, 1, 1}) {
      proj.emplace();
      proj->init(ci, co, {1, 1, 1}, stride, {0, 0, 0}, /*relu=*/false, rng);
    }
  }

  Tensor<T> forward(const Tensor<T>& x, bool train) {
    Tensor<T> h = conv_a.forward(x, train);
    Tensor<T> y = conv_b.forward(h, train);
    add_in_place(y, proj ? proj->forward(x, train) : x);
    y = relu(y);
    if (train) out_cache = y;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& grad_out) {
    if (out_cache.empty()) throw Error("residual block backward before forward");
    Tensor<T> g = relu_backward(grad_out, out_cache);
    Tensor<T> gx = conv_a.backward(conv_b.backward(g));
    add_in_place(gx, proj ? proj->backward(g) : g);
    return gx;
  }
};

template <typename T>
class Network;

template <typename T>
using NamedParams = std::vector<std::pair<std::string, Param<T>*>>;

template <typename T>
class Network {
 public:
  Network() = default;

  static Network build(const FlavrConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Network net;
    net.cfg_ = cfg;
    std::mt19937_64 rng(seed);
    const auto& w = cfg.widths;
    const std::array<std::int64_t, 3> stem_pad{cfg.stem_kernel[0] / 2, cfg.stem_kernel[1] / 2,
                                               cfg.stem_kernel[2] / 2};

    auto block_stride = [&](int i) -> std::array<std::int64_t, 3> {
      const std::int64_t s = cfg.spatial_stride[static_cast<std::size_t>(i)] ? 2 : 1;
      return {cfg.temporal_stride[static_cast<std::size_t>(i)], s, s};
    };

    net.stem_.init(3, w[0], cfg.stem_kernel, block_stride(0), stem_pad, /*relu=*/true, rng);
    for (int i = 0; i < 4; ++i)
      net.blocks_[static_cast<std::size_t>(i)].init(w[static_cast<std::size_t>(i)],
                                                    w[static_cast<std::size_t>(i + 1)],
                                                    cfg.block_kernel, block_stride(i + 1), rng);

    // Decoder: one transposed stage per spatially strided block, in reverse.
    // Each stage's output width equals the encoder feature it fuses with, so
    // additive fusion always type-checks. The stem-level skip is fused before
    // the last upsample, and a trailing plain conv follows it to suppress
    // checkerboard artifacts.
    std::vector<int> strided;
    for (int i = 4; i >= 0; --i)
      if (cfg.spatial_stride[static_cast<std::size_t>(i)]) strided.push_back(i);

    std::int64_t running = w[4];
    for (std::size_t j = 0; j < strided.size(); ++j) {
      const int mirrored = strided[j];
      DecoderStage stage;
      stage.fuse_after = mirrored > 0 ? mirrored - 1 : -1;
      stage.fuse_before = mirrored == 0 ? 0 : -1;
      const std::int64_t up_out =
          mirrored > 0 ? w[static_cast<std::size_t>(mirrored - 1)] : w[0];
      const std::int64_t tstride = cfg.temporal_stride[static_cast<std::size_t>(mirrored)];
      const std::array<std::int64_t, 3> kernel{tstride == 2 ? 4 : 3, 4, 4};
      if (stage.fuse_before >= 0 && cfg.fusion == FusionMode::add && running != w[0])
        throw ConfigError("add fusion: decoder width " + std::to_string(running) +
                          " does not match stem skip width " + std::to_string(w[0]));
      std::int64_t up_in = running;
      if (stage.fuse_before >= 0 && cfg.fusion == FusionMode::concat) up_in += w[0];
      stage.up.init(up_in, up_out, kernel, {tstride, 2, 2}, {1, 1, 1}, rng);

      std::int64_t conv_in = up_out;
      if (stage.fuse_after >= 0 && cfg.fusion == FusionMode::concat)
        conv_in += w[static_cast<std::size_t>(stage.fuse_after)];
      // each stage conv lands on the width of the next fusion partner
      std::int64_t conv_out = w[0];
      if (j + 1 < strided.size() && strided[j + 1] > 0)
        conv_out = w[static_cast<std::size_t>(strided[j + 1] - 1)];
      const std::array<std::int64_t, 3> cpad{cfg.block_kernel[0] / 2, cfg.block_kernel[1] / 2,
                                             cfg.block_kernel[2] / 2};
      stage.conv.init(conv_in, conv_out, cfg.block_kernel, {1, 1, 1}, cpad, /*relu=*/true, rng);
      running = conv_out;
      net.dec_.push_back(std::move(stage));
    }

    const std::int64_t head_in = w[0] * cfg.input_frames();
    net.fusion_.init(head_in, w[0], {cfg.fusion_kernel, cfg.fusion_kernel},
                     {cfg.fusion_kernel / 2, cfg.fusion_kernel / 2}, /*relu=*/true, rng);
    net.pred_.init(w[0], cfg.out_channels(), {cfg.pred_kernel, cfg.pred_kernel},
                   {cfg.pred_kernel / 2, cfg.pred_kernel / 2}, /*relu=*/false, rng);

    if (cfg.gating) {
      net.gate_stem_.emplace();
      net.gate_stem_->init(w[0], rng);
      for (int i = 0; i < 4; ++i) {
        net.gate_blocks_[static_cast<std::size_t>(i)].emplace();
        net.gate_blocks_[static_cast<std::size_t>(i)]->init(w[static_cast<std::size_t>(i + 1)], rng);
      }
      for (auto& stage : net.dec_) {
        stage.gate_up.emplace();
        stage.gate_up->init(stage.up.spec.out_channels, rng);
        stage.gate_conv.emplace();
        stage.gate_conv->init(stage.conv.spec.out_channels, rng);
      }
    }
    return net;
  }

  const FlavrConfig& config() const { return cfg_; }
  bool encoder_only() const { return encoder_only_; }
  std::size_t forward_count() const { return forward_count_; }

  // Shapes of every intermediate 3D feature map from the last forward pass.
  const std::vector<Shape>& feature_shapes() const { return feature_shapes_; }

  // conv5 feature map: [B, widths[4], T', H', W']
  Tensor<T> encoder_features(const Tensor<T>& input, bool train = false) {
    check_input(input);
    std::array<Tensor<T>, 5> feats;
    encode(input, train, feats);
    return feats[4];
  }

  Tensor<T> forward_raw(const Tensor<T>& input, bool train = false) {
    if (encoder_only_) throw Error("forward on an encoder-only network; use encoder_features");
    check_input(input);
    ++forward_count_;
    feature_shapes_.clear();
    std::array<Tensor<T>, 5> enc;
    encode(input, train, enc);
    for (const auto& e : enc) feature_shapes_.push_back(e.shape());

    Tensor<T> d = enc[4];
    for (auto& stage : dec_) {
      if (stage.fuse_before >= 0) d = fuse(d, enc[static_cast<std::size_t>(stage.fuse_before)]);
      d = stage.up.forward(d, train);
      if (stage.gate_up) d = stage.gate_up->forward(d, train);
      if (stage.fuse_after >= 0) d = fuse(d, enc[static_cast<std::size_t>(stage.fuse_after)]);
      d = stage.conv.forward(d, train);
      if (stage.gate_conv) d = stage.gate_conv->forward(d, train);
      feature_shapes_.push_back(d.shape());
    }

    // temporal fusion: fold the time axis into channels for the 2D head
    head_in_shape_ = d.shape();
    Tensor<T> h = std::move(d).reshaped(
        {head_in_shape_[0], head_in_shape_[1] * head_in_shape_[2], head_in_shape_[3],
         head_in_shape_[4]});
    h = fusion_.forward(h, train);
    return pred_.forward(h, train);
  }

  std::vector<Tensor<T>> forward(const Tensor<T>& input, bool train = false) {
    Tensor<T> raw = forward_raw(input, train);
    return split(raw, 1, std::vector<std::int64_t>(static_cast<std::size_t>(cfg_.k - 1), 3));
  }

  void backward(const std::vector<Tensor<T>>& frame_grads) {
    if (frame_grads.size() != static_cast<std::size_t>(cfg_.k - 1))
      throw ShapeError("backward: expected " + std::to_string(cfg_.k - 1) + " frame grads, got " +
                       std::to_string(frame_grads.size()));
    std::vector<const Tensor<T>*> ptrs;
    ptrs.reserve(frame_grads.size());
    for (const auto& g : frame_grads) ptrs.push_back(&g);
    backward_raw(concat<T>(ptrs, 1));
  }

  void backward_raw(const Tensor<T>& grad_raw) {
    if (encoder_only_) throw Error("backward on an encoder-only network");
    if (head_in_shape_.empty()) throw Error("backward before forward");
    Tensor<T> g = fusion_.backward(pred_.backward(grad_raw));
    g = std::move(g).reshaped(head_in_shape_);

    std::array<Tensor<T>, 5> g_enc;
    for (auto it = dec_.rbegin(); it != dec_.rend(); ++it) {
      DecoderStage& stage = *it;
      if (stage.gate_conv) g = stage.gate_conv->backward(g);
      g = stage.conv.backward(g);
      if (stage.fuse_after >= 0)
        g = unfuse(std::move(g), stage.up.spec.out_channels,
                   g_enc[static_cast<std::size_t>(stage.fuse_after)]);
      if (stage.gate_up) g = stage.gate_up->backward(g);
      g = stage.up.backward(g);
      if (stage.fuse_before >= 0) {
        const std::int64_t main_ch = g.extent(1) - fuse_extra_channels();
        g = unfuse(std::move(g), main_ch, g_enc[static_cast<std::size_t>(stage.fuse_before)]);
      }
    }
    accumulate(g_enc[4], std::move(g));

    for (int i = 3; i >= 0; --i) {
      Tensor<T> gi = std::move(g_enc[static_cast<std::size_t>(i + 1)]);
      if (gate_blocks_[static_cast<std::size_t>(i)])
        gi = gate_blocks_[static_cast<std::size_t>(i)]->backward(gi);
      gi = blocks_[static_cast<std::size_t>(i)].backward(gi);
      accumulate(g_enc[static_cast<std::size_t>(i)], std::move(gi));
    }
    Tensor<T> g0 = std::move(g_enc[0]);
    if (gate_stem_) g0 = gate_stem_->backward(g0);
    stem_.backward(g0);
  }

  void zero_grads() {
    for (auto& [name, p] : parameters()) p->zero_grad();
  }

  NamedParams<T> parameters() {
    NamedParams<T> out;
    auto push_conv = [&out](const std::string& name, auto& unit) {
      out.emplace_back(name + ".weight", &unit.w);
      out.emplace_back(name + ".bias", &unit.b);
    };
    push_conv("encoder.stem", stem_);
    for (int i = 0; i < 4; ++i) {
      auto& blk = blocks_[static_cast<std::size_t>(i)];
      const std::string base = "encoder.conv" + std::to_string(i + 2);
      push_conv(base + ".0", blk.conv_a);
      push_conv(base + ".1", blk.conv_b);
      if (blk.proj) push_conv(base + ".proj", *blk.proj);
    }
    if (!encoder_only_) {
      for (std::size_t j = 0; j < dec_.size(); ++j) {
        push_conv("decoder.up" + std::to_string(j + 1), dec_[j].up);
        push_conv("decoder.conv" + std::to_string(j + 1), dec_[j].conv);
      }
      push_conv("head.fusion", fusion_);
      push_conv("head.pred", pred_);
    }
    auto push_gate = [&out](const std::string& name, std::optional<GateUnit<T>>& g) {
      if (!g) return;
      out.emplace_back(name + ".W", &g->W);
      out.emplace_back(name + ".b", &g->b);
    };
    push_gate("gate.enc.stem", gate_stem_);
    for (int i = 0; i < 4; ++i)
      push_gate("gate.enc.conv" + std::to_string(i + 2), gate_blocks_[static_cast<std::size_t>(i)]);
    if (!encoder_only_)
      for (std::size_t j = 0; j < dec_.size(); ++j) {
        push_gate("gate.dec.up" + std::to_string(j + 1), dec_[j].gate_up);
        push_gate("gate.dec.conv" + std::to_string(j + 1), dec_[j].gate_conv);
      }
    return out;
  }

  // Encoder with shared parameter values; produces the conv5 feature map.
  Network export_encoder() const {
    Network enc;
    enc.cfg_ = cfg_;
    enc.encoder_only_ = true;
    enc.stem_ = stem_;
    enc.blocks_ = blocks_;
    enc.gate_stem_ = gate_stem_;
    enc.gate_blocks_ = gate_blocks_;
    return enc;
  }

  // Structural description, one line per connection; used to verify wiring.
  std::vector<std::string> wiring() const {
    std::vector<std::string> lines;
    auto conv_line = [](const std::string& name, const Conv3dSpec& s, const char* kind) {
      return name + ": " + kind + " " + std::to_string(s.in_channels) + "->" +
             std::to_string(s.out_channels);
    };
    lines.push_back(conv_line("encoder.stem", stem_.spec, "conv3d"));
    for (int i = 0; i < 4; ++i)
      lines.push_back(conv_line("encoder.conv" + std::to_string(i + 2),
                                blocks_[static_cast<std::size_t>(i)].conv_a.spec, "resblock3d"));
    for (std::size_t j = 0; j < dec_.size(); ++j) {
      const auto& st = dec_[j];
      if (st.fuse_before >= 0 && cfg_.fusion != FusionMode::none)
        lines.push_back("decoder.fuse_pre" + std::to_string(j + 1) + ": " +
                        to_string(cfg_.fusion) + " encoder.out" + std::to_string(st.fuse_before));
      lines.push_back(conv_line("decoder.up" + std::to_string(j + 1), st.up.spec, "convtranspose3d"));
      if (st.fuse_after >= 0 && cfg_.fusion != FusionMode::none)
        lines.push_back("decoder.fuse" + std::to_string(j + 1) + ": " + to_string(cfg_.fusion) +
                        " encoder.out" + std::to_string(st.fuse_after));
      lines.push_back(conv_line("decoder.conv" + std::to_string(j + 1), st.conv.spec, "conv3d"));
    }
    lines.push_back("head.fusion: conv2d " + std::to_string(fusion_.spec.in_channels) + "->" +
                    std::to_string(fusion_.spec.out_channels));
    lines.push_back("head.pred: conv2d " + std::to_string(pred_.spec.in_channels) + "->" +
                    std::to_string(pred_.spec.out_channels));
    return lines;
  }

 private:
  struct DecoderStage {
    ConvT3dUnit<T> up;
    Conv3dUnit<T> conv;
    int fuse_after = -1;   // encoder output index combined after the upsample
    int fuse_before = -1;  // encoder output index combined before the upsample
    std::optional<GateUnit<T>> gate_up, gate_conv;
  };

  void check_input(const Tensor<T>& input) const {
    if (input.rank() != 5)
      throw ShapeError("network input: expected rank 5 [B,3,2C,H,W], got " +
                       shape_str(input.shape()));
    if (input.extent(1) != 3)
      throw ShapeError("network input: channel axis (1) must be 3, got " +
                       std::to_string(input.extent(1)));
    if (input.extent(2) != cfg_.input_frames())
      throw ShapeError("network input: temporal axis (2) must be 2C=" +
                       std::to_string(cfg_.input_frames()) + ", got " +
                       std::to_string(input.extent(2)));
    const std::int64_t div = cfg_.spatial_divisor();
    if (input.extent(3) % div != 0 || input.extent(4) % div != 0)
      throw ShapeError("network input: H and W must be divisible by " + std::to_string(div) +
                       ", got " + std::to_string(input.extent(3)) + "x" +
                       std::to_string(input.extent(4)));
  }

  void encode(const Tensor<T>& input, bool train, std::array<Tensor<T>, 5>& feats) {
    Tensor<T> x = stem_.forward(input, train);
    if (gate_stem_) x = gate_stem_->forward(x, train);
    feats[0] = x;
    for (int i = 0; i < 4; ++i) {
      x = blocks_[static_cast<std::size_t>(i)].forward(x, train);
      if (gate_blocks_[static_cast<std::size_t>(i)])
        x = gate_blocks_[static_cast<std::size_t>(i)]->forward(x, train);
      feats[static_cast<std::size_t>(i + 1)] = x;
    }
  }

  Tensor<T> fuse(Tensor<T> main, const Tensor<T>& skip) const {
    switch (cfg_.fusion) {
      case FusionMode::none: return main;
      case FusionMode::add: add_in_place(main, skip); return main;
      case FusionMode::concat: return concat(main, skip, 1);
    }
    return main;
  }

  std::int64_t fuse_extra_channels() const {
    return cfg_.fusion == FusionMode::concat ? cfg_.widths[0] : 0;
  }

  // Reverses fuse(): returns the main-path grad, accumulates the skip grad.
  Tensor<T> unfuse(Tensor<T> g, std::int64_t main_channels, Tensor<T>& skip_grad) const {
    switch (cfg_.fusion) {
      case FusionMode::none: return g;
      case FusionMode::add: accumulate(skip_grad, Tensor<T>(g)); return g;
      case FusionMode::concat: {
        auto parts = split(g, 1, {main_channels, g.extent(1) - main_channels});
        accumulate(skip_grad, std::move(parts[1]));
        return std::move(parts[0]);
      }
    }
    return g;
  }

  static void accumulate(Tensor<T>& target, Tensor<T> g) {
    if (target.empty())
      target = std::move(g);
    else
      add_in_place(target, g);
  }

  FlavrConfig cfg_;
  bool encoder_only_ = false;
  Conv3dUnit<T> stem_;
  std::array<ResBlock3d<T>, 4> blocks_;
  std::vector<DecoderStage> dec_;
  Conv2dUnit<T> fusion_, pred_;
  std::optional<GateUnit<T>> gate_stem_;
  std::array<std::optional<GateUnit<T>>, 4> gate_blocks_;
  Shape head_in_shape_;
  std::vector<Shape> feature_shapes_;
  std::size_t forward_count_ = 0;
};

template <typename T>
Network<T> build(const FlavrConfig& cfg, std::uint64_t seed) {
  return Network<T>::build(cfg, seed);
}

}  // namespace flavr
