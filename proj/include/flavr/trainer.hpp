#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "flavr/checkpoint.hpp"
#include "flavr/data.hpp"
#include "flavr/metrics.hpp"
#include "flavr/net.hpp"

namespace flavr {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  double lr0 = 2e-4;
  std::int64_t batch_size = 4;
  std::int64_t max_epochs = 50;
  std::int64_t plateau_patience = 5;
  AdamConfig adam;
  std::uint64_t seed = 0;
  bool augment = true;
  double plateau_min_improve_db = 1e-3;  // improvement below this counts as flat

  void validate() const {
    if (lr0 <= 0) throw ConfigError("lr0 must be > 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
    if (plateau_patience < 1) throw ConfigError("plateau_patience must be >= 1");
  }
};

// ---- loss -------------------------------------------------------------------

template <typename T>
struct LossResult {
  double value = 0.0;
  std::vector<Tensor<T>> grads;  // d(loss)/d(pred) per frame
};

// Optional extra loss term (the perceptual-loss hook). Receives predictions
// and targets, accumulates its gradient into `grads`, returns its value.
template <typename T>
using FeatureLossHook = std::function<double(const std::vector<Tensor<T>>& preds,
                                             const std::vector<Tensor<T>>& targets,
                                             std::vector<Tensor<T>>& grads)>;

// Mean-per-batch sum over the k-1 frames; the per-frame norm is the mean over
// pixels and channels so the magnitude is resolution-independent.
template <typename T>
LossResult<T> frame_loss(const std::vector<Tensor<T>>& preds,
                         const std::vector<Tensor<T>>& targets, LossMode mode,
                         const FeatureLossHook<T>& hook = {}) {
  if (preds.size() != targets.size())
    throw ShapeError("loss: " + std::to_string(preds.size()) + " predictions vs " +
                     std::to_string(targets.size()) + " targets");
  if (preds.empty()) throw ShapeError("loss: no frames");
  LossResult<T> result;
  long double total = 0.0L;
  for (std::size_t j = 0; j < preds.size(); ++j) {
    const Tensor<T>& p = preds[j];
    const Tensor<T>& t = targets[j];
    if (!p.same_shape(t))
      throw ShapeError("loss: frame " + std::to_string(j) + " shape " + shape_str(p.shape()) +
                       " vs " + shape_str(t.shape()));
    const double scale = 1.0 / static_cast<double>(p.size());  // 1/(N*3*H*W)
    Tensor<T> g(p.shape());
    for (std::int64_t i = 0; i < p.size(); ++i) {
      const double d = static_cast<double>(p[i]) - static_cast<double>(t[i]);
      switch (mode) {
        case LossMode::l1:
        case LossMode::l1_feat:
          total += scale * std::abs(d);
          g[i] = static_cast<T>(scale * (d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0)));
          break;
        case LossMode::l2:
          total += scale * d * d;
          g[i] = static_cast<T>(scale * 2.0 * d);
          break;
        case LossMode::huber:  // delta = 1 on [0,1]-scaled residuals
          if (std::abs(d) <= 1.0) {
            total += scale * 0.5 * d * d;
            g[i] = static_cast<T>(scale * d);
          } else {
            total += scale * (std::abs(d) - 0.5);
            g[i] = static_cast<T>(scale * (d > 0 ? 1.0 : -1.0));
          }
          break;
      }
    }
    result.grads.push_back(std::move(g));
  }
  result.value = static_cast<double>(total);
  if (mode == LossMode::l1_feat && hook)
    result.value += hook(preds, targets, result.grads);
  return result;
}

// ---- Adam -------------------------------------------------------------------

template <typename T>
struct AdamState {
  std::vector<Tensor<T>> m, v;  // aligned with the parameter table order
  std::int64_t t = 0;

  template <typename Params>
  static AdamState init(Params& params) {
    AdamState st;
    for (auto& [name, p] : params) {
      st.m.emplace_back(p->value.shape());
      st.v.emplace_back(p->value.shape());
    }
    return st;
  }
};

template <typename T, typename Params>
void adam_step(Params& params, AdamState<T>& st, double lr, const AdamConfig& cfg) {
  if (st.m.size() != params.size()) throw ShapeError("adam: state does not match parameters");
  ++st.t;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Param<T>& p = *params[i].second;
    Tensor<T>& m = st.m[i];
    Tensor<T>& v = st.v[i];
    if (!m.same_shape(p.value))
      throw ShapeError("adam: state shape mismatch for " + params[i].first);
    for (std::int64_t j = 0; j < p.value.size(); ++j) {
      const double g = static_cast<double>(p.grad[j]);
      const double mj = cfg.beta1 * static_cast<double>(m[j]) + (1.0 - cfg.beta1) * g;
      const double vj = cfg.beta2 * static_cast<double>(v[j]) + (1.0 - cfg.beta2) * g * g;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double update = lr * (mj / bc1) / (std::sqrt(vj / bc2) + cfg.eps);
      p.value[j] = static_cast<T>(static_cast<double>(p.value[j]) - update);
    }
  }
}

// ---- batches ----------------------------------------------------------------

template <typename T>
struct Batch {
  Tensor<T> input;                            // [B, 3, 2C, H, W], normalized
  std::vector<Tensor<T>> targets;             // k-1 x [B, 3, H, W], raw [0,1]
  std::vector<std::array<double, 3>> means;   // per sample
};

template <typename T>
Batch<T> make_batch(const std::vector<Sample>& samples) {
  const std::int64_t B = static_cast<std::int64_t>(samples.size());
  const Sample& first = samples[0];
  const std::int64_t tn = static_cast<std::int64_t>(first.inputs.size());
  const std::int64_t h = first.inputs[0].height, w = first.inputs[0].width;
  const std::int64_t n_targets = static_cast<std::int64_t>(first.targets.size());

  Batch<T> batch;
  batch.input = Tensor<T>({B, 3, tn, h, w});
  for (std::int64_t j = 0; j < n_targets; ++j)
    batch.targets.emplace_back(Shape{B, 3, h, w});
  for (std::int64_t b = 0; b < B; ++b) {
    const Sample& s = samples[static_cast<std::size_t>(b)];
    batch.means.push_back(s.means);
    for (std::int64_t f = 0; f < tn; ++f) {
      const Image& img = s.inputs[static_cast<std::size_t>(f)];
      for (std::int64_t c = 0; c < 3; ++c)
        for (std::int64_t y = 0; y < h; ++y)
          for (std::int64_t x = 0; x < w; ++x)
            batch.input[(((b * 3 + c) * tn + f) * h + y) * w + x] =
                static_cast<T>(img.at(y, x, c));
    }
    for (std::int64_t j = 0; j < n_targets; ++j) {
      const Image& img = s.targets[static_cast<std::size_t>(j)];
      Tensor<T>& t = batch.targets[static_cast<std::size_t>(j)];
      for (std::int64_t c = 0; c < 3; ++c)
        for (std::int64_t y = 0; y < h; ++y)
          for (std::int64_t x = 0; x < w; ++x)
            t[((b * 3 + c) * h + y) * w + x] = static_cast<T>(img.at(y, x, c));
    }
  }
  return batch;
}

// De-normalizes a [B,3,H,W] prediction with each sample's own channel means.
template <typename T>
void add_batch_means(Tensor<T>& frame, const std::vector<std::array<double, 3>>& means) {
  const std::int64_t B = frame.extent(0);
  const std::int64_t inner = frame.extent(2) * frame.extent(3);
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t c = 0; c < 3; ++c) {
      T* row = frame.data() + (b * 3 + c) * inner;
      const T m = static_cast<T>(means[static_cast<std::size_t>(b)][static_cast<std::size_t>(c)]);
      for (std::int64_t i = 0; i < inner; ++i) row[i] += m;
    }
}

// ---- fit ----------------------------------------------------------------------

struct EpochRecord {
  std::int64_t epoch = 0;
  double train_loss = 0.0;
  double val_psnr = 0.0;
  double lr = 0.0;
};

using TrainLog = std::vector<EpochRecord>;

inline std::string train_log_csv(const TrainLog& log) {
  std::ostringstream os;
  os.precision(10);
  os << "epoch,train_loss,val_psnr,lr\n";
  for (const auto& r : log)
    os << r.epoch << ',' << r.train_loss << ',' << r.val_psnr << ',' << r.lr << '\n';
  return os.str();
}

struct FitResult {
  TrainLog log;
  Checkpoint best;  // parameters at the best validation epoch
  double best_val_psnr = 0.0;
  std::int64_t steps = 0;
};

template <typename T>
double validation_psnr(Network<T>& net, const std::vector<NamedClip>& clips) {
  const auto& cfg = net.config();
  double acc = 0.0;
  std::int64_t count = 0;
  for (const auto& clip : clips)
    for (const auto& spec : enumerate_samples(clip.seq, cfg.k, cfg.context)) {
      Sample s = materialize(clip.seq, spec);
      normalize(s);
      auto preds = net.forward(sample_input_tensor<T>(s));
      double sample_psnr = 0.0;
      for (std::size_t j = 0; j < preds.size(); ++j) {
        add_channel_means(preds[j], s.means);
        Tensor<T> frame = clamp01(preds[j])
                              .reshaped({3, preds[j].extent(2), preds[j].extent(3)});
        sample_psnr += psnr(frame, image_to_tensor<T>(s.targets[j]));
      }
      acc += sample_psnr / static_cast<double>(preds.size());
      ++count;
    }
  if (count == 0) throw Error("validation set yielded no samples");
  return acc / static_cast<double>(count);
}

// Epoch loop with the plateau schedule: when validation PSNR fails to improve
// by more than plateau_min_improve_db for plateau_patience consecutive
// epochs, the learning rate halves. The best-validation parameters are
// retained as a checkpoint.
template <typename T>
FitResult fit(Network<T>& net, const std::vector<NamedClip>& train_clips,
              const std::vector<NamedClip>& val_clips, const TrainConfig& tcfg,
              const FeatureLossHook<T>& hook = {}, std::ostream* progress = nullptr) {
  tcfg.validate();
  const FlavrConfig& cfg = net.config();

  std::vector<std::pair<std::size_t, SampleSpec>> index;
  for (std::size_t ci = 0; ci < train_clips.size(); ++ci)
    for (const auto& spec : enumerate_samples(train_clips[ci].seq, cfg.k, cfg.context))
      index.emplace_back(ci, spec);
  if (index.empty()) throw Error("training set yielded no samples");

  auto params = net.parameters();
  AdamState<T> adam = AdamState<T>::init(params);
  std::mt19937_64 rng(tcfg.seed);
  std::bernoulli_distribution coin(0.5);

  FitResult result;
  double lr = tcfg.lr0;
  double best = -1.0;
  std::int64_t flat_epochs = 0;

  for (std::int64_t epoch = 1; epoch <= tcfg.max_epochs; ++epoch) {
    std::vector<std::size_t> order(index.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);

    long double loss_acc = 0.0L;
    std::int64_t seen = 0;
    for (std::size_t pos = 0; pos < order.size(); pos += static_cast<std::size_t>(tcfg.batch_size)) {
      std::vector<Sample> samples;
      const std::size_t end =
          std::min(order.size(), pos + static_cast<std::size_t>(tcfg.batch_size));
      for (std::size_t i = pos; i < end; ++i) {
        const auto& [ci, spec] = index[order[i]];
        Sample s = materialize(train_clips[ci].seq, spec);
        if (tcfg.augment) s = augment(std::move(s), coin(rng), coin(rng));
        normalize(s);
        samples.push_back(std::move(s));
      }
      Batch<T> batch = make_batch<T>(samples);
      auto preds = net.forward(batch.input, /*train=*/true);
      for (auto& p : preds) add_batch_means(p, batch.means);
      LossResult<T> loss = frame_loss(preds, batch.targets, cfg.loss, hook);
      net.zero_grads();
      net.backward(loss.grads);
      adam_step(params, adam, lr, tcfg.adam);
      ++result.steps;
      loss_acc += static_cast<long double>(loss.value) * static_cast<double>(samples.size());
      seen += static_cast<std::int64_t>(samples.size());
    }

    const double val = validation_psnr(net, val_clips);
    EpochRecord rec{epoch, static_cast<double>(loss_acc / seen), val, lr};
    result.log.push_back(rec);
    if (progress)
      (*progress) << "epoch " << epoch << " train_loss " << rec.train_loss << " val_psnr " << val
                  << " lr " << lr << "\n";

    if (val > best + tcfg.plateau_min_improve_db) {
      best = val;
      flat_epochs = 0;
      result.best = snapshot(net, epoch, best);
      result.best.adam_step_count = adam.t;
    } else if (++flat_epochs >= tcfg.plateau_patience) {
      lr *= 0.5;
      flat_epochs = 0;
    }
  }
  result.best_val_psnr = best;
  if (result.best.tensors.empty()) result.best = snapshot(net, tcfg.max_epochs, best);
  return result;
}

// Adds the optimizer moments to a checkpoint as adam.m.* / adam.v.* entries.
template <typename T, typename Params>
void attach_moments(Checkpoint& ckpt, Params& params, const AdamState<T>& st) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    ckpt.tensors.emplace("adam.m." + params[i].first, st.m[i]);
    ckpt.tensors.emplace("adam.v." + params[i].first, st.v[i]);
  }
  ckpt.adam_step_count = st.t;
}

// Rebuilds optimizer state from a checkpoint that carries moments, so a run
// can resume mid-schedule.
template <typename T, typename Params>
AdamState<T> restore_moments(const Checkpoint& ckpt, Params& params) {
  AdamState<T> st;
  for (const auto& [name, p] : params) {
    const auto mit = ckpt.tensors.find("adam.m." + name);
    const auto vit = ckpt.tensors.find("adam.v." + name);
    if (mit == ckpt.tensors.end() || vit == ckpt.tensors.end())
      throw Error("checkpoint has no optimizer moments for " + name);
    st.m.push_back(std::get<Tensor<T>>(mit->second));
    st.v.push_back(std::get<Tensor<T>>(vit->second));
    if (!st.m.back().same_shape(p->value) || !st.v.back().same_shape(p->value))
      throw Error("optimizer moment shape mismatch for " + name);
  }
  st.t = ckpt.adam_step_count;
  return st;
}

}  // namespace flavr
