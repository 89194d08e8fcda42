#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "flavr/image_io.hpp"
#include "flavr/tensor.hpp"

// Frame sequence I/O and the sampling procedure: sub-sample a clip with
// stride k, take 2C context frames around a gap, and use the k-1 frames
// inside the gap as targets.

namespace flavr {

struct FrameSequence {
  std::vector<Image> frames;
  double fps = 30.0;
};

// `anchor` is the 0-based index of the left frame of the target gap.
struct SampleSpec {
  std::int64_t k = 2;
  std::int64_t context = 2;
  std::int64_t anchor = 0;

  std::int64_t input_index(std::int64_t j) const { return anchor + (j - context + 1) * k; }
  std::int64_t first_input() const { return input_index(0); }
  std::int64_t last_input() const { return input_index(2 * context - 1); }
};

struct Sample {
  std::vector<Image> inputs;   // 2C frames, stride k apart
  std::vector<Image> targets;  // k-1 frames strictly inside the central gap
  std::array<double, 3> means{0.0, 0.0, 0.0};
  SampleSpec spec;
};

inline std::vector<SampleSpec> enumerate_samples(const FrameSequence& seq, std::int64_t k,
                                                 std::int64_t context) {
  if (k < 2) throw ConfigError("k must be >= 2");
  if (context < 1) throw ConfigError("context must be >= 1");
  const std::int64_t n = static_cast<std::int64_t>(seq.frames.size());
  std::vector<SampleSpec> specs;
  // anchors lacking full context on either side are dropped, not padded
  for (std::int64_t p = 0; p < n; ++p) {
    if (p - (context - 1) * k < 0) continue;
    if (p + context * k > n - 1) continue;
    specs.push_back(SampleSpec{k, context, p});
  }
  return specs;
}

inline Sample materialize(const FrameSequence& seq, const SampleSpec& spec) {
  const std::int64_t n = static_cast<std::int64_t>(seq.frames.size());
  if (spec.first_input() < 0 || spec.last_input() >= n)
    throw Error("sample spec reads outside the sequence (anchor " + std::to_string(spec.anchor) +
                ", " + std::to_string(n) + " frames)");
  Sample s;
  s.spec = spec;
  for (std::int64_t j = 0; j < 2 * spec.context; ++j)
    s.inputs.push_back(seq.frames[static_cast<std::size_t>(spec.input_index(j))]);
  for (std::int64_t t = spec.anchor + 1; t < spec.anchor + spec.k; ++t)
    s.targets.push_back(seq.frames[static_cast<std::size_t>(t)]);
  return s;
}

inline Image hflip_image(const Image& img) {
  Image out = make_image(img.height, img.width);
  for (std::int64_t y = 0; y < img.height; ++y)
    for (std::int64_t x = 0; x < img.width; ++x)
      for (std::int64_t c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y, img.width - 1 - x, c);
  return out;
}

// Both augmentations are involutions; reverse flips inputs and targets.
inline Sample augment(Sample s, bool reverse, bool hflip) {
  if (reverse) {
    std::reverse(s.inputs.begin(), s.inputs.end());
    std::reverse(s.targets.begin(), s.targets.end());
  }
  if (hflip) {
    for (auto& f : s.inputs) f = hflip_image(f);
    for (auto& f : s.targets) f = hflip_image(f);
  }
  return s;
}

// Subtracts the per-sample, per-channel mean of the 2C input frames from the
// inputs. Targets stay in [0,1]; predictions are compared after adding the
// means back.
inline void normalize(Sample& s) {
  std::array<long double, 3> acc{0.0L, 0.0L, 0.0L};
  std::int64_t count = 0;
  for (const auto& f : s.inputs) {
    for (std::int64_t i = 0; i < f.height * f.width; ++i)
      for (std::int64_t c = 0; c < 3; ++c)
        acc[static_cast<std::size_t>(c)] += f.rgb[static_cast<std::size_t>(i * 3 + c)];
    count += f.height * f.width;
  }
  for (std::size_t c = 0; c < 3; ++c)
    s.means[c] = count > 0 ? static_cast<double>(acc[c] / count) : 0.0;
  for (auto& f : s.inputs)
    for (std::int64_t i = 0; i < f.height * f.width; ++i)
      for (std::int64_t c = 0; c < 3; ++c)
        f.rgb[static_cast<std::size_t>(i * 3 + c)] -=
            static_cast<float>(s.means[static_cast<std::size_t>(c)]);
}

inline void denormalize(std::vector<Image>& frames, const std::array<double, 3>& means) {
  for (auto& f : frames)
    for (std::int64_t i = 0; i < f.height * f.width; ++i)
      for (std::int64_t c = 0; c < 3; ++c)
        f.rgb[static_cast<std::size_t>(i * 3 + c)] +=
            static_cast<float>(means[static_cast<std::size_t>(c)]);
}

// ---- tensors --------------------------------------------------------------

template <typename T>
Tensor<T> image_to_tensor(const Image& img) {
  Tensor<T> t({3, img.height, img.width});
  for (std::int64_t c = 0; c < 3; ++c)
    for (std::int64_t y = 0; y < img.height; ++y)
      for (std::int64_t x = 0; x < img.width; ++x)
        t[(c * img.height + y) * img.width + x] = static_cast<T>(img.at(y, x, c));
  return t;
}

template <typename T>
Image tensor_to_image(const Tensor<T>& t) {
  if (t.rank() != 3 || t.extent(0) != 3)
    throw ShapeError("tensor_to_image: expected [3,H,W], got " + shape_str(t.shape()));
  Image img = make_image(t.extent(1), t.extent(2));
  for (std::int64_t c = 0; c < 3; ++c)
    for (std::int64_t y = 0; y < img.height; ++y)
      for (std::int64_t x = 0; x < img.width; ++x)
        img.at(y, x, c) = static_cast<float>(t[(c * img.height + y) * img.width + x]);
  return img;
}

// Stacks the 2C input frames into [1, 3, 2C, H, W].
template <typename T>
Tensor<T> sample_input_tensor(const Sample& s) {
  const std::int64_t tn = static_cast<std::int64_t>(s.inputs.size());
  const std::int64_t h = s.inputs[0].height, w = s.inputs[0].width;
  Tensor<T> t({1, 3, tn, h, w});
  for (std::int64_t f = 0; f < tn; ++f) {
    const Image& img = s.inputs[static_cast<std::size_t>(f)];
    for (std::int64_t c = 0; c < 3; ++c)
      for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x)
          t[((c * tn + f) * h + y) * w + x] = static_cast<T>(img.at(y, x, c));
  }
  return t;
}

template <typename T>
void add_channel_means(Tensor<T>& frame, const std::array<double, 3>& means) {
  const std::int64_t B = frame.extent(0);
  const std::int64_t inner = frame.extent(2) * frame.extent(3);
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t c = 0; c < 3; ++c) {
      T* row = frame.data() + (b * 3 + c) * inner;
      for (std::int64_t i = 0; i < inner; ++i)
        row[i] += static_cast<T>(means[static_cast<std::size_t>(c)]);
    }
}

// ---- frame directories -----------------------------------------------------

inline std::string frame_filename(std::int64_t index_1based) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06lld.png", static_cast<long long>(index_1based));
  return buf;
}

inline FrameSequence load_frames(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (name.size() > 4 && name.substr(name.size() - 4) == ".png") names.push_back(name);
  }
  if (names.empty()) throw IoError("empty frame directory: " + dir);
  std::sort(names.begin(), names.end());  // lexicographic == temporal

  FrameSequence seq;
  for (const auto& name : names) {
    Image img = read_png((fs::path(dir) / name).string());
    if (!seq.frames.empty() &&
        (img.height != seq.frames[0].height || img.width != seq.frames[0].width))
      throw IoError("frame dimensions of " + name + " (" + std::to_string(img.width) + "x" +
                    std::to_string(img.height) + ") do not match the first frame");
    seq.frames.push_back(std::move(img));
  }
  const auto meta = fs::path(dir) / "meta.txt";
  if (fs::exists(meta)) {
    std::ifstream in(meta);
    std::string line;
    while (std::getline(in, line))
      if (line.rfind("fps=", 0) == 0) seq.fps = std::stod(line.substr(4));
  }
  return seq;
}

inline void save_frames(const FrameSequence& seq, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  for (std::size_t i = 0; i < seq.frames.size(); ++i)
    write_png((fs::path(dir) / frame_filename(static_cast<std::int64_t>(i) + 1)).string(),
              seq.frames[i]);
  std::ofstream meta(fs::path(dir) / "meta.txt");
  meta << "fps=" << seq.fps << "\n";
}

struct NamedClip {
  std::string name;
  FrameSequence seq;
};

// A dataset root is a directory of clip directories.
inline std::vector<NamedClip> load_dataset(const std::string& root) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw IoError("not a directory: " + root);
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory()) names.push_back(entry.path().filename().string());
  std::sort(names.begin(), names.end());
  std::vector<NamedClip> clips;
  for (const auto& name : names)
    clips.push_back(NamedClip{name, load_frames((fs::path(root) / name).string())});
  if (clips.empty()) throw IoError("no clip directories under " + root);
  return clips;
}

// ---- synthetic motion ------------------------------------------------------

enum class MotionKind { translate, sine, occlude };

inline MotionKind motion_from_string(const std::string& s) {
  if (s == "translate") return MotionKind::translate;
  if (s == "sine") return MotionKind::sine;
  if (s == "occlude") return MotionKind::occlude;
  throw ConfigError("unknown motion kind '" + s + "' (translate|sine|occlude)");
}

struct SynthSpec {
  MotionKind kind = MotionKind::translate;
  double vx = 1.0, vy = 0.0;      // pixels/frame (translate, occlude)
  double amplitude = 6.0;         // pixels (sine)
  double period = 16.0;           // frames (sine)
  std::int64_t n_frames = 16;
  std::int64_t height = 32, width = 32;
  std::int64_t square = 0;        // 0: height/4
  std::uint64_t seed = 0;
  bool flat_colors = false;       // solid square on solid background

  std::int64_t square_side() const { return square > 0 ? square : std::max<std::int64_t>(4, height / 4); }
};

// Top-left corner of the square at frame t. Exposed so tests can compare
// generated frames against the analytic trajectory.
inline std::pair<std::int64_t, std::int64_t> synth_position(const SynthSpec& spec,
                                                            std::int64_t t) {
  const std::int64_t side = spec.square_side();
  const double cy = (spec.height - side) / 2.0;
  switch (spec.kind) {
    case MotionKind::translate: {
      const double x0 = (spec.width - side) / 2.0 - spec.vx * (spec.n_frames - 1) / 2.0;
      const double y0 = (spec.height - side) / 2.0 - spec.vy * (spec.n_frames - 1) / 2.0;
      return {std::llround(x0 + spec.vx * t), std::llround(y0 + spec.vy * t)};
    }
    case MotionKind::sine: {
      const double cx = (spec.width - side) / 2.0;
      const double x = cx + spec.amplitude * std::sin(2.0 * M_PI * t / spec.period);
      return {std::llround(x), std::llround(cy)};
    }
    case MotionKind::occlude: {
      const double x0 = 0.0;
      return {std::llround(x0 + spec.vx * t), std::llround(cy)};
    }
  }
  return {0, 0};
}

// Second square of the occlude clip, moving the opposite way.
inline std::pair<std::int64_t, std::int64_t> synth_position2(const SynthSpec& spec,
                                                             std::int64_t t) {
  const std::int64_t side = spec.square_side();
  const double x0 = spec.width - side;
  const double cy = (spec.height - side) / 2.0;
  return {std::llround(x0 - spec.vx * t), std::llround(cy + spec.vy * t)};
}

inline FrameSequence synth_motion(const SynthSpec& spec) {
  if (spec.n_frames < 2) throw ConfigError("synth: need at least 2 frames");
  const std::int64_t side = spec.square_side();

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<float> bg_dist(0.05f, 0.25f), fg_dist(0.35f, 1.0f);
  Image background = make_image(spec.height, spec.width);
  for (auto& v : background.rgb) v = spec.flat_colors ? 0.1f : bg_dist(rng);
  std::vector<float> tex(static_cast<std::size_t>(side * side * 3));
  for (std::size_t i = 0; i < tex.size(); ++i)
    tex[i] = spec.flat_colors ? (i % 3 == 0 ? 0.9f : (i % 3 == 1 ? 0.5f : 0.2f)) : fg_dist(rng);
  std::vector<float> tex2(tex.size());
  for (std::size_t i = 0; i < tex2.size(); ++i)
    tex2[i] = spec.flat_colors ? (i % 3 == 2 ? 0.9f : 0.3f) : fg_dist(rng);

  auto draw = [&](Image& img, std::int64_t x0, std::int64_t y0, const std::vector<float>& t) {
    if (x0 < 0 || y0 < 0 || x0 + side > spec.width || y0 + side > spec.height)
      throw Error("synth: object leaves the frame at position (" + std::to_string(x0) + "," +
                  std::to_string(y0) + ")");
    for (std::int64_t dy = 0; dy < side; ++dy)
      for (std::int64_t dx = 0; dx < side; ++dx)
        for (std::int64_t c = 0; c < 3; ++c)
          img.at(y0 + dy, x0 + dx, c) = t[static_cast<std::size_t>((dy * side + dx) * 3 + c)];
  };

  FrameSequence seq;
  for (std::int64_t t = 0; t < spec.n_frames; ++t) {
    Image frame = background;
    const auto [x, y] = synth_position(spec, t);
    draw(frame, x, y, tex);
    if (spec.kind == MotionKind::occlude) {
      const auto [x2, y2] = synth_position2(spec, t);
      draw(frame, x2, y2, tex2);
    }
    seq.frames.push_back(std::move(frame));
  }
  return seq;
}

}  // namespace flavr
