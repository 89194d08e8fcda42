// Batch command line for the frame interpolation toolkit: train, interpolate,
// eval, bench, gradcheck, synth. Exit codes: 0 success, 1 runtime failure,
// 2 usage or config error.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "flavr/bench.hpp"
#include "flavr/checkpoint.hpp"
#include "flavr/data.hpp"
#include "flavr/gradcheck.hpp"
#include "flavr/metrics.hpp"
#include "flavr/net.hpp"
#include "flavr/runconfig.hpp"
#include "flavr/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct UsageError : flavr::ConfigError {
  using flavr::ConfigError::ConfigError;
};

std::vector<std::int64_t> parse_i64_list(const std::string& csv) {
  std::vector<std::int64_t> out;
  std::istringstream is(csv);
  std::string item;
  while (std::getline(is, item, ',')) out.push_back(std::stoll(item));
  return out;
}

// ---- train ------------------------------------------------------------------

struct TrainArgs {
  std::string config_path;
  std::string out_override, dataset_override;
  std::int64_t k_override = 0, context_override = 0;
  int threads_override = 0;
  std::int64_t seed_override = -1;
};

int cmd_train(const TrainArgs& args) {
  flavr::RunConfig cfg = flavr::RunConfig::from_file(args.config_path);
  if (!args.out_override.empty()) cfg.out = args.out_override;
  if (!args.dataset_override.empty()) cfg.dataset = args.dataset_override;
  if (args.k_override > 0) cfg.net.k = args.k_override;
  if (args.context_override > 0) cfg.net.context = args.context_override;
  if (args.threads_override > 0) cfg.threads = args.threads_override;
  if (args.seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(args.seed_override);
  cfg.train.seed = cfg.seed;

  if (cfg.dataset.empty()) throw UsageError("config key 'dataset' is required for train");
  if (!fs::is_directory(cfg.dataset))
    throw UsageError("dataset: not a directory: " + cfg.dataset);
  if (!cfg.val_dataset.empty() && !fs::is_directory(cfg.val_dataset))
    throw UsageError("val_dataset: not a directory: " + cfg.val_dataset);

  flavr::set_worker_count(cfg.threads);
  auto train_clips = flavr::load_dataset(cfg.dataset);
  auto val_clips = cfg.val_dataset.empty() ? train_clips : flavr::load_dataset(cfg.val_dataset);

  fs::create_directories(cfg.out);
  std::ofstream(fs::path(cfg.out) / "resolved.cfg") << cfg.echo();

  auto net = flavr::Network<float>::build(cfg.net, cfg.seed);
  std::cout << "training on " << train_clips.size() << " clips, validating on "
            << val_clips.size() << " clips\n";
  flavr::FitResult result = flavr::fit(net, train_clips, val_clips, cfg.train, {}, &std::cout);

  std::ofstream(fs::path(cfg.out) / "log.csv") << flavr::train_log_csv(result.log);
  flavr::save_checkpoint((fs::path(cfg.out) / "best.flvr").string(), result.best);
  flavr::Checkpoint last = flavr::snapshot(net, cfg.train.max_epochs, result.best_val_psnr);
  flavr::save_checkpoint((fs::path(cfg.out) / "last.flvr").string(), last);
  std::cout << "best val PSNR " << result.best_val_psnr << " dB after " << result.steps
            << " steps; artifacts in " << cfg.out << "\n";
  return 0;
}

// ---- interpolate --------------------------------------------------------------

int cmd_interpolate(const std::string& ckpt_path, const std::string& in_dir,
                    const std::string& out_dir, std::int64_t k_override, int threads) {
  if (!fs::exists(ckpt_path)) throw UsageError("checkpoint not found: " + ckpt_path);
  if (!fs::is_directory(in_dir)) throw UsageError("input frame directory not found: " + in_dir);
  flavr::set_worker_count(threads);

  flavr::Checkpoint ckpt = flavr::load_checkpoint(ckpt_path);
  const std::int64_t k_train = ckpt.config.k;
  const std::int64_t k_out = k_override > 0 ? k_override : k_train;
  if (k_out < 2 || k_train % k_out != 0)
    throw UsageError("k=" + std::to_string(k_out) + " is not a divisor of the checkpoint's k=" +
                     std::to_string(k_train) + "; the head only provides subsets");

  auto net = flavr::Network<float>::build(ckpt.config, 0);
  flavr::restore(net, ckpt);

  flavr::FrameSequence seq = flavr::load_frames(in_dir);
  const std::int64_t n = static_cast<std::int64_t>(seq.frames.size());
  auto specs = flavr::enumerate_samples(seq, k_train, ckpt.config.context);

  fs::create_directories(out_dir);
  for (std::int64_t i = 0; i < n; ++i)
    flavr::write_png((fs::path(out_dir) / flavr::frame_filename(i * k_out + 1)).string(),
                     seq.frames[static_cast<std::size_t>(i)]);

  std::set<std::int64_t> covered;
  const std::int64_t stride = k_train / k_out;
  for (const auto& spec : specs) {
    flavr::Sample s = flavr::materialize(seq, spec);
    flavr::normalize(s);
    auto preds = net.forward(flavr::sample_input_tensor<float>(s));
    for (std::int64_t j = 1; j < k_out; ++j) {
      flavr::Tensor<float>& p = preds[static_cast<std::size_t>(j * stride - 1)];
      flavr::add_channel_means(p, s.means);
      flavr::Image img = flavr::tensor_to_image(
          flavr::clamp01(p).reshaped({3, p.extent(2), p.extent(3)}));
      flavr::write_png(
          (fs::path(out_dir) / flavr::frame_filename(spec.anchor * k_out + j + 1)).string(), img);
    }
    covered.insert(spec.anchor);
  }

  std::int64_t skipped = 0;
  for (std::int64_t p = 0; p + 1 < n; ++p)
    if (!covered.count(p)) ++skipped;
  std::cout << "wrote " << n << " originals and " << covered.size() * (k_out - 1)
            << " interpolated frames to " << out_dir << "; skipped " << skipped
            << " boundary gaps without full context\n";
  return 0;
}

// ---- eval ----------------------------------------------------------------------

int cmd_eval(const std::string& ckpt_path, const std::string& data_root,
             const std::string& out_csv, int threads) {
  if (!fs::exists(ckpt_path)) throw UsageError("checkpoint not found: " + ckpt_path);
  if (!fs::is_directory(data_root)) throw UsageError("dataset root not found: " + data_root);
  flavr::set_worker_count(threads);

  flavr::Checkpoint ckpt = flavr::load_checkpoint(ckpt_path);
  auto net = flavr::Network<float>::build(ckpt.config, 0);
  flavr::restore(net, ckpt);

  std::vector<flavr::NamedClip> clips;
  try {
    clips = flavr::load_dataset(data_root);
  } catch (const flavr::IoError& e) {
    throw UsageError(e.what());
  }
  flavr::EvalReport report = flavr::evaluate(net, clips);
  std::ofstream(out_csv) << report.to_csv();
  std::cout << "clips " << report.clip_psnr.size() << ", samples " << report.samples
            << ": mean PSNR " << report.mean_psnr << " dB, mean SSIM " << report.mean_ssim
            << "; per-frame table in " << out_csv << "\n";
  return 0;
}

// ---- bench ----------------------------------------------------------------------

struct BenchArgs {
  std::string config_path;
  std::string ks_csv = "2,4,8";
  std::int64_t size = 256;
  std::int64_t runs = 20, warmup = 3;
  std::int64_t context = 2;
  std::string widths_csv = "8,8,16,16,32";
  std::string out_csv;
  bool emit_json = false;
  int threads = 1;
  std::int64_t seed = 0;
};

int cmd_bench(const BenchArgs& args) {
  flavr::FlavrConfig base;
  if (!args.config_path.empty()) {
    base = flavr::RunConfig::from_file(args.config_path).net;
  } else {
    const auto w = parse_i64_list(args.widths_csv);
    if (w.size() != 5) throw UsageError("--widths needs 5 comma-separated values");
    std::copy(w.begin(), w.end(), base.widths.begin());
    base.context = args.context;
  }
  flavr::set_worker_count(args.threads);
  const auto ks = parse_i64_list(args.ks_csv);
  if (ks.empty() || ks[0] != 2) throw UsageError("--ks must start with 2 (the ratio baseline)");

  flavr::ScalingStudy study = flavr::scaling_study<float>(
      base, ks, args.size, args.size, args.warmup, args.runs, args.seed);

  if (!args.out_csv.empty()) std::ofstream(args.out_csv) << study.csv();
  if (args.emit_json) {
    json j;
    j["size"] = args.size;
    j["runs"] = args.runs;
    j["warmup"] = args.warmup;
    j["workers"] = flavr::worker_count();
    j["widths"] = base.widths;
    j["context"] = base.context;
    j["rows"] = json::array();
    for (std::size_t i = 0; i < study.rows.size(); ++i) {
      const auto& r = study.rows[i];
      const auto& rep = study.reports[i];
      json row;
      row["k"] = r.k;
      row["mean_s"] = r.mean_time;
      row["median_s"] = rep.median;
      row["stddev_s"] = rep.stddev;
      row["ratio_vs_k2"] = r.ratio_vs_k2;
      row["frames_per_second"] = rep.frames_per_second;
      row["times_s"] = rep.times;
      if (r.recursive_available) {
        row["recursive_mean_s"] = r.recursive_time;
        row["recursive_ratio"] = r.recursive_ratio;
      } else {
        row["recursive_mean_s"] = nullptr;
        row["recursive_ratio"] = nullptr;
      }
      j["rows"].push_back(row);
    }
    std::cout << j.dump(2) << "\n";
  } else {
    for (std::size_t i = 0; i < study.rows.size(); ++i) {
      std::cout << study.reports[i].summary() << "\n";
      const auto& r = study.rows[i];
      std::cout << "  single-shot ratio vs k=2: " << r.ratio_vs_k2;
      if (r.recursive_available && r.k > 2)
        std::cout << "; sequential-recursive baseline ratio: " << r.recursive_ratio << " ("
                  << (r.k - 1) << " passes)";
      std::cout << "\n";
    }
  }
  return 0;
}

// ---- gradcheck ---------------------------------------------------------------

int cmd_gradcheck(const std::string& config_path, std::int64_t probes, std::int64_t seed) {
  flavr::FlavrConfig cfg;
  if (!config_path.empty()) {
    cfg = flavr::RunConfig::from_file(config_path).net;
  } else {
    cfg.widths = {4, 4, 8, 8, 8};  // the reference tiny configuration
  }
  auto net = flavr::Network<double>::build(cfg, seed == -1 ? 21 : static_cast<std::uint64_t>(seed));
  const std::int64_t side = 2 * cfg.spatial_divisor();
  auto result = flavr::gradcheck(net, side, side, probes, 14);
  std::cout << "gradcheck: max rel err " << result.max_rel_err << " over " << result.probes
            << " probes (" << result.skipped << " kink-adjacent skipped)\n";
  return result.max_rel_err <= 1e-5 ? 0 : 1;
}

// ---- synth ----------------------------------------------------------------------

struct SynthArgs {
  std::string kind = "translate";
  std::string out_dir;
  std::int64_t clips = 8;
  std::int64_t frames = 16;
  std::int64_t height = 32, width = 32;
  double vx = 2.0, vy = 0.0;
  double amplitude = 6.0, period = 8.0;
  std::int64_t square = 0;
  std::int64_t seed = 0;
  bool flat = false;
  bool vary_direction = true;
};

int cmd_synth(const SynthArgs& args) {
  if (args.out_dir.empty()) throw UsageError("--out is required");
  flavr::SynthSpec spec;
  spec.kind = flavr::motion_from_string(args.kind);
  spec.vx = args.vx;
  spec.vy = args.vy;
  spec.amplitude = args.amplitude;
  spec.period = args.period;
  spec.n_frames = args.frames;
  spec.height = args.height;
  spec.width = args.width;
  spec.square = args.square;
  spec.flat_colors = args.flat;

  static const double dirs[8][2] = {{1, 0},  {0, 1},  {-1, 0},          {0, -1},
                                    {0.707, 0.707}, {-0.707, 0.707}, {0.707, -0.707}, {-0.707, -0.707}};
  const double mag = std::hypot(args.vx, args.vy);

  fs::create_directories(args.out_dir);
  for (std::int64_t i = 0; i < args.clips; ++i) {
    flavr::SynthSpec clip_spec = spec;
    clip_spec.seed = static_cast<std::uint64_t>(args.seed + i);
    if (spec.kind == flavr::MotionKind::translate && args.vary_direction) {
      clip_spec.vx = dirs[i % 8][0] * mag;
      clip_spec.vy = dirs[i % 8][1] * mag;
    }
    char name[32];
    std::snprintf(name, sizeof(name), "clip_%03lld", static_cast<long long>(i));
    flavr::save_frames(flavr::synth_motion(clip_spec), (fs::path(args.out_dir) / name).string());
  }
  std::cout << "wrote " << args.clips << " " << args.kind << " clips (" << args.frames
            << " frames, " << args.width << "x" << args.height << ") to " << args.out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spatio-temporal CNN video frame interpolation toolkit"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "train a model on a frame dataset");
  train->add_option("--config", train_args.config_path, "run configuration file")->required();
  train->add_option("--out", train_args.out_override, "output directory override");
  train->add_option("--data", train_args.dataset_override, "dataset root override");
  train->add_option("--seed", train_args.seed_override, "seed override");
  train->add_option("--k", train_args.k_override, "interpolation factor override");
  train->add_option("--context", train_args.context_override, "context frame count override");
  train->add_option("--threads", train_args.threads_override, "worker thread count");

  std::string itp_ckpt, itp_in, itp_out;
  std::int64_t itp_k = 0;
  int itp_threads = 1;
  auto* interpolate = app.add_subcommand("interpolate", "insert frames into a clip");
  interpolate->add_option("--ckpt", itp_ckpt, "checkpoint file")->required();
  interpolate->add_option("--in", itp_in, "input frame directory")->required();
  interpolate->add_option("--out", itp_out, "output frame directory")->required();
  interpolate->add_option("--k", itp_k, "emit a divisor of the trained factor");
  interpolate->add_option("--threads", itp_threads, "worker thread count");

  std::string eval_ckpt, eval_data, eval_out = "eval.csv";
  int eval_threads = 1;
  auto* eval = app.add_subcommand("eval", "PSNR/SSIM over a dataset");
  eval->add_option("--ckpt", eval_ckpt, "checkpoint file")->required();
  eval->add_option("--data", eval_data, "dataset root")->required();
  eval->add_option("--out", eval_out, "report CSV path");
  eval->add_option("--threads", eval_threads, "worker thread count");

  BenchArgs bench_args;
  auto* bench = app.add_subcommand("bench", "forward-pass timing and k-scaling study");
  bench->add_option("--config", bench_args.config_path, "take the architecture from a config file");
  bench->add_option("--ks", bench_args.ks_csv, "interpolation factors, first must be 2");
  bench->add_option("--size", bench_args.size, "square input resolution (512 mirrors the reference protocol)");
  bench->add_option("--runs", bench_args.runs, "measured runs per configuration");
  bench->add_option("--warmup", bench_args.warmup, "excluded warmup runs");
  bench->add_option("--context", bench_args.context, "context frame count");
  bench->add_option("--widths", bench_args.widths_csv, "encoder channel widths");
  bench->add_option("--out", bench_args.out_csv, "write the CSV table here");
  bench->add_option("--threads", bench_args.threads, "worker thread count");
  bench->add_option("--seed", bench_args.seed, "input tensor seed");
  bench->add_flag("--json", bench_args.emit_json, "emit the full report as JSON");

  std::string gc_config;
  std::int64_t gc_probes = 6, gc_seed = -1;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of the backward pass");
  gradcheck->add_option("--config", gc_config, "architecture config (default: tiny reference)");
  gradcheck->add_option("--probes", gc_probes, "probes per parameter tensor");
  gradcheck->add_option("--seed", gc_seed, "network init seed");

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "generate synthetic motion clips");
  synth->add_option("--kind", synth_args.kind, "translate|sine|occlude");
  synth->add_option("--out", synth_args.out_dir, "dataset root to create")->required();
  synth->add_option("--clips", synth_args.clips, "number of clips");
  synth->add_option("--frames", synth_args.frames, "frames per clip");
  synth->add_option("--height", synth_args.height, "frame height");
  synth->add_option("--width", synth_args.width, "frame width");
  synth->add_option("--velocity", [&synth_args](const std::vector<std::string>& v) {
    const auto parts = parse_i64_list(v[0]);
    if (parts.size() != 2) return false;
    synth_args.vx = static_cast<double>(parts[0]);
    synth_args.vy = static_cast<double>(parts[1]);
    return true;
  }, "velocity as vx,vy pixels/frame");
  synth->add_option("--amplitude", synth_args.amplitude, "sine amplitude in pixels");
  synth->add_option("--period", synth_args.period, "sine period in frames");
  synth->add_option("--square", synth_args.square, "square side (default height/4)");
  synth->add_option("--seed", synth_args.seed, "texture/base seed");
  synth->add_flag("--flat", synth_args.flat, "solid colors instead of textures");
  synth->add_flag("!--no-vary", synth_args.vary_direction, "do not rotate velocity across clips");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // --help exits 0; any parse problem is a usage error
  }

  try {
    if (*train) return cmd_train(train_args);
    if (*interpolate) return cmd_interpolate(itp_ckpt, itp_in, itp_out, itp_k, itp_threads);
    if (*eval) return cmd_eval(eval_ckpt, eval_data, eval_out, eval_threads);
    if (*bench) return cmd_bench(bench_args);
    if (*gradcheck) return cmd_gradcheck(gc_config, gc_probes, gc_seed);
    if (*synth) return cmd_synth(synth_args);
  } catch (const flavr::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
