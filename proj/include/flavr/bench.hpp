#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "flavr/net.hpp"
#include "flavr/threading.hpp"

// Forward-pass-only timing: inputs are materialized before the timed region,
// warmup iterations are excluded, and the monotonic clock brackets nothing
// but Network::forward_raw.

namespace flavr {

struct BenchReport {
  std::int64_t k = 2;
  std::int64_t context = 2;
  std::int64_t height = 256;
  std::int64_t width = 256;
  std::array<std::int64_t, 5> widths{};
  std::int64_t warmup = 0;
  int workers = 1;
  std::vector<double> times;  // seconds per measured run
  double mean = 0.0;
  double median = 0.0;
  double stddev = 0.0;
  double frames_per_second = 0.0;  // (k-1) predicted frames per second

  std::int64_t runs() const { return static_cast<std::int64_t>(times.size()); }

  void finalize() {
    std::vector<double> sorted = times;
    std::sort(sorted.begin(), sorted.end());
    const auto n = sorted.size();
    median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    double acc = 0.0;
    for (double t : times) acc += t;
    mean = acc / static_cast<double>(n);
    double var = 0.0;
    for (double t : times) var += (t - mean) * (t - mean);
    stddev = n > 1 ? std::sqrt(var / static_cast<double>(n - 1)) : 0.0;
    frames_per_second = static_cast<double>(k - 1) / mean;
  }

  std::string summary() const {
    std::ostringstream os;
    os.precision(4);
    os << "k=" << k << " C=" << context << " " << width << "x" << height << " workers=" << workers
       << ": mean " << mean * 1e3 << " ms, median " << median * 1e3 << " ms, stddev "
       << stddev * 1e3 << " ms over " << runs() << " runs (" << warmup << " warmup), "
       << frames_per_second << " frames/s";
    return os.str();
  }
};

template <typename T>
BenchReport time_forward(Network<T>& net, std::int64_t height, std::int64_t width,
                         std::int64_t warmup, std::int64_t runs, std::uint64_t seed = 0) {
  if (runs < 1) throw ConfigError("bench: runs must be >= 1");
  const FlavrConfig& cfg = net.config();
  BenchReport report;
  report.k = cfg.k;
  report.context = cfg.context;
  report.height = height;
  report.width = width;
  report.widths = cfg.widths;
  report.warmup = warmup;
  report.workers = worker_count();

  std::mt19937_64 rng(seed);
  const Tensor<T> input =
      uniform_tensor<T>({1, 3, cfg.input_frames(), height, width}, T(0), T(1), rng);

  for (std::int64_t i = 0; i < warmup; ++i) net.forward_raw(input);
  report.times.reserve(static_cast<std::size_t>(runs));
  for (std::int64_t i = 0; i < runs; ++i) {
    const auto start = std::chrono::steady_clock::now();
    net.forward_raw(input);
    const auto stop = std::chrono::steady_clock::now();
    report.times.push_back(std::chrono::duration<double>(stop - start).count());
  }
  report.finalize();
  return report;
}

struct ScalingRow {
  std::int64_t k = 0;
  double mean_time = 0.0;
  double ratio_vs_k2 = 0.0;
  bool recursive_available = false;
  double recursive_time = 0.0;   // k-1 sequential passes of the k=2 network
  double recursive_ratio = 0.0;  // vs the single-shot k=2 time
};

struct ScalingStudy {
  std::vector<ScalingRow> rows;
  std::vector<BenchReport> reports;

  std::string csv() const {
    std::ostringstream os;
    os.precision(10);
    os << "k,mean_time_s,ratio_vs_k2,recursive_time_s,recursive_ratio\n";
    for (const auto& r : rows) {
      os << r.k << ',' << r.mean_time << ',' << r.ratio_vs_k2 << ',';
      if (r.recursive_available)
        os << r.recursive_time << ',' << r.recursive_ratio;
      else
        os << "unavailable,unavailable";
      os << '\n';
    }
    return os.str();
  }
};

// Times the single-shot network at every k (same widths and context; only the
// prediction head differs) plus a sequential-recursive baseline that reaches
// k by repeatedly applying the k=2 network to ever finer gaps: 1+2+...+k/2 =
// k-1 passes. Only power-of-two factors have a recursive equivalent.
template <typename T>
ScalingStudy scaling_study(FlavrConfig base, const std::vector<std::int64_t>& ks,
                           std::int64_t height, std::int64_t width, std::int64_t warmup,
                           std::int64_t runs, std::uint64_t seed = 0) {
  ScalingStudy study;
  base.k = 2;
  auto net2 = Network<T>::build(base, seed);
  const BenchReport base_report = time_forward(net2, height, width, warmup, runs, seed);
  const double t2 = base_report.mean;

  std::mt19937_64 rng(seed + 1);
  const Tensor<T> input =
      uniform_tensor<T>({1, 3, base.input_frames(), height, width}, T(0), T(1), rng);

  for (std::int64_t k : ks) {
    ScalingRow row;
    row.k = k;
    if (k == 2) {
      row.mean_time = t2;
      study.reports.push_back(base_report);
    } else {
      FlavrConfig cfg = base;
      cfg.k = k;
      auto net = Network<T>::build(cfg, seed);
      BenchReport rep = time_forward(net, height, width, warmup, runs, seed);
      row.mean_time = rep.mean;
      study.reports.push_back(std::move(rep));
    }
    row.ratio_vs_k2 = row.mean_time / t2;

    if (k >= 2 && (k & (k - 1)) == 0) {
      row.recursive_available = true;
      const std::int64_t passes = k - 1;
      std::vector<double> rec_times;
      for (std::int64_t i = 0; i < warmup; ++i) net2.forward_raw(input);
      for (std::int64_t i = 0; i < runs; ++i) {
        const auto start = std::chrono::steady_clock::now();
        for (std::int64_t p = 0; p < passes; ++p) net2.forward_raw(input);
        const auto stop = std::chrono::steady_clock::now();
        rec_times.push_back(std::chrono::duration<double>(stop - start).count());
      }
      double acc = 0.0;
      for (double t : rec_times) acc += t;
      row.recursive_time = acc / static_cast<double>(rec_times.size());
      row.recursive_ratio = row.recursive_time / t2;
    }
    study.rows.push_back(row);
  }
  return study;
}

}  // namespace flavr
