#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "flavr/net.hpp"

namespace flavr {

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::int64_t probes = 0;
  std::int64_t skipped = 0;  // probes that straddled a ReLU kink
};

// Central-difference check of the end-to-end backward pass against numeric
// differentiation of the forward pass, on randomly sampled parameter
// coordinates. Probes whose two-step estimates disagree straddle an
// activation kink and are excluded; a systematically wrong gradient stays
// visible because both estimates then agree with each other.
template <typename T>
GradCheckResult gradcheck(Network<T>& net, std::int64_t height, std::int64_t width,
                          std::int64_t probes_per_param, std::uint64_t seed) {
  static_assert(std::is_same_v<T, double>, "gradient checks need f64 precision");
  const FlavrConfig& cfg = net.config();
  std::mt19937_64 rng(seed);
  const Tensor<T> input =
      uniform_tensor<T>({1, 3, cfg.input_frames(), height, width}, T(0), T(1), rng);
  const Tensor<T> proj =
      uniform_tensor<T>({1, cfg.out_channels(), height, width}, T(-1), T(1), rng);

  auto scalar = [&]() {
    const Tensor<T> out = net.forward_raw(input);
    long double acc = 0.0L;
    for (std::int64_t i = 0; i < out.size(); ++i)
      acc += static_cast<long double>(out[i]) * static_cast<long double>(proj[i]);
    return static_cast<double>(acc);
  };

  net.zero_grads();
  net.forward(input, /*train=*/true);
  net.backward_raw(proj);

  GradCheckResult result;
  const double h = 1e-5;
  for (auto& [name, p] : net.parameters()) {
    std::uniform_int_distribution<std::int64_t> pick(0, p->value.size() - 1);
    for (std::int64_t s = 0; s < probes_per_param; ++s) {
      const std::int64_t j = pick(rng);
      const double keep = p->value[j];
      auto central = [&](double step) {
        p->value[j] = static_cast<T>(keep + step);
        const double hi = scalar();
        p->value[j] = static_cast<T>(keep - step);
        const double lo = scalar();
        p->value[j] = static_cast<T>(keep);
        return (hi - lo) / (2.0 * step);
      };
      const double fd_a = central(h);
      const double fd_b = central(h / 2);
      const double denom = std::max(std::abs(fd_a), std::abs(fd_b));
      if (std::abs(fd_a - fd_b) >= std::max(1e-6 * denom, 3e-9)) {
        ++result.skipped;
        continue;
      }
      const double analytic = static_cast<double>(p->grad[j]);
      const double diff = std::abs(analytic - fd_b);
      if (diff > 1e-9)
        result.max_rel_err =
            std::max(result.max_rel_err, diff / std::max({std::abs(analytic), std::abs(fd_b), 1e-12}));
      ++result.probes;
    }
  }
  return result;
}

}  // namespace flavr
