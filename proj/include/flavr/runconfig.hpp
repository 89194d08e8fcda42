#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "flavr/net.hpp"
#include "flavr/trainer.hpp"

// Line-oriented `key = value` run configuration with `#` comments. Every key
// is known; anything else is an error. The fully resolved config is echoed
// into the output directory so a run is reproducible from its artifacts.

namespace flavr {

struct RunConfig {
  FlavrConfig net;
  TrainConfig train;
  std::string dataset;
  std::string val_dataset;  // empty: validate on the training set
  std::string out = "out";
  int threads = 1;
  std::uint64_t seed = 0;

  void apply(const std::string& key, const std::string& value);
  std::string echo() const;

  static RunConfig from_file(const std::string& path);
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

template <std::size_t N>
void parse_i64_array(const std::string& key, const std::string& v,
                     std::array<std::int64_t, N>& out) {
  const auto parts = split_i64(v);
  if (parts.size() != N)
    throw ConfigError(key + ": expected " + std::to_string(N) + " comma-separated values");
  std::copy(parts.begin(), parts.end(), out.begin());
}

}  // namespace detail

inline void RunConfig::apply(const std::string& key, const std::string& value) {
  if (key == "dataset") dataset = value;
  else if (key == "val_dataset") val_dataset = value;
  else if (key == "out") out = value;
  else if (key == "k") net.k = std::stoll(value);
  else if (key == "context") net.context = std::stoll(value);
  else if (key == "widths") detail::parse_i64_array(key, value, net.widths);
  else if (key == "stem_kernel") detail::parse_i64_array(key, value, net.stem_kernel);
  else if (key == "block_kernel") detail::parse_i64_array(key, value, net.block_kernel);
  else if (key == "spatial_stride") {
    net.spatial_stride = {false, false, false, false, false};
    std::istringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = detail::trim(item);
      if (item.rfind("conv", 0) != 0) throw ConfigError("spatial_stride: bad block '" + item + "'");
      const int idx = std::stoi(item.substr(4)) - 1;
      if (idx < 0 || idx > 4) throw ConfigError("spatial_stride: bad block '" + item + "'");
      net.spatial_stride[static_cast<std::size_t>(idx)] = true;
    }
  } else if (key == "temporal_stride") detail::parse_i64_array(key, value, net.temporal_stride);
  else if (key == "fusion") net.fusion = fusion_from_string(value);
  else if (key == "gating") net.gating = detail::parse_bool(key, value);
  else if (key == "fusion_kernel") net.fusion_kernel = std::stoll(value);
  else if (key == "pred_kernel") net.pred_kernel = std::stoll(value);
  else if (key == "loss") net.loss = loss_from_string(value);
  else if (key == "lr") train.lr0 = std::stod(value);
  else if (key == "batch_size") train.batch_size = std::stoll(value);
  else if (key == "epochs") train.max_epochs = std::stoll(value);
  else if (key == "patience") train.plateau_patience = std::stoll(value);
  else if (key == "beta1") train.adam.beta1 = std::stod(value);
  else if (key == "beta2") train.adam.beta2 = std::stod(value);
  else if (key == "eps") train.adam.eps = std::stod(value);
  else if (key == "augment") train.augment = detail::parse_bool(key, value);
  else if (key == "min_improve_db") train.plateau_min_improve_db = std::stod(value);
  else if (key == "seed") seed = std::stoull(value);
  else if (key == "threads") threads = std::stoi(value);
  else throw ConfigError("unknown config key '" + key + "'");
}

inline std::string RunConfig::echo() const {
  std::ostringstream os;
  os << "dataset = " << dataset << '\n';
  os << "val_dataset = " << val_dataset << '\n';
  os << "out = " << out << '\n';
  os << "k = " << net.k << '\n';
  os << "context = " << net.context << '\n';
  os << "widths = " << detail::join_i64(net.widths.data(), 5) << '\n';
  os << "stem_kernel = " << detail::join_i64(net.stem_kernel.data(), 3) << '\n';
  os << "block_kernel = " << detail::join_i64(net.block_kernel.data(), 3) << '\n';
  os << "spatial_stride = ";
  bool first = true;
  for (int i = 0; i < 5; ++i)
    if (net.spatial_stride[static_cast<std::size_t>(i)]) {
      if (!first) os << ',';
      os << "conv" << (i + 1);
      first = false;
    }
  os << '\n';
  os << "temporal_stride = " << detail::join_i64(net.temporal_stride.data(), 5) << '\n';
  os << "fusion = " << to_string(net.fusion) << '\n';
  os << "gating = " << (net.gating ? "true" : "false") << '\n';
  os << "fusion_kernel = " << net.fusion_kernel << '\n';
  os << "pred_kernel = " << net.pred_kernel << '\n';
  os << "loss = " << to_string(net.loss) << '\n';
  os << "lr = " << train.lr0 << '\n';
  os << "batch_size = " << train.batch_size << '\n';
  os << "epochs = " << train.max_epochs << '\n';
  os << "patience = " << train.plateau_patience << '\n';
  os << "beta1 = " << train.adam.beta1 << '\n';
  os << "beta2 = " << train.adam.beta2 << '\n';
  os << "eps = " << train.adam.eps << '\n';
  os << "augment = " << (train.augment ? "true" : "false") << '\n';
  os << "min_improve_db = " << train.plateau_min_improve_db << '\n';
  os << "seed = " << seed << '\n';
  os << "threads = " << threads << '\n';
  return os.str();
}

inline RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path);
  RunConfig cfg;
  std::string line;
  std::int64_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
    cfg.apply(detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
  return cfg;
}

}  // namespace flavr
