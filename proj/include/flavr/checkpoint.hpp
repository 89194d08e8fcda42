#pragma once

#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "flavr/net.hpp"
#include "flavr/tensor_io.hpp"

// Checkpoint binary: magic "FLVR", u32 version=1, length-prefixed UTF-8
// config blob (key=value lines), u32 tensor count, then per tensor a
// length-prefixed name followed by an FTSR-style tensor record. Optimizer
// moments ride along as "adam.m.<param>" / "adam.v.<param>" entries.

namespace flavr {

struct Checkpoint {
  std::uint32_t version = 1;
  FlavrConfig config;
  std::map<std::string, AnyTensor> tensors;  // sorted: byte-stable round trips
  std::int64_t epoch = 0;
  double best_val_psnr = 0.0;
  std::int64_t adam_step_count = 0;

  bool has_moments() const {
    for (const auto& [name, t] : tensors)
      if (name.rfind("adam.", 0) == 0) return true;
    return false;
  }
};

namespace detail {

inline std::string join_i64(const std::int64_t* v, std::size_t n) {
  std::ostringstream os;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) os << ',';
    os << v[i];
  }
  return os.str();
}

inline std::vector<std::int64_t> split_i64(const std::string& s) {
  std::vector<std::int64_t> out;
  std::istringstream is(s);
  std::string item;
  while (std::getline(is, item, ',')) out.push_back(std::stoll(item));
  return out;
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

inline std::string config_blob(const Checkpoint& ckpt) {
  const FlavrConfig& c = ckpt.config;
  std::ostringstream os;
  os << "k=" << c.k << '\n';
  os << "context=" << c.context << '\n';
  os << "widths=" << detail::join_i64(c.widths.data(), 5) << '\n';
  os << "stem_kernel=" << detail::join_i64(c.stem_kernel.data(), 3) << '\n';
  os << "block_kernel=" << detail::join_i64(c.block_kernel.data(), 3) << '\n';
  os << "spatial_stride=";
  {
    bool first = true;
    for (int i = 0; i < 5; ++i)
      if (c.spatial_stride[static_cast<std::size_t>(i)]) {
        if (!first) os << ',';
        os << "conv" << (i + 1);
        first = false;
      }
  }
  os << '\n';
  os << "temporal_stride=" << detail::join_i64(c.temporal_stride.data(), 5) << '\n';
  os << "fusion=" << to_string(c.fusion) << '\n';
  os << "gating=" << (c.gating ? 1 : 0) << '\n';
  os << "fusion_kernel=" << c.fusion_kernel << '\n';
  os << "pred_kernel=" << c.pred_kernel << '\n';
  os << "loss=" << to_string(c.loss) << '\n';
  os << "epoch=" << ckpt.epoch << '\n';
  os << "best_val_psnr=" << detail::format_double(ckpt.best_val_psnr) << '\n';
  os << "adam_t=" << ckpt.adam_step_count << '\n';
  return os.str();
}

inline void parse_config_blob(const std::string& blob, Checkpoint& ckpt) {
  FlavrConfig& c = ckpt.config;
  std::istringstream is(blob);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw IoError("checkpoint config: malformed line '" + line + "'");
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);
    auto fill3 = [&](std::array<std::int64_t, 3>& a) {
      const auto v = detail::split_i64(val);
      if (v.size() != 3) throw IoError("checkpoint config: " + key + " needs 3 values");
      std::copy(v.begin(), v.end(), a.begin());
    };
    if (key == "k") c.k = std::stoll(val);
    else if (key == "context") c.context = std::stoll(val);
    else if (key == "widths") {
      const auto v = detail::split_i64(val);
      if (v.size() != 5) throw IoError("checkpoint config: widths needs 5 values");
      std::copy(v.begin(), v.end(), c.widths.begin());
    } else if (key == "stem_kernel") fill3(c.stem_kernel);
    else if (key == "block_kernel") fill3(c.block_kernel);
    else if (key == "spatial_stride") {
      c.spatial_stride = {false, false, false, false, false};
      std::istringstream ss(val);
      std::string item;
      while (std::getline(ss, item, ',')) {
        if (item.rfind("conv", 0) != 0) throw IoError("checkpoint config: bad stride block " + item);
        const int idx = std::stoi(item.substr(4)) - 1;
        if (idx < 0 || idx > 4) throw IoError("checkpoint config: bad stride block " + item);
        c.spatial_stride[static_cast<std::size_t>(idx)] = true;
      }
    } else if (key == "temporal_stride") {
      const auto v = detail::split_i64(val);
      if (v.size() != 5) throw IoError("checkpoint config: temporal_stride needs 5 values");
      std::copy(v.begin(), v.end(), c.temporal_stride.begin());
    } else if (key == "fusion") c.fusion = fusion_from_string(val);
    else if (key == "gating") c.gating = val == "1";
    else if (key == "fusion_kernel") c.fusion_kernel = std::stoll(val);
    else if (key == "pred_kernel") c.pred_kernel = std::stoll(val);
    else if (key == "loss") c.loss = loss_from_string(val);
    else if (key == "epoch") ckpt.epoch = std::stoll(val);
    else if (key == "best_val_psnr") ckpt.best_val_psnr = std::stod(val);
    else if (key == "adam_t") ckpt.adam_step_count = std::stoll(val);
    else throw IoError("checkpoint config: unknown key '" + key + "'");
  }
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot create " + path);
  os.write("FLVR", 4);
  detail::write_u32(os, ckpt.version);
  const std::string blob = config_blob(ckpt);
  detail::write_u32(os, static_cast<std::uint32_t>(blob.size()));
  os.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  detail::write_u32(os, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    detail::write_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_tensor_record(os, t);
  }
  if (!os) throw IoError("write failed for " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "FLVR", 4) != 0)
    throw IoError("bad magic in " + path);
  Checkpoint ckpt;
  ckpt.version = detail::read_u32(is, "checkpoint header");
  if (ckpt.version != 1)
    throw IoError("unsupported checkpoint version " + std::to_string(ckpt.version) + " in " + path);
  const std::uint32_t blob_len = detail::read_u32(is, "checkpoint header");
  std::string blob(blob_len, '\0');
  if (!is.read(blob.data(), blob_len)) throw IoError("truncated checkpoint config in " + path);
  parse_config_blob(blob, ckpt);
  const std::uint32_t count = detail::read_u32(is, "checkpoint tensor table");
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = detail::read_u32(is, "checkpoint tensor name");
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) throw IoError("truncated checkpoint tensor name in " + path);
    ckpt.tensors.emplace(std::move(name), detail::read_tensor_record(is, "checkpoint tensor"));
  }
  char extra;
  if (is.read(&extra, 1)) throw IoError("trailing bytes in " + path);
  return ckpt;
}

template <typename T>
Checkpoint snapshot(Network<T>& net, std::int64_t epoch = 0, double best_val_psnr = 0.0) {
  Checkpoint ckpt;
  ckpt.config = net.config();
  ckpt.epoch = epoch;
  ckpt.best_val_psnr = best_val_psnr;
  for (auto& [name, p] : net.parameters()) ckpt.tensors.emplace(name, p->value);
  return ckpt;
}

// Loads parameter values into a built network. The name sets must match
// exactly; offenders are listed in the error.
template <typename T>
void restore(Network<T>& net, const Checkpoint& ckpt) {
  auto params = net.parameters();
  std::vector<std::string> missing, unknown, wrong;
  std::map<std::string, Param<T>*> by_name;
  for (auto& [name, p] : params) by_name.emplace(name, p);
  for (auto& [name, p] : params)
    if (!ckpt.tensors.count(name)) missing.push_back(name);
  for (const auto& [name, t] : ckpt.tensors) {
    if (name.rfind("adam.", 0) == 0) continue;
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      unknown.push_back(name);
      continue;
    }
    if (!std::holds_alternative<Tensor<T>>(t)) {
      wrong.push_back(name + " (dtype)");
      continue;
    }
    const Shape& src_shape = std::get<Tensor<T>>(t).shape();
    if (src_shape != it->second->value.shape())
      wrong.push_back(name + " (shape " + shape_str(src_shape) + " vs " +
                      shape_str(it->second->value.shape()) + ")");
  }
  if (!missing.empty() || !unknown.empty() || !wrong.empty()) {
    std::string msg = "checkpoint does not match the network:";
    for (const auto& n : missing) msg += " missing:" + n;
    for (const auto& n : unknown) msg += " unknown:" + n;
    for (const auto& n : wrong) msg += " mismatched:" + n;
    throw Error(msg);
  }
  for (auto& [name, p] : params) p->value = std::get<Tensor<T>>(ckpt.tensors.at(name));
}

}  // namespace flavr
