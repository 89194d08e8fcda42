#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <variant>
#include <vector>

#include "flavr/tensor.hpp"

// Raw tensor file: magic "FTSR", u32 version=1, u8 dtype (0=f32, 1=f64),
// u32 rank, u32 extents[rank], little-endian row-major payload.

namespace flavr {

static_assert(std::endian::native == std::endian::little,
              "serialization assumes a little-endian host");

using AnyTensor = std::variant<Tensor<float>, Tensor<double>>;

namespace detail {

inline void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), 4);
}

inline void write_u8(std::ostream& os, std::uint8_t v) {
  os.write(reinterpret_cast<const char*>(&v), 1);
}

inline std::uint32_t read_u32(std::istream& is, const char* what) {
  std::uint32_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), 4)) throw IoError(std::string("truncated ") + what);
  return v;
}

inline std::uint8_t read_u8(std::istream& is, const char* what) {
  std::uint8_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), 1)) throw IoError(std::string("truncated ") + what);
  return v;
}

template <typename T>
void write_payload(std::ostream& os, const Tensor<T>& t) {
  os.write(reinterpret_cast<const char*>(t.data()),
           static_cast<std::streamsize>(sizeof(T) * static_cast<std::size_t>(t.size())));
}

template <typename T>
Tensor<T> read_payload(std::istream& is, Shape shape, const char* what) {
  Tensor<T> t(std::move(shape));
  if (!is.read(reinterpret_cast<char*>(t.data()),
               static_cast<std::streamsize>(sizeof(T) * static_cast<std::size_t>(t.size()))))
    throw IoError(std::string("truncated ") + what + " payload");
  return t;
}

inline void write_tensor_record(std::ostream& os, const AnyTensor& t) {
  const bool is_f64 = std::holds_alternative<Tensor<double>>(t);
  write_u8(os, is_f64 ? 1 : 0);
  const Shape& shape =
      is_f64 ? std::get<Tensor<double>>(t).shape() : std::get<Tensor<float>>(t).shape();
  write_u32(os, static_cast<std::uint32_t>(shape.size()));
  for (auto e : shape) write_u32(os, static_cast<std::uint32_t>(e));
  if (is_f64)
    write_payload(os, std::get<Tensor<double>>(t));
  else
    write_payload(os, std::get<Tensor<float>>(t));
}

inline AnyTensor read_tensor_record(std::istream& is, const char* what) {
  const std::uint8_t dtype = read_u8(is, what);
  if (dtype > 1) throw IoError(std::string(what) + ": unknown dtype code");
  const std::uint32_t rank = read_u32(is, what);
  if (rank == 0 || rank > 8) throw IoError(std::string(what) + ": implausible rank");
  Shape shape(rank);
  for (auto& e : shape) e = read_u32(is, what);
  if (dtype == 1) return read_payload<double>(is, std::move(shape), what);
  return read_payload<float>(is, std::move(shape), what);
}

}  // namespace detail

inline void write_tensor_file(const std::string& path, const AnyTensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot create " + path);
  os.write("FTSR", 4);
  detail::write_u32(os, 1);
  detail::write_tensor_record(os, t);
  if (!os) throw IoError("write failed for " + path);
}

inline AnyTensor read_tensor_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "FTSR", 4) != 0)
    throw IoError("bad magic in " + path);
  const std::uint32_t version = detail::read_u32(is, "tensor file header");
  if (version != 1) throw IoError("unsupported tensor file version in " + path);
  AnyTensor t = detail::read_tensor_record(is, "tensor file");
  // reject trailing garbage
  char extra;
  if (is.read(&extra, 1)) throw IoError("trailing bytes in " + path);
  return t;
}

}  // namespace flavr
