#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "shpjf/errors.hpp"
#include "shpjf/tensor.hpp"

namespace shpjf::detail {

static_assert(std::endian::native == std::endian::little, "binary containers are little-endian");

template <typename T>
void write_pod(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw ValidationError("unexpected end of binary container");
  return value;
}

inline void write_string(std::ostream& out, const std::string& s) {
  write_pod<std::uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in, std::uint64_t limit = (1u << 26)) {
  const auto n = read_pod<std::uint64_t>(in);
  if (n > limit) throw ValidationError("string block too large in binary container");
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw ValidationError("unexpected end of binary container");
  return s;
}

inline void write_tensor(std::ostream& out, const Tensor& t) {
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) write_pod<std::uint64_t>(out, d);
  out.write(reinterpret_cast<const char*>(t.values().data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
}

inline Tensor read_tensor(std::istream& in, bool requires_grad = false) {
  const auto rank = read_pod<std::uint32_t>(in);
  if (rank == 0 || rank > 4) throw ValidationError("bad tensor rank in binary container");
  Shape shape(rank);
  for (auto& d : shape) d = read_pod<std::uint64_t>(in);
  const auto n = shape_numel(shape);
  if (n > (std::uint64_t{1} << 32)) throw ValidationError("tensor too large in binary container");
  std::vector<double> values(n);
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) throw ValidationError("unexpected end of binary container");
  return Tensor::from(std::move(shape), std::move(values), requires_grad);
}

}  // namespace shpjf::detail
