#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <variant>
#include <vector>

#include "qti/types.hpp"

namespace qti::io {

enum class DType : std::uint8_t { f32 = 1, c64 = 2, u8 = 3 };

// In-memory image of a .qtia file. Values are widened to double precision on
// read; writes narrow to the on-disk dtype.
struct ArrayFile {
  DType dtype = DType::f32;
  std::vector<std::uint32_t> dims;
  std::vector<float> f32;
  std::vector<std::complex<float>> c64;
  std::vector<std::uint8_t> u8;

  std::size_t count() const;
};

void write_array(std::ostream &out, const ArrayFile &array);
ArrayFile read_array(std::istream &in);
void save(const std::filesystem::path &path, const ArrayFile &array);
ArrayFile load(const std::filesystem::path &path);

template <int Rank>
ArrayFile to_array(const Tensor<double, Rank> &t) {
  ArrayFile a;
  a.dtype = DType::f32;
  for (int d = 0; d < Rank; ++d) { a.dims.push_back(static_cast<std::uint32_t>(t.dimension(d))); }
  a.f32.assign(t.data(), t.data() + t.size());
  return a;
}

template <int Rank>
ArrayFile to_array(const Tensor<Cx, Rank> &t) {
  ArrayFile a;
  a.dtype = DType::c64;
  for (int d = 0; d < Rank; ++d) { a.dims.push_back(static_cast<std::uint32_t>(t.dimension(d))); }
  a.c64.reserve(static_cast<std::size_t>(t.size()));
  for (Index i = 0; i < t.size(); ++i) { a.c64.emplace_back(t.data()[i]); }
  return a;
}

template <int Rank>
ArrayFile to_array(const Tensor<std::uint8_t, Rank> &t) {
  ArrayFile a;
  a.dtype = DType::u8;
  for (int d = 0; d < Rank; ++d) { a.dims.push_back(static_cast<std::uint32_t>(t.dimension(d))); }
  a.u8.assign(t.data(), t.data() + t.size());
  return a;
}

ArrayFile to_array(const CxMat &m); // rows x cols, row-major payload

template <typename Scalar, int Rank>
Tensor<Scalar, Rank> as_tensor(const ArrayFile &a);

extern template Re2 as_tensor<double, 2>(const ArrayFile &);
extern template Re3 as_tensor<double, 3>(const ArrayFile &);
extern template Cx2 as_tensor<Cx, 2>(const ArrayFile &);
extern template Cx3 as_tensor<Cx, 3>(const ArrayFile &);
extern template Cx4 as_tensor<Cx, 4>(const ArrayFile &);
extern template U8_2 as_tensor<std::uint8_t, 2>(const ArrayFile &);
extern template U8_3 as_tensor<std::uint8_t, 3>(const ArrayFile &);

CxMat as_matrix(const ArrayFile &a);

struct Window {
  double lo = 0.0;
  double hi = 1.0;
};

// 16-bit binary PGM, big-endian samples, linear mapping of [lo, hi] onto
// [0, 65535] with clamping. A degenerate window maps everything to 0.
void write_pgm(std::ostream &out, const Re2 &image, Window window);
void save_pgm(const std::filesystem::path &path, const Re2 &image, Window window);
Window full_range(const Re2 &image);

} // namespace qti::io
