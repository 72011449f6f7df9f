#include "qti/array_io.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

namespace qti::io {

namespace {

constexpr std::array<char, 4> kMagic{'Q', 'T', 'I', 'A'};
constexpr std::uint8_t kVersion = 1;

void put_u32(std::ostream &out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) { b[i] = static_cast<char>((v >> (8 * i)) & 0xffu); }
  out.write(b, 4);
}

void put_f32(std::ostream &out, float f) {
  std::uint32_t bits = 0;
  std::memcpy(&bits, &f, 4);
  put_u32(out, bits);
}

void read_exact(std::istream &in, char *dst, std::size_t n, const char *what) {
  in.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) { throw FormatError(std::string("qtia: truncated ") + what); }
}

std::uint32_t get_u32(std::istream &in, const char *what) {
  unsigned char b[4];
  read_exact(in, reinterpret_cast<char *>(b), 4, what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

float get_f32(std::istream &in) {
  std::uint32_t const bits = get_u32(in, "payload");
  float f = 0.0f;
  std::memcpy(&f, &bits, 4);
  return f;
}

std::size_t checked_count(const std::vector<std::uint32_t> &dims) {
  std::size_t n = 1;
  for (auto d : dims) { n *= d; }
  return n;
}

} // namespace

std::size_t ArrayFile::count() const { return checked_count(dims); }

void write_array(std::ostream &out, const ArrayFile &a) {
  std::size_t const n = a.count();
  std::size_t const have = a.dtype == DType::f32 ? a.f32.size() : a.dtype == DType::c64 ? a.c64.size() : a.u8.size();
  if (have != n) { throw InvalidArgument("write_array: payload size does not match dims"); }
  if (a.dims.size() > 255) { throw InvalidArgument("write_array: too many dimensions"); }
  out.write(kMagic.data(), 4);
  out.put(static_cast<char>(kVersion));
  out.put(static_cast<char>(a.dtype));
  out.put(static_cast<char>(a.dims.size()));
  for (auto d : a.dims) { put_u32(out, d); }
  switch (a.dtype) {
  case DType::f32:
    for (float f : a.f32) { put_f32(out, f); }
    break;
  case DType::c64:
    for (auto c : a.c64) {
      put_f32(out, c.real());
      put_f32(out, c.imag());
    }
    break;
  case DType::u8: out.write(reinterpret_cast<const char *>(a.u8.data()), static_cast<std::streamsize>(n)); break;
  }
  if (!out) { throw FormatError("write_array: stream write failed"); }
}

ArrayFile read_array(std::istream &in) {
  std::array<char, 4> magic{};
  read_exact(in, magic.data(), 4, "header");
  if (magic != kMagic) { throw FormatError("qtia: bad magic"); }
  char hdr[3];
  read_exact(in, hdr, 3, "header");
  if (static_cast<std::uint8_t>(hdr[0]) != kVersion) { throw FormatError("qtia: unsupported version"); }
  auto const code = static_cast<std::uint8_t>(hdr[1]);
  if (code < 1 || code > 3) { throw FormatError("qtia: unknown dtype code"); }
  ArrayFile a;
  a.dtype = static_cast<DType>(code);
  auto const ndim = static_cast<std::uint8_t>(hdr[2]);
  for (int i = 0; i < ndim; ++i) { a.dims.push_back(get_u32(in, "dims")); }
  std::size_t const n = a.count();
  switch (a.dtype) {
  case DType::f32:
    a.f32.resize(n);
    for (auto &f : a.f32) { f = get_f32(in); }
    break;
  case DType::c64:
    a.c64.resize(n);
    for (auto &c : a.c64) {
      float const re = get_f32(in);
      float const im = get_f32(in);
      c = {re, im};
    }
    break;
  case DType::u8:
    a.u8.resize(n);
    read_exact(in, reinterpret_cast<char *>(a.u8.data()), n, "payload");
    break;
  }
  if (in.peek() != std::char_traits<char>::eof()) { throw FormatError("qtia: trailing bytes after payload"); }
  return a;
}

void save(const std::filesystem::path &path, const ArrayFile &array) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) { throw FormatError("cannot open " + path.string() + " for writing"); }
  write_array(out, array);
}

ArrayFile load(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) { throw FormatError("cannot open " + path.string()); }
  try {
    return read_array(in);
  } catch (const FormatError &e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

ArrayFile to_array(const CxMat &m) {
  ArrayFile a;
  a.dtype = DType::c64;
  a.dims = {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())};
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) { a.c64.emplace_back(m(i, j)); }
  }
  return a;
}

template <typename Scalar, int Rank>
Tensor<Scalar, Rank> as_tensor(const ArrayFile &a) {
  if (a.dims.size() != static_cast<std::size_t>(Rank)) {
    throw FormatError("qtia: expected rank " + std::to_string(Rank) + ", got " + std::to_string(a.dims.size()));
  }
  Eigen::array<Index, Rank> dims;
  for (int d = 0; d < Rank; ++d) { dims[d] = static_cast<Index>(a.dims[static_cast<std::size_t>(d)]); }
  Tensor<Scalar, Rank> t(dims);
  std::size_t const n = a.count();
  if constexpr (std::is_same_v<Scalar, double>) {
    if (a.dtype != DType::f32) { throw FormatError("qtia: expected f32 payload"); }
    for (std::size_t i = 0; i < n; ++i) { t.data()[i] = a.f32[i]; }
  } else if constexpr (std::is_same_v<Scalar, Cx>) {
    if (a.dtype != DType::c64) { throw FormatError("qtia: expected c64 payload"); }
    for (std::size_t i = 0; i < n; ++i) { t.data()[i] = Cx(a.c64[i].real(), a.c64[i].imag()); }
  } else {
    if (a.dtype != DType::u8) { throw FormatError("qtia: expected u8 payload"); }
    std::copy(a.u8.begin(), a.u8.end(), t.data());
  }
  return t;
}

template Re2 as_tensor<double, 2>(const ArrayFile &);
template Re3 as_tensor<double, 3>(const ArrayFile &);
template Cx2 as_tensor<Cx, 2>(const ArrayFile &);
template Cx3 as_tensor<Cx, 3>(const ArrayFile &);
template Cx4 as_tensor<Cx, 4>(const ArrayFile &);
template U8_2 as_tensor<std::uint8_t, 2>(const ArrayFile &);
template U8_3 as_tensor<std::uint8_t, 3>(const ArrayFile &);

CxMat as_matrix(const ArrayFile &a) {
  Cx2 const t = as_tensor<Cx, 2>(a);
  CxMat m(t.dimension(0), t.dimension(1));
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) { m(i, j) = t(i, j); }
  }
  return m;
}

Window full_range(const Re2 &image) {
  if (image.size() == 0) { return {}; }
  auto const [lo, hi] = std::minmax_element(image.data(), image.data() + image.size());
  return {*lo, *hi};
}

void write_pgm(std::ostream &out, const Re2 &image, Window window) {
  Index const H = image.dimension(0), W = image.dimension(1);
  out << "P5\n" << W << ' ' << H << "\n65535\n";
  double const span = window.hi - window.lo;
  for (Index i = 0; i < H; ++i) {
    for (Index j = 0; j < W; ++j) {
      double v = span > 0.0 ? (image(i, j) - window.lo) / span : 0.0;
      if (!std::isfinite(v)) { v = 0.0; }
      auto const level = static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0, 1.0) * 65535.0));
      out.put(static_cast<char>(level >> 8));
      out.put(static_cast<char>(level & 0xff));
    }
  }
  if (!out) { throw FormatError("write_pgm: stream write failed"); }
}

void save_pgm(const std::filesystem::path &path, const Re2 &image, Window window) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) { throw FormatError("cannot open " + path.string() + " for writing"); }
  write_pgm(out, image, window);
}

} // namespace qti::io
