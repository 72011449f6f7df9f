#pragma once

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Core>
#include <unsupported/Eigen/CXX11/Tensor>

namespace qti {

using Index = Eigen::Index;
using Cx = std::complex<double>;

using CxVec = Eigen::VectorXcd;
using RealVec = Eigen::VectorXd;
using CxMat = Eigen::MatrixXcd;
using RealMat = Eigen::MatrixXd;

// Image-space arrays are row-major so that a frame (H x W) is contiguous and
// matches the on-disk payload order.
template <typename Scalar, int Rank>
using Tensor = Eigen::Tensor<Scalar, Rank, Eigen::RowMajor>;

using Cx2 = Tensor<Cx, 2>;
using Cx3 = Tensor<Cx, 3>;
using Cx4 = Tensor<Cx, 4>;
using Re2 = Tensor<double, 2>;
using Re3 = Tensor<double, 3>;
using U8_2 = Tensor<std::uint8_t, 2>;
using U8_3 = Tensor<std::uint8_t, 3>;

struct InvalidArgument : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

} // namespace qti
