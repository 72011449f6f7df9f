#pragma once

#include <memory>

#include "qti/types.hpp"

namespace qti {

// Unitary 2D FFT (1/sqrt(HW) scaling in both directions) on contiguous
// row-major H x W frames. DC sits at index (0, 0); no shifting is applied.
class Fft2 {
public:
  Fft2(Index height, Index width);
  ~Fft2();
  Fft2(Fft2 &&) noexcept;
  Fft2 &operator=(Fft2 &&) noexcept;
  Fft2(const Fft2 &) = delete;
  Fft2 &operator=(const Fft2 &) = delete;

  Index height() const { return height_; }
  Index width() const { return width_; }

  void forward(Cx *frame) const;
  void inverse(Cx *frame) const;

private:
  struct Plans;
  Index height_ = 0;
  Index width_ = 0;
  std::unique_ptr<Plans> plans_;
};

} // namespace qti
