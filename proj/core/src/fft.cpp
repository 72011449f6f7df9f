#include "qti/fft.hpp"

#include <cmath>
#include <mutex>
#include <vector>

#include <fftw3.h>

namespace qti {

namespace {
// FFTW's planner is not thread safe; execution is.
std::mutex g_planner_mutex;
} // namespace

struct Fft2::Plans {
  fftw_plan forward = nullptr;
  fftw_plan inverse = nullptr;
  double scale = 1.0;

  ~Plans() {
    std::lock_guard const lock(g_planner_mutex);
    if (forward) { fftw_destroy_plan(forward); }
    if (inverse) { fftw_destroy_plan(inverse); }
  }
};

Fft2::Fft2(Index height, Index width)
  : height_(height)
  , width_(width)
  , plans_(std::make_unique<Plans>()) {
  if (height < 1 || width < 1) { throw InvalidArgument("Fft2: empty frame"); }
  std::vector<Cx> scratch(static_cast<std::size_t>(height * width));
  auto *buf = reinterpret_cast<fftw_complex *>(scratch.data());
  unsigned const flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
  std::lock_guard const lock(g_planner_mutex);
  plans_->forward = fftw_plan_dft_2d(static_cast<int>(height), static_cast<int>(width), buf, buf, FFTW_FORWARD, flags);
  plans_->inverse = fftw_plan_dft_2d(static_cast<int>(height), static_cast<int>(width), buf, buf, FFTW_BACKWARD, flags);
  plans_->scale = 1.0 / std::sqrt(static_cast<double>(height * width));
}

Fft2::~Fft2() = default;
Fft2::Fft2(Fft2 &&) noexcept = default;
Fft2 &Fft2::operator=(Fft2 &&) noexcept = default;

void Fft2::forward(Cx *frame) const {
  auto *buf = reinterpret_cast<fftw_complex *>(frame);
  fftw_execute_dft(plans_->forward, buf, buf);
  Index const n = height_ * width_;
  for (Index i = 0; i < n; ++i) { frame[i] *= plans_->scale; }
}

void Fft2::inverse(Cx *frame) const {
  auto *buf = reinterpret_cast<fftw_complex *>(frame);
  fftw_execute_dft(plans_->inverse, buf, buf);
  Index const n = height_ * width_;
  for (Index i = 0; i < n; ++i) { frame[i] *= plans_->scale; }
}

} // namespace qti
