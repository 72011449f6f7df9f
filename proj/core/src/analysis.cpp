#include "qti/analysis.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace qti {

FrameRange FrameRange::last(Index frames, Index count) {
  if (frames < 1 || count < 1) { throw InvalidArgument("FrameRange::last: need frames >= 1 and count >= 1"); }
  return {std::max<Index>(0, frames - count), frames - 1};
}

void FrameRange::validate(Index frames) const {
  if (start < 0 || start > end || end >= frames) {
    throw InvalidArgument("FrameRange [" + std::to_string(start) + ", " + std::to_string(end) + "] invalid for " +
                          std::to_string(frames) + " frames");
  }
}

Re2 angio_sum(const Cx3 &series, const FrameRange &range) {
  range.validate(series.dimension(0));
  Index const H = series.dimension(1), W = series.dimension(2), N = H * W;
  Re2 out(H, W);
  out.setZero();
  for (Index t = range.start; t <= range.end; ++t) {
    Cx const *frame = series.data() + t * N;
    for (Index v = 0; v < N; ++v) { out.data()[v] += std::abs(frame[v]); }
  }
  return out;
}

Re2 mip(const Re3 &volume, int axis) {
  if (axis < 0 || axis > 2) { throw InvalidArgument("mip: axis must be 0, 1 or 2"); }
  Eigen::array<Index, 1> const dims{axis};
  Re2 out = volume.maximum(dims);
  return out;
}

RealVec mip(const Re2 &image, int axis) {
  if (axis < 0 || axis > 1) { throw InvalidArgument("mip: axis must be 0 or 1"); }
  Index const rows = image.dimension(0), cols = image.dimension(1);
  RealVec out = RealVec::Constant(axis == 0 ? cols : rows, -std::numeric_limits<double>::infinity());
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) {
      double &slot = out[axis == 0 ? j : i];
      slot = std::max(slot, image(i, j));
    }
  }
  return out;
}

Index frame_for_time(double time_ms, const SequenceDesign &design) {
  design.validate();
  double const gap = design.invert ? design.inversion_gap_ms : 0.0;
  if (!std::isfinite(time_ms) || time_ms < gap || time_ms > design.duration_ms()) {
    throw InvalidArgument("extract_frame: time " + std::to_string(time_ms) + " ms is outside the sequence");
  }
  auto n = static_cast<Index>(std::llround((time_ms - gap) / design.tr_ms)) - 1;
  n = std::clamp<Index>(n, 0, design.repetitions() - 1);
  return n;
}

ExtractedFrame extract_frame(const Cx3 &series, double time_ms, const SequenceDesign &design) {
  if (series.dimension(0) != design.repetitions()) { throw InvalidArgument("extract_frame: series length differs from the design"); }
  ExtractedFrame out;
  out.frame = frame_for_time(time_ms, design);
  out.image = angio_sum(series, {out.frame, out.frame});
  return out;
}

namespace {

struct Moments {
  double mx, my, vx, vy, cxy;
};

Moments moments(const RealVec &x, const RealVec &y) {
  if (x.size() != y.size() || x.size() < 2) { throw InvalidArgument("correlation: need equal lengths >= 2"); }
  double const n = static_cast<double>(x.size());
  Moments m{x.mean(), y.mean(), 0.0, 0.0, 0.0};
  for (Index i = 0; i < x.size(); ++i) {
    double const dx = x[i] - m.mx, dy = y[i] - m.my;
    m.vx += dx * dx;
    m.vy += dy * dy;
    m.cxy += dx * dy;
  }
  m.vx /= n;
  m.vy /= n;
  m.cxy /= n;
  return m;
}

} // namespace

double pearson(const RealVec &x, const RealVec &y) {
  Moments const m = moments(x, y);
  if (m.vx <= 0.0 || m.vy <= 0.0) { return 0.0; }
  return m.cxy / std::sqrt(m.vx * m.vy);
}

double ccc(const RealVec &x, const RealVec &y) {
  Moments const m = moments(x, y);
  double const den = m.vx + m.vy + (m.mx - m.my) * (m.mx - m.my);
  if (den == 0.0) { return 1.0; } // both constant and equal
  return 2.0 * m.cxy / den;
}

double efficiency(const RealVec &samples, double t_acq_s) {
  if (samples.size() < 2) { throw InvalidArgument("efficiency: need at least two samples"); }
  if (!(t_acq_s > 0.0)) { throw InvalidArgument("efficiency: acquisition time must be > 0"); }
  double const mean = samples.mean();
  double const sd = std::sqrt((samples.array() - mean).square().mean());
  if (sd == 0.0) { return std::numeric_limits<double>::infinity(); }
  return (mean / sd) / std::sqrt(t_acq_s);
}

double masked_mean(const Re2 &image, const U8_2 &mask) {
  if (image.size() != mask.size()) { throw InvalidArgument("masked_mean: shape mismatch"); }
  double s = 0.0;
  Index n = 0;
  for (Index i = 0; i < image.size(); ++i) {
    if (mask.data()[i]) {
      s += image.data()[i];
      ++n;
    }
  }
  if (n == 0) { throw InvalidArgument("masked_mean: empty mask"); }
  return s / static_cast<double>(n);
}

} // namespace qti
