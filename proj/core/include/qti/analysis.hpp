#pragma once

#include <vector>

#include "qti/epg.hpp"

namespace qti {

struct FrameRange {
  Index start = 0;
  Index end = 0; // inclusive

  // Last `count` frames of a T-frame series.
  static FrameRange last(Index frames, Index count = 160);
  void validate(Index frames) const;
  Index size() const { return end - start + 1; }
};

// Pixel-wise sum of |x_t| over the range; series is T x H x W.
Re2 angio_sum(const Cx3 &series, const FrameRange &range);

// Maximum along `axis`; the remaining axes keep their order.
Re2 mip(const Re3 &volume, int axis);
RealVec mip(const Re2 &image, int axis);

struct ExtractedFrame {
  Re2 image;
  Index frame = 0;
};

// Frame n whose echo time gap + (n + 1) * TR is closest to time_ms.
Index frame_for_time(double time_ms, const SequenceDesign &design);
ExtractedFrame extract_frame(const Cx3 &series, double time_ms, const SequenceDesign &design);

double pearson(const RealVec &x, const RealVec &y);
// Concordance correlation coefficient with population moments.
double ccc(const RealVec &x, const RealVec &y);
// (mean / std) / sqrt(t_acq_s); +inf when std is zero.
double efficiency(const RealVec &samples, double t_acq_s);

// Mean of image over voxels where mask is non-zero.
double masked_mean(const Re2 &image, const U8_2 &mask);

} // namespace qti
