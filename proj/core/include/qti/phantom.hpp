#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qti/epg.hpp"

namespace qti {

struct LabelClass {
  std::string name;
  TissueParams params;
  bool vessel = false;
};

struct PhantomSpec {
  std::string preset = "concentric"; // concentric | ellipse | uniform
  Index size = 64;
  std::vector<double> vessel_velocities_mm_s{10.0, 40.0};
  std::string uniform_class = "GM";
};

struct PhantomDef {
  U8_2 labels;                        // H x W
  std::vector<LabelClass> class_table; // indexed by label value
  std::uint64_t seed = 0;

  Index height() const { return labels.dimension(0); }
  Index width() const { return labels.dimension(1); }
  const LabelClass &class_of(std::uint8_t label) const;
  std::vector<std::uint8_t> labels_present() const;
  // Label of the named class, or -1.
  int label_of(const std::string &name) const;
};

PhantomDef build_phantom(const PhantomSpec &spec, std::uint64_t seed);

// Voxels of `label` whose (2*erosion+1)^2 neighbourhood is entirely `label`.
U8_2 interior_mask(const U8_2 &labels, std::uint8_t label, Index erosion);

struct CoilSet {
  Cx3 sensitivities; // C x H x W, sum_c |S_c|^2 == 1 per voxel

  Index coils() const { return sensitivities.dimension(0); }
};

CoilSet make_coil_maps(Index height, Index width, Index coils, std::uint64_t seed);

struct SamplingMask {
  U8_3 mask; // T x H x W, 1 = sampled
  double acceleration = 1.0;
  double center_radius = 0.0;

  Index frames() const { return mask.dimension(0); }
  double sampled_fraction() const;
};

// Variable-density random Cartesian masks, a fresh pattern per frame. Outside
// the always-sampled centre disk the sampling probability falls off as
// s / (1 + (r / r0)^2) with s chosen so the expected fraction is 1/R.
SamplingMask make_masks(Index height, Index width, Index frames, double acceleration, double center_radius,
                        std::uint64_t seed);

struct KSpaceSeries {
  Cx4 y; // T x C x H x W, zero where the mask is false
  SamplingMask masks;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
};

// Ground-truth image series x_t = pd * f_t (T x H x W); one flow-aware
// simulation per label.
Cx3 phantom_series(const PhantomDef &phantom, const SequenceDesign &design);

// Noise standard deviation giving the requested SNR relative to the mean
// magnitude of the non-zero voxels of x.
double noise_sigma_for_snr(const Cx3 &x, double snr);

// y_tc = mask_t * FFT(S_c * x_t) + complex Gaussian noise (std noise_sigma on
// real and imaginary parts) at sampled entries only.
KSpaceSeries acquire(const Cx3 &x, const CoilSet &coils, const SamplingMask &masks, double noise_sigma,
                     std::uint64_t seed);

KSpaceSeries forward_acquire(const PhantomDef &phantom, const SequenceDesign &design, const CoilSet &coils,
                             const SamplingMask &masks, double noise_sigma, std::uint64_t seed);

} // namespace qti
