#include "qti/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <set>

#include "qti/fft.hpp"
#include "qti/parallel.hpp"
#include "qti/random.hpp"

namespace qti {

namespace {

constexpr std::uint8_t kBackground = 0, kGm = 1, kWm = 2, kCsf = 3, kSb = 4, kFirstVessel = 5;

std::vector<LabelClass> standard_table(const std::vector<double> &velocities) {
  std::vector<LabelClass> table{
    {"background", {1000.0, 100.0, 0.0, 0.0}, false},
    {"GM", {1450.0, 85.0, 0.8, 0.0}, false},
    {"WM", {900.0, 60.0, 0.7, 0.0}, false},
    {"CSF", {3600.0, 1750.0, 1.0, 0.0}, false},
    {"SB", {1740.0, 275.0, 0.9, 0.0}, false},
  };
  for (double v : velocities) {
    if (!(v > 0.0)) { throw InvalidArgument("build_phantom: vessel velocities must be > 0"); }
    long const rounded = std::lround(v);
    table.push_back({"vessel_" + std::to_string(rounded), {1740.0, 275.0, 0.9, v}, true});
  }
  return table;
}

bool power_of_two(Index n) { return n > 0 && (n & (n - 1)) == 0; }

} // namespace

const LabelClass &PhantomDef::class_of(std::uint8_t label) const {
  if (label >= class_table.size()) { throw InvalidArgument("PhantomDef: label without class entry"); }
  return class_table[label];
}

std::vector<std::uint8_t> PhantomDef::labels_present() const {
  std::set<std::uint8_t> seen;
  for (Index i = 0; i < labels.size(); ++i) { seen.insert(labels.data()[i]); }
  return {seen.begin(), seen.end()};
}

int PhantomDef::label_of(const std::string &name) const {
  for (std::size_t i = 0; i < class_table.size(); ++i) {
    if (class_table[i].name == name) { return static_cast<int>(i); }
  }
  return -1;
}

PhantomDef build_phantom(const PhantomSpec &spec, std::uint64_t seed) {
  if (!power_of_two(spec.size) || spec.size < 16) {
    throw InvalidArgument("build_phantom: size must be a power of two >= 16");
  }
  if (spec.vessel_velocities_mm_s.size() + kFirstVessel > 255) { throw InvalidArgument("build_phantom: too many vessels"); }

  PhantomDef ph;
  ph.seed = seed;
  ph.class_table = standard_table(spec.vessel_velocities_mm_s);
  Index const S = spec.size;
  ph.labels = U8_2(S, S);
  double const scale = static_cast<double>(S) / 64.0;
  double const centre = 0.5 * static_cast<double>(S);

  std::mt19937_64 rng = make_stream(seed, {0});
  double const vessel_angle = std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng);
  Index const n_vessels = static_cast<Index>(spec.vessel_velocities_mm_s.size());

  auto vessel_at = [&](double x, double y) -> int {
    for (Index k = 0; k < n_vessels; ++k) {
      double const ang = vessel_angle + 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n_vessels);
      double const vx = 12.0 * scale * std::cos(ang), vy = 12.0 * scale * std::sin(ang);
      if (std::hypot(x - vx, y - vy) <= 3.0 * scale) { return static_cast<int>(kFirstVessel + k); }
    }
    return -1;
  };

  if (spec.preset == "uniform") {
    int const label = ph.label_of(spec.uniform_class);
    if (label < 0 || ph.class_table[static_cast<std::size_t>(label)].vessel) {
      throw InvalidArgument("build_phantom: unknown uniform class '" + spec.uniform_class + "'");
    }
    ph.labels.setConstant(static_cast<std::uint8_t>(label));
    return ph;
  }
  if (spec.preset != "concentric" && spec.preset != "ellipse") {
    throw InvalidArgument("build_phantom: unknown preset '" + spec.preset + "'");
  }
  bool const ellipse = spec.preset == "ellipse";

  for (Index i = 0; i < S; ++i) {
    for (Index j = 0; j < S; ++j) {
      double const y = static_cast<double>(i) + 0.5 - centre;
      double const x = static_cast<double>(j) + 0.5 - centre;
      std::uint8_t label = kCsf;
      if (ellipse) {
        double const e = std::hypot(x / (30.0 * scale), y / (24.0 * scale));
        if (e > 1.0) {
          label = kBackground;
        } else if (e > 0.9) {
          label = kCsf;
        } else if (e > 0.7) {
          label = kGm;
        } else {
          label = std::hypot(x / (6.0 * scale), y / (4.5 * scale)) <= 1.0 ? kSb : kWm;
        }
      } else {
        double const r = std::hypot(x, y);
        if (r <= 6.0 * scale) {
          label = kSb;
        } else if (r <= 20.0 * scale) {
          label = kWm;
        } else if (r <= 28.0 * scale) {
          label = kGm;
        }
      }
      if (label == kWm) {
        if (int const v = vessel_at(x, y); v >= 0) { label = static_cast<std::uint8_t>(v); }
      }
      ph.labels(i, j) = label;
    }
  }
  return ph;
}

U8_2 interior_mask(const U8_2 &labels, std::uint8_t label, Index erosion) {
  Index const H = labels.dimension(0), W = labels.dimension(1);
  U8_2 out(H, W);
  out.setZero();
  for (Index i = 0; i < H; ++i) {
    for (Index j = 0; j < W; ++j) {
      bool inside = true;
      for (Index di = -erosion; di <= erosion && inside; ++di) {
        for (Index dj = -erosion; dj <= erosion && inside; ++dj) {
          Index const ii = i + di, jj = j + dj;
          inside = ii >= 0 && ii < H && jj >= 0 && jj < W && labels(ii, jj) == label;
        }
      }
      out(i, j) = inside ? 1 : 0;
    }
  }
  return out;
}

CoilSet make_coil_maps(Index height, Index width, Index coils, std::uint64_t seed) {
  if (coils < 1) { throw InvalidArgument("make_coil_maps: need at least one coil"); }
  if (height < 1 || width < 1) { throw InvalidArgument("make_coil_maps: empty image"); }
  CoilSet set;
  set.sensitivities = Cx3(coils, height, width);
  double const cy = 0.5 * static_cast<double>(height), cx = 0.5 * static_cast<double>(width);
  double const ring = 0.6 * 0.5 * static_cast<double>(std::min(height, width));
  double const widthpx = 0.5 * static_cast<double>(std::min(height, width));

  for (Index c = 0; c < coils; ++c) {
    std::mt19937_64 rng = make_stream(seed, {1, static_cast<std::uint64_t>(c)});
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double const ang = 2.0 * std::numbers::pi * (static_cast<double>(c) + 0.25 * u(rng)) / static_cast<double>(coils);
    double const px = cx + ring * std::cos(ang), py = cy + ring * std::sin(ang);
    double const phase0 = 2.0 * std::numbers::pi * u(rng);
    double const gx = (u(rng) - 0.5) * 2.0 * std::numbers::pi / static_cast<double>(width);
    double const gy = (u(rng) - 0.5) * 2.0 * std::numbers::pi / static_cast<double>(height);
    for (Index i = 0; i < height; ++i) {
      for (Index j = 0; j < width; ++j) {
        double const dy = static_cast<double>(i) + 0.5 - py, dx = static_cast<double>(j) + 0.5 - px;
        double const mag = std::exp(-(dx * dx + dy * dy) / (2.0 * widthpx * widthpx));
        double const phase = phase0 + gx * static_cast<double>(j) + gy * static_cast<double>(i);
        set.sensitivities(c, i, j) = std::polar(mag, phase);
      }
    }
  }
  for (Index i = 0; i < height; ++i) {
    for (Index j = 0; j < width; ++j) {
      double ss = 0.0;
      for (Index c = 0; c < coils; ++c) { ss += std::norm(set.sensitivities(c, i, j)); }
      double const inv = 1.0 / std::sqrt(ss);
      for (Index c = 0; c < coils; ++c) { set.sensitivities(c, i, j) *= inv; }
    }
  }
  return set;
}

double SamplingMask::sampled_fraction() const {
  if (mask.size() == 0) { return 0.0; }
  double count = 0.0;
  for (Index i = 0; i < mask.size(); ++i) { count += mask.data()[i] ? 1.0 : 0.0; }
  return count / static_cast<double>(mask.size());
}

SamplingMask make_masks(Index height, Index width, Index frames, double acceleration, double center_radius,
                        std::uint64_t seed) {
  if (!(acceleration >= 1.0)) { throw InvalidArgument("make_masks: acceleration must be >= 1"); }
  if (center_radius < 0.0) { throw InvalidArgument("make_masks: negative centre radius"); }
  if (height < 1 || width < 1 || frames < 0) { throw InvalidArgument("make_masks: bad dimensions"); }

  SamplingMask out;
  out.acceleration = acceleration;
  out.center_radius = center_radius;
  out.mask = U8_3(frames, height, width);
  Index const N = height * width;

  // Radial frequency of every k-space index in natural FFT ordering.
  std::vector<double> radius(static_cast<std::size_t>(N));
  Index n_centre = 0;
  for (Index i = 0; i < height; ++i) {
    for (Index j = 0; j < width; ++j) {
      double const ky = static_cast<double>(i < height / 2 ? i : i - height);
      double const kx = static_cast<double>(j < width / 2 ? j : j - width);
      double const r = std::hypot(ky, kx);
      radius[static_cast<std::size_t>(i * width + j)] = r;
      if (r <= center_radius) { ++n_centre; }
    }
  }
  double const target = static_cast<double>(N) / acceleration;
  if (static_cast<double>(n_centre) > target) {
    throw InvalidArgument("make_masks: acceleration too high for the fully sampled centre disk");
  }

  double const r0 = center_radius > 0.0 ? center_radius : 1.0;
  std::vector<double> prob(static_cast<std::size_t>(N), 1.0);
  auto expected = [&](double s) {
    double total = 0.0;
    for (std::size_t k = 0; k < prob.size(); ++k) {
      double const r = radius[k];
      double const p = r <= center_radius ? 1.0 : std::min(1.0, s / (1.0 + (r / r0) * (r / r0)));
      prob[k] = p;
      total += p;
    }
    return total;
  };
  double lo = 0.0, hi = 1.0;
  while (expected(hi) < target && hi < 1e12) { hi *= 2.0; }
  for (int it = 0; it < 200; ++it) {
    double const mid = 0.5 * (lo + hi);
    (expected(mid) < target ? lo : hi) = mid;
  }
  expected(hi);

  for (Index t = 0; t < frames; ++t) {
    std::mt19937_64 rng = make_stream(seed, {2, static_cast<std::uint64_t>(t)});
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (Index k = 0; k < N; ++k) {
      double const p = prob[static_cast<std::size_t>(k)];
      bool const take = p >= 1.0 || u(rng) < p;
      out.mask.data()[t * N + k] = take ? 1 : 0;
    }
  }
  return out;
}

Cx3 phantom_series(const PhantomDef &phantom, const SequenceDesign &design) {
  Index const T = design.repetitions(), H = phantom.height(), W = phantom.width();
  std::map<std::uint8_t, CxVec> cache;
  auto const present = phantom.labels_present();
  std::vector<CxVec> signals(present.size());
  parallel_for(static_cast<Index>(present.size()), [&](Index i) {
    signals[static_cast<std::size_t>(i)] = simulate_with_flow(design, phantom.class_of(present[static_cast<std::size_t>(i)]).params);
  });
  for (std::size_t i = 0; i < present.size(); ++i) { cache.emplace(present[i], std::move(signals[i])); }

  Cx3 x(T, H, W);
  for (Index i = 0; i < H; ++i) {
    for (Index j = 0; j < W; ++j) {
      CxVec const &f = cache.at(phantom.labels(i, j));
      for (Index t = 0; t < T; ++t) { x(t, i, j) = f[t]; }
    }
  }
  return x;
}

double noise_sigma_for_snr(const Cx3 &x, double snr) {
  if (!(snr > 0.0)) { throw InvalidArgument("noise_sigma_for_snr: SNR must be > 0"); }
  Index const T = x.dimension(0), N = x.dimension(1) * x.dimension(2);
  double total = 0.0;
  Index count = 0;
  for (Index v = 0; v < N; ++v) {
    double acc = 0.0;
    for (Index t = 0; t < T; ++t) { acc += std::abs(x.data()[t * N + v]); }
    if (acc > 0.0) {
      total += acc / static_cast<double>(T);
      ++count;
    }
  }
  if (count == 0) { throw InvalidArgument("noise_sigma_for_snr: image series is identically zero"); }
  return total / static_cast<double>(count) / snr;
}

KSpaceSeries acquire(const Cx3 &x, const CoilSet &coils, const SamplingMask &masks, double noise_sigma,
                     std::uint64_t seed) {
  Index const T = x.dimension(0), H = x.dimension(1), W = x.dimension(2), C = coils.coils();
  if (coils.sensitivities.dimension(1) != H || coils.sensitivities.dimension(2) != W || masks.frames() != T ||
      masks.mask.dimension(1) != H || masks.mask.dimension(2) != W) {
    throw InvalidArgument("acquire: inconsistent shapes");
  }
  if (noise_sigma < 0.0) { throw InvalidArgument("acquire: negative noise sigma"); }
  Index const N = H * W;
  KSpaceSeries out;
  out.y = Cx4(T, C, H, W);
  out.masks = masks;
  out.noise_sigma = noise_sigma;
  out.seed = seed;
  Fft2 const fft(H, W);

  parallel_for(T * C, [&](Index tc) {
    Index const t = tc / C, c = tc % C;
    Cx *frame = out.y.data() + (t * C + c) * N;
    Cx const *xt = x.data() + t * N;
    Cx const *s = coils.sensitivities.data() + c * N;
    for (Index k = 0; k < N; ++k) { frame[k] = s[k] * xt[k]; }
    fft.forward(frame);
    std::uint8_t const *m = masks.mask.data() + t * N;
    std::mt19937_64 rng = make_stream(seed, {3, static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(c)});
    std::normal_distribution<double> noise(0.0, 1.0);
    for (Index k = 0; k < N; ++k) {
      if (!m[k]) {
        frame[k] = Cx{};
      } else if (noise_sigma > 0.0) {
        double const re = noise(rng);
        double const im = noise(rng);
        frame[k] += noise_sigma * Cx{re, im};
      }
    }
  });
  return out;
}

KSpaceSeries forward_acquire(const PhantomDef &phantom, const SequenceDesign &design, const CoilSet &coils,
                             const SamplingMask &masks, double noise_sigma, std::uint64_t seed) {
  return acquire(phantom_series(phantom, design), coils, masks, noise_sigma, seed);
}

} // namespace qti
