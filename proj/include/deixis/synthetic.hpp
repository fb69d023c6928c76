#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "deixis/dataset.hpp"
#include "deixis/geometry.hpp"
#include "deixis/rng.hpp"

namespace deixis {

struct Rect {
  double x = 0.0, y = 0.0, width = 0.0, height = 0.0;

  bool contains(const Vec2& p) const {
    return p.x >= x && p.x <= x + width && p.y >= y && p.y <= y + height;
  }
};

// Object layouts live on the lower 60% of the frame; resting hands sit in a
// band near the table edge closest to the participant.
Rect table_region(const ImageDims& dims);
Rect rest_zone(const ImageDims& dims);

// Uniform centroids over the table region with pairwise separation of at
// least 5% of the image width; rejection sampling with a bounded try count.
std::vector<Vec2> generate_scene(std::size_t n_objects, const ImageDims& dims,
                                 Rng& rng);

// Rigidly places a fixed 21-landmark template. Pointing hands aim the
// fingertip-DIP ray at the target with a deviation drawn uniformly within
// +-jitter_deg; resting hands land entirely inside the rest zone.
HandPose synth_hand(bool pointing, std::optional<Vec2> target,
                    double jitter_deg, const ImageDims& dims, Rng& rng,
                    bool left_hand = false);

// One augmentation variant: mirror x 8 x-shifts x 8 y-shifts x 8 rotations
// x 4 noise levels = 4096 per base sample.
struct AugmentSpec {
  bool mirror = false;
  std::size_t shift_x_idx = 0;
  std::size_t shift_y_idx = 0;
  std::size_t rotation_idx = 0;
  std::size_t noise_level = 0;

  static constexpr std::size_t kShiftCount = 8;
  static constexpr std::size_t kRotationCount = 8;
  static constexpr std::size_t kNoiseCount = 4;
  static constexpr std::size_t kTotal =
      2 * kShiftCount * kShiftCount * kRotationCount * kNoiseCount;  // 4096

  static AugmentSpec from_ordinal(std::size_t ordinal);
  std::string lineage() const;
};

// The 8 rotation angles: nonzero multiples of 5 degrees within +-20.
double rotation_angle_rad(std::size_t rotation_idx);

// Shift offsets are drawn once per base sample, uniform within +-10% of the
// image dimensions.
struct ShiftOffsets {
  std::array<double, AugmentSpec::kShiftCount> dx{};
  std::array<double, AugmentSpec::kShiftCount> dy{};

  static ShiftOffsets draw(const ImageDims& dims, Rng& rng);
};

// Mirror / rotate-about-center / shift applied jointly to the hand and all
// centroids, so the hand keeps pointing at its target. Out-of-frame results
// redraw the shift up to 10 times, then fall back to an angle-preserving
// fit (clamped shift, with a uniform shrink-to-fit when even that cannot
// help). Noise is NOT applied here.
Sample apply_geometric(const Sample& base, const AugmentSpec& spec,
                       const ShiftOffsets& offsets, Rng& rng);

// Gaussian perturbation of exactly ceil(0.3 * (21 + N_t)) coordinate pairs
// (the sentinel is never touched) with per-level sigma 0.75/1.5/2.25/3.0 px;
// relations are recomputed afterwards.
Sample add_noise(const Sample& base, std::size_t noise_level, Rng& rng);

extern const double kNoiseSigmaByLevel[AugmentSpec::kNoiseCount];

// All 4096 variants of one base sample, in ordinal order.
std::vector<Sample> enumerate_augmentations(const Sample& base, Rng& rng);
void enumerate_augmentations(const Sample& base, Rng& rng,
                             const std::function<void(Sample&&)>& sink);

// Base sample plus per_sample randomly drawn variants per base sample,
// with noise levels limited to max_noise_level.
std::vector<Sample> light_augment(std::span<const Sample> base,
                                  std::size_t per_sample,
                                  std::size_t max_noise_level,
                                  std::uint64_t seed);

// Scene protocol for the default corpus: per scene, a fixed object layout,
// single-target pointing hands, bi-manual events split into one sample per
// hand, and resting hands.
struct CorpusSpec {
  std::size_t scenes = 30;
  std::size_t objects_per_scene = 10;
  std::size_t single_pointing_per_scene = 7;
  std::size_t bimanual_events_per_scene = 2;
  std::size_t resting_per_scene = 7;
  double jitter_deg = 5.0;
  ImageDims dims{1280.0, 720.0};
};

std::vector<Sample> generate_corpus(const CorpusSpec& spec,
                                    std::uint64_t seed);

}  // namespace deixis
