#include "deixis/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace deixis {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kDegToRad = kPi / 180.0;

// 21-landmark templates in a local frame, x roughly along the pointing
// direction, unit hand length. Wrist/dip/tip of the pointing template are
// collinear so the wrist-through-fingertip line of an exactly aimed hand
// passes through its target.
constexpr std::array<Vec2, HandPose::kLandmarkCount> kPointingTemplate = {{
    {0.00, 0.00},                                              // wrist
    {0.14, 0.11}, {0.27, 0.17}, {0.37, 0.19}, {0.45, 0.19},    // thumb
    {0.45, 0.00}, {0.62, 0.00}, {0.76, 0.00}, {0.90, 0.00},    // index
    {0.45, 0.07}, {0.53, 0.11}, {0.44, 0.13}, {0.36, 0.13},    // middle
    {0.43, 0.13}, {0.49, 0.18}, {0.40, 0.19}, {0.33, 0.18},    // ring
    {0.40, 0.19}, {0.44, 0.24}, {0.37, 0.25}, {0.31, 0.24},    // pinky
}};

constexpr std::array<Vec2, HandPose::kLandmarkCount> kRestingTemplate = {{
    {0.00, 0.00},                                              // wrist
    {0.12, 0.08}, {0.22, 0.14}, {0.28, 0.20}, {0.30, 0.26},    // thumb
    {0.40, 0.02}, {0.48, 0.10}, {0.42, 0.16}, {0.34, 0.18},    // index
    {0.40, 0.10}, {0.46, 0.18}, {0.38, 0.22}, {0.30, 0.22},    // middle
    {0.37, 0.17}, {0.42, 0.24}, {0.34, 0.27}, {0.27, 0.26},    // ring
    {0.33, 0.23}, {0.36, 0.29}, {0.30, 0.31}, {0.25, 0.30},    // pinky
}};

Vec2 rotate(const Vec2& v, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return {c * v.x - s * v.y, s * v.x + c * v.y};
}

HandPose place_template(const std::array<Vec2, HandPose::kLandmarkCount>& tmpl,
                        bool left_hand, double scale, double rotation,
                        const Vec2& anchor, std::size_t anchor_index) {
  std::array<Vec2, HandPose::kLandmarkCount> placed;
  const Vec2 origin = tmpl[anchor_index];
  for (std::size_t i = 0; i < placed.size(); ++i) {
    Vec2 local = tmpl[i] - origin;
    if (left_hand) local.x = -local.x;
    placed[i] = anchor + rotate(local, rotation) * scale;
  }
  return HandPose(placed);
}

struct Bounds {
  double min_x = std::numeric_limits<double>::infinity();
  double min_y = std::numeric_limits<double>::infinity();
  double max_x = -std::numeric_limits<double>::infinity();
  double max_y = -std::numeric_limits<double>::infinity();

  void expand(const Vec2& p) {
    min_x = std::min(min_x, p.x);
    min_y = std::min(min_y, p.y);
    max_x = std::max(max_x, p.x);
    max_y = std::max(max_y, p.y);
  }
  double width() const { return max_x - min_x; }
  double height() const { return max_y - min_y; }
};

template <typename Fn>
void for_each_point(Sample& sample, Fn&& fn) {
  for (Vec2& lm : sample.hand.landmarks()) fn(lm);
  for (Vec2& c : sample.objects.centroids()) fn(c);
}

}  // namespace

Rect table_region(const ImageDims& dims) {
  return {0.0, 0.4 * dims.height, dims.width, 0.6 * dims.height};
}

Rect rest_zone(const ImageDims& dims) {
  return {0.05 * dims.width, 0.80 * dims.height, 0.90 * dims.width,
          0.18 * dims.height};
}

std::vector<Vec2> generate_scene(std::size_t n_objects, const ImageDims& dims,
                                 Rng& rng) {
  if (n_objects == 0)
    throw std::invalid_argument("generate_scene: need at least one object");
  if (!dims.valid())
    throw std::invalid_argument("generate_scene: invalid image dims");
  const Rect region = table_region(dims);
  const double inset_x = 0.03 * dims.width;
  const double inset_y = 0.03 * dims.height;
  const double min_separation = 0.05 * dims.width;

  std::vector<Vec2> centroids;
  centroids.reserve(n_objects);
  std::size_t tries = 0;
  while (centroids.size() < n_objects) {
    if (++tries > 1000)
      throw std::runtime_error(
          "generate_scene: unplaceable configuration after 1000 tries");
    const Vec2 candidate{
        rng.uniform(region.x + inset_x, region.x + region.width - inset_x),
        rng.uniform(region.y + inset_y, region.y + region.height - inset_y)};
    const bool separated =
        std::all_of(centroids.begin(), centroids.end(), [&](const Vec2& c) {
          return (candidate - c).norm() >= min_separation;
        });
    if (separated) centroids.push_back(candidate);
  }
  return centroids;
}

HandPose synth_hand(bool pointing, std::optional<Vec2> target,
                    double jitter_deg, const ImageDims& dims, Rng& rng,
                    bool left_hand) {
  if (!dims.valid())
    throw std::invalid_argument("synth_hand: invalid image dims");
  if (pointing) {
    if (!target)
      throw std::invalid_argument("synth_hand: pointing requires a target");
    if (!dims.contains(*target))
      throw std::invalid_argument("synth_hand: target outside image");

    const std::size_t tip = HandPose::kIndexFingerTip;
    const std::size_t dip = HandPose::kIndexFingerDip;
    for (std::size_t attempt = 0; attempt < 500; ++attempt) {
      const double scale = dims.width * rng.uniform(0.08, 0.13);
      const double reach = std::min(dims.width, dims.height) *
                           rng.uniform(0.18, 0.38);
      // participants reach in over the near table edge: the aim direction
      // stays within +-110 degrees of "into the image" (negative y)
      const double approach = -kPi / 2.0 + rng.uniform(-1.75, 1.75);
      const Vec2 to_target{std::cos(approach), std::sin(approach)};
      const Vec2 fingertip = *target - to_target * reach;
      const double jitter = rng.uniform(-jitter_deg, jitter_deg) * kDegToRad;

      // orient the template so tip-dip matches the jittered aim direction
      const Vec2 tmpl_dir = kPointingTemplate[tip] - kPointingTemplate[dip];
      Vec2 local_dir = tmpl_dir;
      if (left_hand) local_dir.x = -local_dir.x;
      const double rotation = std::atan2(to_target.y, to_target.x) + jitter -
                              std::atan2(local_dir.y, local_dir.x);
      const HandPose hand = place_template(kPointingTemplate, left_hand, scale,
                                           rotation, fingertip, tip);
      if (hand.inside(dims)) return hand;
    }
    throw std::runtime_error("synth_hand: no in-frame placement found");
  }

  const Rect zone = rest_zone(dims);
  for (std::size_t attempt = 0; attempt < 500; ++attempt) {
    const double scale = dims.width * rng.uniform(0.08, 0.13);
    // fingers roughly toward the robot, as when resting on the near edge
    const double rotation = -kPi / 2.0 + rng.uniform(-0.5, 0.5);
    const Vec2 anchor{rng.uniform(zone.x, zone.x + zone.width),
                      rng.uniform(zone.y, zone.y + zone.height)};
    const HandPose hand = place_template(kRestingTemplate, left_hand, scale,
                                         rotation, anchor, HandPose::kWrist);
    const bool inside_zone =
        std::all_of(hand.landmarks().begin(), hand.landmarks().end(),
                    [&](const Vec2& lm) { return zone.contains(lm); });
    if (inside_zone) return hand;
  }
  throw std::runtime_error("synth_hand: no rest-zone placement found");
}

AugmentSpec AugmentSpec::from_ordinal(std::size_t ordinal) {
  if (ordinal >= kTotal)
    throw std::invalid_argument("AugmentSpec: ordinal out of range");
  AugmentSpec spec;
  spec.noise_level = ordinal % kNoiseCount;
  ordinal /= kNoiseCount;
  spec.rotation_idx = ordinal % kRotationCount;
  ordinal /= kRotationCount;
  spec.shift_y_idx = ordinal % kShiftCount;
  ordinal /= kShiftCount;
  spec.shift_x_idx = ordinal % kShiftCount;
  ordinal /= kShiftCount;
  spec.mirror = ordinal != 0;
  return spec;
}

std::string AugmentSpec::lineage() const {
  return "m" + std::to_string(mirror ? 1 : 0) + ".sx" +
         std::to_string(shift_x_idx) + ".sy" + std::to_string(shift_y_idx) +
         ".r" + std::to_string(rotation_idx) + ".n" +
         std::to_string(noise_level);
}

double rotation_angle_rad(std::size_t rotation_idx) {
  if (rotation_idx >= AugmentSpec::kRotationCount)
    throw std::invalid_argument("rotation_angle_rad: index out of range");
  static constexpr double kDegrees[AugmentSpec::kRotationCount] = {
      -20.0, -15.0, -10.0, -5.0, 5.0, 10.0, 15.0, 20.0};
  return kDegrees[rotation_idx] * kDegToRad;
}

ShiftOffsets ShiftOffsets::draw(const ImageDims& dims, Rng& rng) {
  ShiftOffsets offsets;
  for (double& dx : offsets.dx) dx = rng.uniform(-0.1, 0.1) * dims.width;
  for (double& dy : offsets.dy) dy = rng.uniform(-0.1, 0.1) * dims.height;
  return offsets;
}

Sample apply_geometric(const Sample& base, const AugmentSpec& spec,
                       const ShiftOffsets& offsets, Rng& rng) {
  Sample out = base;
  const ImageDims& dims = out.dims;
  const Vec2 center{dims.width * 0.5, dims.height * 0.5};
  const double angle = rotation_angle_rad(spec.rotation_idx);

  // mirror + rotate about the image center; the shift is applied afterwards
  // so it can be redrawn or clamped to keep every point in frame
  for_each_point(out, [&](Vec2& p) {
    if (spec.mirror) p.x = dims.width - p.x;
    p = center + rotate(p - center, angle);
  });

  Bounds bounds;
  for_each_point(out, [&](Vec2& p) { bounds.expand(p); });

  double dx = offsets.dx[spec.shift_x_idx];
  double dy = offsets.dy[spec.shift_y_idx];
  auto fits = [&](double sx, double sy) {
    return bounds.min_x + sx >= 0.0 && bounds.max_x + sx <= dims.width &&
           bounds.min_y + sy >= 0.0 && bounds.max_y + sy <= dims.height;
  };
  if (!fits(dx, dy)) {
    bool placed = false;
    for (std::size_t attempt = 0; attempt < 10 && !placed; ++attempt) {
      dx = rng.uniform(-0.1, 0.1) * dims.width;
      dy = rng.uniform(-0.1, 0.1) * dims.height;
      placed = fits(dx, dy);
    }
    if (!placed) {
      if (bounds.width() <= dims.width && bounds.height() <= dims.height) {
        // clamp the shift magnitude to the feasible interval
        dx = std::clamp(dx, -bounds.min_x, dims.width - bounds.max_x);
        dy = std::clamp(dy, -bounds.min_y, dims.height - bounds.max_y);
      } else {
        // rotated content exceeds the frame: uniform shrink about the
        // content center keeps all relation angles intact, then recenter
        const double shrink =
            0.999 * std::min(dims.width / bounds.width(),
                             dims.height / bounds.height());
        const Vec2 content_center{(bounds.min_x + bounds.max_x) * 0.5,
                                  (bounds.min_y + bounds.max_y) * 0.5};
        Bounds shrunk;
        for_each_point(out, [&](Vec2& p) {
          p = content_center + (p - content_center) * shrink;
          shrunk.expand(p);
        });
        bounds = shrunk;
        dx = std::clamp(dx, -bounds.min_x, dims.width - bounds.max_x);
        dy = std::clamp(dy, -bounds.min_y, dims.height - bounds.max_y);
      }
    }
  }
  for_each_point(out, [&](Vec2& p) {
    p.x += dx;
    p.y += dy;
  });

  out.recompute_relations();
  out.meta.augment = spec.lineage();
  return out;
}

const double kNoiseSigmaByLevel[AugmentSpec::kNoiseCount] = {0.75, 1.5, 2.25,
                                                             3.0};

Sample add_noise(const Sample& base, std::size_t noise_level, Rng& rng) {
  if (noise_level >= AugmentSpec::kNoiseCount)
    throw std::invalid_argument("add_noise: level out of range");
  const double sigma = kNoiseSigmaByLevel[noise_level];

  Sample out = base;
  const std::size_t pair_count =
      HandPose::kLandmarkCount + out.objects.object_count();
  const std::size_t perturbed = static_cast<std::size_t>(
      std::ceil(0.3 * static_cast<double>(pair_count)));

  std::vector<std::size_t> indices(pair_count);
  std::iota(indices.begin(), indices.end(), 0);
  for (std::size_t i = 0; i < perturbed; ++i) {
    const std::size_t j = i + rng.below(indices.size() - i);
    std::swap(indices[i], indices[j]);
  }

  auto point_at = [&](std::size_t idx) -> Vec2& {
    if (idx < HandPose::kLandmarkCount)
      return out.hand.landmarks()[idx];
    return out.objects.centroids()[idx - HandPose::kLandmarkCount];
  };
  for (std::size_t i = 0; i < perturbed; ++i) {
    Vec2& p = point_at(indices[i]);
    p.x = std::clamp(p.x + rng.normal(0.0, sigma), 0.0, out.dims.width);
    p.y = std::clamp(p.y + rng.normal(0.0, sigma), 0.0, out.dims.height);
  }

  out.recompute_relations();
  return out;
}

void enumerate_augmentations(const Sample& base, Rng& rng,
                             const std::function<void(Sample&&)>& sink) {
  const ShiftOffsets offsets = ShiftOffsets::draw(base.dims, rng);
  for (std::size_t ordinal = 0; ordinal < AugmentSpec::kTotal; ++ordinal) {
    const AugmentSpec spec = AugmentSpec::from_ordinal(ordinal);
    Sample variant = apply_geometric(base, spec, offsets, rng);
    variant = add_noise(variant, spec.noise_level, rng);
    variant.meta.augment = spec.lineage();
    sink(std::move(variant));
  }
}

std::vector<Sample> enumerate_augmentations(const Sample& base, Rng& rng) {
  std::vector<Sample> out;
  out.reserve(AugmentSpec::kTotal);
  enumerate_augmentations(base, rng,
                          [&](Sample&& s) { out.push_back(std::move(s)); });
  return out;
}

std::vector<Sample> light_augment(std::span<const Sample> base,
                                  std::size_t per_sample,
                                  std::size_t max_noise_level,
                                  std::uint64_t seed) {
  if (max_noise_level >= AugmentSpec::kNoiseCount)
    throw std::invalid_argument("light_augment: noise level out of range");
  const Rng master(seed);
  std::vector<Sample> out;
  out.reserve(base.size() * (per_sample + 1));
  for (std::size_t i = 0; i < base.size(); ++i) {
    out.push_back(base[i]);
    Rng rng = master.fork(i);
    const ShiftOffsets offsets = ShiftOffsets::draw(base[i].dims, rng);
    for (std::size_t k = 0; k < per_sample; ++k) {
      AugmentSpec spec;
      spec.mirror = rng.bernoulli(0.5);
      spec.shift_x_idx = rng.below(AugmentSpec::kShiftCount);
      spec.shift_y_idx = rng.below(AugmentSpec::kShiftCount);
      spec.rotation_idx = rng.below(AugmentSpec::kRotationCount);
      spec.noise_level = rng.below(max_noise_level + 1);
      Sample variant = apply_geometric(base[i], spec, offsets, rng);
      variant = add_noise(variant, spec.noise_level, rng);
      variant.meta.augment = spec.lineage();
      out.push_back(std::move(variant));
    }
  }
  return out;
}

std::vector<Sample> generate_corpus(const CorpusSpec& spec,
                                    std::uint64_t seed) {
  if (spec.scenes == 0)
    throw std::invalid_argument("generate_corpus: need at least one scene");
  const Rng master(seed);
  std::vector<Sample> samples;
  for (std::size_t scene = 0; scene < spec.scenes; ++scene) {
    Rng rng = master.fork(scene);
    const std::vector<Vec2> layout =
        generate_scene(spec.objects_per_scene, spec.dims, rng);

    auto make_sample = [&](HandPose hand, std::vector<std::size_t> targets,
                           const char* side) {
      Sample s;
      s.dims = spec.dims;
      s.hand = hand;
      s.objects = build_object_sequence(layout);
      s.targets = std::move(targets);
      s.meta.scene = static_cast<std::int64_t>(scene);
      s.meta.side = side;
      s.recompute_relations();
      s.validate();
      samples.push_back(std::move(s));
    };

    for (std::size_t i = 0; i < spec.single_pointing_per_scene; ++i) {
      const std::size_t target = rng.below(layout.size());
      const bool left = rng.bernoulli(0.5);
      make_sample(synth_hand(true, layout[target], spec.jitter_deg, spec.dims,
                             rng, left),
                  {target}, left ? "left" : "right");
    }
    for (std::size_t i = 0; i < spec.bimanual_events_per_scene; ++i) {
      // one sample per hand, each with its own target
      const std::size_t first = rng.below(layout.size());
      std::size_t second = first;
      if (layout.size() > 1) {
        while (second == first) second = rng.below(layout.size());
      }
      make_sample(
          synth_hand(true, layout[first], spec.jitter_deg, spec.dims, rng,
                     true),
          {first}, "left");
      make_sample(
          synth_hand(true, layout[second], spec.jitter_deg, spec.dims, rng,
                     false),
          {second}, "right");
    }
    for (std::size_t i = 0; i < spec.resting_per_scene; ++i) {
      const bool left = rng.bernoulli(0.5);
      make_sample(synth_hand(false, std::nullopt, 0.0, spec.dims, rng, left),
                  {spec.objects_per_scene}, left ? "left" : "right");
    }
  }
  return samples;
}

}  // namespace deixis
