#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "deixis/dataset.hpp"
#include "deixis/geometry.hpp"
#include "deixis/model.hpp"
#include "deixis/rng.hpp"
#include "deixis/tensor.hpp"

namespace deixis {

// Infinite line through the wrist and index fingertip.
struct PointingLine {
  Vec2 anchor;     // wrist
  Vec2 direction;  // unit, wrist -> fingertip
};

PointingLine pointing_line(const HandPose& hand);  // throws if coincident

// Perpendicular distance to the infinite line.
double point_line_distance(const Vec2& p, const PointingLine& line);
// Forward-ray variant kept for ablation.
double point_ray_distance(const Vec2& p, const PointingLine& line);

// Pointing-versus-resting gate: 42 normalized landmark coordinates through
// a 42 -> 64 -> 32 -> 1 network with a sigmoid output.
class PointingClassifier {
 public:
  PointingClassifier();  // zero weights: probability 0.5 everywhere
  static PointingClassifier random_init(Rng& rng);

  double probability(const HandPose& hand, const ImageDims& dims) const;

  struct FitOptions {
    std::size_t epochs = 800;
    std::size_t batch_size = 64;
    double learning_rate = 3e-3;
    std::uint64_t seed = 0;
  };
  // BCE on the samples' pointing/resting labels.
  void fit(std::span<const Sample> train_set, const FitOptions& options);

  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  void save(const std::string& path) const;
  static PointingClassifier load(const std::string& path);

 private:
  Tensor logits(const Tensor& inputs) const;

  Tensor w1_, b1_, w2_, b2_, w3_, b3_;
};

inline constexpr double kPointingThreshold = 0.5;

// Gate on the classifier, then rank real objects by ascending distance to
// the pointing line; the sentinel ranks first for a resting call and last
// otherwise. Ties break toward the lower object index.
Prediction baseline_predict(const Sample& sample,
                            const PointingClassifier& classifier,
                            bool use_ray = false);

}  // namespace deixis
