#include "deixis/geometry.hpp"

#include <stdexcept>

namespace deixis {

namespace {
constexpr double kHalfPi = 1.57079632679489661923;
}

bool HandPose::inside(const ImageDims& dims) const {
  for (const Vec2& lm : landmarks_) {
    if (!dims.contains(lm)) return false;
  }
  return true;
}

Vec2 centroid_of_bbox(const BBox& box) {
  if (!(box.x_min < box.x_max) || !(box.y_min < box.y_max))
    throw std::invalid_argument("centroid_of_bbox: degenerate box");
  return {(box.x_min + box.x_max) * 0.5, (box.y_min + box.y_max) * 0.5};
}

Vec2 finger_vector(const HandPose& hand) {
  return hand.index_tip() - hand.index_dip();
}

AngleResult angle_to_centroid(const HandPose& hand, const Vec2& centroid) {
  const Vec2 finger = finger_vector(hand);
  const Vec2 to_centroid = centroid - hand.index_tip();
  if (finger.norm() == 0.0 || to_centroid.norm() == 0.0)
    return {kHalfPi, true};
  // atan2(|cross|, dot) equals arccos of the clamped normalized dot product
  // but stays accurate near 0 and pi, where arccos loses ~8 digits.
  const double angle =
      std::atan2(std::abs(finger.cross(to_centroid)), finger.dot(to_centroid));
  return {angle, false};
}

Vec2 ObjectSequence::token(std::size_t i) const {
  if (i < centroids_.size()) return centroids_[i];
  if (i == centroids_.size()) return kNonObjectToken;
  throw std::out_of_range("ObjectSequence: token index out of range");
}

ObjectSequence build_object_sequence(std::vector<Vec2> centroids) {
  return ObjectSequence(std::move(centroids));
}

double RelationSequence::token(std::size_t i) const {
  if (i < angles_.size()) return angles_[i];
  if (i == angles_.size()) return kNonRelationToken;
  throw std::out_of_range("RelationSequence: token index out of range");
}

RelationSequence build_relation_sequence(const HandPose& hand,
                                         const ObjectSequence& objects) {
  RelationSequence relations;
  relations.angles_.reserve(objects.object_count());
  for (const Vec2& centroid : objects.centroids()) {
    const AngleResult result = angle_to_centroid(hand, centroid);
    relations.angles_.push_back(result.radians);
    relations.degenerate_ = relations.degenerate_ || result.degenerate;
  }
  return relations;
}

}  // namespace deixis
