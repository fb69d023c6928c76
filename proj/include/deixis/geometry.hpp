#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

namespace deixis {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  bool operator==(const Vec2& o) const { return x == o.x && y == o.y; }

  double dot(const Vec2& o) const { return x * o.x + y * o.y; }
  double cross(const Vec2& o) const { return x * o.y - y * o.x; }
  double norm() const { return std::hypot(x, y); }
};

struct ImageDims {
  double width = 0.0;
  double height = 0.0;

  bool valid() const { return width > 0.0 && height > 0.0; }
  bool contains(const Vec2& p) const {
    return p.x >= 0.0 && p.x <= width && p.y >= 0.0 && p.y <= height;
  }
};

// Appended sentinels; chosen outside valid image/angle space, which is
// nonnegative for both.
inline constexpr Vec2 kNonObjectToken{-1.0, -1.0};
inline constexpr double kNonRelationToken = -1.0;

// One hand as 21 ordered 2D landmarks, standard hand topology
// (0 wrist, 1-4 thumb, 5-8 index, 9-12 middle, 13-16 ring, 17-20 pinky).
class HandPose {
 public:
  static constexpr std::size_t kLandmarkCount = 21;
  static constexpr std::size_t kWrist = 0;
  static constexpr std::size_t kIndexFingerDip = 7;
  static constexpr std::size_t kIndexFingerTip = 8;

  HandPose() = default;
  explicit HandPose(std::array<Vec2, kLandmarkCount> landmarks)
      : landmarks_(landmarks) {}

  const Vec2& landmark(std::size_t i) const { return landmarks_.at(i); }
  const Vec2& wrist() const { return landmarks_[kWrist]; }
  const Vec2& index_dip() const { return landmarks_[kIndexFingerDip]; }
  const Vec2& index_tip() const { return landmarks_[kIndexFingerTip]; }

  const std::array<Vec2, kLandmarkCount>& landmarks() const {
    return landmarks_;
  }
  std::array<Vec2, kLandmarkCount>& landmarks() { return landmarks_; }

  bool inside(const ImageDims& dims) const;

 private:
  std::array<Vec2, kLandmarkCount> landmarks_{};
};

struct BBox {
  double x_min, y_min, x_max, y_max;
};

// Center of a bounding box; throws on a degenerate box.
Vec2 centroid_of_bbox(const BBox& box);

// Index fingertip minus index DIP: the local pointing direction.
Vec2 finger_vector(const HandPose& hand);

struct AngleResult {
  double radians = 0.0;
  bool degenerate = false;
};

// Unsigned angle in [0, pi] between the finger vector and the
// fingertip-to-centroid vector. Degenerate geometry (zero finger vector or
// centroid at the fingertip) yields a neutral pi/2 with the flag set.
AngleResult angle_to_centroid(const HandPose& hand, const Vec2& centroid);

// Detected object centroids in input order plus the trailing non-object
// token; token(object_count()) is always the sentinel.
class ObjectSequence {
 public:
  ObjectSequence() = default;
  explicit ObjectSequence(std::vector<Vec2> centroids)
      : centroids_(std::move(centroids)) {}

  std::size_t object_count() const { return centroids_.size(); }
  std::size_t token_count() const { return centroids_.size() + 1; }
  std::size_t sentinel_index() const { return centroids_.size(); }

  Vec2 token(std::size_t i) const;
  const std::vector<Vec2>& centroids() const { return centroids_; }
  std::vector<Vec2>& centroids() { return centroids_; }

 private:
  std::vector<Vec2> centroids_;
};

ObjectSequence build_object_sequence(std::vector<Vec2> centroids);

// Finger-to-centroid angles aligned with the object sequence, plus the
// trailing non-relation token (-1).
class RelationSequence {
 public:
  RelationSequence() = default;

  std::size_t token_count() const { return angles_.size() + 1; }
  std::size_t sentinel_index() const { return angles_.size(); }

  double token(std::size_t i) const;
  const std::vector<double>& angles() const { return angles_; }
  bool degenerate() const { return degenerate_; }

 private:
  friend RelationSequence build_relation_sequence(const HandPose&,
                                                  const ObjectSequence&);
  std::vector<double> angles_;
  bool degenerate_ = false;
};

RelationSequence build_relation_sequence(const HandPose& hand,
                                         const ObjectSequence& objects);

}  // namespace deixis
