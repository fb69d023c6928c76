#include "deixis/encoding.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace deixis {

namespace {

constexpr double kPi = 3.14159265358979323846;

Tensor uniform_init(Shape shape, double bound, Rng& rng) {
  std::vector<double> values(shape[0] * shape[1]);
  for (double& v : values) v = rng.uniform(-bound, bound);
  return Tensor::from(std::move(shape), std::move(values), true);
}

void require_even(std::size_t d_t) {
  if (d_t == 0 || d_t % 2 != 0)
    throw std::invalid_argument("encoding: d_t must be a positive even number");
}

}  // namespace

EncodingParams EncodingParams::init(std::size_t d_t, Rng& rng) {
  require_even(d_t);
  EncodingParams params;
  params.d_t = d_t;
  const double bound = 1.0;  // sqrt(1/fan_in) with scalar input
  params.pose_x = uniform_init({1, d_t / 2}, bound, rng);
  params.pose_y = uniform_init({1, d_t / 2}, bound, rng);
  params.object_x = uniform_init({1, d_t / 2}, bound, rng);
  params.object_y = uniform_init({1, d_t / 2}, bound, rng);
  params.relation_w = uniform_init({1, d_t}, bound, rng);
  return params;
}

std::array<double, 2> normalize_point(const Vec2& p, const ImageDims& dims) {
  if (!dims.valid())
    throw std::invalid_argument("normalize_point: invalid image dims");
  if (!dims.contains(p))
    throw std::invalid_argument(
        "normalize_point: point (" + std::to_string(p.x) + ", " +
        std::to_string(p.y) + ") outside image");
  return {p.x / dims.width, p.y / dims.height};
}

std::vector<double> axis_positional_encoding(double v, std::size_t d_t) {
  require_even(d_t);
  const std::size_t half = d_t / 2;
  std::vector<double> out(half);
  for (std::size_t slot = 0; slot < half; ++slot) {
    const std::size_t i = slot / 2;
    const double freq =
        std::pow(10000.0, 2.0 * static_cast<double>(i) /
                              static_cast<double>(d_t));
    out[slot] = slot % 2 == 0 ? std::sin(v / freq) : std::cos(v / freq);
  }
  return out;
}

std::vector<double> positional_encoding(double nx, double ny,
                                        std::size_t d_t) {
  std::vector<double> out = axis_positional_encoding(nx, d_t);
  const std::vector<double> ys = axis_positional_encoding(ny, d_t);
  out.insert(out.end(), ys.begin(), ys.end());
  return out;
}

Tensor embed_point(const std::array<double, 2>& p, const Tensor& proj_x,
                   const Tensor& proj_y) {
  const Tensor xs = matmul(Tensor::from({1, 1}, {p[0]}), proj_x);
  const Tensor ys = matmul(Tensor::from({1, 1}, {p[1]}), proj_y);
  const Tensor parts[] = {xs, ys};
  return concat_cols(parts);
}

Tensor embed_angle(double angle_or_sentinel, const Tensor& relation_w) {
  double value = angle_or_sentinel;
  if (value == kNonRelationToken) {
    // sentinel projected untouched; stays outside [0, 2*pi]
  } else if (value >= 0.0 && value <= kPi + 1e-12) {
    value *= 2.0;  // [0, pi] -> [0, 2*pi]
  } else {
    throw std::invalid_argument(
        "embed_angle: angle outside [0, pi] and not the sentinel");
  }
  return matmul(Tensor::from({1, 1}, {value}), relation_w);
}

AssembledInputs assemble(const HandPose& hand, const ObjectSequence& objects,
                         const RelationSequence& relations,
                         const ImageDims& dims, const EncodingParams& params) {
  if (objects.token_count() != relations.token_count())
    throw std::invalid_argument(
        "assemble: object/relation sequence lengths differ");
  const std::size_t d_t = params.d_t;
  require_even(d_t);

  // Pose stream: one column of normalized x, one of normalized y; token
  // embeddings fall out of two outer products plus the (constant)
  // positional-encoding matrix.
  const std::size_t pose_n = HandPose::kLandmarkCount;
  std::vector<double> px(pose_n), py(pose_n), pose_pe(pose_n * d_t);
  for (std::size_t i = 0; i < pose_n; ++i) {
    const auto norm = normalize_point(hand.landmark(i), dims);
    px[i] = norm[0];
    py[i] = norm[1];
    const std::vector<double> pe = positional_encoding(norm[0], norm[1], d_t);
    std::copy(pe.begin(), pe.end(), pose_pe.begin() + i * d_t);
  }
  const Tensor pose_parts[] = {
      matmul(Tensor::from({pose_n, 1}, std::move(px)), params.pose_x),
      matmul(Tensor::from({pose_n, 1}, std::move(py)), params.pose_y)};
  const Tensor pose = add(concat_cols(pose_parts),
                          Tensor::from({pose_n, d_t}, std::move(pose_pe)));

  // Object stream: real centroids are normalized and positionally encoded;
  // the sentinel keeps its raw (-1,-1) and a zero positional-encoding row.
  const std::size_t obj_n = objects.token_count();
  std::vector<double> ox(obj_n), oy(obj_n), obj_pe(obj_n * d_t, 0.0);
  for (std::size_t i = 0; i + 1 < obj_n; ++i) {
    const auto norm = normalize_point(objects.token(i), dims);
    ox[i] = norm[0];
    oy[i] = norm[1];
    const std::vector<double> pe = positional_encoding(norm[0], norm[1], d_t);
    std::copy(pe.begin(), pe.end(), obj_pe.begin() + i * d_t);
  }
  ox[obj_n - 1] = kNonObjectToken.x;
  oy[obj_n - 1] = kNonObjectToken.y;
  const Tensor obj_parts[] = {
      matmul(Tensor::from({obj_n, 1}, std::move(ox)), params.object_x),
      matmul(Tensor::from({obj_n, 1}, std::move(oy)), params.object_y)};
  const Tensor objs = add(concat_cols(obj_parts),
                          Tensor::from({obj_n, d_t}, std::move(obj_pe)));

  // Relation stream: remapped angles (or the raw sentinel), no positional
  // encoding.
  std::vector<double> rv(obj_n);
  for (std::size_t i = 0; i < obj_n; ++i) {
    const double token = relations.token(i);
    rv[i] = token == kNonRelationToken ? token : 2.0 * token;
  }
  const Tensor rels =
      matmul(Tensor::from({obj_n, 1}, std::move(rv)), params.relation_w);

  return {pose, objs, rels};
}

}  // namespace deixis
