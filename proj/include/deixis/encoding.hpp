#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "deixis/geometry.hpp"
#include "deixis/rng.hpp"
#include "deixis/tensor.hpp"

namespace deixis {

// Learned projections taking raw features to the shared d_T-wide token space.
// Points are embedded per axis at d_T/2 and concatenated; angles project
// straight to d_T.
struct EncodingParams {
  std::size_t d_t = 0;
  Tensor pose_x, pose_y;      // (1, d_t/2) each
  Tensor object_x, object_y;  // (1, d_t/2) each
  Tensor relation_w;          // (1, d_t)

  // Uniform +-sqrt(1/fan_in) initialization, fan_in = 1 scalar per map.
  static EncodingParams init(std::size_t d_t, Rng& rng);
};

// (x/W, y/H); sentinels never reach this (callers route them around it).
std::array<double, 2> normalize_point(const Vec2& p, const ImageDims& dims);

// Per-axis sinusoidal encoding of a normalized coordinate: d_t/2 slots per
// axis, sin at even slots and cos at odd slots with frequency 10000^(2i/d_t),
// the two axes concatenated.
std::vector<double> positional_encoding(double nx, double ny, std::size_t d_t);
std::vector<double> axis_positional_encoding(double v, std::size_t d_t);

// Single-token embeddings; the first half of an embedded point depends only
// on x and the second half only on y.
Tensor embed_point(const std::array<double, 2>& p, const Tensor& proj_x,
                   const Tensor& proj_y);
// Valid angles are stretched from [0, pi] onto [0, 2*pi] before projection;
// the -1 sentinel is projected as-is. No positional encoding for angles.
Tensor embed_angle(double angle_or_sentinel, const Tensor& relation_w);

struct AssembledInputs {
  Tensor pose;       // (21, d_t)
  Tensor objects;    // (N_t + 1, d_t)
  Tensor relations;  // (N_t + 1, d_t)
};

// Full token assembly: pose and object tokens are normalized, embedded and
// positionally encoded; the sentinel object token is embedded from its raw
// (-1,-1) with no normalization and no positional encoding.
AssembledInputs assemble(const HandPose& hand, const ObjectSequence& objects,
                         const RelationSequence& relations,
                         const ImageDims& dims, const EncodingParams& params);

}  // namespace deixis
