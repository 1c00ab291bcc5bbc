#pragma once

#include "oob/geometry.hpp"
#include "oob/tape.hpp"
#include "oob/tensor.hpp"

namespace oob {

// Trigger patch: Tensor of shape [3,U,V] (U rows, V cols), values in [0,1].
using TriggerImage = Tensor;

struct PlacementRule {
  enum class Mode { below, above, left, right };
  Mode mode = Mode::below;
  Scalar relative_scale = 1.0;
  Scalar gap_fraction = 0.1;
};

// Forward affine map from trigger coordinates to image coordinates, both
// normalized so that the extent [-1,1] spans the full patch / image:
//   u' = s_h * (cos(alpha) * u - sin(alpha) * v) + t_h
//   v' = s_v * (sin(alpha) * u + cos(alpha) * v) + t_v
struct AffineParams {
  Scalar s_h = 1;
  Scalar s_v = 1;
  Scalar alpha = 0;
  Scalar t_h = 0;
  Scalar t_v = 0;
};

// Region next to `box` where the trigger will be rendered. The region never
// intersects the box and is shifted inward along the free axis if it would
// exit the image; if no legal region exists the call throws a placement error.
// For mode below/above the region width is box width * relative_scale and the
// height follows the trigger aspect U:V; the gap is gap_fraction * box height.
// For left/right the roles of the axes swap.
BoundingBox placement(const BoundingBox& box, const PlacementRule& rule, int trigger_rows,
                      int trigger_cols, int image_h, int image_w);

// Affine parameters that map the trigger extent onto `region`, alpha = 0.
AffineParams affine_params(const BoundingBox& region, int image_h, int image_w);

// Applies the forward map to a point in trigger coordinates.
void map_point(const AffineParams& params, Scalar u, Scalar v, Scalar& out_u, Scalar& out_v);

// Warps the trigger into the image with bilinear sampling. Output equals the
// input outside the warped footprint.
Tensor render(const Tensor& image, const Tensor& trigger, const AffineParams& params);

// Tape version: gradient flows to the trigger pixels through the bilinear
// weights and to the base image outside the footprint. Renders can be chained
// by feeding one composite in as the next base.
Var render_op(Tape& tape, Var base, Var trigger, const AffineParams& params);
Var render_op(Tape& tape, const Tensor& image, Var trigger, const AffineParams& params);

// [H,W] tensor, 1 inside the warped trigger footprint and 0 outside.
Tensor footprint_mask(const AffineParams& params, int image_h, int image_w);

}  // namespace oob
