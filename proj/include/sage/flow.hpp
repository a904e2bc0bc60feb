#pragma once

#include "sage/camera.hpp"
#include "sage/keyframe.hpp"
#include "sage/losses.hpp"
#include "sage/se3.hpp"

#include <optional>
#include <vector>

namespace sage {

struct FlowField {
  Flow flow;                                  // defined on omega, zero elsewhere
  std::vector<std::pair<int, int>> omega;     // (row, col) source pixels with a valid warp
  MaskImage omega_mask;

  bool empty() const { return omega.empty(); }
};

// Dense 2D flow of the source keyframe warped into the target by
// rel = T^tgt_src using the source's composed depth (floored at kDepthFloor).
// A source pixel enters omega when it is masked, its warped point is in front
// of the camera and its landing 4-neighborhood lies inside the target mask.
// `src_scale` overrides the stored source depth scale.
FlowField compute_flow(const Keyframe& src, const Keyframe& tgt, const Pose& rel,
                       const Camera& cam, std::optional<double> src_scale = std::nullopt);

// Mean flow norm over omega; throws when omega is empty.
double mean_flow_magnitude(const FlowField& field);

}  // namespace sage
