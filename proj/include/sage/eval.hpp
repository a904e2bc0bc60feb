#pragma once

#include "sage/matching.hpp"
#include "sage/se3.hpp"
#include "sage/types.hpp"

#include <vector>

namespace sage {

// Time-ordered world poses keyed by frame id.
struct Trajectory {
  std::vector<std::pair<FrameId, Pose>> entries;

  int size() const { return static_cast<int>(entries.size()); }
  void append(FrameId id, const Pose& pose);
};

struct AlignedPair {
  std::vector<FrameId> ids;
  std::vector<Pose> estimate;  // similarity-aligned onto the reference
  std::vector<Pose> reference;
  SimilarityTransform transform;  // estimate -> reference
};

// Pairs trajectories by id and aligns the estimate with the closed-form
// least-squares similarity transform over the paired positions.
// Throws when fewer than 3 ids are shared.
AlignedPair sync_and_align(const Trajectory& estimate, const Trajectory& reference);

struct AteResult {
  double rot_deg = 0.0;
  double trans = 0.0;
};

AteResult ate(const AlignedPair& pair);

struct RpeResult {
  double rot_deg = 0.0;
  double trans = 0.0;
};

// Relative pose error over a fixed index interval delta; throws when the
// paired trajectory is not longer than delta.
RpeResult rpe(const AlignedPair& pair, int delta = 7);

enum class DepthScaling { TrajectoryScale, PerFrameMedian };

struct DepthMetrics {
  double ard = 0.0;
  std::vector<double> threshold;  // one entry per theta
};

// Absolute relative difference and threshold metrics over per-frame depth
// maps. Scaling either multiplies every estimate by `trajectory_scale` or by
// the per-frame median of reference/estimate ratios. The valid region is the
// mask intersected with positive depths on both sides.
DepthMetrics depth_metrics(const std::vector<ImageD>& estimate, const std::vector<ImageD>& reference,
                           const std::vector<MaskImage>& masks, DepthScaling scaling,
                           double trajectory_scale, const std::vector<double>& thetas);

}  // namespace sage
