#pragma once

#include "sage/camera.hpp"
#include "sage/keyframe.hpp"
#include "sage/match_set.hpp"
#include "sage/rng.hpp"
#include "sage/se3.hpp"

#include <optional>

namespace sage {

struct MatchingParams {
  int max_candidates = 256;  // mutual-NN matches kept before filtering
  int grid_step = 2;         // keypoint grid spacing in pixels
};

// Mutual nearest-neighbor matching by L2 descriptor distance over the masked
// keypoint grids of both maps; keeps the `max_candidates` best pairs.
MatchSet match_descriptors(const DenseMap& src_desc, const DenseMap& tgt_desc,
                           const MatchingParams& params = {});

// Similarity transform q ~ scale * R p + t.
struct SimilarityTransform {
  double scale = 1.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return scale * (rotation * p) + translation; }
};

struct FilterParams {
  double noise_multiplier = 2.0;
  int ransac_iterations = 500;
  double consensus_fraction = 0.8;  // early exit
};

struct FilterResult {
  bool ok = false;
  MatchSet inliers;
  SimilarityTransform transform;
  double noise_bound = 0.0;
};

// Outlier rejection on lifted 3D correspondences: RANSAC over minimal
// similarity transforms (Umeyama on 3-point samples) with the noise bound
// noise_multiplier * median source depth * pixel angle, then a least-squares
// refit on the inlier set. Fails when fewer than 3 matches are given.
FilterResult filter_matches_3d(const MatchSet& matches, const Keyframe& src, const Keyframe& tgt,
                               const Camera& cam, const FilterParams& params, Rng& rng);

// |filtered| / candidate_count, zero when there were no candidates.
double inlier_ratio(const MatchSet& filtered, const MatchSet& candidates);

struct OverlapRatios {
  double area = 0.0;          // |omega| / |source mask|
  double point_inlier = 0.0;  // source points with target-consistent depth
};

// Scene overlap diagnostics for a keyframe pair. A source point counts as a
// point inlier when its warped depth matches the sampled target depth within
// sigma_gc * mean source average depth. `src_scale` overrides the stored
// source depth scale (used after pair-wise verification).
OverlapRatios overlap_ratios(const Keyframe& src, const Keyframe& tgt, const Pose& rel,
                             const Camera& cam, double sigma_gc,
                             std::optional<double> src_scale = std::nullopt);

}  // namespace sage
