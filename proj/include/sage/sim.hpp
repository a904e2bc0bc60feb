#pragma once

#include "sage/camera.hpp"
#include "sage/flow.hpp"
#include "sage/keyframe.hpp"
#include "sage/se3.hpp"

#include <string>
#include <vector>

namespace sage {

enum class TrajectoryKind { Sweep, Orbit, Loop, RandomWalk };
enum class MaskKind { Full, Circular };

TrajectoryKind trajectory_kind_from_string(const std::string& name);
std::string to_string(TrajectoryKind kind);
MaskKind mask_kind_from_string(const std::string& name);
std::string to_string(MaskKind kind);

// Scene units are normalized so the working volume spans about one unit;
// tolerances quoted as a fraction of the scene diameter use 1.0.
inline constexpr double kSceneDiameter = 1.0;

struct SceneConfig {
  uint64_t seed = 42;
  int height = 64;
  int width = 80;
  int frames = 30;
  TrajectoryKind trajectory = TrajectoryKind::Sweep;
  int basis_count = 8;
  int feature_channels = 8;
  int descriptor_channels = 16;
  double noise_depth_rel = 0.0;   // relative amplitude of the avg-depth error field
  double noise_feature_abs = 0.0; // per-pixel noise on feature/descriptor maps
  double noise_pose_init = 0.0;   // perturbation of the recorded init poses
  MaskKind mask = MaskKind::Full;
  int pyramid_levels = 4;         // only used to validate divisibility
};

struct FrameObservation {
  Pose gt_pose;    // world <- camera
  Pose init_pose;  // gt perturbed by noise_pose_init
  ImageD gt_depth;
  VecX gt_code;    // code with which the prior composes to the gt depth
  double gt_scale = 1.0;
  FrameData data;
};

struct Sequence {
  Camera camera;
  SceneConfig config;
  std::vector<FrameObservation> frames;
};

// Renders a synthetic sequence: a smooth positive surface observed along the
// configured trajectory, per-frame depth priors whose gt code reproduces the
// gt depth, and view-consistent feature/descriptor maps evaluated on the
// 3D surface points.
Sequence generate_sequence(const SceneConfig& config);

// Exact flow between two frames of a sequence from gt depth and gt poses.
FlowField analytic_flow(const Sequence& seq, int frame_a, int frame_b);

}  // namespace sage
