#pragma once

#include "sage/camera.hpp"
#include "sage/dense_map.hpp"
#include "sage/depth_prior.hpp"
#include "sage/se3.hpp"
#include "sage/types.hpp"

#include <vector>

namespace sage {

// Per-frame network-style payload: the maps a keyframe is built from.
struct FrameData {
  ImageD average_depth;   // H x W, positive on mask
  DenseMap bases;         // B x H x W
  DenseMap features;      // Cf x H x W
  DenseMap descriptors;   // Cd x H x W
  MaskImage mask;         // shared validity mask
};

struct KeyframeParams {
  int pyramid_levels = 4;
  int pyramid_kernel = 5;
  double pyramid_sigma = 1.0;
  int histogram_bins = 100;
  double histogram_bandwidth = 4.0 / 500.0;
};

struct Keyframe {
  KeyframeId id = -1;
  FrameId frame_id = -1;
  Pose pose;               // world <- keyframe
  DepthPrior prior;
  FeaturePyramid features;
  DenseMap descriptors;
  MaskImage mask;
  MatX signature;          // Cd x K descriptor histogram signature
  std::vector<KeyframeId> connections;

  int height() const { return mask.height(); }
  int width() const { return mask.width(); }
};

// Builds pyramid and signature; code starts at zero, scale at `scale`.
Keyframe make_keyframe(FrameData data, const KeyframeParams& params, double scale = 1.0);

// Mean of the average depth estimate over the mask (the delta base of the
// SMG/GC robust bounds).
double mean_average_depth(const Keyframe& kf);

// 1 / (1 + mean over channels of EMD(h_a, h_b) / K); 1 for identical maps.
double signature_similarity(const MatX& a, const MatX& b);

}  // namespace sage
