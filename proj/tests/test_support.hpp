// Shared helpers for building small random problem instances in tests.
#pragma once

#include "sage/factors.hpp"
#include "sage/keyframe.hpp"
#include "sage/rng.hpp"

#include <cmath>
#include <utility>
#include <vector>

namespace sage::test {

// Smooth random field over pixel coordinates, bounded by `amplitude`.
inline ImageD smooth_field(Rng& rng, int h, int w, double amplitude) {
  ImageD out(h, w, 0.0);
  struct Wave {
    double fu, fv, amp, phase;
  };
  std::vector<Wave> waves;
  double total = 0.0;
  for (int j = 0; j < 4; ++j) {
    Wave wv{rng.uniform(0.4, 1.8), rng.uniform(0.4, 1.8), rng.uniform(0.5, 1.0),
            rng.uniform(0.0, 2.0 * M_PI)};
    total += wv.amp;
    waves.push_back(wv);
  }
  for (auto& wv : waves) wv.amp *= amplitude / total;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      double v = 0.0;
      for (const auto& wv : waves)
        v += wv.amp * std::sin(2.0 * M_PI * (wv.fu * c / w + wv.fv * r / h) + wv.phase);
      out.at(r, c) = v;
    }
  return out;
}

struct RandomKeyframeOptions {
  int height = 8;
  int width = 10;
  int bases = 3;
  int feature_channels = 4;
  int descriptor_channels = 4;
  int levels = 2;
  double depth_base = 1.0;
};

inline Keyframe random_keyframe(Rng& rng, const RandomKeyframeOptions& opt = {}) {
  const int h = opt.height;
  const int w = opt.width;
  FrameData data;
  data.mask = MaskImage(h, w, 1);
  data.average_depth = ImageD(h, w, 0.0);
  const ImageD bump = smooth_field(rng, h, w, 0.3);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) data.average_depth.at(r, c) = opt.depth_base + bump.at(r, c);
  data.bases = DenseMap(opt.bases, h, w, data.mask);
  for (int k = 0; k < opt.bases; ++k) {
    const ImageD field = smooth_field(rng, h, w, 0.5);
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) data.bases.at(k, r, c) = field.at(r, c);
  }
  data.features = DenseMap(opt.feature_channels, h, w, data.mask);
  for (int k = 0; k < opt.feature_channels; ++k) {
    const ImageD field = smooth_field(rng, h, w, 0.8);
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) data.features.at(k, r, c) = field.at(r, c);
  }
  data.descriptors = DenseMap(opt.descriptor_channels, h, w, data.mask);
  for (int k = 0; k < opt.descriptor_channels; ++k) {
    const ImageD field = smooth_field(rng, h, w, 0.8);
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) data.descriptors.at(k, r, c) = field.at(r, c);
  }
  KeyframeParams params;
  params.pyramid_levels = opt.levels;
  params.histogram_bins = 20;
  params.histogram_bandwidth = 4.0 / 100.0;
  return make_keyframe(std::move(data), params, 1.0);
}

inline Camera test_camera(int h, int w) {
  return Camera(1.6 * w, 1.6 * w, (w - 1) / 2.0, (h - 1) / 2.0, w, h);
}

inline Pose random_pose_near_identity(Rng& rng, double trans, double rot) {
  Vec6 xi;
  for (int i = 0; i < 3; ++i) xi(i) = rng.uniform(-trans, trans);
  for (int i = 3; i < 6; ++i) xi(i) = rng.uniform(-rot, rot);
  return Pose::exp(xi);
}

// Two-slot state with a small relative motion and mild scale/code offsets.
inline State random_pair_state(Rng& rng, int bases) {
  State state = State::sized(2);
  state.pose[0] = random_pose_near_identity(rng, 0.02, 0.02);
  state.pose[1] = random_pose_near_identity(rng, 0.02, 0.02);
  state.log_scale[0] = rng.uniform(-0.1, 0.1);
  state.log_scale[1] = rng.uniform(-0.1, 0.1);
  state.code[0] = VecX::Zero(bases);
  state.code[1] = VecX::Zero(bases);
  for (int k = 0; k < bases; ++k) {
    state.code[0](k) = rng.uniform(-0.2, 0.2);
    state.code[1](k) = rng.uniform(-0.2, 0.2);
  }
  return state;
}

inline MatchSet random_matches(Rng& rng, int h, int w, int count) {
  MatchSet m;
  m.candidate_count = count;
  for (int i = 0; i < count; ++i) {
    m.pairs.emplace_back(
        Vec2(1 + static_cast<int>(rng.uniform_index(w - 2)),
             1 + static_cast<int>(rng.uniform_index(h - 2))),
        Vec2(1 + static_cast<int>(rng.uniform_index(w - 2)),
             1 + static_cast<int>(rng.uniform_index(h - 2))));
  }
  return m;
}

// Central finite-difference gradient over the factor's variables with the
// support frozen at `state`; returns per-variable gradients.
inline std::vector<VecX> fd_gradient(Factor& factor, const State& state, double h = 1e-6) {
  factor.freeze_support(state);
  std::vector<VecX> out;
  for (const SlotVar& var : factor.variables()) {
    int dim = 0;
    switch (var.kind) {
      case VarKind::Pose: dim = 6; break;
      case VarKind::Scale: dim = 1; break;
      case VarKind::Code: dim = static_cast<int>(state.code[var.slot].size()); break;
    }
    VecX grad(dim);
    for (int i = 0; i < dim; ++i) {
      State plus = state;
      State minus = state;
      switch (var.kind) {
        case VarKind::Pose: {
          Vec6 xi = Vec6::Zero();
          xi(i) = h;
          plus.pose[var.slot] = state.pose[var.slot].retract(xi);
          xi(i) = -h;
          minus.pose[var.slot] = state.pose[var.slot].retract(xi);
          break;
        }
        case VarKind::Scale:
          plus.log_scale[var.slot] += h;
          minus.log_scale[var.slot] -= h;
          break;
        case VarKind::Code:
          plus.code[var.slot](i) += h;
          minus.code[var.slot](i) -= h;
          break;
      }
      grad(i) = (factor.evaluate(plus) - factor.evaluate(minus)) / (2.0 * h);
    }
    out.push_back(grad);
  }
  factor.unfreeze_support();
  return out;
}

// Max relative gradient error between analytic and finite differences.
inline double jacobian_relative_error(Factor& factor, const State& state) {
  FactorLinearization lin;
  factor.freeze_support(state);
  factor.linearize(state, lin);
  factor.unfreeze_support();
  const std::vector<VecX> fd = fd_gradient(factor, state);
  double worst = 0.0;
  for (size_t i = 0; i < fd.size(); ++i) {
    const double scale = std::max(fd[i].norm(), 1e-6);
    worst = std::max(worst, (lin.grad[i] - fd[i]).norm() / scale);
  }
  return worst;
}

}  // namespace sage::test
