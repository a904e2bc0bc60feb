#pragma once

#include "sage/dense_map.hpp"
#include "sage/types.hpp"

namespace sage {

// Depth floor applied wherever a composed depth feeds a projection or
// unprojection inside factor evaluation (scene units).
inline constexpr double kDepthFloor = 1e-4;

// Compact depth model D(x) = s * (avg(x) + code^T bases(x)).
// `average` is positive on the mask, basis values live in (-1, 1); the mask is
// carried by `bases`. `code` and `scale` are the current estimates; optimizers
// override them with their own state.
struct DepthPrior {
  ImageD average;
  DenseMap bases;
  VecX code;
  double scale = 1.0;

  int basis_count() const { return bases.channels(); }
  int height() const { return bases.height(); }
  int width() const { return bases.width(); }
  const MaskImage& mask() const { return bases.mask(); }

  double compose_at(int row, int col) const { return compose_at(row, col, code, scale); }

  double compose_at(int row, int col, const VecX& c, double s) const {
    double v = average.at(row, col);
    for (int k = 0; k < bases.channels(); ++k) v += c(k) * bases.at(k, row, col);
    return s * v;
  }

  // Bilinear composition at a continuous location; false when not sampleable.
  bool compose_sampled(double x, double y, const VecX& c, double s, double& depth,
                       double* ddx = nullptr, double* ddy = nullptr) const;
};

struct ComposedDepth {
  ImageD depth;         // composed values; unclamped
  int degenerate = 0;   // count of valid pixels with depth <= 0
};

ComposedDepth compose_depth_map(const DepthPrior& prior);
ComposedDepth compose_depth_map(const DepthPrior& prior, const VecX& code, double scale);

// Uniform DepthPrior helpers used across tests and the simulator.
DepthPrior make_constant_prior(int height, int width, double depth, int basis_count);

}  // namespace sage
