#include "sage/depth_prior.hpp"

namespace sage {

bool DepthPrior::compose_sampled(double x, double y, const VecX& c, double s, double& depth,
                                 double* ddx, double* ddy) const {
  if (!sampleable(bases, x, y)) return false;
  const int ix = static_cast<int>(std::floor(x));
  const int iy = static_cast<int>(std::floor(y));
  const double ax = x - ix;
  const double ay = y - iy;

  auto lerp2 = [&](auto&& value_at, double& out, double& gx, double& gy) {
    const double v00 = value_at(iy, ix);
    const double v01 = value_at(iy, ix + 1);
    const double v10 = value_at(iy + 1, ix);
    const double v11 = value_at(iy + 1, ix + 1);
    const double top = v00 + ax * (v01 - v00);
    const double bot = v10 + ax * (v11 - v10);
    out = top + ay * (bot - top);
    gx = (1.0 - ay) * (v01 - v00) + ay * (v11 - v10);
    gy = bot - top;
  };

  double v, gx, gy;
  lerp2([&](int r, int col) { return average.at(r, col); }, v, gx, gy);
  for (int k = 0; k < bases.channels(); ++k) {
    double bv, bgx, bgy;
    lerp2([&](int r, int col) { return bases.at(k, r, col); }, bv, bgx, bgy);
    v += c(k) * bv;
    gx += c(k) * bgx;
    gy += c(k) * bgy;
  }
  depth = s * v;
  if (ddx) *ddx = s * gx;
  if (ddy) *ddy = s * gy;
  return true;
}

ComposedDepth compose_depth_map(const DepthPrior& prior) {
  return compose_depth_map(prior, prior.code, prior.scale);
}

ComposedDepth compose_depth_map(const DepthPrior& prior, const VecX& code, double scale) {
  ComposedDepth out;
  out.depth = ImageD(prior.height(), prior.width(), 0.0);
  for (int r = 0; r < prior.height(); ++r) {
    for (int c = 0; c < prior.width(); ++c) {
      if (!prior.mask().at(r, c)) continue;
      const double d = prior.compose_at(r, c, code, scale);
      out.depth.at(r, c) = d;
      if (d <= 0.0) ++out.degenerate;
    }
  }
  return out;
}

DepthPrior make_constant_prior(int height, int width, double depth, int basis_count) {
  DepthPrior prior;
  prior.average = ImageD(height, width, depth);
  prior.bases = DenseMap(basis_count, height, width);
  prior.code = VecX::Zero(basis_count);
  prior.scale = 1.0;
  return prior;
}

}  // namespace sage
