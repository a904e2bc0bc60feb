#include "sage/flow.hpp"

#include <cmath>
#include <stdexcept>

namespace sage {

FlowField compute_flow(const Keyframe& src, const Keyframe& tgt, const Pose& rel,
                       const Camera& cam, std::optional<double> src_scale) {
  const double scale = src_scale.value_or(src.prior.scale);
  const int h = src.height();
  const int w = src.width();
  FlowField field;
  field.flow.u = ImageD(h, w, 0.0);
  field.flow.v = ImageD(h, w, 0.0);
  field.omega_mask = MaskImage(h, w, 0);
  field.omega.reserve(static_cast<size_t>(h) * w);

  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (!src.mask.at(r, c)) continue;
      double depth = src.prior.compose_at(r, c, src.prior.code, scale);
      if (depth < kDepthFloor) depth = kDepthFloor;
      const Vec3 p = rel * unproject(cam, Vec2(c, r), depth);
      Vec2 uv;
      if (!project_checked(cam, p, uv)) continue;
      if (!mask_sampleable(tgt.mask, uv.x(), uv.y())) continue;
      field.flow.u.at(r, c) = uv.x() - c;
      field.flow.v.at(r, c) = uv.y() - r;
      field.omega_mask.at(r, c) = 1;
      field.omega.emplace_back(r, c);
    }
  }
  return field;
}

double mean_flow_magnitude(const FlowField& field) {
  if (field.omega.empty()) throw std::runtime_error("mean_flow_magnitude: empty omega");
  double sum = 0.0;
  for (const auto& [r, c] : field.omega) {
    const double u = field.flow.u.at(r, c);
    const double v = field.flow.v.at(r, c);
    sum += std::sqrt(u * u + v * v);
  }
  return sum / static_cast<double>(field.omega.size());
}

}  // namespace sage
