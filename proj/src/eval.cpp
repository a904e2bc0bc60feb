#include "sage/eval.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sage {

void Trajectory::append(FrameId id, const Pose& pose) {
  if (!entries.empty() && id <= entries.back().first)
    throw std::invalid_argument("Trajectory: ids must be strictly increasing");
  entries.emplace_back(id, pose);
}

AlignedPair sync_and_align(const Trajectory& estimate, const Trajectory& reference) {
  AlignedPair out;
  size_t ie = 0, ir = 0;
  std::vector<const Pose*> est_poses, ref_poses;
  while (ie < estimate.entries.size() && ir < reference.entries.size()) {
    const FrameId a = estimate.entries[ie].first;
    const FrameId b = reference.entries[ir].first;
    if (a == b) {
      out.ids.push_back(a);
      est_poses.push_back(&estimate.entries[ie].second);
      ref_poses.push_back(&reference.entries[ir].second);
      ++ie;
      ++ir;
    } else if (a < b) {
      ++ie;
    } else {
      ++ir;
    }
  }
  const int n = static_cast<int>(out.ids.size());
  if (n < 3) throw std::runtime_error("sync_and_align: fewer than 3 common ids");

  MatX src(3, n), dst(3, n);
  for (int i = 0; i < n; ++i) {
    src.col(i) = est_poses[i]->translation();
    dst.col(i) = ref_poses[i]->translation();
  }
  const Eigen::Matrix4d t = Eigen::umeyama(src, dst, true);
  const Mat3 linear = t.topLeftCorner<3, 3>();
  out.transform.scale = std::cbrt(linear.determinant());
  out.transform.rotation = linear / out.transform.scale;
  out.transform.translation = t.topRightCorner<3, 1>();

  out.estimate.reserve(n);
  out.reference.reserve(n);
  for (int i = 0; i < n; ++i) {
    out.estimate.emplace_back(out.transform.rotation * est_poses[i]->rotation(),
                              out.transform.apply(est_poses[i]->translation()));
    out.reference.push_back(*ref_poses[i]);
  }
  return out;
}

AteResult ate(const AlignedPair& pair) {
  const int n = static_cast<int>(pair.estimate.size());
  if (n == 0) throw std::runtime_error("ate: empty pairing");
  double rot_sq = 0.0;
  double trans_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const Mat3 r_err = pair.reference[i].rotation() * pair.estimate[i].rotation().transpose();
    rot_sq += so3_log(r_err).squaredNorm();
    const Vec3 t_err = pair.reference[i].translation() - r_err * pair.estimate[i].translation();
    trans_sq += t_err.squaredNorm();
  }
  AteResult out;
  out.rot_deg = std::sqrt(rot_sq / n) * 180.0 / M_PI;
  out.trans = std::sqrt(trans_sq / n);
  return out;
}

RpeResult rpe(const AlignedPair& pair, int delta) {
  const int n = static_cast<int>(pair.estimate.size());
  if (n <= delta) throw std::runtime_error("rpe: trajectory shorter than delta");
  double rot_sq = 0.0;
  double trans_sq = 0.0;
  const int count = n - delta;
  for (int i = 0; i < count; ++i) {
    const Pose ref_rel = pair.reference[i].inverse() * pair.reference[i + delta];
    const Pose est_rel = pair.estimate[i].inverse() * pair.estimate[i + delta];
    const Pose err = ref_rel.inverse() * est_rel;
    rot_sq += so3_log(err.rotation()).squaredNorm();
    trans_sq += err.translation().squaredNorm();
  }
  RpeResult out;
  out.rot_deg = std::sqrt(rot_sq / count) * 180.0 / M_PI;
  out.trans = std::sqrt(trans_sq / count);
  return out;
}

DepthMetrics depth_metrics(const std::vector<ImageD>& estimate, const std::vector<ImageD>& reference,
                           const std::vector<MaskImage>& masks, DepthScaling scaling,
                           double trajectory_scale, const std::vector<double>& thetas) {
  const size_t n = estimate.size();
  if (reference.size() != n || masks.size() != n)
    throw std::invalid_argument("depth_metrics: frame count mismatch");
  DepthMetrics out;
  out.threshold.assign(thetas.size(), 0.0);
  double ard_sum = 0.0;
  std::vector<double> thresh_sum(thetas.size(), 0.0);
  int frames_used = 0;

  for (size_t f = 0; f < n; ++f) {
    const ImageD& est = estimate[f];
    const ImageD& ref = reference[f];
    const MaskImage& mask = masks[f];
    std::vector<std::pair<double, double>> valid;  // (est, ref)
    for (int r = 0; r < est.height(); ++r)
      for (int c = 0; c < est.width(); ++c)
        if (mask.at(r, c) && est.at(r, c) > 0.0 && ref.at(r, c) > 0.0)
          valid.emplace_back(est.at(r, c), ref.at(r, c));
    if (valid.empty()) continue;
    ++frames_used;

    double scale = trajectory_scale;
    if (scaling == DepthScaling::PerFrameMedian) {
      std::vector<double> ratios;
      ratios.reserve(valid.size());
      for (const auto& [e, g] : valid) ratios.push_back(g / e);
      const size_t mid = ratios.size() / 2;
      std::nth_element(ratios.begin(), ratios.begin() + mid, ratios.end());
      scale = ratios[mid];
    }

    double ard = 0.0;
    std::vector<long> thresh_count(thetas.size(), 0);
    for (const auto& [e, g] : valid) {
      const double d = e * scale;
      ard += std::abs(d - g) / g;
      const double ratio = std::max(d / g, g / d);
      for (size_t t = 0; t < thetas.size(); ++t)
        if (ratio < thetas[t]) ++thresh_count[t];
    }
    ard_sum += ard / valid.size();
    for (size_t t = 0; t < thetas.size(); ++t)
      thresh_sum[t] += static_cast<double>(thresh_count[t]) / valid.size();
  }

  if (frames_used == 0) throw std::runtime_error("depth_metrics: no frame with a valid region");
  out.ard = ard_sum / frames_used;
  for (size_t t = 0; t < thetas.size(); ++t) out.threshold[t] = thresh_sum[t] / frames_used;
  return out;
}

}  // namespace sage
