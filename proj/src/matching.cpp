#include "sage/matching.hpp"

#include "sage/depth_prior.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sage {

namespace {

struct GridPoint {
  int row;
  int col;
};

std::vector<GridPoint> keypoint_grid(const MaskImage& mask, int step) {
  std::vector<GridPoint> pts;
  for (int r = 0; r < mask.height(); r += step)
    for (int c = 0; c < mask.width(); c += step)
      if (mask.at(r, c)) pts.push_back({r, c});
  return pts;
}

}  // namespace

MatchSet match_descriptors(const DenseMap& src_desc, const DenseMap& tgt_desc,
                           const MatchingParams& params) {
  if (src_desc.channels() != tgt_desc.channels())
    throw std::invalid_argument("match_descriptors: channel mismatch");
  const int channels = src_desc.channels();
  const auto src_pts = keypoint_grid(src_desc.mask(), params.grid_step);
  const auto tgt_pts = keypoint_grid(tgt_desc.mask(), params.grid_step);
  MatchSet out;
  if (src_pts.empty() || tgt_pts.empty()) return out;

  // Pack descriptors for cache-friendly distance computation.
  const int ns = static_cast<int>(src_pts.size());
  const int nt = static_cast<int>(tgt_pts.size());
  MatX src_mat(channels, ns), tgt_mat(channels, nt);
  for (int i = 0; i < ns; ++i)
    for (int ch = 0; ch < channels; ++ch)
      src_mat(ch, i) = src_desc.at(ch, src_pts[i].row, src_pts[i].col);
  for (int j = 0; j < nt; ++j)
    for (int ch = 0; ch < channels; ++ch)
      tgt_mat(ch, j) = tgt_desc.at(ch, tgt_pts[j].row, tgt_pts[j].col);

  const VecX src_sq = src_mat.colwise().squaredNorm();
  const VecX tgt_sq = tgt_mat.colwise().squaredNorm();

  std::vector<int> best_tgt(ns, -1);
  std::vector<double> best_tgt_dist(ns, 0.0);
  std::vector<int> best_src(nt, -1);
  std::vector<double> best_src_dist(nt, 0.0);

  // One pass over the distance matrix in blocks keeps memory bounded.
  constexpr int kBlock = 256;
  MatX block;
  for (int j0 = 0; j0 < nt; j0 += kBlock) {
    const int len = std::min(kBlock, nt - j0);
    block.noalias() = src_mat.transpose() * tgt_mat.middleCols(j0, len);
    for (int i = 0; i < ns; ++i) {
      for (int j = 0; j < len; ++j) {
        const double d = src_sq(i) + tgt_sq(j0 + j) - 2.0 * block(i, j);
        if (best_tgt[i] < 0 || d < best_tgt_dist[i]) {
          best_tgt[i] = j0 + j;
          best_tgt_dist[i] = d;
        }
        if (best_src[j0 + j] < 0 || d < best_src_dist[j0 + j]) {
          best_src[j0 + j] = i;
          best_src_dist[j0 + j] = d;
        }
      }
    }
  }

  std::vector<std::pair<double, int>> mutual;  // (distance, src index)
  for (int i = 0; i < ns; ++i)
    if (best_tgt[i] >= 0 && best_src[best_tgt[i]] == i) mutual.emplace_back(best_tgt_dist[i], i);
  std::stable_sort(mutual.begin(), mutual.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  if (static_cast<int>(mutual.size()) > params.max_candidates)
    mutual.resize(params.max_candidates);

  out.pairs.reserve(mutual.size());
  for (const auto& [dist, i] : mutual) {
    const GridPoint& s = src_pts[i];
    const GridPoint& t = tgt_pts[best_tgt[i]];
    out.pairs.emplace_back(Vec2(s.col, s.row), Vec2(t.col, t.row));
  }
  out.candidate_count = static_cast<int>(out.pairs.size());
  return out;
}

namespace {

SimilarityTransform umeyama_fit(const MatX& src, const MatX& tgt) {
  const Eigen::Matrix4d t = Eigen::umeyama(src, tgt, true);
  SimilarityTransform sim;
  const Mat3 linear = t.topLeftCorner<3, 3>();
  sim.scale = std::cbrt(linear.determinant());
  sim.rotation = linear / sim.scale;
  sim.translation = t.topRightCorner<3, 1>();
  return sim;
}

}  // namespace

FilterResult filter_matches_3d(const MatchSet& matches, const Keyframe& src, const Keyframe& tgt,
                               const Camera& cam, const FilterParams& params, Rng& rng) {
  FilterResult out;
  const int n = matches.size();
  if (n < 3) return out;

  // Lift both sides with the current composed depths.
  MatX src_pts(3, n), tgt_pts(3, n);
  std::vector<double> src_depths(n);
  for (int i = 0; i < n; ++i) {
    const auto& [xs, xt] = matches.pairs[i];
    double ds = src.prior.compose_at(static_cast<int>(xs.y()), static_cast<int>(xs.x()));
    double dt = tgt.prior.compose_at(static_cast<int>(xt.y()), static_cast<int>(xt.x()));
    ds = std::max(ds, kDepthFloor);
    dt = std::max(dt, kDepthFloor);
    src_pts.col(i) = unproject(cam, xs, ds);
    tgt_pts.col(i) = unproject(cam, xt, dt);
    src_depths[i] = ds;
  }

  std::vector<double> sorted_depths = src_depths;
  std::nth_element(sorted_depths.begin(), sorted_depths.begin() + n / 2, sorted_depths.end());
  const double median_depth = sorted_depths[n / 2];
  const double pixel_angle = 1.0 / cam.fx;
  out.noise_bound = params.noise_multiplier * median_depth * pixel_angle;
  const double bound_sq = out.noise_bound * out.noise_bound;

  auto count_inliers = [&](const SimilarityTransform& sim, std::vector<int>* indices) {
    int count = 0;
    for (int i = 0; i < n; ++i) {
      const Vec3 mapped = sim.apply(src_pts.col(i));
      if ((mapped - tgt_pts.col(i)).squaredNorm() <= bound_sq) {
        ++count;
        if (indices) indices->push_back(i);
      }
    }
    return count;
  };

  int best_count = 0;
  SimilarityTransform best_sim;
  MatX sample_src(3, 3), sample_tgt(3, 3);
  const int target_count = static_cast<int>(std::ceil(params.consensus_fraction * n));
  for (int iter = 0; iter < params.ransac_iterations; ++iter) {
    int a = static_cast<int>(rng.uniform_index(n));
    int b = static_cast<int>(rng.uniform_index(n));
    int c = static_cast<int>(rng.uniform_index(n));
    if (a == b || a == c || b == c) continue;
    sample_src.col(0) = src_pts.col(a);
    sample_src.col(1) = src_pts.col(b);
    sample_src.col(2) = src_pts.col(c);
    sample_tgt.col(0) = tgt_pts.col(a);
    sample_tgt.col(1) = tgt_pts.col(b);
    sample_tgt.col(2) = tgt_pts.col(c);
    const SimilarityTransform sim = umeyama_fit(sample_src, sample_tgt);
    if (!(sim.scale > 1e-6) || !sim.translation.allFinite()) continue;
    const int count = count_inliers(sim, nullptr);
    if (count > best_count) {
      best_count = count;
      best_sim = sim;
      if (count >= target_count) break;
    }
  }
  if (best_count < 3) return out;

  // Least-squares refit on the consensus set, then final inlier selection.
  std::vector<int> inlier_idx;
  count_inliers(best_sim, &inlier_idx);
  MatX fit_src(3, inlier_idx.size()), fit_tgt(3, inlier_idx.size());
  for (size_t i = 0; i < inlier_idx.size(); ++i) {
    fit_src.col(i) = src_pts.col(inlier_idx[i]);
    fit_tgt.col(i) = tgt_pts.col(inlier_idx[i]);
  }
  const SimilarityTransform refit = umeyama_fit(fit_src, fit_tgt);
  std::vector<int> final_idx;
  count_inliers(refit, &final_idx);
  if (final_idx.size() < 3) {
    final_idx = inlier_idx;
    out.transform = best_sim;
  } else {
    out.transform = refit;
  }

  out.inliers.candidate_count = matches.candidate_count;
  out.inliers.pairs.reserve(final_idx.size());
  for (const int i : final_idx) out.inliers.pairs.push_back(matches.pairs[i]);
  out.ok = true;
  return out;
}

double inlier_ratio(const MatchSet& filtered, const MatchSet& candidates) {
  if (candidates.candidate_count <= 0) return 0.0;
  return static_cast<double>(filtered.size()) / static_cast<double>(candidates.candidate_count);
}

OverlapRatios overlap_ratios(const Keyframe& src, const Keyframe& tgt, const Pose& rel,
                             const Camera& cam, double sigma_gc, std::optional<double> src_scale) {
  OverlapRatios out;
  const double delta_gc = sigma_gc * mean_average_depth(src);
  const double scale = src_scale.value_or(src.prior.scale);
  long mask_count = 0;
  long omega_count = 0;
  long inlier_count = 0;
  for (int r = 0; r < src.height(); ++r) {
    for (int c = 0; c < src.width(); ++c) {
      if (!src.mask.at(r, c)) continue;
      ++mask_count;
      double d = src.prior.compose_at(r, c, src.prior.code, scale);
      if (d < kDepthFloor) d = kDepthFloor;
      const Vec3 p = rel * unproject(cam, Vec2(c, r), d);
      Vec2 uv;
      if (!project_checked(cam, p, uv)) continue;
      if (!mask_sampleable(tgt.mask, uv.x(), uv.y())) continue;
      ++omega_count;
      double d_tgt;
      if (!tgt.prior.compose_sampled(uv.x(), uv.y(), tgt.prior.code, tgt.prior.scale, d_tgt))
        continue;
      if (std::abs(p.z() - d_tgt) <= delta_gc) ++inlier_count;
    }
  }
  if (mask_count > 0) {
    out.area = static_cast<double>(omega_count) / static_cast<double>(mask_count);
    out.point_inlier = static_cast<double>(inlier_count) / static_cast<double>(mask_count);
  }
  return out;
}

}  // namespace sage
