#include "sage/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace sage {

namespace {

SoftHistogram histogram_impl(const std::vector<double>& values, int bins, double bandwidth) {
  if (bins < 2) throw std::invalid_argument("soft_histogram: need at least 2 bins");
  if (bandwidth <= 0.0) throw std::invalid_argument("soft_histogram: bandwidth must be positive");
  if (values.empty()) throw std::invalid_argument("soft_histogram: empty mask");
  SoftHistogram h;
  h.bandwidth = bandwidth;
  h.bins = VecX::Zero(bins);
  const double inv_k = 1.0 / bins;
  const double inv_n = 1.0 / static_cast<double>(values.size());
  // With mu_k = -1 + (2k+1)/K the two sigmoid arguments telescope: the lower
  // edge of bin k is the upper edge of bin k+1, so one geometric recurrence
  // over e^{-x} covers all bins.
  const double step = std::exp(2.0 * inv_k / bandwidth);
  for (const double v : values) {
    double ex = std::exp(-(v + 1.0) / bandwidth);
    double prev = 1.0 / (1.0 + ex);
    for (int k = 0; k < bins; ++k) {
      ex *= step;
      const double next = 1.0 / (1.0 + ex);
      h.bins(k) += prev - next;
      prev = next;
    }
  }
  h.bins *= inv_n;
  return h;
}

}  // namespace

double scale_invariant_loss(const ImageD& depth, const ImageD& depth_ref, const MaskImage& mask,
                            double epsilon) {
  if (depth.height() != depth_ref.height() || depth.width() != depth_ref.width() ||
      depth.height() != mask.height() || depth.width() != mask.width())
    throw std::invalid_argument("scale_invariant_loss: size mismatch");
  double sum = 0.0;
  double sum_sq = 0.0;
  long count = 0;
  for (int r = 0; r < depth.height(); ++r) {
    for (int c = 0; c < depth.width(); ++c) {
      if (!mask.at(r, c)) continue;
      const double d = std::log(depth.at(r, c) + epsilon) - std::log(depth_ref.at(r, c) + epsilon);
      sum += d;
      sum_sq += d * d;
      ++count;
    }
  }
  if (count == 0) throw std::invalid_argument("scale_invariant_loss: empty mask");
  const double mean = sum / count;
  return sum_sq / count - mean * mean;
}

SoftHistogram soft_histogram(const DenseMap& map, int channel, int bins, double bandwidth) {
  std::vector<double> values;
  values.reserve(map.plane_size());
  for (int r = 0; r < map.height(); ++r)
    for (int c = 0; c < map.width(); ++c)
      if (map.valid(r, c)) values.push_back(map.at(channel, r, c));
  return histogram_impl(values, bins, bandwidth);
}

SoftHistogram soft_histogram(const ImageD& values, const MaskImage& mask, int bins,
                             double bandwidth) {
  std::vector<double> v;
  v.reserve(values.size());
  for (int r = 0; r < values.height(); ++r)
    for (int c = 0; c < values.width(); ++c)
      if (mask.at(r, c)) v.push_back(values.at(r, c));
  return histogram_impl(v, bins, bandwidth);
}

double emd_distance(const SoftHistogram& a, const SoftHistogram& b) {
  if (a.bin_count() != b.bin_count())
    throw std::invalid_argument("emd_distance: bin count mismatch");
  double cdf_a = 0.0;
  double cdf_b = 0.0;
  double dist = 0.0;
  for (int k = 0; k < a.bin_count(); ++k) {
    cdf_a += a.bins(k);
    cdf_b += b.bins(k);
    const double d = cdf_a - cdf_b;
    dist += d * d;
  }
  return dist;
}

double triplet_histogram_loss(const DenseMap& src, const DenseMap& tgt, const DenseMap& far,
                              int bins, double bandwidth, double margin) {
  const int channels = src.channels();
  if (tgt.channels() != channels || far.channels() != channels)
    throw std::invalid_argument("triplet_histogram_loss: channel mismatch");
  double loss = 0.0;
  for (int c = 0; c < channels; ++c) {
    const SoftHistogram hs = soft_histogram(src, c, bins, bandwidth);
    const SoftHistogram ht = soft_histogram(tgt, c, bins, bandwidth);
    const SoftHistogram hf = soft_histogram(far, c, bins, bandwidth);
    const double d_st = emd_distance(hs, ht) / bins;
    const double d_sf = emd_distance(hs, hf) / bins;
    loss += std::max(d_st - d_sf + margin, 0.0);
  }
  return loss / channels;
}

double flow_loss(const Flow& flow_ref, const Flow& flow, const MaskImage& mask) {
  if (flow.height() != flow_ref.height() || flow.width() != flow_ref.width() ||
      mask.height() != flow.height() || mask.width() != flow.width())
    throw std::invalid_argument("flow_loss: size mismatch");
  double normalizer = 0.0;
  double numer = 0.0;
  long count = 0;
  for (int r = 0; r < flow.height(); ++r) {
    for (int c = 0; c < flow.width(); ++c) {
      if (!mask.at(r, c)) continue;
      const double ru = flow_ref.u.at(r, c);
      const double rv = flow_ref.v.at(r, c);
      const double eu = flow.u.at(r, c);
      const double ev = flow.v.at(r, c);
      normalizer += 0.5 * (ru * ru + rv * rv + eu * eu + ev * ev);
      const double du = ru - eu;
      const double dv = rv - ev;
      numer += du * du + dv * dv;
      ++count;
    }
  }
  if (count == 0) throw std::invalid_argument("flow_loss: empty mask");
  if (normalizer <= 0.0) return 0.0;
  return numer / (normalizer * static_cast<double>(count));
}

}  // namespace sage
