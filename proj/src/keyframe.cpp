#include "sage/keyframe.hpp"

#include "sage/losses.hpp"

#include <stdexcept>

namespace sage {

Keyframe make_keyframe(FrameData data, const KeyframeParams& params, double scale) {
  Keyframe kf;
  kf.mask = data.mask;
  kf.prior.average = std::move(data.average_depth);
  kf.prior.bases = std::move(data.bases);
  kf.prior.bases.mask() = kf.mask;
  kf.prior.code = VecX::Zero(kf.prior.bases.channels());
  kf.prior.scale = scale;
  kf.descriptors = std::move(data.descriptors);
  kf.descriptors.mask() = kf.mask;
  data.features.mask() = kf.mask;
  kf.features = build_pyramid(data.features, params.pyramid_levels, params.pyramid_kernel,
                              params.pyramid_sigma);

  const int channels = kf.descriptors.channels();
  kf.signature = MatX(channels, params.histogram_bins);
  for (int c = 0; c < channels; ++c) {
    const SoftHistogram h =
        soft_histogram(kf.descriptors, c, params.histogram_bins, params.histogram_bandwidth);
    kf.signature.row(c) = h.bins.transpose();
  }
  return kf;
}

double mean_average_depth(const Keyframe& kf) {
  double sum = 0.0;
  long count = 0;
  for (int r = 0; r < kf.height(); ++r) {
    for (int c = 0; c < kf.width(); ++c) {
      if (!kf.mask.at(r, c)) continue;
      sum += kf.prior.average.at(r, c);
      ++count;
    }
  }
  if (count == 0) throw std::runtime_error("mean_average_depth: empty mask");
  return sum / count;
}

double signature_similarity(const MatX& a, const MatX& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("signature_similarity: size mismatch");
  const int channels = static_cast<int>(a.rows());
  const int bins = static_cast<int>(a.cols());
  double mean_emd = 0.0;
  for (int c = 0; c < channels; ++c) {
    double cdf_a = 0.0;
    double cdf_b = 0.0;
    double dist = 0.0;
    for (int k = 0; k < bins; ++k) {
      cdf_a += a(c, k);
      cdf_b += b(c, k);
      const double d = cdf_a - cdf_b;
      dist += d * d;
    }
    mean_emd += dist / bins;
  }
  mean_emd /= channels;
  return 1.0 / (1.0 + mean_emd);
}

}  // namespace sage
