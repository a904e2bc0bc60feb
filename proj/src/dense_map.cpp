#include "sage/dense_map.hpp"

#include <cmath>

namespace sage {

DenseMap::DenseMap(int channels, int height, int width)
    : channels_(channels), height_(height), width_(width),
      plane_(static_cast<size_t>(height) * width),
      data_(plane_ * channels, 0.0), mask_(height, width, 1) {}

DenseMap::DenseMap(int channels, int height, int width, MaskImage mask)
    : channels_(channels), height_(height), width_(width),
      plane_(static_cast<size_t>(height) * width),
      data_(plane_ * channels, 0.0), mask_(std::move(mask)) {
  if (mask_.height() != height_ || mask_.width() != width_)
    throw std::invalid_argument("DenseMap: mask size mismatch");
}

int DenseMap::valid_count() const {
  int n = 0;
  for (size_t i = 0; i < mask_.size(); ++i) n += mask_.data()[i] != 0;
  return n;
}

bool mask_sampleable(const MaskImage& mask, double x, double y) {
  const int ix = static_cast<int>(std::floor(x));
  const int iy = static_cast<int>(std::floor(y));
  if (ix < 0 || iy < 0 || ix + 1 >= mask.width() || iy + 1 >= mask.height()) return false;
  return mask.at(iy, ix) && mask.at(iy, ix + 1) && mask.at(iy + 1, ix) && mask.at(iy + 1, ix + 1);
}

bool sampleable(const DenseMap& map, double x, double y) {
  return mask_sampleable(map.mask(), x, y);
}

SampleResult sample_bilinear(const DenseMap& map, int channel, double x, double y) {
  SampleResult r;
  if (!sampleable(map, x, y)) return r;
  const int ix = static_cast<int>(std::floor(x));
  const int iy = static_cast<int>(std::floor(y));
  const double ax = x - ix;
  const double ay = y - iy;
  const double v00 = map.at(channel, iy, ix);
  const double v01 = map.at(channel, iy, ix + 1);
  const double v10 = map.at(channel, iy + 1, ix);
  const double v11 = map.at(channel, iy + 1, ix + 1);
  const double top = v00 + ax * (v01 - v00);
  const double bot = v10 + ax * (v11 - v10);
  r.valid = true;
  r.value = top + ay * (bot - top);
  r.dx = (1.0 - ay) * (v01 - v00) + ay * (v11 - v10);
  r.dy = bot - top;
  return r;
}

bool sample_bilinear_all(const DenseMap& map, double x, double y, VecX& value, VecX* dx, VecX* dy) {
  if (!sampleable(map, x, y)) return false;
  const int ix = static_cast<int>(std::floor(x));
  const int iy = static_cast<int>(std::floor(y));
  const double ax = x - ix;
  const double ay = y - iy;
  const int c_count = map.channels();
  value.resize(c_count);
  if (dx) dx->resize(c_count);
  if (dy) dy->resize(c_count);
  for (int c = 0; c < c_count; ++c) {
    const double v00 = map.at(c, iy, ix);
    const double v01 = map.at(c, iy, ix + 1);
    const double v10 = map.at(c, iy + 1, ix);
    const double v11 = map.at(c, iy + 1, ix + 1);
    const double top = v00 + ax * (v01 - v00);
    const double bot = v10 + ax * (v11 - v10);
    value(c) = top + ay * (bot - top);
    if (dx) (*dx)(c) = (1.0 - ay) * (v01 - v00) + ay * (v11 - v10);
    if (dy) (*dy)(c) = bot - top;
  }
  return true;
}

namespace {

std::vector<double> gaussian_kernel(int size, double sigma) {
  std::vector<double> k(size);
  const int half = size / 2;
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    const double d = i - half;
    k[i] = std::exp(-0.5 * d * d / (sigma * sigma));
    sum += k[i];
  }
  for (double& v : k) v /= sum;
  return k;
}

// Masked smoothing with a conservative output mask: a smoothed pixel stays
// valid only when its whole kernel window is inside the image and the mask,
// so no smoothed value ever mixes in invalid or truncated content.
DenseMap smooth_masked(const DenseMap& in, int ksize, double sigma) {
  const auto kernel = gaussian_kernel(ksize, sigma);
  const int half = ksize / 2;
  const int h = in.height();
  const int w = in.width();
  const int cc = in.channels();
  MaskImage mask(h, w, 0);
  DenseMap out(cc, h, w);
  std::vector<double> accum(cc);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (!in.valid(r, c)) continue;
      bool full_support = r - half >= 0 && r + half < h && c - half >= 0 && c + half < w;
      std::fill(accum.begin(), accum.end(), 0.0);
      if (full_support) {
        for (int dr = -half; dr <= half && full_support; ++dr)
          for (int dc = -half; dc <= half; ++dc)
            if (!in.valid(r + dr, c + dc)) {
              full_support = false;
              break;
            }
      }
      if (!full_support) continue;
      for (int dr = -half; dr <= half; ++dr)
        for (int dc = -half; dc <= half; ++dc) {
          const double kw = kernel[dr + half] * kernel[dc + half];
          for (int ch = 0; ch < cc; ++ch) accum[ch] += kw * in.at(ch, r + dr, c + dc);
        }
      mask.at(r, c) = 1;
      for (int ch = 0; ch < cc; ++ch) out.at(ch, r, c) = accum[ch];
    }
  }
  out.mask() = std::move(mask);
  return out;
}

DenseMap downsample_2x(const DenseMap& in) {
  const int h = in.height() / 2;
  const int w = in.width() / 2;
  const int cc = in.channels();
  MaskImage mask(h, w, 0);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      mask.at(r, c) = (in.valid(2 * r, 2 * c) && in.valid(2 * r, 2 * c + 1) &&
                       in.valid(2 * r + 1, 2 * c) && in.valid(2 * r + 1, 2 * c + 1))
                          ? 1
                          : 0;
  DenseMap out(cc, h, w, std::move(mask));
  for (int ch = 0; ch < cc; ++ch)
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) out.at(ch, r, c) = in.at(ch, 2 * r, 2 * c);
  return out;
}

}  // namespace

FeaturePyramid build_pyramid(const DenseMap& map, int level_count, int kernel_size, double sigma) {
  if (level_count < 1) throw std::invalid_argument("build_pyramid: level_count must be >= 1");
  const int div = 1 << (level_count - 1);
  if (map.height() % div != 0 || map.width() % div != 0)
    throw std::invalid_argument("build_pyramid: dimensions not divisible by 2^(L-1)");
  FeaturePyramid pyr;
  pyr.levels.reserve(level_count);
  pyr.levels.push_back(map);
  for (int i = 1; i < level_count; ++i) {
    pyr.levels.push_back(downsample_2x(smooth_masked(pyr.levels.back(), kernel_size, sigma)));
  }
  return pyr;
}

}  // namespace sage
