#pragma once

#include "sage/types.hpp"

#include <stdexcept>
#include <vector>

namespace sage {

// C x H x W map with a shared validity mask. Channel planes are stored
// contiguously so a pixel's channel vector has stride H*W.
class DenseMap {
public:
  DenseMap() = default;
  DenseMap(int channels, int height, int width);
  DenseMap(int channels, int height, int width, MaskImage mask);

  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }

  double& at(int channel, int row, int col) { return data_[plane_ * channel + static_cast<size_t>(row) * width_ + col]; }
  double at(int channel, int row, int col) const { return data_[plane_ * channel + static_cast<size_t>(row) * width_ + col]; }

  const MaskImage& mask() const { return mask_; }
  MaskImage& mask() { return mask_; }
  bool valid(int row, int col) const { return mask_.at(row, col) != 0; }

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }
  size_t plane_size() const { return plane_; }

  int valid_count() const;

private:
  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  size_t plane_ = 0;
  std::vector<double> data_;
  MaskImage mask_;
};

// Bilinear sample of one channel at continuous location (x, y).
// Valid only when the whole 4-neighborhood is in bounds and inside the mask.
struct SampleResult {
  bool valid = false;
  double value = 0.0;
  double dx = 0.0;  // d(value)/dx
  double dy = 0.0;  // d(value)/dy
};

// True when the 4-neighborhood of (x, y) is inside the image and the mask.
bool mask_sampleable(const MaskImage& mask, double x, double y);
bool sampleable(const DenseMap& map, double x, double y);

SampleResult sample_bilinear(const DenseMap& map, int channel, double x, double y);

// Sample all channels at once; returns false when not sampleable.
// value has size C; dx/dy (optional) receive per-channel spatial gradients.
bool sample_bilinear_all(const DenseMap& map, double x, double y, VecX& value,
                         VecX* dx = nullptr, VecX* dy = nullptr);

struct FeaturePyramid {
  std::vector<DenseMap> levels;  // levels[0] is the input map
  int level_count() const { return static_cast<int>(levels.size()); }
};

// Gaussian pyramid: each level smooths the previous one with a normalized
// masked kernel and subsamples at even indices. The coarse mask is
// conservative: a coarse pixel is valid only if the 2x2 fine block it covers
// is fully valid, and smoothing never reads invalid pixels (their kernel
// weight is dropped and the kernel renormalized).
FeaturePyramid build_pyramid(const DenseMap& map, int level_count, int kernel_size = 5,
                             double sigma = 1.0);

}  // namespace sage
