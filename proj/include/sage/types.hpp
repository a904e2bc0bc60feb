#pragma once

#include <Eigen/Core>
#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace sage {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using VecX = Eigen::VectorXd;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using MatX = Eigen::MatrixXd;

using KeyframeId = int;
using FrameId = int;

// Row-major scalar image. Pixel (row, col) lives at continuous
// coordinate (x, y) = (col, row), i.e. integer pixel centers.
template <typename T>
class Image {
public:
  Image() = default;
  Image(int height, int width, T fill = T{})
      : height_(height), width_(width), data_(static_cast<size_t>(height) * width, fill) {}

  int height() const { return height_; }
  int width() const { return width_; }
  bool empty() const { return data_.empty(); }

  T& at(int row, int col) { return data_[static_cast<size_t>(row) * width_ + col]; }
  const T& at(int row, int col) const { return data_[static_cast<size_t>(row) * width_ + col]; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  size_t size() const { return data_.size(); }

  bool in_bounds(int row, int col) const {
    return row >= 0 && row < height_ && col >= 0 && col < width_;
  }

private:
  int height_ = 0;
  int width_ = 0;
  std::vector<T> data_;
};

using ImageD = Image<double>;
using MaskImage = Image<uint8_t>;

}  // namespace sage
