#pragma once

#include "sage/types.hpp"

#include <stdexcept>

namespace sage {

// Pinhole intrinsics, fixed for a whole sequence. Pixel (0, 0) is the center
// of the top-left pixel.
struct Camera {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  Camera() = default;
  Camera(double fx_, double fy_, double cx_, double cy_, int width_, int height_)
      : fx(fx_), fy(fy_), cx(cx_), cy(cy_), width(width_), height(height_) {
    if (fx <= 0.0 || fy <= 0.0) throw std::invalid_argument("Camera: focal lengths must be positive");
  }

  // Scaled intrinsics for pyramid level i (level 0 = full resolution).
  // Levels subsample at even indices, so coarse pixel (r, c) sits exactly at
  // fine pixel (2r, 2c) and coordinates map by plain division.
  Camera level(int i) const {
    const double f = 1.0 / static_cast<double>(1 << i);
    return Camera(fx * f, fy * f, cx * f, cy * f, width >> i, height >> i);
  }
};

inline Vec2 project(const Camera& cam, const Vec3& p) {
  if (p.z() <= 0.0) throw std::domain_error("project: point behind camera");
  const double inv_z = 1.0 / p.z();
  return Vec2(cam.fx * p.x() * inv_z + cam.cx, cam.fy * p.y() * inv_z + cam.cy);
}

// Non-throwing variant for optimizer inner loops; returns false behind camera.
inline bool project_checked(const Camera& cam, const Vec3& p, Vec2& out) {
  if (p.z() <= 0.0) return false;
  const double inv_z = 1.0 / p.z();
  out.x() = cam.fx * p.x() * inv_z + cam.cx;
  out.y() = cam.fy * p.y() * inv_z + cam.cy;
  return true;
}

inline Vec3 unproject(const Camera& cam, const Vec2& x, double depth) {
  if (depth <= 0.0) throw std::domain_error("unproject: depth must be positive");
  return Vec3(depth * (x.x() - cam.cx) / cam.fx, depth * (x.y() - cam.cy) / cam.fy, depth);
}

// Unit-depth ray through pixel x; unproject(x, d) == d * ray(x).
inline Vec3 pixel_ray(const Camera& cam, const Vec2& x) {
  return Vec3((x.x() - cam.cx) / cam.fx, (x.y() - cam.cy) / cam.fy, 1.0);
}

// d(project)/d(p), 2x3, valid for p.z > 0.
inline Eigen::Matrix<double, 2, 3> project_jacobian(const Camera& cam, const Vec3& p) {
  const double inv_z = 1.0 / p.z();
  Eigen::Matrix<double, 2, 3> j;
  j << cam.fx * inv_z, 0.0, -cam.fx * p.x() * inv_z * inv_z,
       0.0, cam.fy * inv_z, -cam.fy * p.y() * inv_z * inv_z;
  return j;
}

}  // namespace sage
