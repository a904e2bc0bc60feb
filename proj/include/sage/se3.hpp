#pragma once

#include "sage/types.hpp"

namespace sage {

Mat3 skew(const Vec3& v);

// Rotation vector (axis * angle) from an orthonormal rotation matrix.
// Uses a Taylor branch near theta = 0 and a symmetric-part branch near
// theta = pi, both stable under finite-difference probing.
Vec3 so3_log(const Mat3& rotation);

Mat3 so3_exp(const Vec3& omega);

// Inverse of the right Jacobian of SO(3): d/d_eps log(R * exp(eps)) at eps = 0.
Mat3 so3_right_jacobian_inv(const Vec3& omega);

// Rigid transform world <- local: x_world = R * x_local + t.
class Pose {
public:
  Pose() : rotation_(Mat3::Identity()), translation_(Vec3::Zero()) {}
  Pose(const Mat3& rotation, const Vec3& translation)
      : rotation_(rotation), translation_(translation) {}

  static Pose identity() { return Pose(); }

  // exp of a twist (translation part first, rotation part second).
  static Pose exp(const Vec6& xi);

  const Mat3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }
  Vec3& translation() { return translation_; }

  Pose inverse() const {
    const Mat3 rt = rotation_.transpose();
    return Pose(rt, -(rt * translation_));
  }

  Pose operator*(const Pose& other) const {
    return Pose(rotation_ * other.rotation_, rotation_ * other.translation_ + translation_);
  }

  Vec3 operator*(const Vec3& point) const { return rotation_ * point + translation_; }

  // Twist such that exp(log(T)) == T.
  Vec6 log() const;

  // Right-multiplied local update: T * exp(xi).
  Pose retract(const Vec6& xi) const { return *this * Pose::exp(xi); }

  // Local coordinates of "other" seen from this pose: log(this^-1 * other).
  Vec6 local_delta(const Pose& other) const { return (inverse() * other).log(); }

  // Adjoint such that T * exp(xi) * T^-1 == exp(Adj(T) * xi).
  Mat6 adjoint() const;

  // Geodesic rotation angle of the rotation component, radians.
  double rotation_angle() const { return so3_log(rotation_).norm(); }

private:
  Mat3 rotation_;
  Vec3 translation_;
};

}  // namespace sage
