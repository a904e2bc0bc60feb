#include "sage/se3.hpp"

#include <cmath>

namespace sage {

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

Vec3 so3_log(const Mat3& r) {
  const double trace = r.trace();
  double cos_theta = 0.5 * (trace - 1.0);
  cos_theta = std::min(1.0, std::max(-1.0, cos_theta));
  const Vec3 anti(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  const double sin_theta = 0.5 * anti.norm();
  const double theta = std::atan2(sin_theta, cos_theta);

  if (theta < 1e-6) {
    // 2nd-order Taylor of theta / (2 sin(theta)).
    return (0.5 + theta * theta / 12.0) * anti;
  }
  if (theta > M_PI - 1e-3) {
    // Near pi the anti-symmetric part degenerates; recover the axis from the
    // symmetric part S = (R + I), whose columns are parallel to the axis.
    Mat3 s = r + Mat3::Identity();
    int k = 0;
    s.diagonal().maxCoeff(&k);
    Vec3 axis = s.col(k);
    axis.normalize();
    // Resolve the sign with the anti-symmetric part when it is usable.
    if (sin_theta > 1e-12) {
      if (axis.dot(anti) < 0.0) axis = -axis;
    } else {
      // theta == pi exactly: log is double-valued, pick a fixed convention.
      int imax = 0;
      axis.cwiseAbs().maxCoeff(&imax);
      if (axis(imax) < 0.0) axis = -axis;
    }
    return theta * axis;
  }
  return (theta / (2.0 * sin_theta)) * anti;
}

Mat3 so3_exp(const Vec3& omega) {
  const double theta2 = omega.squaredNorm();
  const double theta = std::sqrt(theta2);
  const Mat3 hat = skew(omega);
  double a, b;
  if (theta < 1e-6) {
    a = 1.0 - theta2 / 6.0;
    b = 0.5 - theta2 / 24.0;
  } else {
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / theta2;
  }
  return Mat3::Identity() + a * hat + b * hat * hat;
}

Mat3 so3_right_jacobian_inv(const Vec3& omega) {
  const double theta2 = omega.squaredNorm();
  const double theta = std::sqrt(theta2);
  const Mat3 hat = skew(omega);
  double c;
  if (theta < 1e-6) {
    c = 1.0 / 12.0 + theta2 / 720.0;
  } else {
    c = (1.0 / theta2) - (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
  }
  return Mat3::Identity() + 0.5 * hat + c * hat * hat;
}

namespace {

// Left SO(3) Jacobian V with exp_se3 translation t = V * rho.
Mat3 so3_left_v(const Vec3& omega) {
  const double theta2 = omega.squaredNorm();
  const double theta = std::sqrt(theta2);
  const Mat3 hat = skew(omega);
  double b, c;
  if (theta < 1e-6) {
    b = 0.5 - theta2 / 24.0;
    c = 1.0 / 6.0 - theta2 / 120.0;
  } else {
    b = (1.0 - std::cos(theta)) / theta2;
    c = (theta - std::sin(theta)) / (theta2 * theta);
  }
  return Mat3::Identity() + b * hat + c * hat * hat;
}

}  // namespace

Pose Pose::exp(const Vec6& xi) {
  const Vec3 rho = xi.head<3>();
  const Vec3 omega = xi.tail<3>();
  return Pose(so3_exp(omega), so3_left_v(omega) * rho);
}

Vec6 Pose::log() const {
  const Vec3 omega = so3_log(rotation_);
  const Vec3 rho = so3_left_v(omega).inverse() * translation_;
  Vec6 xi;
  xi << rho, omega;
  return xi;
}

Mat6 Pose::adjoint() const {
  Mat6 adj = Mat6::Zero();
  adj.block<3, 3>(0, 0) = rotation_;
  adj.block<3, 3>(0, 3) = skew(translation_) * rotation_;
  adj.block<3, 3>(3, 3) = rotation_;
  return adj;
}

}  // namespace sage
