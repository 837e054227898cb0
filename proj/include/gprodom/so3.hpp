#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cmath>

namespace gprodom::so3 {

inline Eigen::Matrix3d hat(const Eigen::Vector3d& w) {
  Eigen::Matrix3d m;
  m << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
  return m;
}

/// Rodrigues exponential map; series expansion below the small-angle knee.
inline Eigen::Matrix3d Exp(const Eigen::Vector3d& w) {
  const double t = w.norm();
  const Eigen::Matrix3d W = hat(w);
  if (t < 1e-8)
    return Eigen::Matrix3d::Identity() + W + 0.5 * W * W;
  const double a = std::sin(t) / t;
  const double b = (1.0 - std::cos(t)) / (t * t);
  return Eigen::Matrix3d::Identity() + a * W + b * W * W;
}

/// Logarithm map, returning the rotation vector with angle in [0, pi].
inline Eigen::Vector3d Log(const Eigen::Matrix3d& R) {
  const double c = std::clamp(0.5 * (R.trace() - 1.0), -1.0, 1.0);
  const double t = std::acos(c);
  Eigen::Vector3d axis(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1));
  if (t < 1e-8) return 0.5 * axis;
  if (t > M_PI - 1e-6) {
    // Near pi the antisymmetric part vanishes; recover the axis from the
    // symmetric part R(i,i) = 2 n_i^2 - 1, R(i,j)+R(j,i) = 4 n_i n_j.
    int k;
    R.diagonal().maxCoeff(&k);
    Eigen::Vector3d ax;
    ax(k) = std::sqrt(std::max(0.0, (R(k, k) + 1.0) / 2.0));
    if (ax(k) < 1e-12) ax(k) = 1.0;
    const int i = (k + 1) % 3, j = (k + 2) % 3;
    ax(i) = (R(k, i) + R(i, k)) / (4.0 * ax(k));
    ax(j) = (R(k, j) + R(j, k)) / (4.0 * ax(k));
    ax.normalize();
    if (axis.dot(ax) < 0) ax = -ax;
    return t * ax;
  }
  return (t / (2.0 * std::sin(t))) * axis;
}

/// Right Jacobian of SO(3).
inline Eigen::Matrix3d Jr(const Eigen::Vector3d& w) {
  const double t = w.norm();
  const Eigen::Matrix3d W = hat(w);
  if (t < 1e-8)
    return Eigen::Matrix3d::Identity() - 0.5 * W + (1.0 / 6.0) * W * W;
  const double t2 = t * t;
  const double a = (1.0 - std::cos(t)) / t2;
  const double b = (t - std::sin(t)) / (t2 * t);
  return Eigen::Matrix3d::Identity() - a * W + b * W * W;
}

/// Inverse of the right Jacobian.
inline Eigen::Matrix3d JrInv(const Eigen::Vector3d& w) {
  const double t = w.norm();
  const Eigen::Matrix3d W = hat(w);
  if (t < 1e-8)
    return Eigen::Matrix3d::Identity() + 0.5 * W + (1.0 / 12.0) * W * W;
  const double t2 = t * t;
  const double b =
      1.0 / t2 - (1.0 + std::cos(t)) / (2.0 * t * std::sin(t));
  return Eigen::Matrix3d::Identity() + 0.5 * W + b * W * W;
}

/// Nearest rotation matrix (projection via SVD-free quaternion round trip).
inline Eigen::Matrix3d Orthonormalize(const Eigen::Matrix3d& R) {
  Eigen::Quaterniond q(R);
  q.normalize();
  return q.toRotationMatrix();
}

}  // namespace gprodom::so3
