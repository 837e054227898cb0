#pragma once

#include <Eigen/Core>
#include <vector>

#include "gprodom/errors.hpp"

namespace gprodom {

inline const Eigen::Vector3d kGravity{0.0, 0.0, -9.81};

struct ImuSample {
  double t_s = 0;
  Eigen::Vector3d accel = Eigen::Vector3d::Zero();  // specific force, body frame
  Eigen::Vector3d gyro = Eigen::Vector3d::Zero();   // angular rate, body frame
};

struct ImuBias {
  Eigen::Vector3d accel = Eigen::Vector3d::Zero();
  Eigen::Vector3d gyro = Eigen::Vector3d::Zero();
};

/// Continuous-time noise densities; discretized per sample interval.
struct ImuNoise {
  double accel_noise_density = 1e-3;  // (m/s^2)/sqrt(Hz)
  double gyro_noise_density = 1e-4;   // (rad/s)/sqrt(Hz)
  double accel_bias_rw = 1e-4;        // (m/s^3)/sqrt(Hz)
  double gyro_bias_rw = 1e-5;         // (rad/s^2)/sqrt(Hz)
};

/// Relative motion increments accumulated between two keyframes, a pure
/// function of the samples and the linearization bias. Gravity is kept out
/// of the increments; the residual reintroduces it.
struct PreintegratedImu {
  Eigen::Matrix3d delta_R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d delta_v = Eigen::Vector3d::Zero();
  Eigen::Vector3d delta_p = Eigen::Vector3d::Zero();
  double dt_total = 0;

  // First-order noise covariance of (rotation, velocity, position), 9x9.
  Eigen::Matrix<double, 9, 9> covariance = Eigen::Matrix<double, 9, 9>::Zero();
  // Random-walk covariance of the bias drift over dt_total, 6x6 (accel, gyro).
  Eigen::Matrix<double, 6, 6> bias_covariance =
      Eigen::Matrix<double, 6, 6>::Zero();

  ImuBias bias_ref;
  Eigen::Vector3d gravity = kGravity;

  // Sensitivities of the increments to the linearization bias.
  Eigen::Matrix3d dR_dbg = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d dv_dba = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d dv_dbg = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d dp_dba = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d dp_dbg = Eigen::Matrix3d::Zero();

  // Increments re-linearized at an updated bias estimate.
  Eigen::Matrix3d corrected_delta_R(const Eigen::Vector3d& bias_g) const;
  Eigen::Vector3d corrected_delta_v(const Eigen::Vector3d& bias_a,
                                    const Eigen::Vector3d& bias_g) const;
  Eigen::Vector3d corrected_delta_p(const Eigen::Vector3d& bias_a,
                                    const Eigen::Vector3d& bias_g) const;
};

void validate(const PreintegratedImu& p);

/// Integrates the samples over [t_start, t_end] with zero-order hold: each
/// sample's reading applies until the next sample's timestamp, the last one
/// until t_end. Timestamps must be strictly increasing and lie within the
/// span.
PreintegratedImu preintegrate(const std::vector<ImuSample>& samples,
                              const ImuBias& bias, const ImuNoise& noise,
                              double t_start, double t_end,
                              const Eigen::Vector3d& gravity = kGravity);

/// Convenience overload spanning the samples themselves; the last sample is
/// held for the median interval. Needs >= 2 samples.
PreintegratedImu preintegrate(const std::vector<ImuSample>& samples,
                              const ImuBias& bias, const ImuNoise& noise,
                              const Eigen::Vector3d& gravity = kGravity);

}  // namespace gprodom
