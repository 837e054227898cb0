#pragma once

#include <cstdint>
#include <vector>

#include "gprodom/dataset.hpp"

namespace gprodom {

struct Reflector {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();  // world frame, z < 0
  double reflectivity = 0.5;                           // (0, 1]
};

/// Piecewise-constant body-frame command: forward acceleration and yaw
/// rate, held for duration_s. Ground truth is the discrete integration of
/// these commands at the IMU rate, so noiseless inertial data reproduces
/// the trajectory exactly.
struct MotionCommand {
  double duration_s = 1;
  double accel_mps2 = 0;
  double yaw_rate_rps = 0;
};

struct GprModel {
  int depth_samples = 256;
  double sample_interval_ns = 0.2;
  double wave_speed_m_per_ns = 0.1;
  double pulse_omega = 0.9;  // rad/sample
  double pulse_alpha = 0.08; // 1/sample
  double ground_bounce_delay_ns = 2.0;
  double ground_bounce_amplitude = 1.0;
  double noise_sigma = 0.0;
  double clutter_amplitude = 0.0;
  double trace_rate_hz = 64.0;   // time triggering
  double trace_spacing_m = 0.0;  // distance triggering when > 0
  int window_width = 128;
};

struct SimImuNoise {
  double accel_sigma = 0.0;  // per-sample, m/s^2
  double gyro_sigma = 0.0;   // per-sample, rad/s
  Eigen::Vector3d accel_bias = Eigen::Vector3d::Zero();
  Eigen::Vector3d gyro_bias = Eigen::Vector3d::Zero();
};

struct SimWheelNoise {
  double slip_sigma = 0.0;  // multiplicative noise on arc increments
  double slip_bias = 0.0;   // systematic slip: relative over/undercount
  double tick_m = 0.0;      // cumulative-distance quantization, 0 disables
  double rate_hz = 50.0;
};

struct SimScene {
  std::vector<Reflector> reflectors;
  std::vector<MotionCommand> motion;
  double initial_speed_mps = 0;
  double imu_rate_hz = 200.0;
  double ground_truth_rate_hz = 50.0;
  GprModel gpr;
  SimImuNoise imu_noise;
  SimWheelNoise wheel_noise;
};

void validate(const SimScene& scene);

/// Deterministic synthetic run: B-scan windows with hyperbolic reflector
/// moveout, inertial and wheel streams with configured noise, and ground
/// truth. A pure function of (scene, seed).
SensorStreams simulate(const SimScene& scene, uint64_t seed);

}  // namespace gprodom
