#pragma once

#include <Eigen/Core>
#include <string>
#include <variant>
#include <vector>

#include "gprodom/preintegration.hpp"
#include "gprodom/sfm.hpp"

namespace gprodom {

struct RobotState {
  Eigen::Vector3d p = Eigen::Vector3d::Zero();
  Eigen::Vector3d v = Eigen::Vector3d::Zero();
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d bias_a = Eigen::Vector3d::Zero();
  Eigen::Vector3d bias_g = Eigen::Vector3d::Zero();
  double timestamp_s = 0;
};

void validate(const RobotState& x);

/// Local perturbation, tangent order (rot, vel, pos, bias_a, bias_g):
/// R <- R Exp(d_rot), all other blocks additive.
using Tangent = Eigen::Matrix<double, 15, 1>;
RobotState retract(const RobotState& x, const Tangent& delta);

enum class FactorKind {
  kPrior,
  kImu,
  kGpr,
  kWheel,
  kRotPrior,
  kVelPrior,
  kBiasPrior,
  kDirectedDistance,
};

struct PriorPayload {
  RobotState target;
  double rot_sigma = 1e-2;
  double pos_sigma = 1e-2;
  double vel_sigma = 0.1;
  double bias_sigma = 0.1;
};

struct ImuPayload {
  PreintegratedImu pre;
};

struct DistancePayload {
  DistanceMeasurement meas;
};

struct RotPriorPayload {
  Eigen::Matrix3d target = Eigen::Matrix3d::Identity();
  double sigma_rad = 1e-3;
};

struct VelPriorPayload {
  Eigen::Vector3d target = Eigen::Vector3d::Zero();
  double sigma = 10.0;
};

struct BiasPriorPayload {
  double sigma = 1.0;
};

/// Forward-motion odometry: p_j - p_i should equal R_i e_x u within a
/// longitudinal sigma from the measurement and a lateral slack. Used when
/// no IMU factors tie displacement direction to heading.
struct DirectedDistancePayload {
  DistanceMeasurement meas;
  double lateral_sigma_m = 0.05;
};

struct Factor {
  FactorKind kind = FactorKind::kPrior;
  int i = -1;
  int j = -1;  // -1 for unary factors
  std::variant<PriorPayload, ImuPayload, DistancePayload, RotPriorPayload,
               VelPriorPayload, BiasPriorPayload, DirectedDistancePayload>
      payload;
};

int residual_dim(const Factor& f);

struct FactorGraph {
  std::vector<RobotState> states;
  std::vector<Factor> factors;
};

void validate(const FactorGraph& g);

/// Stacked on-manifold preintegration residual
/// (rot log, velocity, position, accel-bias drift, gyro-bias drift); zero
/// when x_j is exactly the preintegrated motion from x_i with equal biases.
Eigen::Matrix<double, 15, 1> imu_residual(const RobotState& x_i,
                                          const RobotState& x_j,
                                          const PreintegratedImu& pre);

/// (|p_j - p_i| - |u|) / sigma.
double gpr_residual(const RobotState& x_i, const RobotState& x_j,
                    const DistanceMeasurement& u);
double wheel_residual(const RobotState& x_i, const RobotState& x_j,
                      const DistanceMeasurement& z);

/// Whitened residual and Jacobians of one factor at the graph's current
/// states; Jj is empty for unary factors.
struct Linearized {
  Eigen::VectorXd r;
  Eigen::MatrixXd Ji;
  Eigen::MatrixXd Jj;
};
Linearized linearize(const Factor& f, const std::vector<RobotState>& states);

struct OptimizeOptions {
  int max_iterations = 50;
  double rel_tol = 1e-8;
  int window = 0;  // 0 solves the whole graph in one batch
};

struct OptimizeResult {
  std::vector<RobotState> states;
  double initial_loss = 0;
  double final_loss = 0;
  int iterations = 0;
};

/// Damped Gauss-Newton over all non-fixed states. Throws
/// RankDeficiencyError naming unconstrained directions when the graph
/// cannot determine every state.
OptimizeResult optimize(const FactorGraph& graph,
                        const std::vector<RobotState>& init,
                        const OptimizeOptions& opts = {});

double graph_loss(const FactorGraph& graph,
                  const std::vector<RobotState>& states);

struct WheelSample {
  double t_s = 0;
  double dist_m = 0;  // cumulative signed arc length
};

/// Cumulative encoder distance linearly interpolated at t, clamped to the
/// stream's ends.
double wheel_distance_at(const std::vector<WheelSample>& wheel, double t);

struct BuildConfig {
  double keyframe_dt = 0.5;
  bool use_imu = true;
  bool use_wheel = true;
  bool use_gpr = true;
  ImuNoise imu_noise;
  Eigen::Vector3d gravity = kGravity;
  double wheel_sigma_m = 0.02;
  PriorPayload prior;
  // Heading source for runs without IMU factors: time-stamped rotations
  // sampled nearest-in-time onto keyframes.
  std::vector<std::pair<double, Eigen::Matrix3d>> headings;
  double heading_sigma_rad = 1e-3;
  double lateral_sigma_m = 0.05;
  double weak_vel_sigma = 10.0;
  double weak_bias_sigma = 1.0;
};

struct BuiltGraph {
  FactorGraph graph;
  std::vector<RobotState> init;
  std::vector<std::string> diagnostics;
};

/// Lays keyframes every keyframe_dt over the streams' common span, attaches
/// per-interval IMU preintegration, wheel and GPR distance factors plus a
/// first-state prior targeting cfg.prior.target (the caller's known start
/// state), and dead-reckons the initial trajectory. Without IMU factors,
/// distance factors become directed odometry constraints and each state gets
/// a heading prior and weak velocity/bias priors.
BuiltGraph build_graph(const std::vector<ImuSample>& imu,
                       const std::vector<WheelSample>& wheel,
                       const std::vector<DistanceMeasurement>& gpr,
                       const BuildConfig& cfg);

/// Integrates headings and per-interval distances into a trajectory:
/// p_{k+1} = p_k + R_k e_x u_k.
std::vector<RobotState> dead_reckon(
    const std::vector<double>& keyframe_times,
    const std::vector<Eigen::Matrix3d>& headings,
    const std::vector<double>& interval_distances, const RobotState& start);

}  // namespace gprodom
