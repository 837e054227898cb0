#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "gprodom/dataset.hpp"

namespace gprodom {

struct PairedSample {
  double t_est = 0;
  double t_gt = 0;
  Eigen::Vector3d est = Eigen::Vector3d::Zero();
  Eigen::Vector3d gt = Eigen::Vector3d::Zero();
};

struct Association {
  std::vector<PairedSample> pairs;  // ordered by t_est
  int dropped = 0;                  // estimates without a partner
};

/// Pairs each estimate with the ground-truth sample nearest in time within
/// max_dt. Throws DataError when nothing pairs.
Association associate(const std::vector<TimedPosition>& est,
                      const std::vector<TimedPosition>& gt, double max_dt);

/// Root mean square of position-error norms after anchoring the estimate to
/// ground truth at the first pair: translation plus heading about z taken
/// from the first significant displacement. No scale correction.
double rmse(const std::vector<PairedSample>& pairs);

/// Cumulative RMSE over pairs up to each estimate time, same anchoring.
std::vector<std::pair<double, double>> rmse_vs_time(
    const std::vector<PairedSample>& pairs);

struct EvalReport {
  double rmse_m = 0;
  std::vector<std::pair<double, double>> rmse_vs_time;
  std::map<std::string, double> per_modality;  // configuration name -> rmse
  double trajectory_length_m = 0;
};

void validate(const EvalReport& r);
std::string report_to_json(const EvalReport& r);
EvalReport report_from_json(const std::string& text);
void save_report(const EvalReport& r, const std::string& path);
EvalReport load_report(const std::string& path);

struct TrajectorySample {
  double t_s = 0;
  Eigen::Vector3d p = Eigen::Vector3d::Zero();
  Eigen::Vector4d q{1, 0, 0, 0};  // w, x, y, z
};

/// CSV `timestamp_s,px,py,pz,qw,qx,qy,qz` with round-trip-exact decimals.
void save_trajectory(const std::vector<RobotState>& states,
                     const std::string& path);
std::vector<TrajectorySample> load_trajectory(const std::string& path);

std::vector<TimedPosition> trajectory_positions(
    const std::vector<TrajectorySample>& traj);
std::vector<TimedPosition> trajectory_positions(
    const std::vector<RobotState>& states);

double path_length(const std::vector<TimedPosition>& traj);

}  // namespace gprodom
