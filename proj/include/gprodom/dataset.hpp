#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gprodom/factor_graph.hpp"
#include "gprodom/preintegration.hpp"
#include "gprodom/signal.hpp"

namespace gprodom {

struct TimedPosition {
  double t_s = 0;
  Eigen::Vector3d p = Eigen::Vector3d::Zero();
};

struct SensorStreams {
  std::vector<BScan> gpr;  // fixed-width windows, chronological
  std::vector<ImuSample> imu;
  std::vector<WheelSample> wheel;
  std::vector<TimedPosition> ground_truth;
};

/// Streams must be internally time-sorted; gpr and wheel are mandatory.
void validate(const SensorStreams& s);

/// Column mapping and units for on-disk datasets. The defaults describe the
/// schema export_streams writes; point the fields elsewhere to adapt a
/// foreign layout without code changes.
struct SchemaConfig {
  std::string gpr_file = "gpr_traces.csv";
  std::string imu_file = "imu.csv";
  std::string wheel_file = "wheel.csv";
  std::string ground_truth_file = "ground_truth.csv";
  std::string meta_file = "meta.json";

  std::string time_col = "t_s";
  double time_scale = 1.0;  // raw units -> seconds

  std::string trace_index_col = "trace_index";
  std::string sample_prefix = "s";

  std::string wheel_dist_col = "dist_m";
  double wheel_scale = 1.0;  // raw units -> meters

  std::vector<std::string> imu_accel_cols = {"ax", "ay", "az"};
  std::vector<std::string> imu_gyro_cols = {"gx", "gy", "gz"};
  double accel_scale = 1.0;
  double gyro_scale = 1.0;

  std::vector<std::string> ground_truth_cols = {"x", "y", "z"};
  double ground_truth_scale = 1.0;

  int window_width = 128;
  // Fallbacks when no meta file is present.
  double sample_interval_ns = 0.2;
  std::optional<double> scan_spacing_m;
};

SchemaConfig schema_from_json_file(const std::string& path);
SchemaConfig schema_from_json_text(const std::string& text);

/// Reads the stream files under root; timestamps are shifted so the
/// earliest sample across streams lands at zero. GPR traces are stacked in
/// trace-index order and cut into floor(N/W) disjoint windows. IMU and
/// ground truth are optional on disk; gpr and wheel are not.
SensorStreams ingest_dataset(const std::string& root, const SchemaConfig& schema);

/// Writes the documented CSV schema plus a meta file; round-trips through
/// ingest_dataset.
void export_streams(const SensorStreams& streams, const std::string& root);

}  // namespace gprodom
