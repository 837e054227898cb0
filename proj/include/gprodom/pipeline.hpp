#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gprodom/evaluation.hpp"
#include "gprodom/simulator.hpp"

namespace gprodom {

struct PipelineConfig {
  // Input: a dataset directory, or a scene to simulate when set.
  std::string dataset_dir;
  SchemaConfig schema;
  std::optional<SimScene> scene;
  uint64_t seed = 1;

  // GPR processing: windows are re-cut from the ingested stream so
  // consecutive ones overlap.
  SfmStreamConfig sfm;
  int window_width = 128;
  int window_stride = 32;

  // Distance scale (meters per SFM column): explicit value, else derived
  // from trace spacing, else least-squares calibrated against the encoder.
  std::optional<double> k_coeff;
  int calib_intervals = 50;

  BuildConfig fusion;
  OptimizeOptions solver;

  std::vector<std::string> modalities = {"gpr_only", "wheel_only", "imu_wheel",
                                         "full"};
  double assoc_max_dt = 0.1;
};

PipelineConfig pipeline_config_from_json(const std::string& text);
PipelineConfig pipeline_config_from_file(const std::string& path);
SimScene scene_from_json_file(const std::string& path);

struct GprRun {
  std::vector<BScan> windows;
  StreamResult stream;
  double k_coeff = 0;
  double cumulative_m = 0;  // sum of |u| over valid measurements
};

/// Rewindows the GPR stream, resolves the distance scale, and runs the
/// SFM shift-matching chain.
GprRun run_gpr_stage(const SensorStreams& streams, const PipelineConfig& cfg);

struct ModalityOutcome {
  bool ok = false;
  std::string error;  // "<stage>: <message>" when failed
  double rmse_m = 0;
  std::vector<RobotState> trajectory;
  std::vector<std::pair<double, double>> rmse_curve;
};

struct PipelineResult {
  EvalReport report;
  std::map<std::string, ModalityOutcome> outcomes;
  GprRun gpr;
  SensorStreams streams;
};

/// ingest/simulate -> SFM distance stream -> graph build -> optimize ->
/// evaluate, once per enabled modality. A stage failure marks that
/// modality's outcome and leaves the others alone.
PipelineResult run_pipeline(const PipelineConfig& cfg);

/// report.json, per-modality trajectory CSVs, rmse_vs_time.csv.
void write_outputs(const PipelineResult& result, const std::string& out_dir);

}  // namespace gprodom
