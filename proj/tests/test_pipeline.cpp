#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "gprodom/errors.hpp"
#include "gprodom/pipeline.hpp"

using namespace gprodom;
namespace fs = std::filesystem;

namespace {

SimScene smoke_scene() {
  SimScene s;
  s.initial_speed_mps = 0.5;
  s.motion.push_back({12.0, 0.0, 0.0});
  for (int k = 0; k < 5; ++k)
    s.reflectors.push_back(
        {Eigen::Vector3d(1.0 + 2.2 * k, 0.0, -0.7 - 0.2 * k), 0.9});
  s.gpr.window_width = 64;
  s.gpr.noise_sigma = 0.005;
  s.imu_noise.accel_sigma = 0.01;
  s.imu_noise.gyro_sigma = 0.001;
  s.wheel_noise.slip_sigma = 0.01;
  return s;
}

PipelineConfig smoke_config() {
  PipelineConfig cfg;
  cfg.scene = smoke_scene();
  cfg.seed = 21;
  cfg.window_width = 64;
  cfg.window_stride = 16;
  cfg.modalities = {"gpr_only", "wheel_only", "imu_wheel", "full"};
  return cfg;
}

}  // namespace

TEST_CASE("pipeline config json: defaults, overrides, validation") {
  const PipelineConfig cfg = pipeline_config_from_json(R"({
    "dataset_dir": "/data/run1",
    "seed": 99,
    "window_stride": 24,
    "k_coeff": 0.015,
    "modalities": ["full", "wheel_only"],
    "sfm": {"depth_bins": 48, "min_prominence": 0.2,
            "match": {"max_shift": 20}},
    "fusion": {"keyframe_dt": 0.25, "wheel_sigma_m": 0.05},
    "solver": {"max_iterations": 17},
    "schema": {"wheel_file": "enc.csv"}
  })");
  CHECK(cfg.dataset_dir == "/data/run1");
  CHECK(cfg.seed == 99);
  CHECK(cfg.window_width == 128);
  CHECK(cfg.window_stride == 24);
  REQUIRE(cfg.k_coeff.has_value());
  CHECK(*cfg.k_coeff == doctest::Approx(0.015));
  CHECK(cfg.modalities == std::vector<std::string>{"full", "wheel_only"});
  CHECK(cfg.sfm.depth_bins == 48);
  CHECK(cfg.sfm.width_bins == 64);
  CHECK(cfg.sfm.min_prominence == doctest::Approx(0.2));
  CHECK(cfg.sfm.match.max_shift == 20);
  CHECK(cfg.fusion.keyframe_dt == doctest::Approx(0.25));
  CHECK(cfg.fusion.wheel_sigma_m == doctest::Approx(0.05));
  CHECK(cfg.solver.max_iterations == 17);
  CHECK(cfg.schema.wheel_file == "enc.csv");

  CHECK_THROWS_AS(pipeline_config_from_json("{}"), DataError);
  CHECK_THROWS_AS(pipeline_config_from_json("not json"), DataError);
}

TEST_CASE("scene json parsing") {
  const PipelineConfig cfg = pipeline_config_from_json(R"({
    "scene": {
      "initial_speed_mps": 0.6,
      "motion": [{"duration_s": 50.0}],
      "reflectors": [{"position": [2.0, 0.0, -1.0], "reflectivity": 0.8}],
      "gpr": {"trace_rate_hz": 32.0, "noise_sigma": 0.01},
      "wheel_noise": {"slip_sigma": 0.02}
    }
  })");
  REQUIRE(cfg.scene.has_value());
  CHECK(cfg.scene->initial_speed_mps == doctest::Approx(0.6));
  REQUIRE(cfg.scene->motion.size() == 1);
  CHECK(cfg.scene->motion[0].duration_s == doctest::Approx(50.0));
  CHECK(cfg.scene->motion[0].accel_mps2 == doctest::Approx(0.0));
  REQUIRE(cfg.scene->reflectors.size() == 1);
  CHECK(cfg.scene->reflectors[0].position.z() == doctest::Approx(-1.0));
  CHECK(cfg.scene->gpr.trace_rate_hz == doctest::Approx(32.0));
  CHECK(cfg.scene->gpr.depth_samples == 256);
  CHECK(cfg.scene->wheel_noise.slip_sigma == doctest::Approx(0.02));
}

TEST_CASE("gpr stage scales shifts by the resolved coefficient") {
  PipelineConfig cfg = smoke_config();
  const SensorStreams streams = simulate(*cfg.scene, cfg.seed);

  const GprRun derived = run_gpr_stage(streams, cfg);
  const BScan full = concat_windows(streams.gpr);
  REQUIRE(full.scan_spacing_m.has_value());
  const double expected_k =
      *full.scan_spacing_m * cfg.window_width / cfg.sfm.width_bins;
  CHECK(derived.k_coeff == doctest::Approx(expected_k));
  REQUIRE(!derived.stream.measurements.empty());
  for (const DistanceMeasurement& m : derived.stream.measurements) {
    const double cols = std::abs(m.u_m) / derived.k_coeff;
    CHECK(std::abs(cols - std::round(cols)) < 1e-9);
    CHECK(m.sigma_m > 0);
    CHECK(m.t_to > m.t_from);
  }

  cfg.k_coeff = 0.5;
  const GprRun forced = run_gpr_stage(streams, cfg);
  CHECK(forced.k_coeff == doctest::Approx(0.5));

  cfg.k_coeff.reset();
  cfg.window_stride = 60;  // > width/2
  CHECK_THROWS_AS(run_gpr_stage(streams, cfg), InvalidInput);
}

TEST_CASE("pipeline runs every modality and is deterministic") {
  const PipelineConfig cfg = smoke_config();
  const PipelineResult a = run_pipeline(cfg);
  const PipelineResult b = run_pipeline(cfg);

  for (const std::string& name : cfg.modalities) {
    REQUIRE(a.outcomes.count(name) == 1);
    const ModalityOutcome& o = a.outcomes.at(name);
    INFO(name << ": " << o.error);
    CHECK(o.ok);
    CHECK(o.rmse_m >= 0.0);
    CHECK(std::isfinite(o.rmse_m));
    CHECK(o.trajectory.size() > 10);
    CHECK(a.report.per_modality.count(name) == 1);
  }
  CHECK(a.report.trajectory_length_m > 4.0);
  CHECK(a.report.rmse_m == b.report.rmse_m);
  CHECK(a.report.per_modality == b.report.per_modality);

  // Noise this small keeps every estimate inside a loose sanity band.
  CHECK(a.report.rmse_m < 1.0);
}

TEST_CASE("write_outputs produces the report and trajectory files") {
  PipelineConfig cfg = smoke_config();
  cfg.modalities = {"wheel_only", "full"};
  const PipelineResult res = run_pipeline(cfg);

  std::mt19937_64 rng(std::random_device{}());
  const fs::path dir = fs::temp_directory_path() /
                       ("gprodom_out_" + std::to_string(rng() & 0xffffff));
  write_outputs(res, dir.string());

  CHECK(fs::exists(dir / "report.json"));
  CHECK(fs::exists(dir / "trajectory_full.csv"));
  CHECK(fs::exists(dir / "trajectory_wheel_only.csv"));
  CHECK(fs::exists(dir / "rmse_vs_time.csv"));
  CHECK(fs::exists(dir / "modalities.txt"));

  const EvalReport back = load_report((dir / "report.json").string());
  CHECK(back.rmse_m == doctest::Approx(res.report.rmse_m));
  CHECK(back.per_modality.size() == 2);

  const auto traj = load_trajectory((dir / "trajectory_full.csv").string());
  CHECK(traj.size() == res.outcomes.at("full").trajectory.size());

  fs::remove_all(dir);
}

TEST_CASE("featureless ground fails gpr modes but not the others") {
  PipelineConfig cfg = smoke_config();
  cfg.scene->reflectors.clear();
  const PipelineResult res = run_pipeline(cfg);

  CHECK_FALSE(res.outcomes.at("gpr_only").ok);
  CHECK(!res.outcomes.at("gpr_only").error.empty());
  CHECK(res.outcomes.at("wheel_only").ok);
  CHECK(res.outcomes.at("imu_wheel").ok);
  CHECK(res.report.per_modality.count("gpr_only") == 0);
  CHECK(res.report.per_modality.count("wheel_only") == 1);
}

TEST_CASE("unknown modality names fail their own slot only") {
  PipelineConfig cfg = smoke_config();
  cfg.modalities = {"wheel_only", "sideways"};
  const PipelineResult res = run_pipeline(cfg);
  CHECK(res.outcomes.at("wheel_only").ok);
  CHECK_FALSE(res.outcomes.at("sideways").ok);
  CHECK(res.outcomes.at("sideways").error.find("sideways") != std::string::npos);
}
