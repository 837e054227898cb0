// Command line front end: simulate | extract | odom | eval.
// Exit codes: 0 ok, 1 usage, 2 bad data, 3 numerical failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gprodom/dataset.hpp"
#include "gprodom/errors.hpp"
#include "gprodom/evaluation.hpp"
#include "gprodom/pipeline.hpp"
#include "gprodom/simulator.hpp"

namespace fs = std::filesystem;
using namespace gprodom;

namespace {

std::vector<std::string> split_list(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory " + dir);
}

int cmd_simulate(const std::string& config, uint64_t seed,
                 const std::string& out) {
  const SimScene scene = scene_from_json_file(config);
  const SensorStreams streams = simulate(scene, seed);
  ensure_dir(out);
  export_streams(streams, out);
  std::printf("simulate: %zu gpr windows, %zu imu, %zu wheel, %zu truth -> %s\n",
              streams.gpr.size(), streams.imu.size(), streams.wheel.size(),
              streams.ground_truth.size(), out.c_str());
  return 0;
}

int cmd_extract(const std::string& config, uint64_t seed, bool seed_set,
                const std::string& out) {
  PipelineConfig cfg = pipeline_config_from_file(config);
  if (seed_set) cfg.seed = seed;
  const SensorStreams streams =
      cfg.scene ? simulate(*cfg.scene, cfg.seed)
                : ingest_dataset(cfg.dataset_dir, cfg.schema);
  const GprRun run = run_gpr_stage(streams, cfg);

  ensure_dir(out);
  for (size_t k = 0; k < run.stream.sfms.size(); ++k) {
    char name[32];
    std::snprintf(name, sizeof name, "sfm_%04zu.txt", k);
    std::ofstream f(out + "/" + name);
    f << sfm_to_text(run.stream.sfms[k]);
  }
  std::ofstream dist(out + "/distances.csv");
  dist << "t_from_s,t_to_s,u_m,sigma_m\n";
  dist.precision(17);
  for (const DistanceMeasurement& m : run.stream.measurements)
    dist << m.t_from << "," << m.t_to << "," << m.u_m << "," << m.sigma_m
         << "\n";
  std::printf(
      "extract: %zu sfms, %zu distances (%zu pairs skipped), k=%.6g m/col, "
      "cumulative %.3f m -> %s\n",
      run.stream.sfms.size(), run.stream.measurements.size(),
      run.stream.skipped_pairs, run.k_coeff, run.cumulative_m, out.c_str());
  return 0;
}

int cmd_odom(const std::string& config, uint64_t seed, bool seed_set,
             const std::string& modalities, const std::string& out) {
  PipelineConfig cfg = pipeline_config_from_file(config);
  if (seed_set) cfg.seed = seed;
  if (!modalities.empty()) cfg.modalities = split_list(modalities);
  const PipelineResult res = run_pipeline(cfg);
  write_outputs(res, out);
  for (const auto& [name, outcome] : res.outcomes) {
    if (outcome.ok)
      std::printf("odom: %-10s rmse %.6g m (%zu states)\n", name.c_str(),
                  outcome.rmse_m, outcome.trajectory.size());
    else
      std::printf("odom: %-10s FAILED %s\n", name.c_str(),
                  outcome.error.c_str());
  }
  std::printf("odom: report -> %s/report.json\n", out.c_str());
  return 0;
}

int cmd_eval(const std::string& config, const std::string& out) {
  std::ifstream in(config);
  if (!in) throw DataError("cannot open " + config);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("eval config: ") + e.what());
  }
  const std::string est_path = j.at("estimate").get<std::string>();
  const std::string gt_path = j.at("ground_truth").get<std::string>();
  const double max_dt = j.value("max_dt", 0.1);

  const auto est = trajectory_positions(load_trajectory(est_path));
  const auto gt = trajectory_positions(load_trajectory(gt_path));
  const Association assoc = associate(est, gt, max_dt);

  EvalReport report;
  report.rmse_m = rmse(assoc.pairs);
  report.rmse_vs_time = rmse_vs_time(assoc.pairs);
  report.trajectory_length_m = path_length(gt);

  ensure_dir(out);
  save_report(report, out + "/report.json");
  std::ofstream curve(out + "/rmse_vs_time.csv");
  curve << "t_s,rmse_m\n";
  curve.precision(17);
  for (const auto& [t, v] : report.rmse_vs_time)
    curve << t << "," << v << "\n";
  std::printf("eval: rmse %.6g m over %zu pairs (%zu dropped), length %.3f m\n",
              report.rmse_m, assoc.pairs.size(), assoc.dropped,
              report.trajectory_length_m);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GPR-assisted multimodal odometry"};
  app.require_subcommand(1);

  std::string config, out, modalities;
  uint64_t seed = 1;

  auto* sim = app.add_subcommand("simulate", "synthesize a dataset directory");
  sim->add_option("--config", config, "scene JSON")->required();
  sim->add_option("--seed", seed, "RNG seed");
  sim->add_option("--out", out, "output directory")->required();

  auto* ext = app.add_subcommand("extract", "SFM dumps and distance CSV");
  ext->add_option("--config", config, "pipeline JSON")->required();
  auto* ext_seed = ext->add_option("--seed", seed, "RNG seed override");
  ext->add_option("--out", out, "output directory")->required();

  auto* odo = app.add_subcommand("odom", "trajectories and report");
  odo->add_option("--config", config, "pipeline JSON")->required();
  auto* odo_seed = odo->add_option("--seed", seed, "RNG seed override");
  odo->add_option("--modalities", modalities,
                  "comma separated subset (gpr_only,wheel_only,imu_wheel,full)");
  odo->add_option("--out", out, "output directory")->required();

  auto* evl = app.add_subcommand("eval", "score a trajectory against truth");
  evl->add_option("--config", config, "JSON with estimate/ground_truth paths")
      ->required();
  evl->add_option("--out", out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (sim->parsed()) return cmd_simulate(config, seed, out);
    if (ext->parsed()) return cmd_extract(config, seed, !ext_seed->empty(), out);
    if (odo->parsed())
      return cmd_odom(config, seed, !odo_seed->empty(), modalities, out);
    return cmd_eval(config, out);
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
