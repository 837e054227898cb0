#include "gprodom/pipeline.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "csv_util.hpp"
#include "gprodom/so3.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace gprodom {
namespace {

Eigen::Vector3d vec3_from(const json& j) {
  if (!j.is_array() || j.size() != 3)
    throw DataError("config: expected a 3-element array");
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

FilterConfig filter_from(const json& j) {
  FilterConfig c;
  c.dc_window = j.value("dc_window", c.dc_window);
  c.cutoff_fraction = j.value("cutoff_fraction", c.cutoff_fraction);
  c.amplitude_floor = j.value("amplitude_floor", c.amplitude_floor);
  return c;
}

PeakConfig peaks_from(const json& j) {
  PeakConfig c;
  c.envelope_halfwidth = j.value("envelope_halfwidth", c.envelope_halfwidth);
  c.max_peaks = j.value("max_peaks", c.max_peaks);
  c.fit_window_min = j.value("fit_window_min", c.fit_window_min);
  c.fit_window_max = j.value("fit_window_max", c.fit_window_max);
  return c;
}

SfmStreamConfig sfm_from(const json& j) {
  SfmStreamConfig c;
  if (j.contains("filter")) c.filter = filter_from(j["filter"]);
  if (j.contains("peaks")) c.peaks = peaks_from(j["peaks"]);
  c.min_prominence = j.value("min_prominence", c.min_prominence);
  c.background_removal = j.value("background_removal", c.background_removal);
  c.depth_bins = j.value("depth_bins", c.depth_bins);
  c.width_bins = j.value("width_bins", c.width_bins);
  if (j.contains("match")) {
    const json& m = j["match"];
    c.match.max_shift = m.value("max_shift", c.match.max_shift);
    c.match.validity_threshold =
        m.value("validity_threshold", c.match.validity_threshold);
    c.match.min_overlap = m.value("min_overlap", c.match.min_overlap);
  }
  if (j.contains("distance")) {
    const json& d = j["distance"];
    c.distance.sigma_base = d.value("sigma_base", c.distance.sigma_base);
    c.distance.sigma_cost = d.value("sigma_cost", c.distance.sigma_cost);
  }
  c.wave_speed_m_per_ns = j.value("wave_speed_m_per_ns", c.wave_speed_m_per_ns);
  return c;
}

ImuNoise imu_noise_from(const json& j) {
  ImuNoise n;
  n.accel_noise_density = j.value("accel_noise_density", n.accel_noise_density);
  n.gyro_noise_density = j.value("gyro_noise_density", n.gyro_noise_density);
  n.accel_bias_rw = j.value("accel_bias_rw", n.accel_bias_rw);
  n.gyro_bias_rw = j.value("gyro_bias_rw", n.gyro_bias_rw);
  return n;
}

BuildConfig fusion_from(const json& j) {
  BuildConfig c;
  c.keyframe_dt = j.value("keyframe_dt", c.keyframe_dt);
  if (j.contains("imu_noise")) c.imu_noise = imu_noise_from(j["imu_noise"]);
  if (j.contains("gravity")) c.gravity = vec3_from(j["gravity"]);
  c.wheel_sigma_m = j.value("wheel_sigma_m", c.wheel_sigma_m);
  if (j.contains("prior")) {
    const json& p = j["prior"];
    c.prior.rot_sigma = p.value("rot_sigma", c.prior.rot_sigma);
    c.prior.pos_sigma = p.value("pos_sigma", c.prior.pos_sigma);
    c.prior.vel_sigma = p.value("vel_sigma", c.prior.vel_sigma);
    c.prior.bias_sigma = p.value("bias_sigma", c.prior.bias_sigma);
  }
  c.heading_sigma_rad = j.value("heading_sigma_rad", c.heading_sigma_rad);
  c.lateral_sigma_m = j.value("lateral_sigma_m", c.lateral_sigma_m);
  c.weak_vel_sigma = j.value("weak_vel_sigma", c.weak_vel_sigma);
  c.weak_bias_sigma = j.value("weak_bias_sigma", c.weak_bias_sigma);
  return c;
}

SimScene scene_from(const json& j) {
  SimScene s;
  if (j.contains("reflectors")) {
    for (const json& r : j["reflectors"]) {
      Reflector refl;
      refl.position = vec3_from(r.at("position"));
      refl.reflectivity = r.value("reflectivity", refl.reflectivity);
      s.reflectors.push_back(refl);
    }
  }
  if (j.contains("motion")) {
    for (const json& m : j["motion"]) {
      MotionCommand c;
      c.duration_s = m.value("duration_s", c.duration_s);
      c.accel_mps2 = m.value("accel_mps2", c.accel_mps2);
      c.yaw_rate_rps = m.value("yaw_rate_rps", c.yaw_rate_rps);
      s.motion.push_back(c);
    }
  }
  s.initial_speed_mps = j.value("initial_speed_mps", s.initial_speed_mps);
  s.imu_rate_hz = j.value("imu_rate_hz", s.imu_rate_hz);
  s.ground_truth_rate_hz = j.value("ground_truth_rate_hz", s.ground_truth_rate_hz);
  if (j.contains("gpr")) {
    const json& g = j["gpr"];
    s.gpr.depth_samples = g.value("depth_samples", s.gpr.depth_samples);
    s.gpr.sample_interval_ns = g.value("sample_interval_ns", s.gpr.sample_interval_ns);
    s.gpr.wave_speed_m_per_ns = g.value("wave_speed_m_per_ns", s.gpr.wave_speed_m_per_ns);
    s.gpr.pulse_omega = g.value("pulse_omega", s.gpr.pulse_omega);
    s.gpr.pulse_alpha = g.value("pulse_alpha", s.gpr.pulse_alpha);
    s.gpr.ground_bounce_delay_ns =
        g.value("ground_bounce_delay_ns", s.gpr.ground_bounce_delay_ns);
    s.gpr.ground_bounce_amplitude =
        g.value("ground_bounce_amplitude", s.gpr.ground_bounce_amplitude);
    s.gpr.noise_sigma = g.value("noise_sigma", s.gpr.noise_sigma);
    s.gpr.clutter_amplitude = g.value("clutter_amplitude", s.gpr.clutter_amplitude);
    s.gpr.trace_rate_hz = g.value("trace_rate_hz", s.gpr.trace_rate_hz);
    s.gpr.trace_spacing_m = g.value("trace_spacing_m", s.gpr.trace_spacing_m);
    s.gpr.window_width = g.value("window_width", s.gpr.window_width);
  }
  if (j.contains("imu_noise")) {
    const json& n = j["imu_noise"];
    s.imu_noise.accel_sigma = n.value("accel_sigma", s.imu_noise.accel_sigma);
    s.imu_noise.gyro_sigma = n.value("gyro_sigma", s.imu_noise.gyro_sigma);
    if (n.contains("accel_bias")) s.imu_noise.accel_bias = vec3_from(n["accel_bias"]);
    if (n.contains("gyro_bias")) s.imu_noise.gyro_bias = vec3_from(n["gyro_bias"]);
  }
  if (j.contains("wheel_noise")) {
    const json& n = j["wheel_noise"];
    s.wheel_noise.slip_sigma = n.value("slip_sigma", s.wheel_noise.slip_sigma);
    s.wheel_noise.slip_bias = n.value("slip_bias", s.wheel_noise.slip_bias);
    s.wheel_noise.tick_m = n.value("tick_m", s.wheel_noise.tick_m);
    s.wheel_noise.rate_hz = n.value("rate_hz", s.wheel_noise.rate_hz);
  }
  return s;
}

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(what + ": " + e.what());
  }
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

}  // namespace

PipelineConfig pipeline_config_from_json(const std::string& text) {
  const json j = parse_json(text, "pipeline config");
  PipelineConfig c;
  c.dataset_dir = j.value("dataset_dir", c.dataset_dir);
  if (j.contains("schema")) c.schema = schema_from_json_text(j["schema"].dump());
  if (j.contains("scene")) c.scene = scene_from(j["scene"]);
  c.seed = j.value("seed", c.seed);
  if (j.contains("sfm")) c.sfm = sfm_from(j["sfm"]);
  c.window_width = j.value("window_width", c.window_width);
  c.window_stride = j.value("window_stride", c.window_stride);
  if (j.contains("k_coeff")) c.k_coeff = j["k_coeff"].get<double>();
  c.calib_intervals = j.value("calib_intervals", c.calib_intervals);
  if (j.contains("fusion")) c.fusion = fusion_from(j["fusion"]);
  if (j.contains("solver")) {
    const json& s = j["solver"];
    c.solver.max_iterations = s.value("max_iterations", c.solver.max_iterations);
    c.solver.rel_tol = s.value("rel_tol", c.solver.rel_tol);
    c.solver.window = s.value("window", c.solver.window);
  }
  if (j.contains("modalities"))
    c.modalities = j["modalities"].get<std::vector<std::string>>();
  c.assoc_max_dt = j.value("assoc_max_dt", c.assoc_max_dt);
  if (c.dataset_dir.empty() && !c.scene)
    throw DataError("pipeline config: need dataset_dir or scene");
  return c;
}

PipelineConfig pipeline_config_from_file(const std::string& path) {
  return pipeline_config_from_json(slurp(path));
}

SimScene scene_from_json_file(const std::string& path) {
  const json j = parse_json(slurp(path), "scene config " + path);
  return scene_from(j.contains("scene") ? j["scene"] : j);
}

GprRun run_gpr_stage(const SensorStreams& streams, const PipelineConfig& cfg) {
  if (cfg.window_stride < 1 || cfg.window_stride * 2 > cfg.window_width)
    throw InvalidInput("pipeline: window_stride must lie in [1, window_width/2]");

  GprRun run;
  const BScan full = concat_windows(streams.gpr);
  run.windows = window_bscan(full, cfg.window_width, cfg.window_stride);
  if (run.windows.size() < 2)
    throw DataError("gpr: stream shorter than two windows");

  SfmStreamConfig sc = cfg.sfm;
  sc.distance.k_coeff = 1.0;  // shifts in columns; scaled below
  run.stream = gpr_distance_stream(run.windows, sc);

  double k = 0;
  if (cfg.k_coeff) {
    k = *cfg.k_coeff;
  } else if (full.scan_spacing_m && *full.scan_spacing_m > 0) {
    k = *full.scan_spacing_m * cfg.window_width / sc.width_bins;
  } else if (!streams.wheel.empty() && !run.stream.measurements.empty()) {
    std::vector<int> shifts;
    std::vector<double> dists;
    const int limit = std::max(1, cfg.calib_intervals);
    for (const DistanceMeasurement& m : run.stream.measurements) {
      if (static_cast<int>(shifts.size()) >= limit) break;
      shifts.push_back(static_cast<int>(std::lround(std::abs(m.u_m))));
      dists.push_back(wheel_distance_at(streams.wheel, m.t_to) -
                      wheel_distance_at(streams.wheel, m.t_from));
    }
    try {
      k = calibrate_k(shifts, dists);
    } catch (const InvalidInput&) {
      k = 1.0;  // all shifts zero: stationary run, scale is moot
    }
  } else {
    throw DataError(
        "gpr: cannot determine distance scale (set k_coeff, provide trace "
        "spacing, or supply a wheel stream)");
  }
  if (!(k > 0) || !std::isfinite(k))
    throw DataError("gpr: resolved a nonpositive distance scale");

  run.k_coeff = k;
  for (DistanceMeasurement& m : run.stream.measurements) {
    m.u_m *= k;
    run.cumulative_m += std::abs(m.u_m);
  }
  return run;
}

namespace {

std::vector<std::pair<double, Eigen::Matrix3d>> heading_track(
    const SensorStreams& s) {
  std::vector<std::pair<double, Eigen::Matrix3d>> track;
  if (!s.imu.empty()) {
    Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
    track.emplace_back(s.imu.front().t_s, R);
    for (size_t k = 0; k + 1 < s.imu.size(); ++k) {
      const double dt = s.imu[k + 1].t_s - s.imu[k].t_s;
      R = so3::Orthonormalize(R * so3::Exp(s.imu[k].gyro * dt));
      track.emplace_back(s.imu[k + 1].t_s, R);
    }
    return track;
  }
  if (s.ground_truth.size() >= 2) {
    Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
    for (size_t k = 0; k < s.ground_truth.size(); ++k) {
      const size_t nxt = std::min(k + 1, s.ground_truth.size() - 1);
      const Eigen::Vector2d d =
          (s.ground_truth[nxt].p - s.ground_truth[k == nxt ? k - 1 : k].p)
              .head<2>();
      if (d.norm() > 1e-9) {
        const double theta = std::atan2(d.y(), d.x());
        R = Eigen::AngleAxisd(theta, Eigen::Vector3d::UnitZ())
                .toRotationMatrix();
      }
      track.emplace_back(s.ground_truth[k].t_s, R);
    }
  }
  return track;
}

RobotState make_anchor(const SensorStreams& s,
                       const std::vector<std::pair<double, Eigen::Matrix3d>>& track) {
  RobotState anchor;
  if (!s.ground_truth.empty()) {
    anchor.p = s.ground_truth.front().p;
    for (size_t k = 1; k < s.ground_truth.size(); ++k) {
      const Eigen::Vector3d d = s.ground_truth[k].p - s.ground_truth[0].p;
      if (d.head<2>().norm() > 1e-9) {
        anchor.R = Eigen::AngleAxisd(std::atan2(d.y(), d.x()),
                                     Eigen::Vector3d::UnitZ())
                       .toRotationMatrix();
        anchor.v = d / (s.ground_truth[k].t_s - s.ground_truth[0].t_s);
        break;
      }
    }
  } else if (!track.empty()) {
    anchor.R = track.front().second;
  }
  return anchor;
}

ModalityOutcome run_modality(
    const std::string& name, const SensorStreams& streams, const GprRun* gpr,
    const std::string& gpr_error, const PipelineConfig& cfg,
    const std::vector<std::pair<double, Eigen::Matrix3d>>& headings,
    const RobotState& anchor) {
  ModalityOutcome out;
  std::string stage = "config";
  try {
    BuildConfig bc = cfg.fusion;
    bc.prior.target = anchor;
    const bool has_imu = !streams.imu.empty();
    if (name == "gpr_only") {
      bc.use_imu = false;
      bc.use_wheel = false;
      bc.use_gpr = true;
    } else if (name == "wheel_only") {
      bc.use_imu = false;
      bc.use_wheel = true;
      bc.use_gpr = false;
    } else if (name == "imu_wheel") {
      if (!has_imu) throw DataError("IMU stream absent");
      bc.use_imu = true;
      bc.use_wheel = true;
      bc.use_gpr = false;
    } else if (name == "full") {
      bc.use_imu = has_imu;
      bc.use_wheel = true;
      bc.use_gpr = true;
    } else {
      throw InvalidInput("unknown modality '" + name + "'");
    }
    if (!bc.use_imu) bc.headings = headings;

    std::vector<DistanceMeasurement> gpr_meas;
    if (bc.use_gpr) {
      stage = "gpr";
      if (!gpr_error.empty()) throw DataError(gpr_error);
      if (!gpr || gpr->stream.measurements.empty())
        throw DataError("no valid GPR distance measurements");
      gpr_meas = gpr->stream.measurements;
    }

    stage = "graph";
    BuiltGraph built = build_graph(streams.imu, streams.wheel, gpr_meas, bc);
    stage = "optimize";
    const OptimizeResult opt = optimize(built.graph, built.init, cfg.solver);
    out.trajectory = opt.states;

    stage = "evaluate";
    if (!streams.ground_truth.empty()) {
      const Association assoc =
          associate(trajectory_positions(opt.states), streams.ground_truth,
                    cfg.assoc_max_dt);
      out.rmse_m = rmse(assoc.pairs);
      out.rmse_curve = rmse_vs_time(assoc.pairs);
    }
    out.ok = true;
  } catch (const std::exception& e) {
    out.ok = false;
    out.error = stage + ": " + e.what();
  }
  return out;
}

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& cfg) {
  PipelineResult res;
  res.streams = cfg.scene ? simulate(*cfg.scene, cfg.seed)
                          : ingest_dataset(cfg.dataset_dir, cfg.schema);

  const bool need_gpr =
      std::any_of(cfg.modalities.begin(), cfg.modalities.end(),
                  [](const std::string& m) {
                    return m == "gpr_only" || m == "full";
                  });
  std::string gpr_error;
  if (need_gpr) {
    try {
      res.gpr = run_gpr_stage(res.streams, cfg);
    } catch (const std::exception& e) {
      gpr_error = e.what();
    }
  }

  const auto headings = heading_track(res.streams);
  const RobotState anchor = make_anchor(res.streams, headings);

  for (const std::string& name : cfg.modalities)
    res.outcomes[name] = run_modality(name, res.streams, &res.gpr, gpr_error,
                                      cfg, headings, anchor);

  const ModalityOutcome* primary = nullptr;
  const auto full_it = res.outcomes.find("full");
  if (full_it != res.outcomes.end() && full_it->second.ok)
    primary = &full_it->second;
  for (const std::string& name : cfg.modalities) {
    const ModalityOutcome& o = res.outcomes.at(name);
    if (o.ok && !res.streams.ground_truth.empty())
      res.report.per_modality[name] = o.rmse_m;
    if (!primary && o.ok) primary = &o;
  }
  if (primary) {
    res.report.rmse_m = primary->rmse_m;
    res.report.rmse_vs_time = primary->rmse_curve;
  }
  if (!res.streams.ground_truth.empty())
    res.report.trajectory_length_m = path_length(res.streams.ground_truth);
  else if (primary)
    res.report.trajectory_length_m =
        path_length(trajectory_positions(primary->trajectory));
  return res;
}

void write_outputs(const PipelineResult& result, const std::string& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create output directory " + out_dir);

  save_report(result.report, out_dir + "/report.json");

  for (const auto& [name, outcome] : result.outcomes) {
    if (!outcome.ok) continue;
    save_trajectory(outcome.trajectory, out_dir + "/trajectory_" + name + ".csv");
  }

  auto curve = csv::open_out(out_dir + "/rmse_vs_time.csv");
  curve << "t_s,rmse_m\n";
  for (const auto& [t, v] : result.report.rmse_vs_time)
    curve << csv::fmt(t) << "," << csv::fmt(v) << "\n";

  auto failures = csv::open_out(out_dir + "/modalities.txt");
  for (const auto& [name, outcome] : result.outcomes)
    failures << name << ": " << (outcome.ok ? "ok" : outcome.error) << "\n";
}

}  // namespace gprodom
