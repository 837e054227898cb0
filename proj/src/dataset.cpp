#include "gprodom/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "csv_util.hpp"
#include "gprodom/sfm.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace gprodom {

void validate(const SensorStreams& s) {
  if (s.gpr.empty()) throw InvalidInput("SensorStreams: no GPR windows");
  if (s.wheel.empty()) throw InvalidInput("SensorStreams: no wheel stream");
  for (const BScan& w : s.gpr) validate(w);
  for (size_t k = 0; k + 1 < s.gpr.size(); ++k)
    if (!(s.gpr[k].timestamps_s(s.gpr[k].trace_count() - 1) <=
          s.gpr[k + 1].timestamps_s(0)))
      throw InvalidInput("SensorStreams: GPR windows out of order");
  for (size_t k = 0; k + 1 < s.wheel.size(); ++k)
    if (!(s.wheel[k].t_s < s.wheel[k + 1].t_s))
      throw InvalidInput("SensorStreams: wheel stream not time-sorted");
  for (size_t k = 0; k + 1 < s.imu.size(); ++k)
    if (!(s.imu[k].t_s < s.imu[k + 1].t_s))
      throw InvalidInput("SensorStreams: IMU stream not time-sorted");
  for (size_t k = 0; k + 1 < s.ground_truth.size(); ++k)
    if (!(s.ground_truth[k].t_s < s.ground_truth[k + 1].t_s))
      throw InvalidInput("SensorStreams: ground truth not time-sorted");
}

using csv::col_index;
using csv::fmt;
using csv::open_out;
using csv::read_csv;
using Csv = csv::Table;

SchemaConfig schema_from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open schema config " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  try {
    return schema_from_json_text(text);
  } catch (const DataError& e) {
    throw DataError("schema config " + path + ": " + e.what());
  }
}

SchemaConfig schema_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("schema config: ") + e.what());
  }
  SchemaConfig s;
  s.gpr_file = j.value("gpr_file", s.gpr_file);
  s.imu_file = j.value("imu_file", s.imu_file);
  s.wheel_file = j.value("wheel_file", s.wheel_file);
  s.ground_truth_file = j.value("ground_truth_file", s.ground_truth_file);
  s.meta_file = j.value("meta_file", s.meta_file);
  s.time_col = j.value("time_col", s.time_col);
  s.time_scale = j.value("time_scale", s.time_scale);
  s.trace_index_col = j.value("trace_index_col", s.trace_index_col);
  s.sample_prefix = j.value("sample_prefix", s.sample_prefix);
  s.wheel_dist_col = j.value("wheel_dist_col", s.wheel_dist_col);
  s.wheel_scale = j.value("wheel_scale", s.wheel_scale);
  s.imu_accel_cols = j.value("imu_accel_cols", s.imu_accel_cols);
  s.imu_gyro_cols = j.value("imu_gyro_cols", s.imu_gyro_cols);
  s.accel_scale = j.value("accel_scale", s.accel_scale);
  s.gyro_scale = j.value("gyro_scale", s.gyro_scale);
  s.ground_truth_cols = j.value("ground_truth_cols", s.ground_truth_cols);
  s.ground_truth_scale = j.value("ground_truth_scale", s.ground_truth_scale);
  s.window_width = j.value("window_width", s.window_width);
  s.sample_interval_ns = j.value("sample_interval_ns", s.sample_interval_ns);
  if (j.contains("scan_spacing_m"))
    s.scan_spacing_m = j["scan_spacing_m"].get<double>();
  return s;
}

SensorStreams ingest_dataset(const std::string& root,
                             const SchemaConfig& schema) {
  if (!fs::is_directory(root))
    throw DataError("dataset directory does not exist: " + root);
  const auto path = [&root](const std::string& f) { return root + "/" + f; };

  if (!fs::exists(path(schema.gpr_file)))
    throw DataError("missing GPR stream file: " + path(schema.gpr_file));
  if (!fs::exists(path(schema.wheel_file)))
    throw DataError("missing wheel stream file: " + path(schema.wheel_file));

  double sample_interval_ns = schema.sample_interval_ns;
  std::optional<double> spacing = schema.scan_spacing_m;
  int window_width = schema.window_width;
  if (fs::exists(path(schema.meta_file))) {
    std::ifstream in(path(schema.meta_file));
    json meta;
    try {
      in >> meta;
    } catch (const json::exception& e) {
      throw DataError(path(schema.meta_file) + ": " + e.what());
    }
    sample_interval_ns = meta.value("sample_interval_ns", sample_interval_ns);
    window_width = meta.value("window_width", window_width);
    if (meta.contains("scan_spacing_m"))
      spacing = meta["scan_spacing_m"].get<double>();
  }

  SensorStreams out;

  {
    const std::string file = path(schema.wheel_file);
    const Csv csv = read_csv(file);
    const int tc = col_index(csv, schema.time_col, file);
    const int dc = col_index(csv, schema.wheel_dist_col, file);
    for (const auto& row : csv.rows)
      out.wheel.push_back(
          {row[tc] * schema.time_scale, row[dc] * schema.wheel_scale});
    std::sort(out.wheel.begin(), out.wheel.end(),
              [](const WheelSample& a, const WheelSample& b) {
                return a.t_s < b.t_s;
              });
  }

  if (fs::exists(path(schema.imu_file))) {
    const std::string file = path(schema.imu_file);
    const Csv csv = read_csv(file);
    const int tc = col_index(csv, schema.time_col, file);
    if (schema.imu_accel_cols.size() != 3 || schema.imu_gyro_cols.size() != 3)
      throw DataError("schema: imu_accel_cols/imu_gyro_cols must have 3 names");
    int ac[3], gc[3];
    for (int k = 0; k < 3; ++k) {
      ac[k] = col_index(csv, schema.imu_accel_cols[k], file);
      gc[k] = col_index(csv, schema.imu_gyro_cols[k], file);
    }
    for (const auto& row : csv.rows) {
      ImuSample m;
      m.t_s = row[tc] * schema.time_scale;
      for (int k = 0; k < 3; ++k) {
        m.accel(k) = row[ac[k]] * schema.accel_scale;
        m.gyro(k) = row[gc[k]] * schema.gyro_scale;
      }
      out.imu.push_back(m);
    }
    std::sort(out.imu.begin(), out.imu.end(),
              [](const ImuSample& a, const ImuSample& b) { return a.t_s < b.t_s; });
  }

  if (fs::exists(path(schema.ground_truth_file))) {
    const std::string file = path(schema.ground_truth_file);
    const Csv csv = read_csv(file);
    const int tc = col_index(csv, schema.time_col, file);
    if (schema.ground_truth_cols.size() != 3)
      throw DataError("schema: ground_truth_cols must have 3 names");
    int pc[3];
    for (int k = 0; k < 3; ++k)
      pc[k] = col_index(csv, schema.ground_truth_cols[k], file);
    for (const auto& row : csv.rows) {
      TimedPosition g;
      g.t_s = row[tc] * schema.time_scale;
      for (int k = 0; k < 3; ++k)
        g.p(k) = row[pc[k]] * schema.ground_truth_scale;
      out.ground_truth.push_back(g);
    }
    std::sort(out.ground_truth.begin(), out.ground_truth.end(),
              [](const TimedPosition& a, const TimedPosition& b) {
                return a.t_s < b.t_s;
              });
  }

  {
    const std::string file = path(schema.gpr_file);
    const Csv csv = read_csv(file);
    const int tc = col_index(csv, schema.time_col, file);
    const int ic = col_index(csv, schema.trace_index_col, file);

    // Sample columns: prefix + integer suffix, ordered by suffix.
    std::vector<std::pair<long, int>> sample_cols;
    for (size_t c = 0; c < csv.header.size(); ++c) {
      const std::string& h = csv.header[c];
      if (h.size() <= schema.sample_prefix.size() ||
          h.compare(0, schema.sample_prefix.size(), schema.sample_prefix) != 0)
        continue;
      const std::string suffix = h.substr(schema.sample_prefix.size());
      if (!std::all_of(suffix.begin(), suffix.end(),
                       [](unsigned char ch) { return std::isdigit(ch); }))
        continue;
      sample_cols.emplace_back(std::stol(suffix), static_cast<int>(c));
    }
    std::sort(sample_cols.begin(), sample_cols.end());
    if (sample_cols.empty())
      throw DataError(file + ": no sample columns with prefix '" +
                      schema.sample_prefix + "'");

    std::vector<const std::vector<double>*> ordered;
    ordered.reserve(csv.rows.size());
    for (const auto& row : csv.rows) ordered.push_back(&row);
    std::sort(ordered.begin(), ordered.end(),
              [ic](const auto* a, const auto* b) { return (*a)[ic] < (*b)[ic]; });

    std::vector<AScan> traces;
    traces.reserve(ordered.size());
    for (const auto* row : ordered) {
      AScan a;
      a.timestamp_s = (*row)[tc] * schema.time_scale;
      a.sample_interval_ns = sample_interval_ns;
      a.samples.resize(sample_cols.size());
      for (size_t k = 0; k < sample_cols.size(); ++k)
        a.samples(k) = (*row)[sample_cols[k].second];
      traces.push_back(std::move(a));
    }
    if (static_cast<int>(traces.size()) < window_width)
      throw DataError(file + ": fewer traces than one window (" +
                      std::to_string(traces.size()) + " < " +
                      std::to_string(window_width) + ")");
    const BScan full = make_bscan(traces, spacing);
    out.gpr = window_bscan(full, window_width, window_width);
  }

  // Shift the run onto a common zero.
  double t0 = out.gpr.front().timestamps_s(0);
  t0 = std::min(t0, out.wheel.front().t_s);
  if (!out.imu.empty()) t0 = std::min(t0, out.imu.front().t_s);
  if (!out.ground_truth.empty())
    t0 = std::min(t0, out.ground_truth.front().t_s);
  if (t0 != 0.0) {
    for (BScan& w : out.gpr) w.timestamps_s.array() -= t0;
    for (WheelSample& w : out.wheel) w.t_s -= t0;
    for (ImuSample& m : out.imu) m.t_s -= t0;
    for (TimedPosition& g : out.ground_truth) g.t_s -= t0;
  }

  validate(out);
  return out;
}

void export_streams(const SensorStreams& streams, const std::string& root) {
  validate(streams);
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw DataError("cannot create output directory " + root);

  {
    auto out = open_out(root + "/wheel.csv");
    out << "t_s,dist_m\n";
    for (const WheelSample& w : streams.wheel)
      out << fmt(w.t_s) << "," << fmt(w.dist_m) << "\n";
  }

  if (!streams.imu.empty()) {
    auto out = open_out(root + "/imu.csv");
    out << "t_s,ax,ay,az,gx,gy,gz\n";
    for (const ImuSample& m : streams.imu) {
      out << fmt(m.t_s);
      for (int k = 0; k < 3; ++k) out << "," << fmt(m.accel(k));
      for (int k = 0; k < 3; ++k) out << "," << fmt(m.gyro(k));
      out << "\n";
    }
  }

  if (!streams.ground_truth.empty()) {
    auto out = open_out(root + "/ground_truth.csv");
    out << "t_s,x,y,z\n";
    for (const TimedPosition& g : streams.ground_truth)
      out << fmt(g.t_s) << "," << fmt(g.p.x()) << "," << fmt(g.p.y()) << ","
          << fmt(g.p.z()) << "\n";
  }

  {
    auto out = open_out(root + "/gpr_traces.csv");
    const Eigen::Index depth = streams.gpr.front().depth_samples();
    out << "t_s,trace_index";
    for (Eigen::Index i = 0; i < depth; ++i) out << ",s" << i;
    out << "\n";
    long index = 0;
    for (const BScan& w : streams.gpr) {
      if (w.depth_samples() != depth)
        throw InvalidInput("export_streams: inconsistent window depths");
      for (Eigen::Index c = 0; c < w.trace_count(); ++c, ++index) {
        out << fmt(w.timestamps_s(c)) << "," << index;
        for (Eigen::Index i = 0; i < depth; ++i) out << "," << fmt(w.data(i, c));
        out << "\n";
      }
    }
  }

  json meta;
  meta["sample_interval_ns"] = streams.gpr.front().sample_interval_ns;
  meta["window_width"] = static_cast<int>(streams.gpr.front().trace_count());
  if (streams.gpr.front().scan_spacing_m)
    meta["scan_spacing_m"] = *streams.gpr.front().scan_spacing_m;
  auto out = open_out(root + "/meta.json");
  out << meta.dump(2) << "\n";
}

}  // namespace gprodom
