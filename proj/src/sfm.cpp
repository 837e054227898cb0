#include "gprodom/sfm.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gprodom/errors.hpp"

namespace gprodom {

void validate(const Sfm& s) {
  if (s.grid.rows() < 1 || s.grid.cols() < 2)
    throw InvalidInput("Sfm: grid must be at least 1x2");
  if ((s.grid.array() < 0).any() || (s.grid.array() > 10).any())
    throw InvalidInput("Sfm: levels must lie in [0, 10]");
  if (!std::isfinite(s.timestamp_s)) throw InvalidInput("Sfm: bad timestamp");
}

Sfm build_sfm(const PeakSet& peaks, int depth_bins, int width_bins) {
  validate(peaks);
  if (depth_bins < 1 || width_bins < 2)
    throw InvalidInput("build_sfm: need depth_bins >= 1 and width_bins >= 2");

  Sfm out;
  out.grid = LevelMatrix::Zero(depth_bins, width_bins);
  out.timestamp_s = peaks.timestamp_s;
  for (const Peak& p : peaks.peaks) {
    const Eigen::Index row =
        static_cast<Eigen::Index>(p.d) * depth_bins / peaks.source_depth;
    const Eigen::Index col =
        static_cast<Eigen::Index>(p.r) * width_bins / peaks.source_width;
    const int level = std::clamp(
        static_cast<int>(std::floor(10.0 * p.amplitude / 255.0)), 0, 10);
    out.grid(row, col) = std::max(out.grid(row, col), level);
  }
  return out;
}

ShiftMatch match_shift(const Sfm& s1, const Sfm& s2, const MatchConfig& cfg) {
  validate(s1);
  validate(s2);
  if (s1.grid.rows() != s2.grid.rows() || s1.grid.cols() != s2.grid.cols())
    throw InvalidInput("match_shift: SFM dimensions differ");
  if (cfg.max_shift < 0 || cfg.max_shift >= s1.grid.cols())
    throw InvalidInput("match_shift: max_shift out of range");
  if (cfg.min_overlap < 1) throw InvalidInput("match_shift: min_overlap < 1");

  const Eigen::Index depth = s1.grid.rows();
  const Eigen::Index width = s1.grid.cols();

  ShiftMatch best;
  auto consider = [&](int l) {
    const Eigen::Index w = width - std::abs(l);
    const Eigen::Index c1 = l >= 0 ? 0 : -l;
    const Eigen::Index c2 = l >= 0 ? l : 0;
    const auto a = s1.grid.block(0, c1, depth, w);
    const auto b = s2.grid.block(0, c2, depth, w);
    if ((a.array() == 0).all() || (b.array() == 0).all()) return;
    const double cost = cosine_distance(a, b);
    if (cost < best.cost) {
      best.shift_l = l;
      best.cost = cost;
      best.overlap_w = static_cast<int>(w);
    }
  };

  consider(0);
  for (int l = 1; l <= cfg.max_shift; ++l) {
    consider(l);
    consider(-l);
  }
  best.valid = std::isfinite(best.cost) &&
               best.cost <= cfg.validity_threshold &&
               best.overlap_w >= cfg.min_overlap;
  return best;
}

std::optional<DistanceMeasurement> shift_to_distance(const ShiftMatch& m,
                                                     const DistanceModel& model,
                                                     double t_from, double t_to,
                                                     int direction_sign) {
  if (!m.valid) return std::nullopt;
  if (model.k_coeff <= 0) throw InvalidInput("shift_to_distance: k_coeff <= 0");
  if (!(t_to > t_from)) throw InvalidInput("shift_to_distance: t_to <= t_from");
  const int sign = direction_sign >= 0 ? 1 : -1;
  DistanceMeasurement d;
  d.u_m = sign * model.k_coeff * std::abs(m.shift_l);
  d.t_from = t_from;
  d.t_to = t_to;
  d.sigma_m = model.sigma_base + model.sigma_cost * m.cost;
  return d;
}

double calibrate_k(const std::vector<int>& shifts,
                   const std::vector<double>& distances) {
  if (shifts.size() != distances.size() || shifts.empty())
    throw InvalidInput("calibrate_k: need equal-length nonempty inputs");
  double num = 0, den = 0;
  for (size_t i = 0; i < shifts.size(); ++i) {
    const double l = std::abs(shifts[i]);
    num += std::abs(distances[i]) * l;
    den += l * l;
  }
  if (den == 0) throw InvalidInput("calibrate_k: all shifts are zero");
  return num / den;
}

Sfm extract_sfm(const BScan& window, const SfmStreamConfig& cfg) {
  BScan work = cfg.background_removal
                   ? remove_background(window, cfg.filter.dc_window)
                   : window;
  work = detail_retention(work, cfg.filter);

  const Eigen::Index depth = work.depth_samples();
  const Eigen::Index width = work.trace_count();
  std::vector<std::vector<RawPeak>> per_column(width);
  for (Eigen::Index c = 0; c < width; ++c)
    per_column[c] =
        extract_peaks(work.data.col(c), cfg.min_prominence, cfg.peaks);

  const GprGeometry geom{work.sample_interval_ns, cfg.wave_speed_m_per_ns};
  const double t_center = work.timestamps_s(width / 2);
  const PeakSet set = peaks_to_coords(per_column, geom,
                                      static_cast<int>(depth), t_center);
  return build_sfm(set, cfg.depth_bins, cfg.width_bins);
}

StreamResult gpr_distance_stream(const std::vector<BScan>& windows,
                                 const SfmStreamConfig& cfg) {
  StreamResult out;
  if (windows.size() < 2) return out;
  if (cfg.distance.k_coeff <= 0)
    throw InvalidInput("gpr_distance_stream: distance.k_coeff must be set");

  out.sfms.reserve(windows.size());
  for (const BScan& w : windows) out.sfms.push_back(extract_sfm(w, cfg));

  for (size_t i = 0; i + 1 < out.sfms.size(); ++i) {
    ShiftMatch m;
    try {
      m = match_shift(out.sfms[i], out.sfms[i + 1], cfg.match);
    } catch (const UndefinedSimilarity&) {
      m.valid = false;
    }
    out.matches.push_back(m);
    auto d = shift_to_distance(m, cfg.distance, out.sfms[i].timestamp_s,
                               out.sfms[i + 1].timestamp_s);
    if (d)
      out.measurements.push_back(*d);
    else
      ++out.skipped_pairs;
  }
  return out;
}

std::vector<BScan> window_bscan(const BScan& full, int width_cols,
                                int stride_cols) {
  validate(full);
  if (width_cols < 2 || width_cols > full.trace_count())
    throw InvalidInput("window_bscan: bad window width");
  if (stride_cols < 1) throw InvalidInput("window_bscan: bad stride");

  std::vector<BScan> out;
  for (Eigen::Index start = 0; start + width_cols <= full.trace_count();
       start += stride_cols) {
    BScan w;
    w.data = full.data.middleCols(start, width_cols);
    w.timestamps_s = full.timestamps_s.segment(start, width_cols);
    w.sample_interval_ns = full.sample_interval_ns;
    w.scan_spacing_m = full.scan_spacing_m;
    out.push_back(std::move(w));
  }
  return out;
}

BScan concat_windows(const std::vector<BScan>& windows) {
  if (windows.empty()) throw InvalidInput("concat_windows: empty input");
  Eigen::Index total = 0;
  for (const BScan& w : windows) {
    validate(w);
    if (w.depth_samples() != windows.front().depth_samples() ||
        w.sample_interval_ns != windows.front().sample_interval_ns)
      throw InvalidInput("concat_windows: incompatible windows");
    total += w.trace_count();
  }
  BScan out;
  out.data.resize(windows.front().depth_samples(), total);
  out.timestamps_s.resize(total);
  out.sample_interval_ns = windows.front().sample_interval_ns;
  out.scan_spacing_m = windows.front().scan_spacing_m;
  Eigen::Index at = 0;
  for (const BScan& w : windows) {
    out.data.middleCols(at, w.trace_count()) = w.data;
    out.timestamps_s.segment(at, w.trace_count()) = w.timestamps_s;
    at += w.trace_count();
  }
  validate(out);
  return out;
}

std::string sfm_to_text(const Sfm& s) {
  validate(s);
  std::ostringstream os;
  os.precision(17);
  os << "SFM v1\n";
  os << "dims " << s.grid.rows() << " " << s.grid.cols() << "\n";
  os << "t " << s.timestamp_s << "\n";
  for (Eigen::Index r = 0; r < s.grid.rows(); ++r)
    for (Eigen::Index c = 0; c < s.grid.cols(); ++c)
      if (s.grid(r, c) != 0)
        os << r << " " << c << " " << s.grid(r, c) << "\n";
  return os.str();
}

Sfm sfm_from_text(const std::string& text) {
  std::istringstream is(text);
  std::string magic, version;
  if (!(is >> magic >> version) || magic != "SFM" || version != "v1")
    throw DataError("sfm_from_text: bad header");
  std::string tag;
  Eigen::Index rows = 0, cols = 0;
  if (!(is >> tag >> rows >> cols) || tag != "dims" || rows < 1 || cols < 2)
    throw DataError("sfm_from_text: bad dims line");
  Sfm out;
  if (!(is >> tag >> out.timestamp_s) || tag != "t")
    throw DataError("sfm_from_text: bad timestamp line");
  out.grid = LevelMatrix::Zero(rows, cols);
  Eigen::Index r, c;
  int level;
  while (is >> r >> c >> level) {
    if (r < 0 || r >= rows || c < 0 || c >= cols || level < 0 || level > 10)
      throw DataError("sfm_from_text: cell out of range");
    out.grid(r, c) = level;
  }
  if (!is.eof() && is.fail()) throw DataError("sfm_from_text: trailing garbage");
  validate(out);
  return out;
}

}  // namespace gprodom
