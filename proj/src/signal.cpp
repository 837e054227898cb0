#include "gprodom/signal.hpp"

#include <cmath>
#include <limits>

namespace gprodom {

AScan BScan::column(Eigen::Index y) const {
  AScan a;
  a.samples = data.col(y);
  a.sample_interval_ns = sample_interval_ns;
  a.timestamp_s = timestamps_s(y);
  return a;
}

BScan make_bscan(const std::vector<AScan>& columns,
                 std::optional<double> scan_spacing_m) {
  if (columns.empty()) throw InvalidInput("make_bscan: no columns");
  const Eigen::Index depth = columns.front().samples.size();
  if (depth <= 0) throw InvalidInput("make_bscan: empty A-scan");
  const double dt = columns.front().sample_interval_ns;
  if (!(dt > 0)) throw InvalidInput("make_bscan: sample_interval_ns must be > 0");

  BScan b;
  b.data.resize(depth, static_cast<Eigen::Index>(columns.size()));
  b.timestamps_s.resize(static_cast<Eigen::Index>(columns.size()));
  for (Eigen::Index y = 0; y < b.trace_count(); ++y) {
    const AScan& a = columns[static_cast<size_t>(y)];
    if (a.samples.size() != depth)
      throw InvalidInput("make_bscan: columns disagree on depth sample count");
    if (a.sample_interval_ns != dt)
      throw InvalidInput("make_bscan: columns disagree on sample interval");
    b.data.col(y) = a.samples;
    b.timestamps_s(y) = a.timestamp_s;
  }
  b.sample_interval_ns = dt;
  b.scan_spacing_m = scan_spacing_m;
  validate(b);
  return b;
}

void validate(const BScan& b) {
  if (b.data.size() == 0) throw InvalidInput("BScan: empty");
  if (b.timestamps_s.size() != b.trace_count())
    throw InvalidInput("BScan: timestamp count != column count");
  if (!(b.sample_interval_ns > 0))
    throw InvalidInput("BScan: sample_interval_ns must be > 0");
  for (Eigen::Index y = 1; y < b.trace_count(); ++y)
    if (!(b.timestamps_s(y) > b.timestamps_s(y - 1)))
      throw InvalidInput("BScan: column timestamps must be strictly increasing");
}

void validate(const FilterConfig& cfg) {
  if (cfg.dc_window < 1) throw InvalidInput("FilterConfig: dc_window must be >= 1");
  if (!(cfg.cutoff_fraction > 0 && cfg.cutoff_fraction < 1))
    throw InvalidInput("FilterConfig: cutoff_fraction must be in (0,1)");
  if (!(cfg.amplitude_floor >= 0 && cfg.amplitude_floor < 1))
    throw InvalidInput("FilterConfig: amplitude_floor must be in [0,1)");
}

BScan remove_background(const BScan& b) {
  validate(b);
  BScan out = b;
  out.data = b.data.colwise() - b.data.rowwise().mean().eval();
  return out;
}

BScan remove_background(const BScan& b, int window_cols) {
  validate(b);
  if (window_cols < 1) throw InvalidInput("remove_background: window_cols must be >= 1");
  const Eigen::Index cols = b.trace_count();
  if (window_cols >= cols) return remove_background(b);

  // Prefix sums per row give the clamped moving mean in O(D*L).
  Matrix prefix(b.data.rows(), cols + 1);
  prefix.col(0).setZero();
  for (Eigen::Index y = 0; y < cols; ++y)
    prefix.col(y + 1) = prefix.col(y) + b.data.col(y);

  const Eigen::Index half = window_cols / 2;
  BScan out = b;
  for (Eigen::Index y = 0; y < cols; ++y) {
    const Eigen::Index lo = std::max<Eigen::Index>(0, y - half);
    const Eigen::Index hi = std::min<Eigen::Index>(cols - 1, y + (window_cols - 1 - half));
    const double n = static_cast<double>(hi - lo + 1);
    out.data.col(y) = b.data.col(y) - (prefix.col(hi + 1) - prefix.col(lo)) / n;
  }
  return out;
}

Matrix low_band_basis(Eigen::Index depth_samples, double cutoff_fraction) {
  const Eigen::Index d = depth_samples;
  // Bin k has frequency fraction 2k/D of Nyquist; keep bins strictly below
  // the cutoff in the "low" band. DC (k = 0) is always in the low band.
  Eigen::Index k_max = 0;
  while (2.0 * static_cast<double>(k_max + 1) / static_cast<double>(d) <
         cutoff_fraction)
    ++k_max;
  k_max = std::min<Eigen::Index>(k_max, (d - 1) / 2);

  Matrix basis(d, 1 + 2 * k_max);
  basis.col(0).setConstant(1.0 / std::sqrt(static_cast<double>(d)));
  const double norm = std::sqrt(2.0 / static_cast<double>(d));
  for (Eigen::Index k = 1; k <= k_max; ++k) {
    for (Eigen::Index i = 0; i < d; ++i) {
      const double arg = 2.0 * M_PI * static_cast<double>(k) *
                         static_cast<double>(i) / static_cast<double>(d);
      basis(i, 2 * k - 1) = norm * std::cos(arg);
      basis(i, 2 * k) = norm * std::sin(arg);
    }
  }
  return basis;
}

namespace {

// One filter pass: high-pass projection then amplitude flooring against
// the reconstructed column max.
Vector filter_pass(const Vector& x, const Matrix& basis, double floor_frac) {
  Vector h = x - basis * (basis.transpose() * x);
  const double m = h.cwiseAbs().maxCoeff();
  const double floor = floor_frac * m;
  for (Eigen::Index i = 0; i < h.size(); ++i)
    if (std::abs(h(i)) < floor) h(i) = 0.0;
  return h;
}

}  // namespace

BScan detail_retention(const BScan& b, const FilterConfig& cfg) {
  validate(b);
  validate(cfg);
  if (b.depth_samples() < 4)
    throw InvalidInput("detail_retention: need at least 4 depth samples");
  if (!b.data.allFinite())
    throw InvalidInput("detail_retention: non-finite samples");

  const Matrix basis = low_band_basis(b.depth_samples(), cfg.cutoff_fraction);

  BScan out = b;
  constexpr int kMaxIters = 64;
  for (Eigen::Index y = 0; y < b.trace_count(); ++y) {
    Vector cur = b.data.col(y);
    const double scale = std::max(cur.cwiseAbs().maxCoeff(),
                                  std::numeric_limits<double>::min());
    for (int it = 0; it < kMaxIters; ++it) {
      Vector next = filter_pass(cur, basis, cfg.amplitude_floor);
      const double delta = (next - cur).cwiseAbs().maxCoeff();
      cur = std::move(next);
      if (delta <= 1e-13 * scale) break;
    }
    out.data.col(y) = cur;
  }
  return out;
}

}  // namespace gprodom
