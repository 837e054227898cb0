#pragma once

#include <Eigen/Core>
#include <optional>
#include <vector>

#include "gprodom/errors.hpp"

namespace gprodom {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// One radar trace: signal amplitude against two-way travel time.
struct AScan {
  Vector samples;                 // length D
  double sample_interval_ns = 0;  // two-way time per depth sample
  double timestamp_s = 0;
};

/// A chronological stack of A-scans. `data` is D x L with one trace per
/// column; rows index depth samples. Column timestamps are strictly
/// increasing and all columns share D and the sample interval.
struct BScan {
  Matrix data;          // D x L
  Vector timestamps_s;  // length L
  double sample_interval_ns = 0;
  std::optional<double> scan_spacing_m;  // along-track spacing, if known

  Eigen::Index depth_samples() const { return data.rows(); }
  Eigen::Index trace_count() const { return data.cols(); }
  AScan column(Eigen::Index y) const;
};

/// Builds a BScan from per-trace records. Throws InvalidInput when the
/// columns disagree on D or sample interval, or timestamps do not increase.
BScan make_bscan(const std::vector<AScan>& columns,
                 std::optional<double> scan_spacing_m = std::nullopt);

/// Throws InvalidInput when the B-scan violates its shape/time invariants.
void validate(const BScan& b);

struct FilterConfig {
  // Columns used for the moving-mean background estimate; values >= L mean
  // the whole scan.
  int dc_window = std::numeric_limits<int>::max();
  double cutoff_fraction = 0.05;  // of the Nyquist band, in (0,1)
  double amplitude_floor = 0.1;   // of the per-column max, in [0,1)
};

void validate(const FilterConfig& cfg);

/// Subtracts the row-wise mean across all columns. Removes horizontally
/// constant returns such as the ground bounce and antenna ringing.
BScan remove_background(const BScan& b);

/// Same, but the mean is estimated over a centered moving window of
/// `window_cols` columns (clamped at the edges).
BScan remove_background(const BScan& b, int window_cols);

/// Orthonormal basis of the low-frequency band: the DC vector plus cos/sin
/// pairs for every bin strictly below cutoff_fraction of Nyquist. D x (2K+1).
Matrix low_band_basis(Eigen::Index depth_samples, double cutoff_fraction);

/// Removes the projection of each column of `m` onto the span of `basis`.
template <typename Derived>
Matrix drop_low_band(const Eigen::MatrixBase<Derived>& m, const Matrix& basis) {
  return m - basis * (basis.transpose() * m).eval();
}

/// Per-column detail-retention filter: a hard high-pass above
/// cutoff_fraction of the Nyquist band combined with amplitude flooring at
/// amplitude_floor x (column max). The two steps are iterated to a fixed
/// point so that re-applying the filter leaves the output unchanged.
/// Reflection peaks above the floor keep their sample position within +-1.
BScan detail_retention(const BScan& b, const FilterConfig& cfg);

}  // namespace gprodom
