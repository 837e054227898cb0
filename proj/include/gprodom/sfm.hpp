#pragma once

#include <Eigen/Core>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "gprodom/peaks.hpp"
#include "gprodom/signal.hpp"

namespace gprodom {

using LevelMatrix = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>;

/// Quantized subsurface feature matrix: integer levels 0..10, nonzero only
/// at mapped reflection-peak cells.
struct Sfm {
  LevelMatrix grid;  // depth_bins x width_bins
  double timestamp_s = 0;

  Eigen::Index depth_bins() const { return grid.rows(); }
  Eigen::Index width_bins() const { return grid.cols(); }
};

void validate(const Sfm& s);

/// Maps each peak (r, d, amplitude) to cell
/// (floor(d*depth_bins/D), floor(r*width_bins/L)) at level
/// floor(10*amplitude/255); colliding peaks keep the maximum level.
Sfm build_sfm(const PeakSet& peaks, int depth_bins, int width_bins);

/// Cosine distance 1 - <a,b> / (|a| |b|) under the Frobenius inner product.
/// Throws UndefinedSimilarity when either operand is all-zero. Lies in
/// [0, 1] for nonnegative operands and is invariant to positive scaling.
template <typename DerivedA, typename DerivedB>
double cosine_distance(const Eigen::MatrixBase<DerivedA>& a,
                       const Eigen::MatrixBase<DerivedB>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw InvalidInput("cosine_distance: shape mismatch");
  const double na = a.template cast<double>().norm();
  const double nb = b.template cast<double>().norm();
  if (na == 0.0 || nb == 0.0)
    throw UndefinedSimilarity("cosine_distance: all-zero operand");
  const double dot =
      a.template cast<double>().cwiseProduct(b.template cast<double>()).sum();
  return 1.0 - dot / (na * nb);
}

struct MatchConfig {
  int max_shift = 32;              // columns searched to either side
  double validity_threshold = 0.6; // max cosine distance for a valid match
  int min_overlap = 8;             // minimum compared columns
};

/// Result of the horizontal-shift search. shift_l > 0 means the second SFM
/// equals the first shifted right by shift_l columns over the overlap.
struct ShiftMatch {
  int shift_l = 0;
  double cost = std::numeric_limits<double>::infinity();
  int overlap_w = 0;
  bool valid = false;
};

/// Exhaustive search over |l| <= max_shift of the cosine distance between
/// the overlapping column windows; ties broken toward smaller |l|, positive
/// sign first. Shifts whose overlap has an all-zero operand are skipped; if
/// every candidate is skipped the match is invalid with infinite cost.
ShiftMatch match_shift(const Sfm& s1, const Sfm& s2, const MatchConfig& cfg);

/// An inter-frame travel-distance observation.
struct DistanceMeasurement {
  double u_m = 0;     // signed travel distance
  double t_from = 0;  // seconds
  double t_to = 0;
  double sigma_m = 0; // standard deviation, > 0
};

struct DistanceModel {
  double k_coeff = 0;       // meters per SFM column; <= 0 means derive/calibrate
  double sigma_base = 0.02; // meters
  double sigma_cost = 0.5;  // meters per unit of match cost
};

/// u = k_coeff * |shift|, signed by the supplied travel direction. Invalid
/// matches produce no measurement.
std::optional<DistanceMeasurement> shift_to_distance(const ShiftMatch& m,
                                                     const DistanceModel& model,
                                                     double t_from, double t_to,
                                                     int direction_sign = 1);

/// Least-squares scale k minimizing sum (dist_i - k*|shift_i|)^2 over
/// matched intervals with a known reference distance.
double calibrate_k(const std::vector<int>& shifts,
                   const std::vector<double>& distances);

struct SfmStreamConfig {
  FilterConfig filter;
  PeakConfig peaks;
  double min_prominence = 0.15;
  bool background_removal = true;
  int depth_bins = 64;
  int width_bins = 64;
  MatchConfig match;
  DistanceModel distance;
  double wave_speed_m_per_ns = 0.1;
};

/// Filter -> peaks -> SFM for one B-scan window. The SFM timestamp is the
/// center column's.
Sfm extract_sfm(const BScan& window, const SfmStreamConfig& cfg);

struct StreamResult {
  std::vector<DistanceMeasurement> measurements;  // ordered by t_from
  std::vector<ShiftMatch> matches;                // one per window pair
  std::vector<Sfm> sfms;                          // one per window
  int skipped_pairs = 0;                          // pairs without a valid match
};

/// Runs the full chain over consecutive window pairs and collects the valid
/// distance measurements. Windows must be chronological with overlapping
/// content. u is emitted forward-signed; callers resolve direction.
StreamResult gpr_distance_stream(const std::vector<BScan>& windows,
                                 const SfmStreamConfig& cfg);

/// Splits one long B-scan into fixed-width windows with the given column
/// stride; a final partial window is dropped.
std::vector<BScan> window_bscan(const BScan& full, int width_cols, int stride_cols);

/// Concatenates chronological windows back into one B-scan.
BScan concat_windows(const std::vector<BScan>& windows);

/// Compact text serialization: header with dims, then one `row col level`
/// line per nonzero cell.
std::string sfm_to_text(const Sfm& s);
Sfm sfm_from_text(const std::string& text);

}  // namespace gprodom
