#pragma once

#include <Eigen/Core>
#include <optional>
#include <vector>

#include "gprodom/signal.hpp"

namespace gprodom {

/// Parameters of the damped sinusoid  beta * exp(-alpha*i) * cos(omega*i + phi) + gamma
/// with i the sample index inside the fitted window.
struct SinusoidParams {
  double beta = 0;   // amplitude
  double alpha = 0;  // attenuation per sample, >= 0
  double omega = 0;  // angular frequency, rad/sample, in (0, pi)
  double phi = 0;    // phase, rad
  double gamma = 0;  // offset
};

void validate(const SinusoidParams& p);

/// Evaluates the model at local sample index i.
double damped_sinusoid(const SinusoidParams& p, double i);

enum class FitStatus { kConverged, kMaxIterations, kDegenerate };

struct FitResult {
  SinusoidParams params;
  double objective = 0;  // weighted squared residual at params
  FitStatus status = FitStatus::kConverged;
  int iterations = 0;
};

/// Weighted least-squares fit of the damped sinusoid by damped Gauss-Newton
/// (Levenberg-Marquardt). `weights` are per-sample inverse variances; empty
/// means identity. The achieved objective never exceeds the objective at
/// `init`. Constant segments return beta = 0, gamma = mean, flagged
/// degenerate; hitting the iteration cap returns the best iterate flagged
/// kMaxIterations.
FitResult fit_damped_sinusoid(const Vector& segment, const SinusoidParams& init,
                              const Vector& weights = Vector());

/// Fit with deterministic data-driven initialization: omega from the
/// dominant spectral bin, a small set of phase/attenuation candidates with
/// beta and gamma solved in closed form, then LM from the best candidates.
FitResult fit_auto(const Vector& segment, const Vector& weights = Vector());

/// Dominant angular frequency (rad/sample) of a segment, from the magnitude
/// spectrum over bins 1..n/2.
double dominant_frequency(const Vector& segment);

/// A reflection peak in B-scan coordinates.
struct Peak {
  int r = 0;             // horizontal (column) index
  int d = 0;             // vertical (depth) index
  double amplitude = 0;  // grayscale, in [0, 255]
};

struct PeakSet {
  std::vector<Peak> peaks;
  int source_depth = 0;  // D of the originating B-scan
  int source_width = 0;  // L
  double timestamp_s = 0;
};

void validate(const PeakSet& ps);

/// A peak before conversion to B-scan coordinates.
struct RawPeak {
  int sample_index = 0;
  double amplitude = 0;  // signal units, >= 0
};

struct PeakConfig {
  int envelope_halfwidth = 6;  // moving-max half width bridging half-periods
  int max_peaks = 8;           // per-column cap; 0 = unlimited
  int fit_window_min = 8;
  int fit_window_max = 64;
};

/// Extracts reflection peaks from one filtered column: local maxima of the
/// rectified envelope with prominence >= min_prominence * max|signal|, each
/// refined by a damped-sinusoid fit over a window anchored at the raw
/// maximum. Sorted by sample index. All-zero columns yield no peaks.
std::vector<RawPeak> extract_peaks(const Vector& column, double min_prominence,
                                   const PeakConfig& cfg = {});

struct GprGeometry {
  double sample_interval_ns = 0;
  double wave_speed_m_per_ns = 0;
};

/// Two-way travel time of a depth sample index, in ns.
inline double travel_time_ns(const GprGeometry& g, double sample_index) {
  return sample_index * g.sample_interval_ns;
}

/// One-way target depth for a two-way travel time.
inline double depth_m(const GprGeometry& g, double time_ns) {
  return time_ns * g.wave_speed_m_per_ns / 2.0;
}

/// Converts per-column raw peaks into a PeakSet in B-scan pixel coordinates.
/// Depth indices go through travel time -> depth -> pixel with
/// depth_per_pixel_m defaulting to one input sample, so indices are
/// preserved when the resolution is unchanged. Amplitudes are rescaled to
/// [0, 255] against the scan-wide maximum.
PeakSet peaks_to_coords(const std::vector<std::vector<RawPeak>>& per_column_peaks,
                        const GprGeometry& gpr, int depth_samples,
                        double timestamp_s,
                        std::optional<double> depth_per_pixel_m = std::nullopt);

}  // namespace gprodom
