#include "gprodom/peaks.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>

namespace gprodom {

void validate(const SinusoidParams& p) {
  if (!(p.alpha >= 0)) throw InvalidInput("SinusoidParams: alpha must be >= 0");
  if (!(p.omega > 0 && p.omega < M_PI))
    throw InvalidInput("SinusoidParams: omega must be in (0, pi)");
  if (!std::isfinite(p.beta) || !std::isfinite(p.alpha) || !std::isfinite(p.omega) ||
      !std::isfinite(p.phi) || !std::isfinite(p.gamma))
    throw InvalidInput("SinusoidParams: non-finite value");
}

double damped_sinusoid(const SinusoidParams& p, double i) {
  return p.beta * std::exp(-p.alpha * i) * std::cos(p.omega * i + p.phi) + p.gamma;
}

namespace {

double weighted_objective(const Vector& seg, const Vector& w, const SinusoidParams& p) {
  double obj = 0;
  for (Eigen::Index i = 0; i < seg.size(); ++i) {
    const double r = damped_sinusoid(p, static_cast<double>(i)) - seg(i);
    obj += w(i) * r * r;
  }
  return obj;
}

Vector resolve_weights(const Vector& seg, const Vector& weights) {
  if (weights.size() == 0) return Vector::Ones(seg.size());
  if (weights.size() != seg.size())
    throw InvalidInput("fit_damped_sinusoid: weights size mismatch");
  if ((weights.array() < 0).any())
    throw InvalidInput("fit_damped_sinusoid: negative weight");
  return weights;
}

SinusoidParams clamp_to_domain(SinusoidParams p) {
  p.alpha = std::max(p.alpha, 0.0);
  p.omega = std::min(std::max(p.omega, 1e-6), M_PI - 1e-6);
  return p;
}

// beta < 0 is the same model as (|beta|, phi + pi).
SinusoidParams canonicalize(SinusoidParams p) {
  if (p.beta < 0) {
    p.beta = -p.beta;
    p.phi += M_PI;
  }
  while (p.phi > M_PI) p.phi -= 2 * M_PI;
  while (p.phi <= -M_PI) p.phi += 2 * M_PI;
  return p;
}

bool is_degenerate_segment(const Vector& seg) {
  const double lo = seg.minCoeff();
  const double hi = seg.maxCoeff();
  const double scale = std::max(std::abs(lo), std::abs(hi));
  return hi - lo <= 1e-12 * std::max(scale, 1.0);
}

FitResult degenerate_result(const Vector& seg, const Vector& w, const SinusoidParams& init) {
  FitResult out;
  out.params = clamp_to_domain(init);
  out.params.beta = 0;
  out.params.gamma = w.sum() > 0 ? (w.array() * seg.array()).sum() / w.sum()
                                 : seg.mean();
  out.objective = weighted_objective(seg, w, out.params);
  out.status = FitStatus::kDegenerate;
  return out;
}

}  // namespace

FitResult fit_damped_sinusoid(const Vector& segment, const SinusoidParams& init,
                              const Vector& weights) {
  if (segment.size() < 6)
    throw InvalidInput("fit_damped_sinusoid: need at least 6 samples");
  const Vector w = resolve_weights(segment, weights);
  validate(clamp_to_domain(init));
  if (is_degenerate_segment(segment)) return degenerate_result(segment, w, init);

  const Eigen::Index n = segment.size();
  SinusoidParams p = clamp_to_domain(init);
  double obj = weighted_objective(segment, w, p);

  Eigen::Matrix<double, Eigen::Dynamic, 5> jac(n, 5);
  Vector res(n);
  double lambda = 1e-4;
  constexpr int kMaxIters = 100;
  constexpr double kRelTol = 1e-10;

  FitResult out;
  bool converged = false;
  int it = 0;
  for (; it < kMaxIters && !converged; ++it) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double t = static_cast<double>(i);
      const double env = std::exp(-p.alpha * t);
      const double c = std::cos(p.omega * t + p.phi);
      const double s = std::sin(p.omega * t + p.phi);
      const double sw = std::sqrt(w(i));
      res(i) = sw * (p.beta * env * c + p.gamma - segment(i));
      jac(i, 0) = sw * env * c;
      jac(i, 1) = sw * -p.beta * t * env * c;
      jac(i, 2) = sw * -p.beta * t * env * s;
      jac(i, 3) = sw * -p.beta * env * s;
      jac(i, 4) = sw;
    }
    const Eigen::Matrix<double, 5, 5> jtj = jac.transpose() * jac;
    const Eigen::Matrix<double, 5, 1> jtr = jac.transpose() * res;
    if (jtr.cwiseAbs().maxCoeff() < 1e-14 * std::max(1.0, obj)) {
      converged = true;
      break;
    }

    bool accepted = false;
    for (int attempt = 0; attempt < 12 && !accepted; ++attempt) {
      Eigen::Matrix<double, 5, 5> damped = jtj;
      for (int k = 0; k < 5; ++k)
        damped(k, k) += lambda * std::max(jtj(k, k), 1e-12);
      const Eigen::Matrix<double, 5, 1> step = damped.ldlt().solve(-jtr);
      SinusoidParams trial = p;
      trial.beta += step(0);
      trial.alpha += step(1);
      trial.omega += step(2);
      trial.phi += step(3);
      trial.gamma += step(4);
      trial = clamp_to_domain(trial);
      const double trial_obj = weighted_objective(segment, w, trial);
      if (std::isfinite(trial_obj) && trial_obj < obj) {
        const double rel_drop = (obj - trial_obj) / std::max(obj, 1e-300);
        p = trial;
        obj = trial_obj;
        lambda = std::max(lambda / 3.0, 1e-12);
        accepted = true;
        if (rel_drop < kRelTol) converged = true;
      } else {
        lambda *= 4.0;
      }
    }
    // No descent at any damping level: stationary point.
    if (!accepted) converged = true;
  }

  out.params = canonicalize(p);
  out.objective = obj;
  out.iterations = it;
  out.status = converged ? FitStatus::kConverged : FitStatus::kMaxIterations;
  return out;
}

double dominant_frequency(const Vector& segment) {
  const Eigen::Index n = segment.size();
  const double mean = segment.mean();
  double best_mag = -1;
  Eigen::Index best_k = 1;
  for (Eigen::Index k = 1; k <= n / 2; ++k) {
    double re = 0, im = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double arg = 2.0 * M_PI * static_cast<double>(k) *
                         static_cast<double>(i) / static_cast<double>(n);
      const double v = segment(i) - mean;
      re += v * std::cos(arg);
      im -= v * std::sin(arg);
    }
    const double mag = re * re + im * im;
    if (mag > best_mag) {
      best_mag = mag;
      best_k = k;
    }
  }
  const double omega = 2.0 * M_PI * static_cast<double>(best_k) / static_cast<double>(n);
  return std::min(std::max(omega, 0.05), M_PI - 0.05);
}

namespace {

// Closed-form weighted least squares for (beta, gamma) given the nonlinear
// shape parameters.
void solve_linear_amplitudes(const Vector& seg, const Vector& w, SinusoidParams& p) {
  double sgg = 0, sg1 = 0, s11 = 0, sgs = 0, s1s = 0;
  for (Eigen::Index i = 0; i < seg.size(); ++i) {
    const double t = static_cast<double>(i);
    const double g = std::exp(-p.alpha * t) * std::cos(p.omega * t + p.phi);
    sgg += w(i) * g * g;
    sg1 += w(i) * g;
    s11 += w(i);
    sgs += w(i) * g * seg(i);
    s1s += w(i) * seg(i);
  }
  const double det = sgg * s11 - sg1 * sg1;
  if (std::abs(det) < 1e-12 * std::max(sgg * s11, 1e-300)) {
    p.beta = 0;
    p.gamma = s11 > 0 ? s1s / s11 : 0;
    return;
  }
  p.beta = (sgs * s11 - sg1 * s1s) / det;
  p.gamma = (sgg * s1s - sg1 * sgs) / det;
}

}  // namespace

FitResult fit_auto(const Vector& segment, const Vector& weights) {
  if (segment.size() < 6) throw InvalidInput("fit_auto: need at least 6 samples");
  const Vector w = resolve_weights(segment, weights);
  if (is_degenerate_segment(segment)) {
    SinusoidParams base;
    base.omega = 0.5;
    return degenerate_result(segment, w, base);
  }

  const double omega0 = dominant_frequency(segment);
  const double alphas[] = {0.01, 0.1};
  const double phases[] = {0.0, M_PI / 2, M_PI, -M_PI / 2};

  std::vector<SinusoidParams> candidates;
  for (double a : alphas) {
    for (double ph : phases) {
      SinusoidParams c;
      c.alpha = a;
      c.omega = omega0;
      c.phi = ph;
      solve_linear_amplitudes(segment, w, c);
      candidates.push_back(c);
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [&](const SinusoidParams& a, const SinusoidParams& b) {
                     return weighted_objective(segment, w, a) <
                            weighted_objective(segment, w, b);
                   });

  FitResult best;
  best.objective = std::numeric_limits<double>::infinity();
  const size_t tries = std::min<size_t>(2, candidates.size());
  for (size_t i = 0; i < tries; ++i) {
    FitResult r = fit_damped_sinusoid(segment, candidates[i], w);
    if (r.objective < best.objective) best = r;
  }
  return best;
}

void validate(const PeakSet& ps) {
  if (ps.source_depth <= 0 || ps.source_width <= 0)
    throw InvalidInput("PeakSet: invalid source dims");
  for (const Peak& p : ps.peaks) {
    if (p.r < 0 || p.r >= ps.source_width || p.d < 0 || p.d >= ps.source_depth)
      throw InvalidInput("PeakSet: peak outside source dims");
    if (!(p.amplitude >= 0 && p.amplitude <= 255))
      throw InvalidInput("PeakSet: amplitude outside [0,255]");
  }
}

namespace {

struct Candidate {
  int index = 0;      // snapped to the raw |signal| maximum
  double height = 0;  // envelope height
  double prominence = 0;
};

Vector moving_max(const Vector& a, int halfwidth) {
  const Eigen::Index n = a.size();
  Vector e(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index lo = std::max<Eigen::Index>(0, i - halfwidth);
    const Eigen::Index hi = std::min<Eigen::Index>(n - 1, i + halfwidth);
    e(i) = a.segment(lo, hi - lo + 1).maxCoeff();
  }
  return e;
}

// Local maxima of the envelope with plateau handling; prominence in the
// standard topographic sense (height above the higher of the two saddle
// minima toward the nearest higher peak or signal end).
std::vector<Candidate> envelope_maxima(const Vector& e, const Vector& a, int halfwidth) {
  const Eigen::Index n = e.size();
  std::vector<Candidate> out;
  Eigen::Index i = 0;
  while (i < n) {
    Eigen::Index j = i;
    while (j + 1 < n && e(j + 1) == e(i)) ++j;
    const bool left_ok = (i == 0) || e(i - 1) < e(i);
    const bool right_ok = (j == n - 1) || e(j + 1) < e(j);
    if (left_ok && right_ok) {
      const Eigen::Index mid = (i + j) / 2;
      Candidate c;
      const Eigen::Index lo = std::max<Eigen::Index>(0, mid - halfwidth);
      const Eigen::Index hi = std::min<Eigen::Index>(n - 1, mid + halfwidth);
      Eigen::Index snap = lo;
      a.segment(lo, hi - lo + 1).maxCoeff(&snap);
      c.index = static_cast<int>(lo + snap);
      c.height = e(mid);

      double left_min = c.height, right_min = c.height;
      for (Eigen::Index k = i; k-- > 0;) {
        if (e(k) > c.height) break;
        left_min = std::min(left_min, e(k));
      }
      for (Eigen::Index k = j + 1; k < n; ++k) {
        if (e(k) > c.height) break;
        right_min = std::min(right_min, e(k));
      }
      c.prominence = c.height - std::max(left_min, right_min);
      out.push_back(c);
    }
    i = j + 1;
  }
  return out;
}

}  // namespace

std::vector<RawPeak> extract_peaks(const Vector& column, double min_prominence,
                                   const PeakConfig& cfg) {
  if (!(min_prominence >= 0)) throw InvalidInput("extract_peaks: bad min_prominence");
  const Eigen::Index n = column.size();
  if (n == 0) return {};
  const Vector a = column.cwiseAbs();
  const double global_max = a.maxCoeff();
  if (global_max <= 0) return {};

  const Vector envelope = moving_max(a, cfg.envelope_halfwidth);
  std::vector<Candidate> cands =
      envelope_maxima(envelope, a, cfg.envelope_halfwidth);
  const double gate = min_prominence * global_max;
  std::erase_if(cands, [&](const Candidate& c) { return c.prominence < gate; });

  std::vector<RawPeak> peaks;
  for (const Candidate& c : cands) {
    RawPeak pk{c.index, a(c.index)};
    // Refine the position by fitting the pulse model around the raw maximum.
    const double omega0 = [&] {
      const Eigen::Index lo = std::max<Eigen::Index>(0, c.index - 32);
      const Eigen::Index hi = std::min<Eigen::Index>(n - 1, c.index + 32);
      return dominant_frequency(column.segment(lo, hi - lo + 1));
    }();
    int win = static_cast<int>(std::lround(2.0 * 2.0 * M_PI / omega0));
    win = std::clamp(win, cfg.fit_window_min, cfg.fit_window_max);
    win = std::min<int>(win, static_cast<int>(n));
    if (win >= 6) {
      // The pulse model decays from its onset, and the raw maximum sits at
      // the onset for oscillatory returns, so the fit window starts there
      // rather than being centered (which would fill half of it with
      // pre-pulse samples the model cannot represent).
      int start = std::clamp(c.index, 0, static_cast<int>(n) - win);
      const Vector seg = column.segment(start, win);
      const FitResult fit = fit_auto(seg);
      if (fit.status != FitStatus::kDegenerate) {
        Eigen::Index kbest = 0;
        double vbest = -1;
        for (Eigen::Index k = 0; k < win; ++k) {
          const double v =
              std::abs(damped_sinusoid(fit.params, static_cast<double>(k)) -
                       fit.params.gamma);
          if (v > vbest) {
            vbest = v;
            kbest = k;
          }
        }
        const int refined = start + static_cast<int>(kbest);
        if (std::abs(refined - c.index) <= cfg.envelope_halfwidth) {
          pk.sample_index = refined;
          // The peak excursion of the fitted waveform, not |beta|: a noise
          // fit can park beta far above the data with cos(phi) near zero,
          // and one such spike would rescale every other peak to nothing.
          pk.amplitude = vbest;
        }
      }
    }
    peaks.push_back(pk);
  }

  if (cfg.max_peaks > 0 && peaks.size() > static_cast<size_t>(cfg.max_peaks)) {
    std::stable_sort(peaks.begin(), peaks.end(),
                     [](const RawPeak& x, const RawPeak& y) {
                       return x.amplitude > y.amplitude;
                     });
    peaks.resize(static_cast<size_t>(cfg.max_peaks));
  }
  std::sort(peaks.begin(), peaks.end(), [](const RawPeak& x, const RawPeak& y) {
    return x.sample_index < y.sample_index;
  });
  // Duplicate indices keep the stronger peak.
  std::vector<RawPeak> dedup;
  for (const RawPeak& p : peaks) {
    if (!dedup.empty() && dedup.back().sample_index == p.sample_index)
      dedup.back().amplitude = std::max(dedup.back().amplitude, p.amplitude);
    else
      dedup.push_back(p);
  }
  return dedup;
}

PeakSet peaks_to_coords(const std::vector<std::vector<RawPeak>>& per_column_peaks,
                        const GprGeometry& gpr, int depth_samples,
                        double timestamp_s,
                        std::optional<double> depth_per_pixel_m) {
  if (!(gpr.wave_speed_m_per_ns > 0))
    throw InvalidInput("peaks_to_coords: wave speed must be > 0");
  if (!(gpr.sample_interval_ns > 0))
    throw InvalidInput("peaks_to_coords: sample interval must be > 0");
  const double dpp = depth_per_pixel_m.value_or(
      gpr.sample_interval_ns * gpr.wave_speed_m_per_ns / 2.0);
  if (!(dpp > 0)) throw InvalidInput("peaks_to_coords: depth_per_pixel must be > 0");

  double amp_max = 0;
  for (const auto& col : per_column_peaks)
    for (const RawPeak& p : col) amp_max = std::max(amp_max, p.amplitude);

  PeakSet ps;
  ps.source_depth = depth_samples;
  ps.source_width = static_cast<int>(per_column_peaks.size());
  ps.timestamp_s = timestamp_s;
  for (size_t r = 0; r < per_column_peaks.size(); ++r) {
    for (const RawPeak& p : per_column_peaks[r]) {
      const double t_ns = travel_time_ns(gpr, static_cast<double>(p.sample_index));
      const int d = static_cast<int>(std::lround(depth_m(gpr, t_ns) / dpp));
      if (d < 0 || d >= depth_samples) continue;
      Peak out;
      out.r = static_cast<int>(r);
      out.d = d;
      out.amplitude = amp_max > 0 ? std::clamp(255.0 * p.amplitude / amp_max, 0.0, 255.0) : 0.0;
      ps.peaks.push_back(out);
    }
  }
  validate(ps);
  return ps;
}

}  // namespace gprodom
