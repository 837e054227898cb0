#include "gprodom/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "gprodom/so3.hpp"

namespace gprodom {

void validate(const SimScene& scene) {
  for (const Reflector& r : scene.reflectors) {
    if (!(r.position.z() < 0))
      throw InvalidInput("SimScene: reflector must lie below the surface");
    if (!(r.reflectivity > 0 && r.reflectivity <= 1))
      throw InvalidInput("SimScene: reflectivity outside (0, 1]");
  }
  if (scene.motion.empty()) throw InvalidInput("SimScene: no motion commands");
  for (const MotionCommand& c : scene.motion)
    if (!(c.duration_s > 0)) throw InvalidInput("SimScene: command duration <= 0");
  if (scene.initial_speed_mps < 0)
    throw InvalidInput("SimScene: negative initial speed");
  if (!(scene.imu_rate_hz > 0) || !(scene.ground_truth_rate_hz > 0) ||
      !(scene.wheel_noise.rate_hz > 0))
    throw InvalidInput("SimScene: nonpositive sample rate");
  const GprModel& g = scene.gpr;
  if (g.depth_samples < 8 || !(g.sample_interval_ns > 0) ||
      !(g.wave_speed_m_per_ns > 0) || !(g.pulse_omega > 0) ||
      g.pulse_alpha < 0 || g.window_width < 2)
    throw InvalidInput("SimScene: bad GPR model");
  if (g.trace_spacing_m <= 0 && !(g.trace_rate_hz > 0))
    throw InvalidInput("SimScene: no trace trigger configured");
}

namespace {

struct Step {
  double t = 0;
  Eigen::Vector3d p = Eigen::Vector3d::Zero();
  Eigen::Vector3d v = Eigen::Vector3d::Zero();
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  double accel = 0;     // body forward acceleration held over the step
  double yaw_rate = 0;  // held over the step
  double arc = 0;       // cumulative arc length at t
};

// Discrete ground truth at IMU rate; each step holds the command active at
// its start time.
std::vector<Step> integrate_motion(const SimScene& scene) {
  const double dt = 1.0 / scene.imu_rate_hz;
  double total = 0;
  for (const MotionCommand& c : scene.motion) total += c.duration_s;
  const int n_steps = static_cast<int>(std::llround(total / dt));

  std::vector<double> ends;
  double acc = 0;
  for (const MotionCommand& c : scene.motion) {
    acc += c.duration_s;
    ends.push_back(acc);
  }

  std::vector<Step> steps(n_steps + 1);
  steps[0].v = Eigen::Vector3d(scene.initial_speed_mps, 0, 0);
  size_t cmd = 0;
  for (int k = 0; k < n_steps; ++k) {
    Step& s = steps[k];
    s.t = k * dt;
    while (cmd + 1 < ends.size() && s.t >= ends[cmd] - 1e-12) ++cmd;
    s.accel = scene.motion[cmd].accel_mps2;
    s.yaw_rate = scene.motion[cmd].yaw_rate_rps;

    const Eigen::Vector3d a_world = s.R * Eigen::Vector3d(s.accel, 0, 0);
    Step& nx = steps[k + 1];
    nx.t = (k + 1) * dt;
    nx.p = s.p + s.v * dt + 0.5 * a_world * dt * dt;
    nx.v = s.v + a_world * dt;
    nx.R = so3::Orthonormalize(
        s.R * so3::Exp(Eigen::Vector3d(0, 0, s.yaw_rate * dt)));
    nx.arc = s.arc + (nx.p - s.p).norm();
  }
  steps.back().t = n_steps * dt;
  return steps;
}

// Position at an arbitrary time inside the held-command step.
Eigen::Vector3d position_at(const std::vector<Step>& steps, double imu_rate,
                            double t) {
  const double dt = 1.0 / imu_rate;
  const int k = std::clamp(static_cast<int>(t / dt), 0,
                           static_cast<int>(steps.size()) - 2);
  const Step& s = steps[k];
  const double tau = t - s.t;
  const Eigen::Vector3d a_world = s.R * Eigen::Vector3d(s.accel, 0, 0);
  return s.p + s.v * tau + 0.5 * a_world * tau * tau;
}

Vector synthesize_ascan(const SimScene& scene, const Eigen::Vector3d& antenna,
                        const Vector& clutter, std::mt19937_64& rng) {
  const GprModel& g = scene.gpr;
  Vector s = Vector::Zero(g.depth_samples);

  auto add_pulse = [&](double delay_samples, double amplitude) {
    const int first = std::max(0, static_cast<int>(std::ceil(delay_samples)));
    for (int i = first; i < g.depth_samples; ++i) {
      const double x = i - delay_samples;
      s(i) += amplitude * std::exp(-g.pulse_alpha * x) * std::cos(g.pulse_omega * x);
    }
  };

  add_pulse(g.ground_bounce_delay_ns / g.sample_interval_ns,
            g.ground_bounce_amplitude);
  for (const Reflector& r : scene.reflectors) {
    const Eigen::Vector3d d = r.position - antenna;
    const double range = d.norm();
    const double delay_ns = 2.0 * range / g.wave_speed_m_per_ns;
    add_pulse(delay_ns / g.sample_interval_ns, r.reflectivity / (1.0 + range));
  }

  s += clutter;
  if (g.noise_sigma > 0) {
    std::normal_distribution<double> noise(0.0, g.noise_sigma);
    for (int i = 0; i < g.depth_samples; ++i) s(i) += noise(rng);
  }
  return s;
}

}  // namespace

SensorStreams simulate(const SimScene& scene, uint64_t seed) {
  validate(scene);
  const std::vector<Step> steps = integrate_motion(scene);
  const double t_end = steps.back().t;
  const double dt = 1.0 / scene.imu_rate_hz;

  // Independent generators per stream keep draw order stable however the
  // streams are sized.
  std::mt19937_64 rng_gpr(seed ^ 0x9e3779b97f4a7c15ull);
  std::mt19937_64 rng_imu(seed ^ 0x6a09e667f3bcc909ull);
  std::mt19937_64 rng_wheel(seed ^ 0xbb67ae8584caa73bull);

  SensorStreams out;

  // Inertial stream: the command plus gravity reaction, in the body frame.
  out.imu.reserve(steps.size() - 1);
  std::normal_distribution<double> an(0.0, scene.imu_noise.accel_sigma);
  std::normal_distribution<double> gn(0.0, scene.imu_noise.gyro_sigma);
  for (size_t k = 0; k + 1 < steps.size(); ++k) {
    const Step& s = steps[k];
    ImuSample m;
    m.t_s = s.t;
    m.accel = Eigen::Vector3d(s.accel, 0, 0) - s.R.transpose() * kGravity +
              scene.imu_noise.accel_bias;
    m.gyro = Eigen::Vector3d(0, 0, s.yaw_rate) + scene.imu_noise.gyro_bias;
    if (scene.imu_noise.accel_sigma > 0)
      m.accel += Eigen::Vector3d(an(rng_imu), an(rng_imu), an(rng_imu));
    if (scene.imu_noise.gyro_sigma > 0)
      m.gyro += Eigen::Vector3d(gn(rng_imu), gn(rng_imu), gn(rng_imu));
    out.imu.push_back(m);
  }

  // Wheel stream: slip-perturbed arc increments accumulated at IMU rate,
  // then sampled and optionally quantized.
  std::vector<double> noisy_arc(steps.size(), 0.0);
  std::normal_distribution<double> slip(0.0, scene.wheel_noise.slip_sigma);
  for (size_t k = 0; k + 1 < steps.size(); ++k) {
    const double inc = steps[k + 1].arc - steps[k].arc;
    double f = 1.0 + scene.wheel_noise.slip_bias;
    if (scene.wheel_noise.slip_sigma > 0) f += slip(rng_wheel);
    noisy_arc[k + 1] = noisy_arc[k] + inc * f;
  }
  const int n_wheel =
      static_cast<int>(std::floor(t_end * scene.wheel_noise.rate_hz)) + 1;
  for (int m = 0; m < n_wheel; ++m) {
    const double t = m / scene.wheel_noise.rate_hz;
    const int k = std::clamp(static_cast<int>(t / dt), 0,
                             static_cast<int>(steps.size()) - 2);
    const double f = (t - steps[k].t) / dt;
    double d = noisy_arc[k] + f * (noisy_arc[k + 1] - noisy_arc[k]);
    if (scene.wheel_noise.tick_m > 0)
      d = std::round(d / scene.wheel_noise.tick_m) * scene.wheel_noise.tick_m;
    out.wheel.push_back({t, d});
  }

  // GPR traces, time or distance triggered.
  std::vector<double> trace_times;
  if (scene.gpr.trace_spacing_m > 0) {
    const double total_arc = steps.back().arc;
    for (int m = 0; m * scene.gpr.trace_spacing_m <= total_arc; ++m) {
      const double target = m * scene.gpr.trace_spacing_m;
      auto it = std::lower_bound(
          steps.begin(), steps.end(), target,
          [](const Step& s, double a) { return s.arc < a; });
      if (it == steps.end()) break;
      if (it == steps.begin()) {
        trace_times.push_back(0.0);
        continue;
      }
      const Step& hi = *it;
      const Step& lo = *(it - 1);
      const double span = hi.arc - lo.arc;
      const double f = span > 0 ? (target - lo.arc) / span : 0.0;
      trace_times.push_back(lo.t + f * dt);
    }
  } else {
    for (int m = 0; m / scene.gpr.trace_rate_hz <= t_end - dt; ++m)
      trace_times.push_back(m / scene.gpr.trace_rate_hz);
  }

  Vector clutter = Vector::Zero(scene.gpr.depth_samples);
  if (scene.gpr.clutter_amplitude > 0) {
    std::uniform_real_distribution<double> freq(0.5, 2.0);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * M_PI);
    std::uniform_real_distribution<double> amp(0.5, 1.0);
    for (int j = 0; j < 3; ++j) {
      const double f = freq(rng_gpr), ph = phase(rng_gpr);
      const double a = scene.gpr.clutter_amplitude * amp(rng_gpr);
      for (int i = 0; i < scene.gpr.depth_samples; ++i)
        clutter(i) += a * std::cos(2.0 * M_PI * f * i / scene.gpr.depth_samples + ph);
    }
  }

  std::vector<AScan> traces;
  traces.reserve(trace_times.size());
  std::vector<Eigen::Vector3d> positions;
  for (double t : trace_times) {
    AScan a;
    a.timestamp_s = t;
    a.sample_interval_ns = scene.gpr.sample_interval_ns;
    const Eigen::Vector3d p = position_at(steps, scene.imu_rate_hz, t);
    a.samples = synthesize_ascan(scene, p, clutter, rng_gpr);
    traces.push_back(std::move(a));
    positions.push_back(p);
  }

  std::optional<double> spacing;
  if (scene.gpr.trace_spacing_m > 0) {
    spacing = scene.gpr.trace_spacing_m;
  } else if (positions.size() >= 2) {
    std::vector<double> gaps;
    for (size_t k = 0; k + 1 < positions.size(); ++k)
      gaps.push_back((positions[k + 1] - positions[k]).norm());
    std::nth_element(gaps.begin(), gaps.begin() + gaps.size() / 2, gaps.end());
    if (gaps[gaps.size() / 2] > 0) spacing = gaps[gaps.size() / 2];
  }

  if (traces.size() >= static_cast<size_t>(scene.gpr.window_width)) {
    const BScan full = make_bscan(traces, spacing);
    const auto windows =
        window_bscan(full, scene.gpr.window_width, scene.gpr.window_width);
    out.gpr = windows;
  }

  const int n_gt =
      static_cast<int>(std::floor(t_end * scene.ground_truth_rate_hz)) + 1;
  for (int m = 0; m < n_gt; ++m) {
    const double t = m / scene.ground_truth_rate_hz;
    out.ground_truth.push_back({t, position_at(steps, scene.imu_rate_hz, t)});
  }

  validate(out);
  return out;
}

}  // namespace gprodom
