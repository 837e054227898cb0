#include <doctest.h>

#include <cmath>
#include <cstring>

#include "gprodom/errors.hpp"
#include "gprodom/preintegration.hpp"
#include "gprodom/simulator.hpp"
#include "gprodom/so3.hpp"

using namespace gprodom;

namespace {

SimScene corridor_scene(double duration, double speed) {
  SimScene s;
  s.initial_speed_mps = speed;
  s.motion.push_back({duration, 0.0, 0.0});
  for (int k = 0; k < 6; ++k)
    s.reflectors.push_back(
        {Eigen::Vector3d(2.0 + 4.0 * k, 0.0, -0.8 - 0.15 * k), 0.9});
  s.gpr.ground_bounce_amplitude = 0.5;
  return s;
}

}  // namespace

TEST_CASE("simulation is a pure function of scene and seed") {
  SimScene s = corridor_scene(30.0, 0.5);
  s.gpr.noise_sigma = 0.02;
  s.imu_noise.accel_sigma = 0.01;
  s.imu_noise.gyro_sigma = 0.001;
  s.wheel_noise.slip_sigma = 0.01;

  const SensorStreams a = simulate(s, 7);
  const SensorStreams b = simulate(s, 7);
  REQUIRE(a.gpr.size() == b.gpr.size());
  REQUIRE(!a.gpr.empty());
  CHECK(std::memcmp(a.gpr[0].data.data(), b.gpr[0].data.data(),
                    sizeof(double) * a.gpr[0].data.size()) == 0);
  REQUIRE(a.imu.size() == b.imu.size());
  CHECK(a.imu[100].accel == b.imu[100].accel);
  CHECK(a.wheel[20].dist_m == b.wheel[20].dist_m);

  const SensorStreams c = simulate(s, 8);
  CHECK(std::memcmp(a.gpr[0].data.data(), c.gpr[0].data.data(),
                    sizeof(double) * a.gpr[0].data.size()) != 0);
}

TEST_CASE("a stationary noiseless robot sees identical traces") {
  SimScene s;
  s.initial_speed_mps = 0.0;
  s.motion.push_back({5.0, 0.0, 0.0});
  s.reflectors.push_back({Eigen::Vector3d(0.0, 0.5, -1.0), 0.8});
  s.gpr.window_width = 64;
  s.gpr.clutter_amplitude = 0.1;

  const SensorStreams out = simulate(s, 3);
  REQUIRE(!out.gpr.empty());
  const Matrix& w = out.gpr[0].data;
  for (Eigen::Index y = 1; y < w.cols(); ++y)
    CHECK((w.col(y) - w.col(0)).cwiseAbs().maxCoeff() == 0.0);
  CHECK(out.wheel.back().dist_m == doctest::Approx(0.0));
}

TEST_CASE("reflection onset sits at the two-way travel time") {
  SimScene s;
  s.initial_speed_mps = 0.5;
  s.motion.push_back({20.0, 0.0, 0.0});
  s.reflectors.push_back({Eigen::Vector3d(5.0, 0.0, -1.0), 0.9});
  s.gpr.ground_bounce_amplitude = 0.0;  // isolate the reflector pulse
  s.gpr.window_width = 64;

  const SensorStreams out = simulate(s, 1);
  REQUIRE(!out.gpr.empty());
  const BScan full = concat_windows(out.gpr);

  // samples = delay_ns / dt = (2 range / 0.1) / 0.2 = 100 * range
  for (Eigen::Index y = 0; y < full.trace_count(); y += 37) {
    const double x = 0.5 * full.timestamps_s(y);
    const double range = std::sqrt((x - 5.0) * (x - 5.0) + 1.0);
    const int expected = static_cast<int>(std::ceil(100.0 * range - 1e-9));
    if (expected >= full.depth_samples()) continue;

    Eigen::Index first = -1;
    for (Eigen::Index i = 0; i < full.depth_samples(); ++i)
      if (full.data(i, y) != 0.0) {
        first = i;
        break;
      }
    CHECK(first == expected);
  }
}

TEST_CASE("moveout is hyperbolic around the apex") {
  SimScene s;
  s.initial_speed_mps = 0.5;
  s.motion.push_back({20.0, 0.0, 0.0});
  s.reflectors.push_back({Eigen::Vector3d(5.0, 0.0, -1.0), 0.9});
  s.gpr.ground_bounce_amplitude = 0.0;
  s.gpr.window_width = 64;

  const SensorStreams out = simulate(s, 1);
  const BScan full = concat_windows(out.gpr);

  auto onset = [&](Eigen::Index y) {
    for (Eigen::Index i = 0; i < full.depth_samples(); ++i)
      if (full.data(i, y) != 0.0) return i;
    return full.depth_samples();
  };

  // Apex: the trace nearest x = 5 m, i.e. t = 10 s at 0.5 m/s.
  Eigen::Index apex = 0;
  for (Eigen::Index y = 0; y < full.trace_count(); ++y)
    if (std::abs(full.timestamps_s(y) - 10.0) <
        std::abs(full.timestamps_s(apex) - 10.0))
      apex = y;

  const Eigen::Index at_apex = onset(apex);
  CHECK(at_apex == 100);  // range 1 m at closest approach
  CHECK(onset(apex - 100) > at_apex);
  CHECK(onset(apex + 100) > at_apex);
  CHECK(onset(apex - 200) > onset(apex - 100));
  CHECK(onset(apex + 200) > onset(apex + 100));
}

TEST_CASE("noiseless imu double integration reproduces the truth") {
  SimScene s;
  s.initial_speed_mps = 0.4;
  s.motion.push_back({20.0, 0.05, 0.02});
  s.motion.push_back({20.0, -0.02, -0.05});
  s.motion.push_back({20.0, 0.0, 0.03});
  s.reflectors.push_back({Eigen::Vector3d(3.0, 0.0, -1.0), 0.9});

  const SensorStreams out = simulate(s, 5);
  REQUIRE(out.imu.size() >= 2);

  const double dt = out.imu[1].t_s - out.imu[0].t_s;
  Eigen::Vector3d p = Eigen::Vector3d::Zero();
  Eigen::Vector3d v(0.4, 0.0, 0.0);
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();

  size_t gt_idx = 0;
  double worst = 0;
  for (const ImuSample& m : out.imu) {
    while (gt_idx < out.ground_truth.size() &&
           out.ground_truth[gt_idx].t_s <= m.t_s + 1e-9) {
      if (std::abs(out.ground_truth[gt_idx].t_s - m.t_s) < 1e-9)
        worst = std::max(worst, (out.ground_truth[gt_idx].p - p).norm());
      ++gt_idx;
    }
    const Eigen::Vector3d a_world = R * m.accel + kGravity;
    p += v * dt + 0.5 * a_world * dt * dt;
    v += a_world * dt;
    R = so3::Orthonormalize(R * so3::Exp(m.gyro * dt));
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("noiseless wheel reports the arc length") {
  SimScene s = corridor_scene(60.0, 0.5);
  const SensorStreams out = simulate(s, 2);
  REQUIRE(!out.wheel.empty());
  CHECK(out.wheel.back().t_s == doctest::Approx(60.0));
  CHECK(out.wheel.back().dist_m == doctest::Approx(30.0).epsilon(1e-9));
  for (size_t k = 1; k < out.wheel.size(); ++k)
    CHECK(out.wheel[k].dist_m >= out.wheel[k - 1].dist_m);
}

TEST_CASE("systematic slip scales the reported arc") {
  SimScene s = corridor_scene(60.0, 0.5);
  s.wheel_noise.slip_bias = 0.05;
  const SensorStreams out = simulate(s, 2);
  CHECK(out.wheel.back().dist_m == doctest::Approx(30.0 * 1.05).epsilon(1e-9));
}

TEST_CASE("tick quantization snaps wheel distances") {
  SimScene s = corridor_scene(10.0, 0.5);
  s.wheel_noise.tick_m = 0.01;
  const SensorStreams out = simulate(s, 2);
  for (const WheelSample& w : out.wheel) {
    const double ticks = w.dist_m / 0.01;
    CHECK(std::abs(ticks - std::round(ticks)) < 1e-9);
  }
}

TEST_CASE("distance triggering spaces traces evenly") {
  SimScene s = corridor_scene(30.0, 0.5);
  s.gpr.trace_spacing_m = 0.05;
  s.gpr.window_width = 32;
  const SensorStreams out = simulate(s, 4);
  REQUIRE(!out.gpr.empty());
  const BScan full = concat_windows(out.gpr);
  REQUIRE(full.scan_spacing_m.has_value());
  CHECK(*full.scan_spacing_m == doctest::Approx(0.05));
  for (Eigen::Index y = 1; y < full.trace_count(); ++y)
    CHECK(full.timestamps_s(y) - full.timestamps_s(y - 1) ==
          doctest::Approx(0.1).epsilon(1e-6));  // 0.05 m at 0.5 m/s
}

TEST_CASE("time triggering yields floor(N/W) windows") {
  SimScene s = corridor_scene(60.0, 0.5);
  const SensorStreams out = simulate(s, 2);
  // 64 Hz over [0, 60 - dt] -> 3840 traces; width 128 -> 30 windows.
  CHECK(out.gpr.size() == 30);
  for (const BScan& w : out.gpr) CHECK(w.trace_count() == 128);
}

TEST_CASE("scene validation rejects nonsense") {
  SimScene s = corridor_scene(10.0, 0.5);
  s.reflectors[0].position.z() = 0.5;
  CHECK_THROWS_AS(simulate(s, 1), InvalidInput);

  s = corridor_scene(10.0, 0.5);
  s.reflectors[0].reflectivity = 1.5;
  CHECK_THROWS_AS(simulate(s, 1), InvalidInput);

  s = corridor_scene(10.0, 0.5);
  s.motion.clear();
  CHECK_THROWS_AS(simulate(s, 1), InvalidInput);

  s = corridor_scene(10.0, 0.5);
  s.gpr.trace_rate_hz = 0.0;
  CHECK_THROWS_AS(simulate(s, 1), InvalidInput);
}
