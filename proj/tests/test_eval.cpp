#include <doctest.h>

#include <Eigen/Geometry>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include "gprodom/errors.hpp"
#include "gprodom/evaluation.hpp"
#include "gprodom/factor_graph.hpp"

using namespace gprodom;

namespace {

std::vector<TimedPosition> track(std::initializer_list<TimedPosition> pts) {
  return std::vector<TimedPosition>(pts);
}

}  // namespace

TEST_CASE("association pairs nearest in time and counts drops") {
  const auto est = track({{0.0, {0, 0, 0}}, {1.0, {1, 0, 0}}, {2.0, {2, 0, 0}}});
  const auto gt =
      track({{0.05, {0, 0, 0}}, {1.04, {1, 0, 0}}, {2.5, {2, 0, 0}}});
  const Association a = associate(est, gt, 0.1);
  REQUIRE(a.pairs.size() == 2);
  CHECK(a.dropped == 1);
  CHECK(a.pairs[0].t_gt == doctest::Approx(0.05));
  CHECK(a.pairs[1].t_gt == doctest::Approx(1.04));

  CHECK_THROWS_AS(associate(est, gt, 0.001), DataError);
  CHECK_THROWS_AS(associate({}, gt, 0.1), InvalidInput);
}

TEST_CASE("identical trajectories score zero") {
  std::vector<PairedSample> pairs;
  for (int k = 0; k < 5; ++k) {
    PairedSample p;
    p.t_est = p.t_gt = k;
    p.est = p.gt = Eigen::Vector3d(0.3 * k, 0.1 * k, 0.0);
    pairs.push_back(p);
  }
  CHECK(rmse(pairs) == doctest::Approx(0.0));
}

TEST_CASE("anchoring removes start offset and heading") {
  // Estimate walks +y from (5,5); truth walks +x from the origin. After
  // anchoring (translate, rotate -90 deg about z) they coincide except for
  // a 0.5 m overshoot on the last sample.
  std::vector<PairedSample> pairs(3);
  pairs[0].t_est = pairs[0].t_gt = 0.0;
  pairs[0].est = {5.0, 5.0, 0.0};
  pairs[0].gt = {0.0, 0.0, 0.0};
  pairs[1].t_est = pairs[1].t_gt = 1.0;
  pairs[1].est = {5.0, 6.0, 0.0};
  pairs[1].gt = {1.0, 0.0, 0.0};
  pairs[2].t_est = pairs[2].t_gt = 2.0;
  pairs[2].est = {5.0, 7.5, 0.0};
  pairs[2].gt = {2.0, 0.0, 0.0};

  CHECK(rmse(pairs) == doctest::Approx(std::sqrt(0.25 / 3.0)).epsilon(1e-12));

  const auto curve = rmse_vs_time(pairs);
  REQUIRE(curve.size() == 3);
  CHECK(curve[0].first == doctest::Approx(0.0));
  CHECK(curve[0].second == doctest::Approx(0.0));
  CHECK(curve[1].second == doctest::Approx(0.0));
  CHECK(curve[2].second == doctest::Approx(std::sqrt(0.25 / 3.0)));
}

TEST_CASE("planar rigid motions of the estimate do not change the score") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<PairedSample> pairs;
    Eigen::Vector3d p(0, 0, 0);
    const double theta = 3.0 * u(rng);
    const Eigen::Matrix3d Rz =
        Eigen::AngleAxisd(theta, Eigen::Vector3d::UnitZ()).toRotationMatrix();
    const Eigen::Vector3d offset(10.0 * u(rng), 10.0 * u(rng), 0.0);
    for (int k = 0; k < 12; ++k) {
      PairedSample s;
      s.t_est = s.t_gt = k;
      s.gt = p;
      s.est = Rz * p + offset;
      pairs.push_back(s);
      p += Eigen::Vector3d(0.4 + 0.2 * u(rng), 0.3 * u(rng), 0.0);
    }
    CHECK(rmse(pairs) < 1e-9);
  }
}

TEST_CASE("report json round-trips") {
  EvalReport r;
  r.rmse_m = 0.568;
  r.trajectory_length_m = 30.25;
  r.rmse_vs_time = {{0.0, 0.0}, {1.0, 0.1}, {2.0, 0.2}};
  r.per_modality = {{"full", 0.568}, {"wheel_only", 2.52}, {"gpr_only", 1.73}};

  const EvalReport back = report_from_json(report_to_json(r));
  CHECK(back.rmse_m == r.rmse_m);
  CHECK(back.trajectory_length_m == r.trajectory_length_m);
  CHECK(back.rmse_vs_time == r.rmse_vs_time);
  CHECK(back.per_modality == r.per_modality);

  CHECK_THROWS_AS(report_from_json("{"), DataError);
}

TEST_CASE("trajectory csv round-trips exactly") {
  std::mt19937_64 rng(32);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<RobotState> states(7);
  for (int k = 0; k < 7; ++k) {
    states[k].timestamp_s = 0.5 * k + 0.001 * u(rng);
    states[k].p = Eigen::Vector3d(u(rng), u(rng), u(rng)) * 3.0;
    const Eigen::Vector3d ax = Eigen::Vector3d(u(rng), u(rng), u(rng)).normalized();
    states[k].R = Eigen::AngleAxisd(u(rng), ax).toRotationMatrix();
  }

  const auto path = std::filesystem::temp_directory_path() / "gprodom_traj.csv";
  save_trajectory(states, path.string());
  const auto back = load_trajectory(path.string());
  std::filesystem::remove(path);

  REQUIRE(back.size() == states.size());
  for (size_t k = 0; k < back.size(); ++k) {
    CHECK(back[k].t_s == states[k].timestamp_s);
    CHECK(back[k].p == states[k].p);
    CHECK(back[k].q(0) >= 0.0);  // canonical hemisphere
    CHECK(back[k].q.norm() == doctest::Approx(1.0).epsilon(1e-12));
    const Eigen::Quaterniond q(back[k].q(0), back[k].q(1), back[k].q(2),
                               back[k].q(3));
    CHECK((q.toRotationMatrix() - states[k].R).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("path length sums segment norms") {
  const auto t =
      track({{0.0, {0, 0, 0}}, {1.0, {3, 4, 0}}, {2.0, {3, 4, 12}}});
  CHECK(path_length(t) == doctest::Approx(17.0));
  CHECK(path_length({}) == doctest::Approx(0.0));
}
