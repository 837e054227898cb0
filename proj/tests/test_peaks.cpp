#include <doctest.h>

#include <cmath>
#include <random>

#include "gprodom/errors.hpp"
#include "gprodom/peaks.hpp"

using namespace gprodom;

namespace {

Vector sample_model(const SinusoidParams& p, Eigen::Index n) {
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i)
    v(i) = damped_sinusoid(p, static_cast<double>(i));
  return v;
}

double sum_sq(const Vector& seg, const SinusoidParams& p) {
  double s = 0;
  for (Eigen::Index i = 0; i < seg.size(); ++i) {
    const double r = seg(i) - damped_sinusoid(p, static_cast<double>(i));
    s += r * r;
  }
  return s;
}

}  // namespace

TEST_CASE("damped sinusoid point values") {
  const SinusoidParams p{2.0, 0.1, 0.5, 0.3, 1.0};
  CHECK(damped_sinusoid(p, 0.0) == doctest::Approx(2.910672978251212).epsilon(1e-12));
  CHECK(damped_sinusoid(p, 3.0) == doctest::Approx(0.6633690969486161).epsilon(1e-12));
  CHECK(damped_sinusoid(p, 7.0) == doctest::Approx(0.2144341169795665).epsilon(1e-12));
}

TEST_CASE("noiseless fit recovers the generating parameters") {
  const SinusoidParams truth{1.5, 0.05, 0.8, 0.4, -0.2};
  const Vector seg = sample_model(truth, 48);

  SinusoidParams init = truth;
  init.beta *= 1.2;
  init.alpha = 0.03;
  init.omega *= 1.05;
  init.phi += 0.1;
  init.gamma = 0.0;

  const FitResult fit = fit_damped_sinusoid(seg, init);
  CHECK(fit.status == FitStatus::kConverged);
  CHECK(fit.params.beta == doctest::Approx(truth.beta).epsilon(1e-6));
  CHECK(fit.params.alpha == doctest::Approx(truth.alpha).epsilon(1e-6));
  CHECK(fit.params.omega == doctest::Approx(truth.omega).epsilon(1e-6));
  CHECK(fit.params.phi == doctest::Approx(truth.phi).epsilon(1e-6));
  CHECK(fit.params.gamma == doctest::Approx(truth.gamma).epsilon(1e-6));
}

TEST_CASE("fit objective never exceeds the initial objective") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> ub(0.2, 3.0), ua(0.0, 0.2),
      uw(0.2, 2.5), up(-3.0, 3.0), ug(-1.0, 1.0), noise(-0.3, 0.3);
  for (int trial = 0; trial < 50; ++trial) {
    const SinusoidParams truth{ub(rng), ua(rng), uw(rng), up(rng), ug(rng)};
    Vector seg = sample_model(truth, 40);
    for (Eigen::Index i = 0; i < seg.size(); ++i) seg(i) += noise(rng);
    const SinusoidParams init{ub(rng), ua(rng), uw(rng), up(rng), ug(rng)};
    const FitResult fit = fit_damped_sinusoid(seg, init);
    CHECK(sum_sq(seg, fit.params) <= sum_sq(seg, init) + 1e-12);
  }
}

TEST_CASE("fits come back canonicalized") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const SinusoidParams truth{1.0 + u(rng), 0.1 + 0.05 * u(rng),
                               1.0 + 0.5 * u(rng), 2.0 * u(rng), u(rng)};
    const Vector seg = sample_model(truth, 40);
    SinusoidParams init = truth;
    init.beta = -init.beta;  // sign flip must not leak through
    init.phi += M_PI;
    const FitResult fit = fit_damped_sinusoid(seg, init);
    CHECK(fit.params.beta >= 0.0);
    CHECK(fit.params.phi > -M_PI);
    CHECK(fit.params.phi <= M_PI);
  }
}

TEST_CASE("constant segments are flagged degenerate") {
  const Vector seg = Vector::Constant(32, 4.5);
  const FitResult fit = fit_auto(seg);
  CHECK(fit.status == FitStatus::kDegenerate);
  CHECK(fit.params.beta == doctest::Approx(0.0));
  CHECK(fit.params.gamma == doctest::Approx(4.5));
}

TEST_CASE("auto fit recovers a synthetic radar pulse") {
  const SinusoidParams truth{3.0, 0.08, 0.9, 0.0, 0.0};
  const Vector seg = sample_model(truth, 40);
  const FitResult fit = fit_auto(seg);
  CHECK(fit.params.beta == doctest::Approx(truth.beta).epsilon(1e-4));
  CHECK(fit.params.alpha == doctest::Approx(truth.alpha).epsilon(1e-4));
  CHECK(fit.params.omega == doctest::Approx(truth.omega).epsilon(1e-4));
  CHECK(std::abs(fit.params.phi - truth.phi) < 1e-4);
  CHECK(std::abs(fit.params.gamma - truth.gamma) < 1e-4);
}

TEST_CASE("dominant frequency finds the loudest spectral bin") {
  Vector seg(64);
  for (Eigen::Index i = 0; i < seg.size(); ++i)
    seg(i) = std::cos(2.0 * M_PI * 3.0 * static_cast<double>(i) / 64.0);
  CHECK(dominant_frequency(seg) ==
        doctest::Approx(0.2945243112740431).epsilon(1e-12));
}

TEST_CASE("extract_peaks finds two separated pulses") {
  Vector col = Vector::Zero(128);
  auto pulse = [&](int at, double amp) {
    for (int i = 0; i < 24 && at + i < col.size(); ++i)
      col(at + i) += amp * std::exp(-0.08 * i) * std::cos(0.9 * i);
  };
  pulse(30, 1.0);
  pulse(80, 0.7);

  const std::vector<RawPeak> peaks = extract_peaks(col, 0.15);
  REQUIRE(peaks.size() == 2);
  CHECK(std::abs(peaks[0].sample_index - 30) <= 2);
  CHECK(std::abs(peaks[1].sample_index - 80) <= 2);
  CHECK(peaks[0].amplitude > peaks[1].amplitude);
}

TEST_CASE("all-zero columns yield no peaks") {
  CHECK(extract_peaks(Vector::Zero(64), 0.1).empty());
}

TEST_CASE("raising the prominence threshold never adds peaks") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 25; ++trial) {
    Vector col(96);
    for (Eigen::Index i = 0; i < col.size(); ++i) col(i) = u(rng);
    size_t prev = SIZE_MAX;
    for (double thr : {0.05, 0.15, 0.3, 0.5, 0.8}) {
      const size_t n = extract_peaks(col, thr).size();
      CHECK(n <= prev);
      prev = n;
    }
  }
}

TEST_CASE("max_peaks keeps the strongest peaks") {
  Vector col = Vector::Zero(200);
  for (int k = 0; k < 6; ++k) {
    const int at = 20 + 30 * k;
    const double amp = 1.0 - 0.1 * k;
    for (int i = 0; i < 20; ++i)
      col(at + i) += amp * std::exp(-0.1 * i) * std::cos(0.9 * i);
  }
  PeakConfig cfg;
  cfg.max_peaks = 3;
  const std::vector<RawPeak> peaks = extract_peaks(col, 0.05, cfg);
  REQUIRE(peaks.size() == 3);
  // Strongest three are the first three pulses; output stays index-sorted.
  CHECK(std::abs(peaks[0].sample_index - 20) <= 2);
  CHECK(std::abs(peaks[1].sample_index - 50) <= 2);
  CHECK(std::abs(peaks[2].sample_index - 80) <= 2);
}

TEST_CASE("travel time and depth conversions") {
  const GprGeometry g{0.2, 0.1};
  CHECK(travel_time_ns(g, 10.0) == doctest::Approx(2.0));
  CHECK(depth_m(g, 2.0) == doctest::Approx(0.1));  // two-way: d = v t / 2
}

TEST_CASE("peaks_to_coords preserves indices at native resolution") {
  std::vector<std::vector<RawPeak>> per_col(3);
  per_col[0] = {{12, 0.5}};
  per_col[2] = {{40, 2.0}, {60, 1.0}};
  const GprGeometry g{0.2, 0.1};
  const PeakSet ps = peaks_to_coords(per_col, g, 64, 1.25);

  REQUIRE(ps.peaks.size() == 3);
  CHECK(ps.source_depth == 64);
  CHECK(ps.source_width == 3);
  CHECK(ps.timestamp_s == doctest::Approx(1.25));

  CHECK(ps.peaks[0].r == 0);
  CHECK(ps.peaks[0].d == 12);
  CHECK(ps.peaks[0].amplitude == doctest::Approx(255.0 * 0.25));
  CHECK(ps.peaks[1].r == 2);
  CHECK(ps.peaks[1].d == 40);
  CHECK(ps.peaks[1].amplitude == doctest::Approx(255.0));
  CHECK(ps.peaks[2].d == 60);
  CHECK(ps.peaks[2].amplitude == doctest::Approx(127.5));
}

TEST_CASE("fit input validation") {
  CHECK_THROWS_AS(fit_auto(Vector()), InvalidInput);
  CHECK_THROWS_AS(extract_peaks(Vector::Zero(8), -0.1), InvalidInput);
}
