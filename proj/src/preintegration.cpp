#include "gprodom/preintegration.hpp"

#include <algorithm>
#include <cmath>

#include "gprodom/so3.hpp"

namespace gprodom {

Eigen::Matrix3d PreintegratedImu::corrected_delta_R(
    const Eigen::Vector3d& bias_g) const {
  const Eigen::Vector3d db = bias_g - bias_ref.gyro;
  return delta_R * so3::Exp(dR_dbg * db);
}

Eigen::Vector3d PreintegratedImu::corrected_delta_v(
    const Eigen::Vector3d& bias_a, const Eigen::Vector3d& bias_g) const {
  return delta_v + dv_dba * (bias_a - bias_ref.accel) +
         dv_dbg * (bias_g - bias_ref.gyro);
}

Eigen::Vector3d PreintegratedImu::corrected_delta_p(
    const Eigen::Vector3d& bias_a, const Eigen::Vector3d& bias_g) const {
  return delta_p + dp_dba * (bias_a - bias_ref.accel) +
         dp_dbg * (bias_g - bias_ref.gyro);
}

void validate(const PreintegratedImu& p) {
  if (!(p.dt_total > 0)) throw InvalidInput("PreintegratedImu: dt_total <= 0");
  const double ortho =
      (p.delta_R.transpose() * p.delta_R - Eigen::Matrix3d::Identity())
          .cwiseAbs()
          .maxCoeff();
  if (ortho > 1e-9) throw InvalidInput("PreintegratedImu: delta_R not orthonormal");
  const double asym = (p.covariance - p.covariance.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-9) throw InvalidInput("PreintegratedImu: covariance not symmetric");
}

PreintegratedImu preintegrate(const std::vector<ImuSample>& samples,
                              const ImuBias& bias, const ImuNoise& noise,
                              double t_start, double t_end,
                              const Eigen::Vector3d& gravity) {
  if (samples.empty()) throw InvalidInput("preintegrate: no samples");
  if (!(t_end > t_start)) throw InvalidInput("preintegrate: empty span");
  for (size_t k = 0; k + 1 < samples.size(); ++k)
    if (!(samples[k].t_s < samples[k + 1].t_s))
      throw InvalidInput("preintegrate: non-increasing timestamps");
  if (samples.front().t_s < t_start - 1e-9 ||
      samples.back().t_s > t_end + 1e-9)
    throw InvalidInput("preintegrate: samples outside span");

  PreintegratedImu out;
  out.bias_ref = bias;
  out.gravity = gravity;

  const Eigen::Matrix3d I = Eigen::Matrix3d::Identity();
  for (size_t k = 0; k < samples.size(); ++k) {
    const double seg_start = k == 0 ? t_start : samples[k].t_s;
    const double seg_end = k + 1 < samples.size() ? samples[k + 1].t_s : t_end;
    const double dt = seg_end - seg_start;
    if (dt <= 0) continue;

    const Eigen::Vector3d w = samples[k].gyro - bias.gyro;
    const Eigen::Vector3d a = samples[k].accel - bias.accel;
    const Eigen::Matrix3d R_step = so3::Exp(w * dt);
    const Eigen::Matrix3d Jr_step = so3::Jr(w * dt);
    const Eigen::Matrix3d A_hat = so3::hat(a);
    const Eigen::Matrix3d& dR = out.delta_R;

    // Error-state transition for (rotation, velocity, position).
    Eigen::Matrix<double, 9, 9> F = Eigen::Matrix<double, 9, 9>::Identity();
    F.block<3, 3>(0, 0) = R_step.transpose();
    F.block<3, 3>(3, 0) = -dR * A_hat * dt;
    F.block<3, 3>(6, 0) = -0.5 * dR * A_hat * dt * dt;
    F.block<3, 3>(6, 3) = I * dt;

    Eigen::Matrix<double, 9, 3> Gg = Eigen::Matrix<double, 9, 3>::Zero();
    Gg.block<3, 3>(0, 0) = Jr_step * dt;
    Eigen::Matrix<double, 9, 3> Ga = Eigen::Matrix<double, 9, 3>::Zero();
    Ga.block<3, 3>(3, 0) = dR * dt;
    Ga.block<3, 3>(6, 0) = 0.5 * dR * dt * dt;

    const double var_g = noise.gyro_noise_density * noise.gyro_noise_density / dt;
    const double var_a = noise.accel_noise_density * noise.accel_noise_density / dt;
    out.covariance = F * out.covariance * F.transpose() +
                     var_g * Gg * Gg.transpose() + var_a * Ga * Ga.transpose();

    // Bias sensitivities, propagated before the increments they refer to.
    out.dp_dba += out.dv_dba * dt - 0.5 * dR * dt * dt;
    out.dp_dbg += out.dv_dbg * dt - 0.5 * dR * A_hat * dt * dt * out.dR_dbg;
    out.dv_dba += -dR * dt;
    out.dv_dbg += -dR * A_hat * dt * out.dR_dbg;
    out.dR_dbg = R_step.transpose() * out.dR_dbg - Jr_step * dt;

    out.delta_p += out.delta_v * dt + 0.5 * dR * a * dt * dt;
    out.delta_v += dR * a * dt;
    out.delta_R = so3::Orthonormalize(out.delta_R * R_step);
    out.dt_total += dt;
  }

  const double T = out.dt_total;
  out.bias_covariance.topLeftCorner<3, 3>() =
      noise.accel_bias_rw * noise.accel_bias_rw * T * I;
  out.bias_covariance.bottomRightCorner<3, 3>() =
      noise.gyro_bias_rw * noise.gyro_bias_rw * T * I;

  validate(out);
  return out;
}

PreintegratedImu preintegrate(const std::vector<ImuSample>& samples,
                              const ImuBias& bias, const ImuNoise& noise,
                              const Eigen::Vector3d& gravity) {
  if (samples.size() < 2)
    throw InvalidInput("preintegrate: need >= 2 samples without an explicit span");
  std::vector<double> gaps;
  gaps.reserve(samples.size() - 1);
  for (size_t k = 0; k + 1 < samples.size(); ++k)
    gaps.push_back(samples[k + 1].t_s - samples[k].t_s);
  std::nth_element(gaps.begin(), gaps.begin() + gaps.size() / 2, gaps.end());
  const double hold = gaps[gaps.size() / 2];
  return preintegrate(samples, bias, noise, samples.front().t_s,
                      samples.back().t_s + hold, gravity);
}

}  // namespace gprodom
