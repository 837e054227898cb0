#include "gprodom/factor_graph.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>

#include "gprodom/so3.hpp"

namespace gprodom {
namespace {

constexpr int kRot = 0;
constexpr int kVel = 3;
constexpr int kPos = 6;
constexpr int kBa = 9;
constexpr int kBg = 12;

const Eigen::Vector3d kForward{1, 0, 0};

template <int N>
Eigen::Matrix<double, N, N> whitener(Eigen::Matrix<double, N, N> cov) {
  const double scale = std::max(1.0, cov.trace() / N);
  double jitter = 0;
  for (int attempt = 0; attempt < 8; ++attempt) {
    Eigen::LLT<Eigen::Matrix<double, N, N>> llt(
        cov + jitter * Eigen::Matrix<double, N, N>::Identity());
    if (llt.info() == Eigen::Success)
      return llt.matrixL().solve(Eigen::Matrix<double, N, N>::Identity());
    jitter = jitter == 0 ? 1e-14 * scale : jitter * 100;
  }
  throw NumericalError("factor covariance is not positive definite");
}

}  // namespace

void validate(const RobotState& x) {
  if (!x.p.allFinite() || !x.v.allFinite() || !x.R.allFinite() ||
      !x.bias_a.allFinite() || !x.bias_g.allFinite() ||
      !std::isfinite(x.timestamp_s))
    throw InvalidInput("RobotState: non-finite field");
  const double ortho =
      (x.R.transpose() * x.R - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  if (ortho > 1e-9) throw InvalidInput("RobotState: R not orthonormal");
  if (std::abs(x.R.determinant() - 1.0) > 1e-9)
    throw InvalidInput("RobotState: det(R) != 1");
}

RobotState retract(const RobotState& x, const Tangent& delta) {
  RobotState out = x;
  out.R = so3::Orthonormalize(x.R * so3::Exp(delta.segment<3>(kRot)));
  out.v += delta.segment<3>(kVel);
  out.p += delta.segment<3>(kPos);
  out.bias_a += delta.segment<3>(kBa);
  out.bias_g += delta.segment<3>(kBg);
  return out;
}

int residual_dim(const Factor& f) {
  switch (f.kind) {
    case FactorKind::kPrior:
    case FactorKind::kImu:
      return 15;
    case FactorKind::kGpr:
    case FactorKind::kWheel:
      return 1;
    case FactorKind::kRotPrior:
    case FactorKind::kVelPrior:
    case FactorKind::kDirectedDistance:
      return 3;
    case FactorKind::kBiasPrior:
      return 6;
  }
  throw InvalidInput("residual_dim: unknown factor kind");
}

void validate(const FactorGraph& g) {
  for (size_t k = 0; k + 1 < g.states.size(); ++k)
    if (!(g.states[k].timestamp_s < g.states[k + 1].timestamp_s))
      throw InvalidInput("FactorGraph: state timestamps not increasing");
  const int n = static_cast<int>(g.states.size());
  for (const Factor& f : g.factors) {
    if (f.i < 0 || f.i >= n) throw InvalidInput("FactorGraph: factor id out of range");
    const bool binary = f.kind == FactorKind::kImu || f.kind == FactorKind::kGpr ||
                        f.kind == FactorKind::kWheel ||
                        f.kind == FactorKind::kDirectedDistance;
    if (binary) {
      if (f.j != f.i + 1)
        throw InvalidInput("FactorGraph: measurement factor must join consecutive states");
    } else if (f.j != -1) {
      throw InvalidInput("FactorGraph: unary factor with two ids");
    }
  }
}

Eigen::Matrix<double, 15, 1> imu_residual(const RobotState& x_i,
                                          const RobotState& x_j,
                                          const PreintegratedImu& pre) {
  const double dt = pre.dt_total;
  if (std::abs((x_j.timestamp_s - x_i.timestamp_s) - dt) > 1e-3)
    throw InvalidInput("imu_residual: preintegration span does not match states");

  const Eigen::Matrix3d dR = pre.corrected_delta_R(x_i.bias_g);
  const Eigen::Vector3d dv = pre.corrected_delta_v(x_i.bias_a, x_i.bias_g);
  const Eigen::Vector3d dp = pre.corrected_delta_p(x_i.bias_a, x_i.bias_g);
  const Eigen::Vector3d g = pre.gravity;

  Eigen::Matrix<double, 15, 1> r;
  r.segment<3>(kRot) = so3::Log(dR.transpose() * x_i.R.transpose() * x_j.R);
  r.segment<3>(kVel) = x_i.R.transpose() * (x_j.v - x_i.v - g * dt) - dv;
  r.segment<3>(kPos) =
      x_i.R.transpose() * (x_j.p - x_i.p - x_i.v * dt - 0.5 * g * dt * dt) - dp;
  r.segment<3>(kBa) = x_j.bias_a - x_i.bias_a;
  r.segment<3>(kBg) = x_j.bias_g - x_i.bias_g;
  return r;
}

namespace {

double distance_residual(const RobotState& x_i, const RobotState& x_j,
                         const DistanceMeasurement& u) {
  if (!(u.sigma_m > 0)) throw InvalidInput("distance residual: sigma_m <= 0");
  return ((x_j.p - x_i.p).norm() - std::abs(u.u_m)) / u.sigma_m;
}

}  // namespace

double gpr_residual(const RobotState& x_i, const RobotState& x_j,
                    const DistanceMeasurement& u) {
  return distance_residual(x_i, x_j, u);
}

double wheel_residual(const RobotState& x_i, const RobotState& x_j,
                      const DistanceMeasurement& z) {
  return distance_residual(x_i, x_j, z);
}

Linearized linearize(const Factor& f, const std::vector<RobotState>& states) {
  Linearized out;
  const RobotState& xi = states.at(f.i);

  switch (f.kind) {
    case FactorKind::kImu: {
      const auto& pre = std::get<ImuPayload>(f.payload).pre;
      const RobotState& xj = states.at(f.j);
      const double dt = pre.dt_total;
      const Eigen::Vector3d g = pre.gravity;

      Eigen::Matrix<double, 15, 1> r = imu_residual(xi, xj, pre);
      const Eigen::Vector3d r_rot = r.segment<3>(kRot);

      const Eigen::Matrix3d dRbar = pre.corrected_delta_R(xi.bias_g);
      const Eigen::Matrix3d E = dRbar.transpose() * xi.R.transpose() * xj.R;
      const Eigen::Matrix3d JrInv_r = so3::JrInv(r_rot);
      const Eigen::Vector3d xi_lin = pre.dR_dbg * (xi.bias_g - pre.bias_ref.gyro);

      Eigen::Matrix<double, 15, 15> Ji = Eigen::Matrix<double, 15, 15>::Zero();
      Eigen::Matrix<double, 15, 15> Jj = Eigen::Matrix<double, 15, 15>::Zero();

      Ji.block<3, 3>(kRot, kRot) = -JrInv_r * xj.R.transpose() * xi.R;
      Ji.block<3, 3>(kRot, kBg) =
          -JrInv_r * E.transpose() * so3::Jr(xi_lin) * pre.dR_dbg;
      Jj.block<3, 3>(kRot, kRot) = JrInv_r;

      Ji.block<3, 3>(kVel, kRot) =
          so3::hat(xi.R.transpose() * (xj.v - xi.v - g * dt));
      Ji.block<3, 3>(kVel, kVel) = -xi.R.transpose();
      Ji.block<3, 3>(kVel, kBa) = -pre.dv_dba;
      Ji.block<3, 3>(kVel, kBg) = -pre.dv_dbg;
      Jj.block<3, 3>(kVel, kVel) = xi.R.transpose();

      Ji.block<3, 3>(kPos, kRot) = so3::hat(
          xi.R.transpose() * (xj.p - xi.p - xi.v * dt - 0.5 * g * dt * dt));
      Ji.block<3, 3>(kPos, kVel) = -xi.R.transpose() * dt;
      Ji.block<3, 3>(kPos, kPos) = -xi.R.transpose();
      Ji.block<3, 3>(kPos, kBa) = -pre.dp_dba;
      Ji.block<3, 3>(kPos, kBg) = -pre.dp_dbg;
      Jj.block<3, 3>(kPos, kPos) = xi.R.transpose();

      Ji.block<3, 3>(kBa, kBa) = -Eigen::Matrix3d::Identity();
      Ji.block<3, 3>(kBg, kBg) = -Eigen::Matrix3d::Identity();
      Jj.block<3, 3>(kBa, kBa) = Eigen::Matrix3d::Identity();
      Jj.block<3, 3>(kBg, kBg) = Eigen::Matrix3d::Identity();

      Eigen::Matrix<double, 15, 15> cov = Eigen::Matrix<double, 15, 15>::Zero();
      cov.topLeftCorner<9, 9>() = pre.covariance;
      cov.bottomRightCorner<6, 6>() = pre.bias_covariance;
      const Eigen::Matrix<double, 15, 15> W = whitener<15>(cov);
      out.r = W * r;
      out.Ji = W * Ji;
      out.Jj = W * Jj;
      return out;
    }

    case FactorKind::kGpr:
    case FactorKind::kWheel: {
      const auto& meas = std::get<DistancePayload>(f.payload).meas;
      const RobotState& xj = states.at(f.j);
      const Eigen::Vector3d d = xj.p - xi.p;
      const double n = d.norm();
      const Eigen::Vector3d dir = n > 1e-9 ? (d / n).eval() : (xi.R * kForward).eval();
      out.r = Eigen::VectorXd::Constant(1, distance_residual(xi, xj, meas));
      out.Ji = Eigen::MatrixXd::Zero(1, 15);
      out.Jj = Eigen::MatrixXd::Zero(1, 15);
      out.Ji.block<1, 3>(0, kPos) = -dir.transpose() / meas.sigma_m;
      out.Jj.block<1, 3>(0, kPos) = dir.transpose() / meas.sigma_m;
      return out;
    }

    case FactorKind::kDirectedDistance: {
      const auto& pl = std::get<DirectedDistancePayload>(f.payload);
      if (!(pl.meas.sigma_m > 0) || !(pl.lateral_sigma_m > 0))
        throw InvalidInput("directed distance: nonpositive sigma");
      const RobotState& xj = states.at(f.j);
      const Eigen::Vector3d local = xi.R.transpose() * (xj.p - xi.p);
      Eigen::Vector3d r = local - pl.meas.u_m * kForward;
      Eigen::Vector3d inv_sigma(1.0 / pl.meas.sigma_m, 1.0 / pl.lateral_sigma_m,
                                1.0 / pl.lateral_sigma_m);
      out.r = inv_sigma.asDiagonal() * r;
      out.Ji = Eigen::MatrixXd::Zero(3, 15);
      out.Jj = Eigen::MatrixXd::Zero(3, 15);
      out.Ji.block<3, 3>(0, kRot) = inv_sigma.asDiagonal() * so3::hat(local);
      out.Ji.block<3, 3>(0, kPos) =
          inv_sigma.asDiagonal() * (-xi.R.transpose());
      out.Jj.block<3, 3>(0, kPos) = inv_sigma.asDiagonal() * xi.R.transpose();
      return out;
    }

    case FactorKind::kPrior: {
      const auto& pl = std::get<PriorPayload>(f.payload);
      if (!(pl.rot_sigma > 0 && pl.pos_sigma > 0 && pl.vel_sigma > 0 &&
            pl.bias_sigma > 0))
        throw InvalidInput("prior: nonpositive sigma");
      Eigen::Matrix<double, 15, 1> r;
      const Eigen::Vector3d r_rot = so3::Log(pl.target.R.transpose() * xi.R);
      r.segment<3>(kRot) = r_rot / pl.rot_sigma;
      r.segment<3>(kVel) = (xi.v - pl.target.v) / pl.vel_sigma;
      r.segment<3>(kPos) = (xi.p - pl.target.p) / pl.pos_sigma;
      r.segment<3>(kBa) = (xi.bias_a - pl.target.bias_a) / pl.bias_sigma;
      r.segment<3>(kBg) = (xi.bias_g - pl.target.bias_g) / pl.bias_sigma;
      out.r = r;
      out.Ji = Eigen::MatrixXd::Zero(15, 15);
      out.Ji.block<3, 3>(kRot, kRot) = so3::JrInv(r_rot) / pl.rot_sigma;
      out.Ji.block<3, 3>(kVel, kVel) =
          Eigen::Matrix3d::Identity() / pl.vel_sigma;
      out.Ji.block<3, 3>(kPos, kPos) =
          Eigen::Matrix3d::Identity() / pl.pos_sigma;
      out.Ji.block<3, 3>(kBa, kBa) =
          Eigen::Matrix3d::Identity() / pl.bias_sigma;
      out.Ji.block<3, 3>(kBg, kBg) =
          Eigen::Matrix3d::Identity() / pl.bias_sigma;
      return out;
    }

    case FactorKind::kRotPrior: {
      const auto& pl = std::get<RotPriorPayload>(f.payload);
      if (!(pl.sigma_rad > 0)) throw InvalidInput("rot prior: nonpositive sigma");
      const Eigen::Vector3d r_rot = so3::Log(pl.target.transpose() * xi.R);
      out.r = r_rot / pl.sigma_rad;
      out.Ji = Eigen::MatrixXd::Zero(3, 15);
      out.Ji.block<3, 3>(0, kRot) = so3::JrInv(r_rot) / pl.sigma_rad;
      return out;
    }

    case FactorKind::kVelPrior: {
      const auto& pl = std::get<VelPriorPayload>(f.payload);
      if (!(pl.sigma > 0)) throw InvalidInput("vel prior: nonpositive sigma");
      out.r = (xi.v - pl.target) / pl.sigma;
      out.Ji = Eigen::MatrixXd::Zero(3, 15);
      out.Ji.block<3, 3>(0, kVel) = Eigen::Matrix3d::Identity() / pl.sigma;
      return out;
    }

    case FactorKind::kBiasPrior: {
      const auto& pl = std::get<BiasPriorPayload>(f.payload);
      if (!(pl.sigma > 0)) throw InvalidInput("bias prior: nonpositive sigma");
      Eigen::Matrix<double, 6, 1> r;
      r.head<3>() = xi.bias_a / pl.sigma;
      r.tail<3>() = xi.bias_g / pl.sigma;
      out.r = r;
      out.Ji = Eigen::MatrixXd::Zero(6, 15);
      out.Ji.block<3, 3>(0, kBa) = Eigen::Matrix3d::Identity() / pl.sigma;
      out.Ji.block<3, 3>(3, kBg) = Eigen::Matrix3d::Identity() / pl.sigma;
      return out;
    }
  }
  throw InvalidInput("linearize: unknown factor kind");
}

double graph_loss(const FactorGraph& graph,
                  const std::vector<RobotState>& states) {
  double loss = 0;
  for (const Factor& f : graph.factors)
    loss += linearize(f, states).r.squaredNorm();
  return loss;
}

namespace {

// Structural solvability: a position anchor must exist and reach every free
// state through measurement factors.
void check_structure(const FactorGraph& g, const std::vector<int>& free_index) {
  const int n = static_cast<int>(g.states.size());
  std::vector<char> anchored(n, 0);
  for (int s = 0; s < n; ++s)
    if (free_index[s] < 0) anchored[s] = 1;  // fixed states anchor the window
  bool any_anchor = false;
  for (const Factor& f : g.factors)
    if (f.kind == FactorKind::kPrior) {
      anchored[f.i] = 1;
      any_anchor = true;
    }
  for (int s = 0; s < n; ++s) any_anchor = any_anchor || anchored[s];
  if (!any_anchor)
    throw RankDeficiencyError(
        "graph has no prior factor: global position and orientation are "
        "unconstrained");

  std::vector<std::vector<int>> adj(n);
  for (const Factor& f : g.factors)
    if (f.j >= 0) {
      adj[f.i].push_back(f.j);
      adj[f.j].push_back(f.i);
    }
  std::vector<char> seen = anchored;
  std::vector<int> stack;
  for (int s = 0; s < n; ++s)
    if (seen[s]) stack.push_back(s);
  while (!stack.empty()) {
    const int s = stack.back();
    stack.pop_back();
    for (int t : adj[s])
      if (!seen[t]) {
        seen[t] = 1;
        stack.push_back(t);
      }
  }
  std::vector<int> orphans;
  for (int s = 0; s < n; ++s)
    if (!seen[s] && free_index[s] >= 0) orphans.push_back(s);
  if (!orphans.empty()) {
    std::ostringstream os;
    os << "states unreachable from any prior:";
    for (int s : orphans) os << " " << s;
    throw RankDeficiencyError(os.str());
  }
}

void check_diagonal(const Eigen::VectorXd& diag,
                    const std::vector<int>& state_of_block) {
  static const char* kBlockName[5] = {"rotation", "velocity", "position",
                                      "accel bias", "gyro bias"};
  std::ostringstream os;
  bool bad = false;
  for (int blk = 0; blk * 15 < diag.size(); ++blk)
    for (int part = 0; part < 5; ++part) {
      const double d = diag.segment<3>(blk * 15 + part * 3).sum();
      if (d <= 0) {
        os << (bad ? "; " : "") << "state " << state_of_block[blk] << " "
           << kBlockName[part];
        bad = true;
      }
    }
  if (bad)
    throw RankDeficiencyError("unconstrained directions: " + os.str());
}

struct BatchResult {
  double initial_loss = 0;
  double final_loss = 0;
  int iterations = 0;
};

// Damped Gauss-Newton over the free states; `states` is updated in place.
BatchResult solve_batch(const FactorGraph& graph,
                        std::vector<RobotState>& states,
                        const std::vector<int>& free_index, int n_free,
                        const OptimizeOptions& opts) {
  check_structure(graph, free_index);
  std::vector<int> state_of_block(n_free);
  for (size_t s = 0; s < free_index.size(); ++s)
    if (free_index[s] >= 0) state_of_block[free_index[s]] = static_cast<int>(s);

  const int dim = 15 * n_free;
  BatchResult res;
  double lambda = 1e-6;

  std::vector<Eigen::Triplet<double>> trips;
  for (int iter = 0; iter < opts.max_iterations; ++iter) {
    trips.clear();
    Eigen::VectorXd b = Eigen::VectorXd::Zero(dim);
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(dim);
    double loss = 0;

    for (const Factor& f : graph.factors) {
      const Linearized lin = linearize(f, states);
      loss += lin.r.squaredNorm();
      const int bi = free_index[f.i];
      const int bj = f.j >= 0 ? free_index[f.j] : -1;
      const Eigen::MatrixXd* jac[2] = {&lin.Ji, &lin.Jj};
      const int blk[2] = {bi, bj};
      for (int a = 0; a < 2; ++a) {
        if (blk[a] < 0 || jac[a]->size() == 0) continue;
        b.segment<15>(15 * blk[a]) -= jac[a]->transpose() * lin.r;
        for (int c = 0; c < 2; ++c) {
          if (blk[c] < 0 || jac[c]->size() == 0) continue;
          const Eigen::Matrix<double, 15, 15> h =
              jac[a]->transpose() * (*jac[c]);
          for (int r = 0; r < 15; ++r)
            for (int q = 0; q < 15; ++q)
              if (h(r, q) != 0)
                trips.emplace_back(15 * blk[a] + r, 15 * blk[c] + q, h(r, q));
          if (a == c)
            diag.segment<15>(15 * blk[a]) += h.diagonal();
        }
      }
    }

    if (iter == 0) res.initial_loss = loss;
    res.final_loss = loss;
    res.iterations = iter;

    if (b.lpNorm<Eigen::Infinity>() < 1e-14 * std::max(1.0, loss)) break;

    const double diag_floor = 1e-12 * std::max(1.0, diag.maxCoeff());
    bool accepted = false;
    bool factorization_failed = false;
    for (int attempt = 0; attempt < 12 && !accepted; ++attempt) {
      std::vector<Eigen::Triplet<double>> damped = trips;
      for (int k = 0; k < dim; ++k)
        damped.emplace_back(k, k, lambda * std::max(diag(k), diag_floor));
      Eigen::SparseMatrix<double> H(dim, dim);
      H.setFromTriplets(damped.begin(), damped.end());
      Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt(H);
      if (llt.info() != Eigen::Success) {
        lambda *= 10;
        factorization_failed = true;
        continue;
      }
      const Eigen::VectorXd delta = llt.solve(b);
      if (!delta.allFinite()) {
        lambda *= 10;
        factorization_failed = true;
        continue;
      }

      std::vector<RobotState> trial = states;
      for (size_t s = 0; s < free_index.size(); ++s)
        if (free_index[s] >= 0)
          trial[s] = retract(states[s], delta.segment<15>(15 * free_index[s]));
      double trial_loss = 0;
      for (const Factor& f : graph.factors)
        trial_loss += linearize(f, trial).r.squaredNorm();

      if (trial_loss <= loss) {
        states = std::move(trial);
        lambda = std::max(lambda / 3.0, 1e-12);
        accepted = true;
        res.final_loss = trial_loss;
        res.iterations = iter + 1;
        const bool converged =
            loss - trial_loss <= opts.rel_tol * std::max(loss, 1e-300) ||
            delta.lpNorm<Eigen::Infinity>() < 1e-12;
        if (converged) return res;
      } else {
        lambda *= 4;
      }
    }
    if (!accepted) {
      if (factorization_failed) {
        // Diagonally unconstrained directions are normally parked at their
        // initial values by the damping floor; reaching this point means the
        // system is singular beyond what damping absorbs, so name them.
        check_diagonal(diag, state_of_block);
        throw NumericalError(
            "optimize: damped normal equations could not be factorized");
      }
      break;  // no descent at any damping: stationary
    }
  }
  return res;
}

OptimizeResult run_windowed(const FactorGraph& graph,
                            const std::vector<RobotState>& init,
                            const OptimizeOptions& opts) {
  const int n = static_cast<int>(graph.states.size());
  std::vector<RobotState> cur = init;
  OptimizeResult out;
  out.initial_loss = graph_loss(graph, init);

  for (int end = std::min(n, opts.window); end <= n; ++end) {
    FactorGraph sub;
    sub.states.assign(graph.states.begin(), graph.states.begin() + end);
    for (const Factor& f : graph.factors)
      if (f.i < end && f.j < end) sub.factors.push_back(f);

    const int first_free = std::max(0, end - opts.window);
    std::vector<int> free_index(end, -1);
    int n_free = 0;
    for (int s = first_free; s < end; ++s) free_index[s] = n_free++;

    std::vector<RobotState> window_states(cur.begin(), cur.begin() + end);
    const BatchResult r =
        solve_batch(sub, window_states, free_index, n_free, opts);
    std::copy(window_states.begin(), window_states.end(), cur.begin());
    out.iterations += r.iterations;
  }

  out.states = std::move(cur);
  out.final_loss = graph_loss(graph, out.states);
  return out;
}

}  // namespace

OptimizeResult optimize(const FactorGraph& graph,
                        const std::vector<RobotState>& init,
                        const OptimizeOptions& opts) {
  validate(graph);
  if (init.size() != graph.states.size())
    throw InvalidInput("optimize: init size does not match graph");
  for (const RobotState& x : init) validate(x);
  if (graph.states.empty()) throw InvalidInput("optimize: empty graph");

  if (opts.window > 0 && static_cast<int>(init.size()) > opts.window)
    return run_windowed(graph, init, opts);

  std::vector<RobotState> states = init;
  std::vector<int> free_index(states.size());
  for (size_t s = 0; s < states.size(); ++s) free_index[s] = static_cast<int>(s);
  const BatchResult r = solve_batch(graph, states, free_index,
                                    static_cast<int>(states.size()), opts);
  OptimizeResult out;
  out.states = std::move(states);
  out.initial_loss = r.initial_loss;
  out.final_loss = r.final_loss;
  out.iterations = r.iterations;
  return out;
}

std::vector<RobotState> dead_reckon(
    const std::vector<double>& keyframe_times,
    const std::vector<Eigen::Matrix3d>& headings,
    const std::vector<double>& interval_distances, const RobotState& start) {
  const size_t n = keyframe_times.size();
  if (n < 1 || headings.size() != n || interval_distances.size() + 1 != n)
    throw InvalidInput("dead_reckon: inconsistent input sizes");

  std::vector<RobotState> out(n);
  out[0] = start;
  out[0].R = headings[0];
  out[0].timestamp_s = keyframe_times[0];
  for (size_t k = 0; k + 1 < n; ++k) {
    const double dt = keyframe_times[k + 1] - keyframe_times[k];
    if (!(dt > 0)) throw InvalidInput("dead_reckon: non-increasing times");
    const Eigen::Vector3d step = out[k].R * kForward * interval_distances[k];
    out[k].v = step / dt;
    out[k + 1] = out[k];
    out[k + 1].p = out[k].p + step;
    out[k + 1].R = headings[k + 1];
    out[k + 1].timestamp_s = keyframe_times[k + 1];
  }
  if (n >= 2) out[n - 1].v = out[n - 2].v;
  return out;
}

double wheel_distance_at(const std::vector<WheelSample>& wheel, double t) {
  if (wheel.empty()) throw InvalidInput("wheel stream empty");
  if (t <= wheel.front().t_s) return wheel.front().dist_m;
  if (t >= wheel.back().t_s) return wheel.back().dist_m;
  auto it = std::lower_bound(
      wheel.begin(), wheel.end(), t,
      [](const WheelSample& s, double tt) { return s.t_s < tt; });
  const WheelSample& hi = *it;
  const WheelSample& lo = *(it - 1);
  const double f = (t - lo.t_s) / (hi.t_s - lo.t_s);
  return lo.dist_m + f * (hi.dist_m - lo.dist_m);
}

namespace {

// Contiguous runs of GPR measurements merged into cumulative-distance
// curves; a gap (skipped pair) starts a new chain.
struct CumChain {
  std::vector<double> t;      // knots
  std::vector<double> c;      // cumulative distance at knots
  std::vector<double> sigma;  // per-segment sigma
};

std::vector<CumChain> build_chains(std::vector<DistanceMeasurement> meas) {
  std::sort(meas.begin(), meas.end(),
            [](const DistanceMeasurement& a, const DistanceMeasurement& b) {
              return a.t_from < b.t_from;
            });
  std::vector<CumChain> chains;
  for (const DistanceMeasurement& m : meas) {
    if (chains.empty() || std::abs(m.t_from - chains.back().t.back()) > 1e-6) {
      chains.push_back({{m.t_from}, {0.0}, {}});
    }
    CumChain& ch = chains.back();
    ch.t.push_back(m.t_to);
    ch.c.push_back(ch.c.back() + m.u_m);
    ch.sigma.push_back(m.sigma_m);
  }
  return chains;
}

std::optional<DistanceMeasurement> chain_interval(
    const std::vector<CumChain>& chains, double a, double b) {
  for (const CumChain& ch : chains) {
    if (ch.t.front() > a + 1e-9 || ch.t.back() < b - 1e-9) continue;
    auto value_at = [&ch](double t) {
      auto it = std::upper_bound(ch.t.begin(), ch.t.end(), t);
      size_t hi = std::min<size_t>(ch.t.size() - 1,
                                   std::max<size_t>(1, it - ch.t.begin()));
      const double f = (t - ch.t[hi - 1]) / (ch.t[hi] - ch.t[hi - 1]);
      return ch.c[hi - 1] + std::clamp(f, 0.0, 1.0) * (ch.c[hi] - ch.c[hi - 1]);
    };
    DistanceMeasurement out;
    out.u_m = value_at(b) - value_at(a);
    out.t_from = a;
    out.t_to = b;
    double var = 0;
    for (size_t seg = 0; seg + 1 < ch.t.size(); ++seg) {
      const double lo = std::max(a, ch.t[seg]);
      const double hi = std::min(b, ch.t[seg + 1]);
      if (hi <= lo) continue;
      const double frac = (hi - lo) / (ch.t[seg + 1] - ch.t[seg]);
      var += (ch.sigma[seg] * frac) * (ch.sigma[seg] * frac);
    }
    out.sigma_m = std::sqrt(std::max(var, 1e-12));
    return out;
  }
  return std::nullopt;
}

Eigen::Matrix3d integrate_gyro(const std::vector<ImuSample>& imu, double t0,
                               double t1, const Eigen::Matrix3d& R0) {
  Eigen::Matrix3d R = R0;
  for (size_t k = 0; k < imu.size(); ++k) {
    const double seg_start = std::max(t0, imu[k].t_s);
    const double seg_end =
        std::min(t1, k + 1 < imu.size() ? imu[k + 1].t_s : t1);
    if (seg_end <= seg_start) continue;
    R = so3::Orthonormalize(R * so3::Exp(imu[k].gyro * (seg_end - seg_start)));
  }
  return R;
}

Eigen::Matrix3d nearest_heading(
    const std::vector<std::pair<double, Eigen::Matrix3d>>& headings, double t) {
  const auto best = std::min_element(
      headings.begin(), headings.end(), [t](const auto& a, const auto& b) {
        return std::abs(a.first - t) < std::abs(b.first - t);
      });
  return best->second;
}

}  // namespace

BuiltGraph build_graph(const std::vector<ImuSample>& imu,
                       const std::vector<WheelSample>& wheel,
                       const std::vector<DistanceMeasurement>& gpr,
                       const BuildConfig& cfg) {
  if (!(cfg.keyframe_dt > 0)) throw InvalidInput("build_graph: keyframe_dt <= 0");
  if (!cfg.use_imu && !cfg.use_wheel && !cfg.use_gpr)
    throw InvalidInput("build_graph: no modality enabled");

  double t0 = -std::numeric_limits<double>::infinity();
  double t1 = std::numeric_limits<double>::infinity();
  if (cfg.use_imu) {
    if (imu.size() < 2) throw InvalidInput("build_graph: IMU stream too short");
    t0 = std::max(t0, imu.front().t_s);
    t1 = std::min(t1, imu.back().t_s);
  }
  if (cfg.use_wheel) {
    if (wheel.size() < 2) throw InvalidInput("build_graph: wheel stream too short");
    t0 = std::max(t0, wheel.front().t_s);
    t1 = std::min(t1, wheel.back().t_s);
  }
  if (!cfg.use_imu && !cfg.use_wheel) {
    if (gpr.empty()) throw InvalidInput("build_graph: no GPR measurements");
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const DistanceMeasurement& m : gpr) {
      lo = std::min(lo, m.t_from);
      hi = std::max(hi, m.t_to);
    }
    t0 = std::max(t0, lo);
    t1 = std::min(t1, hi);
  }
  if (!(t1 - t0 >= cfg.keyframe_dt))
    throw InvalidInput("build_graph: stream overlap shorter than keyframe_dt");

  std::vector<double> times;
  for (double t = t0; t <= t1 + 1e-9; t += cfg.keyframe_dt) times.push_back(t);
  const size_t n = times.size();

  BuiltGraph out;

  // Keyframe headings: gyro integration when IMU is in use, otherwise the
  // supplied external heading track.
  std::vector<Eigen::Matrix3d> headings(n);
  if (cfg.use_imu) {
    headings[0] = cfg.prior.target.R;
    for (size_t k = 0; k + 1 < n; ++k)
      headings[k + 1] = integrate_gyro(imu, times[k], times[k + 1], headings[k]);
  } else if (!cfg.headings.empty()) {
    for (size_t k = 0; k < n; ++k)
      headings[k] = nearest_heading(cfg.headings, times[k]);
  } else {
    for (size_t k = 0; k < n; ++k) headings[k] = cfg.prior.target.R;
    out.diagnostics.push_back(
        "no heading source without IMU; assuming constant heading");
  }

  const std::vector<CumChain> chains = build_chains(gpr);

  // Per-interval distances for dead reckoning: wheel when present, else GPR.
  std::vector<double> dr_dist(n - 1, 0.0);
  for (size_t k = 0; k + 1 < n; ++k) {
    if (cfg.use_wheel) {
      dr_dist[k] = wheel_distance_at(wheel, times[k + 1]) -
                   wheel_distance_at(wheel, times[k]);
    } else if (cfg.use_gpr) {
      const auto m = chain_interval(chains, times[k], times[k + 1]);
      dr_dist[k] = m ? m->u_m : 0.0;
      if (!m)
        out.diagnostics.push_back("interval " + std::to_string(k) +
                                  ": no GPR coverage for dead reckoning");
    }
  }

  out.init = dead_reckon(times, headings, dr_dist, cfg.prior.target);
  out.graph.states = out.init;

  Factor prior;
  prior.kind = FactorKind::kPrior;
  prior.i = 0;
  // Anchor the first state at the caller's prior, not at the dead-reckoned
  // init: the init velocity comes from the first noisy distance interval and
  // would drag the whole trajectory with it under a tight prior.
  PriorPayload prior_pl = cfg.prior;
  prior_pl.target.timestamp_s = out.init.front().timestamp_s;
  prior.payload = prior_pl;
  out.graph.factors.push_back(prior);

  for (size_t k = 0; k + 1 < n; ++k) {
    const int i = static_cast<int>(k);
    const int j = i + 1;

    if (cfg.use_imu) {
      std::vector<ImuSample> span;
      for (const ImuSample& s : imu)
        if (s.t_s >= times[k] - 1e-9 && s.t_s < times[k + 1] - 1e-9)
          span.push_back(s);
      if (span.empty()) {
        out.diagnostics.push_back("interval " + std::to_string(k) +
                                  ": no IMU samples; factor omitted");
      } else {
        Factor f;
        f.kind = FactorKind::kImu;
        f.i = i;
        f.j = j;
        f.payload = ImuPayload{preintegrate(span, ImuBias{}, cfg.imu_noise,
                                            times[k], times[k + 1], cfg.gravity)};
        out.graph.factors.push_back(f);
      }
    }

    if (cfg.use_wheel) {
      DistanceMeasurement m;
      m.u_m = wheel_distance_at(wheel, times[k + 1]) -
              wheel_distance_at(wheel, times[k]);
      m.t_from = times[k];
      m.t_to = times[k + 1];
      m.sigma_m = cfg.wheel_sigma_m;
      Factor f;
      f.i = i;
      f.j = j;
      if (cfg.use_imu) {
        f.kind = FactorKind::kWheel;
        f.payload = DistancePayload{m};
      } else {
        f.kind = FactorKind::kDirectedDistance;
        f.payload = DirectedDistancePayload{m, cfg.lateral_sigma_m};
      }
      out.graph.factors.push_back(f);
    }

    if (cfg.use_gpr) {
      const auto m = chain_interval(chains, times[k], times[k + 1]);
      if (m) {
        Factor f;
        f.i = i;
        f.j = j;
        if (cfg.use_imu) {
          f.kind = FactorKind::kGpr;
          f.payload = DistancePayload{*m};
        } else {
          f.kind = FactorKind::kDirectedDistance;
          f.payload = DirectedDistancePayload{*m, cfg.lateral_sigma_m};
        }
        out.graph.factors.push_back(f);
      }
    }
  }

  if (!cfg.use_imu) {
    for (size_t k = 0; k < n; ++k) {
      Factor rf;
      rf.kind = FactorKind::kRotPrior;
      rf.i = static_cast<int>(k);
      rf.payload = RotPriorPayload{headings[k], cfg.heading_sigma_rad};
      out.graph.factors.push_back(rf);

      Factor vf;
      vf.kind = FactorKind::kVelPrior;
      vf.i = static_cast<int>(k);
      vf.payload = VelPriorPayload{Eigen::Vector3d::Zero(), cfg.weak_vel_sigma};
      out.graph.factors.push_back(vf);

      Factor bf;
      bf.kind = FactorKind::kBiasPrior;
      bf.i = static_cast<int>(k);
      bf.payload = BiasPriorPayload{cfg.weak_bias_sigma};
      out.graph.factors.push_back(bf);
    }
  }

  validate(out.graph);
  return out;
}

}  // namespace gprodom
