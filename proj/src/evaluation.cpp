#include "gprodom/evaluation.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "csv_util.hpp"

using nlohmann::json;

namespace gprodom {

Association associate(const std::vector<TimedPosition>& est,
                      const std::vector<TimedPosition>& gt, double max_dt) {
  if (est.empty() || gt.empty())
    throw InvalidInput("associate: empty trajectory");
  if (!(max_dt >= 0)) throw InvalidInput("associate: negative max_dt");

  Association out;
  for (const TimedPosition& e : est) {
    auto it = std::lower_bound(gt.begin(), gt.end(), e.t_s,
                               [](const TimedPosition& g, double t) {
                                 return g.t_s < t;
                               });
    const TimedPosition* best = nullptr;
    if (it != gt.end()) best = &*it;
    if (it != gt.begin() &&
        (!best || std::abs((it - 1)->t_s - e.t_s) < std::abs(best->t_s - e.t_s)))
      best = &*(it - 1);
    if (best && std::abs(best->t_s - e.t_s) <= max_dt)
      out.pairs.push_back({e.t_s, best->t_s, e.p, best->p});
    else
      ++out.dropped;
  }
  if (out.pairs.empty())
    throw DataError("associate: no estimate found a ground-truth partner");
  return out;
}

namespace {

// Anchored squared errors, ordered by estimate time.
std::vector<std::pair<double, double>> anchored_sq_errors(
    std::vector<PairedSample> pairs) {
  if (pairs.empty()) throw InvalidInput("rmse: no pairs");
  std::sort(pairs.begin(), pairs.end(),
            [](const PairedSample& a, const PairedSample& b) {
              return a.t_est < b.t_est;
            });

  const Eigen::Vector3d e0 = pairs.front().est;
  const Eigen::Vector3d g0 = pairs.front().gt;

  double dtheta = 0;
  for (const PairedSample& p : pairs) {
    const Eigen::Vector2d de = (p.est - e0).head<2>();
    const Eigen::Vector2d dg = (p.gt - g0).head<2>();
    if (de.norm() > 1e-6 && dg.norm() > 1e-6) {
      dtheta = std::atan2(dg.y(), dg.x()) - std::atan2(de.y(), de.x());
      break;
    }
  }
  const Eigen::Matrix3d Rz =
      Eigen::AngleAxisd(dtheta, Eigen::Vector3d::UnitZ()).toRotationMatrix();

  std::vector<std::pair<double, double>> out;
  out.reserve(pairs.size());
  for (const PairedSample& p : pairs) {
    const Eigen::Vector3d aligned = Rz * (p.est - e0) + g0;
    out.emplace_back(p.t_est, (aligned - p.gt).squaredNorm());
  }
  return out;
}

}  // namespace

double rmse(const std::vector<PairedSample>& pairs) {
  const auto errs = anchored_sq_errors(pairs);
  double sum = 0;
  for (const auto& [t, e2] : errs) sum += e2;
  return std::sqrt(sum / errs.size());
}

std::vector<std::pair<double, double>> rmse_vs_time(
    const std::vector<PairedSample>& pairs) {
  const auto errs = anchored_sq_errors(pairs);
  std::vector<std::pair<double, double>> out;
  out.reserve(errs.size());
  double sum = 0;
  for (size_t k = 0; k < errs.size(); ++k) {
    sum += errs[k].second;
    out.emplace_back(errs[k].first, std::sqrt(sum / (k + 1)));
  }
  return out;
}

void validate(const EvalReport& r) {
  if (!(r.rmse_m >= 0)) throw InvalidInput("EvalReport: negative rmse");
  if (!(r.trajectory_length_m >= 0))
    throw InvalidInput("EvalReport: negative trajectory length");
  for (size_t k = 0; k + 1 < r.rmse_vs_time.size(); ++k)
    if (!(r.rmse_vs_time[k].first <= r.rmse_vs_time[k + 1].first))
      throw InvalidInput("EvalReport: rmse_vs_time not time-ordered");
}

std::string report_to_json(const EvalReport& r) {
  validate(r);
  json j;
  j["rmse_m"] = r.rmse_m;
  j["trajectory_length_m"] = r.trajectory_length_m;
  j["per_modality"] = r.per_modality;
  json curve = json::array();
  for (const auto& [t, v] : r.rmse_vs_time) curve.push_back({t, v});
  j["rmse_vs_time"] = curve;
  return j.dump(2);
}

EvalReport report_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("report parse: ") + e.what());
  }
  EvalReport r;
  r.rmse_m = j.at("rmse_m").get<double>();
  r.trajectory_length_m = j.at("trajectory_length_m").get<double>();
  r.per_modality = j.at("per_modality").get<std::map<std::string, double>>();
  for (const auto& item : j.at("rmse_vs_time"))
    r.rmse_vs_time.emplace_back(item.at(0).get<double>(),
                                item.at(1).get<double>());
  validate(r);
  return r;
}

void save_report(const EvalReport& r, const std::string& path) {
  auto out = csv::open_out(path);
  out << report_to_json(r) << "\n";
}

EvalReport load_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return report_from_json(text);
}

void save_trajectory(const std::vector<RobotState>& states,
                     const std::string& path) {
  auto out = csv::open_out(path);
  out << "timestamp_s,px,py,pz,qw,qx,qy,qz\n";
  for (const RobotState& x : states) {
    Eigen::Quaterniond q(x.R);
    q.normalize();
    if (q.w() < 0) q.coeffs() *= -1;
    out << csv::fmt(x.timestamp_s) << "," << csv::fmt(x.p.x()) << ","
        << csv::fmt(x.p.y()) << "," << csv::fmt(x.p.z()) << ","
        << csv::fmt(q.w()) << "," << csv::fmt(q.x()) << "," << csv::fmt(q.y())
        << "," << csv::fmt(q.z()) << "\n";
  }
}

std::vector<TrajectorySample> load_trajectory(const std::string& path) {
  const csv::Table t = csv::read_csv(path);
  const int tc = csv::col_index(t, "timestamp_s", path);
  const int px = csv::col_index(t, "px", path);
  const int py = csv::col_index(t, "py", path);
  const int pz = csv::col_index(t, "pz", path);
  const int qw = csv::col_index(t, "qw", path);
  const int qx = csv::col_index(t, "qx", path);
  const int qy = csv::col_index(t, "qy", path);
  const int qz = csv::col_index(t, "qz", path);
  std::vector<TrajectorySample> out;
  out.reserve(t.rows.size());
  for (const auto& row : t.rows) {
    TrajectorySample s;
    s.t_s = row[tc];
    s.p = Eigen::Vector3d(row[px], row[py], row[pz]);
    s.q = Eigen::Vector4d(row[qw], row[qx], row[qy], row[qz]);
    out.push_back(s);
  }
  std::sort(out.begin(), out.end(),
            [](const TrajectorySample& a, const TrajectorySample& b) {
              return a.t_s < b.t_s;
            });
  return out;
}

std::vector<TimedPosition> trajectory_positions(
    const std::vector<TrajectorySample>& traj) {
  std::vector<TimedPosition> out;
  out.reserve(traj.size());
  for (const TrajectorySample& s : traj) out.push_back({s.t_s, s.p});
  return out;
}

std::vector<TimedPosition> trajectory_positions(
    const std::vector<RobotState>& states) {
  std::vector<TimedPosition> out;
  out.reserve(states.size());
  for (const RobotState& x : states) out.push_back({x.timestamp_s, x.p});
  return out;
}

double path_length(const std::vector<TimedPosition>& traj) {
  double len = 0;
  for (size_t k = 0; k + 1 < traj.size(); ++k)
    len += (traj[k + 1].p - traj[k].p).norm();
  return len;
}

}  // namespace gprodom
