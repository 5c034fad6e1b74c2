#include "armflow/kinematics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

namespace armflow::kin {

double wrap_angle(double a) {
  a = std::fmod(a + M_PI, 2.0 * M_PI);
  if (a <= 0.0) a += 2.0 * M_PI;
  return a - M_PI;
}

double EmbodimentSpec::total_reach() const {
  double r = 0.0;
  for (double l : link_lengths) r += l;
  return r;
}

void EmbodimentSpec::validate() const {
  if (dof < 1 || dof != int(link_lengths.size()) || dof != int(joint_limits.size()))
    throw Error("EmbodimentSpec: dof/link/limit counts disagree for " + name);
  for (double l : link_lengths)
    if (l <= 0.0) throw Error("EmbodimentSpec: non-positive link length in " + name);
  for (const auto& [lo, hi] : joint_limits)
    if (lo >= hi) throw Error("EmbodimentSpec: empty joint range in " + name);
  if (grasp_radius <= 0.0 || max_joint_speed <= 0.0)
    throw Error("EmbodimentSpec: non-positive grasp radius or speed in " + name);
}

nlohmann::ordered_json EmbodimentSpec::to_json() const {
  nlohmann::ordered_json j;
  j["name"] = name;
  j["dof"] = dof;
  j["link_lengths"] = link_lengths;
  nlohmann::ordered_json limits = nlohmann::ordered_json::array();
  for (const auto& [lo, hi] : joint_limits) limits.push_back({lo, hi});
  j["joint_limits"] = limits;
  j["base"] = {base.x(), base.y()};
  j["grasp_radius"] = grasp_radius;
  j["max_joint_speed"] = max_joint_speed;
  return j;
}

EmbodimentSpec EmbodimentSpec::from_json(const nlohmann::json& j) {
  EmbodimentSpec s;
  s.name = j.at("name").get<std::string>();
  s.dof = j.at("dof").get<int>();
  s.link_lengths = j.at("link_lengths").get<std::vector<double>>();
  for (const auto& pair : j.at("joint_limits"))
    s.joint_limits.emplace_back(pair.at(0).get<double>(), pair.at(1).get<double>());
  s.base = Vec2(j.at("base").at(0).get<double>(), j.at("base").at(1).get<double>());
  s.grasp_radius = j.at("grasp_radius").get<double>();
  s.max_joint_speed = j.at("max_joint_speed").get<double>();
  s.validate();
  return s;
}

namespace {

EmbodimentSpec make_preset(const std::string& name, std::vector<double> links) {
  EmbodimentSpec s;
  s.name = name;
  s.dof = int(links.size());
  s.link_lengths = std::move(links);
  for (int i = 0; i < s.dof; ++i) {
    const double lim = (i == 0) ? 3.1 : 2.8;
    s.joint_limits.emplace_back(-lim, lim);
  }
  s.base = Vec2(0.0, 0.05);
  s.grasp_radius = 0.04;
  s.max_joint_speed = 1.5;
  s.validate();
  return s;
}

}  // namespace

const std::vector<EmbodimentSpec>& embodiment_presets() {
  static const std::vector<EmbodimentSpec> presets = {
      make_preset("arm2", {0.6, 0.5}),
      make_preset("arm3", {0.5, 0.4, 0.3}),
      make_preset("arm4", {0.4, 0.35, 0.3, 0.25}),
      make_preset("arm5", {0.35, 0.3, 0.25, 0.2, 0.15}),
  };
  return presets;
}

const EmbodimentSpec& embodiment_by_name(const std::string& name) {
  for (const auto& s : embodiment_presets())
    if (s.name == name) return s;
  throw UnknownEmbodiment("unknown embodiment: " + name);
}

void check_within_limits(const EmbodimentSpec& spec, const std::vector<double>& angles) {
  if (int(angles.size()) != spec.dof) throw Error("joint vector size != dof");
  for (int i = 0; i < spec.dof; ++i) {
    const auto& [lo, hi] = spec.joint_limits[i];
    if (angles[i] < lo - 1e-9 || angles[i] > hi + 1e-9)
      throw JointLimit("joint " + std::to_string(i) + " outside limits");
  }
}

std::vector<Vec2> link_points(const EmbodimentSpec& spec, const std::vector<double>& angles) {
  std::vector<Vec2> pts;
  pts.reserve(spec.dof + 1);
  pts.push_back(spec.base);
  double cum = 0.0;
  for (int i = 0; i < spec.dof; ++i) {
    cum += angles[i];
    pts.push_back(pts.back() + spec.link_lengths[i] * Vec2(std::cos(cum), std::sin(cum)));
  }
  return pts;
}

EePose forward_kinematics(const EmbodimentSpec& spec, const std::vector<double>& angles) {
  check_within_limits(spec, angles);
  const auto pts = link_points(spec, angles);
  double cum = 0.0;
  for (double a : angles) cum += a;
  return EePose{pts.back().x(), pts.back().y(), wrap_angle(cum)};
}

Eigen::MatrixXd jacobian(const EmbodimentSpec& spec, const std::vector<double>& angles) {
  check_within_limits(spec, angles);
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(3, spec.dof);
  // cumulative angles and joint positions
  std::vector<double> cum(spec.dof);
  double acc = 0.0;
  for (int i = 0; i < spec.dof; ++i) {
    acc += angles[i];
    cum[i] = acc;
  }
  for (int col = 0; col < spec.dof; ++col) {
    double dx = 0.0, dz = 0.0;
    for (int i = col; i < spec.dof; ++i) {
      dx -= spec.link_lengths[i] * std::sin(cum[i]);
      dz += spec.link_lengths[i] * std::cos(cum[i]);
    }
    j(0, col) = dx;
    j(1, col) = dz;
    j(2, col) = 1.0;
  }
  return j;
}

namespace {

struct IkCandidate {
  std::vector<double> angles;
  double seed_distance;
};

// One damped-least-squares descent from a given start; returns angles on
// convergence. Iterates are clamped to joint limits unless clamp == false.
std::optional<std::vector<double>> dls_descend(const EmbodimentSpec& spec, const EePose& target,
                                               std::vector<double> q, const IkOptions& opts,
                                               bool clamp) {
  const int rows = opts.constrain_orientation ? 3 : 2;
  const double lambda2 = opts.damping * opts.damping;
  for (int it = 0; it < opts.max_iterations; ++it) {
    const auto pts = link_points(spec, q);
    double cum = 0.0;
    for (double a : q) cum += a;
    Eigen::VectorXd err(rows);
    err(0) = target.x - pts.back().x();
    err(1) = target.z - pts.back().y();
    if (rows == 3) err(2) = wrap_angle(target.orientation - cum);

    const bool pos_ok = err.head<2>().norm() <= opts.pos_tol;
    const bool ori_ok = rows == 2 || std::abs(err(2)) <= opts.ori_tol;
    if (pos_ok && ori_ok) return q;

    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(rows, spec.dof);
    {
      std::vector<double> cums(spec.dof);
      double acc = 0.0;
      for (int i = 0; i < spec.dof; ++i) {
        acc += q[i];
        cums[i] = acc;
      }
      for (int col = 0; col < spec.dof; ++col) {
        double dx = 0.0, dz = 0.0;
        for (int i = col; i < spec.dof; ++i) {
          dx -= spec.link_lengths[i] * std::sin(cums[i]);
          dz += spec.link_lengths[i] * std::cos(cums[i]);
        }
        jac(0, col) = dx;
        jac(1, col) = dz;
        if (rows == 3) jac(2, col) = 1.0;
      }
    }

    Eigen::MatrixXd jjt = jac * jac.transpose();
    jjt.diagonal().array() += lambda2;
    Eigen::VectorXd dq = jac.transpose() * jjt.ldlt().solve(err);
    const double step_norm = dq.norm();
    if (step_norm > 0.5) dq *= 0.5 / step_norm;
    for (int i = 0; i < spec.dof; ++i) {
      q[i] += dq(i);
      if (clamp) q[i] = std::clamp(q[i], spec.joint_limits[i].first, spec.joint_limits[i].second);
    }
  }
  return std::nullopt;
}

}  // namespace

JointState solve_ik(const EmbodimentSpec& spec, const EePose& target, const JointState& seed,
                    const IkOptions& opts) {
  if (int(seed.angles.size()) != spec.dof) throw Error("solve_ik: seed size != dof");
  const double dist = (Vec2(target.x, target.z) - spec.base).norm();
  if (dist > spec.total_reach() + opts.pos_tol)
    throw Unreachable("solve_ik: target beyond total reach");

  const Rng rng = Rng(opts.seed).derive("ik_restarts");
  std::vector<IkCandidate> converged;
  for (int r = 0; r <= opts.restarts; ++r) {
    std::vector<double> start = seed.angles;
    if (r > 0) {
      const Rng rr = rng.derive(uint64_t(r));
      const bool global = r > opts.restarts / 2;  // later restarts explore the whole range
      for (int i = 0; i < spec.dof; ++i) {
        const auto& [lo, hi] = spec.joint_limits[i];
        if (global) {
          start[i] = rr.uniform(uint64_t(i), lo, hi);
        } else {
          const double scale = 0.3 + 0.7 * double(r) / double(opts.restarts);
          start[i] = std::clamp(
              seed.angles[i] + scale * rr.normal(uint64_t(i)) * (hi - lo) * 0.25, lo, hi);
        }
      }
    } else {
      for (int i = 0; i < spec.dof; ++i)
        start[i] = std::clamp(start[i], spec.joint_limits[i].first, spec.joint_limits[i].second);
    }
    if (auto q = dls_descend(spec, target, start, opts, /*clamp=*/true)) {
      double d2 = 0.0;
      for (int i = 0; i < spec.dof; ++i) d2 += (q->at(i) - seed.angles[i]) * (q->at(i) - seed.angles[i]);
      converged.push_back({std::move(*q), std::sqrt(d2)});
    }
  }

  if (converged.empty()) {
    // distinguish "only limit-violating solutions" from plain failure
    if (auto q = dls_descend(spec, target, seed.angles, opts, /*clamp=*/false)) {
      for (int i = 0; i < spec.dof; ++i) {
        const auto& [lo, hi] = spec.joint_limits[i];
        if (q->at(i) < lo || q->at(i) > hi)
          throw JointLimit("solve_ik: only limit-violating solutions found");
      }
    }
    throw Unreachable("solve_ik: residual above tolerance after restarts");
  }

  const auto best = std::min_element(converged.begin(), converged.end(),
                                     [](const IkCandidate& a, const IkCandidate& b) {
                                       return a.seed_distance < b.seed_distance;
                                     });
  JointState out;
  out.angles = best->angles;
  out.gripper = seed.gripper;
  return out;
}

bool Feasibility::has(ViolationKind k) const {
  for (const auto& v : violations)
    if (v.kind == k) return true;
  return false;
}

double segment_point_distance(const Vec2& a, const Vec2& b, const Vec2& p) {
  const Vec2 ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 == 0.0) return (p - a).norm();
  const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

double segment_segment_distance(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
  auto cross = [](const Vec2& u, const Vec2& v) { return u.x() * v.y() - u.y() * v.x(); };
  const double d1 = cross(d - c, a - c);
  const double d2 = cross(d - c, b - c);
  const double d3 = cross(b - a, c - a);
  const double d4 = cross(b - a, d - a);
  if (((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0))) return 0.0;  // proper intersection
  return std::min(std::min(segment_point_distance(a, b, c), segment_point_distance(a, b, d)),
                  std::min(segment_point_distance(c, d, a), segment_point_distance(c, d, b)));
}

Feasibility check_feasible(const EmbodimentSpec& spec, const JointState& joints,
                           const SceneGeometry& scene) {
  Feasibility out;
  for (int i = 0; i < spec.dof; ++i) {
    const auto& [lo, hi] = spec.joint_limits[i];
    if (joints.angles[i] < lo - 1e-9 || joints.angles[i] > hi + 1e-9)
      out.violations.push_back({ViolationKind::JointLimit, i, -1});
  }
  // geometric checks still run on the clamped-to-limit chain
  std::vector<double> q = joints.angles;
  for (int i = 0; i < spec.dof; ++i)
    q[i] = std::clamp(q[i], spec.joint_limits[i].first, spec.joint_limits[i].second);
  const auto pts = link_points(spec, q);

  for (int i = 0; i < spec.dof; ++i) {
    const double min_z = std::min(pts[i].y(), pts[i + 1].y());
    if (min_z - scene.link_radius < scene.table_z)
      out.violations.push_back({ViolationKind::TableCollision, i, -1});
  }
  for (int i = 0; i < spec.dof; ++i) {
    for (int o = 0; o < int(scene.obstacles.size()); ++o) {
      const auto& obs = scene.obstacles[o];
      if (segment_point_distance(pts[i], pts[i + 1], obs.center) <
          scene.link_radius + obs.radius)
        out.violations.push_back({ViolationKind::ObstacleCollision, i, o});
    }
  }
  for (int i = 0; i < spec.dof; ++i) {
    for (int j = i + 2; j < spec.dof; ++j) {
      if (segment_segment_distance(pts[i], pts[i + 1], pts[j], pts[j + 1]) <
          2.0 * scene.link_radius)
        out.violations.push_back({ViolationKind::SelfCollision, i, j});
    }
  }
  return out;
}

}  // namespace armflow::kin
