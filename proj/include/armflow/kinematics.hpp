#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "armflow/errors.hpp"
#include "armflow/rng.hpp"

namespace armflow::kin {

using Vec2 = Eigen::Vector2d;

double wrap_angle(double a);  // into (-pi, pi]

struct EmbodimentSpec {
  std::string name;
  int dof = 0;
  std::vector<double> link_lengths;                  // meters
  std::vector<std::pair<double, double>> joint_limits;  // radians, lo < hi
  Vec2 base{0.0, 0.0};                               // (x, z) in the vertical plane
  double grasp_radius = 0.04;
  double max_joint_speed = 1.5;  // rad/s

  int state_dim() const { return dof + 1; }   // angles + gripper aperture
  int action_dim() const { return dof + 1; }  // joint deltas + gripper command
  double total_reach() const;
  void validate() const;

  nlohmann::ordered_json to_json() const;
  static EmbodimentSpec from_json(const nlohmann::json& j);
};

// arm2/arm3/arm4/arm5 presets scaled for a ~1 m workspace
const std::vector<EmbodimentSpec>& embodiment_presets();
const EmbodimentSpec& embodiment_by_name(const std::string& name);

struct JointState {
  std::vector<double> angles;
  double gripper = 1.0;  // aperture in [0, 1], 1 = open
};

struct EePose {
  double x = 0.0;
  double z = 0.0;
  double orientation = 0.0;  // wrapped to (-pi, pi]
};

void check_within_limits(const EmbodimentSpec& spec, const std::vector<double>& angles);

EePose forward_kinematics(const EmbodimentSpec& spec, const std::vector<double>& angles);

// Chain points: base, joint ends, tip — dof+1 entries.
std::vector<Vec2> link_points(const EmbodimentSpec& spec, const std::vector<double>& angles);

// d(x, z, orientation)/d(angles), 3 x dof
Eigen::MatrixXd jacobian(const EmbodimentSpec& spec, const std::vector<double>& angles);

struct IkOptions {
  double damping = 0.05;  // lambda_dls
  int max_iterations = 200;
  int restarts = 8;
  double pos_tol = 1e-3;
  double ori_tol = 1e-2;
  bool constrain_orientation = false;
  uint64_t seed = 0;
};

JointState solve_ik(const EmbodimentSpec& spec, const EePose& target, const JointState& seed,
                    const IkOptions& opts);

struct Disc {
  Vec2 center;
  double radius;
};

struct SceneGeometry {
  double table_z = 0.0;
  std::vector<Disc> obstacles;
  double link_radius = 0.02;
};

enum class ViolationKind { JointLimit, TableCollision, ObstacleCollision, SelfCollision };

struct Violation {
  ViolationKind kind;
  int index_a = -1;  // joint or link index
  int index_b = -1;  // obstacle or second link index
};

struct Feasibility {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
  bool has(ViolationKind k) const;
};

Feasibility check_feasible(const EmbodimentSpec& spec, const JointState& joints,
                           const SceneGeometry& scene);

double segment_point_distance(const Vec2& a, const Vec2& b, const Vec2& p);
double segment_segment_distance(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d);

}  // namespace armflow::kin
