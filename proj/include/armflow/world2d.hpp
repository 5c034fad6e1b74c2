#pragma once

#include <optional>
#include <utility>

#include <nlohmann/json.hpp>

#include "armflow/kinematics.hpp"

namespace armflow::sim {

using kin::Vec2;

enum class TaskKind { PickDisk, PullDisk, StackDisk, PushDisk, PlaceDisk, LiftPegUpright };

const std::vector<TaskKind>& all_tasks();
std::string task_name(TaskKind t);
TaskKind task_from_name(const std::string& name);

struct TaskParams {
  double lift_threshold = 0.025;  // m above table
  double region_width = 0.10;     // m
  double upright_tol = 0.15;      // rad
  int max_steps = 120;
};
TaskParams task_params(TaskKind t);

// world constants
inline constexpr double kDt = 0.05;
inline constexpr int kGrid = 24;
inline constexpr int kChannels = 5;  // red, green, blue, arm, region
inline constexpr int kMaxStateDim = 16;
inline constexpr int kMaxActionDim = 8;
inline constexpr double kDiskRadius = 0.03;
inline constexpr double kPegHalfLen = 0.06;
inline constexpr double kPegRadius = 0.015;
inline constexpr double kContainerHalf = 0.06;
inline constexpr double kView0Origin = -0.1;  // square window, 1.2 m side
inline constexpr double kView0Extent = 1.2;
inline constexpr double kView1Extent = 0.5;  // wrist crop side length

enum class ObjectKind { Disk, Peg, Container };
enum class ColorTag { Red, Green, Blue, White };

struct ObjectState {
  ObjectKind kind = ObjectKind::Disk;
  ColorTag color = ColorTag::Red;
  Vec2 position{0.0, 0.0};
  double orientation = 0.0;
  double size = kDiskRadius;  // radius (disk/peg thickness uses kPegRadius) or half extent
};

struct Interval {
  double lo = 0.0, hi = 0.0;
  double center() const { return 0.5 * (lo + hi); }
  double width() const { return hi - lo; }
  bool contains(double x) const { return x >= lo && x <= hi; }
};

struct GraspAttachment {
  Vec2 offset_ee{0.0, 0.0};  // object center in the EE frame
  double rel_orientation = 0.0;
};

struct Scene {
  kin::EmbodimentSpec spec;
  TaskKind task = TaskKind::PickDisk;
  kin::JointState joints;
  std::vector<ObjectState> objects;
  double table_z = 0.0;
  std::optional<Interval> target_region;
  std::optional<int> grasped;
  GraspAttachment attachment;
  uint64_t seed = 0;
  int step_count = 0;

  kin::EePose ee() const { return kin::forward_kinematics(spec, joints.angles); }

  nlohmann::ordered_json to_json() const;
  static Scene from_json(const nlohmann::json& j);
};

struct Observation {
  // cell (iy, ix) of channel c lives at (iy * kGrid + ix, c)
  Eigen::MatrixXd view0{Eigen::MatrixXd::Zero(kGrid * kGrid, kChannels)};
  Eigen::MatrixXd view1{Eigen::MatrixXd::Zero(kGrid * kGrid, kChannels)};
  Eigen::VectorXd proprio{Eigen::VectorXd::Zero(kMaxStateDim)};
  Eigen::VectorXd proprio_mask{Eigen::VectorXd::Zero(kMaxStateDim)};
};

kin::JointState home_joints(const kin::EmbodimentSpec& spec);

Scene reset(TaskKind task, const kin::EmbodimentSpec& spec, uint64_t seed);

std::pair<Scene, Observation> step(const Scene& scene, const Eigen::VectorXd& action);

bool is_success(const Scene& scene, TaskKind task);

Observation render_observation(const Scene& scene);

// 1-D overlap resolution along the table for a swept end-effector contact;
// returns the disk center x after contact, or nullopt when not in contact.
std::optional<double> resolve_push(const Vec2& ee, double ee_dx, const Vec2& disk_center,
                                   double disk_radius, double contact_radius);

// obstacles for planning: every object except `ignore_index`, discs sized to
// their footprint
kin::SceneGeometry planning_geometry(const Scene& scene, int ignore_index = -1);

// folded orientation distance from vertical, in [0, pi/2]
double peg_upright_error(double orientation);
double peg_rest_center_z(double table_z, double orientation);
double peg_lowest_z(const ObjectState& peg);

}  // namespace armflow::sim
