#pragma once

#include <string>
#include <vector>

#include "armflow/world2d.hpp"

namespace armflow::engine {

using sim::Scene;
using sim::TaskKind;

enum class PrimitiveKind { Approach, Grasp, Move, Release, PushStroke, Reorient };
std::string primitive_name(PrimitiveKind k);
inline constexpr int kPrimitiveKinds = 6;

// Targets are object-relative offsets (resolved by plan_keyposes) or
// absolute world positions.
struct Primitive {
  PrimitiveKind kind = PrimitiveKind::Approach;
  int object_index = -1;           // anchor object; -1 means absolute
  kin::Vec2 offset{0.0, 0.0};      // from the anchor center, or absolute position
  double orientation = -M_PI_2;    // EE orientation target when constrained
  bool constrain_orientation = false;
  bool cartesian = false;          // straight-line EE tracking instead of joint-space
  double gripper = 1.0;            // command held from this primitive on
};

struct Keypose {
  kin::EePose pose;
  double gripper = 1.0;
  bool constrain_orientation = false;
  bool cartesian = false;
  PrimitiveKind kind = PrimitiveKind::Approach;
  int dwell_steps = 0;  // extra steps at the pose (gripper transitions)
};

// dt-sampled joint trajectory with per-step gripper command and phase id
struct TimedTrajectory {
  std::vector<std::vector<double>> waypoints;
  std::vector<double> times;    // times[0] == 0, strictly increasing
  std::vector<double> gripper;  // command applied when moving TO waypoint i
  std::vector<int> phase;       // PrimitiveKind per step
};

struct PlanOptions {
  kin::IkOptions ik;
  int resample_attempts = 10;
  double resample_radius = 0.03;
  double vmax_frac = 0.8;  // of spec.max_joint_speed
  double amax = 6.0;       // rad/s^2 in joint-space norm
};

std::vector<Primitive> decompose_task(TaskKind task, const Scene& scene);

std::vector<Keypose> plan_keyposes(const std::vector<Primitive>& primitives, const Scene& scene);

// Keypose-to-keypose planning: IK + feasibility + deterministic resampling,
// joint-space path with trapezoidal timing, densified to the control rate.
TimedTrajectory plan_trajectory(const kin::EmbodimentSpec& spec,
                                const std::vector<Keypose>& keyposes, const Scene& scene,
                                const PlanOptions& opts, uint64_t seed, int target_object);

// Trapezoidal (or triangular) velocity profile over joint-space segments.
// Returns the input waypoints (zero-length segments collapsed) with times.
struct TimeParameterization {
  std::vector<std::vector<double>> waypoints;
  std::vector<double> times;
};
TimeParameterization smooth_time_parameterize(const std::vector<std::vector<double>>& waypoints,
                                              double vmax, double amax);

struct Episode {
  std::string embodiment;
  std::string task;
  uint64_t seed = 0;
  int length = 0;
  int target_object = 0;
  bool success = false;
  std::vector<Eigen::VectorXd> states;   // q_t ++ gripper, native dim, length T
  std::vector<Eigen::VectorXd> actions;  // joint deltas ++ gripper cmd, length T
  std::vector<int> phases;               // primitive kind per step
  std::vector<sim::Observation> observations;  // o_t, length T
  Scene final_scene;
};

Episode execute_plan(const Scene& start, const TimedTrajectory& traj, int target_object);

// Replays stored actions from the stored seed; checks state agreement and the
// success flag. max_state_err returns the worst absolute deviation seen.
struct ReplayResult {
  bool states_match = false;
  bool success_match = false;
  double max_state_err = 0.0;
  int feasibility_violations = 0;
  bool ok() const { return states_match && success_match && feasibility_violations == 0; }
};
ReplayResult replay_episode(const Episode& ep, double tol = 1e-9);

struct DatasetManifest {
  std::string dataset_id;  // "<task>_<embodiment>"
  std::string task;
  std::string embodiment;
  uint64_t seed = 0;
  struct EpisodeEntry {
    std::string dir;
    uint64_t seed;
    int length;
  };
  std::vector<EpisodeEntry> episodes;
  int64_t total_frames = 0;
  int attempts = 0;

  nlohmann::ordered_json to_json() const;
  static DatasetManifest from_json(const nlohmann::json& j);
};

struct CollectStats {
  int requested = 0;
  int stored = 0;
  int attempts = 0;
  std::vector<uint64_t> failed_seeds;
};

// Fig-5-style loop: reset -> decompose -> plan -> execute -> verify; only
// successful episodes are stored. Throws YieldTooLow below 50% yield.
DatasetManifest collect_dataset(TaskKind task, const kin::EmbodimentSpec& spec, int episodes,
                                uint64_t seed, const std::string& out_root,
                                CollectStats* stats = nullptr, int threads = 1);

void write_episode(const std::string& dir, const Episode& ep);
Episode read_episode(const std::string& dir, bool load_observations = false);

std::string dataset_dir_name(TaskKind task, const std::string& embodiment);
DatasetManifest read_manifest(const std::string& dataset_dir);

// In-memory training view: states/actions plus replayed per-step scenes so
// observation windows can be re-rendered on demand.
struct LoadedEpisode {
  Episode record;             // observations empty
  std::vector<Scene> scenes;  // scene before each step, length T (+ final in record)
};
struct LoadedDataset {
  DatasetManifest manifest;
  std::vector<LoadedEpisode> episodes;
};
LoadedDataset load_dataset(const std::string& dataset_dir);

}  // namespace armflow::engine
