#include "armflow/data_engine.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <thread>

namespace armflow::engine {

namespace fs = std::filesystem;

std::string primitive_name(PrimitiveKind k) {
  switch (k) {
    case PrimitiveKind::Approach: return "approach";
    case PrimitiveKind::Grasp: return "grasp";
    case PrimitiveKind::Move: return "move";
    case PrimitiveKind::Release: return "release";
    case PrimitiveKind::PushStroke: return "push_stroke";
    case PrimitiveKind::Reorient: return "reorient";
  }
  return "?";
}

namespace {

constexpr double kHoverZ = 0.14;
constexpr double kGraspClear = 0.02;   // EE above the object center when grasping
constexpr double kPushDz = 0.005;      // EE above disk center during strokes
constexpr double kCarryZ = 0.12;       // EE height when releasing above a target
constexpr double kRetreatZ = 0.20;
constexpr double kPegLiftZ = 0.25;
constexpr double kPlaceGap = 0.001;

Primitive approach(int obj, kin::Vec2 offset, bool constrain, bool cartesian = false) {
  Primitive p;
  p.kind = PrimitiveKind::Approach;
  p.object_index = obj;
  p.offset = offset;
  p.constrain_orientation = constrain;
  p.cartesian = cartesian;
  p.gripper = 1.0;
  return p;
}

Primitive move_abs(kin::Vec2 pos, double gripper, bool constrain, double orientation = -M_PI_2,
                   bool cartesian = false) {
  Primitive p;
  p.kind = PrimitiveKind::Move;
  p.object_index = -1;
  p.offset = pos;
  p.constrain_orientation = constrain;
  p.orientation = orientation;
  p.cartesian = cartesian;
  p.gripper = gripper;
  return p;
}

Primitive grasp_here() {
  Primitive p;
  p.kind = PrimitiveKind::Grasp;
  p.gripper = 0.0;
  return p;
}

Primitive release_here() {
  Primitive p;
  p.kind = PrimitiveKind::Release;
  p.gripper = 1.0;
  return p;
}

}  // namespace

std::vector<Primitive> decompose_task(TaskKind task, const Scene& scene) {
  const bool ori = scene.spec.dof >= 3;  // 2-dof arms cannot hold a wrist pose
  std::vector<Primitive> prims;
  switch (task) {
    case TaskKind::PickDisk: {
      const auto& disk = scene.objects[0];
      prims.push_back(approach(0, {0.0, kHoverZ - disk.position.y()}, false));
      prims.push_back(approach(0, {0.0, kGraspClear}, ori, /*cartesian=*/true));
      prims.push_back(grasp_here());
      prims.push_back(move_abs({disk.position.x(), 0.11}, 0.0, ori));
      break;
    }
    case TaskKind::PushDisk:
    case TaskKind::PullDisk: {
      const auto& disk = scene.objects[0];
      const double side = (task == TaskKind::PushDisk) ? -1.0 : 1.0;
      const double back = side * (scene.spec.grasp_radius + 0.02);
      prims.push_back(approach(0, {back, kHoverZ - disk.position.y()}, false));
      prims.push_back(approach(0, {back, kPushDz}, ori, /*cartesian=*/true));
      Primitive stroke;
      stroke.kind = PrimitiveKind::PushStroke;
      stroke.object_index = -1;
      const double goal = scene.target_region->center() + side * scene.spec.grasp_radius;
      stroke.offset = kin::Vec2(goal, disk.position.y() + kPushDz);
      stroke.constrain_orientation = ori;
      stroke.cartesian = true;  // the EE must stay in the contact band
      stroke.gripper = 1.0;
      prims.push_back(stroke);
      break;
    }
    case TaskKind::StackDisk: {
      const auto& red = scene.objects[0];
      const auto& green = scene.objects[1];
      prims.push_back(approach(0, {0.0, kHoverZ - red.position.y()}, false));
      prims.push_back(approach(0, {0.0, kGraspClear}, ori, /*cartesian=*/true));
      prims.push_back(grasp_here());
      prims.push_back(move_abs({red.position.x(), kHoverZ}, 0.0, ori));
      prims.push_back(move_abs({green.position.x(), kCarryZ}, 0.0, ori));
      prims.push_back(release_here());
      prims.push_back(move_abs({green.position.x(), kRetreatZ}, 1.0, false));
      break;
    }
    case TaskKind::PlaceDisk: {
      const auto& disk = scene.objects[0];
      const auto& box = scene.objects[1];
      prims.push_back(approach(0, {0.0, kHoverZ - disk.position.y()}, false));
      prims.push_back(approach(0, {0.0, kGraspClear}, ori, /*cartesian=*/true));
      prims.push_back(grasp_here());
      prims.push_back(move_abs({disk.position.x(), kHoverZ}, 0.0, ori));
      prims.push_back(move_abs({box.position.x(), kCarryZ}, 0.0, ori));
      prims.push_back(release_here());
      prims.push_back(move_abs({box.position.x(), kRetreatZ}, 1.0, false));
      break;
    }
    case TaskKind::LiftPegUpright: {
      const auto& peg = scene.objects[0];
      // stand the peg at a comfortable x: with wrist orientation 0 the last
      // link points +x, so small x folds the proximal pair past its elbow limit
      const double place_x = std::max(peg.position.x(), 0.55);
      prims.push_back(approach(0, {0.0, kHoverZ - peg.position.y()}, false));
      prims.push_back(approach(0, {0.0, kGraspClear}, ori, /*cartesian=*/true));
      prims.push_back(grasp_here());
      prims.push_back(move_abs({peg.position.x(), kPegLiftZ}, 0.0, ori));
      // rotate the wrist so the held peg swings upright
      Primitive reorient;
      reorient.kind = PrimitiveKind::Reorient;
      reorient.orientation = 0.0;  // from -pi/2: peg rotates +pi/2
      reorient.constrain_orientation = true;
      reorient.gripper = 0.0;
      prims.push_back(reorient);
      // transit horizontally first, then sink straight down; a diagonal would
      // drag the wrist point through the folded-elbow zone
      prims.push_back(move_abs({place_x - kGraspClear, kPegLiftZ}, 0.0, true, 0.0));
      // set the peg bottom on the table; held offset is (kGraspClear, 0) at
      // wrist orientation 0
      prims.push_back(move_abs({place_x - kGraspClear, sim::kPegHalfLen + kPlaceGap}, 0.0, true,
                               0.0, /*cartesian=*/true));
      prims.push_back(release_here());
      prims.push_back(move_abs({place_x - kGraspClear, kRetreatZ}, 1.0, false));
      break;
    }
  }
  return prims;
}

std::vector<Keypose> plan_keyposes(const std::vector<Primitive>& primitives, const Scene& scene) {
  std::vector<Keypose> kps;
  bool holding = false;
  for (const auto& p : primitives) {
    Keypose kp;
    kp.kind = p.kind;
    kp.gripper = p.gripper;
    kp.constrain_orientation = p.constrain_orientation;
    kp.cartesian = p.cartesian;
    switch (p.kind) {
      case PrimitiveKind::Approach:
      case PrimitiveKind::Move:
      case PrimitiveKind::PushStroke: {
        kin::Vec2 pos = p.offset;
        if (p.object_index >= 0) pos += scene.objects[p.object_index].position;
        kp.pose = kin::EePose{pos.x(), pos.y(), p.orientation};
        break;
      }
      case PrimitiveKind::Grasp: {
        if (kps.empty()) throw Error("plan_keyposes: grasp before approach");
        if (holding) throw Error("plan_keyposes: grasp while holding");
        kp.pose = kps.back().pose;
        kp.constrain_orientation = kps.back().constrain_orientation;
        kp.dwell_steps = 2;
        holding = true;
        break;
      }
      case PrimitiveKind::Release: {
        if (kps.empty() || !holding) throw Error("plan_keyposes: release while not holding");
        kp.pose = kps.back().pose;
        kp.constrain_orientation = kps.back().constrain_orientation;
        kp.dwell_steps = 2;
        holding = false;
        break;
      }
      case PrimitiveKind::Reorient: {
        if (kps.empty()) throw Error("plan_keyposes: reorient without a pose");
        kp.pose = kps.back().pose;
        kp.pose.orientation = p.orientation;
        kp.constrain_orientation = true;
        break;
      }
    }
    kps.push_back(kp);
  }
  return kps;
}

namespace {

double trapezoid_duration(double length, double vmax, double amax) {
  if (length <= 0.0) return 0.0;
  if (length >= vmax * vmax / amax) return length / vmax + vmax / amax;
  return 2.0 * std::sqrt(length / amax);
}

double trapezoid_position(double t, double length, double vmax, double amax) {
  const double total = trapezoid_duration(length, vmax, amax);
  t = std::clamp(t, 0.0, total);
  if (length >= vmax * vmax / amax) {
    const double t1 = vmax / amax;
    if (t < t1) return 0.5 * amax * t * t;
    if (t < total - t1) return vmax * t - 0.5 * vmax * vmax / amax;
    const double r = total - t;
    return length - 0.5 * amax * r * r;
  }
  const double tp = 0.5 * total;
  if (t < tp) return 0.5 * amax * t * t;
  const double r = total - t;
  return length - 0.5 * amax * r * r;
}

double joint_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double d2 = 0.0;
  for (size_t i = 0; i < a.size(); ++i) d2 += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(d2);
}

}  // namespace

TimeParameterization smooth_time_parameterize(const std::vector<std::vector<double>>& waypoints,
                                              double vmax, double amax) {
  if (vmax <= 0.0 || amax <= 0.0) throw Error("smooth_time_parameterize: vmax/amax must be > 0");
  TimeParameterization out;
  if (waypoints.empty()) return out;
  out.waypoints.push_back(waypoints[0]);
  out.times.push_back(0.0);
  for (size_t i = 1; i < waypoints.size(); ++i) {
    const double len = joint_distance(out.waypoints.back(), waypoints[i]);
    if (len <= 1e-12) continue;  // degenerate segment collapses into one waypoint
    out.waypoints.push_back(waypoints[i]);
    out.times.push_back(out.times.back() + trapezoid_duration(len, vmax, amax));
  }
  return out;
}

TimedTrajectory plan_trajectory(const kin::EmbodimentSpec& spec,
                                const std::vector<Keypose>& keyposes, const Scene& scene,
                                const PlanOptions& opts, uint64_t seed, int target_object) {
  const kin::SceneGeometry geometry = sim::planning_geometry(scene, target_object);
  const double vmax = opts.vmax_frac * spec.max_joint_speed;
  const Rng rng = Rng(seed).derive("plan");

  TimedTrajectory traj;
  traj.waypoints.push_back(scene.joints.angles);
  traj.times.push_back(0.0);
  traj.gripper.push_back(scene.joints.gripper);
  traj.phase.push_back(keyposes.empty() ? 0 : int(keyposes[0].kind));

  std::vector<double> cur = scene.joints.angles;
  double cur_gripper = scene.joints.gripper;

  for (size_t ki = 0; ki < keyposes.size(); ++ki) {
    const Keypose& kp = keyposes[ki];
    bool planned = false;
    std::string last_error = "ik";
    for (int attempt = 0; attempt <= opts.resample_attempts && !planned; ++attempt) {
      kin::EePose pose = kp.pose;
      if (attempt > 0) {
        // deterministic perturbation inside the resample ball
        const Rng ar = rng.derive(uint64_t(ki) * 64 + uint64_t(attempt));
        const double r = opts.resample_radius * std::sqrt(ar.uniform(0));
        const double phi = ar.uniform(1, -M_PI, M_PI);
        pose.x += r * std::cos(phi);
        pose.z += r * std::sin(phi);
      }
      kin::IkOptions ik = opts.ik;
      ik.constrain_orientation = kp.constrain_orientation;
      ik.seed = Rng::mix(seed ^ (uint64_t(ki) << 20) ^ uint64_t(attempt));

      const double step_limit = 0.8 * spec.max_joint_speed * sim::kDt;
      std::vector<std::vector<double>> samples;
      bool path_ok = true;
      std::vector<double> goal;

      if (kp.cartesian) {
        // straight-line end-effector tracking, one IK solve per control step
        const kin::EePose from = kin::forward_kinematics(spec, cur);
        const double dist = std::hypot(pose.x - from.x, pose.z - from.z);
        const double dori =
            kp.constrain_orientation ? kin::wrap_angle(pose.orientation - from.orientation) : 0.0;
        const int n = std::max(1, int(std::ceil(std::max(dist / 0.0075, std::abs(dori) / 0.06))));
        std::vector<double> prev = cur;
        for (int k = 1; k <= n && path_ok; ++k) {
          const double f = double(k) / n;
          kin::EePose sub{from.x + f * (pose.x - from.x), from.z + f * (pose.z - from.z),
                          kin::wrap_angle(from.orientation + f * dori)};
          kin::IkOptions sub_ik = ik;
          sub_ik.seed = Rng::mix(ik.seed ^ uint64_t(k));
          std::vector<double> q;
          try {
            q = kin::solve_ik(spec, sub, kin::JointState{prev, cur_gripper}, sub_ik).angles;
          } catch (const Error&) {
            path_ok = false;
            last_error = "ik unreachable";
            break;
          }
          if (!kin::check_feasible(spec, kin::JointState{q, cur_gripper}, geometry).ok()) {
            path_ok = false;
            last_error = "path infeasible";
            break;
          }
          // keep per-step joint motion inside the speed budget
          double max_dq = 0.0;
          for (int i = 0; i < spec.dof; ++i) max_dq = std::max(max_dq, std::abs(q[i] - prev[i]));
          const int sub_n = std::max(1, int(std::ceil(max_dq / step_limit)));
          for (int m = 1; m <= sub_n; ++m) {
            std::vector<double> qi(spec.dof);
            for (int i = 0; i < spec.dof; ++i)
              qi[i] = prev[i] + double(m) / sub_n * (q[i] - prev[i]);
            samples.push_back(std::move(qi));
          }
          prev = std::move(q);
        }
        if (path_ok) goal = prev;
      } else {
        try {
          goal = kin::solve_ik(spec, pose, kin::JointState{cur, cur_gripper}, ik).angles;
        } catch (const Error&) {
          last_error = "ik unreachable";
          continue;
        }
        if (!kin::check_feasible(spec, kin::JointState{goal, cur_gripper}, geometry).ok()) {
          last_error = "goal infeasible";
          continue;
        }
        // densify with the trapezoid profile, validating every sample
        const double len = joint_distance(cur, goal);
        if (len > 1e-12) {
          const double duration = trapezoid_duration(len, vmax, opts.amax);
          const int n = std::max(1, int(std::ceil(duration / sim::kDt)));
          samples.reserve(n);
          for (int k = 1; k <= n; ++k) {
            const double t = std::min(double(k) * sim::kDt, duration);
            const double frac = trapezoid_position(t, len, vmax, opts.amax) / len;
            std::vector<double> q(spec.dof);
            for (int i = 0; i < spec.dof; ++i) q[i] = cur[i] + frac * (goal[i] - cur[i]);
            if (!kin::check_feasible(spec, kin::JointState{q, cur_gripper}, geometry).ok()) {
              path_ok = false;
              break;
            }
            samples.push_back(std::move(q));
          }
        }
      }
      if (!path_ok) {
        if (last_error.empty()) last_error = "path infeasible";
        continue;
      }

      for (auto& q : samples) {
        traj.waypoints.push_back(std::move(q));
        traj.times.push_back(traj.times.back() + sim::kDt);
        traj.gripper.push_back(cur_gripper);  // gripper switches on arrival
        traj.phase.push_back(int(kp.kind));
      }
      for (int d = 0; d < std::max(kp.dwell_steps, kp.gripper != cur_gripper ? 1 : 0); ++d) {
        traj.waypoints.push_back(goal);
        traj.times.push_back(traj.times.back() + sim::kDt);
        traj.gripper.push_back(kp.gripper);
        traj.phase.push_back(int(kp.kind));
      }
      cur = goal;
      cur_gripper = kp.gripper;
      planned = true;
    }
    if (!planned)
      throw PlanningFailure("plan_trajectory: keypose " + std::to_string(ki) + " (" +
                            primitive_name(kp.kind) + "): " + last_error + " after " +
                            std::to_string(opts.resample_attempts) + " resamples");
  }
  return traj;
}

Episode execute_plan(const Scene& start, const TimedTrajectory& traj, int target_object) {
  Episode ep;
  ep.embodiment = start.spec.name;
  ep.task = task_name(start.task);
  ep.seed = start.seed;
  ep.target_object = target_object;

  Scene cur = start;
  sim::Observation obs = sim::render_observation(cur);
  const int dof = start.spec.dof;
  for (size_t t = 0; t + 1 < traj.waypoints.size(); ++t) {
    Eigen::VectorXd state(dof + 1);
    for (int i = 0; i < dof; ++i) state(i) = cur.joints.angles[i];
    state(dof) = cur.joints.gripper;

    Eigen::VectorXd action(dof + 1);
    for (int i = 0; i < dof; ++i) action(i) = traj.waypoints[t + 1][i] - cur.joints.angles[i];
    action(dof) = traj.gripper[t + 1];

    ep.states.push_back(state);
    ep.actions.push_back(action);
    ep.phases.push_back(traj.phase[t + 1]);
    ep.observations.push_back(obs);

    auto [next, next_obs] = sim::step(cur, action);
    cur = std::move(next);
    obs = std::move(next_obs);
  }
  ep.length = int(ep.actions.size());
  ep.success = sim::is_success(cur, start.task);
  ep.final_scene = std::move(cur);
  return ep;
}

ReplayResult replay_episode(const Episode& ep, double tol) {
  ReplayResult res;
  const auto task = sim::task_from_name(ep.task);
  const auto& spec_name = ep.embodiment;
  Scene cur = sim::reset(task, kin::embodiment_by_name(spec_name), ep.seed);
  const int dof = cur.spec.dof;
  res.states_match = true;
  for (int t = 0; t < ep.length; ++t) {
    for (int i = 0; i < dof; ++i)
      res.max_state_err =
          std::max(res.max_state_err, std::abs(cur.joints.angles[i] - ep.states[t](i)));
    res.max_state_err = std::max(res.max_state_err, std::abs(cur.joints.gripper - ep.states[t](dof)));

    kin::SceneGeometry geo = sim::planning_geometry(cur, ep.target_object);
    if (!kin::check_feasible(cur.spec, cur.joints, geo).ok()) ++res.feasibility_violations;

    cur = sim::step(cur, ep.actions[t]).first;
  }
  res.states_match = res.max_state_err <= tol;
  res.success_match = sim::is_success(cur, task) == ep.success;
  return res;
}

// ---------------------------------------------------------------------------
// dataset files

namespace {

void write_f32(const std::string& path, const double* data, size_t n) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  std::vector<float> buf(n);
  for (size_t i = 0; i < n; ++i) buf[i] = float(data[i]);
  out.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(n * sizeof(float)));
}

std::vector<float> read_f32(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() % sizeof(float) != 0) throw IoError("truncated f32 file: " + path);
  std::vector<float> out(bytes.size() / sizeof(float));
  std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << text;
}

}  // namespace

void write_episode(const std::string& dir, const Episode& ep) {
  fs::create_directories(dir);
  const int dof = int(ep.states[0].size()) - 1;

  nlohmann::ordered_json meta;
  meta["embodiment"] = ep.embodiment;
  meta["task"] = ep.task;
  meta["seed"] = ep.seed;
  meta["length"] = ep.length;
  meta["target_object"] = ep.target_object;
  meta["success"] = ep.success;
  meta["state_dim"] = dof + 1;
  meta["action_dim"] = dof + 1;
  meta["shapes"]["states"] = {ep.length, dof + 1};
  meta["shapes"]["actions"] = {ep.length, dof + 1};
  meta["shapes"]["obs"] = {ep.length, sim::kGrid, sim::kGrid, sim::kChannels};
  meta["phases"] = ep.phases;
  write_text(dir + "/meta.json", meta.dump(2) + "\n");

  std::vector<double> flat;
  flat.reserve(size_t(ep.length) * (dof + 1));
  for (const auto& s : ep.states)
    for (int i = 0; i <= dof; ++i) flat.push_back(s(i));
  write_f32(dir + "/states.f32", flat.data(), flat.size());

  flat.clear();
  for (const auto& a : ep.actions)
    for (int i = 0; i <= dof; ++i) flat.push_back(a(i));
  write_f32(dir + "/actions.f32", flat.data(), flat.size());

  const size_t cells = size_t(sim::kGrid) * sim::kGrid * sim::kChannels;
  std::vector<double> v0, v1;
  v0.reserve(size_t(ep.length) * cells);
  v1.reserve(size_t(ep.length) * cells);
  for (const auto& o : ep.observations) {
    v0.insert(v0.end(), o.view0.data(), o.view0.data() + cells);
    v1.insert(v1.end(), o.view1.data(), o.view1.data() + cells);
  }
  write_f32(dir + "/obs_v0.f32", v0.data(), v0.size());
  write_f32(dir + "/obs_v1.f32", v1.data(), v1.size());
}

Episode read_episode(const std::string& dir, bool load_observations) {
  std::ifstream in(dir + "/meta.json");
  if (!in) throw IoError("cannot read " + dir + "/meta.json");
  nlohmann::json meta;
  in >> meta;

  Episode ep;
  ep.embodiment = meta.at("embodiment").get<std::string>();
  ep.task = meta.at("task").get<std::string>();
  ep.seed = meta.at("seed").get<uint64_t>();
  ep.length = meta.at("length").get<int>();
  ep.target_object = meta.at("target_object").get<int>();
  ep.success = meta.at("success").get<bool>();
  ep.phases = meta.at("phases").get<std::vector<int>>();
  const int sd = meta.at("state_dim").get<int>();

  const auto states = read_f32(dir + "/states.f32");
  const auto actions = read_f32(dir + "/actions.f32");
  if (int(states.size()) != ep.length * sd || int(actions.size()) != ep.length * sd)
    throw IoError("episode data size mismatch in " + dir);
  for (int t = 0; t < ep.length; ++t) {
    Eigen::VectorXd s(sd), a(sd);
    for (int i = 0; i < sd; ++i) {
      s(i) = states[size_t(t) * sd + i];
      a(i) = actions[size_t(t) * sd + i];
    }
    ep.states.push_back(s);
    ep.actions.push_back(a);
  }
  if (load_observations) {
    const size_t cells = size_t(sim::kGrid) * sim::kGrid * sim::kChannels;
    const auto v0 = read_f32(dir + "/obs_v0.f32");
    const auto v1 = read_f32(dir + "/obs_v1.f32");
    for (int t = 0; t < ep.length; ++t) {
      sim::Observation o;
      for (size_t i = 0; i < cells; ++i) {
        o.view0.data()[i] = v0[size_t(t) * cells + i];
        o.view1.data()[i] = v1[size_t(t) * cells + i];
      }
      ep.observations.push_back(std::move(o));
    }
  }
  return ep;
}

std::string dataset_dir_name(TaskKind task, const std::string& embodiment) {
  return task_name(task) + "_" + embodiment;
}

nlohmann::ordered_json DatasetManifest::to_json() const {
  nlohmann::ordered_json j;
  j["dataset_id"] = dataset_id;
  j["task"] = task;
  j["embodiment"] = embodiment;
  j["seed"] = seed;
  j["total_frames"] = total_frames;
  j["attempts"] = attempts;
  nlohmann::ordered_json eps = nlohmann::ordered_json::array();
  for (const auto& e : episodes) {
    nlohmann::ordered_json je;
    je["dir"] = e.dir;
    je["seed"] = e.seed;
    je["length"] = e.length;
    eps.push_back(je);
  }
  j["episodes"] = eps;
  return j;
}

DatasetManifest DatasetManifest::from_json(const nlohmann::json& j) {
  DatasetManifest m;
  m.dataset_id = j.at("dataset_id").get<std::string>();
  m.task = j.at("task").get<std::string>();
  m.embodiment = j.at("embodiment").get<std::string>();
  m.seed = j.at("seed").get<uint64_t>();
  m.total_frames = j.at("total_frames").get<int64_t>();
  m.attempts = j.at("attempts").get<int>();
  for (const auto& je : j.at("episodes"))
    m.episodes.push_back({je.at("dir").get<std::string>(), je.at("seed").get<uint64_t>(),
                          je.at("length").get<int>()});
  return m;
}

DatasetManifest read_manifest(const std::string& dataset_dir) {
  std::ifstream in(dataset_dir + "/manifest.json");
  if (!in) throw IoError("cannot read " + dataset_dir + "/manifest.json");
  nlohmann::json j;
  in >> j;
  return DatasetManifest::from_json(j);
}

DatasetManifest collect_dataset(TaskKind task, const kin::EmbodimentSpec& spec, int episodes,
                                uint64_t seed, const std::string& out_root, CollectStats* stats,
                                int threads) {
  if (episodes < 1) throw Error("collect_dataset: episodes must be >= 1");
  const std::string dir = out_root + "/" + dataset_dir_name(task, spec.name);
  fs::create_directories(dir);

  DatasetManifest manifest;
  manifest.dataset_id = dataset_dir_name(task, spec.name);
  manifest.task = task_name(task);
  manifest.embodiment = spec.name;
  manifest.seed = seed;

  CollectStats local;
  local.requested = episodes;
  const int max_attempts = std::max(2 * episodes, 20);
  const int block = 16;

  auto run_attempt = [&](int attempt) -> std::optional<Episode> {
    const uint64_t ep_seed = Rng::mix(seed ^ Rng::mix(uint64_t(attempt)));
    try {
      Scene scene = sim::reset(task, spec, ep_seed);
      const auto prims = decompose_task(task, scene);
      const auto keyposes = plan_keyposes(prims, scene);
      PlanOptions opts;
      const auto traj = plan_trajectory(spec, keyposes, scene, opts, ep_seed, /*target=*/0);
      Episode ep = execute_plan(scene, traj, /*target=*/0);
      if (!ep.success || ep.length > sim::task_params(task).max_steps) return std::nullopt;
      return ep;
    } catch (const PlanningFailure&) {
      return std::nullopt;
    } catch (const PlacementFailure&) {
      return std::nullopt;
    }
  };

  int stored = 0;
  for (int base = 0; base < max_attempts && stored < episodes; base += block) {
    const int count = std::min(block, max_attempts - base);
    std::vector<std::optional<Episode>> results(count);
    if (threads <= 1) {
      for (int k = 0; k < count; ++k) results[k] = run_attempt(base + k);
    } else {
      std::vector<std::thread> pool;
      std::atomic<int> next{0};
      for (int w = 0; w < threads; ++w)
        pool.emplace_back([&]() {
          for (int k = next.fetch_add(1); k < count; k = next.fetch_add(1))
            results[k] = run_attempt(base + k);
        });
      for (auto& th : pool) th.join();
    }
    for (int k = 0; k < count && stored < episodes; ++k) {
      local.attempts = base + k + 1;
      const uint64_t ep_seed = Rng::mix(seed ^ Rng::mix(uint64_t(base + k)));
      if (!results[k]) {
        local.failed_seeds.push_back(ep_seed);
        continue;
      }
      char name[32];
      std::snprintf(name, sizeof(name), "episode_%03d", stored);
      write_episode(dir + "/" + name, *results[k]);
      manifest.episodes.push_back({name, results[k]->seed, results[k]->length});
      manifest.total_frames += results[k]->length;
      ++stored;
    }
  }
  local.stored = stored;
  manifest.attempts = local.attempts;
  if (stats) *stats = local;
  if (stored < episodes)
    throw YieldTooLow("collect_dataset: " + manifest.dataset_id + " yielded " +
                      std::to_string(stored) + "/" + std::to_string(local.attempts) +
                      " successful episodes");
  write_text(dir + "/manifest.json", manifest.to_json().dump(2) + "\n");
  return manifest;
}

LoadedDataset load_dataset(const std::string& dataset_dir) {
  LoadedDataset out;
  out.manifest = read_manifest(dataset_dir);
  const auto task = sim::task_from_name(out.manifest.task);
  const auto& spec = kin::embodiment_by_name(out.manifest.embodiment);
  for (const auto& entry : out.manifest.episodes) {
    LoadedEpisode le;
    le.record = read_episode(dataset_dir + "/" + entry.dir, /*load_observations=*/false);
    Scene cur = sim::reset(task, spec, le.record.seed);
    for (int t = 0; t < le.record.length; ++t) {
      le.scenes.push_back(cur);
      cur = sim::step(cur, le.record.actions[t]).first;
    }
    le.record.final_scene = std::move(cur);
    out.episodes.push_back(std::move(le));
  }
  return out;
}

}  // namespace armflow::engine
