#include "armflow/world2d.hpp"

#include <algorithm>
#include <cmath>

namespace armflow::sim {

const std::vector<TaskKind>& all_tasks() {
  static const std::vector<TaskKind> tasks = {TaskKind::PickDisk,  TaskKind::PullDisk,
                                              TaskKind::StackDisk, TaskKind::PushDisk,
                                              TaskKind::PlaceDisk, TaskKind::LiftPegUpright};
  return tasks;
}

std::string task_name(TaskKind t) {
  switch (t) {
    case TaskKind::PickDisk: return "pick_disk";
    case TaskKind::PullDisk: return "pull_disk";
    case TaskKind::StackDisk: return "stack_disk";
    case TaskKind::PushDisk: return "push_disk";
    case TaskKind::PlaceDisk: return "place_disk";
    case TaskKind::LiftPegUpright: return "lift_peg_upright";
  }
  throw UnknownTask("bad task enum");
}

TaskKind task_from_name(const std::string& name) {
  for (TaskKind t : all_tasks())
    if (task_name(t) == name) return t;
  throw UnknownTask("unknown task: " + name);
}

TaskParams task_params(TaskKind t) {
  TaskParams p;
  switch (t) {
    case TaskKind::PickDisk:
    case TaskKind::PushDisk:
    case TaskKind::PullDisk:
      p.max_steps = 120;
      break;
    case TaskKind::StackDisk:
    case TaskKind::PlaceDisk:
    case TaskKind::LiftPegUpright:
      p.max_steps = 200;
      break;
  }
  return p;
}

namespace {

const char* kind_name(ObjectKind k) {
  switch (k) {
    case ObjectKind::Disk: return "disk";
    case ObjectKind::Peg: return "peg";
    case ObjectKind::Container: return "container";
  }
  return "?";
}

ObjectKind kind_from_name(const std::string& s) {
  if (s == "disk") return ObjectKind::Disk;
  if (s == "peg") return ObjectKind::Peg;
  if (s == "container") return ObjectKind::Container;
  throw Error("bad object kind: " + s);
}

const char* color_name(ColorTag c) {
  switch (c) {
    case ColorTag::Red: return "red";
    case ColorTag::Green: return "green";
    case ColorTag::Blue: return "blue";
    case ColorTag::White: return "white";
  }
  return "?";
}

ColorTag color_from_name(const std::string& s) {
  if (s == "red") return ColorTag::Red;
  if (s == "green") return ColorTag::Green;
  if (s == "blue") return ColorTag::Blue;
  if (s == "white") return ColorTag::White;
  throw Error("bad color: " + s);
}

bool disk_on_table(const ObjectState& o, double table_z) {
  return o.kind == ObjectKind::Disk && std::abs(o.position.y() - (table_z + o.size)) < 1e-9;
}

// support height for a dropped disk: highest disk whose radius covers x, else table
double drop_height_for_disk(const Scene& scene, int self, double x) {
  double top = scene.table_z;
  for (int i = 0; i < int(scene.objects.size()); ++i) {
    if (i == self) continue;
    const auto& o = scene.objects[i];
    if (o.kind != ObjectKind::Disk) continue;
    if (scene.grasped && *scene.grasped == i) continue;
    if (std::abs(x - o.position.x()) <= o.size)
      top = std::max(top, o.position.y() + o.size);
  }
  return top;
}

}  // namespace

double peg_upright_error(double orientation) {
  double th = std::fmod(std::abs(orientation), M_PI);  // fold: peg has end symmetry
  return std::abs(th - M_PI_2);
}

double peg_rest_center_z(double table_z, double orientation) {
  const double s = std::abs(std::sin(orientation));
  const double c = std::abs(std::cos(orientation));
  return table_z + kPegHalfLen * s + kPegRadius * c;
}

double peg_lowest_z(const ObjectState& peg) {
  const double dz = std::abs(std::sin(peg.orientation)) * kPegHalfLen;
  return peg.position.y() - dz - kPegRadius * std::abs(std::cos(peg.orientation));
}

kin::JointState home_joints(const kin::EmbodimentSpec& spec) {
  kin::JointState js;
  js.angles.assign(spec.dof, -0.35);
  js.angles[0] = 1.2;
  js.gripper = 1.0;
  return js;
}

Scene reset(TaskKind task, const kin::EmbodimentSpec& spec, uint64_t seed) {
  spec.validate();
  Scene s;
  s.spec = spec;
  s.task = task;
  s.joints = home_joints(spec);
  s.table_z = 0.0;
  s.seed = seed;

  RngStream rng(Rng(seed).derive("reset").derive(task_name(task)).derive(spec.name));
  const TaskParams params = task_params(task);

  auto table_disk = [&](ColorTag color, double x) {
    ObjectState o;
    o.kind = ObjectKind::Disk;
    o.color = color;
    o.size = kDiskRadius;
    o.position = Vec2(x, s.table_z + kDiskRadius);
    o.orientation = kin::wrap_angle(rng.uniform(-M_PI, M_PI));
    return o;
  };

  switch (task) {
    case TaskKind::PickDisk: {
      s.objects.push_back(table_disk(ColorTag::Red, rng.uniform(0.30, 0.60)));
      break;
    }
    case TaskKind::PushDisk: {
      s.objects.push_back(table_disk(ColorTag::Red, rng.uniform(0.28, 0.42)));
      const double c = rng.uniform(0.55, 0.70);
      s.target_region = Interval{c - params.region_width / 2, c + params.region_width / 2};
      break;
    }
    case TaskKind::PullDisk: {
      s.objects.push_back(table_disk(ColorTag::Red, rng.uniform(0.55, 0.70)));
      const double c = rng.uniform(0.30, 0.42);
      s.target_region = Interval{c - params.region_width / 2, c + params.region_width / 2};
      break;
    }
    case TaskKind::StackDisk: {
      // rejection sampling kept for placement-contract conformance; these
      // intervals are disjoint so it succeeds on the first draw
      for (int attempt = 0;; ++attempt) {
        if (attempt >= 100) throw PlacementFailure("reset: overcrowded placement");
        ObjectState green = table_disk(ColorTag::Green, rng.uniform(0.30, 0.45));
        ObjectState red = table_disk(ColorTag::Red, rng.uniform(0.55, 0.70));
        if (std::abs(green.position.x() - red.position.x()) >= 2.2 * kDiskRadius) {
          s.objects.push_back(red);
          s.objects.push_back(green);
          break;
        }
      }
      break;
    }
    case TaskKind::PlaceDisk: {
      ObjectState box;
      box.kind = ObjectKind::Container;
      box.color = ColorTag::White;
      box.size = kContainerHalf;
      box.position = Vec2(rng.uniform(0.30, 0.42), s.table_z);
      s.objects.push_back(table_disk(ColorTag::Blue, rng.uniform(0.55, 0.70)));
      s.objects.push_back(box);
      break;
    }
    case TaskKind::LiftPegUpright: {
      ObjectState peg;
      peg.kind = ObjectKind::Peg;
      peg.color = ColorTag::Red;
      peg.size = kPegHalfLen;
      peg.orientation = 0.0;
      peg.position = Vec2(rng.uniform(0.35, 0.60), s.table_z + kPegRadius);
      s.objects.push_back(peg);
      break;
    }
  }
  return s;
}

std::optional<double> resolve_push(const Vec2& ee, double ee_dx, const Vec2& disk_center,
                                   double disk_radius, double contact_radius) {
  // side contact only: the EE must sit inside the disk's vertical half-radius
  // band, so vertical grasp approaches pass over the top without displacing it
  if (std::abs(ee.y() - disk_center.y()) > 0.5 * disk_radius) return std::nullopt;
  if (std::abs(ee.x() - disk_center.x()) >= contact_radius) return std::nullopt;
  double side = disk_center.x() - ee.x();
  if (side == 0.0) side = (ee_dx != 0.0) ? ee_dx : 1.0;
  return ee.x() + (side > 0.0 ? contact_radius : -contact_radius);
}

std::pair<Scene, Observation> step(const Scene& scene, const Eigen::VectorXd& action) {
  const auto& spec = scene.spec;
  if (int(action.size()) != spec.action_dim())
    throw ShapeMismatch("step: action dim != dof + 1");
  if (!action.allFinite()) throw NaNAction("step: non-finite action");

  Scene s = scene;
  const double max_delta = spec.max_joint_speed * kDt;
  std::vector<double> dq(spec.dof);
  double max_abs = 0.0;
  for (int i = 0; i < spec.dof; ++i) {
    dq[i] = std::clamp(action(i), -max_delta, max_delta);
    max_abs = std::max(max_abs, std::abs(dq[i]));
  }
  const double gripper_cmd = std::clamp(action(spec.dof), 0.0, 1.0);

  const int substeps =
      std::clamp(int(std::ceil(max_abs * spec.total_reach() / 0.008)), 1, 32);
  kin::EePose ee_prev = s.ee();
  for (int sub = 0; sub < substeps; ++sub) {
    for (int i = 0; i < spec.dof; ++i) {
      s.joints.angles[i] = std::clamp(s.joints.angles[i] + dq[i] / substeps,
                                      spec.joint_limits[i].first, spec.joint_limits[i].second);
    }
    const kin::EePose ee_now = s.ee();
    const Vec2 ee_pos(ee_now.x, ee_now.z);

    if (s.grasped) {
      auto& obj = s.objects[*s.grasped];
      const double c = std::cos(ee_now.orientation), sn = std::sin(ee_now.orientation);
      obj.position = ee_pos + Vec2(c * s.attachment.offset_ee.x() - sn * s.attachment.offset_ee.y(),
                                   sn * s.attachment.offset_ee.x() + c * s.attachment.offset_ee.y());
      obj.orientation = kin::wrap_angle(ee_now.orientation + s.attachment.rel_orientation);
    }

    const double ee_dx = ee_now.x - ee_prev.x;
    for (int i = 0; i < int(s.objects.size()); ++i) {
      if (s.grasped && *s.grasped == i) continue;
      auto& obj = s.objects[i];
      if (!disk_on_table(obj, s.table_z)) continue;
      if (auto nx = resolve_push(ee_pos, ee_dx, obj.position, obj.size, spec.grasp_radius))
        obj.position.x() = *nx;
    }
    ee_prev = ee_now;
  }

  // gripper transition after the motion
  const double prev_aperture = s.joints.gripper;
  if (prev_aperture >= 0.5 && gripper_cmd < 0.5 && !s.grasped) {
    const kin::EePose ee_now = s.ee();
    const Vec2 ee_pos(ee_now.x, ee_now.z);
    int best = -1;
    double best_dist = spec.grasp_radius;
    for (int i = 0; i < int(s.objects.size()); ++i) {
      const auto& obj = s.objects[i];
      if (obj.kind == ObjectKind::Container) continue;
      const double d = (obj.position - ee_pos).norm();
      if (d <= best_dist) {
        best_dist = d;
        best = i;
      }
    }
    if (best >= 0) {
      s.grasped = best;
      const auto& obj = s.objects[best];
      const double c = std::cos(-ee_now.orientation), sn = std::sin(-ee_now.orientation);
      const Vec2 rel = obj.position - ee_pos;
      s.attachment.offset_ee = Vec2(c * rel.x() - sn * rel.y(), sn * rel.x() + c * rel.y());
      s.attachment.rel_orientation = kin::wrap_angle(obj.orientation - ee_now.orientation);
    }
  } else if (prev_aperture < 0.5 && gripper_cmd >= 0.5 && s.grasped) {
    const int idx = *s.grasped;
    s.grasped.reset();
    auto& obj = s.objects[idx];
    if (obj.kind == ObjectKind::Peg) {
      if (peg_upright_error(obj.orientation) <= 0.3) {
        obj.position.y() = peg_rest_center_z(s.table_z, obj.orientation);
      } else {
        obj.orientation = 0.0;
        obj.position.y() = s.table_z + kPegRadius;
      }
    } else {
      const double support = drop_height_for_disk(s, idx, obj.position.x());
      obj.position.y() = support + obj.size;
      obj.orientation = kin::wrap_angle(obj.orientation);
    }
  }
  s.joints.gripper = gripper_cmd;
  s.step_count += 1;
  return {s, render_observation(s)};
}

bool is_success(const Scene& scene, TaskKind task) {
  const TaskParams p = task_params(task);
  switch (task) {
    case TaskKind::PickDisk: {
      if (!scene.grasped) return false;
      const auto& disk = scene.objects[*scene.grasped];
      return disk.color == ColorTag::Red &&
             disk.position.y() - disk.size >= scene.table_z + p.lift_threshold;
    }
    case TaskKind::PushDisk:
    case TaskKind::PullDisk: {
      if (!scene.target_region) return false;
      const auto& disk = scene.objects[0];
      if (scene.grasped && *scene.grasped == 0) return false;
      if (disk.position.y() - disk.size > scene.table_z + 1e-6) return false;
      return scene.target_region->contains(disk.position.x() - disk.size) &&
             scene.target_region->contains(disk.position.x() + disk.size);
    }
    case TaskKind::StackDisk: {
      int red = -1, green = -1;
      for (int i = 0; i < int(scene.objects.size()); ++i) {
        if (scene.objects[i].color == ColorTag::Red) red = i;
        if (scene.objects[i].color == ColorTag::Green) green = i;
      }
      if (red < 0 || green < 0) return false;
      if (scene.grasped && *scene.grasped == red) return false;
      if (scene.joints.gripper < 0.5) return false;
      const auto& r = scene.objects[red];
      const auto& g = scene.objects[green];
      const double stacked_z = g.position.y() + g.size + r.size;
      return std::abs(r.position.x() - g.position.x()) <= 0.6 * r.size &&
             std::abs(r.position.y() - stacked_z) <= 1e-6;
    }
    case TaskKind::PlaceDisk: {
      const auto& disk = scene.objects[0];
      const auto& box = scene.objects[1];
      if (scene.grasped && *scene.grasped == 0) return false;
      const Interval inside{box.position.x() - box.size, box.position.x() + box.size};
      return inside.contains(disk.position.x()) &&
             std::abs(disk.position.y() - (scene.table_z + disk.size)) <= 1e-6;
    }
    case TaskKind::LiftPegUpright: {
      const auto& peg = scene.objects[0];
      if (peg_upright_error(peg.orientation) > p.upright_tol) return false;
      return std::abs(peg_lowest_z(peg) - scene.table_z) <= 1e-3;
    }
  }
  return false;
}

namespace {

int channel_for(ColorTag c) {
  switch (c) {
    case ColorTag::Red: return 0;
    case ColorTag::Green: return 1;
    case ColorTag::Blue: return 2;
    case ColorTag::White: return 4;  // containers share the region channel
  }
  return 0;
}

// one-cell-wide soft edge; exactly translation equivariant in the cell pitch
double coverage(double signed_dist, double pitch) {
  return std::clamp(0.5 - signed_dist / pitch, 0.0, 1.0);
}

void render_view(const Scene& scene, double origin_x, double origin_z, double extent,
                 Eigen::MatrixXd& out) {
  const double pitch = extent / kGrid;
  const auto pts = kin::link_points(scene.spec, scene.joints.angles);
  for (int iy = 0; iy < kGrid; ++iy) {
    for (int ix = 0; ix < kGrid; ++ix) {
      const Vec2 p(origin_x + (ix + 0.5) * pitch, origin_z + (iy + 0.5) * pitch);
      const int row = iy * kGrid + ix;
      for (const auto& obj : scene.objects) {
        double v = 0.0;
        if (obj.kind == ObjectKind::Disk) {
          v = coverage((p - obj.position).norm() - obj.size, pitch);
        } else if (obj.kind == ObjectKind::Peg) {
          const Vec2 dir(std::cos(obj.orientation), std::sin(obj.orientation));
          const Vec2 a = obj.position - obj.size * dir;
          const Vec2 b = obj.position + obj.size * dir;
          v = coverage(kin::segment_point_distance(a, b, p) - kPegRadius, pitch);
        } else {
          // container: filled strip at table height
          const double dx = std::abs(p.x() - obj.position.x()) - obj.size;
          const double dz = std::abs(p.y() - (scene.table_z + 0.01)) - 0.01;
          v = coverage(std::max(dx, dz), pitch);
        }
        const int ch = channel_for(obj.color);
        out(row, ch) = std::max(out(row, ch), v);
      }
      for (size_t li = 0; li + 1 < pts.size(); ++li) {
        const double v =
            coverage(kin::segment_point_distance(pts[li], pts[li + 1], p) - 0.02, pitch);
        out(row, 3) = std::max(out(row, 3), v);
      }
      if (scene.target_region) {
        const double dx = std::max(scene.target_region->lo - p.x(),
                                   p.x() - scene.target_region->hi);
        const double dz = std::abs(p.y() - (scene.table_z + 0.01)) - 0.01;
        const double v = coverage(std::max(dx, dz), pitch);
        out(row, 4) = std::max(out(row, 4), v);
      }
    }
  }
}

}  // namespace

Observation render_observation(const Scene& scene) {
  Observation obs;
  render_view(scene, kView0Origin, kView0Origin, kView0Extent, obs.view0);
  const auto ee = scene.ee();
  render_view(scene, ee.x - kView1Extent / 2, ee.z - kView1Extent / 2, kView1Extent, obs.view1);
  for (int i = 0; i < scene.spec.dof; ++i) {
    obs.proprio(i) = scene.joints.angles[i];
    obs.proprio_mask(i) = 1.0;
  }
  obs.proprio(scene.spec.dof) = scene.joints.gripper;
  obs.proprio_mask(scene.spec.dof) = 1.0;
  return obs;
}

kin::SceneGeometry planning_geometry(const Scene& scene, int ignore_index) {
  kin::SceneGeometry geo;
  geo.table_z = scene.table_z;
  for (int i = 0; i < int(scene.objects.size()); ++i) {
    if (i == ignore_index) continue;
    if (scene.grasped && *scene.grasped == i) continue;
    const auto& o = scene.objects[i];
    if (o.kind == ObjectKind::Container) continue;  // flat, below link clearance
    const double r = (o.kind == ObjectKind::Peg) ? kPegRadius : o.size;
    geo.obstacles.push_back({o.position, r});
  }
  return geo;
}

nlohmann::ordered_json Scene::to_json() const {
  nlohmann::ordered_json j;
  j["spec"] = spec.to_json();
  j["task"] = task_name(task);
  j["joints"] = joints.angles;
  j["gripper"] = joints.gripper;
  j["table_z"] = table_z;
  j["seed"] = seed;
  j["step_count"] = step_count;
  nlohmann::ordered_json objs = nlohmann::ordered_json::array();
  for (const auto& o : objects) {
    nlohmann::ordered_json jo;
    jo["kind"] = kind_name(o.kind);
    jo["color"] = color_name(o.color);
    jo["position"] = {o.position.x(), o.position.y()};
    jo["orientation"] = o.orientation;
    jo["size"] = o.size;
    objs.push_back(jo);
  }
  j["objects"] = objs;
  if (target_region) j["target_region"] = {target_region->lo, target_region->hi};
  if (grasped) {
    j["grasped"] = *grasped;
    j["attachment"] = {attachment.offset_ee.x(), attachment.offset_ee.y(),
                       attachment.rel_orientation};
  }
  return j;
}

Scene Scene::from_json(const nlohmann::json& j) {
  Scene s;
  s.spec = kin::EmbodimentSpec::from_json(j.at("spec"));
  s.task = task_from_name(j.at("task").get<std::string>());
  s.joints.angles = j.at("joints").get<std::vector<double>>();
  s.joints.gripper = j.at("gripper").get<double>();
  s.table_z = j.at("table_z").get<double>();
  s.seed = j.at("seed").get<uint64_t>();
  s.step_count = j.at("step_count").get<int>();
  for (const auto& jo : j.at("objects")) {
    ObjectState o;
    o.kind = kind_from_name(jo.at("kind").get<std::string>());
    o.color = color_from_name(jo.at("color").get<std::string>());
    o.position = Vec2(jo.at("position").at(0).get<double>(), jo.at("position").at(1).get<double>());
    o.orientation = jo.at("orientation").get<double>();
    o.size = jo.at("size").get<double>();
    s.objects.push_back(o);
  }
  if (j.contains("target_region"))
    s.target_region =
        Interval{j["target_region"].at(0).get<double>(), j["target_region"].at(1).get<double>()};
  if (j.contains("grasped")) {
    s.grasped = j["grasped"].get<int>();
    s.attachment.offset_ee =
        Vec2(j["attachment"].at(0).get<double>(), j["attachment"].at(1).get<double>());
    s.attachment.rel_orientation = j["attachment"].at(2).get<double>();
  }
  return s;
}

}  // namespace armflow::sim
