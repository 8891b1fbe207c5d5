// Copyright 2026 The hwbc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Toy closed-loop plant at 50 Hz. Each joint is a PD-driven second-order
// system behind a first-order actuator lag:
//
//   u ← u + (dt/lag)·(a + offset − u)
//   θ̈ = (Kp(u − θ) − Kd·θ̇ − c·θ̇) / inertia + bias
//   θ̇ ← θ̇ + dt·θ̈,  θ ← θ + dt·θ̇          (semi-implicit Euler)
//
// The base moves kinematically in the plane, following a commanded body
// velocity with a first-order response plus decaying push velocities. Roll
// and pitch are damped oscillators excited by base acceleration and by the
// reaction of the leg joints.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hwbc/core.hpp"
#include "hwbc/error.hpp"
#include "hwbc/io.hpp"
#include "hwbc/metrics.hpp"
#include "hwbc/model.hpp"

namespace hwbc {

enum class RandMode { kReset, kStartup, kInterval };

inline std::string rand_mode_name(RandMode m) {
  switch (m) {
    case RandMode::kReset: return "reset";
    case RandMode::kStartup: return "startup";
    case RandMode::kInterval: return "interval";
  }
  return "";
}

struct RandomizationEntry {
  RandMode mode = RandMode::kReset;
  std::string parameter;
  double lo = 0.0;
  double hi = 0.0;
  double period_lo = 0.0;  // s, interval entries only
  double period_hi = 0.0;
};

// Parameter names understood by ToyEnv, with the mode each must use.
inline const std::vector<std::pair<std::string, RandMode>>& randomization_parameters() {
  static const std::vector<std::pair<std::string, RandMode>> names = {
      {"base_lin_vel", RandMode::kReset},
      {"base_ang_vel", RandMode::kReset},
      {"joint_pos_scale", RandMode::kReset},
      {"joint_vel", RandMode::kReset},
      {"base_torque", RandMode::kReset},
      {"ankle_static_friction", RandMode::kStartup},
      {"ankle_dynamic_friction", RandMode::kStartup},
      {"ankle_restitution", RandMode::kStartup},
      {"link_mass_scale", RandMode::kStartup},
      {"base_mass_add", RandMode::kStartup},
      {"armature_scale", RandMode::kStartup},
      {"default_joint_offset", RandMode::kStartup},
      {"push_velocity", RandMode::kInterval},
  };
  return names;
}

struct RandomizationConfig {
  std::vector<RandomizationEntry> entries;

  // Ranges used for the teacher/student benchmark.
  static RandomizationConfig standard() {
    using M = RandMode;
    return {{
        {M::kReset, "base_lin_vel", -0.5, 0.5},
        {M::kReset, "base_ang_vel", -0.5, 0.5},
        {M::kReset, "joint_pos_scale", 0.5, 1.5},
        {M::kReset, "joint_vel", 0.0, 0.0},
        {M::kStartup, "ankle_static_friction", 0.2, 0.6},
        {M::kStartup, "ankle_dynamic_friction", 0.2, 0.6},
        {M::kStartup, "ankle_restitution", 0.0, 0.4},
        {M::kStartup, "link_mass_scale", 0.9, 1.1},
        {M::kStartup, "base_mass_add", -1.0, 1.0},
        {M::kStartup, "armature_scale", 0.8, 1.2},
        {M::kStartup, "default_joint_offset", -0.05, 0.05},
        {M::kReset, "base_torque", -5.0, 5.0},
        {M::kInterval, "push_velocity", -1.0, 1.0, 10.0, 15.0},
    }};
  }

  // Every parameter pinned to its nominal value and no pushes.
  static RandomizationConfig nominal() {
    using M = RandMode;
    return {{
        {M::kReset, "joint_pos_scale", 1.0, 1.0},
        {M::kStartup, "ankle_static_friction", 0.4, 0.4},
        {M::kStartup, "ankle_dynamic_friction", 0.4, 0.4},
    }};
  }

  const RandomizationEntry* find(const std::string& name) const {
    for (const auto& e : entries)
      if (e.parameter == name) return &e;
    return nullptr;
  }

  void validate() const {
    for (const auto& e : entries) {
      const auto& known = randomization_parameters();
      const auto it = std::find_if(known.begin(), known.end(),
                                   [&](const auto& k) { return k.first == e.parameter; });
      require(it != known.end(), "unknown randomization parameter '" + e.parameter + "'");
      require(it->second == e.mode, "randomization parameter '" + e.parameter +
                                        "' must use mode " + rand_mode_name(it->second));
      require(std::isfinite(e.lo) && std::isfinite(e.hi) && e.lo <= e.hi,
              "randomization range for '" + e.parameter + "' must satisfy lo <= hi");
      if (e.mode == RandMode::kInterval)
        require(e.period_lo > 0.0 && e.period_lo <= e.period_hi,
                "interval period for '" + e.parameter + "' must satisfy 0 < lo <= hi");
      const auto count = std::count_if(entries.begin(), entries.end(),
                                       [&](const auto& o) { return o.parameter == e.parameter; });
      require(count == 1, "randomization parameter '" + e.parameter + "' listed twice");
    }
  }
};

inline io::Json randomization_to_json(const RandomizationConfig& c) {
  io::Json rows = io::Json::array();
  for (const auto& e : c.entries) {
    io::Json r = {{"mode", rand_mode_name(e.mode)},
                  {"parameter", e.parameter},
                  {"range", {e.lo, e.hi}}};
    if (e.mode == RandMode::kInterval) r["period"] = {e.period_lo, e.period_hi};
    rows.push_back(std::move(r));
  }
  return {{"schema", io::schema_tag("randomization")}, {"entries", rows}};
}

inline RandomizationConfig randomization_from_json(const io::Json& j) {
  io::check_schema(j, "randomization");
  RandomizationConfig c;
  for (const auto& r : io::field(j, "entries")) {
    RandomizationEntry e;
    const auto mode = io::get<std::string>(r, "mode");
    if (mode == "reset") e.mode = RandMode::kReset;
    else if (mode == "startup") e.mode = RandMode::kStartup;
    else if (mode == "interval") e.mode = RandMode::kInterval;
    else throw InputError("unknown randomization mode '" + mode + "'");
    e.parameter = io::get<std::string>(r, "parameter");
    const auto range = io::get<std::vector<double>>(r, "range");
    require(range.size() == 2, "randomization range must have two entries");
    e.lo = range[0];
    e.hi = range[1];
    if (e.mode == RandMode::kInterval) {
      const auto period = io::get<std::vector<double>>(r, "period");
      require(period.size() == 2, "randomization period must have two entries");
      e.period_lo = period[0];
      e.period_hi = period[1];
    }
    c.entries.push_back(std::move(e));
  }
  c.validate();
  return c;
}

struct DynamicsConfig {
  double kp = 400.0;            // 1/s² per rad, at unit inertia
  double kd = 40.0;             // 1/s
  double damping = 1.0;         // passive joint damping, 1/s
  double lag = 0.04;            // actuator time constant, s
  double base_response = 0.3;   // s, at nominal base mass
  double base_mass = 10.0;      // kg
  double base_yaw_inertia = 10.0;  // kg·m²
  double push_decay = 0.5;      // s
  double tilt_stiffness = 40.0;    // 1/s²
  double tilt_damping = 8.0;       // 1/s
  double tilt_accel_gain = 0.02;   // rad/s² per m/s²
  double tilt_joint_gain = 0.005;  // rad/s² per rad/s² of leg joints
  double friction_bias_gain = 20.0;  // rad/s² per unit static−dynamic friction

  void validate() const {
    require(kp >= 0.0 && kd >= 0.0 && damping >= 0.0, "dynamics: gains must be non-negative");
    require(lag >= kControlDt, "dynamics: actuator lag must be at least one control step");
    require(base_response > 0.0 && base_mass > 0.0 && base_yaw_inertia > 0.0 &&
                push_decay > 0.0,
            "dynamics: base constants must be positive");
    require(tilt_stiffness > 0.0 && tilt_damping > 0.0, "dynamics: tilt constants must be positive");
  }
};

// Values the teacher may read but the student never observes.
struct PlantParams {
  Vector kp, kd, damping, inertia, bias, offset;
  double lag = 0.04;
  double base_response = 0.3;
  double yaw_accel = 0.0;  // rad/s² from the reset base torque
  double tilt_damping = 8.0;
};

struct BaseCommand {
  double vx = 0.0;        // m/s, body frame
  double vy = 0.0;
  double yaw_rate = 0.0;  // rad/s
};

struct SimState {
  int step = 0;
  Vector theta, theta_dot, theta_ddot, torque, actuator;  // actuator = lagged target u
  Vector action, prev_action;
  Vec3 base_pos = Vec3::Zero();
  double yaw = 0.0;
  Eigen::Vector2d track_vel = Eigen::Vector2d::Zero();  // body frame
  Eigen::Vector2d push_vel = Eigen::Vector2d::Zero();   // world frame
  Eigen::Vector2d last_push = Eigen::Vector2d::Zero();
  double yaw_rate = 0.0;
  double roll = 0.0, pitch = 0.0, roll_rate = 0.0, pitch_rate = 0.0;
  double next_push_time = 0.0;  // s; infinite when pushes are off
  Eigen::Vector2d base_accel = Eigen::Vector2d::Zero();  // world xy, last step

  double time() const { return step * kControlDt; }
};

inline Mat3 base_rotation(const SimState& s) {
  return (Eigen::AngleAxisd(s.yaw, Vec3::UnitZ()) * Eigen::AngleAxisd(s.pitch, Vec3::UnitY()) *
          Eigen::AngleAxisd(s.roll, Vec3::UnitX()))
      .toRotationMatrix();
}

class ToyEnv {
 public:
  // Startup entries are drawn here, once, from `env_seed`.
  ToyEnv(RobotModel model, DynamicsConfig dyn, RandomizationConfig rand, std::uint64_t env_seed)
      : model_(std::move(model)), dyn_(dyn), rand_(std::move(rand)) {
    model_.validate();
    dyn_.validate();
    rand_.validate();
    const int n = model_.num_joints();
    Rng rng(env_seed);
    const auto draw = [&](const char* name, double fallback) {
      const RandomizationEntry* e = rand_.find(name);
      return e ? rng.uniform(e->lo, e->hi) : fallback;
    };
    const auto draw_vec = [&](const char* name, double fallback) {
      Vector v(n);
      for (int j = 0; j < n; ++j) v[j] = draw(name, fallback);
      return v;
    };
    startup_.static_friction = draw("ankle_static_friction", 0.4);
    startup_.dynamic_friction = draw("ankle_dynamic_friction", 0.4);
    startup_.restitution = draw("ankle_restitution", 0.0);
    startup_.link_mass = draw_vec("link_mass_scale", 1.0);
    startup_.base_mass_add = draw("base_mass_add", 0.0);
    startup_.armature = draw_vec("armature_scale", 1.0);
    startup_.joint_offset = draw_vec("default_joint_offset", 0.0);

    p_.kp = Vector::Constant(n, dyn_.kp);
    p_.kd = Vector::Constant(n, dyn_.kd);
    p_.damping = Vector::Constant(n, dyn_.damping);
    p_.inertia = startup_.link_mass.cwiseProduct(startup_.armature);
    p_.bias = Vector::Zero(n);
    for (int j = 0; j < n; ++j)
      if (model_.joints[j].group == JointGroup::kLeg)
        p_.bias[j] = dyn_.friction_bias_gain *
                     (startup_.static_friction - startup_.dynamic_friction);
    p_.offset = startup_.joint_offset;
    p_.lag = dyn_.lag;
    p_.base_response =
        dyn_.base_response * (dyn_.base_mass + startup_.base_mass_add) / dyn_.base_mass;
    p_.tilt_damping = dyn_.tilt_damping * (1.0 - startup_.restitution);

    // Tilt coupling: sagittal joints drive pitch, sign-flipped joints roll.
    pitch_coupling_ = Vector::Zero(n);
    roll_coupling_ = Vector::Zero(n);
    for (int j = 0; j < n; ++j) {
      if (model_.joints[j].group == JointGroup::kOther) continue;
      (model_.mirror_sign[j] < 0 ? roll_coupling_ : pitch_coupling_)[j] = 1.0;
    }
    for (int k = 0; k < model_.num_keypoints(); ++k)
      if (model_.keypoints[k].name.find("foot") != std::string::npos) feet_.push_back(k);
    reset(env_seed);
  }

  struct StartupSample {
    double static_friction = 0.4, dynamic_friction = 0.4, restitution = 0.0;
    Vector link_mass, armature, joint_offset;
    double base_mass_add = 0.0;
  };
  struct ResetSample {
    Vector joint_pos_scale;
    Eigen::Vector2d lin_vel = Eigen::Vector2d::Zero();
    Vec3 ang_vel = Vec3::Zero();
    double base_torque = 0.0;
  };

  const RobotModel& model() const { return model_; }
  const DynamicsConfig& dynamics() const { return dyn_; }
  const PlantParams& privileged() const { return p_; }
  const StartupSample& startup_sample() const { return startup_; }
  const ResetSample& reset_sample() const { return reset_; }
  const SimState& state() const { return s_; }
  SimState& mutable_state() { return s_; }
  const std::vector<int>& feet() const { return feet_; }
  int num_joints() const { return model_.num_joints(); }
  int obs_dim() const { return 9 + 2 * num_joints(); }

  const SimState& reset(std::uint64_t seed) {
    const int n = num_joints();
    Rng rng(seed);
    const auto draw = [&](const char* name, double fallback) {
      const RandomizationEntry* e = rand_.find(name);
      return e ? rng.uniform(e->lo, e->hi) : fallback;
    };
    reset_.joint_pos_scale.resize(n);
    for (int j = 0; j < n; ++j) reset_.joint_pos_scale[j] = draw("joint_pos_scale", 1.0);
    reset_.lin_vel = {draw("base_lin_vel", 0.0), draw("base_lin_vel", 0.0)};
    reset_.ang_vel = Vec3(draw("base_ang_vel", 0.0), draw("base_ang_vel", 0.0),
                          draw("base_ang_vel", 0.0));
    reset_.base_torque = draw("base_torque", 0.0);
    const double joint_vel = draw("joint_vel", 0.0);

    s_ = SimState{};
    s_.theta = clamp_to_limits(model_.default_angles().cwiseProduct(reset_.joint_pos_scale), model_);
    s_.theta_dot = Vector::Constant(n, joint_vel);
    s_.theta_ddot = Vector::Zero(n);
    s_.torque = Vector::Zero(n);
    s_.actuator = s_.theta;
    s_.action = s_.theta;
    s_.prev_action = s_.theta;
    s_.track_vel = reset_.lin_vel;
    s_.roll_rate = reset_.ang_vel.x();
    s_.pitch_rate = reset_.ang_vel.y();
    s_.yaw_rate = reset_.ang_vel.z();
    p_.yaw_accel = reset_.base_torque / dyn_.base_yaw_inertia;
    push_rng_ = rng.split(1);
    s_.next_push_time = schedule_push(0.0);
    prev_keypoints_ = world_keypoints();
    return s_;
  }

  // One 50 Hz control step. `action` holds desired joint positions (rad).
  const SimState& step(const Eigen::Ref<const Vector>& action, const BaseCommand& cmd = {}) {
    const int n = num_joints();
    require(action.size() == n, "step: action has wrong dimension");
    require(all_finite(action), "step: action is not finite");
    const double dt = kControlDt;
    prev_keypoints_ = world_keypoints();

    s_.prev_action = s_.action;
    s_.action = clamp_to_limits(action, model_);
    s_.actuator += (dt / p_.lag) * (s_.action + p_.offset - s_.actuator);
    s_.torque = p_.kp.cwiseProduct(s_.actuator - s_.theta) - p_.kd.cwiseProduct(s_.theta_dot);
    s_.theta_ddot =
        (s_.torque - p_.damping.cwiseProduct(s_.theta_dot)).cwiseQuotient(p_.inertia) + p_.bias;
    s_.theta_dot += dt * s_.theta_ddot;
    s_.theta += dt * s_.theta_dot;
    for (int j = 0; j < n; ++j) {
      const Joint& jt = model_.joints[j];
      if (s_.theta[j] < jt.lower || s_.theta[j] > jt.upper) {
        s_.theta[j] = std::clamp(s_.theta[j], jt.lower, jt.upper);
        s_.theta_dot[j] = 0.0;
      }
    }

    // Base: first-order velocity tracking plus decaying pushes.
    const Eigen::Vector2d before = world_velocity();
    const double a = dt / p_.base_response;
    s_.track_vel += a * (Eigen::Vector2d(cmd.vx, cmd.vy) - s_.track_vel);
    s_.yaw_rate += a * (cmd.yaw_rate - s_.yaw_rate) + dt * p_.yaw_accel;
    s_.push_vel *= std::exp(-dt / dyn_.push_decay);
    s_.last_push.setZero();
    ++s_.step;
    if (s_.time() >= s_.next_push_time - 1e-9) {
      const RandomizationEntry* e = rand_.find("push_velocity");
      s_.last_push = {push_rng_.uniform(e->lo, e->hi), push_rng_.uniform(e->lo, e->hi)};
      s_.push_vel += s_.last_push;
      s_.next_push_time = schedule_push(s_.time());
    }
    s_.yaw += dt * s_.yaw_rate;
    const Eigen::Vector2d v = world_velocity();
    s_.base_pos.head<2>() += dt * v;
    s_.base_accel = (v - before) / dt;

    // Tilt, in the heading frame.
    const Eigen::Rotation2Dd heading(-s_.yaw);
    const Eigen::Vector2d acc_body = heading * s_.base_accel;
    const double pitch_acc = -dyn_.tilt_stiffness * s_.pitch - p_.tilt_damping * s_.pitch_rate +
                             dyn_.tilt_accel_gain * acc_body.x() -
                             dyn_.tilt_joint_gain * pitch_coupling_.dot(s_.theta_ddot);
    const double roll_acc = -dyn_.tilt_stiffness * s_.roll - p_.tilt_damping * s_.roll_rate -
                            dyn_.tilt_accel_gain * acc_body.y() -
                            dyn_.tilt_joint_gain * roll_coupling_.dot(s_.theta_ddot);
    s_.pitch_rate += dt * pitch_acc;
    s_.roll_rate += dt * roll_acc;
    s_.pitch += dt * s_.pitch_rate;
    s_.roll += dt * s_.roll_rate;
    return s_;
  }

  Eigen::Vector2d world_velocity() const {
    return Eigen::Rotation2Dd(s_.yaw) * s_.track_vel + s_.push_vel;
  }

  Vec3 projected_gravity() const { return base_rotation(s_).transpose() * Vec3(0.0, 0.0, -1.0); }

  Vec3 base_lin_vel() const {
    const Eigen::Vector2d v = world_velocity();
    return base_rotation(s_).transpose() * Vec3(v.x(), v.y(), 0.0);
  }

  Vec3 base_ang_vel() const { return Vec3(s_.roll_rate, s_.pitch_rate, s_.yaw_rate); }

  // [base linear velocity, base angular velocity, projected gravity, θ, θ̇].
  Vector observe() const {
    Vector o(obs_dim());
    o << base_lin_vel(), base_ang_vel(), projected_gravity(), s_.theta, s_.theta_dot;
    return o;
  }

  // Keypoints in the base frame.
  Eigen::MatrixX3d body_keypoints() const { return keypoint_positions(model_, s_.theta); }

  // Keypoints in the world frame (planar base pose, tilt ignored).
  Eigen::MatrixX3d world_keypoints() const {
    const Mat3 r = Eigen::AngleAxisd(s_.yaw, Vec3::UnitZ()).toRotationMatrix();
    Eigen::MatrixX3d p = body_keypoints() * r.transpose();
    p.rowwise() += s_.base_pos.transpose();
    return p;
  }

  // Metric state. Foot forces are synthesized: the lower foot carries the
  // body weight, both share it when level within 2 cm.
  RobotState robot_state() const {
    RobotState r = RobotState::at_rest(num_joints(), model_.num_keypoints(),
                                       static_cast<int>(feet_.size()));
    r.root_lin_vel = base_lin_vel();
    r.root_ang_vel = base_ang_vel();
    r.projected_gravity = projected_gravity();
    r.joint_pos = s_.theta;
    r.joint_vel = s_.theta_dot;
    r.joint_acc = s_.theta_ddot;
    r.joint_torque = s_.torque;
    r.action = s_.action;
    r.prev_action = s_.prev_action;
    r.keypoints = body_keypoints();
    const Eigen::MatrixX3d world = world_keypoints();
    const double weight = (dyn_.base_mass + startup_.base_mass_add) * 9.81;
    double lowest = 1e300;
    for (int f : feet_) lowest = std::min(lowest, r.keypoints(f, 2));
    int loaded = 0;
    for (int f : feet_) loaded += r.keypoints(f, 2) <= lowest + 0.02;
    for (std::size_t i = 0; i < feet_.size(); ++i) {
      const int f = feet_[i];
      r.foot_force[i] = r.keypoints(f, 2) <= lowest + 0.02 ? weight / loaded : 0.0;
      r.foot_vel_xy.row(i) =
          (world.row(f).head<2>() - prev_keypoints_.row(f).head<2>()) / kControlDt;
    }
    return r;
  }

 private:
  double schedule_push(double now) {
    const RandomizationEntry* e = rand_.find("push_velocity");
    if (!e) return std::numeric_limits<double>::infinity();
    return now + push_rng_.uniform(e->period_lo, e->period_hi);
  }

  RobotModel model_;
  DynamicsConfig dyn_;
  RandomizationConfig rand_;
  PlantParams p_;
  StartupSample startup_;
  ResetSample reset_;
  SimState s_;
  Rng push_rng_;
  Vector pitch_coupling_, roll_coupling_;
  std::vector<int> feet_;
  Eigen::MatrixX3d prev_keypoints_;
};

// Privileged tracking controller. It picks the joint acceleration that puts
// θ on r_next + ρ·(θ − r_now) after the step, then inverts the PD law and
// the actuator lag with the env's true parameters. Without saturation the
// tracking error contracts by ρ every step.
struct TeacherConfig {
  double contraction = 0.8;  // ρ in [0, 1)

  void validate() const {
    require(contraction >= 0.0 && contraction < 1.0, "teacher: contraction must lie in [0, 1)");
  }
};

inline Vector teacher_oracle(const ToyEnv& env, const Eigen::Ref<const Vector>& ref_now,
                             const Eigen::Ref<const Vector>& ref_next,
                             const TeacherConfig& cfg = {}) {
  const int n = env.num_joints();
  require(ref_now.size() == n && ref_next.size() == n, "teacher: reference has wrong dimension");
  require(all_finite(ref_now) && all_finite(ref_next), "teacher: reference is not finite");
  const SimState& s = env.state();
  const PlantParams& p = env.privileged();
  require((p.kp.array() > 0.0).all(), "teacher: needs positive position gains");
  const double dt = kControlDt;
  const Vector goal = ref_next + cfg.contraction * (s.theta - ref_now);
  const Vector acc = (goal - s.theta - dt * s.theta_dot) / (dt * dt);
  const Vector u_next =
      s.theta +
      (p.inertia.cwiseProduct(acc - p.bias) + (p.kd + p.damping).cwiseProduct(s.theta_dot))
          .cwiseQuotient(p.kp);
  const double alpha = dt / p.lag;
  const Vector a = s.actuator + (u_next - s.actuator) / alpha - p.offset;
  return clamp_to_limits(a, env.model());
}

}  // namespace hwbc
