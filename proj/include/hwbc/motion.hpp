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

// Reference motions for the teacher/student loop: retargeted joint
// trajectories with a caption, a planar base command and the derived
// keypoint, foot-height and stance signals.

#include <cmath>
#include <deque>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hwbc/io.hpp"
#include "hwbc/metrics.hpp"
#include "hwbc/model.hpp"
#include "hwbc/retarget.hpp"
#include "hwbc/sim.hpp"
#include "hwbc/toy.hpp"

namespace hwbc {

struct ReferenceMotion {
  std::string name;
  std::string caption;
  double fps = 1.0 / kControlDt;
  bool periodic = true;
  BaseCommand base;
  Matrix joints;  // frames × n

  // Filled by prepare().
  std::vector<Eigen::MatrixX3d> body_keypoints;
  std::vector<double> feet_height_diff;
  std::vector<double> stance_time;
  MotionClass label = MotionClass::kEasy;

  int num_frames() const { return static_cast<int>(joints.rows()); }

  // Frame index for control step k (wraps or holds the last frame).
  int frame(long k) const {
    const long t = num_frames();
    if (periodic) return static_cast<int>(((k % t) + t) % t);
    return static_cast<int>(std::min<long>(std::max<long>(k, 0), t - 1));
  }

  Vector theta(long k) const { return joints.row(frame(k)).transpose(); }

  // Root pose after k steps of the base command, starting at the origin.
  std::pair<Vec3, double> root(long k) const {
    const double t = static_cast<double>(k) / fps;
    const double yaw = base.yaw_rate * t;
    Eigen::Vector2d p;
    if (std::abs(base.yaw_rate) < 1e-12) {
      p = Eigen::Vector2d(base.vx, base.vy) * t;
    } else {
      // Closed-form integral of R(ω s)·v over [0, t].
      const double w = base.yaw_rate;
      const double s = std::sin(yaw), c = std::cos(yaw);
      p = Eigen::Vector2d(base.vx * s / w + base.vy * (c - 1.0) / w,
                          base.vx * (1.0 - c) / w + base.vy * s / w);
    }
    return {Vec3(p.x(), p.y(), 0.0), yaw};
  }

  Eigen::MatrixX3d world_keypoints(long k) const { return world_keypoints(k, k); }

  // Pose of frame k with the root advanced by `root_steps` steps.
  Eigen::MatrixX3d world_keypoints(long k, long root_steps) const {
    const auto [pos, yaw] = root(root_steps);
    const Mat3 r = Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix();
    Eigen::MatrixX3d p = body_keypoints[frame(k)] * r.transpose();
    p.rowwise() += pos.transpose();
    return p;
  }

  ReferenceFrame reference_frame(long k) const {
    const int f = frame(k);
    return {body_keypoints[f], joints.row(f).transpose(), feet_height_diff[f], stance_time[f]};
  }

  // One pass over the frames in world coordinates (root translation included).
  std::vector<Eigen::MatrixX3d> world_trajectory() const {
    std::vector<Eigen::MatrixX3d> out;
    for (int k = 0; k < num_frames(); ++k) out.push_back(world_keypoints(k));
    return out;
  }

  void prepare(const RobotModel& model) {
    require(!caption.empty(), "motion '" + name + "' has no caption");
    require(num_frames() >= 2, "motion '" + name + "' needs at least two frames");
    require(joints.cols() == model.num_joints(), "motion '" + name + "' has wrong joint count");
    require(all_finite(joints), "motion '" + name + "' has non-finite joints");
    require(fps > 0.0 && std::isfinite(fps), "motion '" + name + "' needs a positive fps");
    for (int k = 0; k < num_frames(); ++k)
      require(within_limits(joints.row(k).transpose(), model),
              "motion '" + name + "' frame " + std::to_string(k) + " violates joint limits");
    body_keypoints.clear();
    for (int k = 0; k < num_frames(); ++k)
      body_keypoints.push_back(keypoint_positions(model, joints.row(k).transpose()));
    std::vector<int> feet;
    for (int k = 0; k < model.num_keypoints(); ++k)
      if (model.keypoints[k].name.find("foot") != std::string::npos) feet.push_back(k);
    feet_height_diff.assign(num_frames(), 0.0);
    if (feet.size() >= 2)
      for (int k = 0; k < num_frames(); ++k)
        feet_height_diff[k] =
            std::abs(body_keypoints[k](feet[0], 2) - body_keypoints[k](feet[1], 2));
    // Time since the current single-stance phase began; periodic motions
    // take a second lap so phases crossing the seam are counted.
    const SingleStanceGate gate;
    stance_time.assign(num_frames(), 0.0);
    double run = 0.0;
    for (int lap = 0; lap < (periodic ? 2 : 1); ++lap)
      for (int k = 0; k < num_frames(); ++k) {
        run = feet_height_diff[k] > gate.min_height_diff ? run + 1.0 / fps : 0.0;
        stance_time[k] = run;
      }
    label = classify_motion(world_trajectory(), fps);
  }
};

struct MotionLibrary {
  std::vector<ReferenceMotion> motions;

  int size() const { return static_cast<int>(motions.size()); }

  int find(const std::string& name) const {
    for (int i = 0; i < size(); ++i)
      if (motions[i].name == name) return i;
    throw InputError("no motion named '" + name + "'");
  }

  void prepare(const RobotModel& model) {
    require(!motions.empty(), "motion library is empty");
    for (auto& m : motions) m.prepare(model);
  }
};

// Retargets analytic joint signals through their own keypoint positions, so
// library references come out of the same pipeline as mocap data.
inline Matrix retarget_signals(const RobotModel& model, const Matrix& q) {
  RetargetProblem problem;
  for (int k = 0; k < model.num_keypoints(); ++k) problem.keypoints.push_back(k);
  for (int t = 0; t < q.rows(); ++t)
    problem.frames.push_back({keypoint_positions(model, q.row(t).transpose()), {}});
  problem.w_smooth = 1e-6;
  LMConfig lm;
  const Matrix init = warm_start_trajectory(model, problem, lm);
  return retarget_sequence(model, problem, lm, init).joints;
}

// Toy library: a slow right-hand wave (easy) and a 1 Hz walk at 0.5 m/s
// (hard), both for toy::humanoid().
inline MotionLibrary toy_library(const RobotModel& model = toy::humanoid()) {
  const double dt = kControlDt;
  const Vector d = model.default_angles();
  const auto signal = [&](int frames, auto&& fill) {
    Matrix q(frames, model.num_joints());
    for (int k = 0; k < frames; ++k) {
      Vector row = d;
      fill(k * dt, row);
      q.row(k) = row.transpose();
    }
    return q;
  };
  constexpr double kTwoPi = 2.0 * std::numbers::pi;

  MotionLibrary lib;
  ReferenceMotion wave;
  wave.name = "wave";
  wave.caption = "a person waves the right hand";
  wave.joints = retarget_signals(model, signal(200, [&](double t, Vector& r) {
    r[model.joint_index("r_shoulder")] += 0.5 * std::sin(kTwoPi * 0.25 * t);
  }));
  lib.motions.push_back(std::move(wave));

  ReferenceMotion walk;
  walk.name = "walk";
  walk.caption = "a person walks forward";
  walk.base = {0.5, 0.0, 0.0};
  walk.joints = retarget_signals(model, signal(50, [&](double t, Vector& r) {
    const double s = std::sin(kTwoPi * t), c = std::cos(kTwoPi * t);
    r[model.joint_index("l_hip_pitch")] += 0.35 * s;
    r[model.joint_index("r_hip_pitch")] -= 0.35 * s;
    r[model.joint_index("l_knee")] += 0.25 * (1.0 - c);
    r[model.joint_index("r_knee")] += 0.25 * (1.0 + c);
    r[model.joint_index("l_shoulder")] -= 0.3 * s;
    r[model.joint_index("r_shoulder")] += 0.3 * s;
  }));
  lib.motions.push_back(std::move(walk));
  lib.prepare(model);
  return lib;
}

inline io::Json library_to_json(const MotionLibrary& lib) {
  io::Json motions = io::Json::array();
  for (const auto& m : lib.motions)
    motions.push_back({{"name", m.name},
                       {"caption", m.caption},
                       {"fps", m.fps},
                       {"periodic", m.periodic},
                       {"base_command", {m.base.vx, m.base.vy, m.base.yaw_rate}},
                       {"joints", io::from_matrix(m.joints)}});
  return {{"schema", io::schema_tag("motion_library")}, {"motions", motions}};
}

inline MotionLibrary library_from_json(const io::Json& j, const RobotModel& model) {
  io::check_schema(j, "motion_library");
  MotionLibrary lib;
  for (const auto& m : io::field(j, "motions")) {
    ReferenceMotion r;
    r.name = io::get<std::string>(m, "name");
    r.caption = io::get<std::string>(m, "caption");
    r.fps = io::get_or(m, "fps", r.fps);
    r.periodic = io::get_or(m, "periodic", r.periodic);
    const auto base = io::get_or<std::vector<double>>(m, "base_command", {0.0, 0.0, 0.0});
    require(base.size() == 3, "base_command must have three entries");
    r.base = {base[0], base[1], base[2]};
    r.joints = io::to_matrix(io::field(m, "joints"), model.num_joints());
    lib.motions.push_back(std::move(r));
  }
  lib.prepare(model);
  return lib;
}

// Observation frames sampled every `stride` control steps (10 Hz at 50 Hz),
// oldest first. Before enough steps have passed the oldest frame repeats.
class HistoryBuffer {
 public:
  HistoryBuffer(int length, int stride, int frame_dim)
      : length_(length), stride_(stride), frame_dim_(frame_dim) {
    require(length >= 1 && stride >= 1 && frame_dim >= 1, "history: sizes must be positive");
  }

  void reset(const Eigen::Ref<const Vector>& frame) {
    frames_.assign(static_cast<std::size_t>(capacity()), Vector(frame));
  }

  void push(const Eigen::Ref<const Vector>& frame) {
    require(frame.size() == frame_dim_, "history: frame has wrong dimension");
    if (frames_.empty()) reset(frame);
    frames_.pop_front();
    frames_.emplace_back(frame);
  }

  Vector flatten() const {
    require(!frames_.empty(), "history: no frames yet");
    Vector out(length_ * frame_dim_);
    for (int i = 0; i < length_; ++i)
      out.segment(i * frame_dim_, frame_dim_) = frames_[static_cast<std::size_t>(i * stride_)];
    return out;
  }

  int capacity() const { return (length_ - 1) * stride_ + 1; }

 private:
  int length_, stride_, frame_dim_;
  std::deque<Vector> frames_;
};

inline constexpr int kHistoryStride = 5;  // 10 Hz history at 50 Hz control

}  // namespace hwbc
