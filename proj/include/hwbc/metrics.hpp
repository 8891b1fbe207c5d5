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

// Motion-tracking reward terms and the rollout-level quality/stability
// scores built from them.

#include <array>
#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hwbc/core.hpp"
#include "hwbc/model.hpp"

namespace hwbc {

struct RobotState {
  Vec3 root_lin_vel = Vec3::Zero();       // m/s, body frame
  Vec3 root_ang_vel = Vec3::Zero();       // rad/s, body frame
  Vec3 projected_gravity{0.0, 0.0, -1.0};  // unit vector, body frame
  Vector joint_pos;     // rad
  Vector joint_vel;     // rad/s
  Vector joint_acc;     // rad/s²
  Vector joint_torque;  // N·m
  Vector action;        // rad
  Vector prev_action;   // rad
  Eigen::MatrixX3d keypoints;  // m
  Vector foot_force;           // N, one entry per foot
  Eigen::MatrixX2d foot_vel_xy;  // m/s, one row per foot

  // Zero-motion state with n joints, k keypoints and `feet` feet.
  static RobotState at_rest(int n, int k, int feet = 2) {
    RobotState s;
    s.joint_pos = s.joint_vel = s.joint_acc = s.joint_torque = s.action =
        s.prev_action = Vector::Zero(n);
    s.keypoints = Eigen::MatrixX3d::Zero(k, 3);
    s.foot_force = Vector::Zero(feet);
    s.foot_vel_xy = Eigen::MatrixX2d::Zero(feet, 2);
    return s;
  }
};

struct ReferenceFrame {
  Eigen::MatrixX3d keypoints;  // m
  Vector joint_pos;            // rad
  double feet_height_diff = 0.0;  // m
  double stance_time = 0.0;       // s, current single-stance duration
};

enum class Term : int {
  kZLinVel,
  kXYAngVel,
  kJointTorque,
  kJointAcc,
  kActionRate,
  kEnergy,
  kTermination,
  kJointLimit,
  kOrientation,
  kFeetSlide,
  kHipDeviation,
  kLegDeviation,
  kKeypointTracking,
  kJointTracking,
  kSingleStance,
};

inline constexpr int kNumTerms = 15;

inline constexpr std::array<std::string_view, kNumTerms> kTermNames = {
    "z_lin_vel",      "xy_ang_vel",    "joint_torque",      "joint_acc",
    "action_rate",    "energy",        "termination",       "joint_limit",
    "orientation",    "feet_slide",    "hip_deviation",     "leg_deviation",
    "keypoint_tracking", "joint_tracking", "single_stance"};

inline std::string_view term_name(Term t) { return kTermNames[static_cast<int>(t)]; }

inline bool is_tracking_term(Term t) {
  return t == Term::kKeypointTracking || t == Term::kJointTracking ||
         t == Term::kSingleStance;
}

// Default weights are the reward table's weight column.
struct MetricWeights {
  std::array<double, kNumTerms> w = {
      -0.2,  -0.05, -2e-6, -1e-7, -0.05, -1e-6, -200.0, -1.0,
      -10.0, -0.1,  -0.03, -0.01, 1.0,   1.0,   1.5};

  double& operator[](Term t) { return w[static_cast<int>(t)]; }
  double operator[](Term t) const { return w[static_cast<int>(t)]; }

  void validate() const {
    for (int i = 0; i < kNumTerms; ++i) {
      const auto t = static_cast<Term>(i);
      if (is_tracking_term(t))
        require(w[i] > 0.0, std::string(term_name(t)) + " weight must be > 0");
      else
        require(w[i] <= 0.0, std::string(term_name(t)) + " weight must be <= 0");
    }
  }
};

// Per-robot constants the terms read: limits, defaults and joint groups.
struct JointContext {
  Vector lower, upper, default_pos;
  std::vector<int> hip, leg;

  static JointContext from_model(const RobotModel& m) {
    JointContext c{m.lower_limits(), m.upper_limits(), m.default_angles(), {}, {}};
    for (int j = 0; j < m.num_joints(); ++j) {
      if (m.joints[j].group == JointGroup::kHip) c.hip.push_back(j);
      if (m.joints[j].group == JointGroup::kLeg) c.leg.push_back(j);
    }
    return c;
  }
};

struct RewardTerms {
  std::array<double, kNumTerms> raw{};       // the bare expression
  std::array<double, kNumTerms> weighted{};  // weight × expression
  double total = 0.0;

  double operator[](Term t) const { return raw[static_cast<int>(t)]; }
  double contribution(Term t) const { return weighted[static_cast<int>(t)]; }
};

struct SingleStanceGate {
  double min_height_diff = 0.05;  // m, strict
  double min_time = 0.1;          // s, inclusive
  double max_time = 0.5;          // s, inclusive
};

inline constexpr double kFootContactForce = 100.0;  // N, strict

namespace detail {

inline void check_state(const RobotState& s, const ReferenceFrame& ref,
                        const JointContext& ctx) {
  const Eigen::Index n = s.joint_pos.size();
  const auto same = [n](const Vector& v) { return v.size() == n; };
  require(same(s.joint_vel) && same(s.joint_acc) && same(s.joint_torque) &&
              same(s.action) && same(s.prev_action) && same(ref.joint_pos),
          "reward_terms: joint vector sizes disagree");
  require(same(ctx.lower) && same(ctx.upper) && same(ctx.default_pos),
          "reward_terms: joint context does not match the state");
  require(s.keypoints.rows() == ref.keypoints.rows(),
          "reward_terms: keypoint counts disagree");
  require(s.foot_force.size() == s.foot_vel_xy.rows(),
          "reward_terms: foot force/velocity counts disagree");
  for (int j : ctx.hip) require(j >= 0 && j < n, "hip joint index out of range");
  for (int j : ctx.leg) require(j >= 0 && j < n, "leg joint index out of range");
  const bool finite =
      s.root_lin_vel.allFinite() && s.root_ang_vel.allFinite() &&
      s.projected_gravity.allFinite() && s.joint_pos.allFinite() &&
      s.joint_vel.allFinite() && s.joint_acc.allFinite() &&
      s.joint_torque.allFinite() && s.action.allFinite() &&
      s.prev_action.allFinite() && s.keypoints.allFinite() &&
      s.foot_force.allFinite() && s.foot_vel_xy.allFinite() &&
      ref.keypoints.allFinite() && ref.joint_pos.allFinite() &&
      std::isfinite(ref.feet_height_diff) && std::isfinite(ref.stance_time);
  require(finite, "reward_terms: NaN/Inf in state or reference");
  require(std::abs(s.projected_gravity.norm() - 1.0) <= 1e-6,
          "reward_terms: projected gravity must be a unit vector");
  require(ref.stance_time >= 0.0, "reward_terms: stance time must be >= 0");
}

}  // namespace detail

inline RewardTerms reward_terms(const RobotState& s, const ReferenceFrame& ref,
                                const JointContext& ctx,
                                const MetricWeights& weights, bool terminated,
                                const SingleStanceGate& gate = {}) {
  detail::check_state(s, ref, ctx);
  RewardTerms r;
  auto set = [&r](Term t, double v) { r.raw[static_cast<int>(t)] = v; };

  set(Term::kZLinVel, s.root_lin_vel.z() * s.root_lin_vel.z());
  set(Term::kXYAngVel, s.root_ang_vel.head<2>().squaredNorm());
  set(Term::kJointTorque, s.joint_torque.squaredNorm());
  set(Term::kJointAcc, s.joint_acc.squaredNorm());
  set(Term::kActionRate, (s.action - s.prev_action).squaredNorm());
  set(Term::kEnergy, s.joint_torque.cwiseProduct(s.joint_vel).squaredNorm());
  set(Term::kTermination, terminated ? 1.0 : 0.0);

  double out_of_limits = 0.0;
  for (Eigen::Index j = 0; j < s.joint_pos.size(); ++j)
    out_of_limits += (s.joint_pos[j] < ctx.lower[j] || s.joint_pos[j] > ctx.upper[j]);
  set(Term::kJointLimit, out_of_limits);

  // Tilt: the horizontal components of gravity in the body frame.
  set(Term::kOrientation, s.projected_gravity.head<2>().squaredNorm());

  double slide = 0.0;
  for (Eigen::Index f = 0; f < s.foot_force.size(); ++f)
    if (s.foot_force[f] > kFootContactForce) slide += s.foot_vel_xy.row(f).squaredNorm();
  set(Term::kFeetSlide, slide);

  double hip = 0.0, leg = 0.0;
  for (int j : ctx.hip) hip += std::abs(s.joint_pos[j] - ctx.default_pos[j]);
  for (int j : ctx.leg) leg += std::abs(s.joint_pos[j] - ctx.default_pos[j]);
  set(Term::kHipDeviation, hip);
  set(Term::kLegDeviation, leg);

  set(Term::kKeypointTracking,
      std::exp(-(s.keypoints - ref.keypoints).squaredNorm() / 2.0));
  set(Term::kJointTracking,
      std::exp(-(s.joint_pos - ref.joint_pos).squaredNorm() / 4.0));

  const bool stance = ref.feet_height_diff > gate.min_height_diff &&
                      ref.stance_time >= gate.min_time &&
                      ref.stance_time <= gate.max_time;
  set(Term::kSingleStance, stance ? ref.stance_time : 0.0);

  for (int i = 0; i < kNumTerms; ++i) {
    r.weighted[i] = weights.w[i] * r.raw[i];
    r.total += r.weighted[i];
  }
  return r;
}

struct QualityWeights {
  double keypoint = 0.5;
  double joint = 0.5;
};

// Exponential tracking kernels shared by the reward and the quality score.
inline double tracking_score(const RobotState& s, const ReferenceFrame& ref,
                             const QualityWeights& w = {}) {
  require(s.keypoints.rows() == ref.keypoints.rows() &&
              s.joint_pos.size() == ref.joint_pos.size(),
          "motion_quality: state/reference dimensions disagree");
  return w.keypoint * std::exp(-(s.keypoints - ref.keypoints).squaredNorm() / 2.0) +
         w.joint * std::exp(-(s.joint_pos - ref.joint_pos).squaredNorm() / 4.0);
}

using RolloutFrame = std::pair<RobotState, ReferenceFrame>;

// Mean over frames of the weighted tracking kernels, in (0, 1].
inline double motion_quality(std::span<const RolloutFrame> rollout,
                             const QualityWeights& w = {}) {
  require(!rollout.empty(), "motion_quality: empty rollout");
  double sum = 0.0;
  for (const auto& [state, ref] : rollout) sum += tracking_score(state, ref, w);
  return sum / static_cast<double>(rollout.size());
}

// Angle between projected gravity and the body's down axis.
inline double tilt_angle(const Vec3& projected_gravity) {
  const double c = -projected_gravity.z() / projected_gravity.norm();
  return std::acos(std::clamp(c, -1.0, 1.0));
}

inline constexpr double kFallTiltAngle = 0.8;  // rad

// Fraction of the horizon survived before the first fall.
inline double stability(std::span<const RobotState> rollout, int horizon,
                        double fall_tilt = kFallTiltAngle) {
  require(horizon >= 1, "stability: horizon must be >= 1");
  const std::size_t cap = std::min<std::size_t>(rollout.size(), horizon);
  std::size_t survived = cap;
  for (std::size_t t = 0; t < cap; ++t) {
    if (tilt_angle(rollout[t].projected_gravity) > fall_tilt) {
      survived = t;
      break;
    }
  }
  return static_cast<double>(survived) / horizon;
}

enum class MotionClass { kEasy, kHard };

inline constexpr double kHardMotionSpeed = 0.8;  // m/s, strict

// Peak finite-difference keypoint speed over the sequence.
inline double peak_keypoint_speed(std::span<const Eigen::MatrixX3d> frames,
                                  double fps) {
  require(frames.size() >= 2, "classify_motion: need at least two frames");
  require(fps > 0.0 && std::isfinite(fps), "classify_motion: fps must be > 0");
  double peak = 0.0;
  for (std::size_t t = 1; t < frames.size(); ++t) {
    require(frames[t].rows() == frames[0].rows(),
            "classify_motion: keypoint count changes between frames");
    const Eigen::MatrixX3d d = frames[t] - frames[t - 1];
    for (Eigen::Index k = 0; k < d.rows(); ++k)
      peak = std::max(peak, d.row(k).norm() * fps);
  }
  return peak;
}

inline MotionClass classify_motion(std::span<const Eigen::MatrixX3d> frames,
                                   double fps,
                                   double threshold = kHardMotionSpeed) {
  return peak_keypoint_speed(frames, fps) > threshold ? MotionClass::kHard
                                                      : MotionClass::kEasy;
}

}  // namespace hwbc
