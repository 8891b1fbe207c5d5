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

// Serial/tree kinematic chains of 1-DoF revolute joints: forward kinematics,
// keypoint position Jacobians, rotation errors and joint-limit projection.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "hwbc/core.hpp"
#include "hwbc/so3.hpp"

namespace hwbc {

// Metric grouping of a joint (hip/leg deviation penalties).
enum class JointGroup { kOther, kHip, kLeg };

struct Joint {
  std::string name;
  int parent = -1;  // -1: attached to the base
  Vec3 offset = Vec3::Zero();
  Vec3 axis = Vec3::UnitZ();
  double lower = -std::numbers::pi;
  double upper = std::numbers::pi;
  double default_angle = 0.0;
  JointGroup group = JointGroup::kOther;
};

struct Keypoint {
  std::string name;
  int joint = -1;  // -1: rigidly attached to the base
  Vec3 offset = Vec3::Zero();
};

struct Pose {
  Vec3 position = Vec3::Zero();
  Mat3 rotation = Mat3::Identity();
};

class RobotModel {
 public:
  std::vector<Joint> joints;
  std::vector<Keypoint> keypoints;
  std::vector<int> end_effectors;  // indices into keypoints
  // Joint mirror: joint i maps to mirror_index[i] with factor mirror_sign[i].
  std::vector<int> mirror_index;
  std::vector<double> mirror_sign;
  // Keypoint mirror permutation (positions additionally negate y).
  std::vector<int> keypoint_mirror;

  int num_joints() const { return static_cast<int>(joints.size()); }
  int num_keypoints() const { return static_cast<int>(keypoints.size()); }

  Vector lower_limits() const {
    Vector v(num_joints());
    for (int j = 0; j < num_joints(); ++j) v[j] = joints[j].lower;
    return v;
  }
  Vector upper_limits() const {
    Vector v(num_joints());
    for (int j = 0; j < num_joints(); ++j) v[j] = joints[j].upper;
    return v;
  }
  Vector default_angles() const {
    Vector v(num_joints());
    for (int j = 0; j < num_joints(); ++j) v[j] = joints[j].default_angle;
    return v;
  }
  Vector mid_range() const { return 0.5 * (lower_limits() + upper_limits()); }

  int joint_index(const std::string& name) const {
    for (int j = 0; j < num_joints(); ++j)
      if (joints[j].name == name) return j;
    throw InputError("unknown joint '" + name + "'");
  }
  int keypoint_index(const std::string& name) const {
    for (int k = 0; k < num_keypoints(); ++k)
      if (keypoints[k].name == name) return k;
    throw InputError("unknown keypoint '" + name + "'");
  }

  // True when joint j lies on the path from the base to keypoint k.
  bool is_ancestor(int j, int k) const {
    for (int cur = keypoints[k].joint; cur >= 0; cur = joints[cur].parent)
      if (cur == j) return true;
    return false;
  }

  // Fills identity mirror maps where none were given and checks every
  // structural invariant. Throws InputError.
  void finalize() {
    const int n = num_joints();
    if (mirror_index.empty()) {
      mirror_index.resize(n);
      for (int j = 0; j < n; ++j) mirror_index[j] = j;
      mirror_sign.assign(n, 1.0);
    }
    if (keypoint_mirror.empty()) {
      keypoint_mirror.resize(num_keypoints());
      for (int k = 0; k < num_keypoints(); ++k) keypoint_mirror[k] = k;
    }
    validate();
  }

  void validate() const {
    const int n = num_joints();
    for (int j = 0; j < n; ++j) {
      const Joint& jt = joints[j];
      require(jt.parent < j, "joint '" + jt.name +
                                 "': parent index must precede the child");
      require(jt.parent >= -1, "joint '" + jt.name + "': bad parent index");
      require(jt.lower <= jt.upper,
              "joint '" + jt.name + "': lower limit exceeds upper limit");
      require(std::abs(jt.axis.norm() - 1.0) <= 1e-9,
              "joint '" + jt.name + "': rotation axis is not unit norm");
      require(jt.offset.allFinite() && std::isfinite(jt.lower) &&
                  std::isfinite(jt.upper) && std::isfinite(jt.default_angle),
              "joint '" + jt.name + "': non-finite field");
    }
    for (const Keypoint& kp : keypoints) {
      require(kp.joint >= -1 && kp.joint < n,
              "keypoint '" + kp.name + "': joint index out of range");
      require(kp.offset.allFinite(),
              "keypoint '" + kp.name + "': non-finite offset");
    }
    for (int e : end_effectors)
      require(e >= 0 && e < num_keypoints(), "end effector index out of range");

    require(static_cast<int>(mirror_index.size()) == n &&
                static_cast<int>(mirror_sign.size()) == n,
            "mirror map must cover every joint");
    for (int j = 0; j < n; ++j) {
      const int m = mirror_index[j];
      require(m >= 0 && m < n, "mirror map index out of range");
      require(mirror_index[m] == j, "mirror map is not an involution");
      require(mirror_sign[j] == 1.0 || mirror_sign[j] == -1.0,
              "mirror sign must be +1 or -1");
      require(mirror_sign[m] == mirror_sign[j],
              "paired joints must share one mirror sign");
    }
    require(static_cast<int>(keypoint_mirror.size()) == num_keypoints(),
            "keypoint mirror must cover every keypoint");
    for (int k = 0; k < num_keypoints(); ++k) {
      const int m = keypoint_mirror[k];
      require(m >= 0 && m < num_keypoints() && keypoint_mirror[m] == k,
              "keypoint mirror is not an involutive permutation");
    }
  }
};

// Per-joint world frames and keypoint poses for one configuration.
struct KinematicState {
  std::vector<Pose> joint_frames;  // frame after the joint rotation
  std::vector<Vec3> joint_axes;    // world-frame rotation axes
  std::vector<Pose> keypoints;
};

namespace detail {

inline void check_configuration(const RobotModel& model,
                                const Eigen::Ref<const Vector>& q) {
  if (q.size() != model.num_joints())
    throw InputError("joint vector has " + std::to_string(q.size()) +
                     " entries, model has " +
                     std::to_string(model.num_joints()) + " joints");
  if (!q.allFinite()) throw InputError("joint vector contains NaN/Inf");
}

// Chains longer than this are re-orthonormalized along the way.
inline constexpr int kRenormalizeDepth = 100;

}  // namespace detail

inline KinematicState forward_kinematics_full(const RobotModel& model,
                                              const Eigen::Ref<const Vector>& q) {
  detail::check_configuration(model, q);
  const int n = model.num_joints();
  KinematicState ks;
  ks.joint_frames.resize(n);
  ks.joint_axes.resize(n);
  std::vector<int> depth(n, 0);
  for (int j = 0; j < n; ++j) {
    const Joint& jt = model.joints[j];
    Pose parent;
    if (jt.parent >= 0) {
      parent = ks.joint_frames[jt.parent];
      depth[j] = depth[jt.parent] + 1;
    }
    Pose& f = ks.joint_frames[j];
    f.position = parent.position + parent.rotation * jt.offset;
    ks.joint_axes[j] = parent.rotation * jt.axis;
    f.rotation = parent.rotation * so3::axis_angle(jt.axis, q[j]);
    if (depth[j] > 0 && depth[j] % detail::kRenormalizeDepth == 0)
      f.rotation = so3::renormalize(f.rotation);
  }
  ks.keypoints.resize(model.keypoints.size());
  for (std::size_t k = 0; k < model.keypoints.size(); ++k) {
    const Keypoint& kp = model.keypoints[k];
    Pose base;
    if (kp.joint >= 0) base = ks.joint_frames[kp.joint];
    ks.keypoints[k].rotation = base.rotation;
    ks.keypoints[k].position = base.position + base.rotation * kp.offset;
  }
  return ks;
}

// Keypoint poses in the base frame.
inline std::vector<Pose> forward_kinematics(const RobotModel& model,
                                            const Eigen::Ref<const Vector>& q) {
  return forward_kinematics_full(model, q).keypoints;
}

// Keypoint positions stacked as a K×3 matrix.
inline Eigen::MatrixX3d keypoint_positions(const RobotModel& model,
                                           const Eigen::Ref<const Vector>& q) {
  const auto poses = forward_kinematics(model, q);
  Eigen::MatrixX3d p(poses.size(), 3);
  for (std::size_t k = 0; k < poses.size(); ++k)
    p.row(k) = poses[k].position.transpose();
  return p;
}

// 3×n; column j = axis_j × (p_k − p_j) for ancestors of keypoint k.
inline Eigen::Matrix3Xd position_jacobian(const RobotModel& model,
                                          const KinematicState& ks,
                                          int keypoint) {
  if (keypoint < 0 || keypoint >= model.num_keypoints())
    throw InputError("keypoint index " + std::to_string(keypoint) +
                     " out of range");
  Eigen::Matrix3Xd jac = Eigen::Matrix3Xd::Zero(3, model.num_joints());
  const Vec3& p = ks.keypoints[keypoint].position;
  for (int j = model.keypoints[keypoint].joint; j >= 0;
       j = model.joints[j].parent)
    jac.col(j) = ks.joint_axes[j].cross(p - ks.joint_frames[j].position);
  return jac;
}

inline Eigen::Matrix3Xd position_jacobian(const RobotModel& model,
                                          const Eigen::Ref<const Vector>& q,
                                          int keypoint) {
  if (keypoint < 0 || keypoint >= model.num_keypoints())
    throw InputError("keypoint index " + std::to_string(keypoint) +
                     " out of range");
  return position_jacobian(model, forward_kinematics_full(model, q), keypoint);
}

// 3×n angular Jacobian of the keypoint frame (world axes of ancestors).
inline Eigen::Matrix3Xd rotation_jacobian(const RobotModel& model,
                                          const KinematicState& ks,
                                          int keypoint) {
  Eigen::Matrix3Xd jac = Eigen::Matrix3Xd::Zero(3, model.num_joints());
  for (int j = model.keypoints[keypoint].joint; j >= 0;
       j = model.joints[j].parent)
    jac.col(j) = ks.joint_axes[j];
  return jac;
}

inline constexpr double kOrthonormalTolerance = 1e-6;

// log(targetᵀ·actual) as a rotation vector (radians).
inline Vec3 orientation_error(const Mat3& actual, const Mat3& target) {
  if (!actual.allFinite() || !target.allFinite() ||
      so3::orthonormality_defect(actual) > kOrthonormalTolerance ||
      so3::orthonormality_defect(target) > kOrthonormalTolerance)
    throw InputError("orientation_error: input is not a rotation matrix");
  return so3::log(target.transpose() * actual);
}

inline Vector clamp_to_limits(const Eigen::Ref<const Vector>& q,
                              const RobotModel& model) {
  if (q.size() != model.num_joints())
    throw InputError("clamp_to_limits: dimension mismatch");
  Vector out(q.size());
  for (int j = 0; j < model.num_joints(); ++j)
    out[j] = std::clamp(q[j], model.joints[j].lower, model.joints[j].upper);
  return out;
}

inline bool within_limits(const Eigen::Ref<const Vector>& q,
                          const RobotModel& model) {
  for (int j = 0; j < model.num_joints(); ++j)
    if (!(q[j] >= model.joints[j].lower && q[j] <= model.joints[j].upper))
      return false;
  return true;
}

}  // namespace hwbc
