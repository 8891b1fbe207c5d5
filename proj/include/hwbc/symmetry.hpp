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

// Left/right mirror operators over actions and observations, the mirror
// equivariance loss ‖π(s) − M(π(s^m))‖², and mirror data augmentation.

#include <algorithm>
#include <concepts>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hwbc/core.hpp"
#include "hwbc/io.hpp"
#include "hwbc/metrics.hpp"
#include "hwbc/model.hpp"

namespace hwbc {

// Signed permutation: out[index[i]] = sign[i] · in[i]. Involutive when
// index is an involution and paired channels share one sign.
struct ChannelMap {
  std::vector<int> index;
  std::vector<double> sign;

  static ChannelMap identity(int n) {
    ChannelMap m;
    m.index.resize(n);
    for (int i = 0; i < n; ++i) m.index[i] = i;
    m.sign.assign(n, 1.0);
    return m;
  }

  int size() const { return static_cast<int>(index.size()); }

  void pair(int a, int b, double s) {
    require(a >= 0 && a < size() && b >= 0 && b < size(),
            "mirror channel index out of range");
    require(s == 1.0 || s == -1.0, "mirror sign must be +1 or -1");
    index[a] = b;
    index[b] = a;
    sign[a] = s;
    sign[b] = s;
  }

  void validate() const {
    require(sign.size() == index.size(), "mirror map sign/index size mismatch");
    for (int i = 0; i < size(); ++i) {
      const int j = index[i];
      require(j >= 0 && j < size() && index[j] == i,
              "mirror map is not an involution");
      require(sign[i] == sign[j] && (sign[i] == 1.0 || sign[i] == -1.0),
              "mirror map signs must be ±1 and equal on paired channels");
    }
  }

  Vector apply(const Eigen::Ref<const Vector>& v) const {
    require(v.size() == size(), "mirror: vector has " + std::to_string(v.size()) +
                                    " channels, map has " + std::to_string(size()));
    Vector out(v.size());
    for (int i = 0; i < size(); ++i) out[index[i]] = sign[i] * v[i];
    return out;
  }

  // This map followed by `other`, on concatenated channels.
  ChannelMap concat(const ChannelMap& other) const {
    ChannelMap m = *this;
    const int off = size();
    for (int i = 0; i < other.size(); ++i) {
      m.index.push_back(other.index[i] + off);
      m.sign.push_back(other.sign[i]);
    }
    return m;
  }

  ChannelMap tile(int repeats) const {
    ChannelMap m;
    for (int r = 0; r < repeats; ++r) m = m.concat(*this);
    return m;
  }
};

struct MirrorSpec {
  ChannelMap joints;  // actions and joint-space channels
  ChannelMap state;   // full policy input

  void validate() const {
    joints.validate();
    state.validate();
  }
};

inline ChannelMap joint_mirror(const RobotModel& model) {
  ChannelMap m;
  m.index = model.mirror_index;
  m.sign = model.mirror_sign;
  m.validate();
  return m;
}

// Sagittal-plane reflection (y → −y) of body-frame vectors.
inline ChannelMap linear_vector_mirror() {
  ChannelMap m = ChannelMap::identity(3);
  m.sign[1] = -1.0;
  return m;
}

// Angular quantities are pseudo-vectors: x and z flip, y is kept.
inline ChannelMap angular_vector_mirror() {
  ChannelMap m = ChannelMap::identity(3);
  m.sign[0] = -1.0;
  m.sign[2] = -1.0;
  return m;
}

// Mirror of the proprioceptive observation
// [lin vel(3), ang vel(3), projected gravity(3), joint pos(n), joint vel(n)],
// optionally followed by the previous action (n).
inline ChannelMap observation_mirror(const RobotModel& model,
                                     bool with_action = false) {
  const ChannelMap j = joint_mirror(model);
  ChannelMap m = linear_vector_mirror()
                     .concat(angular_vector_mirror())
                     .concat(linear_vector_mirror())
                     .concat(j)
                     .concat(j);
  if (with_action) m = m.concat(j);
  return m;
}

inline Vector mirror_state(const Eigen::Ref<const Vector>& s, const MirrorSpec& spec) {
  return spec.state.apply(s);
}

inline Vector mirror_action(const Eigen::Ref<const Vector>& a, const MirrorSpec& spec) {
  return spec.joints.apply(a);
}

template <typename Policy>
concept StatePolicy = requires(Policy p, const Vector& s) {
  { p(s) } -> std::convertible_to<Vector>;
};

// Mean over the batch of ‖π(s) − M(π(mirror(s)))‖².
template <StatePolicy Policy>
double symmetry_loss(Policy&& policy, std::span<const Vector> batch,
                     const MirrorSpec& spec) {
  require(!batch.empty(), "symmetry_loss: empty batch");
  double sum = 0.0;
  for (const Vector& s : batch) {
    const Vector a = policy(s);
    const Vector a_m = mirror_action(policy(mirror_state(s, spec)), spec);
    sum += (a - a_m).squaredNorm();
  }
  return sum / static_cast<double>(batch.size());
}

using StateAction = std::pair<Vector, Vector>;

// Originals followed by their mirror images.
inline std::vector<StateAction> augment_batch(std::span<const StateAction> batch,
                                              const MirrorSpec& spec) {
  std::vector<StateAction> out(batch.begin(), batch.end());
  out.reserve(2 * batch.size());
  for (const auto& [s, a] : batch)
    out.emplace_back(mirror_state(s, spec), mirror_action(a, spec));
  return out;
}

// Mirrors a full metric state: joints through the model map, keypoints
// through the keypoint permutation with y negated, feet reversed (the last
// foot is the mirror of the first).
inline RobotState mirror_robot_state(const RobotState& s, const RobotModel& model) {
  const ChannelMap j = joint_mirror(model);
  const ChannelMap lin = linear_vector_mirror();
  const ChannelMap ang = angular_vector_mirror();
  RobotState m = s;
  m.root_lin_vel = lin.apply(s.root_lin_vel);
  m.root_ang_vel = ang.apply(s.root_ang_vel);
  m.projected_gravity = lin.apply(s.projected_gravity);
  m.joint_pos = j.apply(s.joint_pos);
  m.joint_vel = j.apply(s.joint_vel);
  m.joint_acc = j.apply(s.joint_acc);
  m.joint_torque = j.apply(s.joint_torque);
  m.action = j.apply(s.action);
  m.prev_action = j.apply(s.prev_action);
  require(s.keypoints.rows() == model.num_keypoints(),
          "mirror_robot_state: keypoint count does not match the model");
  for (int k = 0; k < model.num_keypoints(); ++k) {
    m.keypoints.row(model.keypoint_mirror[k]) = s.keypoints.row(k);
    m.keypoints(model.keypoint_mirror[k], 1) = -s.keypoints(k, 1);
  }
  m.foot_force = s.foot_force.reverse();
  m.foot_vel_xy = s.foot_vel_xy.colwise().reverse();
  m.foot_vel_xy.col(1) *= -1.0;
  return m;
}

inline ReferenceFrame mirror_reference(const ReferenceFrame& r,
                                       const RobotModel& model) {
  ReferenceFrame m = r;
  m.joint_pos = joint_mirror(model).apply(r.joint_pos);
  for (int k = 0; k < model.num_keypoints(); ++k) {
    m.keypoints.row(model.keypoint_mirror[k]) = r.keypoints.row(k);
    m.keypoints(model.keypoint_mirror[k], 1) = -r.keypoints(k, 1);
  }
  return m;
}

// {"joint_pairs":[{"a","b","sign"}], "state_channels":[{"i","j","sign"}],
//  "joint_count": n, "state_dim": d}. Joint pair entries may name joints
// when a model is given. Counts default to the model / the largest index.
inline MirrorSpec mirror_spec_from_json(const io::Json& j,
                                        const RobotModel* model = nullptr) {
  io::check_schema(j, "mirror_spec");
  const auto joint_ref = [model](const io::Json& v) -> int {
    if (v.is_string()) {
      require(model != nullptr, "joint names in a mirror spec need a model");
      return model->joint_index(v.get<std::string>());
    }
    return v.get<int>();
  };
  int joint_count = model ? model->num_joints() : 0;
  int state_dim = 0;
  const io::Json pairs = j.value("joint_pairs", io::Json::array());
  const io::Json channels = j.value("state_channels", io::Json::array());
  for (const auto& p : pairs)
    joint_count = std::max({joint_count, joint_ref(io::field(p, "a")) + 1,
                            joint_ref(io::field(p, "b")) + 1});
  for (const auto& c : channels)
    state_dim = std::max({state_dim, io::get<int>(c, "i") + 1, io::get<int>(c, "j") + 1});
  joint_count = io::get_or<int>(j, "joint_count", joint_count);
  state_dim = io::get_or<int>(j, "state_dim", state_dim);

  MirrorSpec spec{ChannelMap::identity(joint_count), ChannelMap::identity(state_dim)};
  for (const auto& p : pairs)
    spec.joints.pair(joint_ref(io::field(p, "a")), joint_ref(io::field(p, "b")),
                     io::get_or<double>(p, "sign", 1.0));
  for (const auto& c : channels)
    spec.state.pair(io::get<int>(c, "i"), io::get<int>(c, "j"),
                    io::get_or<double>(c, "sign", 1.0));
  spec.validate();
  return spec;
}

inline io::Json mirror_spec_to_json(const MirrorSpec& spec) {
  io::Json j;
  j["schema"] = io::schema_tag("mirror_spec");
  j["joint_count"] = spec.joints.size();
  j["state_dim"] = spec.state.size();
  const auto emit = [](const ChannelMap& m, const char* a, const char* b) {
    io::Json arr = io::Json::array();
    for (int i = 0; i < m.size(); ++i) {
      if (m.index[i] < i || (m.index[i] == i && m.sign[i] == 1.0)) continue;
      arr.push_back({{a, i}, {b, m.index[i]}, {"sign", m.sign[i]}});
    }
    return arr;
  };
  j["joint_pairs"] = emit(spec.joints, "a", "b");
  j["state_channels"] = emit(spec.state, "i", "j");
  return j;
}

}  // namespace hwbc
