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

// Toy 8-joint humanoid used by the desk-scale benchmark: two legs (hip
// pitch, hip roll, knee) and two single-axis arms, seven keypoints.

#include <numbers>
#include <string>

#include "hwbc/model.hpp"

namespace hwbc::toy {

inline RobotModel humanoid() {
  RobotModel m;
  const auto add = [&m](std::string name, int parent, Vec3 offset, Vec3 axis,
                        double lo, double hi, double def, JointGroup g) {
    Joint j;
    j.name = std::move(name);
    j.parent = parent;
    j.offset = offset;
    j.axis = axis;
    j.lower = lo;
    j.upper = hi;
    j.default_angle = def;
    j.group = g;
    m.joints.push_back(j);
    return m.num_joints() - 1;
  };
  for (const double side : {1.0, -1.0}) {
    const std::string p = side > 0 ? "l_" : "r_";
    const int pitch = add(p + "hip_pitch", -1, Vec3(0.0, 0.1 * side, 0.0),
                          Vec3::UnitY(), -1.5, 1.5, -0.2, JointGroup::kHip);
    const int roll = add(p + "hip_roll", pitch, Vec3::Zero(), Vec3::UnitX(),
                         side > 0 ? -0.5 : -0.8, side > 0 ? 0.8 : 0.5,
                         0.05 * side, JointGroup::kHip);
    add(p + "knee", roll, Vec3(0.0, 0.0, -0.4), Vec3::UnitY(), 0.0, 2.2, 0.4,
        JointGroup::kLeg);
  }
  add("l_shoulder", -1, Vec3(0.0, 0.2, 0.5), Vec3::UnitY(), -2.0, 2.0, 0.2,
      JointGroup::kOther);
  add("r_shoulder", -1, Vec3(0.0, -0.2, 0.5), Vec3::UnitY(), -2.0, 2.0, 0.2,
      JointGroup::kOther);

  m.keypoints = {
      {"torso", -1, Vec3(0.0, 0.0, 0.4)},
      {"l_knee", 1, Vec3(0.0, 0.0, -0.4)},
      {"r_knee", 4, Vec3(0.0, 0.0, -0.4)},
      {"l_foot", 2, Vec3(0.0, 0.0, -0.4)},
      {"r_foot", 5, Vec3(0.0, 0.0, -0.4)},
      {"l_hand", 6, Vec3(0.0, 0.05, -0.5)},
      {"r_hand", 7, Vec3(0.0, -0.05, -0.5)},
  };
  m.end_effectors = {3, 4, 5, 6};

  m.mirror_index = {3, 4, 5, 0, 1, 2, 7, 6};
  m.mirror_sign = {1, -1, 1, 1, -1, 1, 1, 1};
  m.keypoint_mirror = {0, 2, 1, 4, 3, 6, 5};
  m.validate();
  return m;
}

}  // namespace hwbc::toy
