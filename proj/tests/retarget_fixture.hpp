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

// Self-consistent retargeting fixtures: smooth in-limit joint trajectories
// and the keypoint targets they produce under forward kinematics.

#include <cmath>
#include <numbers>

#include "hwbc/model.hpp"
#include "hwbc/retarget.hpp"

namespace hwbc::testing {

inline Matrix smooth_trajectory(Rng& rng, const RobotModel& m, int frames,
                         double amplitude = 0.6, double spread = 0.3) {
  Matrix q(frames, m.num_joints());
  for (int j = 0; j < m.num_joints(); ++j) {
    const double mid = 0.5 * (m.joints[j].lower + m.joints[j].upper);
    const double centre = mid + rng.uniform(-spread, spread);
    const double freq = rng.uniform(0.5, 1.5);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double amp = rng.uniform(0.2, 1.0) * amplitude;
    for (int t = 0; t < frames; ++t)
      q(t, j) = centre + amp * std::sin(2.0 * std::numbers::pi * freq * t /
                                           frames + phase);
  }
  return q;
}

inline RetargetProblem targets_from(const RobotModel& m, const Matrix& q,
                             bool with_rotations = false) {
  RetargetProblem p;
  for (int k = 0; k < m.num_keypoints(); ++k) p.keypoints.push_back(k);
  for (Eigen::Index t = 0; t < q.rows(); ++t) {
    const auto poses = forward_kinematics(m, q.row(t).transpose());
    RetargetFrame fr;
    fr.positions.resize(m.num_keypoints(), 3);
    for (int k = 0; k < m.num_keypoints(); ++k)
      fr.positions.row(k) = poses[k].position.transpose();
    if (with_rotations)
      for (int e : m.end_effectors) fr.rotations.push_back(poses[e].rotation);
    p.frames.push_back(std::move(fr));
  }
  return p;
}

}  // namespace hwbc::testing
