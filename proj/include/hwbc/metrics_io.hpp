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

// Rollout logs are JSON-lines: one object per control step,
//   {"schema": "hwbc.rollout_frame/1", "step": t,
//    "state": {...RobotState...}, "reference": {...ReferenceFrame...},
//    "terminated": false, ...}
// Extra keys (command, observation, ...) are ignored by the metric readers.

#include <sstream>
#include <string>
#include <vector>

#include "hwbc/io.hpp"
#include "hwbc/metrics.hpp"

namespace hwbc {

inline io::Json state_to_json(const RobotState& s) {
  return {{"root_lin_vel", io::from_vec3(s.root_lin_vel)},
          {"root_ang_vel", io::from_vec3(s.root_ang_vel)},
          {"projected_gravity", io::from_vec3(s.projected_gravity)},
          {"joint_pos", io::from_vector(s.joint_pos)},
          {"joint_vel", io::from_vector(s.joint_vel)},
          {"joint_acc", io::from_vector(s.joint_acc)},
          {"joint_torque", io::from_vector(s.joint_torque)},
          {"action", io::from_vector(s.action)},
          {"prev_action", io::from_vector(s.prev_action)},
          {"keypoints", io::from_matrix(s.keypoints)},
          {"foot_force", io::from_vector(s.foot_force)},
          {"foot_vel_xy", io::from_matrix(s.foot_vel_xy)}};
}

inline RobotState state_from_json(const io::Json& j) {
  RobotState s;
  s.root_lin_vel = io::to_vec3(io::field(j, "root_lin_vel"));
  s.root_ang_vel = io::to_vec3(io::field(j, "root_ang_vel"));
  s.projected_gravity = io::to_vec3(io::field(j, "projected_gravity"));
  s.joint_pos = io::to_vector(io::field(j, "joint_pos"));
  const Eigen::Index n = s.joint_pos.size();
  const auto opt_vec = [&](const char* key) {
    return j.contains(key) ? io::to_vector(j.at(key)) : Vector(Vector::Zero(n));
  };
  s.joint_vel = opt_vec("joint_vel");
  s.joint_acc = opt_vec("joint_acc");
  s.joint_torque = opt_vec("joint_torque");
  s.action = opt_vec("action");
  s.prev_action = opt_vec("prev_action");
  s.keypoints = io::to_matrix(io::field(j, "keypoints"), 3);
  s.foot_force = j.contains("foot_force") ? io::to_vector(j.at("foot_force"))
                                          : Vector(Vector::Zero(0));
  s.foot_vel_xy = j.contains("foot_vel_xy") ? io::to_matrix(j.at("foot_vel_xy"), 2)
                                            : Matrix(Matrix::Zero(s.foot_force.size(), 2));
  return s;
}

inline io::Json reference_to_json(const ReferenceFrame& r) {
  return {{"keypoints", io::from_matrix(r.keypoints)},
          {"joint_pos", io::from_vector(r.joint_pos)},
          {"feet_height_diff", r.feet_height_diff},
          {"stance_time", r.stance_time}};
}

inline ReferenceFrame reference_from_json(const io::Json& j) {
  ReferenceFrame r;
  r.keypoints = io::to_matrix(io::field(j, "keypoints"), 3);
  r.joint_pos = io::to_vector(io::field(j, "joint_pos"));
  r.feet_height_diff = io::get_or<double>(j, "feet_height_diff", 0.0);
  r.stance_time = io::get_or<double>(j, "stance_time", 0.0);
  return r;
}

struct EvalFrame {
  RobotState state;
  ReferenceFrame reference;
  bool terminated = false;
};

inline std::vector<EvalFrame> read_eval_rollout(const std::string& text) {
  std::vector<EvalFrame> frames;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const io::Json j = io::Json::parse(line);
      io::check_schema(j, "rollout_frame");
      if (!j.contains("reference")) throw InputError("frame has no reference");
      frames.push_back({state_from_json(io::field(j, "state")),
                        reference_from_json(j.at("reference")),
                        j.value("terminated", false)});
    } catch (const io::Json::exception& e) {
      throw ParseError(line_no, e.what());
    } catch (const ParseError&) {
      throw;
    } catch (const InputError& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return frames;
}

}  // namespace hwbc
