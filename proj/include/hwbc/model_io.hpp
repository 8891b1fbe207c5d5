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

#include <string>

#include "hwbc/io.hpp"
#include "hwbc/model.hpp"

namespace hwbc {

// {"joints":[{"name","parent","offset","axis","limits",("default","group")}],
//  "keypoints":[{"name","joint","offset"}], "end_effectors":[names],
//  "mirror_map":[{"a","b","sign"}], ("keypoint_mirror":[{"a","b"}])}
// "parent"/"joint" accept a name, an index, or null for the base.
inline RobotModel model_from_json(const io::Json& j) {
  io::check_schema(j, "robot_model");
  RobotModel m;
  const auto resolve_joint = [&m](const io::Json& ref) -> int {
    if (ref.is_null()) return -1;
    if (ref.is_number_integer()) return ref.get<int>();
    return m.joint_index(ref.get<std::string>());
  };
  for (const auto& jj : io::field(j, "joints")) {
    Joint jt;
    jt.name = io::get<std::string>(jj, "name");
    jt.parent = resolve_joint(jj.value("parent", io::Json()));
    jt.offset = io::to_vec3(io::field(jj, "offset"));
    jt.axis = io::to_vec3(io::field(jj, "axis"));
    const io::Json& lim = io::field(jj, "limits");
    if (!lim.is_array() || lim.size() != 2)
      throw InputError("joint '" + jt.name + "': limits must be [lo, hi]");
    jt.lower = lim[0].get<double>();
    jt.upper = lim[1].get<double>();
    jt.default_angle = io::get_or<double>(jj, "default", 0.0);
    const std::string group = io::get_or<std::string>(jj, "group", "other");
    if (group == "hip") jt.group = JointGroup::kHip;
    else if (group == "leg") jt.group = JointGroup::kLeg;
    else if (group == "other") jt.group = JointGroup::kOther;
    else throw InputError("joint '" + jt.name + "': unknown group '" + group + "'");
    m.joints.push_back(std::move(jt));
  }
  if (j.contains("keypoints")) {
    for (const auto& kj : j.at("keypoints")) {
      Keypoint kp;
      kp.name = io::get<std::string>(kj, "name");
      kp.joint = resolve_joint(kj.value("joint", io::Json()));
      kp.offset = io::to_vec3(io::field(kj, "offset"));
      m.keypoints.push_back(std::move(kp));
    }
  }
  if (j.contains("end_effectors"))
    for (const auto& e : j.at("end_effectors"))
      m.end_effectors.push_back(m.keypoint_index(e.get<std::string>()));

  const int n = m.num_joints();
  m.mirror_index.resize(n);
  m.mirror_sign.assign(n, 1.0);
  for (int i = 0; i < n; ++i) m.mirror_index[i] = i;
  if (j.contains("mirror_map")) {
    for (const auto& p : j.at("mirror_map")) {
      const int a = m.joint_index(io::get<std::string>(p, "a"));
      const int b = m.joint_index(io::get<std::string>(p, "b"));
      const double s = io::get_or<double>(p, "sign", 1.0);
      m.mirror_index[a] = b;
      m.mirror_index[b] = a;
      m.mirror_sign[a] = s;
      m.mirror_sign[b] = s;
    }
  }
  m.keypoint_mirror.resize(m.keypoints.size());
  for (int k = 0; k < m.num_keypoints(); ++k) m.keypoint_mirror[k] = k;
  if (j.contains("keypoint_mirror")) {
    for (const auto& p : j.at("keypoint_mirror")) {
      const int a = m.keypoint_index(io::get<std::string>(p, "a"));
      const int b = m.keypoint_index(io::get<std::string>(p, "b"));
      m.keypoint_mirror[a] = b;
      m.keypoint_mirror[b] = a;
    }
  }
  m.validate();
  return m;
}

inline io::Json model_to_json(const RobotModel& m) {
  io::Json j;
  j["schema"] = io::schema_tag("robot_model");
  io::Json joints = io::Json::array();
  for (const Joint& jt : m.joints) {
    io::Json jj;
    jj["name"] = jt.name;
    jj["parent"] = jt.parent >= 0 ? io::Json(m.joints[jt.parent].name) : io::Json();
    jj["offset"] = io::from_vec3(jt.offset);
    jj["axis"] = io::from_vec3(jt.axis);
    jj["limits"] = {jt.lower, jt.upper};
    jj["default"] = jt.default_angle;
    jj["group"] = jt.group == JointGroup::kHip   ? "hip"
                  : jt.group == JointGroup::kLeg ? "leg"
                                                 : "other";
    joints.push_back(std::move(jj));
  }
  j["joints"] = std::move(joints);
  io::Json kps = io::Json::array();
  for (const Keypoint& kp : m.keypoints) {
    kps.push_back({{"name", kp.name},
                   {"joint", kp.joint >= 0 ? io::Json(m.joints[kp.joint].name)
                                           : io::Json()},
                   {"offset", io::from_vec3(kp.offset)}});
  }
  j["keypoints"] = std::move(kps);
  io::Json ee = io::Json::array();
  for (int e : m.end_effectors) ee.push_back(m.keypoints[e].name);
  j["end_effectors"] = std::move(ee);
  io::Json mm = io::Json::array();
  for (int a = 0; a < m.num_joints(); ++a) {
    const int b = m.mirror_index[a];
    if (b < a || (b == a && m.mirror_sign[a] == 1.0)) continue;
    mm.push_back({{"a", m.joints[a].name},
                  {"b", m.joints[b].name},
                  {"sign", m.mirror_sign[a]}});
  }
  j["mirror_map"] = std::move(mm);
  io::Json km = io::Json::array();
  for (int a = 0; a < m.num_keypoints(); ++a) {
    const int b = m.keypoint_mirror[a];
    if (b <= a) continue;
    km.push_back({{"a", m.keypoints[a].name}, {"b", m.keypoints[b].name}});
  }
  j["keypoint_mirror"] = std::move(km);
  return j;
}

inline RobotModel load_model(const std::string& path) {
  return model_from_json(io::read_json(path));
}

}  // namespace hwbc
