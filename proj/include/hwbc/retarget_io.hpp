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

// Motion target files:
//   {"fps": 50, "keypoints": [names],
//    "frames": [{"positions": [[x,y,z], ...],
//                "rotations": {"<end effector>": [[r00,r01,r02], ...]}}]}
// Result files mirror them with per-frame "joints" and "objective_history".

#include <string>
#include <vector>

#include "hwbc/io.hpp"
#include "hwbc/retarget.hpp"

namespace hwbc {

struct MotionTargets {
  double fps = 50.0;
  RetargetProblem problem;  // weights left at zero; callers set them
};

inline MotionTargets motion_targets_from_json(const io::Json& j,
                                              const RobotModel& model) {
  io::check_schema(j, "motion_targets");
  MotionTargets mt;
  mt.fps = io::get_or<double>(j, "fps", 50.0);
  require(mt.fps > 0.0 && std::isfinite(mt.fps), "fps must be > 0");
  for (const auto& name : io::field(j, "keypoints"))
    mt.problem.keypoints.push_back(model.keypoint_index(name.get<std::string>()));
  const auto k = static_cast<Eigen::Index>(mt.problem.keypoints.size());
  for (const auto& fj : io::field(j, "frames")) {
    RetargetFrame fr;
    const Matrix p = io::to_matrix(io::field(fj, "positions"), 3);
    require(p.rows() == k, "frame position count does not match keypoints");
    fr.positions = p;
    if (fj.contains("rotations") && !fj.at("rotations").is_null()) {
      fr.rotations.assign(model.end_effectors.size(), std::nullopt);
      for (const auto& [name, mat] : fj.at("rotations").items()) {
        const int kp = model.keypoint_index(name);
        const auto it = std::find(model.end_effectors.begin(),
                                  model.end_effectors.end(), kp);
        require(it != model.end_effectors.end(),
                "'" + name + "' is not an end effector");
        fr.rotations[it - model.end_effectors.begin()] = io::to_mat3(mat);
      }
    }
    mt.problem.frames.push_back(std::move(fr));
  }
  mt.problem.validate(model);
  return mt;
}

inline io::Json motion_targets_to_json(const MotionTargets& mt,
                                       const RobotModel& model) {
  io::Json j;
  j["schema"] = io::schema_tag("motion_targets");
  j["fps"] = mt.fps;
  io::Json names = io::Json::array();
  for (int k : mt.problem.keypoints) names.push_back(model.keypoints[k].name);
  j["keypoints"] = std::move(names);
  io::Json frames = io::Json::array();
  for (const RetargetFrame& fr : mt.problem.frames) {
    io::Json fj;
    fj["positions"] = io::from_matrix(fr.positions);
    if (!fr.rotations.empty()) {
      io::Json rot = io::Json::object();
      for (std::size_t e = 0; e < fr.rotations.size(); ++e)
        if (fr.rotations[e])
          rot[model.keypoints[model.end_effectors[e]].name] =
              io::from_matrix(*fr.rotations[e]);
      fj["rotations"] = std::move(rot);
    }
    frames.push_back(std::move(fj));
  }
  j["frames"] = std::move(frames);
  return j;
}

inline io::Json retarget_result_to_json(const RetargetResult& res,
                                        const RobotModel& model, double fps) {
  io::Json j;
  j["schema"] = io::schema_tag("retarget_result");
  j["fps"] = fps;
  io::Json names = io::Json::array();
  for (const Joint& jt : model.joints) names.push_back(jt.name);
  j["joint_names"] = std::move(names);
  io::Json frames = io::Json::array();
  for (Eigen::Index t = 0; t < res.joints.rows(); ++t)
    frames.push_back({{"joints", io::from_vector(res.joints.row(t).transpose())},
                      {"rmse", res.frame_rmse[t]}});
  j["frames"] = std::move(frames);
  j["objective_history"] = res.objective_history;
  j["mean_keypoint_error"] = res.mean_keypoint_error;
  j["iterations"] = res.iterations;
  j["stop_reason"] = res.stop_reason;
  return j;
}

inline RetargetResult retarget_result_from_json(const io::Json& j,
                                                const RobotModel& model) {
  io::check_schema(j, "retarget_result");
  RetargetResult res;
  const io::Json& frames = io::field(j, "frames");
  res.joints.resize(static_cast<Eigen::Index>(frames.size()), model.num_joints());
  res.frame_rmse.resize(static_cast<Eigen::Index>(frames.size()));
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const Vector q = io::to_vector(io::field(frames[t], "joints"));
    require(q.size() == model.num_joints(), "result frame has wrong joint count");
    res.joints.row(t) = q.transpose();
    res.frame_rmse[t] = io::get_or<double>(frames[t], "rmse", 0.0);
  }
  res.objective_history = io::get<std::vector<double>>(j, "objective_history");
  res.mean_keypoint_error = io::get_or<double>(j, "mean_keypoint_error", 0.0);
  res.iterations = io::get_or<int>(j, "iterations", 0);
  res.stop_reason = io::get_or<std::string>(j, "stop_reason", "");
  return res;
}

}  // namespace hwbc
