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

#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "hwbc/motion.hpp"
#include "hwbc/toy.hpp"

namespace hwbc {
namespace {

TEST(ToyLibrary, LabelsFollowKeypointSpeed) {
  const RobotModel model = toy::humanoid();
  const MotionLibrary lib = toy_library(model);
  ASSERT_EQ(lib.size(), 2);
  const auto& wave = lib.motions[lib.find("wave")];
  const auto& walk = lib.motions[lib.find("walk")];
  EXPECT_EQ(wave.label, MotionClass::kEasy);
  EXPECT_EQ(walk.label, MotionClass::kHard);
  EXPECT_EQ(wave.label, classify_motion(wave.world_trajectory(), wave.fps));
  EXPECT_EQ(walk.label, classify_motion(walk.world_trajectory(), walk.fps));
  EXPECT_FALSE(wave.caption.empty());
  EXPECT_FALSE(walk.caption.empty());
}

TEST(ToyLibrary, RetargetedJointsFollowTheDrivingSignal) {
  const RobotModel model = toy::humanoid();
  const MotionLibrary lib = toy_library(model);
  const auto& wave = lib.motions[lib.find("wave")];
  const int sh = model.joint_index("r_shoulder");
  for (int k = 0; k < wave.num_frames(); k += 17) {
    const double t = k / wave.fps;
    EXPECT_NEAR(wave.joints(k, sh), model.joints[sh].default_angle + 0.5 * std::sin(2 * std::numbers::pi * 0.25 * t), 1e-4) << k;
  }
  for (const auto& m : lib.motions)
    for (int k = 0; k < m.num_frames(); ++k)
      EXPECT_TRUE(within_limits(m.theta(k), model));
}

TEST(ToyLibrary, WalkAlternatesSingleStance) {
  const MotionLibrary lib = toy_library();
  const auto& walk = lib.motions[lib.find("walk")];
  double peak = 0.0;
  for (int k = 0; k < walk.num_frames(); ++k) peak = std::max(peak, walk.feet_height_diff[k]);
  EXPECT_GT(peak, SingleStanceGate{}.min_height_diff);
  const auto& wave = lib.motions[lib.find("wave")];
  for (double d : wave.feet_height_diff) EXPECT_LT(d, 1e-9);
}

TEST(ReferenceMotion, FrameIndexWrapsOrHolds) {
  ReferenceMotion m;
  m.joints = Matrix::Zero(4, 1);
  EXPECT_EQ(m.frame(5), 1);
  EXPECT_EQ(m.frame(-1), 3);
  m.periodic = false;
  EXPECT_EQ(m.frame(9), 3);
  EXPECT_EQ(m.frame(-2), 0);
}

TEST(ReferenceMotion, RootFollowsTheBaseCommand) {
  ReferenceMotion m;
  m.base = {0.5, 0.0, 0.0};
  const auto [p, yaw] = m.root(50);
  EXPECT_NEAR(p.x(), 0.5, 1e-12);
  EXPECT_EQ(yaw, 0.0);
  // Turning in place at ω with forward speed v traces a circle of radius v/ω.
  m.base = {1.0, 0.0, 1.0};
  const auto [q, yaw2] = m.root(static_cast<long>(std::round(std::numbers::pi * 50)));
  EXPECT_NEAR(yaw2, std::round(std::numbers::pi * 50) / 50, 1e-12);
  EXPECT_NEAR(q.y(), 2.0, 1e-3);
}

TEST(MotionLibrary, JsonRoundTrip) {
  const RobotModel model = toy::humanoid();
  const MotionLibrary lib = toy_library(model);
  const io::Json j = library_to_json(lib);
  EXPECT_EQ(j.at("schema"), io::schema_tag("motion_library"));
  const MotionLibrary back = library_from_json(io::parse_json(j.dump(), "mem"), model);
  ASSERT_EQ(back.size(), lib.size());
  for (int i = 0; i < lib.size(); ++i) {
    EXPECT_EQ(back.motions[i].name, lib.motions[i].name);
    EXPECT_EQ(back.motions[i].caption, lib.motions[i].caption);
    EXPECT_EQ(back.motions[i].label, lib.motions[i].label);
    EXPECT_EQ(back.motions[i].joints, lib.motions[i].joints);
  }
  EXPECT_EQ(library_to_json(back).dump(), j.dump());
}

TEST(MotionLibrary, RejectsBadMotions) {
  const RobotModel model = toy::humanoid();
  io::Json j = library_to_json(toy_library(model));
  io::Json no_caption = j;
  no_caption["motions"][0]["caption"] = "";
  EXPECT_THROW(library_from_json(no_caption, model), InputError);
  io::Json bad_schema = j;
  bad_schema["schema"] = "hwbc.motion_library/2";
  EXPECT_THROW(library_from_json(bad_schema, model), InputError);
}

TEST(HistoryBuffer, SamplesEveryStrideOldestFirst) {
  HistoryBuffer h(3, 2, 1);
  h.reset(Vector::Constant(1, 0.0));
  EXPECT_EQ(h.capacity(), 5);
  for (int k = 1; k <= 6; ++k) h.push(Vector::Constant(1, k));
  // Frames held: 2..6; sampled at 2, 4, 6.
  const Vector f = h.flatten();
  EXPECT_EQ(f[0], 2.0);
  EXPECT_EQ(f[1], 4.0);
  EXPECT_EQ(f[2], 6.0);
}

TEST(HistoryBuffer, RepeatsTheFirstFrameUntilFilled) {
  HistoryBuffer h(4, 5, 2);
  h.reset(Vector::Constant(2, 7.0));
  h.push(Vector::Constant(2, 1.0));
  const Vector f = h.flatten();
  EXPECT_EQ(f.head(6), Vector::Constant(6, 7.0));
  EXPECT_EQ(f.tail(2), Vector::Constant(2, 1.0));
  EXPECT_THROW(h.push(Vector::Zero(3)), InputError);
}

}  // namespace
}  // namespace hwbc
