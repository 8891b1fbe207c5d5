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
#include <limits>
#include <map>
#include <vector>

#include <gtest/gtest.h>

#include "hwbc/sim.hpp"
#include "hwbc/symmetry.hpp"
#include "hwbc/toy.hpp"
#include "test_util.hpp"

namespace hwbc {
namespace {

RobotModel free_joint() {
  RobotModel m = testing::single_joint(Vec3(0, 0, -1));
  m.joints[0].lower = -100.0;
  m.joints[0].upper = 100.0;
  m.finalize();
  return m;
}

ToyEnv nominal_toy(std::uint64_t seed = 1, DynamicsConfig dyn = {}) {
  return ToyEnv(toy::humanoid(), dyn, RandomizationConfig::nominal(), seed);
}

bool same_state(const SimState& a, const SimState& b) {
  return a.theta == b.theta && a.theta_dot == b.theta_dot && a.actuator == b.actuator &&
         a.base_pos == b.base_pos && a.yaw == b.yaw && a.track_vel == b.track_vel &&
         a.push_vel == b.push_vel && a.roll == b.roll && a.pitch == b.pitch &&
         a.yaw_rate == b.yaw_rate;
}

TEST(Reset, CollapsedRangesAreSeedIndependent) {
  RandomizationConfig r = RandomizationConfig::standard();
  for (auto& e : r.entries) e.lo = e.hi;
  ToyEnv a(toy::humanoid(), {}, r, 1), b(toy::humanoid(), {}, r, 2);
  a.reset(3);
  b.reset(4);
  EXPECT_TRUE(same_state(a.state(), b.state()));
}

TEST(Reset, SeededReproduction) {
  ToyEnv a(toy::humanoid(), {}, RandomizationConfig::standard(), 7);
  ToyEnv b(toy::humanoid(), {}, RandomizationConfig::standard(), 7);
  a.reset(11);
  b.reset(11);
  EXPECT_TRUE(same_state(a.state(), b.state()));
  b.reset(12);
  EXPECT_FALSE(same_state(a.state(), b.state()));
  EXPECT_EQ(b.state().theta_dot, Vector::Zero(8));  // joint velocity range is [0, 0]
}

TEST(Reset, CoverageOfEveryRange) {
  const RandomizationConfig r = RandomizationConfig::standard();
  std::map<std::string, std::pair<double, double>> seen;
  const auto note = [&](const std::string& k, double v) {
    auto [it, fresh] = seen.try_emplace(k, v, v);
    it->second.first = std::min(it->second.first, v);
    it->second.second = std::max(it->second.second, v);
  };
  Rng seeds(5);
  for (int i = 0; i < 10000; ++i) {
    ToyEnv env(toy::humanoid(), {}, r, seeds.next_u64());
    const auto& st = env.startup_sample();
    const auto& rs = env.reset_sample();
    note("ankle_static_friction", st.static_friction);
    note("ankle_dynamic_friction", st.dynamic_friction);
    note("ankle_restitution", st.restitution);
    note("base_mass_add", st.base_mass_add);
    for (int j = 0; j < 8; ++j) {
      note("link_mass_scale", st.link_mass[j]);
      note("armature_scale", st.armature[j]);
      note("default_joint_offset", st.joint_offset[j]);
      note("joint_pos_scale", rs.joint_pos_scale[j]);
    }
    note("base_lin_vel", rs.lin_vel.x());
    note("base_lin_vel", rs.lin_vel.y());
    for (int k = 0; k < 3; ++k) note("base_ang_vel", rs.ang_vel[k]);
    note("base_torque", rs.base_torque);
  }
  for (const auto& e : r.entries) {
    if (e.mode == RandMode::kInterval || e.lo == e.hi) continue;
    ASSERT_TRUE(seen.count(e.parameter)) << e.parameter;
    const auto [lo, hi] = seen[e.parameter];
    EXPECT_GE(lo, e.lo) << e.parameter;
    EXPECT_LE(hi, e.hi) << e.parameter;
    EXPECT_GE(hi - lo, 0.95 * (e.hi - e.lo)) << e.parameter;
  }
}

TEST(Reset, PublishedRanges) {
  const RandomizationConfig r = RandomizationConfig::standard();
  const auto range = [&](const char* name) {
    const auto* e = r.find(name);
    return std::pair(e->lo, e->hi);
  };
  EXPECT_EQ(range("joint_pos_scale"), std::pair(0.5, 1.5));
  EXPECT_EQ(range("base_lin_vel"), std::pair(-0.5, 0.5));
  EXPECT_EQ(range("ankle_restitution"), std::pair(0.0, 0.4));
  EXPECT_EQ(range("base_torque"), std::pair(-5.0, 5.0));
  EXPECT_EQ(range("push_velocity"), std::pair(-1.0, 1.0));
  EXPECT_EQ(r.find("push_velocity")->period_lo, 10.0);
  EXPECT_EQ(r.find("push_velocity")->period_hi, 15.0);
}

TEST(Randomization, JsonRoundTripAndValidation) {
  const RandomizationConfig r = RandomizationConfig::standard();
  const RandomizationConfig back = randomization_from_json(randomization_to_json(r));
  EXPECT_EQ(randomization_to_json(back), randomization_to_json(r));
  RandomizationConfig bad = r;
  bad.entries[0].lo = 1.0;
  bad.entries[0].hi = 0.0;
  EXPECT_THROW(bad.validate(), InputError);
  bad = r;
  bad.entries[0].mode = RandMode::kStartup;
  EXPECT_THROW(bad.validate(), InputError);
  bad = r;
  bad.entries.push_back({RandMode::kReset, "gravity", 0, 1});
  EXPECT_THROW(bad.validate(), InputError);
}

TEST(Step, ZeroGainsAreBallistic) {
  DynamicsConfig dyn;
  dyn.kp = dyn.kd = dyn.damping = 0.0;
  ToyEnv env(free_joint(), dyn, RandomizationConfig::nominal(), 1);
  env.mutable_state().theta_dot[0] = 0.7;
  const double start = env.state().theta[0];
  for (int k = 1; k <= 100; ++k) {
    env.step(Vector::Constant(1, 3.0));
    EXPECT_EQ(env.state().theta_dot[0], 0.7);
  }
  EXPECT_NEAR(env.state().theta[0], start + 0.7 * 2.0, 1e-12);
}

TEST(Step, HighGainsConvergeToConstantTarget) {
  DynamicsConfig dyn;
  dyn.kp = 900.0;
  dyn.kd = 60.0;
  ToyEnv env(free_joint(), dyn, RandomizationConfig::nominal(), 1);
  for (int k = 0; k < 250; ++k) env.step(Vector::Constant(1, 0.6));
  EXPECT_NEAR(env.state().theta[0], 0.6, 1e-3);
}

TEST(Step, KineticEnergyNonIncreasingWithoutDrive) {
  DynamicsConfig dyn;
  dyn.kp = 0.0;
  dyn.kd = 0.0;
  dyn.damping = 2.0;
  ToyEnv env(free_joint(), dyn, RandomizationConfig::nominal(), 1);
  env.mutable_state().theta_dot[0] = 3.0;
  double ke = 4.5;
  for (int k = 0; k < 200; ++k) {
    env.step(Vector::Zero(1));
    const double next = 0.5 * env.state().theta_dot.squaredNorm();
    EXPECT_LE(next, ke);
    ke = next;
  }
}

TEST(Step, PushChangesVelocityWithinRange) {
  RandomizationConfig with = RandomizationConfig::nominal();
  with.entries.push_back({RandMode::kInterval, "push_velocity", -1.0, 1.0, 0.5, 0.7});
  ToyEnv pushed(toy::humanoid(), {}, with, 1), calm = nominal_toy(1);
  const Vector hold = toy::humanoid().default_angles();
  int pushes = 0;
  for (int k = 0; k < 500; ++k) {
    const Eigen::Vector2d before = pushed.world_velocity() - calm.world_velocity();
    pushed.step(hold, {0.3, 0.0, 0.1});
    calm.step(hold, {0.3, 0.0, 0.1});
    const Eigen::Vector2d jump =
        pushed.world_velocity() - calm.world_velocity() - before * std::exp(-kControlDt / 0.5);
    if (pushed.state().last_push.isZero()) {
      EXPECT_LT(jump.norm(), 1e-12);
      continue;
    }
    ++pushes;
    EXPECT_LT((jump - pushed.state().last_push).norm(), 1e-12);
    EXPECT_LE(jump.cwiseAbs().maxCoeff(), 1.0);
  }
  EXPECT_GE(pushes, 14);
  EXPECT_LE(pushes, 20);
}

TEST(Step, Deterministic) {
  const auto run = [] {
    ToyEnv env(toy::humanoid(), {}, RandomizationConfig::standard(), 3);
    env.reset(9);
    Rng rng(4);
    for (int k = 0; k < 700; ++k)
      env.step(env.model().default_angles() + 0.3 * rng.normal_vector(8), {0.5, 0.0, 0.0});
    return env.observe();
  };
  EXPECT_EQ(run(), run());
}

TEST(Step, RejectsBadAction) {
  ToyEnv env = nominal_toy();
  EXPECT_THROW(env.step(Vector::Zero(7)), InputError);
  Vector a = Vector::Zero(8);
  a[3] = std::nan("");
  EXPECT_THROW(env.step(a), InputError);
}

TEST(Observe, RestLayout) {
  ToyEnv env = nominal_toy();
  const Vector o = env.observe();
  ASSERT_EQ(o.size(), 9 + 2 * 8);
  EXPECT_EQ(o.head<6>(), Vector::Zero(6));
  EXPECT_EQ(o.segment<3>(6), Vec3(0, 0, -1));
  EXPECT_EQ(o.segment(9, 8), env.model().default_angles());
  EXPECT_EQ(o.tail(8), Vector::Zero(8));
}

TEST(Observe, PitchedBaseGravity) {
  ToyEnv env = nominal_toy();
  env.mutable_state().pitch = 0.1;
  const Vec3 expected =
      Eigen::AngleAxisd(0.1, Vec3::UnitY()).toRotationMatrix().transpose() * Vec3(0, 0, -1);
  EXPECT_LT((env.observe().segment<3>(6) - expected).norm(), 1e-15);
  EXPECT_NEAR(env.observe()[6], std::sin(0.1), 1e-15);
}

TEST(Observe, ExcludesPrivilegedParameters) {
  ToyEnv a(toy::humanoid(), {}, RandomizationConfig::standard(), 1);
  ToyEnv b(toy::humanoid(), {}, RandomizationConfig::standard(), 2);
  ASSERT_NE(a.privileged().inertia, b.privileged().inertia);
  b.mutable_state() = a.state();
  EXPECT_EQ(a.observe(), b.observe());
}

TEST(Teacher, FixedPointOnReference) {
  ToyEnv env = nominal_toy();
  const Vector ref = env.state().theta;
  EXPECT_EQ(teacher_oracle(env, ref, ref), ref);
}

TEST(Teacher, StepChangeConvergesMonotonically) {
  ToyEnv env(free_joint(), {}, RandomizationConfig::nominal(), 1);
  const Vector ref = Vector::Constant(1, 0.3);
  double err = 0.3;
  for (int k = 0; k < 60; ++k) {
    env.step(teacher_oracle(env, ref, ref));
    const double e = std::abs(env.state().theta[0] - 0.3);
    EXPECT_LT(e, err + 1e-15);
    err = e;
  }
  EXPECT_LT(err, 1e-5);
}

TEST(Teacher, TracksMovingReferenceUnderRandomization) {
  ToyEnv env(toy::humanoid(), {}, RandomizationConfig::standard(), 21);
  env.reset(22);
  const Vector base = env.model().default_angles();
  const auto ref = [&](int k) {
    Vector r = base;
    const double t = k * kControlDt;
    r[0] += 0.4 * std::sin(2 * std::numbers::pi * t);
    r[2] += 0.3 * (1 - std::cos(2 * std::numbers::pi * t));
    r[3] -= 0.4 * std::sin(2 * std::numbers::pi * t);
    r[6] += 0.5 * std::sin(std::numbers::pi * t);
    return r;
  };
  double sum = 0.0;
  int count = 0;
  for (int k = 0; k < 250; ++k) {
    env.step(teacher_oracle(env, ref(k), ref(k + 1)));
    if (k + 1 >= 50) {
      sum += (env.state().theta - ref(k + 1)).squaredNorm() / 8.0;
      ++count;
    }
  }
  EXPECT_LT(std::sqrt(sum / count), 0.01);
}

TEST(Teacher, MirrorEquivariant) {
  const RobotModel m = toy::humanoid();
  const ChannelMap jm = joint_mirror(m);
  ToyEnv env = nominal_toy();
  ToyEnv mirrored = nominal_toy();
  Rng rng(30);
  for (int trial = 0; trial < 50; ++trial) {
    SimState& s = env.mutable_state();
    s.theta = m.default_angles() + 0.1 * rng.normal_vector(8);
    s.theta_dot = rng.normal_vector(8);
    s.actuator = s.theta + 0.05 * rng.normal_vector(8);
    SimState& t = mirrored.mutable_state();
    t.theta = jm.apply(s.theta);
    t.theta_dot = jm.apply(s.theta_dot);
    t.actuator = jm.apply(s.actuator);
    const Vector r0 = m.default_angles() + 0.1 * rng.normal_vector(8);
    const Vector r1 = r0 + 0.01 * rng.normal_vector(8);
    const Vector a = teacher_oracle(env, r0, r1);
    const Vector b = teacher_oracle(mirrored, jm.apply(r0), jm.apply(r1));
    EXPECT_LT((jm.apply(a) - b).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(RobotStateFromEnv, RestIsLevelAndLoaded) {
  ToyEnv env = nominal_toy();
  const RobotState r = env.robot_state();
  EXPECT_EQ(r.projected_gravity, Vec3(0, 0, -1));
  ASSERT_EQ(r.foot_force.size(), 2);
  EXPECT_NEAR(r.foot_force.sum(), 10.0 * 9.81, 1e-9);
  EXPECT_EQ(r.keypoints, keypoint_positions(env.model(), env.state().theta));
}

}  // namespace
}  // namespace hwbc
