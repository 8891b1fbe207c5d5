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
#include <cstring>
#include <numbers>

#include <gtest/gtest.h>

#include "hwbc/model.hpp"
#include "hwbc/model_io.hpp"
#include "test_util.hpp"

namespace hwbc {
namespace {

using testing::central_difference;
using testing::max_relative_error;
using testing::random_chain;
using testing::random_configuration;
using testing::random_rotation;

constexpr double kPi = std::numbers::pi;

TEST(ForwardKinematics, SingleJointIdentity) {
  const RobotModel m = testing::single_joint();
  const auto poses = forward_kinematics(m, Vector::Zero(1));
  EXPECT_TRUE(poses[0].position.isApprox(Vec3(1, 0, 0)));
}

TEST(ForwardKinematics, SingleJointQuarterTurn) {
  const RobotModel m = testing::single_joint();
  const auto poses = forward_kinematics(m, Vector::Constant(1, kPi / 2));
  EXPECT_NEAR(poses[0].position.x(), 0.0, 1e-15);
  EXPECT_NEAR(poses[0].position.y(), 1.0, 1e-15);
  EXPECT_NEAR(poses[0].position.z(), 0.0, 1e-15);
}

TEST(ForwardKinematics, TwoLinkPlanarMatchesHomogeneousOracle) {
  const RobotModel m = testing::planar_arm(2);
  Vector q(2);
  q << kPi / 4, kPi / 4;
  const Vec3 tip = forward_kinematics(m, q)[0].position;
  const Vec3 oracle = testing::oracle_keypoint(m, q, 0);
  // Frozen from the 4x4 oracle: (cos 45°, 1 + sin 45°, 0).
  const Vec3 frozen(0.70710678118654757, 1.7071067811865475, 0.0);
  EXPECT_LT((tip - oracle).norm(), 1e-14);
  EXPECT_LT((tip - frozen).norm(), 1e-14);
}

TEST(ForwardKinematics, RandomTreesMatchOracle) {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const RobotModel m = random_chain(rng, 3 + trial % 8, /*branch=*/true);
    const Vector q = random_configuration(rng, m);
    const auto poses = forward_kinematics(m, q);
    for (int k = 0; k < m.num_keypoints(); ++k)
      EXPECT_LT((poses[k].position - testing::oracle_keypoint(m, q, k)).norm(),
                1e-12);
  }
}

TEST(ForwardKinematics, Deterministic) {
  Rng rng(3);
  const RobotModel m = random_chain(rng, 9);
  const Vector q = random_configuration(rng, m);
  const Eigen::MatrixX3d a = keypoint_positions(m, q);
  const Eigen::MatrixX3d b = keypoint_positions(m, q);
  EXPECT_EQ(0, std::memcmp(a.data(), b.data(), sizeof(double) * a.size()));
}

TEST(ForwardKinematics, RejectsBadInput) {
  const RobotModel m = testing::planar_arm(2);
  EXPECT_THROW(forward_kinematics(m, Vector::Zero(3)), InputError);
  Vector q = Vector::Zero(2);
  q[1] = std::nan("");
  EXPECT_THROW(forward_kinematics(m, q), InputError);
}

TEST(ForwardKinematics, LongChainStaysOrthonormal) {
  RobotModel m;
  Rng rng(11);
  for (int j = 0; j < 250; ++j) {
    Joint jt;
    jt.name = "j" + std::to_string(j);
    jt.parent = j - 1;
    jt.offset = Vec3(0.01, 0, 0);
    jt.axis = testing::random_unit(rng);
    m.joints.push_back(jt);
  }
  m.keypoints.push_back({"tip", 249, Vec3(0.01, 0, 0)});
  m.finalize();
  const auto ks = forward_kinematics_full(m, random_configuration(rng, m));
  EXPECT_LT(so3::orthonormality_defect(ks.joint_frames.back().rotation), 1e-12);
}

TEST(PositionJacobian, SingleJointColumn) {
  const RobotModel m = testing::single_joint();
  const Eigen::Matrix3Xd jac = position_jacobian(m, Vector::Zero(1), 0);
  EXPECT_TRUE(jac.col(0).isApprox(Vec3(0, 1, 0)));
}

TEST(PositionJacobian, NonAncestorColumnIsZero) {
  RobotModel m;
  for (int j = 0; j < 3; ++j) {
    Joint jt;
    jt.name = "j" + std::to_string(j);
    jt.parent = j == 2 ? 0 : j - 1;  // j1 and j2 are siblings under j0
    jt.offset = Vec3(0.5, 0, 0);
    m.joints.push_back(jt);
  }
  m.keypoints.push_back({"a", 1, Vec3(0.3, 0, 0)});
  m.keypoints.push_back({"b", 2, Vec3(0.3, 0, 0)});
  m.finalize();
  const Eigen::Matrix3Xd jac = position_jacobian(m, Vector::Constant(3, 0.2), 0);
  EXPECT_EQ(jac.col(2), Vec3::Zero());
  EXPECT_GT(jac.col(1).norm(), 0.0);
}

TEST(PositionJacobian, MatchesCentralDifferences) {
  Rng rng(42);
  for (int trial = 0; trial < 100; ++trial) {
    const RobotModel m = random_chain(rng, 2 + trial % 11, trial % 3 == 0);
    const Vector q = random_configuration(rng, m);
    for (int k = 0; k < m.num_keypoints(); ++k) {
      const Matrix fd = central_difference(
          [&](const Vector& x) -> Vector {
            return forward_kinematics(m, x)[k].position;
          },
          q, 1e-6);
      EXPECT_LT(max_relative_error(position_jacobian(m, q, k), fd), 1e-5);
    }
  }
}

TEST(PositionJacobian, IndexOutOfRange) {
  const RobotModel m = testing::single_joint();
  EXPECT_THROW(position_jacobian(m, Vector::Zero(1), 1), InputError);
  EXPECT_THROW(position_jacobian(m, Vector::Zero(1), -1), InputError);
}

TEST(OrientationError, IdenticalIsExactlyZero) {
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    const Mat3 r = random_rotation(rng);
    EXPECT_EQ(orientation_error(r, r), Vec3::Zero());
  }
}

TEST(OrientationError, AxisAngleDefinition) {
  const Mat3 rz = Eigen::AngleAxisd(0.3, Vec3::UnitZ()).toRotationMatrix();
  const Vec3 e = orientation_error(rz, Mat3::Identity());
  EXPECT_NEAR(e.x(), 0.0, 1e-15);
  EXPECT_NEAR(e.y(), 0.0, 1e-15);
  EXPECT_NEAR(e.z(), 0.3, 1e-15);
}

TEST(OrientationError, MatchesSeriesLogOracle) {
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const Mat3 a = random_rotation(rng);
    const Mat3 b = random_rotation(rng);
    const Vec3 oracle = testing::series_log_vector(b.transpose() * a);
    EXPECT_LT((orientation_error(a, b) - oracle).norm(), 1e-8) << "pair " << i;
  }
}

TEST(OrientationError, NormIsGeodesicAngle) {
  Rng rng(9);
  for (int i = 0; i < 200; ++i) {
    const Vec3 axis = testing::random_unit(rng);
    // Includes angles within 1e-9 of π, where the symmetric branch applies.
    const double angle = i < 20 ? kPi - std::pow(10.0, -(i % 10)) : rng.uniform(0, kPi);
    const Mat3 b = random_rotation(rng);
    const Mat3 a = b * Eigen::AngleAxisd(angle, axis).toRotationMatrix();
    const Vec3 e = orientation_error(a, b);
    EXPECT_NEAR(e.norm(), angle, 1e-8);
    EXPECT_LT((e - angle * axis).norm(), 1e-6) << angle;
  }
}

TEST(OrientationError, SwapNegatesInTargetFrame) {
  Rng rng(4);
  for (int i = 0; i < 50; ++i) {
    const Mat3 a = random_rotation(rng);
    const Mat3 b = random_rotation(rng);
    const Vec3 ab = orientation_error(a, b);
    const Vec3 ba = orientation_error(b, a);
    // log(aᵀb) = −aᵀb·log(bᵀa) (frame change by the relative rotation).
    EXPECT_LT((ba + (a.transpose() * b) * ab).norm(), 1e-9);
  }
}

TEST(OrientationError, RejectsNonOrthonormal) {
  Mat3 bad = Mat3::Identity();
  bad(0, 0) = 1.001;
  EXPECT_THROW(orientation_error(bad, Mat3::Identity()), InputError);
  EXPECT_THROW(orientation_error(Mat3::Identity(), 2.0 * Mat3::Identity()),
               InputError);
}

TEST(ClampToLimits, InteriorUnchangedAndBoxProjection) {
  const RobotModel m = testing::planar_arm(2, 1.0);
  Vector q(2);
  q << 0.3, -0.2;
  EXPECT_EQ(clamp_to_limits(q, m), q);
  q[1] = 1.0 + 1.0;
  EXPECT_EQ(clamp_to_limits(q, m)[1], 1.0);
  EXPECT_EQ(clamp_to_limits(q, m)[0], 0.3);
}

TEST(ClampToLimits, IdempotentAndNonExpansive) {
  Rng rng(8);
  for (int i = 0; i < 200; ++i) {
    const RobotModel m = random_chain(rng, 6);
    const Vector a = Vector::NullaryExpr(6, [&] { return rng.uniform(-6, 6); });
    const Vector b = Vector::NullaryExpr(6, [&] { return rng.uniform(-6, 6); });
    const Vector ca = clamp_to_limits(a, m);
    EXPECT_EQ(clamp_to_limits(ca, m), ca);
    EXPECT_LE((ca - clamp_to_limits(b, m)).cwiseAbs().maxCoeff(),
              (a - b).cwiseAbs().maxCoeff());
  }
}

TEST(RobotModel, ValidationCatchesBrokenInvariants) {
  RobotModel m = testing::planar_arm(2);
  m.joints[0].lower = 2.0;
  m.joints[0].upper = 1.0;
  EXPECT_THROW(m.validate(), InputError);

  m = testing::planar_arm(2);
  m.joints[1].axis = Vec3(0, 0, 1.001);
  EXPECT_THROW(m.validate(), InputError);

  m = testing::planar_arm(2);
  m.joints[0].parent = 1;
  EXPECT_THROW(m.validate(), InputError);

  m = testing::planar_arm(3);
  m.mirror_index = {1, 2, 0};  // a 3-cycle is not an involution
  EXPECT_THROW(m.validate(), InputError);
}

TEST(ModelJson, LoadsDocumentedSchema) {
  const auto j = io::Json::parse(R"({
    "joints": [
      {"name": "l_hip", "parent": null, "offset": [0, 0.1, 0], "axis": [0, 1, 0],
       "limits": [-1.0, 1.0], "default": 0.1, "group": "hip"},
      {"name": "r_hip", "parent": null, "offset": [0, -0.1, 0], "axis": [0, 1, 0],
       "limits": [-1.0, 1.0], "default": 0.1, "group": "hip"},
      {"name": "l_knee", "parent": "l_hip", "offset": [0, 0, -0.4], "axis": [0, 1, 0],
       "limits": [0.0, 2.0], "group": "leg"}
    ],
    "keypoints": [{"name": "l_foot", "joint": "l_knee", "offset": [0, 0, -0.4]}],
    "end_effectors": ["l_foot"],
    "mirror_map": [{"a": "l_hip", "b": "r_hip", "sign": 1}]
  })");
  const RobotModel m = model_from_json(j);
  EXPECT_EQ(m.num_joints(), 3);
  EXPECT_EQ(m.joints[2].parent, 0);
  EXPECT_EQ(m.mirror_index[0], 1);
  EXPECT_EQ(m.mirror_index[2], 2);
  EXPECT_EQ(m.joints[0].group, JointGroup::kHip);
  EXPECT_DOUBLE_EQ(m.joints[0].default_angle, 0.1);

  const RobotModel back = model_from_json(model_to_json(m));
  EXPECT_EQ(model_to_json(back), model_to_json(m));
}

TEST(ModelJson, RejectsUnknownMajorVersion) {
  auto j = model_to_json(testing::planar_arm(2));
  j["schema"] = "hwbc.robot_model/2";
  EXPECT_THROW(model_from_json(j), InputError);
}

}  // namespace
}  // namespace hwbc
