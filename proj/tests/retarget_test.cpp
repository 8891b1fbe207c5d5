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

#include <chrono>
#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "hwbc/retarget.hpp"
#include "hwbc/retarget_io.hpp"
#include "retarget_fixture.hpp"
#include "test_util.hpp"

namespace hwbc {
namespace {

using testing::random_chain;
using testing::smooth_trajectory;
using testing::targets_from;

// Smooth in-limits trajectory: each joint oscillates around a point within
// `spread` of its mid-range.
double total_variation_sq(const Matrix& q) {
  double s = 0.0;
  for (Eigen::Index t = 1; t < q.rows(); ++t)
    s += (q.row(t) - q.row(t - 1)).squaredNorm();
  return s;
}

TEST(SmoothnessMatrix, TwoFramesOneJoint) {
  const Matrix s = Matrix(smoothness_matrix(2, 1));
  ASSERT_EQ(s.rows(), 1);
  ASSERT_EQ(s.cols(), 2);
  EXPECT_EQ(s(0, 0), -1.0);
  EXPECT_EQ(s(0, 1), 1.0);
}

TEST(SmoothnessMatrix, SingleFrameIsEmpty) {
  const SparseMatrix s = smoothness_matrix(1, 4);
  EXPECT_EQ(s.rows(), 0);
  EXPECT_EQ(s.cols(), 4);
}

TEST(SmoothnessMatrix, AppliesFrameDifferences) {
  Rng rng(2);
  const int frames = 7, n = 3;
  const Matrix q = Matrix::NullaryExpr(frames, n, [&] { return rng.normal(); });
  const Vector sq = smoothness_matrix(frames, n) * detail::stack(q);
  for (int t = 1; t < frames; ++t)
    for (int j = 0; j < n; ++j)
      EXPECT_EQ(sq[(t - 1) * n + j], q(t, j) - q(t - 1, j));
}

TEST(BuildResiduals, ZeroAtExactFixedPoint) {
  Rng rng(3);
  const RobotModel m = random_chain(rng, 5);
  const Vector q = testing::random_configuration(rng, m);
  const Matrix traj = q.transpose().replicate(4, 1);
  RetargetProblem p = targets_from(m, traj);
  p.w_smooth = 0.5;
  const Vector f = build_residuals(p, m, traj);
  EXPECT_EQ(f.size(), 4 * 3 * 5 + 3 * 5);
  EXPECT_EQ(f.cwiseAbs().maxCoeff(), 0.0);
}

TEST(BuildResiduals, LayoutAndWeightAblation) {
  Rng rng(4);
  RobotModel m = random_chain(rng, 4);
  m.end_effectors = {3};
  const Matrix traj = smooth_trajectory(rng, m, 5);
  RetargetProblem p = targets_from(m, traj, true);
  p.w_ori = 2.0;
  p.w_smooth = 3.0;
  const int k = 4, e = 1, n = 4, frames = 5;
  EXPECT_EQ(build_residuals(p, m, traj).size(),
            frames * (3 * k + 3 * e) + (frames - 1) * n);
  p.w_smooth = 0.0;
  EXPECT_EQ(build_residuals(p, m, traj).size(), frames * (3 * k + 3 * e));
}

TEST(BuildResiduals, SingleFrameMatchesOracle) {
  const RobotModel m = testing::planar_arm(2);
  RetargetProblem p;
  p.keypoints = {0};
  RetargetFrame fr;
  fr.positions.resize(1, 3);
  fr.positions << 0.5, 1.0, 0.25;
  p.frames.push_back(fr);
  Matrix q(1, 2);
  q << 0.3, -0.7;
  const Vector f = build_residuals(p, m, q);
  const Vec3 expected =
      testing::oracle_keypoint(m, q.row(0).transpose(), 0) - Vec3(0.5, 1.0, 0.25);
  ASSERT_EQ(f.size(), 3);
  EXPECT_LT((f - expected).norm(), 1e-14);
}

TEST(BuildResiduals, DimensionMismatch) {
  const RobotModel m = testing::planar_arm(2);
  RetargetProblem p = targets_from(m, Matrix::Zero(3, 2));
  EXPECT_THROW(build_residuals(p, m, Matrix::Zero(2, 2)), InputError);
  EXPECT_THROW(build_residuals(p, m, Matrix::Zero(3, 3)), InputError);
}

TEST(ResidualJacobian, MatchesCentralDifferences) {
  Rng rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    RobotModel m = random_chain(rng, 3 + trial % 4);
    m.end_effectors = {m.num_keypoints() - 1, 0};
    const int frames = 2 + trial % 3;
    const Matrix truth = smooth_trajectory(rng, m, frames);
    RetargetProblem p = targets_from(m, truth, true);
    // Perturb targets so residuals are non-zero.
    for (auto& fr : p.frames) {
      fr.positions.array() += 0.05;
      for (auto& r : fr.rotations)
        *r = *r * so3::exp(Vec3(0.2, -0.1, 0.3));
    }
    p.w_ori = 0.7;
    p.w_smooth = 1.3;
    const Matrix q = smooth_trajectory(rng, m, frames);
    const Matrix jac = Matrix(residual_jacobian(p, m, q));
    const Matrix fd = testing::central_difference(
        [&](const Vector& x) {
          return build_residuals(p, m, detail::unstack(x, frames, m.num_joints()));
        },
        detail::stack(q), 1e-6);
    EXPECT_LT(testing::max_relative_error(jac, fd), 1e-5) << "trial " << trial;
  }
}

TEST(LmStep, ZeroResidualGivesZeroStep) {
  SparseMatrix jac = Matrix::Identity(3, 3).sparseView();
  const Vector dq = lm_step(jac, Vector::Zero(3), 1e-3, 0.0, smoothness_matrix(1, 3));
  EXPECT_EQ(dq, Vector::Zero(3));
}

TEST(LmStep, ScalarClosedForm) {
  SparseMatrix jac(1, 1);
  jac.insert(0, 0) = 2.0;
  const Vector dq = lm_step(jac, Vector::Ones(1), 1.0, 0.0, smoothness_matrix(1, 1));
  EXPECT_NEAR(dq[0], -2.0 / 5.0, 1e-15);
}

TEST(LmStep, HeavyDampingShrinksStep) {
  Rng rng(6);
  const Matrix j = Matrix::NullaryExpr(5, 3, [&] { return rng.normal(); });
  const Vector f = Vector::NullaryExpr(5, [&] { return rng.normal(); });
  const SparseMatrix js = j.sparseView();
  const Vector dq = lm_step(js, f, 1e9, 0.0, smoothness_matrix(1, 3));
  EXPECT_LE(dq.norm(), 1e-8 * (j.transpose() * f).norm() * 2.0);
}

TEST(LmStep, SolvesDampedNormalEquations) {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const int frames = 4, n = 3;
    const Matrix j = Matrix::NullaryExpr(frames * 6, frames * n,
                                         [&] { return rng.normal(); });
    const SparseMatrix s = smoothness_matrix(frames, n);
    const double w = 0.8, lambda = std::pow(10.0, rng.uniform(-8, 2));
    const Vector f = Vector::NullaryExpr(j.rows() + s.rows(), [&] { return rng.normal(); });
    LMStepInfo info;
    const Vector dq = lm_step(SparseMatrix(j.sparseView()), f, lambda, w, s, &info);
    // Dense oracle of the same system.
    const Matrix sd(s);
    const Matrix a = j.transpose() * j + lambda * Matrix::Identity(j.cols(), j.cols()) +
                     w * sd.transpose() * sd;
    const Vector g = j.transpose() * f.head(j.rows()) +
                     std::sqrt(w) * sd.transpose() * f.tail(s.rows());
    EXPECT_LE((a * dq + g).norm(), 1e-8 * g.norm());
    EXPECT_LE(info.relative_residual, 1e-8);
  }
}

TEST(LmStep, SingularWithoutDamping) {
  SparseMatrix jac(2, 2);
  jac.insert(0, 0) = 1.0;  // second column is zero
  EXPECT_THROW(lm_step(jac, Vector::Ones(2), 0.0, 0.0, smoothness_matrix(1, 2)),
               NumericalError);
}

TEST(RetargetSequence, RecoversSelfConsistentTargets) {
  Rng rng(21);
  for (int trial = 0; trial < 5; ++trial) {
    const RobotModel m = random_chain(rng, 6 + trial);
    const Matrix truth = smooth_trajectory(rng, m, 40);
    RetargetProblem p = targets_from(m, truth);
    p.w_smooth = 1e-4;
    const RetargetResult res = retarget_sequence(m, p);
    EXPECT_LT(res.mean_keypoint_error, 1e-4) << "trial " << trial << " "
                                             << res.stop_reason;
    for (std::size_t i = 1; i < res.objective_history.size(); ++i)
      EXPECT_LT(res.objective_history[i], res.objective_history[i - 1]);
    for (Eigen::Index t = 0; t < res.joints.rows(); ++t)
      EXPECT_TRUE(within_limits(res.joints.row(t).transpose(), m));
  }
}

TEST(RetargetSequence, WarmStartRecoversLongSequences) {
  Rng rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const RobotModel m = random_chain(rng, 6 + trial % 7);
    const Matrix truth = smooth_trajectory(rng, m, 60);
    RetargetProblem p = targets_from(m, truth);
    p.w_smooth = 1e-4;
    const Matrix init = warm_start_trajectory(m, p);
    for (Eigen::Index t = 0; t < init.rows(); ++t)
      EXPECT_TRUE(within_limits(init.row(t).transpose(), m));
    const RetargetResult res = retarget_sequence(m, p, LMConfig{}, init);
    EXPECT_LT(res.mean_keypoint_error, 1e-4) << "trial " << trial;
  }
}

TEST(RetargetSequence, RecoversWithOrientationTargets) {
  Rng rng(23);
  RobotModel m = random_chain(rng, 7);
  m.end_effectors = {6, 3};
  const Matrix truth = smooth_trajectory(rng, m, 30);
  RetargetProblem p = targets_from(m, truth, true);
  p.w_ori = 0.5;
  p.w_smooth = 1e-4;
  const RetargetResult res = retarget_sequence(m, p);
  EXPECT_LT(res.mean_keypoint_error, 1e-4) << res.stop_reason;
}

TEST(RetargetSequence, TimeInvariantProblemGivesConstantResult) {
  Rng rng(5);
  const RobotModel m = random_chain(rng, 5);
  const Vector q = testing::random_configuration(rng, m);
  RetargetProblem p = targets_from(m, q.transpose().replicate(6, 1));
  p.w_smooth = 0.1;
  const RetargetResult res = retarget_sequence(m, p);
  for (Eigen::Index t = 1; t < res.joints.rows(); ++t)
    EXPECT_LT((res.joints.row(t) - res.joints.row(0)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(RetargetSequence, UnreachableTargetStopsAtWorkspaceBoundary) {
  const RobotModel m = testing::planar_arm(2);
  RetargetProblem p;
  p.keypoints = {0};
  RetargetFrame fr;
  fr.positions.resize(1, 3);
  fr.positions << 0.0, 3.0, 0.0;  // radius 3, reach 2
  p.frames = {fr, fr, fr};
  p.w_smooth = 0.01;
  Matrix q0(3, 2);
  q0 << 0.3, 0.4, 0.3, 0.4, 0.3, 0.4;
  const RetargetResult res = retarget_sequence(m, p, LMConfig{}, q0);
  for (Eigen::Index t = 0; t < 3; ++t) EXPECT_NEAR(res.frame_rmse[t], 1.0, 1e-6);
  for (std::size_t i = 1; i < res.objective_history.size(); ++i)
    EXPECT_LT(res.objective_history[i], res.objective_history[i - 1]);
}

TEST(RetargetSequence, RejectsInfeasibleInitialTrajectory) {
  const RobotModel m = testing::planar_arm(2, 1.0);
  RetargetProblem p = targets_from(m, Matrix::Zero(2, 2));
  Matrix q0 = Matrix::Zero(2, 2);
  q0(1, 0) = 1.5;
  EXPECT_THROW(retarget_sequence(m, p, LMConfig{}, q0), InputError);
}

TEST(RetargetSequence, ActiveLimitsAreRespectedExactly) {
  const RobotModel m = testing::planar_arm(2, 0.5);
  RetargetProblem p;
  p.keypoints = {0};
  RetargetFrame fr;
  fr.positions.resize(1, 3);
  fr.positions << -1.0, 1.0, 0.0;  // needs far more than 0.5 rad
  p.frames = {fr, fr};
  const RetargetResult res = retarget_sequence(m, p);
  EXPECT_LE(res.joints.maxCoeff(), 0.5);
  EXPECT_GE(res.joints.minCoeff(), -0.5);
  EXPECT_DOUBLE_EQ(res.joints(0, 0), 0.5);
}

TEST(RetargetSequence, SmoothnessWeightNeverIncreasesVariation) {
  Rng rng(31);
  for (int trial = 0; trial < 3; ++trial) {
    const RobotModel m = random_chain(rng, 6);
    const Matrix truth = smooth_trajectory(rng, m, 20);
    RetargetProblem p = targets_from(m, truth);
    for (auto& fr : p.frames)  // noisy targets so smoothing has work to do
      fr.positions += 0.02 * Eigen::MatrixX3d::NullaryExpr(
                                 fr.positions.rows(), 3, [&] { return rng.normal(); });
    double previous = std::numeric_limits<double>::infinity();
    for (double w : {0.0, 1e-3, 1e-2, 1e-1, 1.0, 10.0}) {
      p.w_smooth = w;
      LMConfig cfg;
      cfg.max_outer_iterations = 500;
      const RetargetResult res = retarget_sequence(m, p, cfg, truth);
      const double tv = total_variation_sq(res.joints);
      EXPECT_LE(tv, previous * (1.0 + 1e-6)) << "w_smooth " << w;
      previous = tv;
    }
  }
}

// Independent damped-least-squares IK for one frame: (JᵀJ + λI)Δq = −Jᵀe,
// same accept/reject schedule, dense algebra only.
Vector reference_dls(const RobotModel& m, const Eigen::MatrixX3d& target,
                     Vector q, const LMConfig& cfg) {
  const auto error = [&](const Vector& x) {
    Vector e(3 * m.num_keypoints());
    for (int k = 0; k < m.num_keypoints(); ++k)
      e.segment<3>(3 * k) = testing::oracle_keypoint(m, x, k) - target.row(k).transpose();
    return e;
  };
  double lambda = cfg.lambda_init;
  Vector e = error(q);
  for (int it = 0; it < cfg.max_outer_iterations; ++it) {
    if (e.squaredNorm() <= cfg.residual_tolerance) break;
    const Matrix jac = testing::central_difference(error, q, 1e-7);
    bool accepted = false;
    double step = 0;
    while (true) {
      const Matrix a = jac.transpose() * jac + lambda * Matrix::Identity(q.size(), q.size());
      Vector cand = q + a.ldlt().solve(-jac.transpose() * e);
      for (int j = 0; j < m.num_joints(); ++j)
        cand[j] = std::clamp(cand[j], m.joints[j].lower, m.joints[j].upper);
      const Vector ec = error(cand);
      if (ec.squaredNorm() < e.squaredNorm()) {
        step = (cand - q).cwiseAbs().maxCoeff();
        q = cand;
        e = ec;
        lambda = std::max(lambda / cfg.lambda_decrease, cfg.lambda_min);
        accepted = true;
        break;
      }
      if (lambda >= cfg.lambda_max) break;
      lambda = std::min(lambda * cfg.lambda_increase, cfg.lambda_max);
    }
    if (!accepted || step <= cfg.step_tolerance) break;
  }
  return q;
}

TEST(RetargetSequence, SingleFrameReducesToDampedLeastSquaresIK) {
  Rng rng(41);
  for (int trial = 0; trial < 10; ++trial) {
    const RobotModel m = random_chain(rng, 5);
    const Matrix truth = smooth_trajectory(rng, m, 1);
    const RetargetProblem p = targets_from(m, truth);
    const LMConfig cfg;
    const RetargetResult res = retarget_sequence(m, p, cfg);
    const Vector dls = reference_dls(m, p.frames[0].positions, m.mid_range(), cfg);
    const Vec3 tip_a = forward_kinematics(m, res.joints.row(0).transpose()).back().position;
    const Vec3 tip_b = testing::oracle_keypoint(m, dls, m.num_keypoints() - 1);
    EXPECT_LT((tip_a - tip_b).norm(), 1e-6) << "trial " << trial;
    EXPECT_LT((res.joints.row(0).transpose() - dls).cwiseAbs().maxCoeff(), 1e-4);
  }
}

TEST(RetargetIo, MotionFileAndResultRoundTrip) {
  Rng rng(8);
  RobotModel m = random_chain(rng, 4);
  m.end_effectors = {3};
  MotionTargets mt;
  mt.fps = 30.0;
  mt.problem = targets_from(m, smooth_trajectory(rng, m, 3), true);
  const io::Json j = motion_targets_to_json(mt, m);
  const MotionTargets back = motion_targets_from_json(j, m);
  EXPECT_EQ(motion_targets_to_json(back, m), j);

  mt.problem.w_smooth = 0.01;
  const RetargetResult res = retarget_sequence(m, mt.problem);
  const io::Json rj = retarget_result_to_json(res, m, mt.fps);
  EXPECT_EQ(retarget_result_to_json(retarget_result_from_json(rj, m), m, mt.fps), rj);
}

}  // namespace
}  // namespace hwbc
