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

// Whole-sequence retargeting: every frame's joint vector is solved jointly by
// Levenberg-Marquardt on the stacked residual
//
//   f = [ x_robot,t(q_t) − x_target,t ; √w_ori·Δr_t(q_t) ]_{t=1..T}
//       [ √w_smooth·(q_t − q_{t−1}) ]_{t=2..T}
//
// with the damped normal equations (JᵀJ + λI + w_smooth·SᵀS)Δq = −g and a
// box projection onto the joint limits after every update.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "hwbc/model.hpp"

namespace hwbc {

using SparseMatrix = Eigen::SparseMatrix<double>;

struct RetargetFrame {
  Eigen::MatrixX3d positions;  // one row per targeted keypoint
  // Indexed like RobotModel::end_effectors; empty when the frame has none.
  std::vector<std::optional<Mat3>> rotations;
};

struct RetargetProblem {
  std::vector<int> keypoints;  // model keypoint indices, row order of targets
  std::vector<RetargetFrame> frames;
  double w_ori = 0.0;
  double w_smooth = 0.0;

  int num_frames() const { return static_cast<int>(frames.size()); }

  void validate(const RobotModel& model) const {
    require(!frames.empty(), "retarget problem needs at least one frame");
    require(std::isfinite(w_ori) && w_ori >= 0.0, "w_ori must be >= 0");
    require(std::isfinite(w_smooth) && w_smooth >= 0.0, "w_smooth must be >= 0");
    for (int k : keypoints)
      require(k >= 0 && k < model.num_keypoints(),
              "target keypoint index out of range");
    const auto num_ee = model.end_effectors.size();
    for (std::size_t t = 0; t < frames.size(); ++t) {
      const RetargetFrame& fr = frames[t];
      const std::string where = "frame " + std::to_string(t) + ": ";
      require(fr.positions.rows() == static_cast<Eigen::Index>(keypoints.size()),
              where + "target count does not match keypoint list");
      require(fr.positions.allFinite(), where + "non-finite target position");
      require(fr.rotations.empty() || fr.rotations.size() == num_ee,
              where + "rotation list must match the end effector list");
      for (const auto& r : fr.rotations)
        if (r && (!r->allFinite() ||
                  so3::orthonormality_defect(*r) > kOrthonormalTolerance))
          throw InputError(where + "target rotation is not orthonormal");
    }
  }

  // Orientation blocks only exist for w_ori > 0.
  int orientation_targets(int t) const {
    if (w_ori <= 0.0) return 0;
    int e = 0;
    for (const auto& r : frames[t].rotations) e += r.has_value();
    return e;
  }

  Eigen::Index data_rows() const {
    Eigen::Index rows = 0;
    for (int t = 0; t < num_frames(); ++t)
      rows += 3 * static_cast<Eigen::Index>(keypoints.size()) +
              3 * orientation_targets(t);
    return rows;
  }

  Eigen::Index smoothness_rows(int n) const {
    return w_smooth > 0.0 ? static_cast<Eigen::Index>(num_frames() - 1) * n : 0;
  }
};

struct LMConfig {
  double lambda_init = 1e-3;
  double lambda_increase = 2.0;
  double lambda_decrease = 3.0;
  double lambda_min = 1e-12;
  double lambda_max = 1e12;
  int max_outer_iterations = 200;
  double step_tolerance = 1e-12;      // max-abs joint change of an accepted step
  double residual_tolerance = 1e-20;  // objective value

  void validate() const {
    require(lambda_init > 0.0, "lambda_init must be > 0");
    require(lambda_increase > 1.0 && lambda_decrease > 1.0,
            "lambda factors must be > 1");
    require(lambda_min > 0.0 && lambda_max >= lambda_min,
            "lambda bounds must be positive and ordered");
    require(max_outer_iterations > 0, "max_outer_iterations must be > 0");
    require(step_tolerance > 0.0 && residual_tolerance > 0.0,
            "tolerances must be > 0");
  }
};

struct RetargetResult {
  Matrix joints;  // T×n
  std::vector<double> objective_history;  // initial value, then each accepted step
  Vector frame_rmse;                      // per frame, over targeted keypoints (m)
  double mean_keypoint_error = 0.0;       // mean Euclidean error over all targets (m)
  int iterations = 0;
  double final_lambda = 0.0;
  std::string stop_reason;
};

// Block-bidiagonal (−I, I) difference operator, ((T−1)n × Tn).
inline SparseMatrix smoothness_matrix(int frames, int n) {
  require(frames >= 1 && n >= 1, "smoothness_matrix: T and n must be >= 1");
  SparseMatrix s(static_cast<Eigen::Index>(frames - 1) * n,
                 static_cast<Eigen::Index>(frames) * n);
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(2 * (frames - 1) * n));
  for (int t = 0; t + 1 < frames; ++t) {
    for (int j = 0; j < n; ++j) {
      const int row = t * n + j;
      trips.emplace_back(row, t * n + j, -1.0);
      trips.emplace_back(row, (t + 1) * n + j, 1.0);
    }
  }
  s.setFromTriplets(trips.begin(), trips.end());
  return s;
}

namespace detail {

inline void check_trajectory(const RetargetProblem& problem,
                             const RobotModel& model, const Matrix& q) {
  if (q.rows() != problem.num_frames() || q.cols() != model.num_joints())
    throw InputError("trajectory must be " +
                     std::to_string(problem.num_frames()) + "x" +
                     std::to_string(model.num_joints()));
  if (!q.allFinite()) throw InputError("trajectory contains NaN/Inf");
}

inline Vector stack(const Matrix& q) {
  const Matrix qt = q.transpose();  // column-major: frames become contiguous
  return Eigen::Map<const Vector>(qt.data(), qt.size());
}

inline Matrix unstack(const Vector& v, int frames, int n) {
  return Eigen::Map<const Matrix>(v.data(), n, frames).transpose();
}

}  // namespace detail

inline Vector build_residuals(const RetargetProblem& problem,
                              const RobotModel& model, const Matrix& q) {
  detail::check_trajectory(problem, model, q);
  const int frames = problem.num_frames();
  const int n = model.num_joints();
  Vector f(problem.data_rows() + problem.smoothness_rows(n));
  const double sqrt_ori = std::sqrt(problem.w_ori);
  Eigen::Index row = 0;
  for (int t = 0; t < frames; ++t) {
    const auto poses = forward_kinematics(model, q.row(t).transpose());
    const RetargetFrame& fr = problem.frames[t];
    for (std::size_t k = 0; k < problem.keypoints.size(); ++k, row += 3)
      f.segment<3>(row) = poses[problem.keypoints[k]].position -
                          fr.positions.row(k).transpose();
    if (problem.w_ori > 0.0) {
      for (std::size_t e = 0; e < fr.rotations.size(); ++e) {
        if (!fr.rotations[e]) continue;
        const Mat3& actual = poses[model.end_effectors[e]].rotation;
        f.segment<3>(row) = sqrt_ori * orientation_error(actual, *fr.rotations[e]);
        row += 3;
      }
    }
  }
  if (problem.w_smooth > 0.0) {
    const double sqrt_smooth = std::sqrt(problem.w_smooth);
    for (int t = 1; t < frames; ++t, row += n)
      f.segment(row, n) = sqrt_smooth * (q.row(t) - q.row(t - 1)).transpose();
  }
  return f;
}

inline double retarget_objective(const RetargetProblem& problem,
                                 const RobotModel& model, const Matrix& q) {
  return build_residuals(problem, model, q).squaredNorm();
}

// Jacobian of build_residuals with respect to vec(Q) (frame-major). With
// include_smoothness = false only the position/orientation rows are built,
// which is the J that lm_step expects.
inline SparseMatrix residual_jacobian(const RetargetProblem& problem,
                                      const RobotModel& model, const Matrix& q,
                                      bool include_smoothness = true) {
  detail::check_trajectory(problem, model, q);
  const int frames = problem.num_frames();
  const int n = model.num_joints();
  const Eigen::Index rows =
      problem.data_rows() + (include_smoothness ? problem.smoothness_rows(n) : 0);
  std::vector<Eigen::Triplet<double>> trips;
  const double sqrt_ori = std::sqrt(problem.w_ori);
  Eigen::Index row = 0;
  for (int t = 0; t < frames; ++t) {
    const KinematicState ks = forward_kinematics_full(model, q.row(t).transpose());
    const int col0 = t * n;
    const auto emit = [&](const Eigen::Matrix3Xd& block) {
      for (int j = 0; j < n; ++j)
        for (int r = 0; r < 3; ++r)
          if (block(r, j) != 0.0) trips.emplace_back(row + r, col0 + j, block(r, j));
      row += 3;
    };
    for (int k : problem.keypoints) emit(position_jacobian(model, ks, k));
    if (problem.w_ori > 0.0) {
      const RetargetFrame& fr = problem.frames[t];
      for (std::size_t e = 0; e < fr.rotations.size(); ++e) {
        if (!fr.rotations[e]) continue;
        const int kp = model.end_effectors[e];
        const Mat3& target = *fr.rotations[e];
        const Vec3 r = orientation_error(ks.keypoints[kp].rotation, target);
        // actual → exp([ω])·actual gives log(targetᵀ·actual) a left
        // perturbation by targetᵀω.
        const Eigen::Matrix3Xd block = sqrt_ori * so3::left_jacobian_inverse(r) *
                                       target.transpose() *
                                       rotation_jacobian(model, ks, kp);
        emit(block);
      }
    }
  }
  if (include_smoothness && problem.w_smooth > 0.0) {
    const double s = std::sqrt(problem.w_smooth);
    for (int t = 1; t < frames; ++t) {
      for (int j = 0; j < n; ++j) {
        trips.emplace_back(row + j, (t - 1) * n + j, -s);
        trips.emplace_back(row + j, t * n + j, s);
      }
      row += n;
    }
  }
  SparseMatrix jac(rows, static_cast<Eigen::Index>(frames) * n);
  jac.setFromTriplets(trips.begin(), trips.end());
  return jac;
}

struct LMStepInfo {
  double relative_residual = 0.0;  // ‖AΔq + g‖ / ‖g‖
};

// Solves (JᵀJ + λI + w_smooth·SᵀS)Δq = −g. J holds the position/orientation
// rows only; f is the full stacked residual, whose trailing smoothness rows
// (present iff w_smooth > 0) enter g through their Jacobian √w_smooth·S.
inline Vector lm_step(const SparseMatrix& jac, const Eigen::Ref<const Vector>& f,
                      double lambda, double w_smooth, const SparseMatrix& s,
                      LMStepInfo* info = nullptr) {
  require(lambda >= 0.0 && std::isfinite(lambda), "lm_step: lambda must be >= 0");
  require(w_smooth >= 0.0, "lm_step: w_smooth must be >= 0");
  const Eigen::Index dim = jac.cols();
  const Eigen::Index smooth_rows = w_smooth > 0.0 ? s.rows() : 0;
  require(f.size() == jac.rows() + smooth_rows,
          "lm_step: residual length does not match the Jacobian rows");
  require(smooth_rows == 0 || s.cols() == dim,
          "lm_step: smoothness matrix has wrong width");
  if (!f.allFinite()) throw NumericalError("lm_step: non-finite residual");

  Vector g = jac.transpose() * f.head(jac.rows());
  SparseMatrix a = SparseMatrix(jac.transpose()) * jac;
  if (smooth_rows > 0) {
    g += std::sqrt(w_smooth) * (s.transpose() * f.tail(smooth_rows));
    a += w_smooth * (SparseMatrix(s.transpose()) * s);
  }
  SparseMatrix damping(dim, dim);
  damping.setIdentity();
  a += lambda * damping;

  const double gnorm = g.norm();
  if (gnorm == 0.0) {
    if (info) info->relative_residual = 0.0;
    return Vector::Zero(dim);
  }
  Eigen::SimplicialLDLT<SparseMatrix> solver(a);
  if (solver.info() != Eigen::Success)
    throw NumericalError("lm_step: factorization failed (use lambda > 0)");
  const Vector& d = solver.vectorD();
  const double dmax = d.cwiseAbs().maxCoeff();
  if (!(d.minCoeff() > 1e-14 * dmax))
    throw NumericalError("lm_step: singular system (use lambda > 0)");

  Vector dq = solver.solve(-g);
  // Iterative refinement for poorly damped systems.
  for (int k = 0; k < 3; ++k) {
    const Vector r = -g - a * dq;
    if (r.norm() <= 1e-10 * gnorm) break;
    dq += solver.solve(r);
  }
  if (!dq.allFinite()) throw NumericalError("lm_step: non-finite step");
  if (info) info->relative_residual = (a * dq + g).norm() / gnorm;
  return dq;
}

inline RetargetResult retarget_sequence(const RobotModel& model,
                                        const RetargetProblem& problem,
                                        const LMConfig& config,
                                        const Matrix& q_init) {
  problem.validate(model);
  config.validate();
  detail::check_trajectory(problem, model, q_init);
  const int frames = problem.num_frames();
  const int n = model.num_joints();
  for (int t = 0; t < frames; ++t)
    if (!within_limits(q_init.row(t).transpose(), model))
      throw InputError("initial trajectory violates joint limits at frame " +
                       std::to_string(t));

  const SparseMatrix s = smoothness_matrix(frames, n);
  RetargetResult res;
  Matrix q = q_init;
  Vector f = build_residuals(problem, model, q);
  double obj = f.squaredNorm();
  if (!std::isfinite(obj)) throw NumericalError("initial objective is not finite");
  res.objective_history.push_back(obj);
  double lambda = config.lambda_init;
  res.stop_reason = "max_iterations";

  for (int it = 0; it < config.max_outer_iterations; ++it) {
    if (obj <= config.residual_tolerance) {
      res.stop_reason = "residual_tolerance";
      break;
    }
    const SparseMatrix jac = residual_jacobian(problem, model, q, false);
    bool accepted = false;
    double step = 0.0;
    while (true) {
      const Vector dq = lm_step(jac, f, lambda, problem.w_smooth, s);
      Matrix cand = q + detail::unstack(dq, frames, n);
      for (int t = 0; t < frames; ++t)
        cand.row(t) = clamp_to_limits(cand.row(t).transpose(), model).transpose();
      const Vector f_cand = build_residuals(problem, model, cand);
      const double obj_cand = f_cand.squaredNorm();
      if (!std::isfinite(obj_cand))
        throw NumericalError("objective became non-finite at iteration " +
                             std::to_string(it) + " (lambda " +
                             std::to_string(lambda) + ")");
      if (obj_cand < obj) {
        step = (cand - q).cwiseAbs().maxCoeff();
        q = std::move(cand);
        f = f_cand;
        obj = obj_cand;
        res.objective_history.push_back(obj);
        lambda = std::max(lambda / config.lambda_decrease, config.lambda_min);
        accepted = true;
        break;
      }
      if (lambda >= config.lambda_max) break;
      lambda = std::min(lambda * config.lambda_increase, config.lambda_max);
    }
    res.iterations = it + 1;
    if (!accepted) {
      res.stop_reason = "no_decrease";
      break;
    }
    if (step <= config.step_tolerance) {
      res.stop_reason = "step_tolerance";
      break;
    }
  }

  res.joints = q;
  res.final_lambda = lambda;
  res.frame_rmse.resize(frames);
  double err_sum = 0.0;
  const auto num_kp = static_cast<double>(problem.keypoints.size());
  for (int t = 0; t < frames; ++t) {
    const Eigen::MatrixX3d p = keypoint_positions(model, q.row(t).transpose());
    double sq = 0.0;
    for (std::size_t k = 0; k < problem.keypoints.size(); ++k) {
      const double e = (p.row(problem.keypoints[k]) -
                        problem.frames[t].positions.row(k)).norm();
      sq += e * e;
      err_sum += e;
    }
    res.frame_rmse[t] = num_kp > 0 ? std::sqrt(sq / num_kp) : 0.0;
  }
  res.mean_keypoint_error = num_kp > 0 ? err_sum / (num_kp * frames) : 0.0;
  return res;
}

// Frame-by-frame continuation: frame 0 is solved from mid-range, every later
// frame from its predecessor's solution, with the smoothness term dropped.
// The result is a limit-feasible initializer for the joint solve.
inline Matrix warm_start_trajectory(const RobotModel& model,
                                    const RetargetProblem& problem,
                                    const LMConfig& config = {}) {
  problem.validate(model);
  const int frames = problem.num_frames();
  Matrix q(frames, model.num_joints());
  Matrix prev = model.mid_range().transpose();
  RetargetProblem single;
  single.keypoints = problem.keypoints;
  single.w_ori = problem.w_ori;
  single.frames.resize(1);
  for (int t = 0; t < frames; ++t) {
    single.frames[0] = problem.frames[t];
    prev = retarget_sequence(model, single, config, prev).joints;
    q.row(t) = prev.row(0);
  }
  return q;
}

// Mid-range joint angles replicated over every frame.
inline RetargetResult retarget_sequence(const RobotModel& model,
                                        const RetargetProblem& problem,
                                        const LMConfig& config = {}) {
  const Matrix q0 = model.mid_range().transpose().replicate(problem.num_frames(), 1);
  return retarget_sequence(model, problem, config, q0);
}

}  // namespace hwbc
