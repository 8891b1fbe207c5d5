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

// Rotation-group helpers: hat/vee, Rodrigues exponential, stabilized
// logarithm, and the inverse left Jacobian used to differentiate log().

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Geometry>

#include "hwbc/core.hpp"

namespace hwbc::so3 {

inline Mat3 hat(const Vec3& w) {
  Mat3 m;
  m << 0.0, -w.z(), w.y(),
       w.z(), 0.0, -w.x(),
      -w.y(), w.x(), 0.0;
  return m;
}

inline Vec3 vee(const Mat3& m) {
  return Vec3(m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1)) * 0.5;
}

// Rotation by |w| about w/|w|.
inline Mat3 exp(const Vec3& w) {
  const double theta = w.norm();
  const Mat3 k = hat(w);
  if (theta < 1e-8) return Mat3::Identity() + k + 0.5 * k * k;
  const double a = std::sin(theta) / theta;
  const double b = (1.0 - std::cos(theta)) / (theta * theta);
  return Mat3::Identity() + a * k + b * k * k;
}

inline Mat3 axis_angle(const Vec3& unit_axis, double angle) {
  return exp(unit_axis * angle);
}

// ‖RᵀR − I‖ (max-abs) plus |det R − 1|.
inline double orthonormality_defect(const Mat3& r) {
  return (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() +
         std::abs(r.determinant() - 1.0);
}

// Rotation vector of r. Near π the axis comes from the symmetric part,
// where the skew part no longer carries it with useful precision.
inline Vec3 log(const Mat3& r) {
  const Vec3 s = vee(r);  // sin(θ)·axis
  const double sin_t = s.norm();
  const double cos_t = std::clamp((r.trace() - 1.0) * 0.5, -1.0, 1.0);
  const double theta = std::atan2(sin_t, cos_t);
  if (theta < 1e-6) {
    // θ/sinθ = 1 + θ²/6 + O(θ⁴)
    return s * (1.0 + theta * theta / 6.0);
  }
  if (theta < std::numbers::pi - 1e-3) return s * (theta / sin_t);

  // (R + Rᵀ)/2 = cosθ·I + (1 − cosθ)·a·aᵀ
  const Mat3 b = (0.5 * (r + r.transpose()) - cos_t * Mat3::Identity()) /
                 (1.0 - cos_t);
  Eigen::Index k;
  b.diagonal().maxCoeff(&k);
  Vec3 axis = b.col(k) / std::sqrt(std::max(b(k, k), 1e-300));
  axis.normalize();
  if (axis.dot(s) < 0.0) axis = -axis;
  return axis * theta;
}

// Inverse of the left Jacobian: d log(exp([δ])·R) / dδ at δ = 0.
inline Mat3 left_jacobian_inverse(const Vec3& phi) {
  const double theta = phi.norm();
  const Mat3 k = hat(phi);
  if (theta < 1e-6) return Mat3::Identity() - 0.5 * k + k * k / 12.0;
  const double coef = 1.0 / (theta * theta) -
                      (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
  return Mat3::Identity() - 0.5 * k + coef * k * k;
}

// Projects a near-rotation back onto SO(3).
inline Mat3 renormalize(const Mat3& r) {
  Eigen::Quaterniond q(r);
  q.normalize();
  return q.toRotationMatrix();
}

}  // namespace hwbc::so3
