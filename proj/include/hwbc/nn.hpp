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

// Dense layers over column-batched inputs (one sample per column), with
// hand-written backward passes and an Adam optimizer.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hwbc/core.hpp"
#include "hwbc/error.hpp"
#include "hwbc/io.hpp"

namespace hwbc::nn {

enum class Activation { kElu, kIdentity };

inline std::string activation_name(Activation a) {
  return a == Activation::kElu ? "elu" : "identity";
}

inline Activation activation_from_name(const std::string& s) {
  if (s == "elu") return Activation::kElu;
  if (s == "identity") return Activation::kIdentity;
  throw InputError("unknown activation '" + s + "'");
}

inline Matrix activate(Activation a, const Matrix& z) {
  if (a == Activation::kIdentity) return z;
  return z.unaryExpr([](double x) { return x > 0.0 ? x : std::expm1(x); });
}

// d act / d z, given both z and act(z).
inline Matrix activation_slope(Activation a, const Matrix& z, const Matrix& out) {
  if (a == Activation::kIdentity) return Matrix::Ones(z.rows(), z.cols());
  return z.binaryExpr(out, [](double x, double y) { return x > 0.0 ? 1.0 : y + 1.0; });
}

struct Dense {
  Matrix w;  // out × in
  Vector b;

  int in() const { return static_cast<int>(w.cols()); }
  int out() const { return static_cast<int>(w.rows()); }
  static Dense zeros(int in, int out) { return {Matrix::Zero(out, in), Vector::Zero(out)}; }
};

using Layers = std::vector<Dense>;

// Sizes {d0, d1, ..., dL} → L layers.
inline Layers zero_layers(const std::vector<int>& sizes) {
  Layers layers;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i)
    layers.push_back(Dense::zeros(sizes[i], sizes[i + 1]));
  return layers;
}

// Uniform in ±1/√fan_in for weights and biases.
inline void init_fan_in(Dense& d, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(d.in()));
  for (Eigen::Index r = 0; r < d.w.rows(); ++r)
    for (Eigen::Index c = 0; c < d.w.cols(); ++c) d.w(r, c) = rng.uniform(-bound, bound);
  for (Eigen::Index r = 0; r < d.b.size(); ++r) d.b[r] = rng.uniform(-bound, bound);
}

inline void init_fan_in(Layers& layers, Rng& rng) {
  for (auto& d : layers) init_fan_in(d, rng);
}

struct MlpCache {
  std::vector<Matrix> inputs;  // input to each layer
  std::vector<Matrix> pre;     // pre-activations
  std::vector<Matrix> post;    // outputs
};

inline void check_finite(const Matrix& m, const char* where) {
  if (!all_finite(m)) {
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      if (!all_finite(m.col(c)))
        throw NumericalError(std::string(where) + ": non-finite activation in sample " +
                             std::to_string(c));
  }
}

// Hidden layers use `act`; the last layer uses it only if activate_last.
inline Matrix mlp_forward(const Layers& layers, Activation act, bool activate_last,
                          const Matrix& x, MlpCache* cache = nullptr) {
  if (cache) *cache = {};
  Matrix h = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const Dense& d = layers[l];
    require(h.rows() == d.in(), "layer " + std::to_string(l) + " expects " +
                                    std::to_string(d.in()) + " inputs, got " +
                                    std::to_string(h.rows()));
    Matrix z = d.w * h;
    z.colwise() += d.b;
    const bool last = l + 1 == layers.size();
    Matrix a = (!last || activate_last) ? activate(act, z) : z;
    if (cache) {
      cache->inputs.push_back(std::move(h));
      cache->pre.push_back(std::move(z));
      cache->post.push_back(a);
    }
    h = std::move(a);
  }
  return h;
}

// Accumulates parameter gradients into `grads` and returns d loss / d x.
inline Matrix mlp_backward(const Layers& layers, Activation act, bool activate_last,
                           const MlpCache& cache, Matrix d_out, Layers& grads) {
  for (std::size_t l = layers.size(); l-- > 0;) {
    const bool last = l + 1 == layers.size();
    if (!last || activate_last)
      d_out.array() *= activation_slope(act, cache.pre[l], cache.post[l]).array();
    grads[l].w.noalias() += d_out * cache.inputs[l].transpose();
    grads[l].b += d_out.rowwise().sum();
    d_out = layers[l].w.transpose() * d_out;
  }
  return d_out;
}

// Visits every parameter tensor as a flat span, in a fixed order.
template <typename F>
void visit(Dense& d, F&& f) {
  f(std::span<double>(d.w.data(), static_cast<std::size_t>(d.w.size())));
  f(std::span<double>(d.b.data(), static_cast<std::size_t>(d.b.size())));
}

template <typename F>
void visit(Layers& layers, F&& f) {
  for (auto& d : layers) {
    f(std::span<double>(d.w.data(), static_cast<std::size_t>(d.w.size())));
    f(std::span<double>(d.b.data(), static_cast<std::size_t>(d.b.size())));
  }
}

template <typename F>
void visit(const Layers& layers, F&& f) {
  for (const auto& d : layers) {
    f(std::span<const double>(d.w.data(), static_cast<std::size_t>(d.w.size())));
    f(std::span<const double>(d.b.data(), static_cast<std::size_t>(d.b.size())));
  }
}

template <typename P>
std::size_t param_count(const P& p) {
  std::size_t n = 0;
  visit(p, [&](std::span<const double> s) { n += s.size(); });
  return n;
}

template <typename P>
Vector flatten(const P& p) {
  Vector v(static_cast<Eigen::Index>(param_count(p)));
  Eigen::Index k = 0;
  visit(p, [&](std::span<const double> s) {
    for (double x : s) v[k++] = x;
  });
  return v;
}

template <typename P>
void unflatten(P& p, const Eigen::Ref<const Vector>& v) {
  require(static_cast<std::size_t>(v.size()) == param_count(p),
          "unflatten: parameter count mismatch");
  Eigen::Index k = 0;
  visit(p, [&](std::span<double> s) {
    for (double& x : s) x = v[k++];
  });
}

template <typename P>
void set_zero(P& p) {
  visit(p, [](std::span<double> s) {
    for (double& x : s) x = 0.0;
  });
}

template <typename P>
bool params_finite(const P& p) {
  bool ok = true;
  visit(p, [&](std::span<const double> s) {
    for (double x : s) ok = ok && std::isfinite(x);
  });
  return ok;
}

struct AdamConfig {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const {
    require(lr > 0.0 && std::isfinite(lr), "adam: learning rate must be positive");
    require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0,
            "adam: betas must lie in [0, 1)");
    require(eps > 0.0, "adam: epsilon must be positive");
  }
};

template <typename P>
class Adam {
 public:
  Adam(const P& shape, AdamConfig config) : config_(config), m_(shape), v_(shape) {
    config_.validate();
    set_zero(m_);
    set_zero(v_);
  }

  const AdamConfig& config() const { return config_; }
  std::int64_t steps() const { return t_; }

  void step(P& params, const P& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    std::vector<std::span<double>> ps, ms, vs;
    std::vector<std::span<const double>> gs;
    visit(params, [&](std::span<double> s) { ps.push_back(s); });
    visit(m_, [&](std::span<double> s) { ms.push_back(s); });
    visit(v_, [&](std::span<double> s) { vs.push_back(s); });
    visit(grads, [&](std::span<const double> s) { gs.push_back(s); });
    require(ps.size() == gs.size(), "adam: gradient structure mismatch");
    for (std::size_t k = 0; k < ps.size(); ++k) {
      require(ps[k].size() == gs[k].size(), "adam: gradient shape mismatch");
      for (std::size_t i = 0; i < ps[k].size(); ++i) {
        const double g = gs[k][i];
        ms[k][i] = config_.beta1 * ms[k][i] + (1.0 - config_.beta1) * g;
        vs[k][i] = config_.beta2 * vs[k][i] + (1.0 - config_.beta2) * g * g;
        ps[k][i] -= config_.lr * (ms[k][i] / c1) / (std::sqrt(vs[k][i] / c2) + config_.eps);
      }
    }
  }

 private:
  AdamConfig config_;
  P m_, v_;
  std::int64_t t_ = 0;
};

inline io::Json dense_to_json(const Dense& d) {
  return {{"w", io::from_matrix(d.w)}, {"b", io::from_vector(d.b)}};
}

inline Dense dense_from_json(const io::Json& j, int in, int out) {
  Dense d;
  d.w = io::to_matrix(io::field(j, "w"), in);
  d.b = io::to_vector(io::field(j, "b"));
  require(d.w.rows() == out && d.b.size() == out,
          "layer tensor shape does not match the configuration");
  require(all_finite(d.w) && all_finite(d.b), "layer tensor has non-finite entries");
  return d;
}

inline io::Json layers_to_json(const Layers& layers) {
  io::Json a = io::Json::array();
  for (const auto& d : layers) a.push_back(dense_to_json(d));
  return a;
}

inline Layers layers_from_json(const io::Json& j, const std::vector<int>& sizes) {
  require(j.is_array() && j.size() + 1 == sizes.size(),
          "layer count does not match the configuration");
  Layers layers;
  for (std::size_t i = 0; i < j.size(); ++i)
    layers.push_back(dense_from_json(j[i], sizes[i], sizes[i + 1]));
  return layers;
}

// Largest singular value by power iteration on WᵀW.
inline double spectral_norm(const Matrix& w, int iterations = 200) {
  Vector v = Vector::Ones(w.cols()).normalized();
  double sigma = 0.0;
  for (int i = 0; i < iterations; ++i) {
    const Vector u = w.transpose() * (w * v);
    const double n = u.norm();
    if (n == 0.0) return 0.0;
    v = u / n;
    sigma = std::sqrt(n);
  }
  return sigma;
}

}  // namespace hwbc::nn
