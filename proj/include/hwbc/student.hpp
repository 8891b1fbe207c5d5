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

// Trainable students sharing the CVAE input layout: the CVAE itself and a
// plain MLP regression baseline with a matched parameter budget.

#include <cmath>
#include <concepts>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <string>
#include <vector>

#include "hwbc/cvae.hpp"
#include "hwbc/nn.hpp"

namespace hwbc {

struct StudentInputs {
  Matrix history;  // history_dim × B
  Matrix text;     // text_dim × B
  Matrix obs;      // obs_dim × B

  int size() const { return static_cast<int>(obs.cols()); }
};

struct TrainStats {
  double loss = 0.0;
  double imitation = 0.0;  // batch mean ‖aᵀ − aˢ‖²
  double kl = 0.0;
};

template <typename S>
concept Student = requires(S s, const S cs, const StudentInputs& in, const CVAEBatch& b,
                           Rng& rng) {
  { cs.act(in) } -> std::convertible_to<Matrix>;
  { s.train_step(b, rng) } -> std::same_as<TrainStats>;
  { cs.config() } -> std::convertible_to<const CVAEConfig&>;
  { cs.to_json() } -> std::convertible_to<io::Json>;
};

class CvaeStudent {
 public:
  CvaeStudent(const CVAEConfig& cfg, std::uint64_t seed, nn::AdamConfig adam = {})
      : cfg_(cfg), params_(init_params(cfg, seed)), adam_(params_, adam) {}
  CvaeStudent(const CVAEConfig& cfg, CVAEParams params, nn::AdamConfig adam = {})
      : cfg_(cfg), params_(std::move(params)), adam_(params_, adam) {
    check_params(params_, cfg_);
  }

  const CVAEConfig& config() const { return cfg_; }
  const CVAEParams& params() const { return params_; }

  Matrix act(const StudentInputs& in) const {
    return inference_batch(params_, cfg_, in.history, in.text, in.obs);
  }

  Matrix latent_mean(const StudentInputs& in) const {
    return encode_batch(params_, cfg_, in.history, in.text).mu;
  }

  Matrix decode_latent(const Matrix& z, const Matrix& obs) const {
    return decode_batch(params_, cfg_, z, obs);
  }

  // Parameters are left untouched when this throws.
  TrainStats train_step(const CVAEBatch& batch, Rng& rng) {
    const Matrix eps = standard_normal(rng, cfg_.latent_dim, batch.size());
    CVAELoss l = loss_and_gradients(params_, cfg_, batch, eps, cfg_.lambda_kl);
    if (!nn::params_finite(l.grad)) throw NumericalError("cvae gradient is not finite");
    adam_.step(params_, l.grad);
    return {l.loss, l.reconstruction, l.kl};
  }

  io::Json to_json() const { return cvae_to_json(cfg_, params_); }

 private:
  CVAEConfig cfg_;
  CVAEParams params_;
  nn::Adam<CVAEParams> adam_;
};

inline std::vector<int> mlp_sizes(const CVAEConfig& cfg, const std::vector<int>& hidden) {
  std::vector<int> s{cfg.encoder_input_dim() + cfg.obs_dim};
  s.insert(s.end(), hidden.begin(), hidden.end());
  s.push_back(cfg.action_dim);
  return s;
}

inline std::size_t layer_param_count(const std::vector<int>& sizes) {
  std::size_t n = 0;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i)
    n += static_cast<std::size_t>(sizes[i] + 1) * static_cast<std::size_t>(sizes[i + 1]);
  return n;
}

// Uniform hidden width, with as many layers as the CVAE's encoder and
// decoder together, whose parameter count is closest to the CVAE's.
inline std::vector<int> matched_mlp_hidden(const CVAEConfig& cfg) {
  const std::size_t target = nn::param_count(zero_params(cfg));
  const int depth = std::max<int>(
      1, static_cast<int>(cfg.encoder_hidden.size() + cfg.decoder_hidden.size()));
  int best = 1;
  std::size_t best_gap = std::numeric_limits<std::size_t>::max();
  int lo = 1, hi = 1 << 16;
  // Parameter count grows with width, so bisect then check neighbours.
  while (lo < hi) {
    const int mid = lo + (hi - lo) / 2;
    if (layer_param_count(mlp_sizes(cfg, std::vector<int>(depth, mid))) < target)
      lo = mid + 1;
    else
      hi = mid;
  }
  for (int w = std::max(1, lo - 1); w <= lo; ++w) {
    const std::size_t n = layer_param_count(mlp_sizes(cfg, std::vector<int>(depth, w)));
    const std::size_t gap = n > target ? n - target : target - n;
    if (gap < best_gap) {
      best_gap = gap;
      best = w;
    }
  }
  return std::vector<int>(depth, best);
}

class MlpStudent {
 public:
  MlpStudent(const CVAEConfig& cfg, std::uint64_t seed, nn::AdamConfig adam = {})
      : MlpStudent(cfg, matched_mlp_hidden(cfg), seed, adam) {}
  MlpStudent(const CVAEConfig& cfg, std::vector<int> hidden, std::uint64_t seed,
             nn::AdamConfig adam = {})
      : cfg_(cfg), hidden_(std::move(hidden)),
        layers_(nn::zero_layers(mlp_sizes(cfg_, hidden_))), adam_(layers_, adam) {
    cfg_.validate();
    Rng rng(seed);
    nn::init_fan_in(layers_, rng);
  }

  MlpStudent(const CVAEConfig& cfg, std::vector<int> hidden, nn::Layers layers,
             nn::AdamConfig adam = {})
      : cfg_(cfg), hidden_(std::move(hidden)), layers_(std::move(layers)), adam_(layers_, adam) {
    cfg_.validate();
    require(nn::params_finite(layers_), "mlp student: parameters are not finite");
  }

  const CVAEConfig& config() const { return cfg_; }
  const nn::Layers& layers() const { return layers_; }
  const std::vector<int>& hidden() const { return hidden_; }

  Matrix act(const StudentInputs& in) const {
    return nn::mlp_forward(layers_, cfg_.activation, false, input(in.history, in.text, in.obs));
  }

  TrainStats train_step(const CVAEBatch& batch, Rng&) {
    const int n = batch.size();
    require(n >= 1, "mlp train_step: empty batch");
    nn::MlpCache cache;
    const Matrix a = nn::mlp_forward(layers_, cfg_.activation, false,
                                     input(batch.history, batch.text, batch.obs), &cache);
    const Matrix diff = a - batch.teacher_action;
    const Eigen::RowVectorXd rec = diff.colwise().squaredNorm();
    for (int c = 0; c < n; ++c)
      if (!std::isfinite(rec[c]))
        throw NumericalError("loss is not finite for sample " + std::to_string(c));
    nn::Layers grads = layers_;
    nn::set_zero(grads);
    nn::mlp_backward(layers_, cfg_.activation, false, cache, (2.0 / n) * diff, grads);
    if (!nn::params_finite(grads)) throw NumericalError("mlp gradient is not finite");
    adam_.step(layers_, grads);
    const double loss = rec.sum() / n;
    return {loss, loss, 0.0};
  }

  io::Json to_json() const {
    return {{"schema", io::schema_tag("mlp_checkpoint")},
            {"config", cvae_config_to_json(cfg_)},
            {"hidden", hidden_},
            {"layers", nn::layers_to_json(layers_)}};
  }

 private:
  Matrix input(const Matrix& history, const Matrix& text, const Matrix& obs) const {
    const Matrix x = encoder_input(cfg_, history, text);
    require(obs.rows() == cfg_.obs_dim && obs.cols() == x.cols(),
            "mlp student: observation has wrong shape");
    Matrix full(x.rows() + obs.rows(), x.cols());
    full << x, obs;
    return full;
  }

  CVAEConfig cfg_;
  std::vector<int> hidden_;
  nn::Layers layers_;
  nn::Adam<nn::Layers> adam_;
};

inline MlpStudent mlp_student_from_json(const io::Json& j, nn::AdamConfig adam = {}) {
  io::check_schema(j, "mlp_checkpoint");
  const CVAEConfig cfg = cvae_config_from_json(io::field(j, "config"));
  const auto hidden = io::get<std::vector<int>>(j, "hidden");
  return MlpStudent(cfg, hidden, nn::layers_from_json(io::field(j, "layers"), mlp_sizes(cfg, hidden)),
                    adam);
}

inline CvaeStudent cvae_student_from_json(const io::Json& j, nn::AdamConfig adam = {}) {
  auto [cfg, params] = cvae_from_json(j);
  return CvaeStudent(cfg, std::move(params), adam);
}

}  // namespace hwbc
