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

// Conditional VAE student: an encoder over (observation history, text
// embedding) producing a diagonal Gaussian latent, and a decoder mapping
// (latent, current observation) to joint targets.
//
// Batched tensors hold one sample per column. The history block is
// time-major, oldest frame first; each frame is the observation followed by
// the previous action when include_past_actions is set.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hwbc/core.hpp"
#include "hwbc/error.hpp"
#include "hwbc/io.hpp"
#include "hwbc/nn.hpp"
#include "hwbc/textenc.hpp"

namespace hwbc {

struct CVAEConfig {
  int obs_dim = 0;
  int action_dim = 0;
  int history_len = 20;  // 2 s at 10 Hz
  int text_dim = kTextDim;
  int latent_dim = 128;
  std::vector<int> encoder_hidden{2048, 1024, 512};
  std::vector<int> decoder_hidden{512, 1024, 2048};
  double lambda_kl = 1e-3;
  double log_sigma_min = -5.0;
  double log_sigma_max = 2.0;
  nn::Activation activation = nn::Activation::kElu;
  bool include_past_actions = true;

  int frame_dim() const { return obs_dim + (include_past_actions ? action_dim : 0); }
  int history_dim() const { return history_len * frame_dim(); }
  int encoder_input_dim() const { return history_dim() + text_dim; }
  int decoder_input_dim() const { return latent_dim + obs_dim; }

  std::vector<int> encoder_sizes() const {
    std::vector<int> s{encoder_input_dim()};
    s.insert(s.end(), encoder_hidden.begin(), encoder_hidden.end());
    return s;
  }
  int encoder_feature_dim() const {
    return encoder_hidden.empty() ? encoder_input_dim() : encoder_hidden.back();
  }
  std::vector<int> decoder_sizes() const {
    std::vector<int> s{decoder_input_dim()};
    s.insert(s.end(), decoder_hidden.begin(), decoder_hidden.end());
    s.push_back(action_dim);
    return s;
  }

  void validate() const {
    require(obs_dim >= 1 && action_dim >= 1 && history_len >= 1 && text_dim >= 1 &&
                latent_dim >= 1,
            "cvae config: dimensions must be >= 1");
    for (int h : encoder_hidden) require(h >= 1, "cvae config: hidden sizes must be >= 1");
    for (int h : decoder_hidden) require(h >= 1, "cvae config: hidden sizes must be >= 1");
    require(lambda_kl >= 0.0 && std::isfinite(lambda_kl), "cvae config: lambda_kl must be >= 0");
    require(log_sigma_min < log_sigma_max, "cvae config: log-sigma clamp is empty");
  }
};

struct CVAEParams {
  nn::Layers encoder;  // trunk, all layers activated
  nn::Dense mu_head;
  nn::Dense log_sigma_head;
  nn::Layers decoder;  // last layer linear
};

template <typename F>
void visit(CVAEParams& p, F&& f) {
  nn::visit(p.encoder, f);
  f(std::span<double>(p.mu_head.w.data(), static_cast<std::size_t>(p.mu_head.w.size())));
  f(std::span<double>(p.mu_head.b.data(), static_cast<std::size_t>(p.mu_head.b.size())));
  f(std::span<double>(p.log_sigma_head.w.data(),
                      static_cast<std::size_t>(p.log_sigma_head.w.size())));
  f(std::span<double>(p.log_sigma_head.b.data(),
                      static_cast<std::size_t>(p.log_sigma_head.b.size())));
  nn::visit(p.decoder, f);
}

template <typename F>
void visit(const CVAEParams& p, F&& f) {
  nn::visit(p.encoder, f);
  for (const nn::Dense* d : {&p.mu_head, &p.log_sigma_head}) {
    f(std::span<const double>(d->w.data(), static_cast<std::size_t>(d->w.size())));
    f(std::span<const double>(d->b.data(), static_cast<std::size_t>(d->b.size())));
  }
  nn::visit(p.decoder, f);
}

inline CVAEParams zero_params(const CVAEConfig& cfg) {
  cfg.validate();
  CVAEParams p;
  p.encoder = nn::zero_layers(cfg.encoder_sizes());
  p.mu_head = nn::Dense::zeros(cfg.encoder_feature_dim(), cfg.latent_dim);
  p.log_sigma_head = nn::Dense::zeros(cfg.encoder_feature_dim(), cfg.latent_dim);
  p.decoder = nn::zero_layers(cfg.decoder_sizes());
  return p;
}

inline CVAEParams init_params(const CVAEConfig& cfg, std::uint64_t seed) {
  CVAEParams p = zero_params(cfg);
  Rng rng(seed);
  nn::init_fan_in(p.encoder, rng);
  nn::init_fan_in(p.mu_head, rng);
  nn::init_fan_in(p.log_sigma_head, rng);
  nn::init_fan_in(p.decoder, rng);
  return p;
}

inline void check_params(const CVAEParams& p, const CVAEConfig& cfg) {
  const CVAEParams ref = zero_params(cfg);
  std::vector<std::size_t> a, b;
  visit(p, [&](std::span<const double> s) { a.push_back(s.size()); });
  visit(ref, [&](std::span<const double> s) { b.push_back(s.size()); });
  require(a == b, "cvae parameters do not match the configuration");
  const auto same = [](const nn::Layers& x, const nn::Layers& y) {
    for (std::size_t i = 0; i < x.size(); ++i)
      if (x[i].w.rows() != y[i].w.rows() || x[i].w.cols() != y[i].w.cols()) return false;
    return true;
  };
  require(same(p.encoder, ref.encoder) && same(p.decoder, ref.decoder) &&
              p.mu_head.w.cols() == ref.mu_head.w.cols() &&
              p.log_sigma_head.w.cols() == ref.log_sigma_head.w.cols(),
          "cvae layer shapes do not match the configuration");
}

struct EncoderOutput {
  Vector mu;
  Vector sigma;
};

// Batched encoder forward pass with everything backward needs.
struct EncoderPass {
  nn::MlpCache trunk;
  Matrix features;
  Matrix mu;
  Matrix raw_log_sigma;
  Matrix log_sigma;
  Matrix sigma;
};

inline Matrix encoder_input(const CVAEConfig& cfg, const Matrix& history, const Matrix& text) {
  require(history.rows() == cfg.history_dim(),
          "encoder: history has " + std::to_string(history.rows()) + " rows, expected " +
              std::to_string(cfg.history_dim()));
  require(text.rows() == cfg.text_dim, "encoder: text embedding has wrong dimension");
  require(history.cols() == text.cols(), "encoder: batch size mismatch");
  Matrix x(cfg.encoder_input_dim(), history.cols());
  x.topRows(cfg.history_dim()) = history;
  x.bottomRows(cfg.text_dim) = text;
  return x;
}

inline EncoderPass encode_batch(const CVAEParams& p, const CVAEConfig& cfg,
                                const Matrix& history, const Matrix& text) {
  EncoderPass e;
  const Matrix x = encoder_input(cfg, history, text);
  e.features = nn::mlp_forward(p.encoder, cfg.activation, true, x, &e.trunk);
  e.mu = p.mu_head.w * e.features;
  e.mu.colwise() += p.mu_head.b;
  e.raw_log_sigma = p.log_sigma_head.w * e.features;
  e.raw_log_sigma.colwise() += p.log_sigma_head.b;
  nn::check_finite(e.mu, "encoder");
  nn::check_finite(e.raw_log_sigma, "encoder");
  e.log_sigma = e.raw_log_sigma.cwiseMax(cfg.log_sigma_min).cwiseMin(cfg.log_sigma_max);
  e.sigma = e.log_sigma.array().exp().matrix();
  return e;
}

inline EncoderOutput encode(const CVAEParams& p, const CVAEConfig& cfg,
                            const Eigen::Ref<const Vector>& history,
                            const Eigen::Ref<const Vector>& text) {
  const EncoderPass e = encode_batch(p, cfg, Matrix(history), Matrix(text));
  return {e.mu.col(0), e.sigma.col(0)};
}

inline Vector reparameterize(const EncoderOutput& out, const Eigen::Ref<const Vector>& eps) {
  require(eps.size() == out.mu.size() && out.sigma.size() == out.mu.size(),
          "reparameterize: dimension mismatch");
  return out.mu + out.sigma.cwiseProduct(eps);
}

inline Matrix decoder_input(const CVAEConfig& cfg, const Matrix& z, const Matrix& obs) {
  require(z.rows() == cfg.latent_dim, "decoder: latent has wrong dimension");
  require(obs.rows() == cfg.obs_dim, "decoder: observation has wrong dimension");
  require(z.cols() == obs.cols(), "decoder: batch size mismatch");
  Matrix x(cfg.decoder_input_dim(), z.cols());
  x.topRows(cfg.latent_dim) = z;
  x.bottomRows(cfg.obs_dim) = obs;
  return x;
}

inline Matrix decode_batch(const CVAEParams& p, const CVAEConfig& cfg, const Matrix& z,
                           const Matrix& obs, nn::MlpCache* cache = nullptr) {
  Matrix a = nn::mlp_forward(p.decoder, cfg.activation, false, decoder_input(cfg, z, obs), cache);
  nn::check_finite(a, "decoder");
  return a;
}

inline Vector decode(const CVAEParams& p, const CVAEConfig& cfg,
                     const Eigen::Ref<const Vector>& z, const Eigen::Ref<const Vector>& obs) {
  return decode_batch(p, cfg, Matrix(z), Matrix(obs)).col(0);
}

inline double kl_divergence(const Eigen::Ref<const Vector>& mu,
                            const Eigen::Ref<const Vector>& sigma) {
  require(mu.size() == sigma.size(), "kl_divergence: dimension mismatch");
  double kl = 0.0;
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    require(sigma[i] > 0.0, "kl_divergence: sigma must be positive");
    kl += mu[i] * mu[i] + sigma[i] * sigma[i] - 1.0 - 2.0 * std::log(sigma[i]);
  }
  return 0.5 * kl;
}

inline double kl_divergence(const EncoderOutput& out) {
  return kl_divergence(out.mu, out.sigma);
}

struct CVAEBatch {
  Matrix history;         // history_dim × B
  Matrix text;            // text_dim × B
  Matrix obs;             // obs_dim × B
  Matrix teacher_action;  // action_dim × B

  int size() const { return static_cast<int>(history.cols()); }
};

struct LossBreakdown {
  double loss = 0.0;            // batch mean of ‖aᵀ − aˢ‖² + λ·KL
  double reconstruction = 0.0;  // batch mean of ‖aᵀ − aˢ‖²
  double kl = 0.0;              // batch mean KL
};

struct CVAELoss : LossBreakdown {
  CVAEParams grad;
};

// Forward and reverse pass through decoder, z = μ + σ⊙ε, and encoder
// (both heads). Gradients are of the batch-mean loss.
inline CVAELoss loss_and_gradients(const CVAEParams& p, const CVAEConfig& cfg,
                                   const CVAEBatch& batch, const Matrix& eps,
                                   double lambda_kl) {
  const int n = batch.size();
  require(n >= 1, "loss_and_gradients: empty batch");
  require(lambda_kl >= 0.0, "loss_and_gradients: lambda_kl must be >= 0");
  require(eps.rows() == cfg.latent_dim && eps.cols() == n,
          "loss_and_gradients: epsilon has wrong shape");
  require(batch.teacher_action.rows() == cfg.action_dim && batch.teacher_action.cols() == n &&
              batch.obs.cols() == n,
          "loss_and_gradients: batch tensors disagree in shape");

  const EncoderPass e = encode_batch(p, cfg, batch.history, batch.text);
  const Matrix z = e.mu + e.sigma.cwiseProduct(eps);
  nn::MlpCache dec;
  const Matrix action = decode_batch(p, cfg, z, batch.obs, &dec);
  const Matrix diff = action - batch.teacher_action;

  const Eigen::RowVectorXd rec = diff.colwise().squaredNorm();
  const Eigen::RowVectorXd kl =
      0.5 * (e.mu.array().square() + e.sigma.array().square() - 1.0 - 2.0 * e.log_sigma.array())
                .colwise()
                .sum();
  for (int c = 0; c < n; ++c)
    if (!std::isfinite(rec[c] + lambda_kl * kl[c]))
      throw NumericalError("loss is not finite for sample " + std::to_string(c));

  CVAELoss out;
  out.reconstruction = rec.sum() / n;
  out.kl = kl.sum() / n;
  out.loss = out.reconstruction + lambda_kl * out.kl;
  out.grad = zero_params(cfg);

  const double inv_n = 1.0 / n;
  const Matrix d_dec_in =
      nn::mlp_backward(p.decoder, cfg.activation, false, dec, 2.0 * inv_n * diff, out.grad.decoder);
  const Matrix d_z = d_dec_in.topRows(cfg.latent_dim);

  const Matrix d_mu = d_z + (lambda_kl * inv_n) * e.mu;
  Matrix d_log_sigma = d_z.cwiseProduct(eps).cwiseProduct(e.sigma);
  d_log_sigma.array() += (lambda_kl * inv_n) * (e.sigma.array().square() - 1.0);
  // The clamp passes gradient only strictly inside its bounds.
  const Matrix d_raw = d_log_sigma.binaryExpr(e.raw_log_sigma, [&](double g, double r) {
    return (r > cfg.log_sigma_min && r < cfg.log_sigma_max) ? g : 0.0;
  });

  out.grad.mu_head.w.noalias() += d_mu * e.features.transpose();
  out.grad.mu_head.b += d_mu.rowwise().sum();
  out.grad.log_sigma_head.w.noalias() += d_raw * e.features.transpose();
  out.grad.log_sigma_head.b += d_raw.rowwise().sum();
  Matrix d_features = p.mu_head.w.transpose() * d_mu;
  d_features.noalias() += p.log_sigma_head.w.transpose() * d_raw;
  nn::mlp_backward(p.encoder, cfg.activation, true, e.trunk, std::move(d_features),
                   out.grad.encoder);
  return out;
}

// Mean-mode action: decode(μ, o_t), no sampling.
inline Matrix inference_batch(const CVAEParams& p, const CVAEConfig& cfg, const Matrix& history,
                              const Matrix& text, const Matrix& obs) {
  const EncoderPass e = encode_batch(p, cfg, history, text);
  return decode_batch(p, cfg, e.mu, obs);
}

inline Vector inference_act(const CVAEParams& p, const CVAEConfig& cfg,
                            const Eigen::Ref<const Vector>& history,
                            const Eigen::Ref<const Vector>& text,
                            const Eigen::Ref<const Vector>& obs) {
  return inference_batch(p, cfg, Matrix(history), Matrix(text), Matrix(obs)).col(0);
}

inline Matrix standard_normal(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  Matrix m(rows, cols);
  // Column-major fill order is part of the reproducibility contract.
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = rng.normal();
  return m;
}

inline io::Json cvae_config_to_json(const CVAEConfig& c) {
  return {{"obs_dim", c.obs_dim},
          {"action_dim", c.action_dim},
          {"history_len", c.history_len},
          {"text_dim", c.text_dim},
          {"latent_dim", c.latent_dim},
          {"encoder_hidden", c.encoder_hidden},
          {"decoder_hidden", c.decoder_hidden},
          {"lambda_kl", c.lambda_kl},
          {"log_sigma_min", c.log_sigma_min},
          {"log_sigma_max", c.log_sigma_max},
          {"activation", nn::activation_name(c.activation)},
          {"include_past_actions", c.include_past_actions}};
}

// Missing keys keep the defaults of `base`.
inline CVAEConfig cvae_config_from_json(const io::Json& j, CVAEConfig base = {}) {
  CVAEConfig c = base;
  c.obs_dim = io::get_or(j, "obs_dim", c.obs_dim);
  c.action_dim = io::get_or(j, "action_dim", c.action_dim);
  c.history_len = io::get_or(j, "history_len", c.history_len);
  c.text_dim = io::get_or(j, "text_dim", c.text_dim);
  c.latent_dim = io::get_or(j, "latent_dim", c.latent_dim);
  c.encoder_hidden = io::get_or(j, "encoder_hidden", c.encoder_hidden);
  c.decoder_hidden = io::get_or(j, "decoder_hidden", c.decoder_hidden);
  c.lambda_kl = io::get_or(j, "lambda_kl", c.lambda_kl);
  c.log_sigma_min = io::get_or(j, "log_sigma_min", c.log_sigma_min);
  c.log_sigma_max = io::get_or(j, "log_sigma_max", c.log_sigma_max);
  c.activation =
      nn::activation_from_name(io::get_or<std::string>(j, "activation", nn::activation_name(c.activation)));
  c.include_past_actions = io::get_or(j, "include_past_actions", c.include_past_actions);
  c.validate();
  return c;
}

inline io::Json cvae_to_json(const CVAEConfig& cfg, const CVAEParams& p) {
  return {{"schema", io::schema_tag("cvae_checkpoint")},
          {"config", cvae_config_to_json(cfg)},
          {"encoder", nn::layers_to_json(p.encoder)},
          {"mu_head", nn::dense_to_json(p.mu_head)},
          {"log_sigma_head", nn::dense_to_json(p.log_sigma_head)},
          {"decoder", nn::layers_to_json(p.decoder)}};
}

inline std::pair<CVAEConfig, CVAEParams> cvae_from_json(const io::Json& j) {
  io::check_schema(j, "cvae_checkpoint");
  const CVAEConfig cfg = cvae_config_from_json(io::field(j, "config"));
  CVAEParams p;
  p.encoder = nn::layers_from_json(io::field(j, "encoder"), cfg.encoder_sizes());
  p.mu_head = nn::dense_from_json(io::field(j, "mu_head"), cfg.encoder_feature_dim(), cfg.latent_dim);
  p.log_sigma_head =
      nn::dense_from_json(io::field(j, "log_sigma_head"), cfg.encoder_feature_dim(), cfg.latent_dim);
  p.decoder = nn::layers_from_json(io::field(j, "decoder"), cfg.decoder_sizes());
  return {cfg, std::move(p)};
}

}  // namespace hwbc
