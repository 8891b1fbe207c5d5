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

// Teacher-student distillation by dataset aggregation. The student's actions
// step every environment while the privileged teacher labels each visited
// state; labels accumulate in a FIFO buffer that the student regresses on.
// Reference tracking during collection is judged by keypoint displacement
// over a short window, so drift of the robot's base does not end episodes.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hwbc/core.hpp"
#include "hwbc/cvae.hpp"
#include "hwbc/error.hpp"
#include "hwbc/metrics.hpp"
#include "hwbc/motion.hpp"
#include "hwbc/sim.hpp"
#include "hwbc/student.hpp"
#include "hwbc/textenc.hpp"

namespace hwbc {

// ‖(p_t − p_{t−Δt}) − (r_t − r_{t−Δt})‖², summed over keypoints.
inline double relative_displacement_error(const Eigen::Ref<const Eigen::MatrixX3d>& p_t,
                                          const Eigen::Ref<const Eigen::MatrixX3d>& p_prev,
                                          const Eigen::Ref<const Eigen::MatrixX3d>& ref_t,
                                          const Eigen::Ref<const Eigen::MatrixX3d>& ref_prev) {
  require(p_t.rows() == p_prev.rows() && p_t.rows() == ref_t.rows() &&
              p_t.rows() == ref_prev.rows(),
          "relative_displacement_error: keypoint counts differ");
  return ((p_t - p_prev) - (ref_t - ref_prev)).squaredNorm();
}

// Frame of `m` that best explains the robot's body-frame keypoints now and
// their displacement over the last Δt steps. Ties go to the earlier frame.
inline int synchronize_phase(const ReferenceMotion& m, const Eigen::MatrixX3d& kp_now,
                             const Eigen::MatrixX3d& kp_prev, int dt_steps) {
  require(!m.body_keypoints.empty(), "synchronize_phase: motion is not prepared");
  require(kp_now.rows() == m.body_keypoints.front().rows() && kp_prev.rows() == kp_now.rows(),
          "synchronize_phase: keypoint counts differ");
  // Same sums as relative_displacement_error, unrolled: this runs for every
  // frame of the motion on every env step.
  const Eigen::Index n = kp_now.size();
  const double* now = kp_now.data();
  const Eigen::MatrixX3d moved = kp_now - kp_prev;
  int best = 0;
  double best_cost = std::numeric_limits<double>::infinity();
  for (int j = 0; j < m.num_frames(); ++j) {
    const double* r = m.body_keypoints[static_cast<std::size_t>(j)].data();
    const double* r_prev = m.body_keypoints[static_cast<std::size_t>(m.frame(j - dt_steps))].data();
    double cost = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double pose = now[i] - r[i];
      const double disp = moved.data()[i] - (r[i] - r_prev[i]);
      cost += pose * pose + disp * disp;
    }
    if (cost < best_cost) {
      best_cost = cost;
      best = j;
    }
  }
  return best;
}

class ExperienceBuffer {
 public:
  ExperienceBuffer(std::size_t capacity, int history_dim, int obs_dim, int action_dim)
      : capacity_(capacity), history_dim_(history_dim), obs_dim_(obs_dim),
        action_dim_(action_dim) {
    require(capacity >= 1, "experience buffer: capacity must be >= 1");
  }

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  std::uint64_t total_inserted() const { return inserted_; }

  void push(const Eigen::Ref<const Vector>& history, int text_id,
            const Eigen::Ref<const Vector>& obs, const Eigen::Ref<const Vector>& action) {
    require(history.size() == history_dim_ && obs.size() == obs_dim_ &&
                action.size() == action_dim_,
            "experience buffer: entry has wrong dimensions");
    std::size_t slot;
    if (size_ < capacity_) {
      slot = size_++;
      if (slot >= static_cast<std::size_t>(history_.cols())) grow();
    } else {
      slot = head_;
      head_ = (head_ + 1) % capacity_;
    }
    history_.col(static_cast<Eigen::Index>(slot)) = history;
    obs_.col(static_cast<Eigen::Index>(slot)) = obs;
    action_.col(static_cast<Eigen::Index>(slot)) = action;
    text_[slot] = text_id;
    ++inserted_;
  }

  // i = 0 is the oldest entry still held.
  std::size_t slot(std::size_t i) const {
    require(i < size_, "experience buffer: index out of range");
    return (head_ + i) % std::max<std::size_t>(size_, 1);
  }
  auto history(std::size_t i) const { return history_.col(static_cast<Eigen::Index>(slot(i))); }
  auto obs(std::size_t i) const { return obs_.col(static_cast<Eigen::Index>(slot(i))); }
  auto action(std::size_t i) const { return action_.col(static_cast<Eigen::Index>(slot(i))); }
  int text_id(std::size_t i) const { return text_[slot(i)]; }

  CVAEBatch gather(const std::vector<std::size_t>& idx, const Matrix& texts) const {
    const auto n = static_cast<Eigen::Index>(idx.size());
    CVAEBatch b{Matrix(history_dim_, n), Matrix(texts.rows(), n), Matrix(obs_dim_, n),
                Matrix(action_dim_, n)};
    for (Eigen::Index c = 0; c < n; ++c) {
      const std::size_t i = idx[static_cast<std::size_t>(c)];
      b.history.col(c) = history(i);
      b.text.col(c) = texts.col(text_id(i));
      b.obs.col(c) = obs(i);
      b.teacher_action.col(c) = action(i);
    }
    return b;
  }

  // Uniform with replacement.
  CVAEBatch sample(int batch, Rng& rng, const Matrix& texts) const {
    require(size_ > 0, "experience buffer: cannot sample from an empty buffer");
    std::vector<std::size_t> idx(static_cast<std::size_t>(batch));
    for (auto& i : idx) i = rng.index(size_);
    return gather(idx, texts);
  }

  CVAEBatch latest(std::size_t count, const Matrix& texts) const {
    count = std::min(count, size_);
    std::vector<std::size_t> idx(count);
    std::iota(idx.begin(), idx.end(), size_ - count);
    return gather(idx, texts);
  }

 private:
  void grow() {
    const auto cols = static_cast<Eigen::Index>(
        std::min<std::size_t>(capacity_, std::max<std::size_t>(1024, 2 * history_.cols())));
    history_.conservativeResize(history_dim_, cols);
    obs_.conservativeResize(obs_dim_, cols);
    action_.conservativeResize(action_dim_, cols);
    text_.resize(static_cast<std::size_t>(cols));
  }

  std::size_t capacity_;
  int history_dim_, obs_dim_, action_dim_;
  Matrix history_, obs_, action_;
  std::vector<int> text_;
  std::size_t size_ = 0, head_ = 0;
  std::uint64_t inserted_ = 0;
};

struct DAggerConfig {
  int env_count = 64;
  int iterations = 2000;
  int horizon = 8;                        // control steps per env per iteration
  int batch_size = 1024 * 64;
  std::size_t buffer_capacity = 1024 * 512;
  double learning_rate = 1e-5;
  int epochs_per_iteration = 1;
  int displacement_steps = 5;             // Δt = 0.1 s
  double displacement_limit = 0.05;       // m², ends the episode when exceeded
  double episode_seconds = 20.0;
  double curriculum_threshold = 0.8;
  int curriculum_window = 50;
  // The student never sees the reference phase, so by default episodes
  // start at frame 0 where the phase is implied by the episode start.
  bool random_start_phase = false;
  // Re-anchor the reference frame to the robot every step, so labels do
  // not depend on a phase the student cannot observe.
  bool phase_sync = true;
  std::uint64_t seed = 0;

  void validate() const {
    require(env_count >= 1 && iterations >= 0 && horizon >= 0 && batch_size >= 1 &&
                buffer_capacity >= 1 && epochs_per_iteration >= 1 && displacement_steps >= 1 &&
                curriculum_window >= 1,
            "dagger config: counts must be positive");
    require(learning_rate > 0.0 && displacement_limit > 0.0 && episode_seconds > 0.0,
            "dagger config: rates and limits must be positive");
    require(curriculum_threshold >= 0.0 && curriculum_threshold <= 1.0,
            "dagger config: curriculum threshold must lie in [0, 1]");
  }
};

inline io::Json dagger_config_to_json(const DAggerConfig& c) {
  return {{"env_count", c.env_count},
          {"iterations", c.iterations},
          {"horizon", c.horizon},
          {"batch_size", c.batch_size},
          {"buffer_capacity", c.buffer_capacity},
          {"learning_rate", c.learning_rate},
          {"epochs_per_iteration", c.epochs_per_iteration},
          {"displacement_steps", c.displacement_steps},
          {"displacement_limit", c.displacement_limit},
          {"episode_seconds", c.episode_seconds},
          {"curriculum_threshold", c.curriculum_threshold},
          {"curriculum_window", c.curriculum_window},
          {"random_start_phase", c.random_start_phase},
          {"phase_sync", c.phase_sync},
          {"seed", c.seed}};
}

inline DAggerConfig dagger_config_from_json(const io::Json& j, DAggerConfig c = {}) {
  c.env_count = io::get_or(j, "env_count", c.env_count);
  c.iterations = io::get_or(j, "iterations", c.iterations);
  c.horizon = io::get_or(j, "horizon", c.horizon);
  c.batch_size = io::get_or(j, "batch_size", c.batch_size);
  c.buffer_capacity = io::get_or(j, "buffer_capacity", c.buffer_capacity);
  c.learning_rate = io::get_or(j, "learning_rate", c.learning_rate);
  c.epochs_per_iteration = io::get_or(j, "epochs_per_iteration", c.epochs_per_iteration);
  c.displacement_steps = io::get_or(j, "displacement_steps", c.displacement_steps);
  c.displacement_limit = io::get_or(j, "displacement_limit", c.displacement_limit);
  c.episode_seconds = io::get_or(j, "episode_seconds", c.episode_seconds);
  c.curriculum_threshold = io::get_or(j, "curriculum_threshold", c.curriculum_threshold);
  c.curriculum_window = io::get_or(j, "curriculum_window", c.curriculum_window);
  c.random_start_phase = io::get_or(j, "random_start_phase", c.random_start_phase);
  c.phase_sync = io::get_or(j, "phase_sync", c.phase_sync);
  c.seed = io::get_or(j, "seed", c.seed);
  c.validate();
  return c;
}

// Optimizer settings a student should be built with for this config.
inline nn::AdamConfig adam_for(const DAggerConfig& cfg) {
  nn::AdamConfig a;
  a.lr = cfg.learning_rate;
  return a;
}

// Easy motions always; hard ones once progress is strictly above the
// threshold. A library without easy motions is active in full.
inline std::vector<int> curriculum_schedule(const MotionLibrary& lib, double progress,
                                            double threshold = 0.8) {
  require(progress >= 0.0 && progress <= 1.0, "curriculum: progress must lie in [0, 1]");
  std::vector<int> active;
  for (int i = 0; i < lib.size(); ++i)
    if (lib.motions[i].label == MotionClass::kEasy || progress > threshold) active.push_back(i);
  if (active.empty())
    for (int i = 0; i < lib.size(); ++i) active.push_back(i);
  return active;
}

// Action source for collection: batched student inputs → actions (n × B).
using ActFn = std::function<Matrix(const StudentInputs&)>;
using TeacherFn =
    std::function<Vector(const ToyEnv&, const Vector& ref_now, const Vector& ref_next)>;

inline TeacherFn oracle_teacher(TeacherConfig cfg = {}) {
  cfg.validate();
  return [cfg](const ToyEnv& env, const Vector& r0, const Vector& r1) {
    return teacher_oracle(env, r0, r1, cfg);
  };
}

struct StepRecord {
  int env = 0;
  int motion = 0;
  long ref_step = 0;
  const StudentInputs* inputs = nullptr;  // batch the action came from
  Vector action;
  Vector teacher_action;
  const ToyEnv* after = nullptr;
  bool terminated = false;
};

struct CollectStats {
  long steps = 0;
  long terminations = 0;
  long falls = 0;
  double quality_sum = 0.0;

  double mean_quality() const { return steps ? quality_sum / static_cast<double>(steps) : 0.0; }
};

// A batch of toy environments with their reference motions, observation
// histories and keypoint windows.
class EnvPool {
 public:
  EnvPool(const RobotModel& model, const MotionLibrary& library, const CVAEConfig& dims,
          const DAggerConfig& cfg, DynamicsConfig dyn = {},
          RandomizationConfig rand = RandomizationConfig::standard(),
          const TextEncoder& encoder = default_text_encoder())
      : library_(&library), dims_(dims), cfg_(cfg), rng_(Rng(cfg.seed).split(1)) {
    cfg_.validate();
    dims_.validate();
    require(library.size() >= 1, "env pool: motion library is empty");
    require(dims_.obs_dim == 9 + 2 * model.num_joints() && dims_.action_dim == model.num_joints(),
            "env pool: student dimensions do not match the robot");
    require(dims_.text_dim == encoder.dim(), "env pool: text dimension mismatch");
    texts_.resize(dims_.text_dim, library.size());
    for (int m = 0; m < library.size(); ++m) texts_.col(m) = encoder.embed(library.motions[m].caption);
    for (int e = 0; e < cfg_.env_count; ++e) {
      Slot s{ToyEnv(model, dyn, rand, rng_.next_u64()),
             HistoryBuffer(dims_.history_len, kHistoryStride, dims_.frame_dim())};
      slots_.push_back(std::move(s));
    }
    active_.resize(library.size());
    std::iota(active_.begin(), active_.end(), 0);
    for (auto& s : slots_) start_episode(s);
  }

  int size() const { return static_cast<int>(slots_.size()); }
  const Matrix& texts() const { return texts_; }
  const MotionLibrary& library() const { return *library_; }
  const CVAEConfig& dims() const { return dims_; }
  const ToyEnv& env(int e) const { return slots_[e].env; }
  int motion(int e) const { return slots_[e].motion; }
  long ref_step(int e) const { return slots_[e].ref_step; }

  // New episodes draw their motion from this subset.
  void set_active(std::vector<int> motions) {
    require(!motions.empty(), "env pool: active motion set is empty");
    for (int m : motions) require(m >= 0 && m < library_->size(), "env pool: bad motion index");
    active_ = std::move(motions);
  }

  StudentInputs inputs() const {
    const auto n = static_cast<Eigen::Index>(slots_.size());
    StudentInputs in{Matrix(dims_.history_dim(), n), Matrix(dims_.text_dim, n),
                     Matrix(dims_.obs_dim, n)};
    for (Eigen::Index e = 0; e < n; ++e) {
      const Slot& s = slots_[static_cast<std::size_t>(e)];
      in.history.col(e) = s.history.flatten();
      in.text.col(e) = texts_.col(s.motion);
      in.obs.col(e) = s.env.observe();
    }
    return in;
  }

  // Runs `horizon` steps in every env with actions from `act`, storing the
  // teacher's label for each visited state.
  CollectStats collect(const ActFn& act, const TeacherFn& teacher, ExperienceBuffer& buffer,
                       int horizon, const std::function<void(const StepRecord&)>& on_step = {}) {
    require(horizon >= 0, "collect: horizon must be >= 0");
    CollectStats stats;
    for (int h = 0; h < horizon; ++h) {
      const StudentInputs in = inputs();
      const Matrix actions = act(in);
      require(actions.rows() == dims_.action_dim && actions.cols() == size(),
              "collect: policy returned actions of the wrong shape");
      for (int e = 0; e < size(); ++e) {
        Slot& s = slots_[static_cast<std::size_t>(e)];
        const ReferenceMotion& m = library_->motions[s.motion];
        const Vector label = teacher(s.env, m.theta(s.ref_step), m.theta(s.ref_step + 1));
        buffer.push(in.history.col(e), s.motion, in.obs.col(e), label);
        s.env.step(actions.col(e), m.base);
        ++s.ref_step;
        ++s.steps;
        s.history.push(frame(s.env));
        s.body_kp.push_back(s.env.body_keypoints());
        if (static_cast<int>(s.body_kp.size()) > cfg_.displacement_steps + 1) s.body_kp.pop_front();
        if (cfg_.phase_sync && static_cast<int>(s.body_kp.size()) == cfg_.displacement_steps + 1)
          s.ref_step = synchronize_phase(m, s.body_kp.back(), s.body_kp.front(),
                                         cfg_.displacement_steps);
        s.robot_kp.push_back(s.env.world_keypoints());
        s.ref_kp.push_back(m.world_keypoints(s.ref_step, s.steps));
        if (static_cast<int>(s.robot_kp.size()) > cfg_.displacement_steps + 1) {
          s.robot_kp.pop_front();
          s.ref_kp.pop_front();
        }
        const RobotState rs = s.env.robot_state();
        stats.quality_sum += tracking_score(rs, m.reference_frame(s.ref_step));
        ++stats.steps;
        const bool fell = tilt_angle(rs.projected_gravity) > kFallTiltAngle;
        bool drifted = false;
        if (static_cast<int>(s.robot_kp.size()) == cfg_.displacement_steps + 1)
          drifted = relative_displacement_error(s.robot_kp.back(), s.robot_kp.front(),
                                                s.ref_kp.back(), s.ref_kp.front()) >
                    cfg_.displacement_limit;
        const bool timeout = s.steps * kControlDt >= cfg_.episode_seconds;
        const bool done = fell || drifted || timeout;
        if (on_step) on_step({e, s.motion, s.ref_step, &in, actions.col(e), label, &s.env, done});
        if (done) {
          stats.terminations += fell || drifted;
          stats.falls += fell;
          start_episode(s);
        }
      }
    }
    return stats;
  }

 private:
  struct Slot {
    ToyEnv env;
    HistoryBuffer history;
    int motion = 0;
    long ref_step = 0;
    long steps = 0;
    std::deque<Eigen::MatrixX3d> robot_kp, ref_kp, body_kp;
  };

  Vector frame(const ToyEnv& env) const {
    Vector f(dims_.frame_dim());
    f.head(dims_.obs_dim) = env.observe();
    if (dims_.include_past_actions) f.tail(dims_.action_dim) = env.state().action;
    return f;
  }

  void start_episode(Slot& s) {
    s.motion = active_[rng_.index(active_.size())];
    const ReferenceMotion& m = library_->motions[s.motion];
    s.ref_step = cfg_.random_start_phase
                     ? static_cast<long>(rng_.index(static_cast<std::size_t>(m.num_frames())))
                     : 0;
    s.steps = 0;
    s.env.reset(rng_.next_u64());
    s.history.reset(frame(s.env));
    s.robot_kp.assign(1, s.env.world_keypoints());
    s.ref_kp.assign(1, m.world_keypoints(s.ref_step, 0));
    s.body_kp.assign(1, s.env.body_keypoints());
  }

  const MotionLibrary* library_;
  CVAEConfig dims_;
  DAggerConfig cfg_;
  Rng rng_;
  Matrix texts_;
  std::vector<Slot> slots_;
  std::vector<int> active_;
};

struct IterationStats {
  int iteration = 0;
  double imitation = 0.0;  // mean over this iteration's updates
  double kl = 0.0;
  double loss = 0.0;
  double quality = 0.0;    // mean tracking score of collected steps
  double progress = 0.0;   // curriculum signal used for this iteration
  int active_motions = 0;
  long terminations = 0;
  std::size_t buffer_size = 0;
};

struct TrainResult {
  std::vector<IterationStats> curve;
  bool diverged = false;
  std::string error;
  // Deterministic-policy MSE on the newest buffer entries after training.
  double final_imitation = 0.0;
};

// Mean ‖π(s) − aᵀ‖² of the deterministic policy over a fixed batch.
template <Student S>
double imitation_error(const S& student, const CVAEBatch& batch) {
  const Matrix a = student.act({batch.history, batch.text, batch.obs});
  return (a - batch.teacher_action).colwise().squaredNorm().mean();
}

// Updates per iteration: one epoch over the newly collected entries.
inline int updates_per_iteration(const DAggerConfig& cfg) {
  const long fresh = static_cast<long>(cfg.env_count) * cfg.horizon;
  return cfg.epochs_per_iteration *
         static_cast<int>(std::max<long>(1, (fresh + cfg.batch_size - 1) / cfg.batch_size));
}

// On divergence the student keeps its last finite parameters and the
// result carries the error; the caller decides whether to checkpoint.
template <Student S>
TrainResult dagger_train(const DAggerConfig& cfg, EnvPool& pool, S& student,
                         const TeacherFn& teacher = oracle_teacher(),
                         const std::function<void(const IterationStats&, const S&)>& on_iteration = {}) {
  cfg.validate();
  const CVAEConfig& d = student.config();
  require(d.obs_dim == pool.dims().obs_dim && d.action_dim == pool.dims().action_dim &&
              d.history_dim() == pool.dims().history_dim() && d.text_dim == pool.dims().text_dim,
          "dagger_train: student dimensions do not match the environments");
  ExperienceBuffer buffer(cfg.buffer_capacity, d.history_dim(), d.obs_dim, d.action_dim);
  Rng rng = Rng(cfg.seed).split(2);
  TrainResult result;
  std::deque<double> window;
  double window_sum = 0.0;
  const int updates = updates_per_iteration(cfg);
  const ActFn act = [&student](const StudentInputs& in) { return Matrix(student.act(in)); };
  for (int it = 0; it < cfg.iterations; ++it) {
    IterationStats st;
    st.iteration = it + 1;
    st.progress = window.empty() ? 0.0 : std::clamp(window_sum / window.size(), 0.0, 1.0);
    const auto active = curriculum_schedule(pool.library(), st.progress, cfg.curriculum_threshold);
    pool.set_active(active);
    st.active_motions = static_cast<int>(active.size());
    try {
      const CollectStats cs = pool.collect(act, teacher, buffer, cfg.horizon);
      st.quality = cs.mean_quality();
      st.terminations = cs.terminations;
      st.buffer_size = buffer.size();
      if (buffer.size() > 0) {
        for (int u = 0; u < updates; ++u) {
          const CVAEBatch batch = buffer.sample(cfg.batch_size, rng, pool.texts());
          const TrainStats ts = student.train_step(batch, rng);
          st.imitation += ts.imitation / updates;
          st.kl += ts.kl / updates;
          st.loss += ts.loss / updates;
        }
      }
    } catch (const NumericalError& e) {
      result.diverged = true;
      result.error = "iteration " + std::to_string(it + 1) + ": " + e.what();
      return result;
    }
    window.push_back(st.quality);
    window_sum += st.quality;
    if (static_cast<int>(window.size()) > cfg.curriculum_window) {
      window_sum -= window.front();
      window.pop_front();
    }
    result.curve.push_back(st);
    if (on_iteration) on_iteration(st, student);
  }
  if (buffer.size() > 0)
    result.final_imitation =
        imitation_error(student, buffer.latest(static_cast<std::size_t>(cfg.batch_size), pool.texts()));
  return result;
}

// ---------------------------------------------------------------------------
// Command-driven rollouts.

struct RolloutStep {
  int step = 0;
  std::string command;
  double alpha = 0.0;
  Vector action;
  Vector theta;
  Vector latent;  // μ actually decoded (empty for non-latent students)
  Vec3 base_pos = Vec3::Zero();
  double yaw = 0.0;
};

struct RolloutSettings {
  std::uint64_t env_seed = 1;
  std::uint64_t reset_seed = 1;
  DynamicsConfig dynamics{};
  RandomizationConfig randomization = RandomizationConfig::nominal();
};

// Base command of the library motion whose caption is closest to `text`.
inline BaseCommand nearest_base_command(const MotionLibrary& lib, const TextEmbedding& text,
                                        const TextEncoder& encoder = default_text_encoder()) {
  double best = -2.0;
  BaseCommand cmd;
  for (const auto& m : lib.motions) {
    const double s = similarity(text, encoder.embed(m.caption));
    if (s > best) {
      best = s;
      cmd = m.base;
    }
  }
  return cmd;
}

// Drives a fresh env for `steps` control steps. `policy(step, inputs)`
// returns the action and optionally the latent it decoded.
class RolloutRunner {
 public:
  RolloutRunner(const RobotModel& model, const CVAEConfig& dims, const RolloutSettings& settings)
      : env_(model, settings.dynamics, settings.randomization, settings.env_seed),
        dims_(dims), history_(dims.history_len, kHistoryStride, dims.frame_dim()) {
    require(dims.obs_dim == env_.obs_dim() && dims.action_dim == env_.num_joints(),
            "rollout: student dimensions do not match the robot");
    env_.reset(settings.reset_seed);
    history_.reset(frame());
  }

  const ToyEnv& env() const { return env_; }

  // Inputs for the current state with the given text embedding.
  StudentInputs inputs(const TextEmbedding& text) const {
    return {Matrix(history_.flatten()), Matrix(text), Matrix(env_.observe())};
  }

  void step(const Eigen::Ref<const Vector>& action, const BaseCommand& cmd) {
    env_.step(action, cmd);
    history_.push(frame());
  }

 private:
  Vector frame() const {
    Vector f(dims_.frame_dim());
    f.head(dims_.obs_dim) = env_.observe();
    if (dims_.include_past_actions) f.tail(dims_.action_dim) = env_.state().action;
    return f;
  }

  ToyEnv env_;
  CVAEConfig dims_;
  HistoryBuffer history_;
};

inline RolloutStep log_step(int k, const std::string& command, double alpha, const Vector& action,
                            const Vector& latent, const ToyEnv& env) {
  return {k, command, alpha, action, env.state().theta, latent, env.state().base_pos,
          env.state().yaw};
}

// Pure command rollout through the student's own act().
template <Student S>
std::vector<RolloutStep> rollout_command(const S& student, const RobotModel& model,
                                         const MotionLibrary& lib, const std::string& text,
                                         int steps, const RolloutSettings& settings = {}) {
  RolloutRunner run(model, student.config(), settings);
  const TextEmbedding v = embed_text(text);
  const BaseCommand cmd = nearest_base_command(lib, v);
  std::vector<RolloutStep> log;
  for (int k = 0; k < steps; ++k) {
    const Vector a = student.act(run.inputs(v)).col(0);
    run.step(a, cmd);
    log.push_back(log_step(k, text, 0.0, a, Vector(), run.env()));
  }
  return log;
}

// Script rollout: commands back to back, round(duration·50) steps each; the
// text embedding is recomputed only when the command changes.
template <Student S>
std::vector<RolloutStep> rollout_script(const S& student, const RobotModel& model,
                                        const MotionLibrary& lib, const CommandScript& script,
                                        const RolloutSettings& settings = {}) {
  RolloutRunner run(model, student.config(), settings);
  EmbeddingCache cache;
  std::vector<RolloutStep> log;
  int k = 0;
  for (const auto& c : script) {
    const int steps = static_cast<int>(std::llround(c.duration / kControlDt));
    const TextEmbedding& v = cache.get(c.text);
    const BaseCommand cmd = nearest_base_command(lib, v);
    for (int i = 0; i < steps; ++i, ++k) {
      const Vector a = student.act(run.inputs(v)).col(0);
      run.step(a, cmd);
      log.push_back(log_step(k, c.text, 0.0, a, Vector(), run.env()));
    }
  }
  return log;
}

// z = (1−α)·μ(text_a) + α·μ(text_b), decoded against the current
// observation. `alpha` holds one value per step (the last repeats).
inline std::vector<RolloutStep> interpolate_rollout(const CvaeStudent& student,
                                                    const RobotModel& model,
                                                    const MotionLibrary& lib,
                                                    const std::string& text_a,
                                                    const std::string& text_b,
                                                    const std::vector<double>& alpha, int steps,
                                                    const RolloutSettings& settings = {}) {
  require(!alpha.empty(), "interpolate: empty alpha schedule");
  for (double a : alpha) require(a >= 0.0 && a <= 1.0, "interpolate: alpha must lie in [0, 1]");
  RolloutRunner run(model, student.config(), settings);
  const TextEmbedding va = embed_text(text_a), vb = embed_text(text_b);
  const BaseCommand ca = nearest_base_command(lib, va), cb = nearest_base_command(lib, vb);
  std::vector<RolloutStep> log;
  for (int k = 0; k < steps; ++k) {
    const double w = alpha[std::min<std::size_t>(static_cast<std::size_t>(k), alpha.size() - 1)];
    const Matrix mu_a = student.latent_mean(run.inputs(va));
    const Matrix mu_b = student.latent_mean(run.inputs(vb));
    const Matrix z = (1.0 - w) * mu_a + w * mu_b;
    const Vector a = student.decode_latent(z, Matrix(run.env().observe())).col(0);
    const BaseCommand cmd{(1.0 - w) * ca.vx + w * cb.vx, (1.0 - w) * ca.vy + w * cb.vy,
                          (1.0 - w) * ca.yaw_rate + w * cb.yaw_rate};
    run.step(a, cmd);
    log.push_back(log_step(k, text_a + " | " + text_b, w, a, z.col(0), run.env()));
  }
  return log;
}

// Largest per-step action difference between rollouts at adjacent α values
// of a uniform sweep over [0, 1] with `step`.
inline double max_adjacent_action_gap(const CvaeStudent& student, const RobotModel& model,
                                      const MotionLibrary& lib, const std::string& text_a,
                                      const std::string& text_b, double step, int steps,
                                      const RolloutSettings& settings = {}) {
  require(step > 0.0 && step <= 1.0, "alpha sweep step must lie in (0, 1]");
  const int count = static_cast<int>(std::llround(1.0 / step));
  std::vector<RolloutStep> prev;
  double gap = 0.0;
  for (int i = 0; i <= count; ++i) {
    const double a = std::min(1.0, i * step);
    auto cur = interpolate_rollout(student, model, lib, text_a, text_b, {a}, steps, settings);
    if (!prev.empty())
      for (std::size_t k = 0; k < cur.size(); ++k)
        gap = std::max(gap, (cur[k].action - prev[k].action).cwiseAbs().maxCoeff());
    prev = std::move(cur);
  }
  return gap;
}

// ---------------------------------------------------------------------------
// Latent analysis.

struct LatentRow {
  std::string command;
  int step = 0;
  Vector mu;
};

struct LatentProjection {
  Matrix components;       // 2 × latent
  Vector mean;
  Matrix points;           // rows × 2
  double variance_fraction = 0.0;
};

struct LatentAnalysis {
  std::vector<LatentRow> rows;
  LatentProjection projection;
  double silhouette = 0.0;
  double centroid_ratio = 0.0;  // min centroid distance / mean intra-command spread
};

inline std::vector<LatentRow> collect_latents(const CvaeStudent& student, const RobotModel& model,
                                              const MotionLibrary& lib,
                                              const std::vector<std::string>& commands, int steps,
                                              const RolloutSettings& settings = {}) {
  std::vector<LatentRow> rows;
  for (const auto& text : commands) {
    RolloutRunner run(model, student.config(), settings);
    const TextEmbedding v = embed_text(text);
    const BaseCommand cmd = nearest_base_command(lib, v);
    for (int k = 0; k < steps; ++k) {
      const StudentInputs in = run.inputs(v);
      const Vector mu = student.latent_mean(in).col(0);
      rows.push_back({text, k, mu});
      run.step(student.decode_latent(Matrix(mu), in.obs).col(0), cmd);
    }
  }
  return rows;
}

inline LatentProjection project_latents(const std::vector<LatentRow>& rows) {
  require(!rows.empty(), "latent projection: no rows");
  const auto dim = rows.front().mu.size();
  Matrix x(static_cast<Eigen::Index>(rows.size()), dim);
  for (std::size_t i = 0; i < rows.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = rows[i].mu.transpose();
  LatentProjection p;
  p.mean = x.colwise().mean().transpose();
  const Matrix centred = x.rowwise() - p.mean.transpose();
  const Matrix cov = centred.transpose() * centred / static_cast<double>(rows.size());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  const Vector values = eig.eigenvalues().cwiseMax(0.0);  // ascending
  const int k = static_cast<int>(std::min<Eigen::Index>(2, dim));
  p.components = Matrix::Zero(2, dim);
  double kept = 0.0;
  for (int i = 0; i < k; ++i) {
    Vector v = eig.eigenvectors().col(dim - 1 - i);
    // Fix the sign so the largest-magnitude entry is positive.
    Eigen::Index arg;
    v.cwiseAbs().maxCoeff(&arg);
    if (v[arg] < 0) v = -v;
    p.components.row(i) = v.transpose();
    kept += values[dim - 1 - i];
  }
  const double total = values.sum();
  p.variance_fraction = total > 0.0 ? std::clamp(kept / total, 0.0, 1.0) : 1.0;
  p.points = centred * p.components.transpose();
  return p;
}

// Mean silhouette over rows, Euclidean distance in latent space.
inline double silhouette_score(const std::vector<LatentRow>& rows) {
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < rows.size(); ++i) groups[rows[i].command].push_back(i);
  if (groups.size() < 2) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    double a = 0.0, b = std::numeric_limits<double>::infinity();
    for (const auto& [name, idx] : groups) {
      double sum = 0.0;
      for (std::size_t j : idx) sum += (rows[i].mu - rows[j].mu).norm();
      if (name == rows[i].command) {
        a = idx.size() > 1 ? sum / static_cast<double>(idx.size() - 1) : 0.0;
      } else {
        b = std::min(b, sum / static_cast<double>(idx.size()));
      }
    }
    const double denom = std::max(a, b);
    total += denom > 0.0 ? (b - a) / denom : 0.0;
  }
  return total / static_cast<double>(rows.size());
}

inline double centroid_separation_ratio(const std::vector<LatentRow>& rows) {
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < rows.size(); ++i) groups[rows[i].command].push_back(i);
  require(groups.size() >= 2, "centroid ratio needs at least two commands");
  std::vector<Vector> centroids;
  double spread = 0.0;
  for (const auto& [name, idx] : groups) {
    Vector c = Vector::Zero(rows[idx[0]].mu.size());
    for (std::size_t j : idx) c += rows[j].mu;
    c /= static_cast<double>(idx.size());
    for (std::size_t j : idx) spread += (rows[j].mu - c).norm();
    centroids.push_back(c);
  }
  spread /= static_cast<double>(rows.size());
  double nearest = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < centroids.size(); ++a)
    for (std::size_t b = a + 1; b < centroids.size(); ++b)
      nearest = std::min(nearest, (centroids[a] - centroids[b]).norm());
  return spread > 0.0 ? nearest / spread : std::numeric_limits<double>::infinity();
}

inline LatentAnalysis dump_latents(const CvaeStudent& student, const RobotModel& model,
                                   const MotionLibrary& lib,
                                   const std::vector<std::string>& commands, int steps,
                                   const RolloutSettings& settings = {}) {
  require(!commands.empty() && steps >= 1, "dump_latents: no rollouts requested");
  LatentAnalysis out;
  out.rows = collect_latents(student, model, lib, commands, steps, settings);
  out.projection = project_latents(out.rows);
  out.silhouette = silhouette_score(out.rows);
  if (commands.size() >= 2) out.centroid_ratio = centroid_separation_ratio(out.rows);
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation on the library.

// Mean motion quality of the student tracking every library motion from
// phase 0, over `episodes` reset seeds each.
template <Student S>
double evaluate_quality(const S& student, const RobotModel& model, const MotionLibrary& lib,
                        int steps, int episodes, std::uint64_t seed,
                        const RandomizationConfig& rand = RandomizationConfig::standard()) {
  require(steps >= 1 && episodes >= 1, "evaluate_quality: counts must be positive");
  Rng rng(seed);
  double total = 0.0;
  int count = 0;
  for (const auto& m : lib.motions) {
    const TextEmbedding v = embed_text(m.caption);
    for (int ep = 0; ep < episodes; ++ep) {
      RolloutSettings s;
      s.env_seed = rng.next_u64();
      s.reset_seed = rng.next_u64();
      s.randomization = rand;
      RolloutRunner run(model, student.config(), s);
      std::vector<RolloutFrame> frames;
      for (int k = 0; k < steps; ++k) {
        run.step(student.act(run.inputs(v)).col(0), m.base);
        frames.emplace_back(run.env().robot_state(), m.reference_frame(k + 1));
      }
      total += motion_quality(frames);
      ++count;
    }
  }
  return total / count;
}

}  // namespace hwbc
