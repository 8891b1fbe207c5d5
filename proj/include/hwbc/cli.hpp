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

// The `hwbc` command-line tool. Every subcommand writes its artifacts plus a
// run manifest next to them; the manifest carries content hashes of inputs
// and outputs so a later load can tell whether anything was edited.
//
// Exit codes: 0 success, 1 bad input or usage, 2 numerical failure.

#include <array>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hwbc/distill.hpp"
#include "hwbc/io.hpp"
#include "hwbc/metrics_io.hpp"
#include "hwbc/model_io.hpp"
#include "hwbc/motion.hpp"
#include "hwbc/retarget_io.hpp"
#include "hwbc/symmetry.hpp"
#include "hwbc/toy.hpp"

namespace hwbc::cli {

inline constexpr const char* kVersion = "0.1.0";

inline std::string file_hash(const std::string& path) {
  return io::hex64(fnv1a64(io::read_text(path)));
}

struct FileRecord {
  std::string path;
  std::string hash;
};

struct RunManifest {
  std::string tool = "hwbc";
  std::string version = kVersion;
  std::string command;
  std::uint64_t seed = 0;
  std::string config_hash;  // of the effective config after merging flags
  io::Json config;
  std::vector<FileRecord> inputs, outputs;
  io::Json results = io::Json::object();
  double wall_seconds = 0.0;
};

inline io::Json manifest_to_json(const RunManifest& m) {
  const auto files = [](const std::vector<FileRecord>& v) {
    io::Json a = io::Json::array();
    for (const auto& f : v) a.push_back({{"path", f.path}, {"hash", f.hash}});
    return a;
  };
  return {{"schema", io::schema_tag("run_manifest")},
          {"tool", m.tool},
          {"version", m.version},
          {"command", m.command},
          {"seed", m.seed},
          {"config_hash", m.config_hash},
          {"config", m.config},
          {"inputs", files(m.inputs)},
          {"outputs", files(m.outputs)},
          {"results", m.results},
          {"timings", {{"wall_seconds", m.wall_seconds}}}};
}

inline RunManifest manifest_from_json(const io::Json& j) {
  io::check_schema(j, "run_manifest");
  RunManifest m;
  m.tool = io::get<std::string>(j, "tool");
  m.version = io::get<std::string>(j, "version");
  m.command = io::get<std::string>(j, "command");
  m.seed = io::get<std::uint64_t>(j, "seed");
  m.config_hash = io::get<std::string>(j, "config_hash");
  m.config = io::field(j, "config");
  const auto files = [](const io::Json& a) {
    std::vector<FileRecord> v;
    for (const auto& f : a) v.push_back({io::get<std::string>(f, "path"), io::get<std::string>(f, "hash")});
    return v;
  };
  m.inputs = files(io::field(j, "inputs"));
  m.outputs = files(io::field(j, "outputs"));
  m.results = io::get_or<io::Json>(j, "results", io::Json::object());
  m.wall_seconds = io::get_or<double>(io::get_or<io::Json>(j, "timings", {}), "wall_seconds", 0.0);
  return m;
}

// Differences between the recorded and the current hashes; empty when the
// run's files are intact.
inline std::vector<std::string> verify_manifest(const RunManifest& m) {
  std::vector<std::string> problems;
  if (io::hex64(fnv1a64(m.config.dump())) != m.config_hash)
    problems.push_back("config hash does not match the recorded config");
  for (const auto* list : {&m.inputs, &m.outputs})
    for (const auto& f : *list) {
      if (!std::filesystem::exists(f.path)) {
        problems.push_back(f.path + ": missing");
      } else if (file_hash(f.path) != f.hash) {
        problems.push_back(f.path + ": hash changed");
      }
    }
  return problems;
}

inline RunManifest load_manifest(const std::string& path) {
  RunManifest m = manifest_from_json(io::read_json(path));
  const auto problems = verify_manifest(m);
  if (!problems.empty()) throw InputError(path + ": " + problems.front());
  return m;
}

// ---------------------------------------------------------------------------
// Rollout logs (JSON lines) and latent tables (CSV).

inline io::Json rollout_step_to_json(const RolloutStep& s) {
  io::Json j = {{"schema", io::schema_tag("rollout_step")},
                {"step", s.step},
                {"command", s.command},
                {"alpha", s.alpha},
                {"action", io::from_vector(s.action)},
                {"theta", io::from_vector(s.theta)},
                {"base_pos", io::from_vec3(s.base_pos)},
                {"yaw", s.yaw}};
  if (s.latent.size() > 0) j["latent"] = io::from_vector(s.latent);
  return j;
}

inline std::string rollout_log_to_text(const std::vector<RolloutStep>& log) {
  std::string out;
  for (const auto& s : log) out += rollout_step_to_json(s).dump() + "\n";
  return out;
}

inline std::vector<RolloutStep> rollout_log_from_text(const std::string& text) {
  std::vector<RolloutStep> log;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const io::Json j = io::Json::parse(line);
      io::check_schema(j, "rollout_step");
      RolloutStep s;
      s.step = io::get<int>(j, "step");
      s.command = io::get<std::string>(j, "command");
      s.alpha = io::get<double>(j, "alpha");
      s.action = io::to_vector(io::field(j, "action"));
      s.theta = io::to_vector(io::field(j, "theta"));
      s.base_pos = io::to_vec3(io::field(j, "base_pos"));
      s.yaw = io::get<double>(j, "yaw");
      if (j.contains("latent")) s.latent = io::to_vector(j.at("latent"));
      log.push_back(std::move(s));
    } catch (const ParseError&) {
      throw;
    } catch (const io::Json::exception& e) {
      throw ParseError(line_no, e.what());
    } catch (const InputError& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return log;
}

// Commands are quoted; embedded quotes are doubled.
inline std::string latent_csv(const std::vector<LatentRow>& rows) {
  std::string out = "command,step";
  const Eigen::Index dim = rows.empty() ? 0 : rows.front().mu.size();
  for (Eigen::Index i = 0; i < dim; ++i) out += ",mu_" + std::to_string(i);
  out += "\n";
  for (const auto& r : rows) {
    std::string q;
    for (char c : r.command) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    out += "\"" + q + "\"," + std::to_string(r.step);
    for (Eigen::Index i = 0; i < r.mu.size(); ++i) out += "," + io::format_double(r.mu[i]);
    out += "\n";
  }
  return out;
}

inline std::vector<LatentRow> latent_rows_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line) || line.rfind("command,step", 0) != 0)
    throw ParseError(1, "expected the header 'command,step,mu_0,...'");
  std::vector<LatentRow> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line.front() != '"') throw ParseError(line_no, "command must be quoted");
    std::string command;
    std::size_t i = 1;
    for (; i < line.size(); ++i) {
      if (line[i] == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          command += '"';
          ++i;
        } else {
          break;
        }
      } else {
        command += line[i];
      }
    }
    if (i >= line.size() || i + 1 >= line.size() || line[i + 1] != ',')
      throw ParseError(line_no, "unterminated command field");
    std::vector<double> values;
    std::istringstream rest(line.substr(i + 2));
    std::string cell;
    while (std::getline(rest, cell, ',')) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw ParseError(line_no, "bad number '" + cell + "'");
      }
    }
    if (values.empty()) throw ParseError(line_no, "missing step");
    LatentRow r{command, static_cast<int>(values[0]),
                Eigen::Map<const Vector>(values.data() + 1, static_cast<Eigen::Index>(values.size() - 1))};
    rows.push_back(std::move(r));
  }
  return rows;
}

inline io::Json latent_analysis_to_json(const LatentAnalysis& a) {
  return {{"schema", io::schema_tag("latent_projection")},
          {"variance_fraction", a.projection.variance_fraction},
          {"silhouette", a.silhouette},
          {"centroid_ratio", a.centroid_ratio},
          {"mean", io::from_vector(a.projection.mean)},
          {"components", io::from_matrix(a.projection.components)},
          {"points", io::from_matrix(a.projection.points)}};
}

// ---------------------------------------------------------------------------
// Subcommand plumbing.

inline int log_level() {
  const char* v = std::getenv("HWBC_LOG");
  if (v == nullptr || *v == '\0') return 1;
  return std::atoi(v);
}

struct Common {
  std::uint64_t seed = 0;
  std::string config;
  std::string out;
  std::string model;
  std::string library;
};

struct Run {
  std::ostream& err;
  RunManifest manifest;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  void log(int level, const std::string& msg) const {
    if (log_level() >= level) err << "hwbc: " << msg << "\n";
  }

  void input(const std::string& path) { manifest.inputs.push_back({path, file_hash(path)}); }

  void write(const std::string& path, const std::string& text) {
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    io::write_text(path, text);
    manifest.outputs.push_back({path, file_hash(path)});
  }

  void write_json(const std::string& path, const io::Json& j) { write(path, j.dump(2) + "\n"); }

  void finish(const std::string& manifest_path) {
    manifest.config_hash = io::hex64(fnv1a64(manifest.config.dump()));
    manifest.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    io::write_json(manifest_path, manifest_to_json(manifest));
    log(1, "wrote " + manifest_path);
  }
};

inline std::string manifest_path_for(const std::string& out, bool directory) {
  return directory ? (std::filesystem::path(out) / "manifest.json").string()
                   : out + ".manifest.json";
}

inline io::Json read_config(Run& run, const Common& c) {
  if (c.config.empty()) return io::Json::object();
  run.input(c.config);
  io::Json j = io::read_json(c.config);
  if (!j.is_object()) throw InputError(c.config + ": config must be a JSON object");
  return j;
}

inline RobotModel resolve_model(Run& run, const Common& c) {
  if (c.model.empty()) return toy::humanoid();
  run.input(c.model);
  return load_model(c.model);
}

inline MotionLibrary resolve_library(Run& run, const Common& c, const RobotModel& model) {
  if (c.library.empty()) return toy_library(model);
  run.input(c.library);
  return library_from_json(io::read_json(c.library), model);
}

inline LMConfig lm_from_json(const io::Json& j) {
  LMConfig c;
  c.lambda_init = io::get_or(j, "lambda_init", c.lambda_init);
  c.lambda_increase = io::get_or(j, "lambda_increase", c.lambda_increase);
  c.lambda_decrease = io::get_or(j, "lambda_decrease", c.lambda_decrease);
  c.lambda_min = io::get_or(j, "lambda_min", c.lambda_min);
  c.lambda_max = io::get_or(j, "lambda_max", c.lambda_max);
  c.max_outer_iterations = io::get_or(j, "max_outer_iterations", c.max_outer_iterations);
  c.step_tolerance = io::get_or(j, "step_tolerance", c.step_tolerance);
  c.residual_tolerance = io::get_or(j, "residual_tolerance", c.residual_tolerance);
  c.validate();
  return c;
}

inline io::Json lm_to_json(const LMConfig& c) {
  return {{"lambda_init", c.lambda_init},       {"lambda_increase", c.lambda_increase},
          {"lambda_decrease", c.lambda_decrease}, {"lambda_min", c.lambda_min},
          {"lambda_max", c.lambda_max},         {"max_outer_iterations", c.max_outer_iterations},
          {"step_tolerance", c.step_tolerance}, {"residual_tolerance", c.residual_tolerance}};
}

// "nominal", "standard", or an explicit table.
inline RandomizationConfig randomization_from_setting(const io::Json& j) {
  if (j.is_string()) {
    const auto name = j.get<std::string>();
    if (name == "nominal") return RandomizationConfig::nominal();
    if (name == "standard") return RandomizationConfig::standard();
    throw InputError("unknown randomization preset '" + name + "'");
  }
  return randomization_from_json(j);
}

// Rollout env settings: seeds derive from --seed unless the config pins them.
inline RolloutSettings rollout_settings(const io::Json& cfg, std::uint64_t seed, io::Json& effective) {
  RolloutSettings s;
  Rng rng(seed);
  s.env_seed = io::get_or<std::uint64_t>(cfg, "env_seed", rng.next_u64());
  s.reset_seed = io::get_or<std::uint64_t>(cfg, "reset_seed", rng.next_u64());
  const io::Json rand = io::get_or<io::Json>(cfg, "randomization", "nominal");
  s.randomization = randomization_from_setting(rand);
  effective["env_seed"] = s.env_seed;
  effective["reset_seed"] = s.reset_seed;
  effective["randomization"] = rand;
  return s;
}

// Loaded student of either kind.
struct AnyStudent {
  std::optional<CvaeStudent> cvae;
  std::optional<MlpStudent> mlp;

  const CVAEConfig& config() const { return cvae ? cvae->config() : mlp->config(); }
};

inline AnyStudent load_student(Run& run, const std::string& path) {
  run.input(path);
  const io::Json j = io::read_json(path);
  const std::string schema = j.value("schema", "");
  AnyStudent s;
  if (schema.rfind("hwbc.mlp_checkpoint/", 0) == 0) {
    s.mlp.emplace(mlp_student_from_json(j));
  } else {
    s.cvae.emplace(cvae_student_from_json(j));
  }
  return s;
}

inline void check_student_fits(const CVAEConfig& c, const RobotModel& model) {
  require(c.obs_dim == 9 + 2 * model.num_joints() && c.action_dim == model.num_joints(),
          "checkpoint dimensions do not match the robot model");
}

// ---------------------------------------------------------------------------
// Subcommands. Each fills run.manifest and returns normally or throws.

struct RetargetArgs {
  std::string motion;
};

inline void cmd_retarget(Run& run, const Common& c, const RetargetArgs& a) {
  const io::Json cfg = read_config(run, c);
  const RobotModel model = resolve_model(run, c);
  run.input(a.motion);
  MotionTargets mt = motion_targets_from_json(io::read_json(a.motion), model);
  mt.problem.w_ori = io::get_or(cfg, "w_ori", 0.1);
  mt.problem.w_smooth = io::get_or(cfg, "w_smooth", 1e-4);
  const LMConfig lm = lm_from_json(io::get_or<io::Json>(cfg, "lm", io::Json::object()));
  run.manifest.config = {{"w_ori", mt.problem.w_ori},
                         {"w_smooth", mt.problem.w_smooth},
                         {"warm_start", io::get_or(cfg, "warm_start", true)},
                         {"lm", lm_to_json(lm)}};
  const Matrix q0 = run.manifest.config["warm_start"].get<bool>()
                        ? warm_start_trajectory(model, mt.problem, lm)
                        : Matrix(model.mid_range().transpose().replicate(mt.problem.num_frames(), 1));
  const RetargetResult res = retarget_sequence(model, mt.problem, lm, q0);
  if (!all_finite(res.joints)) throw NumericalError("retargeting produced non-finite joints");
  run.write_json(c.out, retarget_result_to_json(res, model, mt.fps));
  const double rmse = std::sqrt(res.frame_rmse.squaredNorm() / static_cast<double>(res.frame_rmse.size()));
  int violations = 0;
  for (Eigen::Index t = 0; t < res.joints.rows(); ++t)
    violations += !within_limits(res.joints.row(t).transpose(), model);
  run.manifest.results = {{"frames", mt.problem.num_frames()},
                          {"keypoint_rmse", rmse},
                          {"mean_keypoint_error", res.mean_keypoint_error},
                          {"limit_violations", violations},
                          {"iterations", res.iterations},
                          {"stop_reason", res.stop_reason}};
  run.log(1, "retarget: keypoint rmse " + io::format_double(rmse) + " m");
}

struct EvalArgs {
  std::string rollout;
  int horizon = 0;
};

inline void cmd_eval_motion(Run& run, const Common& c, const EvalArgs& a) {
  read_config(run, c);
  run.input(a.rollout);
  const auto frames = read_eval_rollout(io::read_text(a.rollout));
  require(!frames.empty(), a.rollout + ": rollout has no frames");
  std::vector<RolloutFrame> pairs;
  std::vector<RobotState> states;
  int terminated = 0;
  for (const auto& f : frames) {
    pairs.emplace_back(f.state, f.reference);
    states.push_back(f.state);
    terminated += f.terminated;
  }
  const int horizon = a.horizon > 0 ? a.horizon : static_cast<int>(frames.size());
  run.manifest.config = {{"horizon", horizon}};
  const double quality = motion_quality(pairs);
  const double stable = stability(states, horizon);

  // Per-frame reward rows (raw expressions) and their means.
  const RobotModel model = resolve_model(run, c);
  const JointContext ctx = JointContext::from_model(model);
  std::string csv = "frame";
  for (auto name : kTermNames) csv += "," + std::string(name);
  csv += ",total\n";
  std::array<double, kNumTerms> sums{};
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const RewardTerms r = reward_terms(frames[t].state, frames[t].reference, ctx, {}, frames[t].terminated);
    csv += std::to_string(t);
    for (int i = 0; i < kNumTerms; ++i) {
      csv += "," + io::format_double(r.raw[i]);
      sums[i] += r.raw[i];
    }
    csv += "," + io::format_double(r.total) + "\n";
  }
  io::Json means = io::Json::object();
  for (int i = 0; i < kNumTerms; ++i)
    means[std::string(kTermNames[i])] = sums[i] / static_cast<double>(frames.size());

  const io::Json report = {{"schema", io::schema_tag("motion_report")},
                           {"frames", frames.size()},
                           {"quality", quality},
                           {"stability", stable},
                           {"terminated_frames", terminated},
                           {"per_term_means", means}};
  run.write_json(c.out, report);
  run.write(c.out + ".terms.csv", csv);
  run.manifest.results = report;
  run.log(1, "eval-motion: quality " + io::format_double(quality));
}

struct TrainArgs {
  std::optional<int> iterations;
  std::string student;
  int checkpoint_every = 0;
};

inline int cmd_train_student(Run& run, const Common& c, const TrainArgs& a) {
  const io::Json cfg = read_config(run, c);
  const RobotModel model = resolve_model(run, c);
  MotionLibrary lib = resolve_library(run, c, model);
  DAggerConfig dc = dagger_config_from_json(io::get_or<io::Json>(cfg, "dagger", io::Json::object()));
  dc.seed = c.seed;
  if (a.iterations) dc.iterations = *a.iterations;
  dc.validate();
  CVAEConfig base;
  base.obs_dim = 9 + 2 * model.num_joints();
  base.action_dim = model.num_joints();
  io::Json cvae_json = io::get_or<io::Json>(cfg, "cvae", io::Json::object());
  cvae_json.erase("obs_dim");
  cvae_json.erase("action_dim");
  const CVAEConfig sc = cvae_config_from_json(cvae_json, base);
  const std::string kind = !a.student.empty() ? a.student : io::get_or<std::string>(cfg, "student", "cvae");
  require(kind == "cvae" || kind == "mlp", "student must be 'cvae' or 'mlp'");
  const int every = a.checkpoint_every > 0 ? a.checkpoint_every : io::get_or(cfg, "checkpoint_every", 0);
  require(every >= 0, "checkpoint_every must be >= 0");
  TeacherConfig tc;
  tc.contraction = io::get_or(io::get_or<io::Json>(cfg, "teacher", io::Json::object()), "contraction",
                              tc.contraction);
  tc.validate();
  const io::Json rand_setting = io::get_or<io::Json>(cfg, "randomization", "standard");
  const RandomizationConfig rand = randomization_from_setting(rand_setting);
  run.manifest.config = {{"student", kind},
                         {"dagger", dagger_config_to_json(dc)},
                         {"cvae", cvae_config_to_json(sc)},
                         {"teacher", {{"contraction", tc.contraction}}},
                         {"randomization", rand_setting},
                         {"checkpoint_every", every}};

  const std::filesystem::path dir(c.out);
  std::filesystem::create_directories(dir);
  run.write_json((dir / "library.json").string(), library_to_json(lib));
  EnvPool pool(model, lib, sc, dc, DynamicsConfig{}, rand);
  std::string curve = "iteration,imitation,kl,loss,quality,progress,active_motions,terminations,buffer_size\n";

  const auto train = [&](auto& student) {
    using S = std::decay_t<decltype(student)>;
    const auto on_iter = [&](const IterationStats& s, const S& st) {
      curve += std::to_string(s.iteration) + "," + io::format_double(s.imitation) + "," +
               io::format_double(s.kl) + "," + io::format_double(s.loss) + "," +
               io::format_double(s.quality) + "," + io::format_double(s.progress) + "," +
               std::to_string(s.active_motions) + "," + std::to_string(s.terminations) + "," +
               std::to_string(s.buffer_size) + "\n";
      if (every > 0 && s.iteration % every == 0)
        run.write_json((dir / ("checkpoint_" + std::to_string(s.iteration) + ".json")).string(),
                       st.to_json());
      if (s.iteration % 100 == 0 || s.iteration == dc.iterations)
        run.log(1, "iteration " + std::to_string(s.iteration) + " imitation " +
                       io::format_double(s.imitation) + " quality " + io::format_double(s.quality));
    };
    const TrainResult r = dagger_train(dc, pool, student, oracle_teacher(tc),
                                       std::function<void(const IterationStats&, const S&)>(on_iter));
    run.write((dir / "loss_curve.csv").string(), curve);
    run.write_json((dir / "checkpoint.json").string(), student.to_json());
    run.manifest.results = {{"iterations_completed", r.curve.size()},
                            {"diverged", r.diverged},
                            {"final_imitation", r.final_imitation}};
    if (!r.curve.empty()) {
      run.manifest.results["first_imitation"] = r.curve.front().imitation;
      run.manifest.results["last_imitation"] = r.curve.back().imitation;
    }
    if (r.diverged) {
      run.manifest.results["error"] = r.error;
      run.log(0, "training diverged: " + r.error + " (last finite parameters saved)");
      return 2;
    }
    return 0;
  };
  if (kind == "mlp") {
    MlpStudent st(sc, dc.seed, adam_for(dc));
    return train(st);
  }
  CvaeStudent st(sc, dc.seed, adam_for(dc));
  return train(st);
}

struct RolloutArgs {
  std::string checkpoint;
  std::string script;
  std::string command;
  int steps = 250;
};

inline void cmd_rollout(Run& run, const Common& c, const RolloutArgs& a) {
  require(a.script.empty() != a.command.empty(), "give exactly one of --script or --command");
  const io::Json cfg = read_config(run, c);
  const RobotModel model = resolve_model(run, c);
  const MotionLibrary lib = resolve_library(run, c, model);
  const AnyStudent st = load_student(run, a.checkpoint);
  check_student_fits(st.config(), model);
  io::Json eff;
  const RolloutSettings settings = rollout_settings(cfg, c.seed, eff);
  std::vector<RolloutStep> log;
  if (!a.script.empty()) {
    run.input(a.script);
    const CommandScript script = parse_script(io::read_text(a.script));
    log = st.cvae ? rollout_script(*st.cvae, model, lib, script, settings)
                  : rollout_script(*st.mlp, model, lib, script, settings);
    eff["script_duration"] = script_duration(script);
  } else {
    require(a.steps >= 1, "--steps must be >= 1");
    log = st.cvae ? rollout_command(*st.cvae, model, lib, a.command, a.steps, settings)
                  : rollout_command(*st.mlp, model, lib, a.command, a.steps, settings);
    eff["command"] = a.command;
    eff["steps"] = a.steps;
  }
  run.manifest.config = eff;
  for (const auto& s : log)
    if (!s.action.allFinite()) throw NumericalError("policy produced a non-finite action");
  run.write(c.out, rollout_log_to_text(log));
  run.manifest.results = {{"frames", log.size()}};
  run.log(1, "rollout: " + std::to_string(log.size()) + " frames");
}

struct InterpolateArgs {
  std::string checkpoint;
  std::string text_a, text_b;
  std::vector<double> alpha{0.5};
  int steps = 250;
};

inline void cmd_interpolate(Run& run, const Common& c, const InterpolateArgs& a) {
  const io::Json cfg = read_config(run, c);
  const RobotModel model = resolve_model(run, c);
  const MotionLibrary lib = resolve_library(run, c, model);
  const AnyStudent st = load_student(run, a.checkpoint);
  require(st.cvae.has_value(), "interpolate needs a CVAE checkpoint");
  check_student_fits(st.config(), model);
  require(a.steps >= 1, "--steps must be >= 1");
  io::Json eff;
  const RolloutSettings settings = rollout_settings(cfg, c.seed, eff);
  eff["text_a"] = a.text_a;
  eff["text_b"] = a.text_b;
  eff["alpha"] = a.alpha;
  eff["steps"] = a.steps;
  run.manifest.config = eff;
  const auto log = interpolate_rollout(*st.cvae, model, lib, a.text_a, a.text_b, a.alpha, a.steps, settings);
  for (const auto& s : log)
    if (!s.action.allFinite()) throw NumericalError("decoder produced a non-finite action");
  run.write(c.out, rollout_log_to_text(log));
  run.manifest.results = {{"frames", log.size()}};
}

struct LatentArgs {
  std::string checkpoint;
  std::vector<std::string> commands;
  int steps = 100;
};

inline void cmd_dump_latents(Run& run, const Common& c, const LatentArgs& a) {
  const io::Json cfg = read_config(run, c);
  const RobotModel model = resolve_model(run, c);
  const MotionLibrary lib = resolve_library(run, c, model);
  const AnyStudent st = load_student(run, a.checkpoint);
  require(st.cvae.has_value(), "dump-latents needs a CVAE checkpoint");
  check_student_fits(st.config(), model);
  std::vector<std::string> commands = a.commands;
  if (commands.empty())
    for (const auto& m : lib.motions) commands.push_back(m.caption);
  io::Json eff;
  const RolloutSettings settings = rollout_settings(cfg, c.seed, eff);
  eff["commands"] = commands;
  eff["steps"] = a.steps;
  run.manifest.config = eff;
  const LatentAnalysis an = dump_latents(*st.cvae, model, lib, commands, a.steps, settings);
  run.write(c.out, latent_csv(an.rows));
  run.write_json(c.out + ".projection.json", latent_analysis_to_json(an));
  run.manifest.results = {{"rows", an.rows.size()},
                          {"variance_fraction", an.projection.variance_fraction},
                          {"silhouette", an.silhouette},
                          {"centroid_ratio", an.centroid_ratio}};
}

struct MirrorArgs {
  std::string spec;
  int samples = 1000;
};

inline void cmd_mirror_check(Run& run, const Common& c, const MirrorArgs& a) {
  read_config(run, c);
  const RobotModel model = resolve_model(run, c);
  require(a.samples >= 1, "--samples must be >= 1");
  MirrorSpec spec{joint_mirror(model), observation_mirror(model, true)};
  if (!a.spec.empty()) {
    run.input(a.spec);
    spec = mirror_spec_from_json(io::read_json(a.spec), &model);
  }
  run.manifest.config = {{"samples", a.samples}, {"spec", mirror_spec_to_json(spec)}};
  Rng rng(c.seed);
  double state_err = 0.0, action_err = 0.0, reward_err = 0.0;
  const JointContext ctx = JointContext::from_model(model);
  const MetricWeights w;
  const int feet = 2;
  for (int i = 0; i < a.samples; ++i) {
    const Vector s = rng.normal_vector(spec.state.size());
    const Vector act = rng.normal_vector(spec.joints.size());
    state_err = std::max(state_err, (mirror_state(mirror_state(s, spec), spec) - s).cwiseAbs().maxCoeff());
    action_err =
        std::max(action_err, (mirror_action(mirror_action(act, spec), spec) - act).cwiseAbs().maxCoeff());
    if (spec.joints.size() == model.num_joints()) {
      RobotState rs = RobotState::at_rest(model.num_joints(), model.num_keypoints(), feet);
      rs.joint_pos = rng.normal_vector(model.num_joints());
      rs.joint_vel = rng.normal_vector(model.num_joints());
      rs.action = act;
      rs.keypoints = keypoint_positions(model, clamp_to_limits(rs.joint_pos, model));
      ReferenceFrame ref{keypoint_positions(model, model.default_angles()), model.default_angles(),
                         0.0, 0.0};
      const double a0 = reward_terms(rs, ref, ctx, w, false).total;
      const double a1 =
          reward_terms(mirror_robot_state(rs, model), mirror_reference(ref, model), ctx, w, false).total;
      reward_err = std::max(reward_err, std::abs(a0 - a1));
    }
  }
  const bool passed = state_err == 0.0 && action_err == 0.0 && reward_err <= 1e-9;
  const io::Json report = {{"schema", io::schema_tag("mirror_report")},
                           {"samples", a.samples},
                           {"state_involution_error", state_err},
                           {"action_involution_error", action_err},
                           {"reward_invariance_error", reward_err},
                           {"passed", passed}};
  run.write_json(c.out, report);
  run.manifest.results = report;
  if (!passed) throw InputError("mirror maps failed the consistency check");
}

// ---------------------------------------------------------------------------

inline void add_common(CLI::App* sub, Common& c, bool out_is_dir) {
  sub->add_option("--seed", c.seed, "Random seed (default 0)");
  sub->add_option("--config", c.config, "JSON config file; flags override its values")
      ->check(CLI::ExistingFile);
  sub->add_option("--out", c.out, out_is_dir ? "Output directory" : "Output file")->required();
}

inline void add_model(CLI::App* sub, Common& c) {
  sub->add_option("--model", c.model, "Robot model JSON (default: built-in toy humanoid)")
      ->check(CLI::ExistingFile);
}

inline void add_library(CLI::App* sub, Common& c) {
  sub->add_option("--library", c.library, "Motion library JSON (default: built-in toy library)")
      ->check(CLI::ExistingFile);
}

inline int run(std::vector<std::string> args, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"Humanoid whole-body control toolkit: retargeting, rewards, "
               "text-conditioned student distillation and rollouts."};
  app.name("hwbc");
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  Common common;

  auto* retarget = app.add_subcommand("retarget", "Retarget keypoint targets onto the robot");
  RetargetArgs ra;
  add_common(retarget, common, false);
  add_model(retarget, common);
  retarget->add_option("--motion", ra.motion, "Motion targets JSON")->required()->check(CLI::ExistingFile);

  auto* eval = app.add_subcommand("eval-motion", "Score a recorded rollout against its reference");
  EvalArgs ea;
  add_common(eval, common, false);
  add_model(eval, common);
  eval->add_option("--rollout", ea.rollout, "Rollout JSON lines (state + reference per frame)")
      ->required()
      ->check(CLI::ExistingFile);
  eval->add_option("--horizon", ea.horizon, "Stability horizon in frames (default: whole rollout)");

  auto* train = app.add_subcommand("train-student", "Distill the teacher into a text-conditioned student");
  TrainArgs ta;
  add_common(train, common, true);
  add_model(train, common);
  add_library(train, common);
  train->add_option("--iterations", ta.iterations, "Override dagger.iterations");
  train->add_option("--student", ta.student, "Student kind: cvae or mlp")
      ->check(CLI::IsMember({"cvae", "mlp"}));
  train->add_option("--checkpoint-every", ta.checkpoint_every, "Write a checkpoint every N iterations");

  auto* roll = app.add_subcommand("rollout", "Run a student from a text command or a command script");
  RolloutArgs ro;
  add_common(roll, common, false);
  add_model(roll, common);
  add_library(roll, common);
  roll->add_option("--checkpoint", ro.checkpoint, "Student checkpoint JSON")->required()->check(CLI::ExistingFile);
  roll->add_option("--script", ro.script, "Command script: '<text>: <seconds>' per line")
      ->check(CLI::ExistingFile);
  roll->add_option("--command", ro.command, "Single text command");
  roll->add_option("--steps", ro.steps, "Control steps for --command (default 250)");

  auto* interp = app.add_subcommand("interpolate", "Blend two commands in the latent space");
  InterpolateArgs ia;
  add_common(interp, common, false);
  add_model(interp, common);
  add_library(interp, common);
  interp->add_option("--checkpoint", ia.checkpoint, "CVAE checkpoint JSON")->required()->check(CLI::ExistingFile);
  interp->add_option("--text-a", ia.text_a, "Command at alpha = 0")->required();
  interp->add_option("--text-b", ia.text_b, "Command at alpha = 1")->required();
  interp->add_option("--alpha", ia.alpha, "Alpha per step; the last value repeats (default 0.5)")
      ->check(CLI::Range(0.0, 1.0));
  interp->add_option("--steps", ia.steps, "Control steps (default 250)");

  auto* latents = app.add_subcommand("dump-latents", "Write latent means per command and a 2-D projection");
  LatentArgs la;
  add_common(latents, common, false);
  add_model(latents, common);
  add_library(latents, common);
  latents->add_option("--checkpoint", la.checkpoint, "CVAE checkpoint JSON")->required()->check(CLI::ExistingFile);
  latents->add_option("--command", la.commands, "Command to roll out (repeatable; default: library captions)");
  latents->add_option("--steps", la.steps, "Control steps per command (default 100)");

  auto* mirror = app.add_subcommand("mirror-check", "Check mirror maps and reward invariance");
  MirrorArgs ma;
  add_common(mirror, common, false);
  add_model(mirror, common);
  mirror->add_option("--spec", ma.spec, "Mirror spec JSON (default: derived from the model)")
      ->check(CLI::ExistingFile);
  mirror->add_option("--samples", ma.samples, "Random samples (default 1000)");

  std::vector<std::string> argv_store = {"hwbc"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : argv_store) argv.push_back(s.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 1;
  }

  Run r{err, {}};
  const auto* sub = app.get_subcommands().front();
  r.manifest.command = sub->get_name();
  r.manifest.seed = common.seed;
  const bool dir_out = sub == train;
  int code = 0;
  try {
    if (sub == retarget) cmd_retarget(r, common, ra);
    else if (sub == eval) cmd_eval_motion(r, common, ea);
    else if (sub == train) code = cmd_train_student(r, common, ta);
    else if (sub == roll) cmd_rollout(r, common, ro);
    else if (sub == interp) cmd_interpolate(r, common, ia);
    else if (sub == latents) cmd_dump_latents(r, common, la);
    else if (sub == mirror) cmd_mirror_check(r, common, ma);
    r.finish(manifest_path_for(common.out, dir_out));
  } catch (const NumericalError& e) {
    err << "hwbc: numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const InputError& e) {
    err << "hwbc: " << e.what() << "\n";
    return 1;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "hwbc: " << e.what() << "\n";
    return 1;
  }
  return code;
}

}  // namespace hwbc::cli
