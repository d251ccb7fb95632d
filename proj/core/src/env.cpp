#include "mcd/env.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

namespace mcd {

const char* to_string(TaskFamily f) {
  switch (f) {
    case TaskFamily::kSinglePlace: return "single-place";
    case TaskFamily::kTwoStage: return "two-stage";
    case TaskFamily::kNovelLayout: return "novel-layout";
  }
  return "?";
}

TaskFamily task_family_from_string(const std::string& s) {
  if (s == "single-place") return TaskFamily::kSinglePlace;
  if (s == "two-stage") return TaskFamily::kTwoStage;
  if (s == "novel-layout") return TaskFamily::kNovelLayout;
  throw ValidationError("unknown task family: " + s);
}

void EnvSpec::validate() const {
  if (object_count < 1) throw ValidationError("env: object_count must be >= 1");
  if (family == TaskFamily::kTwoStage && object_count < 2) {
    throw ValidationError("env: two-stage tasks need at least 2 objects");
  }
  if (max_speed <= 0 || grip_speed <= 0) throw ValidationError("env: speeds must be positive");
  if (noise_scale < 0) throw ValidationError("env: noise_scale must be >= 0");
  // Generous bound on expert completion: cross the arena per phase, per stage.
  const int per_stage = static_cast<int>(4.0 / max_speed + 2.0 / grip_speed) + 16;
  if (max_steps < per_stage * stage_count()) {
    throw ValidationError("env: max_steps below minimum expert completion length");
  }
}

namespace {

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

double dist2d(double ax, double ay, double bx, double by) {
  return std::hypot(ax - bx, ay - by);
}

}  // namespace

Env::Env(const EnvSpec& spec, std::uint64_t seed) : spec_(spec), noise_(0) {
  spec_.validate();
  reset(seed);
}

void Env::reset(std::uint64_t seed) {
  noise_ = Rng(derive_seed(seed, "env-noise"));
  Rng layout(derive_seed(seed, "env-layout"));

  state_ = EnvState{};
  state_.gx = layout.uniform(0.1, 0.9);
  state_.gy = layout.uniform(0.1, 0.9);
  state_.grip = 1.0;
  state_.attached_object = -1;
  state_.steps = 0;

  // Objects spawn in a lower band, goals in an upper band; the novel-layout
  // family shifts the object band sideways to make layouts out-of-support.
  const bool novel = spec_.family == TaskFamily::kNovelLayout;
  const double shift = novel ? spec_.novel_shift : 0.0;
  state_.objects.resize(static_cast<std::size_t>(spec_.object_count));
  state_.goals.resize(static_cast<std::size_t>(spec_.object_count));
  for (int j = 0; j < spec_.object_count; ++j) {
    const double lo = novel ? 0.05 + shift : 0.05;
    const double hi = novel ? 0.45 + shift : 0.45;
    // Resample until objects are separated enough that the expert can never
    // close over the wrong one.
    for (int attempt = 0; attempt < 64; ++attempt) {
      std::array<double, 2> candidate = {layout.uniform(lo, std::min(hi, 0.95)),
                                         layout.uniform(0.08, 0.42)};
      bool clear = true;
      for (int k = 0; k < j; ++k) {
        const auto& other = state_.objects[static_cast<std::size_t>(k)];
        if (dist2d(candidate[0], candidate[1], other[0], other[1]) < 3.0 * spec_.grasp_radius) {
          clear = false;
          break;
        }
      }
      state_.objects[static_cast<std::size_t>(j)] = candidate;
      if (clear) break;
    }
    state_.goals[static_cast<std::size_t>(j)] = {layout.uniform(0.1, 0.9),
                                                 layout.uniform(0.6, 0.92)};
    // Keep distinct goals apart so two-stage placements cannot overlap.
    if (j > 0) {
      auto& g = state_.goals[static_cast<std::size_t>(j)];
      const auto& g0 = state_.goals[0];
      if (dist2d(g[0], g[1], g0[0], g0[1]) < 2.2 * spec_.goal_radius) {
        g[0] = clamp01(g0[0] + (g0[0] < 0.5 ? 0.3 : -0.3));
      }
    }
  }
  state_.scene_private.resize(static_cast<std::size_t>(spec_.private_dims));
  state_.hand_private.resize(static_cast<std::size_t>(spec_.private_dims));
  for (auto& v : state_.scene_private) v = layout.uniform(-0.8, 0.8);
  for (auto& v : state_.hand_private) v = layout.uniform(-0.8, 0.8);
}

bool Env::success() const {
  if (state_.grip <= 0.5) return false;
  const int targets = spec_.stage_count();
  for (int j = 0; j < targets; ++j) {
    const auto& o = state_.objects[static_cast<std::size_t>(j)];
    const auto& g = state_.goals[static_cast<std::size_t>(j)];
    if (dist2d(o[0], o[1], g[0], g[1]) > spec_.goal_radius) return false;
  }
  return true;
}

StepResult Env::step(const std::array<double, 3>& action) {
  for (const double a : action) {
    if (!std::isfinite(a)) throw ValidationError("env: non-finite action component");
  }
  const double dx = std::clamp(action[0], -spec_.max_speed, spec_.max_speed);
  const double dy = std::clamp(action[1], -spec_.max_speed, spec_.max_speed);
  const double dg = std::clamp(action[2], -spec_.grip_speed, spec_.grip_speed);

  const double nx = spec_.noise_scale > 0 ? noise_.uniform(-spec_.noise_scale, spec_.noise_scale) : 0.0;
  const double ny = spec_.noise_scale > 0 ? noise_.uniform(-spec_.noise_scale, spec_.noise_scale) : 0.0;

  state_.gx = clamp01(state_.gx + dx + nx);
  state_.gy = clamp01(state_.gy + dy + ny);
  state_.grip = clamp01(state_.grip + dg);

  if (state_.attached_object >= 0) {
    if (state_.grip > 0.5) {
      state_.attached_object = -1;  // release
    } else {
      auto& o = state_.objects[static_cast<std::size_t>(state_.attached_object)];
      o = {state_.gx, state_.gy};
    }
  } else if (state_.grip <= 0.5) {
    int nearest = -1;
    double best = spec_.grasp_radius;
    for (int j = 0; j < spec_.object_count; ++j) {
      const auto& o = state_.objects[static_cast<std::size_t>(j)];
      const double d = dist2d(o[0], o[1], state_.gx, state_.gy);
      if (d <= best) {
        best = d;
        nearest = j;
      }
    }
    if (nearest >= 0) {
      state_.attached_object = nearest;
      state_.objects[static_cast<std::size_t>(nearest)] = {state_.gx, state_.gy};
    }
  }

  for (auto& v : state_.scene_private) {
    v = std::clamp(v + spec_.private_walk * noise_.normal(), -1.0, 1.0);
  }
  for (auto& v : state_.hand_private) {
    v = std::clamp(v + spec_.private_walk * noise_.normal(), -1.0, 1.0);
  }

  state_.steps += 1;
  StepResult r;
  r.success = success();
  r.done = r.success || state_.steps >= spec_.max_steps;
  return r;
}

std::vector<ModalitySpec> modality_specs_for(const EnvSpec& spec) {
  return {
      {"scene", 6 * spec.object_count + spec.private_dims, ReconNorm::kL2},
      {"hand", 4 * spec.object_count + spec.private_dims, ReconNorm::kL2},
      {"proprio", 3, ReconNorm::kL1},
  };
}

std::vector<std::vector<double>> observe(const EnvState& state, const EnvSpec& spec) {
  std::vector<double> scene, hand, proprio;
  scene.reserve(static_cast<std::size_t>(6 * spec.object_count));
  hand.reserve(static_cast<std::size_t>(4 * spec.object_count));
  for (int j = 0; j < spec.object_count; ++j) {
    const auto& o = state.objects[static_cast<std::size_t>(j)];
    const auto& g = state.goals[static_cast<std::size_t>(j)];
    scene.insert(scene.end(), {o[0], o[1], g[0], g[1], o[0] - g[0], o[1] - g[1]});
    hand.insert(hand.end(),
                {o[0] - state.gx, o[1] - state.gy, g[0] - state.gx, g[1] - state.gy});
  }
  scene.insert(scene.end(), state.scene_private.begin(), state.scene_private.end());
  hand.insert(hand.end(), state.hand_private.begin(), state.hand_private.end());
  proprio = {state.gx, state.gy, state.grip};
  return {scene, hand, proprio};
}

std::vector<std::vector<std::pair<double, double>>> observation_bounds(const EnvSpec& spec) {
  std::vector<std::pair<double, double>> scene, hand, proprio;
  for (int j = 0; j < spec.object_count; ++j) {
    // object and goal positions, then the object-goal offset
    for (int k = 0; k < 4; ++k) scene.push_back({0.0, 1.0});
    scene.push_back({-1.0, 1.0});
    scene.push_back({-1.0, 1.0});
    for (int k = 0; k < 4; ++k) hand.push_back({-1.0, 1.0});
  }
  for (int k = 0; k < spec.private_dims; ++k) scene.push_back({-1.0, 1.0});
  for (int k = 0; k < spec.private_dims; ++k) hand.push_back({-1.0, 1.0});
  for (int k = 0; k < 3; ++k) proprio.push_back({0.0, 1.0});
  return {scene, hand, proprio};
}

ArenaSketch decode_observation(const std::vector<std::vector<double>>& obs, const EnvSpec& spec) {
  ArenaSketch s;
  const auto& scene = obs.at(0);
  const auto& proprio = obs.at(2);
  for (int j = 0; j < spec.object_count; ++j) {
    const std::size_t base = static_cast<std::size_t>(6 * j);
    s.objects.push_back({scene[base], scene[base + 1]});
    s.goals.push_back({scene[base + 2], scene[base + 3]});
  }
  s.gx = proprio[0];
  s.gy = proprio[1];
  s.grip = proprio[2];
  return s;
}

ScriptedExpert::ScriptedExpert(const EnvSpec& spec) : spec_(spec) {}

const char* ScriptedExpert::phase_label() const {
  switch (phase_) {
    case Phase::kReach: return "reach";
    case Phase::kGrasp: return "grasp";
    case Phase::kTransport: return "transport";
    case Phase::kPlace: return "place";
  }
  return "?";
}

std::array<double, 3> ScriptedExpert::act(const EnvState& state) {
  if (finished_) return {0.0, 0.0, 0.0};
  const auto& obj = state.objects[static_cast<std::size_t>(stage_)];
  const auto& goal = state.goals[static_cast<std::size_t>(stage_)];

  auto toward = [&](double tx, double ty) -> std::array<double, 3> {
    const double ex = tx - state.gx;
    const double ey = ty - state.gy;
    const double d = std::hypot(ex, ey);
    if (d < 1e-12) return {0.0, 0.0, 0.0};
    const double s = std::min(spec_.max_speed, d) / d;
    return {ex * s, ey * s, 0.0};
  };

  switch (phase_) {
    case Phase::kReach: {
      if (dist2d(state.gx, state.gy, obj[0], obj[1]) <= 0.45 * spec_.grasp_radius) {
        phase_ = Phase::kGrasp;
        return act(state);
      }
      auto a = toward(obj[0], obj[1]);
      if (state.grip < 1.0) a[2] = spec_.grip_speed;  // make sure hand is open on approach
      return a;
    }
    case Phase::kGrasp: {
      if (state.attached_object == stage_ && state.grip <= 0.25) {
        phase_ = Phase::kTransport;
        return act(state);
      }
      return {0.0, 0.0, -spec_.grip_speed};
    }
    case Phase::kTransport: {
      if (dist2d(state.gx, state.gy, goal[0], goal[1]) <= 0.35 * spec_.goal_radius) {
        phase_ = Phase::kPlace;
        return act(state);
      }
      return toward(goal[0], goal[1]);
    }
    case Phase::kPlace: {
      if (state.grip >= 1.0) {
        if (stage_ + 1 < spec_.stage_count()) {
          stage_ += 1;
          phase_ = Phase::kReach;
          return act(state);
        }
        finished_ = true;
        return {0.0, 0.0, 0.0};
      }
      return {0.0, 0.0, spec_.grip_speed};
    }
  }
  return {0.0, 0.0, 0.0};
}

Dataset generate_demonstrations(const EnvSpec& spec, const TaskMix& mix, int n,
                                std::uint64_t seed, GenerationReport* report) {
  if (n < 1) throw ValidationError("generate_demonstrations: n must be >= 1");
  spec.validate();
  if (mix.single_place < 0 || mix.two_stage < 0 || mix.novel_layout < 0 ||
      mix.single_place + mix.two_stage + mix.novel_layout <= 0) {
    throw ValidationError("generate_demonstrations: invalid task mix");
  }

  Dataset ds;
  ds.modalities = modality_specs_for(spec);
  ds.action_dim = kActionDim;
  ds.seed = seed;

  GenerationReport rep;
  rep.requested = n;

  Rng family_rng(derive_seed(seed, "family"));
  const double total = mix.single_place + mix.two_stage + mix.novel_layout;

  std::uint64_t episode = 0;
  while (static_cast<int>(ds.demos.size()) < n) {
    const std::uint64_t ep_seed = derive_seed(seed, "episode", episode);
    episode += 1;

    EnvSpec ep_spec = spec;
    const double u = family_rng.uniform01() * total;
    if (u < mix.single_place) {
      ep_spec.family = TaskFamily::kSinglePlace;
    } else if (u < mix.single_place + mix.two_stage) {
      ep_spec.family = TaskFamily::kTwoStage;
    } else {
      ep_spec.family = TaskFamily::kNovelLayout;
    }

    Env env(ep_spec, ep_seed);
    ScriptedExpert expert(ep_spec);
    // Sensor noise lives in the recording, not in observe(), which stays a
    // pure function of state. The expert acts on the true state.
    Rng sensor(derive_seed(ep_seed, "sensor"));

    Demonstration demo;
    demo.task_id = to_string(ep_spec.family);
    demo.modalities.resize(ds.modalities.size());
    std::vector<std::string> phase_per_frame;
    const auto bounds = observation_bounds(ep_spec);
    auto record_frame = [&](const std::vector<std::vector<double>>& obs) {
      for (std::size_t m = 0; m < obs.size(); ++m) {
        for (std::size_t k = 0; k < obs[m].size(); ++k) {
          double v = obs[m][k];
          if (ep_spec.obs_noise > 0) v += sensor.normal(0.0, ep_spec.obs_noise);
          const auto [lo, hi] = bounds[m][k];
          demo.modalities[m].push_back(static_cast<float>(std::clamp(v, lo, hi)));
        }
      }
    };

    bool success = false;
    while (true) {
      record_frame(observe(env.state(), ep_spec));
      const auto action = expert.act(env.state());
      phase_per_frame.push_back(expert.phase_label());
      for (const double a : action) demo.actions.push_back(static_cast<float>(a));
      demo.length += 1;

      const auto r = env.step(action);
      if (r.done) {
        success = r.success;
        break;
      }
    }

    if (!success) {
      rep.discarded += 1;
      std::cerr << "generate_demonstrations: expert failed on seed " << ep_seed
                << ", demo discarded\n";
      continue;
    }

    // Final settled frame with a zero action, so trajectories end at rest.
    record_frame(observe(env.state(), ep_spec));
    phase_per_frame.push_back(phase_per_frame.back());
    demo.actions.insert(demo.actions.end(), {0.0f, 0.0f, 0.0f});
    demo.length += 1;

    int start = 1;
    for (int t = 2; t <= demo.length; ++t) {
      if (phase_per_frame[static_cast<std::size_t>(t - 1)] !=
          phase_per_frame[static_cast<std::size_t>(start - 1)]) {
        demo.gt_segments.push_back({phase_per_frame[static_cast<std::size_t>(start - 1)], start, t});
        start = t;
      }
    }
    demo.gt_segments.push_back({phase_per_frame[static_cast<std::size_t>(start - 1)], start,
                                demo.length + 1});

    ds.demos.push_back(std::move(demo));
  }

  ds.validate();
  if (report) *report = rep;
  return ds;
}

}  // namespace mcd
