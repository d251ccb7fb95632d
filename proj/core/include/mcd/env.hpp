#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mcd/rng.hpp"
#include "mcd/types.hpp"

namespace mcd {

// 2-D kinematic pick-and-place arena in [0,1]^2. A gripper moves by bounded
// deltas, closes over the nearest object within grasp range, carries it, and
// releases it on opening. No physics engine: every transition is a pure
// function of (state, action, noise draw).

enum class TaskFamily { kSinglePlace, kTwoStage, kNovelLayout };

const char* to_string(TaskFamily f);
TaskFamily task_family_from_string(const std::string& s);

struct EnvSpec {
  TaskFamily family = TaskFamily::kSinglePlace;
  int object_count = 2;
  int max_steps = 220;
  double noise_scale = 0.004;  // uniform positional jitter per step
  double obs_noise = 0.02;     // sensor noise recorded into demonstrations
  // Per-view nuisance features (ambient/sensor-local state): smooth random
  // walks appended to the scene and hand modalities. They are private to one
  // modality, the way camera-specific appearance is.
  int private_dims = 4;
  double private_walk = 0.12;
  double max_speed = 0.08;
  double grip_speed = 0.25;
  double grasp_radius = 0.06;
  double goal_radius = 0.09;
  // Novel-layout episodes sample object spawns from a band shifted by this
  // amount, giving a held-out layout distribution with identical dynamics.
  double novel_shift = 0.3;

  void validate() const;
  int stage_count() const { return family == TaskFamily::kTwoStage ? 2 : 1; }
};

struct EnvState {
  double gx = 0.5, gy = 0.5;
  double grip = 1.0;  // 1 = fully open, 0 = fully closed
  std::vector<std::array<double, 2>> objects;
  std::vector<std::array<double, 2>> goals;  // one goal region per object
  std::vector<double> scene_private;         // per-view nuisance state
  std::vector<double> hand_private;
  int attached_object = -1;
  int steps = 0;
};

struct StepResult {
  bool done = false;
  bool success = false;
};

constexpr int kActionDim = 3;  // (dx, dy, dgrip)

class Env {
 public:
  Env(const EnvSpec& spec, std::uint64_t seed);

  void reset(std::uint64_t seed);
  StepResult step(const std::array<double, 3>& action);

  const EnvSpec& spec() const { return spec_; }
  const EnvState& state() const { return state_; }
  bool success() const;

 private:
  EnvSpec spec_;
  EnvState state_;
  Rng noise_;
};

// Modalities emitted by observe(): "scene" (global object/goal geometry),
// "hand" (gripper-relative offsets), "proprio" (gripper pose + grip).
std::vector<ModalitySpec> modality_specs_for(const EnvSpec& spec);
std::vector<std::vector<double>> observe(const EnvState& state, const EnvSpec& spec);

// Declared [lo, hi] range of every observation component; recorded sensor
// noise is clamped into these, so dataset values always satisfy them.
std::vector<std::vector<std::pair<double, double>>> observation_bounds(const EnvSpec& spec);

// Inverse of the observation layout, used by report rendering.
struct ArenaSketch {
  double gx = 0, gy = 0, grip = 1;
  std::vector<std::array<double, 2>> objects;
  std::vector<std::array<double, 2>> goals;
};
ArenaSketch decode_observation(const std::vector<std::vector<double>>& obs, const EnvSpec& spec);

// Closed-loop expert driven by a phase machine (reach/grasp/transport/place
// per stage). Phase switches happen exactly at contact and grip events, so
// ground-truth segment boundaries are assertable from state traces.
class ScriptedExpert {
 public:
  explicit ScriptedExpert(const EnvSpec& spec);

  std::array<double, 3> act(const EnvState& state);
  const char* phase_label() const;
  int stage() const { return stage_; }
  bool finished() const { return finished_; }

 private:
  enum class Phase { kReach, kGrasp, kTransport, kPlace };
  EnvSpec spec_;
  Phase phase_ = Phase::kReach;
  int stage_ = 0;
  bool finished_ = false;
};

struct GenerationReport {
  int requested = 0;
  int discarded = 0;  // expert failures, regenerated with follow-up seeds
};

// Mixture weights over task families; demos are assigned deterministically.
struct TaskMix {
  double single_place = 0.5;
  double two_stage = 0.5;
  double novel_layout = 0.0;
};

Dataset generate_demonstrations(const EnvSpec& spec, const TaskMix& mix, int n,
                                std::uint64_t seed, GenerationReport* report = nullptr);

}  // namespace mcd
