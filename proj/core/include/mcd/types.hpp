#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mcd/common.hpp"

namespace mcd {

// Timestep convention used throughout: interval math (segments, windows,
// gt_segments) is 1-indexed with half-open intervals [start, end); raw arrays
// are 0-indexed, so frame t lives at array row t-1.

enum class ReconNorm { kL2, kL1 };

inline const char* to_string(ReconNorm n) { return n == ReconNorm::kL2 ? "L2" : "L1"; }

inline ReconNorm recon_norm_from_string(const std::string& s) {
  if (s == "L2") return ReconNorm::kL2;
  if (s == "L1") return ReconNorm::kL1;
  throw ValidationError("unknown recon_norm: " + s);
}

struct ModalitySpec {
  std::string name;
  int dim = 0;
  ReconNorm recon_norm = ReconNorm::kL2;
};

struct GtSegment {
  std::string label;
  int start = 0;  // 1-indexed, half-open [start, end)
  int end = 0;
};

struct Demonstration {
  std::string task_id;
  int length = 0;  // T
  // modalities[m] holds length*dim floats, frame-major (row t-1 first).
  std::vector<std::vector<float>> modalities;
  std::vector<float> actions;  // length*action_dim
  std::vector<GtSegment> gt_segments;  // empty means absent

  std::span<const float> modality_row(int m, int frame_index, int dim) const {
    return {modalities[static_cast<std::size_t>(m)].data() +
                static_cast<std::size_t>(frame_index) * static_cast<std::size_t>(dim),
            static_cast<std::size_t>(dim)};
  }
  std::span<const float> action_row(int frame_index, int action_dim) const {
    return {actions.data() + static_cast<std::size_t>(frame_index) * static_cast<std::size_t>(action_dim),
            static_cast<std::size_t>(action_dim)};
  }
};

struct Dataset {
  std::vector<ModalitySpec> modalities;
  int action_dim = 0;
  std::uint64_t seed = 0;
  std::vector<Demonstration> demos;

  int modality_count() const { return static_cast<int>(modalities.size()); }
  void validate() const;
};

struct Window {
  int demo_index = 0;
  int start = 1;        // 1-indexed first timestep covered
  int length = 0;       // == T_context
  int padded_tail = 0;  // trailing frames that repeat the demo's final frame
};

enum class WindowMode { kTraining, kLabeling };

// All windows for a demo of length T. Training mode enumerates every valid
// start; labeling mode returns the distinct designated windows. A demo shorter
// than T_context yields a single tail-padded window in both modes.
std::vector<Window> make_windows(int demo_length, int t_context, WindowMode mode,
                                 int demo_index = 0);

// The designated labeling window for timestep t plus t's row offset within it.
struct LabelingSlot {
  Window window;
  int offset = 0;
};
LabelingSlot labeling_slot(int demo_length, int t_context, int timestep, int demo_index = 0);

void validate_gt_segments(const std::vector<GtSegment>& segments, int length);

}  // namespace mcd
