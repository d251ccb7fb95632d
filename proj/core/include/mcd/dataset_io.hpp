#pragma once

#include <string>

#include "mcd/types.hpp"

namespace mcd {

// Trajectory container (.mcds):
//
//   magic   "MCDS" (4 bytes)
//   version u32 little-endian (currently 1)
//   mlen    u32 little-endian, manifest byte count
//   manifest UTF-8 JSON: modality specs, action_dim, seed and, per demo,
//            task_id, length, gt_segments (or null) and the float offset of
//            its payload block
//   payload IEEE-754 float32 little-endian. Per demo: each modality array in
//            declared order (frame-major), then the action array.
//
// Writing is deterministic: the same Dataset always produces identical bytes.

void write_dataset(const Dataset& dataset, const std::string& path);
Dataset read_dataset(const std::string& path);

constexpr std::uint32_t kDatasetFormatVersion = 1;

}  // namespace mcd
