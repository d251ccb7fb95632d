#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "mcd/tape.hpp"

namespace mcd {

// Checkpoint container (.mcck): magic "MCCK", u32 version, u32 JSON header
// length, JSON header, then per-tensor payloads (value, Adam m, Adam v) in
// header order. Tensors are stored at the training scalar width (f32 or f64)
// so a resumed run continues bit-exactly.

constexpr std::uint32_t kCheckpointFormatVersion = 1;

struct CheckpointHeader {
  std::string fingerprint;
  std::uint64_t seed = 0;
  long iteration = 0;
  long adam_step = 0;
  nlohmann::json extra;  // free-form: configs, schedule position, notes
};

template <class S>
void save_checkpoint(const std::string& path, const ParamStore<S>& store,
                     const CheckpointHeader& header);

template <class S>
CheckpointHeader load_checkpoint(const std::string& path, ParamStore<S>& store);

// Header only, without requiring a matching parameter store.
CheckpointHeader peek_checkpoint(const std::string& path);

}  // namespace mcd
