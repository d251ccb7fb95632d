#pragma once

#include <vector>

#include "mcd/rng.hpp"

namespace mcd {

// Nonempty subset of modality indices to zero out. Sampling is uniform over
// the 2^M - 1 nonempty subsets, which includes the all-masked pattern.
struct MaskPattern {
  std::vector<bool> masked;  // size M

  int count() const {
    int c = 0;
    for (const bool b : masked) c += b ? 1 : 0;
    return c;
  }
};

inline MaskPattern sample_mask(int modality_count, Rng& rng) {
  if (modality_count < 1) throw ValidationError("sample_mask: need at least one modality");
  if (modality_count > 30) throw ValidationError("sample_mask: too many modalities");
  const std::int64_t code = rng.uniform_int(1, (std::int64_t{1} << modality_count) - 1);
  MaskPattern p;
  p.masked.resize(static_cast<std::size_t>(modality_count));
  for (int m = 0; m < modality_count; ++m) {
    p.masked[static_cast<std::size_t>(m)] = ((code >> m) & 1) != 0;
  }
  return p;
}

inline MaskPattern full_mask(int modality_count) {
  MaskPattern p;
  p.masked.assign(static_cast<std::size_t>(modality_count), true);
  return p;
}

// Zeroes masked modality vectors; unmasked ones pass through bit-equal.
// Idempotent by construction.
template <class Container>
void apply_mask(std::vector<Container>& modality_arrays, const MaskPattern& pattern) {
  if (modality_arrays.size() != pattern.masked.size()) {
    throw ValidationError("apply_mask: pattern size mismatch");
  }
  for (std::size_t m = 0; m < modality_arrays.size(); ++m) {
    if (pattern.masked[m]) {
      for (auto& v : modality_arrays[m]) v = 0;
    }
  }
}

}  // namespace mcd
