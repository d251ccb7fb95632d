#pragma once

#include <string>
#include <vector>

#include "mcd/trainer.hpp"

namespace mcd {

// Per-demo concept labels: one unit-norm latent per timestep, taken from the
// timestep's designated labeling window.
using ConceptLabels = std::vector<Eigen::MatrixXf>;  // demo -> T x dz, row t-1 = z_t

ConceptLabels label_dataset(const Dataset& dataset, const ConceptModel& model);

// Sidecar container (.mclb): magic "MCLB", u32 version, u32 JSON manifest
// length, manifest (dz, source checkpoint fingerprint, per-demo lengths),
// then float32 payloads, frame-major per demo.
void write_labels(const std::string& path, const ConceptLabels& labels,
                  const std::string& fingerprint);

struct LabelsFile {
  ConceptLabels labels;
  std::string fingerprint;
};
LabelsFile read_labels(const std::string& path);

constexpr std::uint32_t kLabelsFormatVersion = 1;

}  // namespace mcd
