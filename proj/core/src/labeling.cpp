#include "mcd/labeling.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

namespace mcd {

using nlohmann::json;

ConceptLabels label_dataset(const Dataset& dataset, const ConceptModel& model) {
  dataset.validate();
  const int t_context = model.nets.encoder_cfg.t_context;
  const int dz = model.nets.encoder_cfg.dz;
  ConceptLabels out;

  // Kept mutable only because Tape construction requires a non-const store;
  // inference never writes gradients back.
  auto& store = const_cast<ParamStore<float>&>(model.store);

  for (std::size_t d = 0; d < dataset.demos.size(); ++d) {
    const int length = dataset.demos[d].length;
    Eigen::MatrixXf labels(length, dz);

    const auto windows = make_windows(length, t_context, WindowMode::kLabeling,
                                      static_cast<int>(d));
    constexpr int kChunk = 32;
    for (std::size_t w0 = 0; w0 < windows.size(); w0 += kChunk) {
      const std::size_t count = std::min<std::size_t>(kChunk, windows.size() - w0);
      std::span<const Window> span(windows.data() + w0, count);
      auto batch = assemble_windows<float>(dataset, span, t_context);

      Tape<float> tape(&store);
      std::vector<int> inputs;
      for (const auto& m : batch.modality) inputs.push_back(tape.input(m));
      const int z = model.nets.encoder.encode(tape, inputs, batch.windows);
      const auto& zv = tape.value(z);

      for (std::size_t b = 0; b < count; ++b) {
        const auto& win = windows[w0 + b];
        const bool last_window = win.start == std::max(1, length - t_context + 1);
        if (last_window) {
          // The final window labels every timestep it covers.
          for (int o = 0; o < t_context; ++o) {
            const int t = win.start + o;
            if (t <= length) {
              labels.row(t - 1) = zv.row(static_cast<int>(b) * t_context + o);
            }
          }
        } else {
          labels.row(win.start - 1) = zv.row(static_cast<int>(b) * t_context);
        }
      }
    }
    out.push_back(std::move(labels));
  }
  return out;
}

void write_labels(const std::string& path, const ConceptLabels& labels,
                  const std::string& fingerprint) {
  json manifest;
  manifest["fingerprint"] = fingerprint;
  manifest["dz"] = labels.empty() ? 0 : static_cast<int>(labels[0].cols());
  json demos = json::array();
  for (const auto& m : labels) demos.push_back({{"length", static_cast<int>(m.rows())}});
  manifest["demos"] = demos;

  const std::string mbytes = manifest.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write("MCLB", 4);
  const std::uint32_t version = kLabelsFormatVersion;
  out.write(reinterpret_cast<const char*>(&version), 4);
  const std::uint32_t mlen = static_cast<std::uint32_t>(mbytes.size());
  out.write(reinterpret_cast<const char*>(&mlen), 4);
  out.write(mbytes.data(), static_cast<std::streamsize>(mbytes.size()));
  for (const auto& m : labels) {
    for (int r = 0; r < m.rows(); ++r) {
      for (int c = 0; c < m.cols(); ++c) {
        const float v = m(r, c);
        out.write(reinterpret_cast<const char*>(&v), sizeof(float));
      }
    }
  }
  if (!out) throw IoError("write failed: " + path);
}

LabelsFile read_labels(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "MCLB", 4) != 0) {
    throw FormatError("not a labels file (bad magic): " + path);
  }
  std::uint32_t version = 0, mlen = 0;
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(&mlen), 4);
  if (!in || version != kLabelsFormatVersion) {
    throw FormatError("unsupported labels file version");
  }
  std::string mbytes(mlen, '\0');
  in.read(mbytes.data(), mlen);
  if (!in) throw FormatError("truncated labels manifest: " + path);
  json manifest;
  try {
    manifest = json::parse(mbytes);
  } catch (const json::exception& e) {
    throw FormatError(std::string("labels manifest is not valid JSON: ") + e.what());
  }

  LabelsFile f;
  f.fingerprint = manifest.at("fingerprint").get<std::string>();
  const int dz = manifest.at("dz").get<int>();
  for (const auto& dj : manifest.at("demos")) {
    const int length = dj.at("length").get<int>();
    Eigen::MatrixXf m(length, dz);
    for (int r = 0; r < length; ++r) {
      for (int c = 0; c < dz; ++c) {
        float v = 0;
        in.read(reinterpret_cast<char*>(&v), sizeof(float));
        m(r, c) = v;
      }
    }
    if (!in) throw FormatError("truncated labels payload: " + path);
    f.labels.push_back(std::move(m));
  }
  return f;
}

}  // namespace mcd
