#include "mcd/dataset_io.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace mcd {

using nlohmann::json;

void Dataset::validate() const {
  if (action_dim < 0) throw ValidationError("dataset: negative action_dim");
  for (std::size_t m = 0; m < modalities.size(); ++m) {
    if (modalities[m].dim < 1) throw ValidationError("modality dim must be >= 1");
    for (std::size_t k = m + 1; k < modalities.size(); ++k) {
      if (modalities[m].name == modalities[k].name) {
        throw ValidationError("duplicate modality name: " + modalities[m].name);
      }
    }
  }
  for (std::size_t i = 0; i < demos.size(); ++i) {
    const auto& d = demos[i];
    const std::string where = "demo " + std::to_string(i);
    if (d.length < 1) throw ValidationError(where + ": length must be >= 1");
    if (d.modalities.size() != modalities.size()) {
      throw ValidationError(where + ": modality count mismatch");
    }
    for (std::size_t m = 0; m < modalities.size(); ++m) {
      const auto expect = static_cast<std::size_t>(d.length) *
                          static_cast<std::size_t>(modalities[m].dim);
      if (d.modalities[m].size() != expect) {
        throw ValidationError(where + ": modality '" + modalities[m].name +
                              "' has wrong element count");
      }
    }
    if (d.actions.size() != static_cast<std::size_t>(d.length) *
                                static_cast<std::size_t>(action_dim)) {
      throw ValidationError(where + ": action array has wrong element count");
    }
    if (!d.gt_segments.empty()) validate_gt_segments(d.gt_segments, d.length);
  }
}

void validate_gt_segments(const std::vector<GtSegment>& segments, int length) {
  if (segments.empty()) return;
  int cursor = 1;
  for (const auto& s : segments) {
    if (s.start != cursor) throw ValidationError("gt_segments must be contiguous from 1");
    if (s.end <= s.start) throw ValidationError("gt_segment interval empty");
    cursor = s.end;
  }
  if (cursor != length + 1) throw ValidationError("gt_segments must end at T+1");
}

std::vector<Window> make_windows(int demo_length, int t_context, WindowMode mode,
                                 int demo_index) {
  if (t_context < 1) throw ValidationError("t_context must be >= 1");
  if (demo_length < 1) throw ValidationError("demo_length must be >= 1");
  std::vector<Window> out;
  if (demo_length < t_context) {
    out.push_back({demo_index, 1, t_context, t_context - demo_length});
    return out;
  }
  // Training uses every valid start; labeling designates the same set (each
  // timestep t <= T - T_context is labeled by the window starting at t, the
  // tail by the last window), so the two lists coincide.
  (void)mode;
  for (int start = 1; start <= demo_length - t_context + 1; ++start) {
    out.push_back({demo_index, start, t_context, 0});
  }
  return out;
}

LabelingSlot labeling_slot(int demo_length, int t_context, int timestep, int demo_index) {
  if (timestep < 1 || timestep > demo_length) {
    throw ValidationError("labeling_slot: timestep out of range");
  }
  if (demo_length < t_context) {
    return {{demo_index, 1, t_context, t_context - demo_length}, timestep - 1};
  }
  const int last_start = demo_length - t_context + 1;
  const int start = std::min(timestep, last_start);
  return {{demo_index, start, t_context, 0}, timestep - start};
}

namespace {

json segments_to_json(const std::vector<GtSegment>& segments) {
  if (segments.empty()) return nullptr;
  json arr = json::array();
  for (const auto& s : segments) {
    arr.push_back({{"label", s.label}, {"start", s.start}, {"end", s.end}});
  }
  return arr;
}

std::vector<GtSegment> segments_from_json(const json& j) {
  std::vector<GtSegment> out;
  if (j.is_null()) return out;
  for (const auto& e : j) {
    out.push_back({e.at("label").get<std::string>(), e.at("start").get<int>(),
                   e.at("end").get<int>()});
  }
  return out;
}

std::size_t demo_float_count(const Dataset& ds, const Demonstration& d) {
  std::size_t n = 0;
  for (const auto& m : ds.modalities) {
    n += static_cast<std::size_t>(d.length) * static_cast<std::size_t>(m.dim);
  }
  n += static_cast<std::size_t>(d.length) * static_cast<std::size_t>(ds.action_dim);
  return n;
}

}  // namespace

void write_dataset(const Dataset& dataset, const std::string& path) {
  dataset.validate();

  json manifest;
  manifest["action_dim"] = dataset.action_dim;
  manifest["seed"] = dataset.seed;
  json mods = json::array();
  for (const auto& m : dataset.modalities) {
    mods.push_back({{"name", m.name}, {"dim", m.dim}, {"recon_norm", to_string(m.recon_norm)}});
  }
  manifest["modalities"] = mods;

  json demos = json::array();
  std::size_t offset = 0;
  for (const auto& d : dataset.demos) {
    const std::size_t floats = demo_float_count(dataset, d);
    demos.push_back({{"task_id", d.task_id},
                     {"length", d.length},
                     {"gt_segments", segments_to_json(d.gt_segments)},
                     {"offset", offset},
                     {"floats", floats}});
    offset += floats;
  }
  manifest["demos"] = demos;

  const std::string mbytes = manifest.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write("MCDS", 4);
  const std::uint32_t version = kDatasetFormatVersion;
  out.write(reinterpret_cast<const char*>(&version), 4);
  const std::uint32_t mlen = static_cast<std::uint32_t>(mbytes.size());
  out.write(reinterpret_cast<const char*>(&mlen), 4);
  out.write(mbytes.data(), static_cast<std::streamsize>(mbytes.size()));
  for (const auto& d : dataset.demos) {
    for (const auto& arr : d.modalities) {
      out.write(reinterpret_cast<const char*>(arr.data()),
                static_cast<std::streamsize>(arr.size() * sizeof(float)));
    }
    out.write(reinterpret_cast<const char*>(d.actions.data()),
              static_cast<std::streamsize>(d.actions.size() * sizeof(float)));
  }
  if (!out) throw IoError("write failed: " + path);
}

Dataset read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);

  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "MCDS", 4) != 0) {
    throw FormatError("not a dataset file (bad magic): " + path);
  }
  std::uint32_t version = 0, mlen = 0;
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(&mlen), 4);
  if (!in) throw FormatError("truncated header: " + path);
  if (version != kDatasetFormatVersion) {
    throw FormatError("unsupported dataset format version " + std::to_string(version));
  }
  std::string mbytes(mlen, '\0');
  in.read(mbytes.data(), mlen);
  if (!in) throw FormatError("truncated manifest: " + path);

  json manifest;
  try {
    manifest = json::parse(mbytes);
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest is not valid JSON: ") + e.what());
  }

  Dataset ds;
  ds.action_dim = manifest.at("action_dim").get<int>();
  ds.seed = manifest.at("seed").get<std::uint64_t>();
  for (const auto& m : manifest.at("modalities")) {
    ds.modalities.push_back({m.at("name").get<std::string>(), m.at("dim").get<int>(),
                             recon_norm_from_string(m.at("recon_norm").get<std::string>())});
  }

  for (const auto& dj : manifest.at("demos")) {
    Demonstration d;
    d.task_id = dj.at("task_id").get<std::string>();
    d.length = dj.at("length").get<int>();
    d.gt_segments = segments_from_json(dj.at("gt_segments"));
    const auto declared = dj.at("floats").get<std::size_t>();

    for (const auto& m : ds.modalities) {
      auto& arr = d.modalities.emplace_back();
      arr.resize(static_cast<std::size_t>(d.length) * static_cast<std::size_t>(m.dim));
      in.read(reinterpret_cast<char*>(arr.data()),
              static_cast<std::streamsize>(arr.size() * sizeof(float)));
    }
    d.actions.resize(static_cast<std::size_t>(d.length) *
                     static_cast<std::size_t>(ds.action_dim));
    in.read(reinterpret_cast<char*>(d.actions.data()),
            static_cast<std::streamsize>(d.actions.size() * sizeof(float)));
    if (!in) throw FormatError("truncated payload: " + path);
    if (declared != demo_float_count(ds, d)) {
      throw ValidationError("manifest float count disagrees with modality dims");
    }
    ds.demos.push_back(std::move(d));
  }

  ds.validate();
  return ds;
}

}  // namespace mcd
