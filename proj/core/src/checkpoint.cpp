#include "mcd/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace mcd {

using nlohmann::json;

namespace {

template <class S>
const char* dtype_tag() {
  if constexpr (sizeof(S) == 4) {
    return "f32";
  } else {
    return "f64";
  }
}

template <class S>
void write_mat(std::ofstream& out, const Mat<S>& m) {
  // column-major, matching Eigen's in-memory layout
  out.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(static_cast<std::size_t>(m.size()) * sizeof(S)));
}

template <class S>
void read_mat(std::ifstream& in, Mat<S>& m) {
  in.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(static_cast<std::size_t>(m.size()) * sizeof(S)));
}

json read_header_json(std::ifstream& in, const std::string& path) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "MCCK", 4) != 0) {
    throw FormatError("not a checkpoint file (bad magic): " + path);
  }
  std::uint32_t version = 0, jlen = 0;
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(&jlen), 4);
  if (!in) throw FormatError("truncated checkpoint header: " + path);
  if (version != kCheckpointFormatVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  std::string jbytes(jlen, '\0');
  in.read(jbytes.data(), jlen);
  if (!in) throw FormatError("truncated checkpoint header: " + path);
  try {
    return json::parse(jbytes);
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
}

CheckpointHeader header_from_json(const json& j) {
  CheckpointHeader h;
  h.fingerprint = j.at("fingerprint").get<std::string>();
  h.seed = j.at("seed").get<std::uint64_t>();
  h.iteration = j.at("iteration").get<long>();
  h.adam_step = j.at("adam_step").get<long>();
  h.extra = j.value("extra", json::object());
  return h;
}

}  // namespace

template <class S>
void save_checkpoint(const std::string& path, const ParamStore<S>& store,
                     const CheckpointHeader& header) {
  json j;
  j["fingerprint"] = header.fingerprint;
  j["seed"] = header.seed;
  j["iteration"] = header.iteration;
  j["adam_step"] = header.adam_step;
  j["dtype"] = dtype_tag<S>();
  j["extra"] = header.extra;
  json tensors = json::array();
  for (const auto& e : store.entries) {
    tensors.push_back({{"name", e.name},
                       {"rows", static_cast<long>(e.value.rows())},
                       {"cols", static_cast<long>(e.value.cols())}});
  }
  j["tensors"] = tensors;

  const std::string jbytes = j.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write("MCCK", 4);
  const std::uint32_t version = kCheckpointFormatVersion;
  out.write(reinterpret_cast<const char*>(&version), 4);
  const std::uint32_t jlen = static_cast<std::uint32_t>(jbytes.size());
  out.write(reinterpret_cast<const char*>(&jlen), 4);
  out.write(jbytes.data(), static_cast<std::streamsize>(jbytes.size()));
  for (const auto& e : store.entries) {
    write_mat(out, e.value);
    write_mat(out, e.m);
    write_mat(out, e.v);
  }
  if (!out) throw IoError("write failed: " + path);
}

template <class S>
CheckpointHeader load_checkpoint(const std::string& path, ParamStore<S>& store) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  const json j = read_header_json(in, path);
  if (j.at("dtype").get<std::string>() != dtype_tag<S>()) {
    throw FormatError("checkpoint dtype " + j.at("dtype").get<std::string>() +
                      " does not match requested scalar width");
  }
  const auto& tensors = j.at("tensors");
  if (tensors.size() != store.entries.size()) {
    throw ValidationError("checkpoint tensor count does not match parameter store");
  }
  for (std::size_t i = 0; i < store.entries.size(); ++i) {
    auto& e = store.entries[i];
    const auto& t = tensors[i];
    if (t.at("name").get<std::string>() != e.name ||
        t.at("rows").get<long>() != e.value.rows() ||
        t.at("cols").get<long>() != e.value.cols()) {
      throw ValidationError("checkpoint tensor '" + t.at("name").get<std::string>() +
                            "' does not match parameter '" + e.name + "'");
    }
    read_mat(in, e.value);
    read_mat(in, e.m);
    read_mat(in, e.v);
  }
  if (!in) throw FormatError("truncated checkpoint payload: " + path);
  return header_from_json(j);
}

CheckpointHeader peek_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  return header_from_json(read_header_json(in, path));
}

template void save_checkpoint<float>(const std::string&, const ParamStore<float>&,
                                     const CheckpointHeader&);
template void save_checkpoint<double>(const std::string&, const ParamStore<double>&,
                                      const CheckpointHeader&);
template CheckpointHeader load_checkpoint<float>(const std::string&, ParamStore<float>&);
template CheckpointHeader load_checkpoint<double>(const std::string&, ParamStore<double>&);

}  // namespace mcd
