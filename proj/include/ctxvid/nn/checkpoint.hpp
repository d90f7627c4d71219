#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include <json.hpp>

#include "ctxvid/nn/graph.hpp"

// Checkpoint container:
//   8 bytes  magic "CTXVIDCK"
//   u32 LE   format version
//   u64 LE   header length in bytes
//   header   JSON {"dtype": "f64", "meta": {...}, "tensors": [{"name", "shape", "offset", "nbytes"}]}
//   payload  raw little-endian tensor data, offsets relative to payload start

namespace ctxvid::nn {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline constexpr char kCheckpointMagic[8] = {'C', 'T', 'X', 'V', 'I', 'D', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  nlohmann::json meta = nlohmann::json::object();
  std::map<std::string, Tensor<double>> tensors;
};

inline void write_checkpoint(const std::filesystem::path& path, const ParamStore<double>& params,
                             const nlohmann::json& meta = nlohmann::json::object()) {
  nlohmann::json header;
  header["dtype"] = "f64";
  header["meta"] = meta;
  header["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    const std::uint64_t nbytes = p.value.size() * sizeof(double);
    header["tensors"].push_back({{"name", p.name}, {"shape", p.value.shape()}, {"offset", offset}, {"nbytes", nbytes}});
    offset += nbytes;
  }
  const std::string hs = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot open checkpoint for writing: " + path.string());
  out.write(kCheckpointMagic, 8);
  const std::uint32_t version = kCheckpointVersion;
  const std::uint64_t hlen = hs.size();
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  out.write(reinterpret_cast<const char*>(&hlen), sizeof hlen);
  out.write(hs.data(), std::streamsize(hs.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& v = params[i].value;
    out.write(reinterpret_cast<const char*>(v.data()), std::streamsize(v.size() * sizeof(double)));
  }
  if (!out) throw CheckpointError("write failed: " + path.string());
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint: " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0) throw CheckpointError("bad checkpoint magic: " + path.string());
  std::uint32_t version = 0;
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&hlen), sizeof hlen);
  if (!in || version != kCheckpointVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  std::string hs(hlen, '\0');
  in.read(hs.data(), std::streamsize(hlen));
  if (!in) throw CheckpointError("truncated checkpoint header");
  const auto header = nlohmann::json::parse(hs);
  if (header.at("dtype") != "f64") throw CheckpointError("unsupported dtype " + header.at("dtype").dump());
  Checkpoint ck;
  ck.meta = header.value("meta", nlohmann::json::object());
  const auto payload_start = in.tellg();
  for (const auto& t : header.at("tensors")) {
    Shape shape = t.at("shape").get<Shape>();
    Tensor<double> v(shape);
    const auto nbytes = t.at("nbytes").get<std::uint64_t>();
    if (nbytes != v.size() * sizeof(double)) throw CheckpointError("tensor byte count mismatch for " + t.at("name").get<std::string>());
    in.seekg(payload_start + std::streamoff(t.at("offset").get<std::uint64_t>()));
    in.read(reinterpret_cast<char*>(v.data()), std::streamsize(nbytes));
    if (!in) throw CheckpointError("truncated payload for " + t.at("name").get<std::string>());
    ck.tensors.emplace(t.at("name").get<std::string>(), std::move(v));
  }
  return ck;
}

/// Copies every tensor of `ck` into the same-named parameter of `params`.
/// Missing or mis-shaped names are errors unless `allow_missing` is set, in
/// which case parameters absent from the checkpoint keep their values.
inline std::size_t load_into(const Checkpoint& ck, ParamStore<double>& params, bool allow_missing = false) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto it = ck.tensors.find(p.name);
    if (it == ck.tensors.end()) {
      if (allow_missing) continue;
      throw CheckpointError("checkpoint lacks parameter " + p.name);
    }
    if (it->second.shape() != p.value.shape())
      throw CheckpointError("shape mismatch for " + p.name + ": " + shape_str(it->second.shape()) + " vs " + shape_str(p.value.shape()));
    p.value = it->second;
    ++n;
  }
  return n;
}

}  // namespace ctxvid::nn
