#pragma once

#include <fstream>
#include <map>

#include <json.hpp>

#include "dcdp/nn.hpp"

namespace dcdp {

// Checkpoint layout (little-endian):
//   8 bytes  magic "DCDPCKPT"
//   u32      version (1)
//   u64      manifest length in bytes
//   manifest JSON: {"tensors": [{"name", "rows", "cols", "offset"}], "meta": {...}}
//   raw float32 data; offsets count floats from the start of the blob
// Values are stored column-major. See docs/formats.md.

inline constexpr char kCheckpointMagic[8] = {'D', 'C', 'D', 'P', 'C', 'K', 'P', 'T'};

template <typename S>
void save_checkpoint(const ParamRegistry<S>& reg, const std::string& path,
                     const std::map<std::string, std::string>& meta = {}) {
  nlohmann::json manifest;
  manifest["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& t : reg.tensors()) {
    manifest["tensors"].push_back({{"name", t->name},
                                   {"rows", t->value.rows()},
                                   {"cols", t->value.cols()},
                                   {"offset", offset}});
    offset += std::uint64_t(t->value.size());
  }
  manifest["meta"] = meta;
  std::string mtext = manifest.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write checkpoint: " + path);
  out.write(kCheckpointMagic, 8);
  std::uint32_t version = 1;
  out.write(reinterpret_cast<const char*>(&version), 4);
  std::uint64_t mlen = mtext.size();
  out.write(reinterpret_cast<const char*>(&mlen), 8);
  out.write(mtext.data(), std::streamsize(mtext.size()));
  for (const auto& t : reg.tensors()) {
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic> f = t->value.template cast<float>();
    out.write(reinterpret_cast<const char*>(f.data()), std::streamsize(f.size() * 4));
  }
  if (!out) throw ConfigError("short write while saving checkpoint: " + path);
}

struct CheckpointManifest {
  struct Entry {
    std::string name;
    Index rows = 0, cols = 0;
    std::uint64_t offset = 0;
  };
  std::vector<Entry> tensors;
  std::map<std::string, std::string> meta;
  std::uint64_t data_start = 0;  // file offset of the float blob
};

inline CheckpointManifest read_checkpoint_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::string(magic, 8) != std::string(kCheckpointMagic, 8))
    throw ConfigError("not a checkpoint file: " + path);
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), 4);
  if (version != 1) throw ConfigError("unsupported checkpoint version");
  std::uint64_t mlen = 0;
  in.read(reinterpret_cast<char*>(&mlen), 8);
  std::string mtext(mlen, '\0');
  in.read(mtext.data(), std::streamsize(mlen));
  if (!in) throw ConfigError("truncated checkpoint manifest: " + path);

  CheckpointManifest out;
  nlohmann::json manifest = nlohmann::json::parse(mtext);
  for (const auto& e : manifest["tensors"]) {
    out.tensors.push_back({e["name"].get<std::string>(), Index(e["rows"].get<std::int64_t>()),
                           Index(e["cols"].get<std::int64_t>()), e["offset"].get<std::uint64_t>()});
  }
  if (manifest.contains("meta"))
    for (const auto& [k, v] : manifest["meta"].items()) out.meta[k] = v.get<std::string>();
  out.data_start = 8 + 4 + 8 + mlen;
  return out;
}

template <typename S>
void load_checkpoint(ParamRegistry<S>& reg, const std::string& path) {
  CheckpointManifest manifest = read_checkpoint_manifest(path);
  std::ifstream in(path, std::ios::binary);
  in.seekg(std::streamoff(manifest.data_start));

  std::map<std::string, bool> seen;
  for (const auto& t : reg.tensors()) seen[t->name] = false;

  for (const auto& entry : manifest.tensors) {
    Tensor<S>* t = reg.find(entry.name);
    if (t == nullptr)
      throw ConfigError("checkpoint tensor " + entry.name + " does not exist in this model");
    if (t->value.rows() != entry.rows || t->value.cols() != entry.cols) {
      std::ostringstream msg;
      msg << "checkpoint shape mismatch for tensor " << entry.name << ": file has " << entry.rows
          << "x" << entry.cols << ", model expects " << t->value.rows() << "x" << t->value.cols();
      throw ConfigError(msg.str());
    }
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic> f(entry.rows, entry.cols);
    in.seekg(std::streamoff(manifest.data_start + entry.offset * 4));
    in.read(reinterpret_cast<char*>(f.data()), std::streamsize(f.size() * 4));
    if (!in) throw ConfigError("truncated checkpoint data at tensor " + entry.name);
    t->value = f.cast<S>();
    seen[entry.name] = true;
  }
  for (const auto& [name, ok] : seen)
    if (!ok) throw ConfigError("checkpoint is missing tensor " + name);
}

}  // namespace dcdp
