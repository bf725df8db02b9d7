#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aornet/core/nn.hpp"

namespace aornet::ckpt {

using json = nlohmann::ordered_json;

// Single-file container: 8-byte magic, u64 header length, JSON header, raw
// little-endian double blob. The header records parameter names/shapes in
// store order plus an FNV hash of the blob, so truncation and bit flips are
// caught before any weight is used. An "arch" document travels with the
// weights; loading verifies it against the caller's expectation so a d=768
// checkpoint cannot be silently poured into a d=64 model.
inline constexpr char kMagic[8] = {'A', 'O', 'R', 'N', 'C', 'K', 'P', '1'};

inline void save(const std::string& path, const nn::ParamStore& store, const json& arch) {
  json header;
  header["version"] = 1;
  header["arch"] = arch;
  header["params"] = json::array();
  std::vector<double> blob;
  blob.reserve(store.scalar_count());
  for (const auto& [name, e] : store.entries()) {
    header["params"].push_back({{"name", name}, {"rows", e.w.rows()}, {"cols", e.w.cols()}});
    blob.insert(blob.end(), e.w.data(), e.w.data() + e.w.size());
  }
  header["blob_fnv"] = fnv1a64(blob.data(), blob.size() * sizeof(double));
  std::string hs = header.dump();
  std::ofstream f(path, std::ios::binary);
  require(f.good(), "cannot open checkpoint for writing: " + path);
  f.write(kMagic, 8);
  std::uint64_t hl = hs.size();
  f.write(reinterpret_cast<const char*>(&hl), 8);
  f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  f.write(reinterpret_cast<const char*>(blob.data()),
          static_cast<std::streamsize>(blob.size() * sizeof(double)));
  require(f.good(), "short write on checkpoint: " + path);
}

inline json read_header(std::ifstream& f, const std::string& path) {
  char magic[8];
  f.read(magic, 8);
  require(f.good() && std::equal(magic, magic + 8, kMagic), "CORRUPT_CHECKPOINT: bad magic in " + path);
  std::uint64_t hl = 0;
  f.read(reinterpret_cast<char*>(&hl), 8);
  require(f.good() && hl > 0 && hl < (1ull << 31), "CORRUPT_CHECKPOINT: bad header length in " + path);
  std::string hs(hl, '\0');
  f.read(hs.data(), static_cast<std::streamsize>(hl));
  require(f.good(), "CORRUPT_CHECKPOINT: truncated header in " + path);
  json header = json::parse(hs, nullptr, false);
  require(!header.is_discarded(), "CORRUPT_CHECKPOINT: unparsable header in " + path);
  return header;
}

inline json peek_arch(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), "cannot open checkpoint: " + path);
  return read_header(f, path).at("arch");
}

// Loads weights into `store`, which must already hold identically named and
// shaped parameters (i.e. the model was built from a matching config).
inline void load(const std::string& path, nn::ParamStore& store, const json& expected_arch) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), "cannot open checkpoint: " + path);
  json header = read_header(f, path);
  if (header.at("arch") != expected_arch) {
    throw ValidationError("CONFIG_MISMATCH: checkpoint arch " + header.at("arch").dump() +
                          " vs expected " + expected_arch.dump());
  }
  std::size_t total = 0;
  for (const auto& p : header.at("params")) total += p.at("rows").get<std::size_t>() * p.at("cols").get<std::size_t>();
  std::vector<double> blob(total);
  f.read(reinterpret_cast<char*>(blob.data()), static_cast<std::streamsize>(total * sizeof(double)));
  require(f.good(), "CORRUPT_CHECKPOINT: truncated blob in " + path);
  require(header.at("blob_fnv").get<std::uint64_t>() ==
              fnv1a64(blob.data(), blob.size() * sizeof(double)),
          "CORRUPT_CHECKPOINT: blob hash mismatch in " + path);
  std::size_t off = 0;
  for (const auto& p : header.at("params")) {
    const std::string name = p.at("name").get<std::string>();
    Eigen::Index rows = p.at("rows").get<Eigen::Index>(), cols = p.at("cols").get<Eigen::Index>();
    require(store.has(name), "CONFIG_MISMATCH: checkpoint has unknown parameter " + name);
    auto& e = store.at(name);
    require(e.w.rows() == rows && e.w.cols() == cols,
            "CONFIG_MISMATCH: shape of " + name + " differs");
    e.w = Mat::Map(blob.data() + off, rows, cols);
    off += std::size_t(rows * cols);
  }
  require(header.at("params").size() == store.entries().size(),
          "CONFIG_MISMATCH: parameter set differs");
}

}  // namespace aornet::ckpt
