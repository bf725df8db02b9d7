#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace aornet {

// All numerics run in double; row-major so flatten/serialize order matches the
// on-disk layout without transposes.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::RowVectorXd;

// Process-level exit codes shared by the CLI and the harness.
enum ExitCode : int {
  kExitOk = 0,
  kExitValidation = 2,
  kExitDiverged = 3,
};

// Thrown for bad configs, malformed files, contract violations. The CLI maps
// this to kExitValidation.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ValidationError(msg);
}

// FNV-1a, 64-bit. Used for content hashes (checkpoint blobs, bank sidecars)
// and for deriving named RNG substreams.
inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(std::string_view s,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
  return fnv1a64(s.data(), s.size(), h);
}

// Shortest round-trippable decimal for a double. Keeps JSON/JSONL output
// byte-stable across runs so determinism checks can diff files directly.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string lowercase(std::string s) {
  for (char& c : s) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return s;
}

}  // namespace aornet
