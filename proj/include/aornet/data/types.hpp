#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "aornet/core/common.hpp"

namespace aornet::data {

// Normalized corner box, x to the right, y down, all in [0,1].
struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double area() const { return (x2 - x1) * (y2 - y1); }
  bool degenerate() const { return !(x1 < x2) || !(y1 < y2); }
  bool in_range() const { return x1 >= 0 && y1 >= 0 && x2 <= 1 && y2 <= 1; }

  friend bool operator==(const Box& a, const Box& b) {
    return a.x1 == b.x1 && a.y1 == b.y1 && a.x2 == b.x2 && a.y2 == b.y2;
  }
};

// Horizontal mirror; the left edge becomes 1-x2 so corners stay ordered.
inline Box hflip(const Box& b) { return Box{1.0 - b.x2, b.y1, 1.0 - b.x1, b.y2}; }

struct Track {
  int track_id = 0;
  int class_index = 0;
  std::vector<std::optional<Box>> boxes;  // one slot per frame
  std::vector<bool> keyframe_flags;       // true only where a box exists

  int num_frames() const { return int(boxes.size()); }
};

struct ObjectTrackSet {
  int num_frames = 0;
  std::vector<Track> tracks;
};

enum class Lighting { kDay, kNight, kRain, kCloudy };

inline std::string to_string(Lighting l) {
  switch (l) {
    case Lighting::kDay: return "day";
    case Lighting::kNight: return "night";
    case Lighting::kRain: return "rain";
    case Lighting::kCloudy: return "cloudy";
  }
  return "day";
}

inline Lighting lighting_from_string(const std::string& s) {
  if (s == "day") return Lighting::kDay;
  if (s == "night") return Lighting::kNight;
  if (s == "rain") return Lighting::kRain;
  if (s == "cloudy") return Lighting::kCloudy;
  throw ValidationError("unknown lighting tag: " + s);
}

// One labeled three-second sample. Frames stay on disk; this record carries
// the per-modality file paths plus everything needed to batch and split.
struct ClipRecord {
  std::string clip_id;
  std::string participant_id;
  double fps = 15.0;
  int fine_label = 0;
  int coarse_label = 0;
  Lighting lighting = Lighting::kDay;
  std::map<std::string, std::vector<std::string>> modality_paths;  // "RGB"/"IR"/"Depth"

  int num_frames() const {
    return modality_paths.empty() ? 0 : int(modality_paths.begin()->second.size());
  }
  bool has_modality(const std::string& m) const { return modality_paths.count(m) != 0; }
};

struct SplitManifest {
  std::vector<std::string> train, val, test;
};

// Invariant violations are data, not exceptions: a report either comes back
// empty (clip usable) or lists machine-readable codes for tooling to act on.
struct ValidationIssue {
  std::string code;
  std::string message;
};

struct ValidationReport {
  std::vector<ValidationIssue> issues;

  bool ok() const { return issues.empty(); }
  bool has(const std::string& code) const {
    for (const auto& i : issues)
      if (i.code == code) return true;
    return false;
  }
  void add(std::string code, std::string message) {
    issues.push_back({std::move(code), std::move(message)});
  }
};

// Continuous grid-space box for RoIAlign over an (grid_w, grid_h) token lattice.
struct GridBox {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
};

inline GridBox box_to_grid(const Box& b, int grid_w, int grid_h) {
  require(grid_w >= 1 && grid_h >= 1, "box_to_grid: grid must be at least 1x1");
  if (b.degenerate()) throw ValidationError("DEGENERATE_BOX");
  return GridBox{b.x1 * grid_w, b.y1 * grid_h, b.x2 * grid_w, b.y2 * grid_h};
}

}  // namespace aornet::data
