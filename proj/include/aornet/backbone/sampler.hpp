#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "aornet/core/common.hpp"
#include "aornet/core/image_io.hpp"
#include "aornet/core/rng.hpp"
#include "aornet/data/types.hpp"

namespace aornet::backbone {

namespace fs = std::filesystem;

// A clip ready for the encoder: fixed frame count, square frames, channel
// planes with values in [0,1].
struct SampledClip {
  std::string modality;
  int channels = 1;
  int size = 0;                           // square side after resize
  std::vector<std::vector<Mat>> frames;   // frame → channel planes (size×size)
  std::vector<int> frame_index_map;       // sampled source frame per slot
  bool flipped = false;
  std::vector<std::string> augmentation_log;

  int frame_count() const { return int(frames.size()); }
};

// Deterministic even spacing across the raw clip. The formula is the
// interface: index_i = round(i·(T_raw−1)/(frame_count−1)).
inline std::vector<int> eval_indices(int t_raw, int frame_count) {
  require(frame_count >= 1, "frame_count must be >= 1");
  if (t_raw < frame_count)
    throw ValidationError("TOO_SHORT: clip has " + std::to_string(t_raw) + " frames, need " +
                          std::to_string(frame_count));
  std::vector<int> out;
  if (frame_count == 1) return {0};
  for (int i = 0; i < frame_count; ++i)
    out.push_back(int(std::lround(double(i) * double(t_raw - 1) / double(frame_count - 1))));
  return out;
}

// Sorted uniform sample without replacement (selection sampling): walk the
// frames once, keeping each with probability needed/remaining.
inline std::vector<int> train_indices(int t_raw, int frame_count, Rng& rng) {
  require(frame_count >= 1, "frame_count must be >= 1");
  if (t_raw < frame_count)
    throw ValidationError("TOO_SHORT: clip has " + std::to_string(t_raw) + " frames, need " +
                          std::to_string(frame_count));
  std::vector<int> out;
  int needed = frame_count;
  for (int v = 0; v < t_raw && needed > 0; ++v) {
    if (rng.uniform() * double(t_raw - v) < double(needed)) {
      out.push_back(v);
      --needed;
    }
  }
  return out;
}

// ---- pixel plumbing ----------------------------------------------------------

inline std::vector<Mat> image_to_planes(const img::Image& im) {
  const double denom = im.bit_depth == 16 ? 65535.0 : 255.0;
  std::vector<Mat> planes(std::size_t(im.channels), Mat(im.h, im.w));
  for (int y = 0; y < im.h; ++y)
    for (int x = 0; x < im.w; ++x)
      for (int c = 0; c < im.channels; ++c)
        planes[c](y, x) = double(im.px[(std::size_t(y) * im.w + x) * im.channels + c]) / denom;
  return planes;
}

// Center-aligned bilinear resize to a square target.
inline Mat resize_bilinear(const Mat& src, int out_size) {
  if (src.rows() == out_size && src.cols() == out_size) return src;
  Mat dst(out_size, out_size);
  const double sy = double(src.rows()) / out_size;
  const double sx = double(src.cols()) / out_size;
  for (int y = 0; y < out_size; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, double(src.rows() - 1));
    int y0 = int(std::floor(fy));
    int y1 = std::min<int>(y0 + 1, int(src.rows()) - 1);
    double wy = fy - y0;
    for (int x = 0; x < out_size; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, double(src.cols() - 1));
      int x0 = int(std::floor(fx));
      int x1 = std::min<int>(x0 + 1, int(src.cols()) - 1);
      double wx = fx - x0;
      dst(y, x) = (1 - wy) * ((1 - wx) * src(y0, x0) + wx * src(y0, x1)) +
                  wy * ((1 - wx) * src(y1, x0) + wx * src(y1, x1));
    }
  }
  return dst;
}

inline Mat hflip_plane(const Mat& m) { return m.rowwise().reverse(); }

// Decode a clip's frames for one modality into normalized channel planes at
// native resolution. This is the slow path; callers cache the result.
inline std::vector<std::vector<Mat>> load_clip_frames(const fs::path& dataset_root,
                                                      const data::ClipRecord& clip,
                                                      const std::string& modality) {
  auto it = clip.modality_paths.find(modality);
  require(it != clip.modality_paths.end(),
          "clip " + clip.clip_id + " has no modality " + modality);
  std::vector<std::vector<Mat>> frames;
  frames.reserve(it->second.size());
  for (const auto& rel : it->second)
    frames.push_back(image_to_planes(img::read_png(dataset_root / rel)));
  return frames;
}

struct SampleRequest {
  std::string modality = "RGB";
  int frame_count = 8;
  int input_size = 224;
  bool train_mode = false;
};

// Temporal sampling + spatial resize + train-time horizontal flip over frames
// that are already decoded. The rng is consumed only in train mode: first the
// frame draw, then one coin for the flip.
inline SampledClip sample_from_frames(const std::vector<std::vector<Mat>>& raw,
                                      const SampleRequest& req, Rng rng) {
  require(!raw.empty(), "no frames to sample");
  SampledClip out;
  out.modality = req.modality;
  out.channels = int(raw[0].size());
  out.size = req.input_size;
  out.frame_index_map = req.train_mode ? train_indices(int(raw.size()), req.frame_count, rng)
                                       : eval_indices(int(raw.size()), req.frame_count);
  out.flipped = req.train_mode && rng.uniform() < 0.5;

  for (int src : out.frame_index_map) {
    std::vector<Mat> planes;
    for (const Mat& plane : raw[std::size_t(src)]) {
      Mat r = resize_bilinear(plane, req.input_size);
      planes.push_back(out.flipped ? hflip_plane(r) : std::move(r));
    }
    out.frames.push_back(std::move(planes));
  }
  out.augmentation_log.push_back(req.train_mode ? "train-sample" : "eval-sample");
  if (out.flipped) out.augmentation_log.push_back("hflip");
  return out;
}

inline SampledClip sample_clip(const fs::path& dataset_root, const data::ClipRecord& clip,
                               const SampleRequest& req, Rng rng) {
  return sample_from_frames(load_clip_frames(dataset_root, clip, req.modality), req,
                            std::move(rng));
}

// Track boxes rearranged to the sampled timeline, with the same flip the
// pixels got. Box flips mirror corners: x1' = 1−x2, x2' = 1−x1.
inline data::ObjectTrackSet remap_tracks(const data::ObjectTrackSet& tracks,
                                         const std::vector<int>& frame_index_map, bool flipped) {
  data::ObjectTrackSet out;
  out.num_frames = int(frame_index_map.size());
  for (const auto& tr : tracks.tracks) {
    data::Track nt;
    nt.track_id = tr.track_id;
    nt.class_index = tr.class_index;
    nt.boxes.assign(frame_index_map.size(), std::nullopt);
    nt.keyframe_flags.assign(frame_index_map.size(), false);
    bool any = false;
    for (std::size_t i = 0; i < frame_index_map.size(); ++i) {
      int src = frame_index_map[i];
      if (src < tr.num_frames() && tr.boxes[src].has_value()) {
        nt.boxes[i] = flipped ? data::hflip(*tr.boxes[src]) : *tr.boxes[src];
        any = true;
      }
    }
    if (any) out.tracks.push_back(std::move(nt));
  }
  return out;
}

}  // namespace aornet::backbone
