#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "aornet/core/common.hpp"
#include "aornet/data/taxonomy.hpp"
#include "aornet/data/types.hpp"
#include "aornet/synth/render.hpp"

namespace aornet::synth {

struct ActionInterval {
  std::string fine_label;
  int start_frame = 0;  // inclusive
  int end_frame = 0;    // exclusive
};

// A full recording straight out of the renderer: frames plus the sparse
// keyframe annotations an annotator would have produced.
struct RawRecording {
  std::string participant_id;
  int recording_index = 0;
  double fps = 15.0;
  data::Lighting lighting = data::Lighting::kDay;
  std::vector<ActionInterval> action_table;
  std::vector<FrameCanvas> frames;     // one canvas per frame (RGB + depth planes)
  data::ObjectTrackSet tracks;         // sparse on creation; interpolate to densify

  int num_frames() const { return int(frames.size()); }

  void check() const {
    int prev_end = 0;
    for (const auto& iv : action_table) {
      require(iv.start_frame < iv.end_frame, "action interval must have start < end");
      require(iv.start_frame >= prev_end, "action intervals must not overlap");
      require(iv.end_frame <= num_frames(), "action interval exceeds recording");
      prev_end = iv.end_frame;
    }
  }
};

// Fill every frame between a track's first and last keyframe by linear
// interpolation of box corners. Keyframe boxes pass through untouched and
// frames outside the keyframe span stay absent.
inline data::ObjectTrackSet interpolate_keyframes(const data::ObjectTrackSet& sparse) {
  data::ObjectTrackSet dense;
  dense.num_frames = sparse.num_frames;
  for (const auto& tr : sparse.tracks) {
    std::vector<int> keys;
    for (int f = 0; f < tr.num_frames(); ++f)
      if (f < int(tr.keyframe_flags.size()) && tr.keyframe_flags[f]) {
        require(tr.boxes[f].has_value(), "keyframe flag without a box");
        keys.push_back(f);
      }
    if (keys.empty())
      throw ValidationError("NO_KEYFRAMES: track " + std::to_string(tr.track_id));

    data::Track out = tr;
    out.boxes.assign(tr.boxes.size(), std::nullopt);
    out.keyframe_flags.assign(tr.boxes.size(), false);
    for (int k : keys) {
      out.boxes[k] = tr.boxes[k];
      out.keyframe_flags[k] = true;
    }
    for (std::size_t i = 0; i + 1 < keys.size(); ++i) {
      int a = keys[i], b = keys[i + 1];
      const data::Box& ba = *tr.boxes[a];
      const data::Box& bb = *tr.boxes[b];
      for (int f = a + 1; f < b; ++f) {
        double t = double(f - a) / double(b - a);
        out.boxes[f] = data::Box{ba.x1 + (bb.x1 - ba.x1) * t, ba.y1 + (bb.y1 - ba.y1) * t,
                                 ba.x2 + (bb.x2 - ba.x2) * t, ba.y2 + (bb.y2 - ba.y2) * t};
      }
    }
    dense.tracks.push_back(std::move(out));
  }
  return dense;
}

// A clip cut out of a recording, before any files exist: the frame range it
// covers plus tracks rebased to clip-local frame indices.
struct ClipCut {
  data::ClipRecord record;       // modality_paths filled in later by the writer
  data::ObjectTrackSet tracks;   // clip-local frames
  int source_start = 0;          // frame offset into the recording
  int frame_count = 0;
};

struct SegmentationResult {
  std::vector<ClipCut> clips;
  std::vector<std::string> warnings;
};

// Cut each action interval into consecutive fixed-length clips anchored at
// the interval start; a trailing remainder shorter than one clip is dropped.
// Intervals shorter than one clip yield nothing but a warning.
inline SegmentationResult segment_clips(const RawRecording& rec, double clip_seconds,
                                        const data::ActionTaxonomy& actions) {
  require(clip_seconds > 0, "clip_seconds must be positive");
  rec.check();
  const int clip_len = int(std::lround(clip_seconds * rec.fps));
  require(clip_len >= 1, "clip length rounds to zero frames");

  SegmentationResult result;
  for (const auto& iv : rec.action_table) {
    const int len = iv.end_frame - iv.start_frame;
    const int n = len / clip_len;
    if (n == 0) {
      result.warnings.push_back("EMPTY_INTERVAL: '" + iv.fine_label + "' has " +
                                std::to_string(len) + " frames, clip needs " +
                                std::to_string(clip_len));
      continue;
    }
    for (int k = 0; k < n; ++k) {
      const int lo = iv.start_frame + k * clip_len;
      ClipCut cut;
      cut.source_start = lo;
      cut.frame_count = clip_len;
      cut.record.participant_id = rec.participant_id;
      cut.record.fps = rec.fps;
      cut.record.lighting = rec.lighting;
      cut.record.fine_label = actions.fine_index(iv.fine_label);
      cut.record.coarse_label = actions.fine_to_coarse[cut.record.fine_label];
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%s_r%03d_s%02d", rec.participant_id.c_str(),
                    rec.recording_index, k);
      cut.record.clip_id = buf;

      cut.tracks.num_frames = clip_len;
      for (const auto& tr : rec.tracks.tracks) {
        data::Track local;
        local.track_id = tr.track_id;
        local.class_index = tr.class_index;
        local.boxes.assign(clip_len, std::nullopt);
        local.keyframe_flags.assign(clip_len, false);
        bool any = false;
        for (int f = 0; f < clip_len; ++f) {
          int g = lo + f;
          if (g < tr.num_frames() && tr.boxes[g].has_value()) {
            local.boxes[f] = tr.boxes[g];
            local.keyframe_flags[f] = g < int(tr.keyframe_flags.size()) && tr.keyframe_flags[g];
            any = true;
          }
        }
        // A cropped span may contain no original keyframe; the cut's first box
        // becomes one so downstream interpolation preconditions keep holding.
        if (any) {
          for (int f = 0; f < clip_len; ++f)
            if (local.boxes[f].has_value()) {
              if (!local.keyframe_flags[f]) local.keyframe_flags[f] = true;
              break;
            }
          cut.tracks.tracks.push_back(std::move(local));
        }
      }
      result.clips.push_back(std::move(cut));
    }
  }
  return result;
}

}  // namespace aornet::synth
