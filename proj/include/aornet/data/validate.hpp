#pragma once

#include "aornet/data/taxonomy.hpp"
#include "aornet/data/types.hpp"

namespace aornet::data {

inline ValidationReport validate_clip(const ClipRecord& rec, const ObjectTrackSet& tracks,
                                      const ActionTaxonomy& tax_a, const ObjectTaxonomy& tax_o) {
  ValidationReport rep;

  if (rec.fps <= 0) rep.add("BAD_FPS", rec.clip_id + ": fps must be positive");

  if (rec.fine_label < 0 || rec.fine_label >= tax_a.num_fine()) {
    rep.add("BAD_FINE_LABEL", rec.clip_id + ": fine label out of range");
  } else if (rec.coarse_label != tax_a.fine_to_coarse[rec.fine_label]) {
    rep.add("LABEL_MISMATCH", rec.clip_id + ": coarse label does not match taxonomy");
  }

  if (rec.modality_paths.empty()) {
    rep.add("NO_MODALITIES", rec.clip_id + ": record carries no frame streams");
  } else {
    std::size_t len = rec.modality_paths.begin()->second.size();
    for (const auto& [mod, paths] : rec.modality_paths)
      if (paths.size() != len)
        rep.add("MODALITY_LENGTH_MISMATCH",
                rec.clip_id + ": " + mod + " has " + std::to_string(paths.size()) +
                    " frames, expected " + std::to_string(len));
    if (tracks.num_frames != int(len))
      rep.add("TRACK_LENGTH_MISMATCH",
              rec.clip_id + ": track frame count " + std::to_string(tracks.num_frames) +
                  " vs clip length " + std::to_string(len));
  }

  for (const auto& tr : tracks.tracks) {
    std::string tag = rec.clip_id + " track " + std::to_string(tr.track_id);
    if (tr.class_index < 0 || tr.class_index >= tax_o.num_objects())
      rep.add("BAD_CLASS_INDEX", tag + ": object class out of range");
    if (int(tr.boxes.size()) != tracks.num_frames ||
        int(tr.keyframe_flags.size()) != tracks.num_frames) {
      rep.add("TRACK_LENGTH_MISMATCH", tag + ": per-frame arrays have the wrong length");
      continue;
    }
    for (int f = 0; f < tracks.num_frames; ++f) {
      const auto& ob = tr.boxes[f];
      if (ob) {
        if (ob->degenerate())
          rep.add("DEGENERATE_BOX", tag + " frame " + std::to_string(f));
        else if (!ob->in_range())
          rep.add("BOX_OUT_OF_RANGE", tag + " frame " + std::to_string(f));
      } else if (tr.keyframe_flags[f]) {
        rep.add("KEYFRAME_WITHOUT_BOX", tag + " frame " + std::to_string(f));
      }
    }
  }
  return rep;
}

}  // namespace aornet::data
