#pragma once

#include <filesystem>
#include <fstream>

#include "aornet/data/taxonomy.hpp"
#include "aornet/data/types.hpp"

namespace aornet::data {

// On-disk annotation schema (one JSON document per clip):
//   {clip_id, participant_id, fps, fine_label, coarse_label, lighting,
//    modalities: {RGB: [paths], ...},
//    tracks: [{track_id, class, boxes: {"<frame>": [x1,y1,x2,y2]}, keyframes: [...]}]}
// Field names are the interface; unknown fields are ignored on read. Object
// classes are stored by name so files stay readable without the taxonomy.

inline json clip_to_json(const ClipRecord& rec, const ObjectTrackSet& tracks,
                         const ObjectTaxonomy& tax_o) {
  json j;
  j["clip_id"] = rec.clip_id;
  j["participant_id"] = rec.participant_id;
  j["fps"] = rec.fps;
  j["fine_label"] = rec.fine_label;
  j["coarse_label"] = rec.coarse_label;
  j["lighting"] = to_string(rec.lighting);
  json mods;
  for (const auto& [mod, paths] : rec.modality_paths) mods[mod] = paths;
  j["modalities"] = std::move(mods);
  json tarr = json::array();
  for (const auto& tr : tracks.tracks) {
    json tj;
    tj["track_id"] = tr.track_id;
    tj["class"] = tax_o.object_labels.at(tr.class_index);
    json boxes;
    json keyframes = json::array();
    for (int f = 0; f < tr.num_frames(); ++f) {
      if (tr.boxes[f]) {
        const Box& b = *tr.boxes[f];
        boxes[std::to_string(f)] = {b.x1, b.y1, b.x2, b.y2};
      }
      if (tr.keyframe_flags[f]) keyframes.push_back(f);
    }
    tj["boxes"] = std::move(boxes);
    tj["keyframes"] = std::move(keyframes);
    tarr.push_back(std::move(tj));
  }
  j["tracks"] = std::move(tarr);
  return j;
}

inline std::pair<ClipRecord, ObjectTrackSet> clip_from_json(const json& j,
                                                            const ObjectTaxonomy& tax_o) {
  ClipRecord rec;
  rec.clip_id = j.at("clip_id").get<std::string>();
  rec.participant_id = j.at("participant_id").get<std::string>();
  rec.fps = j.at("fps").get<double>();
  rec.fine_label = j.at("fine_label").get<int>();
  rec.coarse_label = j.at("coarse_label").get<int>();
  rec.lighting = lighting_from_string(j.at("lighting").get<std::string>());
  for (auto it = j.at("modalities").begin(); it != j.at("modalities").end(); ++it)
    rec.modality_paths[it.key()] = it.value().get<std::vector<std::string>>();

  ObjectTrackSet ts;
  ts.num_frames = rec.num_frames();
  for (const auto& tj : j.at("tracks")) {
    Track tr;
    tr.track_id = tj.at("track_id").get<int>();
    tr.class_index = tax_o.object_index(tj.at("class").get<std::string>());
    tr.boxes.assign(ts.num_frames, std::nullopt);
    tr.keyframe_flags.assign(ts.num_frames, false);
    for (auto it = tj.at("boxes").begin(); it != tj.at("boxes").end(); ++it) {
      int f = std::stoi(it.key());
      require(f >= 0 && f < ts.num_frames, "box frame index out of range in " + rec.clip_id);
      const auto& arr = it.value();
      tr.boxes[f] = Box{arr.at(0).get<double>(), arr.at(1).get<double>(),
                        arr.at(2).get<double>(), arr.at(3).get<double>()};
    }
    for (const auto& kf : tj.at("keyframes")) {
      int f = kf.get<int>();
      require(f >= 0 && f < ts.num_frames, "keyframe index out of range in " + rec.clip_id);
      tr.keyframe_flags[f] = true;
    }
    ts.tracks.push_back(std::move(tr));
  }
  return {std::move(rec), std::move(ts)};
}

inline json split_to_json(const SplitManifest& m) {
  return json{{"train", m.train}, {"val", m.val}, {"test", m.test}};
}

inline SplitManifest split_from_json(const json& j) {
  SplitManifest m;
  m.train = j.at("train").get<std::vector<std::string>>();
  m.val = j.at("val").get<std::vector<std::string>>();
  m.test = j.at("test").get<std::vector<std::string>>();
  return m;
}

// Atomic-ish write: temp file in the same directory, then rename.
inline void write_json_file(const std::filesystem::path& path, const json& j) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp);
    require(f.good(), "cannot open for writing: " + path.string());
    f << j.dump(2) << "\n";
    require(f.good(), "short write: " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  require(f.good(), "cannot open: " + path.string());
  json j = json::parse(f, nullptr, false);
  require(!j.is_discarded(), "unparsable JSON: " + path.string());
  return j;
}

}  // namespace aornet::data
