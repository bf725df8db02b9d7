#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "aornet/backbone/sampler.hpp"
#include "aornet/data/annotation_io.hpp"
#include "aornet/data/taxonomy.hpp"
#include "aornet/model/model.hpp"

namespace aornet::harness {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

struct LoadedClip {
  data::ClipRecord rec;
  data::ObjectTrackSet tracks;
};

// A generated corpus pulled back into memory: taxonomy, rule table, split
// manifest, and every clip's annotation. Pixels stay on disk.
struct Dataset {
  fs::path root;
  data::ActionTaxonomy actions;
  data::ObjectTaxonomy objects;
  data::RuleTable rules;
  data::SplitManifest split;
  std::vector<LoadedClip> clips;
  std::map<std::string, std::size_t> by_id;

  static Dataset load(const fs::path& root) {
    Dataset ds;
    ds.root = root;
    auto [a, o] = data::taxonomy_from_json(data::read_json_file(root / "taxonomy.json"));
    ds.actions = std::move(a);
    ds.objects = std::move(o);
    ds.split = data::split_from_json(data::read_json_file(root / "split.json"));
    // The dataset card carries the generation scenario, including the
    // action-object rule table the bank builder needs.
    const fs::path card = root / "dataset_card.json";
    if (fs::exists(card)) {
      json cj = data::read_json_file(card);
      if (cj.contains("scenario") && cj.at("scenario").contains("action_object_rules"))
        ds.rules = data::rules_from_json(cj.at("scenario").at("action_object_rules"));
      else
        ds.rules = data::default_rules();
    } else {
      ds.rules = data::default_rules();
    }

    const fs::path clips_dir = root / "clips";
    require(fs::is_directory(clips_dir), "dataset has no clips/ directory: " + root.string());
    std::vector<fs::path> ann;
    for (const auto& e : fs::directory_iterator(clips_dir)) {
      const fs::path p = e.path() / "annotation.json";
      if (fs::exists(p)) ann.push_back(p);
    }
    std::sort(ann.begin(), ann.end());  // directory order is not a contract
    for (const auto& p : ann) {
      auto [rec, tracks] = data::clip_from_json(data::read_json_file(p), ds.objects);
      ds.by_id[rec.clip_id] = ds.clips.size();
      ds.clips.push_back({std::move(rec), std::move(tracks)});
    }
    require(!ds.clips.empty(), "dataset has no clips: " + root.string());
    return ds;
  }

  const LoadedClip& at(const std::string& clip_id) const {
    auto it = by_id.find(clip_id);
    require(it != by_id.end(), "unknown clip id: " + clip_id);
    return clips[it->second];
  }

  const std::vector<std::string>& split_ids(const std::string& name) const {
    const std::vector<std::string>* ids = nullptr;
    if (name == "train") ids = &split.train;
    else if (name == "val") ids = &split.val;
    else if (name == "test") ids = &split.test;
    else throw ValidationError("unknown split: " + name);
    if (ids->empty()) throw ValidationError("EMPTY_SPLIT: split '" + name + "' has no clips");
    return *ids;
  }

  int label_of(const LoadedClip& c, const std::string& level) const {
    require(level == "fine" || level == "coarse", "level must be fine or coarse");
    return level == "coarse" ? c.rec.coarse_label : c.rec.fine_label;
  }

  int num_classes(const std::string& level) const {
    require(level == "fine" || level == "coarse", "level must be fine or coarse");
    return level == "coarse" ? actions.num_coarse() : actions.num_fine();
  }
};

// Decoded PNG cache. Frames are kept in their compact integer form and only
// widened to double planes at sampling time, so even a few hundred clips fit
// comfortably in memory.
class FrameCache {
 public:
  const std::vector<img::Image>& get(const Dataset& ds, const data::ClipRecord& rec,
                                     const std::string& modality) {
    const std::string key = rec.clip_id + "/" + modality;
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    auto paths = rec.modality_paths.find(modality);
    require(paths != rec.modality_paths.end(),
            "clip " + rec.clip_id + " has no modality " + modality);
    std::vector<img::Image> frames;
    frames.reserve(paths->second.size());
    for (const auto& rel : paths->second) frames.push_back(img::read_png(ds.root / rel));
    return cache_.emplace(key, std::move(frames)).first->second;
  }

  void clear() { cache_.clear(); }

 private:
  std::map<std::string, std::vector<img::Image>> cache_;
};

// One clip, sampled for the model: frames are drawn once per sample and the
// same draw (and flip) applies to every modality, so pixels and boxes stay
// aligned across streams. In eval mode the rng is never consumed.
inline model::ModelSample make_sample(const Dataset& ds, const LoadedClip& clip,
                                      const std::vector<std::string>& modalities,
                                      int frame_count, int input_size, const std::string& level,
                                      bool train_mode, const Rng& rng,
                                      FrameCache* cache = nullptr) {
  model::ModelSample s;
  s.clip_id = clip.rec.clip_id;
  s.label = ds.label_of(clip, level);
  backbone::SampleRequest req;
  req.frame_count = frame_count;
  req.input_size = input_size;
  req.train_mode = train_mode;
  for (const auto& m : modalities) {
    req.modality = m;
    backbone::SampledClip sc;
    if (cache) {
      const auto& images = cache->get(ds, clip.rec, m);
      std::vector<std::vector<Mat>> raw;
      raw.reserve(images.size());
      for (const auto& im : images) raw.push_back(backbone::image_to_planes(im));
      sc = backbone::sample_from_frames(raw, req, rng);
    } else {
      sc = backbone::sample_clip(ds.root, clip.rec, req, rng);
    }
    s.tracks[m] = backbone::remap_tracks(clip.tracks, sc.frame_index_map, sc.flipped);
    s.clips[m] = std::move(sc);
  }
  return s;
}

}  // namespace aornet::harness
