#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aornet/core/common.hpp"
#include "aornet/data/taxonomy.hpp"

namespace aornet::synth {

using json = nlohmann::ordered_json;

// Everything the generator needs to render a corpus. A spec round-trips
// through JSON so a dataset card can reproduce its own data.
struct ScenarioSpec {
  std::string name = "daos-synth-small";
  int num_participants = 6;
  int clips_per_participant = 6;
  int frame_width = 112;
  int frame_height = 112;
  double fps = 15.0;
  double clip_seconds = 3.0;
  // Extra recorded frames appended after the action interval; exercises the
  // remainder-drop rule in segmentation.
  int tail_slack_frames = 7;
  int keyframe_stride = 5;
  std::vector<std::string> modalities = {"RGB", "IR", "Depth"};
  // Fine labels used for clips (round-robin per participant). Empty = all.
  std::vector<std::string> labels;
  // Always-present tracked cabin fixtures (beyond rule-required objects).
  std::vector<std::string> context_classes = {"steering wheel"};
  // Small tracked clutter objects of *competing* hand-held classes, placed on
  // the passenger side. They only matter when the object cap is raised.
  int tracked_distractors = 0;
  // Untracked flat-color patches reusing object colors, so global color
  // statistics carry no label information.
  int untracked_decor = 4;
  int max_tracks = 12;
  std::uint64_t seed = 1;
  int train_participants = 4;
  int val_participants = 1;
  int test_participants = 1;

  data::ActionTaxonomy actions = data::default_actions();
  data::ObjectTaxonomy objects = data::default_objects();
  data::RuleTable rules = data::default_rules();

  std::vector<std::string> effective_labels() const {
    return labels.empty() ? actions.fine_labels : labels;
  }

  void validate() const {
    require(num_participants > 0 && clips_per_participant > 0, "empty scenario");
    require(frame_width >= 16 && frame_height >= 16, "frame size too small");
    require(fps > 0, "fps must be positive");
    require(clip_seconds > 0, "clip_seconds must be positive");
    require(tail_slack_frames >= 0, "tail_slack_frames must be >= 0");
    require(keyframe_stride >= 1, "keyframe_stride must be >= 1");
    require(!modalities.empty(), "at least one modality");
    for (const auto& m : modalities)
      require(m == "RGB" || m == "IR" || m == "Depth", "unknown modality: " + m);
    require(train_participants + val_participants + test_participants == num_participants,
            "split sizes must sum to num_participants");
    actions.validate();
    objects.validate();
    rules.validate(actions, objects);
    for (const auto& l : effective_labels()) (void)actions.fine_index(l);
  }
};

// Fine labels whose rules share a motion pattern but require different
// objects: within such a pair the rendered motion is identical and only the
// object tells them apart.
inline std::vector<std::pair<std::string, std::string>> object_distinguishable_pairs(
    const ScenarioSpec& spec) {
  std::vector<std::pair<std::string, std::string>> out;
  auto labels = spec.effective_labels();
  for (std::size_t i = 0; i < labels.size(); ++i)
    for (std::size_t j = i + 1; j < labels.size(); ++j) {
      const auto& a = spec.rules.at(labels[i]);
      const auto& b = spec.rules.at(labels[j]);
      if (a.motion_id == b.motion_id && a.objects != b.objects)
        out.emplace_back(labels[i], labels[j]);
    }
  return out;
}

// Three hand-motion groups, three hand-held objects each: motion alone pins
// the group, the object pins the label. This is the fixture for measuring how
// much object relations add over a pixels-only model.
inline std::vector<std::string> relation_pair_labels() {
  return {"drinking",        "smoking",
          "eating a snack",  "opening a bottle",
          "texting on the phone", "unwrapping food",
          "putting down a bottle", "putting out a cigarette",
          "putting down food"};
}

inline ScenarioSpec preset_scenario(const std::string& name) {
  ScenarioSpec s;
  if (name == "daos-synth-small") {
    return s;  // defaults above
  }
  if (name == "toy") {
    // Smallest full-pipeline corpus: quick smoke tests and demos.
    s.name = name;
    s.num_participants = 3;
    s.clips_per_participant = 4;
    s.frame_width = 48;
    s.frame_height = 48;
    s.fps = 5.0;
    s.clip_seconds = 1.6;
    s.tail_slack_frames = 2;
    s.keyframe_stride = 3;
    s.labels = {"drinking", "texting on the phone", "looking around", "yawning"};
    s.untracked_decor = 2;
    s.train_participants = 1;
    s.val_participants = 1;
    s.test_participants = 1;
    return s;
  }
  if (name == "micro") {
    // Two participants, RGB only: the determinism/CLI round-trip fixture.
    s.name = name;
    s.num_participants = 2;
    s.clips_per_participant = 4;
    s.frame_width = 48;
    s.frame_height = 48;
    s.fps = 5.0;
    s.clip_seconds = 1.6;
    s.tail_slack_frames = 0;
    s.keyframe_stride = 3;
    s.modalities = {"RGB"};
    s.labels = {"drinking", "texting on the phone", "looking around", "yawning"};
    s.untracked_decor = 2;
    s.train_participants = 1;
    s.val_participants = 1;
    s.test_participants = 0;
    return s;
  }
  if (name == "overfit64") {
    // 64 training clips, no held-out split: memorization benchmark.
    s.name = name;
    s.num_participants = 4;
    s.clips_per_participant = 16;
    s.frame_width = 48;
    s.frame_height = 48;
    s.fps = 5.0;
    s.clip_seconds = 1.6;
    s.tail_slack_frames = 0;
    s.keyframe_stride = 3;
    s.modalities = {"RGB"};
    s.labels = {"drinking",          "smoking",        "texting on the phone",
                "putting down food", "looking around", "looking down",
                "yawning",           "stretching arms"};
    s.untracked_decor = 2;
    s.train_participants = 4;
    s.val_participants = 0;
    s.test_participants = 0;
    return s;
  }
  if (name == "relation-pairs") {
    // Object-distinguishable fixture at evaluation scale: 12 held-out
    // participants × 18 clips = 216 validation clips.
    s.name = name;
    s.num_participants = 26;
    s.clips_per_participant = 18;
    s.frame_width = 48;
    s.frame_height = 48;
    s.fps = 5.0;
    s.clip_seconds = 1.6;
    s.tail_slack_frames = 0;
    s.keyframe_stride = 3;
    s.modalities = {"RGB"};
    s.labels = relation_pair_labels();
    s.untracked_decor = 6;
    s.train_participants = 14;
    s.val_participants = 12;
    s.test_participants = 0;
    return s;
  }
  if (name == "omax-stress") {
    // Six relevant tracked objects every clip (person, hand-held item, four
    // cabin fixtures) plus four smaller clutter objects of competing classes.
    s.name = name;
    s.num_participants = 10;
    s.clips_per_participant = 10;
    s.frame_width = 48;
    s.frame_height = 48;
    s.fps = 5.0;
    s.clip_seconds = 1.6;
    s.tail_slack_frames = 0;
    s.keyframe_stride = 3;
    s.modalities = {"RGB"};
    s.labels = relation_pair_labels();
    s.context_classes = {"steering wheel", "bag", "child seat", "cup"};
    s.tracked_distractors = 4;
    s.untracked_decor = 4;
    s.train_participants = 6;
    s.val_participants = 4;
    s.test_participants = 0;
    return s;
  }
  throw ValidationError("unknown scenario preset: " + name);
}

inline json scenario_to_json(const ScenarioSpec& s) {
  json j;
  j["name"] = s.name;
  j["num_participants"] = s.num_participants;
  j["clips_per_participant"] = s.clips_per_participant;
  j["frame_size"] = {s.frame_width, s.frame_height};
  j["fps"] = s.fps;
  j["clip_seconds"] = s.clip_seconds;
  j["tail_slack_frames"] = s.tail_slack_frames;
  j["keyframe_stride"] = s.keyframe_stride;
  j["modalities"] = s.modalities;
  j["labels"] = s.labels;
  j["context_classes"] = s.context_classes;
  j["tracked_distractors"] = s.tracked_distractors;
  j["untracked_decor"] = s.untracked_decor;
  j["max_tracks"] = s.max_tracks;
  j["seed"] = s.seed;
  j["split"] = {{"train_participants", s.train_participants},
                {"val_participants", s.val_participants},
                {"test_participants", s.test_participants}};
  j["taxonomy"] = data::taxonomy_to_json(s.actions, s.objects);
  j["action_object_rules"] = data::rules_to_json(s.rules);
  return j;
}

inline ScenarioSpec scenario_from_json(const json& j) {
  ScenarioSpec s;
  if (j.contains("name")) s.name = j.at("name").get<std::string>();
  if (j.contains("num_participants")) s.num_participants = j.at("num_participants").get<int>();
  if (j.contains("clips_per_participant"))
    s.clips_per_participant = j.at("clips_per_participant").get<int>();
  if (j.contains("frame_size")) {
    s.frame_width = j.at("frame_size").at(0).get<int>();
    s.frame_height = j.at("frame_size").at(1).get<int>();
  }
  if (j.contains("fps")) s.fps = j.at("fps").get<double>();
  if (j.contains("clip_seconds")) s.clip_seconds = j.at("clip_seconds").get<double>();
  if (j.contains("tail_slack_frames")) s.tail_slack_frames = j.at("tail_slack_frames").get<int>();
  if (j.contains("keyframe_stride")) s.keyframe_stride = j.at("keyframe_stride").get<int>();
  if (j.contains("modalities")) s.modalities = j.at("modalities").get<std::vector<std::string>>();
  if (j.contains("labels")) s.labels = j.at("labels").get<std::vector<std::string>>();
  if (j.contains("context_classes"))
    s.context_classes = j.at("context_classes").get<std::vector<std::string>>();
  if (j.contains("tracked_distractors"))
    s.tracked_distractors = j.at("tracked_distractors").get<int>();
  if (j.contains("untracked_decor")) s.untracked_decor = j.at("untracked_decor").get<int>();
  if (j.contains("max_tracks")) s.max_tracks = j.at("max_tracks").get<int>();
  if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("split")) {
    const auto& sp = j.at("split");
    s.train_participants = sp.at("train_participants").get<int>();
    s.val_participants = sp.at("val_participants").get<int>();
    s.test_participants = sp.at("test_participants").get<int>();
  }
  if (j.contains("taxonomy")) {
    auto [a, o] = data::taxonomy_from_json(j.at("taxonomy"));
    s.actions = std::move(a);
    s.objects = std::move(o);
  }
  if (j.contains("action_object_rules"))
    s.rules = data::rules_from_json(j.at("action_object_rules"));
  s.validate();
  return s;
}

}  // namespace aornet::synth
