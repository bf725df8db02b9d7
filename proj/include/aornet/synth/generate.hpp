#pragma once

#include <cstdio>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "aornet/core/image_io.hpp"
#include "aornet/core/rng.hpp"
#include "aornet/data/annotation_io.hpp"
#include "aornet/data/split.hpp"
#include "aornet/data/validate.hpp"
#include "aornet/synth/motion.hpp"
#include "aornet/synth/preprocess.hpp"
#include "aornet/synth/render.hpp"
#include "aornet/synth/scenario.hpp"

namespace aornet::synth {

namespace fs = std::filesystem;

// ---- per-participant look ---------------------------------------------------

struct ParticipantStyle {
  Rgb shirt, skin, seat, cabin;
  double scale = 1.0;  // one multiplier for all of this person's object sizes,
                       // so mean-area ordering between classes never flips
};

inline ParticipantStyle participant_style(std::uint64_t seed, int participant) {
  // Muted shirt palette reusing object hues at lower brightness: histogram
  // decoys that still leave hand-held items visible against the torso.
  static const Rgb kShirts[] = {{25, 55, 125}, {125, 35, 35}, {140, 105, 35},
                                {150, 150, 150}, {35, 120, 55}, {55, 125, 130},
                                {90, 55, 130},  {70, 70, 70}};
  static const Rgb kSkins[] = {
      {205, 170, 140}, {180, 140, 110}, {150, 110, 85}, {230, 195, 170}};
  Rng rng = Rng(seed).fork("participant", std::uint64_t(participant));
  ParticipantStyle st;
  st.shirt = kShirts[rng.uniform_int(8)];
  st.skin = kSkins[rng.uniform_int(4)];
  int seat_j = int(rng.uniform_int(30));
  st.seat = Rgb{std::uint8_t(55 + seat_j), std::uint8_t(48 + seat_j), std::uint8_t(44 + seat_j)};
  int cab_j = int(rng.uniform_int(30));
  st.cabin = Rgb{std::uint8_t(95 + cab_j), std::uint8_t(95 + cab_j), std::uint8_t(100 + cab_j)};
  st.scale = 0.92 + 0.16 * rng.uniform();
  return st;
}

// ---- scene assembly ----------------------------------------------------------

struct SceneEntity {
  std::string cls;
  bool attached = false;  // follows the hand; otherwise parked at an anchor
  double ax = 0, ay = 0;  // anchor center for static entities
  double scale = 1.0;
  bool tracked = true;
  std::string layer = "context";
};

inline bool is_fixed_prop(const std::string& cls) {
  return cls == "steering wheel" || cls == "child" || cls == "child seat";
}

inline std::array<double, 2> class_anchor(const std::string& cls) {
  if (cls == "steering wheel") return {0.42, 0.63};
  if (cls == "bag") return {0.84, 0.76};
  if (cls == "child") return {0.83, 0.35};
  if (cls == "child seat") return {0.83, 0.37};
  if (cls == "cup") return {0.30, 0.80};
  if (cls == "lighter") return {0.47, 0.57};
  return {0.50, 0.57};  // second hand-area prop
}

// Everything about one recording that is decided before a single pixel is
// drawn. All randomness here is keyed off (seed, participant, clip index) and
// a per-quantity substream label, never off the action label — that is what
// makes same-motion different-object renders agree outside object regions.
struct RecordingPlan {
  std::string participant_id;
  int recording_index = 0;
  std::string fine_label;
  int motion_id = 0;
  int total_frames = 0;
  data::Lighting lighting = data::Lighting::kDay;
  ParticipantStyle style;
  double cam_dx = 0, cam_dy = 0;
  double hand_jx = 0, hand_jy = 0;
  std::vector<SceneEntity> entities;      // tracked, in semantic order
  std::vector<int> track_ids;             // parallel to entities, shuffled
  std::vector<SceneEntity> decor;         // untracked color patches
  std::set<int> keyframes;
};

inline std::uint64_t recording_key(int participant, int clip_index) {
  return (std::uint64_t(participant) << 24) | std::uint64_t(clip_index);
}

inline std::string assigned_label(const ScenarioSpec& spec, int participant, int clip_index) {
  auto labels = spec.effective_labels();
  return labels[std::size_t(participant + clip_index) % labels.size()];
}

inline RecordingPlan plan_recording(const ScenarioSpec& spec, int participant, int clip_index,
                                    const std::string& fine_label) {
  const auto& rule = spec.rules.at(fine_label);
  (void)motion_keypoints(rule.motion_id);  // validates the id

  RecordingPlan plan;
  char pid[16];
  std::snprintf(pid, sizeof(pid), "p%02d", participant);
  plan.participant_id = pid;
  plan.recording_index = clip_index;
  plan.fine_label = fine_label;
  plan.motion_id = rule.motion_id;
  plan.total_frames = int(std::lround(spec.clip_seconds * spec.fps)) + spec.tail_slack_frames;
  plan.style = participant_style(spec.seed, participant);

  const std::uint64_t key = recording_key(participant, clip_index);
  Rng scene = Rng(spec.seed).fork("scene", key);
  plan.lighting = data::Lighting(scene.uniform_int(4));
  plan.cam_dx = -0.015 + 0.03 * scene.uniform();
  plan.cam_dy = -0.015 + 0.03 * scene.uniform();
  Rng hand = Rng(spec.seed).fork("motion", key);
  plan.hand_jx = -0.02 + 0.04 * hand.uniform();
  plan.hand_jy = -0.02 + 0.04 * hand.uniform();

  // Static props jitter by class, from substreams independent of which props
  // this particular label pulls in.
  auto prop_jitter = [&](const std::string& cls) {
    Rng r = Rng(spec.seed).fork("scene", key).fork("prop", std::uint64_t(spec.objects.object_index(cls)));
    return std::array<double, 2>{-0.02 + 0.04 * r.uniform(), -0.02 + 0.04 * r.uniform()};
  };

  plan.entities.push_back({"person", false, 0.55, 0.62, plan.style.scale, true, "person"});

  bool have_attached = false;
  std::set<std::string> present = {"person"};
  for (const auto& cls : rule.objects) {
    if (cls == "person") continue;
    present.insert(cls);
    SceneEntity e;
    e.cls = cls;
    e.scale = plan.style.scale;
    bool bag_carried = (cls == "bag" && plan.motion_id == 9);
    if (!have_attached && !is_fixed_prop(cls) && (cls != "bag" || bag_carried)) {
      e.attached = true;
      e.layer = "held";
      have_attached = true;
    } else {
      auto a = class_anchor(cls);
      auto jit = prop_jitter(cls);
      e.ax = a[0] + jit[0];
      e.ay = a[1] + jit[1];
      e.layer = "context";
    }
    plan.entities.push_back(std::move(e));
  }

  for (const auto& cls : spec.context_classes) {
    if (present.count(cls)) continue;  // rule already placed one
    present.insert(cls);
    auto a = class_anchor(cls);
    auto jit = prop_jitter(cls);
    plan.entities.push_back({cls, false, a[0] + jit[0], a[1] + jit[1], plan.style.scale, true,
                             "context"});
  }

  // Passenger-side clutter: real tracked objects of competing hand-held
  // classes, strictly smaller than anything relevant.
  static const char* kClutterClasses[] = {"phone", "bottle", "food", "cigarette"};
  static const double kClutterBases[][2] = {
      {0.15, 0.70}, {0.25, 0.55}, {0.12, 0.32}, {0.30, 0.86}};
  for (int i = 0; i < spec.tracked_distractors; ++i) {
    Rng r = Rng(spec.seed).fork("scene", key).fork("clutter", std::uint64_t(i));
    SceneEntity e;
    e.cls = kClutterClasses[(i + clip_index) % 4];
    e.ax = kClutterBases[i % 4][0] + (-0.02 + 0.04 * r.uniform());
    e.ay = kClutterBases[i % 4][1] + (-0.02 + 0.04 * r.uniform());
    e.scale = 0.45;  // well below every relevant object at any style scale
    e.layer = "distractor";
    plan.entities.push_back(std::move(e));
  }

  if (int(plan.entities.size()) > spec.max_tracks)
    throw ValidationError("RULE_UNSATISFIABLE: '" + fine_label + "' needs " +
                          std::to_string(plan.entities.size()) + " simultaneous tracks, cap is " +
                          std::to_string(spec.max_tracks));

  // Track ids are a random permutation so slot order (sorted by id) carries no
  // label information.
  {
    std::vector<int> ids(plan.entities.size());
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = int(i) + 1;
    Rng r = Rng(spec.seed).fork("scene", key).fork("ids");
    r.shuffle(ids);
    plan.track_ids = std::move(ids);
  }

  // Untracked decor: object-colored patches on the dash and passenger side.
  static const char* kDecorPalette[] = {"bottle", "phone",      "food", "cigarette",
                                        "glasses", "headphones", "cup",  "mask"};
  for (int i = 0; i < spec.untracked_decor; ++i) {
    Rng r = Rng(spec.seed).fork("scene", key).fork("decor", std::uint64_t(i));
    SceneEntity e;
    e.cls = kDecorPalette[(i + clip_index) % 8];
    if (i % 2 == 0) {  // dash strip
      e.ax = 0.06 + 0.88 * r.uniform();
      e.ay = 0.10 + 0.10 * r.uniform();
    } else {  // passenger side
      e.ax = 0.04 + 0.26 * r.uniform();
      e.ay = 0.45 + 0.45 * r.uniform();
    }
    e.scale = 0.55 + 0.25 * r.uniform();
    e.tracked = false;
    e.layer = "decor";
    plan.decor.push_back(std::move(e));
  }

  // Annotator-style keyframes: a fixed stride plus the motion's keypoint
  // frames (trajectory kinks), so linear interpolation recovers the true path.
  const int T = plan.total_frames;
  for (int f = 0; f < T; f += spec.keyframe_stride) plan.keyframes.insert(f);
  plan.keyframes.insert(T - 1);
  const int K = int(motion_keypoints(plan.motion_id).size());
  for (int k = 0; k < K; ++k)
    plan.keyframes.insert(int(std::lround(double(k) * (T - 1) / (K - 1))));
  return plan;
}

// ---- geometry shared by painting and annotation ------------------------------

struct EntityRect {
  double cx, cy, hx, hy;
};

inline EntityRect entity_rect(const RecordingPlan& plan, const SceneEntity& e, const Pose& pose) {
  auto hs = class_half_size(e.cls);
  double hx = hs[0] * e.scale, hy = hs[1] * e.scale;
  double cx, cy;
  if (e.attached) {
    cx = pose.hand_x + plan.hand_jx;
    cy = pose.hand_y + plan.hand_jy - 0.03;
  } else {
    cx = e.ax;
    cy = e.ay;
  }
  return {cx + plan.cam_dx, cy + plan.cam_dy, hx, hy};
}

inline data::Box rect_to_box(const EntityRect& r) {
  data::Box b{r.cx - r.hx, r.cy - r.hy, r.cx + r.hx, r.cy + r.hy};
  b.x1 = std::clamp(b.x1, 0.0, 1.0);
  b.y1 = std::clamp(b.y1, 0.0, 1.0);
  b.x2 = std::clamp(b.x2, 0.0, 1.0);
  b.y2 = std::clamp(b.y2, 0.0, 1.0);
  // Clamping can flatten a box that sits at the border; keep a sliver inside.
  if (b.x2 - b.x1 < 1e-3) {
    if (b.x1 > 0.5) b.x1 = b.x2 - 1e-3;
    else b.x2 = b.x1 + 1e-3;
  }
  if (b.y2 - b.y1 < 1e-3) {
    if (b.y1 > 0.5) b.y1 = b.y2 - 1e-3;
    else b.y2 = b.y1 + 1e-3;
  }
  return b;
}

inline Pose plan_pose(const RecordingPlan& plan, int frame) {
  double phase = plan.total_frames <= 1 ? 0.0 : double(frame) / double(plan.total_frames - 1);
  return pose_at(plan.motion_id, phase, 0.0, 0.0);  // jitter applied in entity_rect
}

// Person geometry: torso + head + hand, all skin/shirt colored. The person's
// annotation box is the union of torso and head.
struct PersonRects {
  EntityRect torso, head, hand;
};

inline PersonRects person_rects(const RecordingPlan& plan, const Pose& pose) {
  double s = plan.style.scale;
  PersonRects pr;
  pr.torso = {0.55 + pose.torso_dx + plan.cam_dx, 0.62 + plan.cam_dy, 0.15 * s, 0.22 * s};
  pr.head = {0.55 + pose.torso_dx + pose.head_dx + plan.cam_dx,
             0.32 + pose.head_dy + plan.cam_dy, 0.07 * s, 0.09 * s};
  pr.hand = {pose.hand_x + plan.hand_jx + plan.cam_dx, pose.hand_y + plan.hand_jy + plan.cam_dy,
             0.032 * s, 0.032 * s};
  return pr;
}

inline data::Box person_box(const PersonRects& pr) {
  EntityRect u{0, 0, 0, 0};
  double x1 = std::min(pr.torso.cx - pr.torso.hx, pr.head.cx - pr.head.hx);
  double y1 = std::min(pr.torso.cy - pr.torso.hy, pr.head.cy - pr.head.hy);
  double x2 = std::max(pr.torso.cx + pr.torso.hx, pr.head.cx + pr.head.hx);
  double y2 = std::max(pr.torso.cy + pr.torso.hy, pr.head.cy + pr.head.hy);
  u = {(x1 + x2) / 2, (y1 + y2) / 2, (x2 - x1) / 2, (y2 - y1) / 2};
  return rect_to_box(u);
}

inline Rgb window_color(data::Lighting l) {
  switch (l) {
    case data::Lighting::kDay: return {170, 200, 230};
    case data::Lighting::kNight: return {25, 28, 45};
    case data::Lighting::kRain: return {120, 130, 150};
    case data::Lighting::kCloudy: return {150, 160, 175};
  }
  return {170, 200, 230};
}

inline FrameCanvas render_frame(const ScenarioSpec& spec, const RecordingPlan& plan, int frame) {
  FrameCanvas f(spec.frame_width, spec.frame_height);
  const Pose pose = plan_pose(plan, frame);
  const double cx = plan.cam_dx, cy = plan.cam_dy;

  f.fill(plan.style.cabin, layer_depth("background"));
  Rgb win = window_color(plan.lighting);
  f.rect(0.17 + cx, 0.16 + cy, 0.15, 0.12, win, layer_depth("window"));
  f.rect(0.80 + cx, 0.16 + cy, 0.17, 0.12, win, layer_depth("window"));
  f.rect(0.50 + cx, 0.045 + cy, 0.50, 0.055, {60, 60, 65}, layer_depth("background"));
  f.rect(0.62 + cx, 0.80 + cy, 0.23, 0.22, plan.style.seat, layer_depth("seat"));

  for (const auto& e : plan.decor) {
    EntityRect r = entity_rect(plan, e, pose);
    f.rect(r.cx, r.cy, r.hx, r.hy, class_color(e.cls), layer_depth("decor"));
  }
  // Static scenery first, person over it, hand-held object on top.
  for (const auto& e : plan.entities)
    if (!e.attached && e.cls != "person") {
      EntityRect r = entity_rect(plan, e, pose);
      f.rect(r.cx, r.cy, r.hx, r.hy, class_color(e.cls), layer_depth(e.layer));
    }
  PersonRects pr = person_rects(plan, pose);
  f.rect(pr.torso.cx, pr.torso.cy, pr.torso.hx, pr.torso.hy, plan.style.shirt,
         layer_depth("person"));
  f.rect(pr.head.cx, pr.head.cy, pr.head.hx, pr.head.hy, plan.style.skin, layer_depth("person"));
  f.rect(pr.hand.cx, pr.hand.cy, pr.hand.hx, pr.hand.hy, plan.style.skin, layer_depth("person"));
  for (const auto& e : plan.entities)
    if (e.attached) {
      EntityRect r = entity_rect(plan, e, pose);
      f.rect(r.cx, r.cy, r.hx, r.hy, class_color(e.cls), layer_depth("held"));
    }

  apply_lighting(f, plan.lighting);
  return f;
}

// ---- recording assembly ------------------------------------------------------

inline RawRecording render_recording(const ScenarioSpec& spec, int participant, int clip_index,
                                     const std::string& fine_label) {
  RecordingPlan plan = plan_recording(spec, participant, clip_index, fine_label);
  RawRecording rec;
  rec.participant_id = plan.participant_id;
  rec.recording_index = plan.recording_index;
  rec.fps = spec.fps;
  rec.lighting = plan.lighting;
  rec.action_table = {{fine_label, 0, plan.total_frames}};

  rec.frames.reserve(plan.total_frames);
  for (int f = 0; f < plan.total_frames; ++f) rec.frames.push_back(render_frame(spec, plan, f));

  rec.tracks.num_frames = plan.total_frames;
  for (std::size_t i = 0; i < plan.entities.size(); ++i) {
    const auto& e = plan.entities[i];
    data::Track tr;
    tr.track_id = plan.track_ids[i];
    tr.class_index = spec.objects.object_index(e.cls);
    tr.boxes.assign(plan.total_frames, std::nullopt);
    tr.keyframe_flags.assign(plan.total_frames, false);
    for (int f : plan.keyframes) {
      const Pose pose = plan_pose(plan, f);
      data::Box b = e.cls == "person" ? person_box(person_rects(plan, pose))
                                      : rect_to_box(entity_rect(plan, e, pose));
      tr.boxes[f] = b;
      tr.keyframe_flags[f] = true;
    }
    rec.tracks.tracks.push_back(std::move(tr));
  }
  rec.check();
  return rec;
}

inline std::vector<RawRecording> generate_scenario(const ScenarioSpec& spec) {
  spec.validate();
  std::vector<RawRecording> out;
  for (int p = 0; p < spec.num_participants; ++p)
    for (int c = 0; c < spec.clips_per_participant; ++c)
      out.push_back(render_recording(spec, p, c, assigned_label(spec, p, c)));
  return out;
}

// ---- dataset writer ----------------------------------------------------------

struct GeneratedDataset {
  fs::path root;
  int clip_count = 0;
  std::vector<std::string> warnings;
};

inline std::string frame_file(const std::string& modality, int frame) {
  char buf[32];
  const char* stem = modality == "RGB" ? "rgb" : (modality == "IR" ? "ir" : "depth");
  std::snprintf(buf, sizeof(buf), "%s_%03d.png", stem, frame);
  return buf;
}

inline Image modality_image(const FrameCanvas& canvas, const std::string& modality) {
  if (modality == "RGB") return canvas_to_rgb(canvas);
  if (modality == "IR") return canvas_to_ir(canvas);
  if (modality == "Depth") return canvas_to_depth(canvas);
  throw ValidationError("unknown modality: " + modality);
}

inline GeneratedDataset write_dataset(const ScenarioSpec& spec, const fs::path& out_dir) {
  spec.validate();
  fs::create_directories(out_dir / "clips");

  GeneratedDataset ds;
  ds.root = out_dir;

  std::vector<std::string> participant_ids;
  for (int p = 0; p < spec.num_participants; ++p) {
    char pid[16];
    std::snprintf(pid, sizeof(pid), "p%02d", p);
    participant_ids.push_back(pid);
  }
  data::SplitManifest psplit =
      data::participant_split(participant_ids, spec.train_participants, spec.val_participants,
                              spec.test_participants, spec.seed);
  auto split_of = [&](const std::string& pid) -> int {
    for (const auto& s : psplit.train)
      if (s == pid) return 0;
    for (const auto& s : psplit.val)
      if (s == pid) return 1;
    return 2;
  };

  data::SplitManifest clip_split;
  for (int p = 0; p < spec.num_participants; ++p) {
    for (int c = 0; c < spec.clips_per_participant; ++c) {
      RawRecording rec = render_recording(spec, p, c, assigned_label(spec, p, c));
      rec.tracks = interpolate_keyframes(rec.tracks);
      SegmentationResult seg = segment_clips(rec, spec.clip_seconds, spec.actions);
      for (auto& w : seg.warnings) ds.warnings.push_back(rec.participant_id + ": " + w);

      for (auto& cut : seg.clips) {
        const fs::path clip_dir = out_dir / "clips" / cut.record.clip_id;
        fs::create_directories(clip_dir);
        for (const auto& modality : spec.modalities) {
          std::vector<std::string> paths;
          for (int f = 0; f < cut.frame_count; ++f) {
            const std::string fname = frame_file(modality, f);
            write_png(clip_dir / fname, modality_image(rec.frames[cut.source_start + f], modality));
            paths.push_back("clips/" + cut.record.clip_id + "/" + fname);
          }
          cut.record.modality_paths[modality] = std::move(paths);
        }
        data::ValidationReport report =
            data::validate_clip(cut.record, cut.tracks, spec.actions, spec.objects);
        if (!report.ok())
          throw ValidationError("generated clip failed validation: " + cut.record.clip_id + ": " +
                                report.issues[0].code + " " + report.issues[0].message);
        data::write_json_file(clip_dir / "annotation.json",
                              data::clip_to_json(cut.record, cut.tracks, spec.objects));
        switch (split_of(cut.record.participant_id)) {
          case 0: clip_split.train.push_back(cut.record.clip_id); break;
          case 1: clip_split.val.push_back(cut.record.clip_id); break;
          default: clip_split.test.push_back(cut.record.clip_id); break;
        }
        ++ds.clip_count;
      }
    }
  }

  data::write_json_file(out_dir / "split.json", data::split_to_json(clip_split));
  data::write_json_file(out_dir / "taxonomy.json",
                        data::taxonomy_to_json(spec.actions, spec.objects));

  json card;
  card["format"] = "aornet-synth-v1";
  card["scenario"] = scenario_to_json(spec);
  card["participants"] = {{"train", psplit.train}, {"val", psplit.val}, {"test", psplit.test}};
  card["clip_count"] = ds.clip_count;
  json pairs = json::array();
  for (const auto& [a, b] : object_distinguishable_pairs(spec)) pairs.push_back({a, b});
  card["object_distinguishable_pairs"] = pairs;
  card["warnings"] = ds.warnings;
  data::write_json_file(out_dir / "dataset_card.json", card);
  return ds;
}

}  // namespace aornet::synth
