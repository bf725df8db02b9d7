#pragma once

#include <vector>

#include "aornet/core/common.hpp"
#include "aornet/data/taxonomy.hpp"

namespace aornet::synth {

// Normalized cabin anchor points (x right, y down, driver seen from the
// dashboard camera; driver sits slightly right of center).
struct Pose {
  double hand_x = 0.62, hand_y = 0.75;   // end effector carrying the action object
  double head_dx = 0.0, head_dy = 0.0;   // head offset from rest
  double torso_dx = 0.0;                 // sideways lean
};

// A motion pattern is a loop of pose keypoints traversed linearly over the
// clip. Patterns are shared by several actions on purpose: within one motion
// id the trajectory is identical and only the attached object class changes,
// which is the fixture that makes object identity the discriminative signal.
inline std::vector<Pose> motion_keypoints(int motion_id) {
  const Pose lap{0.62, 0.75, 0, 0, 0};
  const Pose mouth{0.57, 0.38, 0, 0, 0};
  const Pose chest{0.58, 0.55, 0, 0, 0};
  const Pose ear{0.66, 0.35, 0, 0, 0};
  const Pose side{0.84, 0.70, 0, 0, 0};
  const Pose face{0.56, 0.36, 0, 0, 0};
  const Pose wheel{0.44, 0.62, 0, 0, 0};
  const Pose rear{0.78, 0.48, 0.06, 0.0, 0.04};

  switch (motion_id) {
    case 0:  // raise to mouth, hold, lower (drink / smoke / eat)
      return {lap, mouth, mouth, lap};
    case 1:  // fiddle at chest height with small dips (open / text / unwrap)
      return {lap, chest, {0.55, 0.60, 0, 0, 0}, chest, lap};
    case 2:  // from mouth down to the side (put down / put out)
      return {mouth, chest, side, side};
    case 3:  // hold at the ear (talking)
      return {lap, ear, ear, ear};
    case 4:  // reach to the side, bring up to the ear (picking up)
      return {lap, side, chest, ear};
    case 5:  // raise to the face (put on glasses/mask/headphones, wipe)
      return {lap, face, face, face};
    case 6:  // take down from the face
      return {face, face, chest, lap};
    case 7:  // small adjustment wiggle at the face
      return {face, {0.59, 0.38, 0, 0, 0}, {0.53, 0.35, 0, 0, 0}, face};
    case 8:  // reach right and return (reaching into a bag)
      return {lap, side, side, lap};
    case 9:  // carry to the side and leave it there (placing a bag)
      return {chest, side, side, side};
    case 10:  // turn toward the back seat
      return {lap, rear, rear, {0.70, 0.55, 0.04, 0.0, 0.03}};
    case 11:  // both hands resting on the wheel
      return {wheel, {0.46, 0.61, 0, 0, 0}, wheel, {0.43, 0.63, 0, 0, 0}};
    case 12:  // arc along the wheel rim
      return {{0.36, 0.60, 0, 0, 0}, {0.44, 0.55, 0, 0, 0}, {0.52, 0.60, 0, 0, 0},
              {0.44, 0.68, 0, 0, 0}};
    case 13:  // let go of the wheel
      return {wheel, wheel, chest, lap};
    case 14:  // look around: head sweeps left and right
      return {{0.62, 0.75, -0.05, 0, 0}, {0.62, 0.75, 0.06, 0, 0},
              {0.62, 0.75, -0.06, 0, 0}, {0.62, 0.75, 0.05, 0, 0}};
    case 15:  // look down
      return {lap, {0.62, 0.75, 0.0, 0.05, 0}, {0.62, 0.75, 0.0, 0.06, 0}, lap};
    case 16:  // stretch arms up
      return {lap, {0.55, 0.30, 0, -0.02, 0}, {0.55, 0.26, 0, -0.03, 0}, lap};
    case 17:  // yawn: hand to mouth, head tips back
      return {lap, {0.57, 0.38, 0, -0.04, 0}, {0.57, 0.38, 0, -0.05, 0}, lap};
    case 18:  // lean to the side
      return {lap, {0.68, 0.73, 0.02, 0, 0.08}, {0.70, 0.72, 0.02, 0, 0.10}, lap};
    default:
      throw ValidationError("unknown motion pattern id: " + std::to_string(motion_id));
  }
}

inline Pose lerp(const Pose& a, const Pose& b, double t) {
  Pose p;
  p.hand_x = a.hand_x + (b.hand_x - a.hand_x) * t;
  p.hand_y = a.hand_y + (b.hand_y - a.hand_y) * t;
  p.head_dx = a.head_dx + (b.head_dx - a.head_dx) * t;
  p.head_dy = a.head_dy + (b.head_dy - a.head_dy) * t;
  p.torso_dx = a.torso_dx + (b.torso_dx - a.torso_dx) * t;
  return p;
}

// Pose at phase ∈ [0,1] through the pattern, with a per-clip jitter offset
// applied to every keypoint (so participants/clips vary but the trajectory
// SHAPE stays tied to the motion id alone).
inline Pose pose_at(int motion_id, double phase, double jitter_x, double jitter_y) {
  auto kps = motion_keypoints(motion_id);
  require(!kps.empty(), "motion pattern has no keypoints");
  if (phase <= 0) phase = 0;
  if (phase >= 1) phase = 1;
  double seg = phase * double(kps.size() - 1);
  std::size_t i = std::min<std::size_t>(std::size_t(seg), kps.size() - 2);
  Pose p = lerp(kps[i], kps[i + 1], seg - double(i));
  p.hand_x += jitter_x;
  p.hand_y += jitter_y;
  return p;
}

inline void check_motion_ids() {
  for (int m = 0; m < data::kNumMotionPatterns; ++m) (void)motion_keypoints(m);
}

}  // namespace aornet::synth
