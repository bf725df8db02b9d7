#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "aornet/backbone/encoder.hpp"
#include "aornet/coa/roi_align.hpp"
#include "aornet/core/nn.hpp"
#include "aornet/data/types.hpp"

namespace aornet::coa {

using ad::Tape;

// Knobs for the object/relation reasoning stack. r_max = 0 means "derive from
// o_max": with one person slot reserved, o_max−1 non-person slots pair against
// at most two human slots, giving 2·(o_max−1).
struct CoAConfig {
  int o_max = 6;
  int r_max = 0;
  int roi_out = 3;
  int heads = 4;
  int relation_layers = 5;    // parameterized layers; the last one projects to d
  int relation_hidden = 512;  // toy presets drop this to 64

  int resolved_r_max() const { return r_max > 0 ? r_max : 2 * (o_max - 1); }

  void validate() const {
    require(o_max >= 1, "CoA: o_max must be >= 1");
    require(resolved_r_max() >= 1, "CoA: r_max must be >= 1");
    require(roi_out >= 1, "CoA: roi_out must be >= 1");
    require(heads >= 1, "CoA: heads must be >= 1");
    require(relation_layers >= 1, "CoA: relation encoder needs at least one layer");
    require(relation_hidden >= 1, "CoA: relation hidden width must be >= 1");
  }
};

// Fixed o_max slots, each either empty or bound to one track, with that
// track's box (when present) in every sampled frame. Slot order is sorted by
// track_id so downstream features are stable under track enumeration order.
struct SelectedObjects {
  int o_max = 0;
  int frame_count = 0;
  std::vector<int> track_ids;      // per slot, -1 when empty
  std::vector<int> class_indices;  // per slot, -1 when empty
  std::vector<bool> slot_valid;
  std::vector<std::vector<std::optional<data::Box>>> boxes;  // [slot][sampled frame]
};

// Ranks tracks by mean box area over the sampled frames (a frame without a
// box counts as zero area), keeps the top o_max with ties going to the lower
// track_id, then lays the survivors out in track_id order. Tracks with no box
// in any sampled frame never occupy a slot.
inline SelectedObjects select_objects(const data::ObjectTrackSet& tracks,
                                      const std::vector<int>& frame_index_map, int o_max) {
  require(o_max >= 1, "select_objects: o_max must be >= 1");
  require(!frame_index_map.empty(), "select_objects: no sampled frames");
  const int tf = int(frame_index_map.size());

  struct Candidate {
    int track_id = 0;
    int class_index = 0;
    double mean_area = 0.0;
    std::vector<std::optional<data::Box>> boxes;
  };
  std::vector<Candidate> cands;
  for (const auto& tr : tracks.tracks) {
    Candidate c{tr.track_id, tr.class_index, 0.0, {}};
    c.boxes.assign(std::size_t(tf), std::nullopt);
    double area_sum = 0.0;
    bool any = false;
    for (int f = 0; f < tf; ++f) {
      const int src = frame_index_map[std::size_t(f)];
      if (src >= 0 && src < tr.num_frames() && tr.boxes[std::size_t(src)].has_value()) {
        c.boxes[std::size_t(f)] = tr.boxes[std::size_t(src)];
        area_sum += tr.boxes[std::size_t(src)]->area();
        any = true;
      }
    }
    if (!any) continue;
    c.mean_area = area_sum / double(tf);
    cands.push_back(std::move(c));
  }
  std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    if (a.mean_area != b.mean_area) return a.mean_area > b.mean_area;
    return a.track_id < b.track_id;
  });
  if (int(cands.size()) > o_max) cands.resize(std::size_t(o_max));
  std::sort(cands.begin(), cands.end(),
            [](const Candidate& a, const Candidate& b) { return a.track_id < b.track_id; });

  SelectedObjects sel;
  sel.o_max = o_max;
  sel.frame_count = tf;
  sel.track_ids.assign(std::size_t(o_max), -1);
  sel.class_indices.assign(std::size_t(o_max), -1);
  sel.slot_valid.assign(std::size_t(o_max), false);
  sel.boxes.assign(std::size_t(o_max),
                   std::vector<std::optional<data::Box>>(std::size_t(tf), std::nullopt));
  for (std::size_t i = 0; i < cands.size(); ++i) {
    sel.track_ids[i] = cands[i].track_id;
    sel.class_indices[i] = cands[i].class_index;
    sel.slot_valid[i] = true;
    sel.boxes[i] = std::move(cands[i].boxes);
  }
  return sel;
}

// 0/1 row mask as a matrix the tape can multiply with.
inline Mat rows_mask_matrix(const std::vector<bool>& mask, Eigen::Index d) {
  Mat m = Mat::Zero(Eigen::Index(mask.size()), d);
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) m.row(Eigen::Index(i)).setOnes();
  return m;
}

struct ObjectTokens {
  int id = -1;  // o_max × d node; masked rows are exactly zero
  std::vector<bool> mask;
  std::vector<int> class_indices;
  std::vector<int> track_ids;
};

struct RefinedTokens {
  int class_token = -1;    // 1 × d
  int action_tokens = -1;  // T·H·W × d
  int object_tokens = -1;  // o_max × d, masked rows re-zeroed
};

struct RelationPairs {
  std::vector<std::pair<int, int>> pairs;  // (human slot, object slot), at most r_max
  std::vector<bool> mask;                  // r_max slots
  int features = -1;                       // r_max × 2d node; masked rows zero
  int total_pairs = 0;                     // before truncation
  bool overflow = false;
};

struct RefinedRelations {
  int id = -1;  // r_max × d
  bool attention_skipped = false;  // NO_VALID_OBJECTS: cross-attention had no keys
};

// Everything downstream consumers need from one pass over one clip's grid.
struct CoAOutput {
  int class_token = -1;
  int action_tokens = -1;
  int object_tokens = -1;
  int relation_tokens = -1;
  std::vector<bool> object_mask;
  std::vector<bool> relation_mask;
  std::vector<int> object_classes;
  std::vector<int> object_track_ids;
  std::vector<std::pair<int, int>> relation_pairs;
  int total_pairs = 0;
  bool relation_overflow = false;
  bool relation_attention_skipped = false;
};

// Enumerates (human, non-human) slot pairs over valid slots, ordered by
// (human slot, object slot), truncated at r_max with the overflow recorded.
// Each surviving pair's feature row is the concatenation [human ; object].
inline RelationPairs pair_relations(Tape& t, int object_tokens,
                                    const std::vector<int>& class_indices,
                                    const std::vector<bool>& mask,
                                    const std::vector<int>& human_classes, int r_max) {
  require(r_max >= 1, "pair_relations: r_max must be >= 1");
  const Eigen::Index n = t.val(object_tokens).rows();
  require(n == Eigen::Index(mask.size()) && n == Eigen::Index(class_indices.size()),
          "pair_relations: slot metadata disagrees with the token matrix");
  auto is_human = [&](int cls) {
    return std::find(human_classes.begin(), human_classes.end(), cls) != human_classes.end();
  };

  RelationPairs out;
  std::vector<std::pair<int, int>> all;
  for (int h = 0; h < int(n); ++h) {
    if (!mask[std::size_t(h)] || !is_human(class_indices[std::size_t(h)])) continue;
    for (int o = 0; o < int(n); ++o) {
      if (!mask[std::size_t(o)] || is_human(class_indices[std::size_t(o)])) continue;
      all.emplace_back(h, o);
    }
  }
  out.total_pairs = int(all.size());
  if (int(all.size()) > r_max) {
    out.overflow = true;
    all.resize(std::size_t(r_max));
  }
  out.pairs = all;

  const Eigen::Index d = t.val(object_tokens).cols();
  std::vector<int> rows;
  out.mask.assign(std::size_t(r_max), false);
  for (int k = 0; k < r_max; ++k) {
    if (k < int(all.size())) {
      const auto [h, o] = all[std::size_t(k)];
      rows.push_back(ad::concat_cols(t, {ad::slice_rows(t, object_tokens, h, 1),
                                         ad::slice_rows(t, object_tokens, o, 1)}));
      out.mask[std::size_t(k)] = true;
    } else {
      rows.push_back(t.input(Mat::Zero(1, 2 * d)));
    }
  }
  out.features = ad::concat_rows(t, std::move(rows));
  return out;
}

// The parameterized stack: RoIAlign-fed object tokens, one joint MHSA over
// [class; spatial; objects], human-object pairing, the relation MLP, and one
// MHCA pass of relations over valid objects.
class CoAStack {
 public:
  CoAStack(CoAConfig cfg, Eigen::Index d, std::string prefix)
      : cfg_(cfg), d_(d), prefix_(std::move(prefix)) {
    cfg_.validate();
    require(d_ >= 1 && d_ % cfg_.heads == 0, "CoA: d must divide by heads");
  }

  const CoAConfig& config() const { return cfg_; }
  Eigen::Index dim() const { return d_; }

  void init(nn::ParamStore& s) const {
    object_mlp().init(s);
    nn::LayerNorm{prefix_ + ".joint_ln", d_}.init(s);
    nn::MultiheadAttention{prefix_ + ".joint_attn", d_, cfg_.heads}.init(s);
    relation_mlp().init(s);
    nn::LayerNorm{prefix_ + ".rel_ln_q", d_}.init(s);
    nn::LayerNorm{prefix_ + ".rel_ln_kv", d_}.init(s);
    nn::MultiheadAttention{prefix_ + ".rel_attn", d_, cfg_.heads}.init(s);
  }

  // Per valid slot, every sampled frame with a box contributes one sample:
  // the box pooled over the token-time slice floor(f·T/T_f), flattened, and
  // projected by the shared two-layer MLP; the slot token is the elementwise
  // max over those samples. Empty slots come out as exact zero rows.
  ObjectTokens object_tokens(Tape& t, nn::ParamStore& s, const backbone::TokenGrid& grid,
                             const SelectedObjects& sel) const {
    require(grid.d == int(d_), "DIM_MISMATCH: grid d=" + std::to_string(grid.d) +
                                   " but the stack is built for d=" + std::to_string(d_));
    require(sel.frame_count >= 1, "object_tokens: selection has no sampled frames");
    const Eigen::Index cells = Eigen::Index(grid.H) * grid.W;
    ObjectTokens out;
    std::vector<int> rows;
    for (int slot = 0; slot < sel.o_max; ++slot) {
      std::vector<int> samples;
      for (int f = 0; f < sel.frame_count; ++f) {
        const auto& box = sel.boxes[std::size_t(slot)][std::size_t(f)];
        if (!box.has_value()) continue;
        const int ts = f * grid.T / sel.frame_count;
        int lattice = ad::slice_rows(t, grid.id, 1 + Eigen::Index(ts) * cells, cells);
        const GridBox gb = data::box_to_grid(*box, grid.W, grid.H);
        int pooled = roi_align(t, lattice, grid.H, grid.W, gb, cfg_.roi_out);
        samples.push_back(object_mlp().apply(t, s, ad::flatten(t, pooled)));
      }
      if (samples.empty()) {
        rows.push_back(t.input(Mat::Zero(1, d_)));
        out.mask.push_back(false);
      } else {
        rows.push_back(ad::elementwise_max(t, std::move(samples)));
        out.mask.push_back(true);
      }
    }
    out.id = ad::concat_rows(t, std::move(rows));
    out.class_indices = sel.class_indices;
    out.track_ids = sel.track_ids;
    return out;
  }

  // One pre-norm residual self-attention pass over [class; spatial; objects].
  // Masked object slots are excluded from the key set and their output rows
  // re-zeroed, so they neither influence nor carry anything.
  RefinedTokens joint_refine(Tape& t, nn::ParamStore& s, int class_token, int action_tokens,
                             int object_tokens, const std::vector<bool>& object_mask) const {
    check_dim(t, class_token, "class token");
    check_dim(t, action_tokens, "action tokens");
    check_dim(t, object_tokens, "object tokens");
    require(t.val(class_token).rows() == 1, "joint_refine: class token must be a single row");
    const Eigen::Index n_act = t.val(action_tokens).rows();
    const Eigen::Index n_obj = t.val(object_tokens).rows();
    require(n_obj == Eigen::Index(object_mask.size()),
            "joint_refine: mask length disagrees with object token rows");

    int x = ad::concat_rows(t, {class_token, action_tokens, object_tokens});
    Vec key_mask = Vec::Ones(1 + n_act + n_obj);
    for (Eigen::Index i = 0; i < n_obj; ++i)
      key_mask(1 + n_act + i) = object_mask[std::size_t(i)] ? 1.0 : 0.0;
    int h = nn::LayerNorm{prefix_ + ".joint_ln", d_}.apply(t, s, x);
    h = nn::MultiheadAttention{prefix_ + ".joint_attn", d_, cfg_.heads}.apply(t, s, h, h,
                                                                              &key_mask);
    x = ad::add(t, x, h);

    RefinedTokens out;
    out.class_token = ad::slice_rows(t, x, 0, 1);
    out.action_tokens = ad::slice_rows(t, x, 1, n_act);
    int obj = ad::slice_rows(t, x, 1 + n_act, n_obj);
    out.object_tokens = ad::mask_mul(t, obj, rows_mask_matrix(object_mask, d_));
    return out;
  }

  // Hidden layers with activation, then a final linear map back to d; masked
  // rows are forced to zero (the bias path would otherwise leak into them).
  int relation_encode(Tape& t, nn::ParamStore& s, int pair_features,
                      const std::vector<bool>& mask) const {
    require(t.val(pair_features).cols() == 2 * d_,
            "DIM_MISMATCH: relation encoder expects width " + std::to_string(2 * d_) + ", got " +
                std::to_string(t.val(pair_features).cols()));
    require(t.val(pair_features).rows() == Eigen::Index(mask.size()),
            "relation_encode: mask length disagrees with feature rows");
    int x = relation_mlp().apply(t, s, pair_features);
    return ad::mask_mul(t, x, rows_mask_matrix(mask, d_));
  }

  // Relations query the valid object tokens through one pre-norm residual
  // cross-attention pass. With no valid objects there is nothing to attend
  // over; the tokens pass through untouched and the skip is flagged.
  RefinedRelations relation_refine(Tape& t, nn::ParamStore& s, int relation_tokens,
                                   int object_tokens, const std::vector<bool>& object_mask,
                                   const std::vector<bool>& relation_mask,
                                   std::vector<Mat>* attn_out = nullptr) const {
    check_dim(t, relation_tokens, "relation tokens");
    check_dim(t, object_tokens, "object tokens");
    require(t.val(object_tokens).rows() == Eigen::Index(object_mask.size()),
            "relation_refine: object mask length mismatch");
    require(t.val(relation_tokens).rows() == Eigen::Index(relation_mask.size()),
            "relation_refine: relation mask length mismatch");

    RefinedRelations out;
    const bool any_object =
        std::find(object_mask.begin(), object_mask.end(), true) != object_mask.end();
    if (!any_object) {
      out.id = relation_tokens;
      out.attention_skipped = true;
      return out;
    }
    Vec key_mask(Eigen::Index(object_mask.size()));
    for (Eigen::Index i = 0; i < key_mask.size(); ++i)
      key_mask(i) = object_mask[std::size_t(i)] ? 1.0 : 0.0;
    int q = nn::LayerNorm{prefix_ + ".rel_ln_q", d_}.apply(t, s, relation_tokens);
    int kv = nn::LayerNorm{prefix_ + ".rel_ln_kv", d_}.apply(t, s, object_tokens);
    int h = nn::MultiheadAttention{prefix_ + ".rel_attn", d_, cfg_.heads}.apply(
        t, s, q, kv, &key_mask, attn_out);
    int x = ad::add(t, relation_tokens, h);
    out.id = ad::mask_mul(t, x, rows_mask_matrix(relation_mask, d_));
    return out;
  }

  CoAOutput apply(Tape& t, nn::ParamStore& s, const backbone::TokenGrid& grid,
                  const SelectedObjects& sel, const std::vector<int>& human_classes) const {
    require(sel.o_max == cfg_.o_max,
            "CoA: selection built for o_max=" + std::to_string(sel.o_max) +
                " but the stack is configured for " + std::to_string(cfg_.o_max));
    ObjectTokens obj = object_tokens(t, s, grid, sel);
    int cls_in = ad::slice_rows(t, grid.id, 0, 1);
    int act_in = ad::slice_rows(t, grid.id, 1, grid.token_count());
    RefinedTokens refined = joint_refine(t, s, cls_in, act_in, obj.id, obj.mask);
    RelationPairs rp = pair_relations(t, refined.object_tokens, obj.class_indices, obj.mask,
                                      human_classes, cfg_.resolved_r_max());
    int encoded = relation_encode(t, s, rp.features, rp.mask);
    RefinedRelations rr =
        relation_refine(t, s, encoded, refined.object_tokens, obj.mask, rp.mask);

    CoAOutput out;
    out.class_token = refined.class_token;
    out.action_tokens = refined.action_tokens;
    out.object_tokens = refined.object_tokens;
    out.relation_tokens = rr.id;
    out.object_mask = obj.mask;
    out.relation_mask = rp.mask;
    out.object_classes = obj.class_indices;
    out.object_track_ids = obj.track_ids;
    out.relation_pairs = rp.pairs;
    out.total_pairs = rp.total_pairs;
    out.relation_overflow = rp.overflow;
    out.relation_attention_skipped = rr.attention_skipped;
    return out;
  }

  nn::Mlp object_mlp() const {
    const Eigen::Index roi_len = Eigen::Index(cfg_.roi_out) * cfg_.roi_out * d_;
    return nn::Mlp{prefix_ + ".obj_mlp", {roi_len, d_, d_}, nn::Act::kGelu};
  }

  nn::Mlp relation_mlp() const {
    std::vector<Eigen::Index> dims;
    dims.push_back(2 * d_);
    for (int i = 0; i < cfg_.relation_layers - 1; ++i) dims.push_back(cfg_.relation_hidden);
    dims.push_back(d_);
    return nn::Mlp{prefix_ + ".rel_mlp", std::move(dims), nn::Act::kGelu};
  }

 private:
  void check_dim(Tape& t, int id, const std::string& what) const {
    require(t.val(id).cols() == d_, "DIM_MISMATCH: " + what + " has width " +
                                        std::to_string(t.val(id).cols()) + ", expected " +
                                        std::to_string(d_));
  }

  CoAConfig cfg_;
  Eigen::Index d_;
  std::string prefix_;
};

}  // namespace aornet::coa
