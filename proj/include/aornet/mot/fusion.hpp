#pragma once

#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "aornet/core/nn.hpp"
#include "aornet/core/rng.hpp"

// Fusion head over the refined visual tokens: each level (action class token,
// object slots, relation slots) is aligned against its text-prototype matrix
// by cosine similarity, a straight-through one-hot retrieves the best
// prototype per row (gradients ride the softened path), the retrieved text is
// projected and added back residually, and a learned weight vector — masked
// softmax over the action/object/relation slots — mixes everything into one
// vector for the classifier. Masked slots stay exactly zero and receive
// exactly zero mixture weight, so padding can never influence the logits.
namespace aornet::mot {

using json = nlohmann::ordered_json;
using ad::Tape;

struct AlignmentConfig {
  double tau = 5.0;
  bool gumbel_noise = false;     // training draws per-row Gumbel noise; eval keeps it off
  bool straight_through = true;  // false = plain softmax retrieval (ablation mode)

  void validate() const { require(tau > 0.0, "alignment temperature must be positive"); }
};

struct MoTConfig {
  int o_max = 6;
  int r_max = 10;
  int num_classes = 36;
  Eigen::Index d = 64;
  Eigen::Index weight_hidden = 0;  // hidden width of the weight MLP; 0 means d
  bool shared_projection = false;  // one projection MLP across levels instead of per level
  AlignmentConfig align;

  Eigen::Index slots() const { return 1 + Eigen::Index(o_max) + Eigen::Index(r_max); }

  void validate() const {
    require(o_max >= 1 && r_max >= 1, "o_max and r_max must be positive");
    require(num_classes >= 2, "need at least two classes");
    require(d >= 2, "d too small");
    align.validate();
  }
};

// Tape node ids for one unimodal pass. Loss is -1 unless a label was given.
struct MoTOutput {
  int m_a = -1, m_o = -1, m_r = -1;           // similarity matrices
  int mhat_a = -1, mhat_o = -1, mhat_r = -1;  // retrieval weights (one-hot or soft)
  int f_a = -1, f_o = -1, f_r = -1;           // fused features per level
  int w = -1;                                 // mixture weights, 1 x slots
  int a_final = -1;                           // 1 x d
  int logits = -1;                            // 1 x num_classes
  int loss = -1;                              // 1 x 1
};

struct MoTInputs {
  int class_token = -1;      // 1 x d
  int object_tokens = -1;    // o_max x d
  int relation_tokens = -1;  // r_max x d
  std::vector<bool> object_mask;
  std::vector<bool> relation_mask;
};

// One modality's fused state, for the cross-modal mixer.
struct BranchState {
  int f_a = -1, f_o = -1, f_r = -1;
  std::vector<bool> object_mask;
  std::vector<bool> relation_mask;
};

// Per-sample inspection record: which prototype each level picked, and the
// mixture weights. Written as JSON lines by the export tooling.
struct AlignmentRecord {
  int action_choice = -1;
  std::vector<int> object_choices;    // -1 for masked slots
  std::vector<int> relation_choices;  // -1 for masked slots
  std::vector<double> weights;

  json to_json() const {
    return json{{"action_choice", action_choice},
                {"object_choices", object_choices},
                {"relation_choices", relation_choices},
                {"weights", weights}};
  }
};

namespace detail {

inline Mat row_mask(const std::vector<bool>& mask, Eigen::Index cols) {
  Mat m = Mat::Zero(Eigen::Index(mask.size()), cols);
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) m.row(Eigen::Index(i)).setOnes();
  return m;
}

}  // namespace detail

class MoTHead {
 public:
  explicit MoTHead(MoTConfig cfg, std::string prefix = "mot")
      : cfg_(cfg), prefix_(std::move(prefix)) {
    cfg_.validate();
  }

  const MoTConfig& config() const { return cfg_; }

  void init(nn::ParamStore& s) const {
    if (cfg_.shared_projection) {
      projection('a').init(s);
    } else {
      for (char level : {'a', 'o', 'r'}) projection(level).init(s);
    }
    weight_mlp().init(s);
    nn::Linear{prefix_ + ".fc", cfg_.d, cfg_.num_classes}.init(s);
  }

  // Cosine similarity of visual rows against prototype rows. Prototype rows
  // arrive unit-length from the bank; visual rows are normalized here, and
  // masked rows are forced to exact zeros afterwards.
  int similarity(Tape& t, int v, int prototypes, const std::vector<bool>* mask = nullptr) const {
    require(t.val(v).cols() == t.val(prototypes).cols(),
            "DIM_MISMATCH: visual rows have d=" + std::to_string(t.val(v).cols()) +
                ", prototypes d=" + std::to_string(t.val(prototypes).cols()));
    if (mask)
      require(Eigen::Index(mask->size()) == t.val(v).rows(),
              "similarity: mask length vs row count");
    int m = ad::matmul(t, ad::l2_normalize_rows(t, v), ad::transpose(t, prototypes));
    if (mask) m = ad::mask_mul(t, m, detail::row_mask(*mask, t.val(m).cols()));
    return m;
  }

  // Per-row prototype selection. Straight-through: hard one-hot forward with
  // the softmax(M/tau) Jacobian; soft mode emits the softmax itself. Gumbel
  // noise (training only) is drawn here so a seeded stream reproduces runs.
  int differentiable_one_hot(Tape& t, int m, Rng* noise_rng = nullptr) const {
    const Mat* noise_ptr = nullptr;
    Mat noise;
    if (cfg_.align.gumbel_noise) {
      require(noise_rng != nullptr, "gumbel_noise is on but no noise stream was provided");
      noise = Mat(t.val(m).rows(), t.val(m).cols());
      for (Eigen::Index r = 0; r < noise.rows(); ++r)
        for (Eigen::Index c = 0; c < noise.cols(); ++c) noise(r, c) = noise_rng->gumbel();
      noise_ptr = &noise;
    }
    return cfg_.align.straight_through
               ? ad::straight_through_onehot(t, m, cfg_.align.tau, noise_ptr)
               : ad::soft_retrieval(t, m, cfg_.align.tau, noise_ptr);
  }

  // F = V' + MLP(M_hat x T), with masked rows re-zeroed (the projection's
  // bias would otherwise resurrect them).
  int align_fuse(Tape& t, nn::ParamStore& s, char level, int v, int m_hat, int prototypes,
                 const std::vector<bool>* mask = nullptr) const {
    require(t.val(v).cols() == cfg_.d,
            "DIM_MISMATCH: visual rows have d=" + std::to_string(t.val(v).cols()) +
                ", head expects " + std::to_string(cfg_.d));
    require(t.val(m_hat).cols() == t.val(prototypes).rows(),
            "DIM_MISMATCH: retrieval width vs prototype count");
    int retrieved = ad::matmul(t, m_hat, prototypes);
    int f = ad::add(t, v, projection(level).apply(t, s, retrieved));
    if (mask) f = ad::mask_mul(t, f, detail::row_mask(*mask, cfg_.d));
    return f;
  }

  // Flatten [F_A; F_O; F_R], run the weight MLP, and take a masked softmax
  // over the slot logits. The action slot is always live.
  int dynamic_weights(Tape& t, nn::ParamStore& s, int f_a, int f_o, int f_r,
                      const std::vector<bool>& object_mask,
                      const std::vector<bool>& relation_mask) const {
    int logits = slot_logits(t, s, f_a, f_o, f_r);
    return ad::masked_softmax(t, logits, slot_mask(object_mask, relation_mask));
  }

  // Exact convex combination of the slot features under W.
  int fuse_final(Tape& t, int w, int f_a, int f_o, int f_r) const {
    int stacked = ad::concat_rows(t, {f_a, f_o, f_r});
    require(t.val(w).rows() == 1 && t.val(w).cols() == t.val(stacked).rows(),
            "fuse_final: W length vs slot count");
    return ad::matmul(t, w, stacked);
  }

  std::pair<int, int> classify_and_loss(Tape& t, nn::ParamStore& s, int a_final, int label,
                                        double eps) const {
    require(eps >= 0.0 && eps < 1.0, "smoothing must be in [0,1)");
    if (label < 0 || label >= cfg_.num_classes)
      throw ValidationError("LABEL_OUT_OF_RANGE: " + std::to_string(label) + " not in [0, " +
                            std::to_string(cfg_.num_classes) + ")");
    int logits = nn::Linear{prefix_ + ".fc", cfg_.d, cfg_.num_classes}.apply(t, s, a_final);
    return {logits, ad::cross_entropy_smoothed(t, logits, label, eps)};
  }

  int classify(Tape& t, nn::ParamStore& s, int a_final) const {
    return nn::Linear{prefix_ + ".fc", cfg_.d, cfg_.num_classes}.apply(t, s, a_final);
  }

  // Whole unimodal pass. Prototype matrices are supplied as tape nodes so
  // callers can decide whether gradients reach the bank.
  MoTOutput forward(Tape& t, nn::ParamStore& s, const MoTInputs& in, int t_a, int t_o, int t_r,
                    Rng* noise_rng = nullptr, int label = -1, double eps = 0.1) const {
    require(Eigen::Index(in.object_mask.size()) == cfg_.o_max,
            "forward: object mask length vs o_max");
    require(Eigen::Index(in.relation_mask.size()) == cfg_.r_max,
            "forward: relation mask length vs r_max");
    require(t.val(in.class_token).rows() == 1, "forward: class token must be a single row");
    require(t.val(in.object_tokens).rows() == cfg_.o_max, "forward: object row count vs o_max");
    require(t.val(in.relation_tokens).rows() == cfg_.r_max,
            "forward: relation row count vs r_max");

    MoTOutput out;
    out.m_a = similarity(t, in.class_token, t_a);
    out.m_o = similarity(t, in.object_tokens, t_o, &in.object_mask);
    out.m_r = similarity(t, in.relation_tokens, t_r, &in.relation_mask);
    out.mhat_a = differentiable_one_hot(t, out.m_a, noise_rng);
    out.mhat_o = differentiable_one_hot(t, out.m_o, noise_rng);
    out.mhat_r = differentiable_one_hot(t, out.m_r, noise_rng);
    out.f_a = align_fuse(t, s, 'a', in.class_token, out.mhat_a, t_a);
    out.f_o = align_fuse(t, s, 'o', in.object_tokens, out.mhat_o, t_o, &in.object_mask);
    out.f_r = align_fuse(t, s, 'r', in.relation_tokens, out.mhat_r, t_r, &in.relation_mask);
    out.w = dynamic_weights(t, s, out.f_a, out.f_o, out.f_r, in.object_mask, in.relation_mask);
    out.a_final = fuse_final(t, out.w, out.f_a, out.f_o, out.f_r);
    if (label >= 0) {
      auto [logits, loss] = classify_and_loss(t, s, out.a_final, label, eps);
      out.logits = logits;
      out.loss = loss;
    } else {
      out.logits = classify(t, s, out.a_final);
    }
    return out;
  }

  // Cross-modal mixing: every branch's slot logits come from the same weight
  // MLP, then one softmax runs across the concatenated slot list, so with a
  // single branch this is bit-identical to dynamic_weights + fuse_final.
  std::pair<int, int> multimodal_fuse(Tape& t, nn::ParamStore& s,
                                      const std::vector<BranchState>& branches) const {
    require(!branches.empty(), "multimodal_fuse: no branches");
    std::vector<int> logit_parts, stack_parts;
    Mat mask(1, Eigen::Index(branches.size()) * cfg_.slots());
    Eigen::Index col = 0;
    for (const auto& b : branches) {
      for (int f : {b.f_a, b.f_o, b.f_r})
        if (t.val(f).cols() != cfg_.d)
          throw ValidationError("BRANCH_DIM_MISMATCH: branch features have d=" +
                                std::to_string(t.val(f).cols()) + ", head expects " +
                                std::to_string(cfg_.d));
      logit_parts.push_back(slot_logits(t, s, b.f_a, b.f_o, b.f_r));
      stack_parts.push_back(ad::concat_rows(t, {b.f_a, b.f_o, b.f_r}));
      mask.middleCols(col, cfg_.slots()) = slot_mask(b.object_mask, b.relation_mask);
      col += cfg_.slots();
    }
    int w = ad::masked_softmax(t, ad::concat_cols(t, logit_parts), mask);
    int stacked = ad::concat_rows(t, stack_parts);
    return {w, ad::matmul(t, w, stacked)};
  }

  // Reads the forward values back out for inspection/export.
  AlignmentRecord extract_alignment(const Tape& t, const MoTOutput& out,
                                    const std::vector<bool>& object_mask,
                                    const std::vector<bool>& relation_mask) const {
    AlignmentRecord rec;
    rec.action_choice = row_argmax(t.val(out.mhat_a), 0);
    for (int i = 0; i < cfg_.o_max; ++i)
      rec.object_choices.push_back(object_mask[std::size_t(i)]
                                       ? row_argmax(t.val(out.mhat_o), i)
                                       : -1);
    for (int i = 0; i < cfg_.r_max; ++i)
      rec.relation_choices.push_back(relation_mask[std::size_t(i)]
                                         ? row_argmax(t.val(out.mhat_r), i)
                                         : -1);
    const Mat& w = t.val(out.w);
    rec.weights.assign(w.data(), w.data() + w.size());
    return rec;
  }

 private:
  nn::Mlp projection(char level) const {
    std::string name =
        cfg_.shared_projection ? prefix_ + ".proj" : prefix_ + ".proj_" + std::string(1, level);
    return nn::Mlp{std::move(name), {cfg_.d, cfg_.d, cfg_.d}, nn::Act::kGelu};
  }

  nn::Mlp weight_mlp() const {
    Eigen::Index hidden = cfg_.weight_hidden > 0 ? cfg_.weight_hidden : cfg_.d;
    return nn::Mlp{prefix_ + ".wmlp", {cfg_.slots() * cfg_.d, hidden, cfg_.slots()},
                   nn::Act::kGelu};
  }

  int slot_logits(Tape& t, nn::ParamStore& s, int f_a, int f_o, int f_r) const {
    require(t.val(f_a).rows() == 1, "DIM_MISMATCH: F_A must be the single class-token row");
    require(t.val(f_o).rows() == cfg_.o_max && t.val(f_r).rows() == cfg_.r_max,
            "DIM_MISMATCH: slot feature row counts");
    for (int f : {f_a, f_o, f_r})
      require(t.val(f).cols() == cfg_.d, "DIM_MISMATCH: slot feature width");
    int flat = ad::flatten(t, ad::concat_rows(t, {f_a, f_o, f_r}));
    return weight_mlp().apply(t, s, flat);
  }

  Mat slot_mask(const std::vector<bool>& object_mask,
                const std::vector<bool>& relation_mask) const {
    require(Eigen::Index(object_mask.size()) == cfg_.o_max, "object mask length vs o_max");
    require(Eigen::Index(relation_mask.size()) == cfg_.r_max, "relation mask length vs r_max");
    Mat m = Mat::Zero(1, cfg_.slots());
    m(0, 0) = 1.0;  // the action slot is never masked
    for (int i = 0; i < cfg_.o_max; ++i) m(0, 1 + i) = object_mask[std::size_t(i)] ? 1.0 : 0.0;
    for (int i = 0; i < cfg_.r_max; ++i)
      m(0, 1 + cfg_.o_max + i) = relation_mask[std::size_t(i)] ? 1.0 : 0.0;
    return m;
  }

  static int row_argmax(const Mat& m, int row) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < m.cols(); ++c)
      if (m(row, c) > m(row, best)) best = c;
    return int(best);
  }

  MoTConfig cfg_;
  std::string prefix_;
};

}  // namespace aornet::mot
