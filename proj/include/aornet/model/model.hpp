#pragma once

#include <map>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "aornet/backbone/encoder.hpp"
#include "aornet/backbone/sampler.hpp"
#include "aornet/bank/bank.hpp"
#include "aornet/coa/stack.hpp"
#include "aornet/core/checkpoint.hpp"
#include "aornet/mot/fusion.hpp"

// The assembled recognizer. Three depths of the same network share one config:
//   base  — encoder only, classifier on the class token
//   coa   — encoder + object/relation reasoning, classifier on pooled tokens
//   full  — encoder + reasoning + prototype alignment and dynamic fusion
// Every modality gets its own encoder and reasoning stack (same architecture,
// disjoint parameters); the fusion head and classifier are shared, and the
// cross-modal mixer runs even for one modality (that case is bit-identical to
// the unimodal path).
namespace aornet::model {

using json = nlohmann::ordered_json;
using ad::Tape;

inline int modality_channels(const std::string& m) {
  if (m == "RGB") return 3;
  if (m == "IR" || m == "Depth") return 1;
  throw ValidationError("unknown modality: " + m);
}

struct ModelConfig {
  std::string variant = "full";  // base | coa | full
  std::vector<std::string> modalities = {"RGB"};
  int num_classes = 36;
  std::vector<int> human_classes = {0, 10};  // taxonomy indices treated as people
  backbone::EncoderConfig encoder;
  coa::CoAConfig coa;
  mot::AlignmentConfig align;
  Eigen::Index weight_hidden = 0;
  bool shared_projection = false;

  mot::MoTConfig mot_config() const {
    mot::MoTConfig m;
    m.o_max = coa.o_max;
    m.r_max = coa.resolved_r_max();
    m.num_classes = num_classes;
    m.d = encoder.d;
    m.weight_hidden = weight_hidden;
    m.shared_projection = shared_projection;
    m.align = align;
    return m;
  }

  backbone::EncoderConfig encoder_for(const std::string& modality) const {
    backbone::EncoderConfig e = encoder;
    e.channels = modality_channels(modality);
    return e;
  }

  void validate() const {
    require(variant == "base" || variant == "coa" || variant == "full",
            "model variant must be base, coa, or full");
    require(!modalities.empty(), "model needs at least one modality");
    for (std::size_t i = 0; i < modalities.size(); ++i) {
      (void)modality_channels(modalities[i]);
      for (std::size_t j = i + 1; j < modalities.size(); ++j)
        require(modalities[i] != modalities[j], "duplicate modality: " + modalities[i]);
    }
    require(num_classes >= 2, "need at least two classes");
    for (const auto& m : modalities) encoder_for(m).validate();
    if (variant != "base") coa.validate();
    if (variant == "full") mot_config().validate();
  }

  json to_json() const {
    return json{{"variant", variant},
                {"modalities", modalities},
                {"num_classes", num_classes},
                {"human_classes", human_classes},
                {"encoder",
                 {{"input_size", encoder.input_size},
                  {"frame_count", encoder.frame_count},
                  {"temporal_patch", encoder.temporal_patch},
                  {"spatial_patch", encoder.spatial_patch},
                  {"d", encoder.d},
                  {"heads", encoder.heads},
                  {"blocks", encoder.blocks},
                  {"mlp_ratio", encoder.mlp_ratio}}},
                {"coa",
                 {{"o_max", coa.o_max},
                  {"r_max", coa.r_max},
                  {"roi_out", coa.roi_out},
                  {"heads", coa.heads},
                  {"relation_layers", coa.relation_layers},
                  {"relation_hidden", coa.relation_hidden}}},
                {"align",
                 {{"tau", align.tau},
                  {"gumbel_noise", align.gumbel_noise},
                  {"straight_through", align.straight_through}}},
                {"weight_hidden", weight_hidden},
                {"shared_projection", shared_projection}};
  }

  static ModelConfig from_json(const json& j);
};

// Named presets; anything not covered is plain JSON config. Declared below
// ModelConfig so from_json can start from a preset.
inline ModelConfig preset_model(const std::string& name);

inline ModelConfig ModelConfig::from_json(const json& j) {
  ModelConfig c;
  if (j.contains("preset")) c = preset_model(j.at("preset").get<std::string>());
  if (j.contains("variant")) c.variant = j.at("variant").get<std::string>();
  if (j.contains("modalities"))
    c.modalities = j.at("modalities").get<std::vector<std::string>>();
  if (j.contains("num_classes")) c.num_classes = j.at("num_classes").get<int>();
  if (j.contains("human_classes"))
    c.human_classes = j.at("human_classes").get<std::vector<int>>();
  if (j.contains("encoder")) {
    const auto& e = j.at("encoder");
    if (e.contains("input_size")) c.encoder.input_size = e.at("input_size").get<int>();
    if (e.contains("frame_count")) c.encoder.frame_count = e.at("frame_count").get<int>();
    if (e.contains("temporal_patch")) c.encoder.temporal_patch = e.at("temporal_patch").get<int>();
    if (e.contains("spatial_patch")) c.encoder.spatial_patch = e.at("spatial_patch").get<int>();
    if (e.contains("d")) c.encoder.d = e.at("d").get<int>();
    if (e.contains("heads")) c.encoder.heads = e.at("heads").get<int>();
    if (e.contains("blocks")) c.encoder.blocks = e.at("blocks").get<int>();
    if (e.contains("mlp_ratio")) c.encoder.mlp_ratio = e.at("mlp_ratio").get<int>();
  }
  if (j.contains("coa")) {
    const auto& o = j.at("coa");
    if (o.contains("o_max")) c.coa.o_max = o.at("o_max").get<int>();
    if (o.contains("r_max")) c.coa.r_max = o.at("r_max").get<int>();
    if (o.contains("roi_out")) c.coa.roi_out = o.at("roi_out").get<int>();
    if (o.contains("heads")) c.coa.heads = o.at("heads").get<int>();
    if (o.contains("relation_layers")) c.coa.relation_layers = o.at("relation_layers").get<int>();
    if (o.contains("relation_hidden")) c.coa.relation_hidden = o.at("relation_hidden").get<int>();
  }
  if (j.contains("align")) {
    const auto& a = j.at("align");
    if (a.contains("tau")) c.align.tau = a.at("tau").get<double>();
    if (a.contains("gumbel_noise")) c.align.gumbel_noise = a.at("gumbel_noise").get<bool>();
    if (a.contains("straight_through"))
      c.align.straight_through = a.at("straight_through").get<bool>();
  }
  if (j.contains("weight_hidden"))
    c.weight_hidden = j.at("weight_hidden").get<Eigen::Index>();
  if (j.contains("shared_projection"))
    c.shared_projection = j.at("shared_projection").get<bool>();
  c.validate();
  return c;
}

inline ModelConfig preset_model(const std::string& name) {
  ModelConfig c;
  if (name == "reference") {
    // Full-scale geometry: 224px, (2,16,16) patches -> (4,14,14) tokens, d=768.
    c.encoder.input_size = 224;
    c.encoder.frame_count = 8;
    c.encoder.temporal_patch = 2;
    c.encoder.spatial_patch = 16;
    c.encoder.d = 768;
    c.encoder.heads = 12;
    c.encoder.blocks = 2;
    c.encoder.mlp_ratio = 4;
    c.coa.o_max = 6;
    c.coa.roi_out = 3;
    c.coa.heads = 8;
    c.coa.relation_layers = 5;
    c.coa.relation_hidden = 512;
    return c;
  }
  if (name == "toy") {
    // Desk-scale: 48px frames, (4,12,12) patches -> (2,4,4) tokens, d=64.
    c.encoder.input_size = 48;
    c.encoder.frame_count = 8;
    c.encoder.temporal_patch = 4;
    c.encoder.spatial_patch = 12;
    c.encoder.d = 64;
    c.encoder.heads = 4;
    c.encoder.blocks = 2;
    c.encoder.mlp_ratio = 2;
    c.coa.o_max = 6;
    c.coa.roi_out = 2;
    c.coa.heads = 4;
    c.coa.relation_layers = 5;
    c.coa.relation_hidden = 64;
    return c;
  }
  if (name == "grad-probe") {
    // Smallest differentiable configuration: (2,2,2) tokens, d=16, 4 classes.
    c.encoder.input_size = 16;
    c.encoder.frame_count = 4;
    c.encoder.temporal_patch = 2;
    c.encoder.spatial_patch = 8;
    c.encoder.d = 16;
    c.encoder.heads = 2;
    c.encoder.blocks = 1;
    c.encoder.mlp_ratio = 2;
    c.coa.o_max = 2;
    c.coa.r_max = 2;
    c.coa.roi_out = 2;
    c.coa.heads = 2;
    c.coa.relation_layers = 2;
    c.coa.relation_hidden = 16;
    c.num_classes = 4;
    return c;
  }
  throw ValidationError("unknown model preset: " + name);
}

// One clip ready for the model: sampled pixels plus tracks remapped onto the
// sampled timeline (same flip as the pixels), for every modality the model
// consumes. The label is at whatever level the run trains.
struct ModelSample {
  std::string clip_id;
  int label = -1;
  std::map<std::string, backbone::SampledClip> clips;
  std::map<std::string, data::ObjectTrackSet> tracks;
};

// Prototype matrices placed on a tape. Gradients stop at the bank: prototypes
// are fixed text embeddings, not parameters.
struct BankNodes {
  int t_a = -1, t_o = -1, t_r = -1;
};

inline BankNodes put_bank(Tape& t, const bank::PrototypeBank& b) {
  return {t.input(b.t_a), t.input(b.t_o), t.input(b.t_r)};
}

struct ForwardOutput {
  int logits = -1;
  int loss = -1;
  int a_final = -1;  // full variant only
  int w = -1;        // full variant only: mixture weights over all branch slots
  std::map<std::string, coa::CoAOutput> coa;     // coa/full variants
  std::map<std::string, mot::MoTOutput> levels;  // full variant: per-level ids
};

class AORNet {
 public:
  explicit AORNet(ModelConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

  const ModelConfig& config() const { return cfg_; }
  json arch() const { return cfg_.to_json(); }

  void init(nn::ParamStore& s) const {
    for (const auto& m : cfg_.modalities) {
      encoder(m).init(s);
      if (cfg_.variant != "base") stack(m).init(s);
    }
    if (cfg_.variant == "full") {
      mot::MoTHead(cfg_.mot_config(), "mot").init(s);
    } else {
      nn::Linear{"head.fc", cfg_.encoder.d, cfg_.num_classes}.init(s);
    }
  }

  // `noise` feeds the Gumbel draws; pass nullptr for evaluation and the
  // alignment becomes deterministic regardless of the config flag. `label`
  // of -1 skips the loss. `attn_sink`, when given, collects the last
  // encoder block's per-head attention for each modality.
  ForwardOutput forward(Tape& t, nn::ParamStore& s, const ModelSample& sample,
                        const BankNodes* bank = nullptr, Rng* noise = nullptr, int label = -1,
                        double eps = 0.1,
                        std::map<std::string, std::vector<Mat>>* attn_sink = nullptr) const {
    ForwardOutput out;
    std::vector<int> readouts;                   // base/coa: one pooled row per modality
    std::vector<mot::BranchState> branches;      // full: one branch per modality
    mot::MoTHead head = noise_adjusted_head(noise != nullptr);

    for (const auto& m : cfg_.modalities) {
      require(sample.clips.count(m), "sample for clip " + sample.clip_id +
                                         " is missing modality " + m);
      std::vector<Mat>* attn = nullptr;
      if (attn_sink) attn = &(*attn_sink)[m];
      backbone::TokenGrid grid = encoder(m).encode(t, s, sample.clips.at(m), attn);

      if (cfg_.variant == "base") {
        readouts.push_back(ad::slice_rows(t, grid.id, 0, 1));
        continue;
      }

      require(sample.tracks.count(m), "sample for clip " + sample.clip_id +
                                          " is missing tracks for modality " + m);
      const auto& tr = sample.tracks.at(m);
      std::vector<int> frame_ids(std::size_t(grid_frames()), 0);
      std::iota(frame_ids.begin(), frame_ids.end(), 0);
      coa::SelectedObjects sel = coa::select_objects(tr, frame_ids, cfg_.coa.o_max);
      coa::CoAOutput co = stack(m).apply(t, s, grid, sel, cfg_.human_classes);

      if (cfg_.variant == "coa") {
        int pooled = ad::add(t, co.class_token, masked_mean(t, co.object_tokens, co.object_mask));
        pooled = ad::add(t, pooled, masked_mean(t, co.relation_tokens, co.relation_mask));
        readouts.push_back(pooled);
        out.coa.emplace(m, std::move(co));
        continue;
      }

      require(bank != nullptr, "full variant needs a prototype bank");
      mot::MoTOutput lv;
      lv.m_a = head.similarity(t, co.class_token, bank->t_a);
      lv.m_o = head.similarity(t, co.object_tokens, bank->t_o, &co.object_mask);
      lv.m_r = head.similarity(t, co.relation_tokens, bank->t_r, &co.relation_mask);
      lv.mhat_a = head.differentiable_one_hot(t, lv.m_a, noise);
      lv.mhat_o = head.differentiable_one_hot(t, lv.m_o, noise);
      lv.mhat_r = head.differentiable_one_hot(t, lv.m_r, noise);
      lv.f_a = head.align_fuse(t, s, 'a', co.class_token, lv.mhat_a, bank->t_a);
      lv.f_o = head.align_fuse(t, s, 'o', co.object_tokens, lv.mhat_o, bank->t_o,
                               &co.object_mask);
      lv.f_r = head.align_fuse(t, s, 'r', co.relation_tokens, lv.mhat_r, bank->t_r,
                               &co.relation_mask);
      branches.push_back({lv.f_a, lv.f_o, lv.f_r, co.object_mask, co.relation_mask});
      out.levels.emplace(m, lv);
      out.coa.emplace(m, std::move(co));
    }

    if (cfg_.variant == "full") {
      auto [w, a_final] = head.multimodal_fuse(t, s, branches);
      out.w = w;
      out.a_final = a_final;
      // Every level record carries the global mixture so per-modality
      // inspection (extract_alignment) sees the weights actually used.
      for (auto& [m, lv] : out.levels) lv.w = w;
      if (label >= 0) {
        auto [logits, loss] = head.classify_and_loss(t, s, a_final, label, eps);
        out.logits = logits;
        out.loss = loss;
      } else {
        out.logits = head.classify(t, s, a_final);
      }
      return out;
    }

    int pooled = readouts[0];
    for (std::size_t i = 1; i < readouts.size(); ++i) pooled = ad::add(t, pooled, readouts[i]);
    if (readouts.size() > 1) pooled = ad::scale(t, pooled, 1.0 / double(readouts.size()));
    out.logits = nn::Linear{"head.fc", cfg_.encoder.d, cfg_.num_classes}.apply(t, s, pooled);
    if (label >= 0) {
      if (label >= cfg_.num_classes)
        throw ValidationError("LABEL_OUT_OF_RANGE: " + std::to_string(label) + " not in [0, " +
                              std::to_string(cfg_.num_classes) + ")");
      out.loss = ad::cross_entropy_smoothed(t, out.logits, label, eps);
    }
    return out;
  }

  // Checkpoint plumbing: the arch document rides along so a mismatched load
  // fails before any weight lands.
  void save_checkpoint(const std::string& path, const nn::ParamStore& s) const {
    ckpt::save(path, s, arch());
  }
  void load_checkpoint(const std::string& path, nn::ParamStore& s) const {
    ckpt::load(path, s, arch());
  }

  backbone::Encoder encoder(const std::string& modality) const {
    return backbone::Encoder(cfg_.encoder_for(modality), "enc." + modality);
  }
  coa::CoAStack stack(const std::string& modality) const {
    return coa::CoAStack(cfg_.coa, cfg_.encoder.d, "coa." + modality);
  }
  mot::MoTHead head() const { return mot::MoTHead(cfg_.mot_config(), "mot"); }

 private:
  // Same parameters, but Gumbel draws only happen when a noise stream exists.
  mot::MoTHead noise_adjusted_head(bool have_noise) const {
    mot::MoTConfig mc = cfg_.mot_config();
    mc.align.gumbel_noise = mc.align.gumbel_noise && have_noise;
    return mot::MoTHead(mc, "mot");
  }

  int grid_frames() const { return cfg_.encoder.frame_count; }

  // Mean over valid rows; all-masked comes out as the zero row.
  int masked_mean(Tape& t, int rows, const std::vector<bool>& mask) const {
    Mat w = Mat::Zero(1, Eigen::Index(mask.size()));
    int live = 0;
    for (bool b : mask) live += b ? 1 : 0;
    if (live > 0)
      for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) w(0, Eigen::Index(i)) = 1.0 / double(live);
    return ad::matmul(t, t.input(w), rows);
  }

  ModelConfig cfg_;
};

// Builds the prototype bank the full model aligns against: template-generated
// descriptions hashed into unit vectors at the model's embedding width. Fully
// deterministic, so train and eval can rebuild identical banks from the
// taxonomy alone.
inline bank::PrototypeBank default_bank(const data::ActionTaxonomy& actions,
                                        const data::ObjectTaxonomy& objects,
                                        const data::RuleTable& rules, Eigen::Index d,
                                        const bank::BankBuildOptions& opt = {}) {
  bank::HashNgramEncoder enc(d);
  bank::DescriptionGenerator gen = bank::template_generator();
  return bank::build_bank(actions, objects, rules, gen, enc, opt);
}

}  // namespace aornet::model
