#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "aornet/core/image_io.hpp"
#include "aornet/harness/dataset.hpp"

namespace aornet::harness {

// Read-only inspection of one clip: the last encoder block's class-token
// attention rendered as a per-frame heatmap over the spatial token grid, plus
// (for the full model) which prototype each level retrieved and the mixture
// weights. Heatmaps are min-max normalized to [0,1] per frame; the JSON keeps
// the raw row sums so the softmax contract stays checkable after the fact.

struct AttentionExport {
  fs::path out_dir;
  fs::path json_path;
  std::vector<fs::path> heatmaps;
  json document;
};

namespace detail {

inline std::string frame_file(const std::string& modality, int frame) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "-frame-%03d.png", frame);
  return modality + buf;
}

}  // namespace detail

inline AttentionExport export_attention(const model::AORNet& net, nn::ParamStore& store,
                                        const bank::PrototypeBank* pbank, const Dataset& ds,
                                        const std::string& clip_id, const fs::path& out_dir,
                                        const std::string& level = "fine") {
  const model::ModelConfig& mc = net.config();
  const LoadedClip& clip = ds.at(clip_id);
  model::ModelSample sample =
      make_sample(ds, clip, mc.modalities, mc.encoder.frame_count, mc.encoder.input_size, level,
                  /*train_mode=*/false, Rng(0));

  ad::Tape t;
  model::BankNodes bn;
  const model::BankNodes* bp = nullptr;
  if (mc.variant == "full") {
    require(pbank != nullptr, "full variant needs a prototype bank to export attention");
    bn = model::put_bank(t, *pbank);
    bp = &bn;
  }
  std::map<std::string, std::vector<Mat>> attn;
  model::ForwardOutput out = net.forward(t, store, sample, bp, nullptr, -1, 0.1, &attn);

  fs::create_directories(out_dir);
  AttentionExport ex;
  ex.out_dir = out_dir;

  const int tt = mc.encoder.frame_count / mc.encoder.temporal_patch;
  const int hw = mc.encoder.input_size / mc.encoder.spatial_patch;

  json doc;
  doc["clip"] = clip_id;
  doc["label"] = sample.label;
  doc["level"] = level;
  doc["variant"] = mc.variant;
  doc["token_grid"] = {{"t", tt}, {"h", hw}, {"w", hw}};
  doc["modalities"] = json::object();

  for (const auto& m : mc.modalities) {
    const std::vector<Mat>& heads = attn.at(m);
    require(!heads.empty(), "encoder produced no attention for modality " + m);
    const Eigen::Index n = heads[0].cols();
    require(n == 1 + Eigen::Index(tt) * hw * hw, "attention width disagrees with token grid");

    // Class-token row, averaged over heads. Row sums are recorded per head
    // before any normalization: each should be exactly a softmax row.
    Vec cls = Vec::Zero(n);
    json row_sums = json::array();
    for (const Mat& h : heads) {
      cls += h.row(0).transpose();
      row_sums.push_back(h.row(0).sum());
    }
    cls /= double(heads.size());

    json frames = json::array();
    for (int f = 0; f < mc.encoder.frame_count; ++f) {
      const int ti = f / mc.encoder.temporal_patch;
      Mat heat(hw, hw);
      for (int y = 0; y < hw; ++y)
        for (int x = 0; x < hw; ++x) heat(y, x) = cls(1 + (ti * hw + y) * hw + x);
      const double lo = heat.minCoeff(), hi = heat.maxCoeff();
      Mat norm = hi > lo ? Mat(((heat.array() - lo) / (hi - lo)).matrix())
                         : Mat(Mat::Zero(hw, hw));

      img::Image im;
      im.w = hw;
      im.h = hw;
      im.channels = 1;
      im.bit_depth = 8;
      im.px.resize(std::size_t(hw) * hw);
      for (int y = 0; y < hw; ++y)
        for (int x = 0; x < hw; ++x)
          im.px[std::size_t(y) * hw + x] =
              std::uint16_t(std::lround(norm(y, x) * 255.0));
      fs::path file = out_dir / detail::frame_file(m, f);
      img::write_png(file.string(), im);
      ex.heatmaps.push_back(file);

      json values = json::array();
      for (int y = 0; y < hw; ++y) {
        json row = json::array();
        for (int x = 0; x < hw; ++x) row.push_back(norm(y, x));
        values.push_back(row);
      }
      frames.push_back({{"frame", f},
                        {"file", file.filename().string()},
                        {"raw_min", lo},
                        {"raw_max", hi},
                        {"values", values}});
    }

    json mj;
    mj["head_row_sums"] = row_sums;
    mj["frames"] = frames;

    if (mc.variant == "full") {
      const mot::MoTOutput& lv = out.levels.at(m);
      const coa::CoAOutput& co = out.coa.at(m);
      mot::AlignmentRecord rec =
          net.head().extract_alignment(t, lv, co.object_mask, co.relation_mask);
      json aj = rec.to_json();
      aj["action_text"] = pbank->action_protos[std::size_t(rec.action_choice)].text;
      json obj_texts = json::array(), rel_texts = json::array();
      for (int c : rec.object_choices)
        obj_texts.push_back(c >= 0 ? json(pbank->object_labels[std::size_t(c)]) : json());
      for (int c : rec.relation_choices)
        rel_texts.push_back(c >= 0 ? json(pbank->relation_protos[std::size_t(c)].text) : json());
      aj["object_texts"] = obj_texts;
      aj["relation_texts"] = rel_texts;
      mj["alignment"] = aj;
    }
    doc["modalities"][m] = mj;
  }

  if (mc.variant == "full") {
    const Mat& w = t.val(out.w);
    doc["weights"] = std::vector<double>(w.data(), w.data() + w.size());
  }

  ex.json_path = out_dir / "attention.json";
  data::write_json_file(ex.json_path, doc);
  ex.document = std::move(doc);
  return ex;
}

}  // namespace aornet::harness
