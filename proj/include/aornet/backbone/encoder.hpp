#pragma once

#include <string>
#include <vector>

#include "aornet/core/nn.hpp"
#include "aornet/core/tape.hpp"
#include "aornet/backbone/sampler.hpp"

namespace aornet::backbone {

using ad::Tape;

// The encoder's output contract: one matrix on the tape whose row 0 is the
// global class token and whose remaining T·H·W rows are the spatial-temporal
// tokens in (t, y, x) row-major order.
struct TokenGrid {
  int id = -1;  // (T·H·W + 1) × d matrix on the tape
  int T = 0, H = 0, W = 0, d = 0;

  int token_count() const { return T * H * W; }
  // tape row index of spatial token (t, y, x); +1 skips the class token
  int row_of(int t, int y, int x) const { return 1 + (t * H + y) * W + x; }
};

struct EncoderConfig {
  int input_size = 224;
  int frame_count = 8;
  int channels = 3;
  int temporal_patch = 2;
  int spatial_patch = 16;
  int d = 768;
  int heads = 12;
  int blocks = 2;
  int mlp_ratio = 4;

  int t_tokens() const { return frame_count / temporal_patch; }
  int s_tokens() const { return input_size / spatial_patch; }
  int patch_len() const { return temporal_patch * spatial_patch * spatial_patch * channels; }

  void validate() const {
    require(frame_count % temporal_patch == 0, "frame_count must divide by temporal_patch");
    require(input_size % spatial_patch == 0, "input_size must divide by spatial_patch");
    require(d % heads == 0, "d must divide by heads");
    require(blocks >= 1 && d >= 1 && channels >= 1, "degenerate encoder config");
  }
};

// A transformer over non-overlapping spatio-temporal patches. One instance
// per modality: same architecture, disjoint parameters under `prefix`.
class Encoder {
 public:
  Encoder(EncoderConfig cfg, std::string prefix) : cfg_(cfg), prefix_(std::move(prefix)) {
    cfg_.validate();
  }

  const EncoderConfig& config() const { return cfg_; }
  const std::string& prefix() const { return prefix_; }

  void init(nn::ParamStore& s) const {
    const int n = cfg_.t_tokens() * cfg_.s_tokens() * cfg_.s_tokens();
    if (!s.has(prefix_ + ".cls")) s.create(prefix_ + ".cls", 1, cfg_.d, nn::ParamStore::Init::kNormal02);
    if (!s.has(prefix_ + ".pos"))
      s.create(prefix_ + ".pos", n + 1, cfg_.d, nn::ParamStore::Init::kNormal02);
    nn::Linear{prefix_ + ".embed", cfg_.patch_len(), cfg_.d}.init(s);
    for (int b = 0; b < cfg_.blocks; ++b) block(b).init(s);
    nn::LayerNorm{prefix_ + ".ln_out", cfg_.d}.init(s);
  }

  // Rows: patches in (t, y, x) order. Columns: pixels of the patch, laid out
  // (frame within temporal patch, channel, pixel y, pixel x). Each input pixel
  // lands in exactly one cell, so gradients w.r.t. this matrix are gradients
  // w.r.t. pixels.
  Mat patchify(const SampledClip& clip) const {
    check_shape(clip);
    const int Ts = cfg_.t_tokens(), S = cfg_.s_tokens(), P = cfg_.spatial_patch;
    Mat X(Ts * S * S, cfg_.patch_len());
    for (int tt = 0; tt < Ts; ++tt)
      for (int gy = 0; gy < S; ++gy)
        for (int gx = 0; gx < S; ++gx) {
          Eigen::Index row = (Eigen::Index(tt) * S + gy) * S + gx;
          Eigen::Index col = 0;
          for (int dt = 0; dt < cfg_.temporal_patch; ++dt) {
            const auto& planes = clip.frames[std::size_t(tt * cfg_.temporal_patch + dt)];
            for (int c = 0; c < cfg_.channels; ++c)
              for (int py = 0; py < P; ++py)
                for (int px = 0; px < P; ++px)
                  X(row, col++) = planes[std::size_t(c)](gy * P + py, gx * P + px);
          }
        }
    return X;
  }

  TokenGrid encode(Tape& t, nn::ParamStore& s, const SampledClip& clip,
                   std::vector<Mat>* last_attn = nullptr) const {
    return encode_patches(t, s, t.input(patchify(clip)), last_attn);
  }

  // Split out so tests can feed a hand-built patch matrix (e.g. as a tape
  // leaf with gradients enabled for probing). `last_attn`, when given,
  // receives the final block's per-head post-softmax attention matrices.
  TokenGrid encode_patches(Tape& t, nn::ParamStore& s, int x_id,
                           std::vector<Mat>* last_attn = nullptr) const {
    const int n = cfg_.t_tokens() * cfg_.s_tokens() * cfg_.s_tokens();
    require(t.val(x_id).rows() == n && t.val(x_id).cols() == cfg_.patch_len(),
            "SHAPE_MISMATCH: patch matrix is " + std::to_string(t.val(x_id).rows()) + "x" +
                std::to_string(t.val(x_id).cols()));
    int x = nn::Linear{prefix_ + ".embed", cfg_.patch_len(), cfg_.d}.apply(t, s, x_id);
    x = ad::concat_rows(t, {s.use(t, prefix_ + ".cls"), x});
    x = ad::add(t, x, s.use(t, prefix_ + ".pos"));
    for (int b = 0; b < cfg_.blocks; ++b)
      x = block(b).apply(t, s, x, nullptr, b == cfg_.blocks - 1 ? last_attn : nullptr);
    x = nn::LayerNorm{prefix_ + ".ln_out", cfg_.d}.apply(t, s, x);

    TokenGrid grid;
    grid.id = x;
    grid.T = cfg_.t_tokens();
    grid.H = cfg_.s_tokens();
    grid.W = cfg_.s_tokens();
    grid.d = cfg_.d;
    return grid;
  }

 private:
  EncoderConfig cfg_;
  std::string prefix_;

  nn::TransformerBlock block(int b) const {
    return {prefix_ + ".blk" + std::to_string(b), cfg_.d, cfg_.heads,
            Eigen::Index(cfg_.d) * cfg_.mlp_ratio};
  }

  void check_shape(const SampledClip& clip) const {
    if (clip.frame_count() != cfg_.frame_count || clip.size != cfg_.input_size ||
        clip.channels != cfg_.channels)
      throw ValidationError("SHAPE_MISMATCH: clip is " + std::to_string(clip.frame_count()) +
                            " frames of " + std::to_string(clip.size) + "px x" +
                            std::to_string(clip.channels) + " channels, encoder wants " +
                            std::to_string(cfg_.frame_count) + "/" +
                            std::to_string(cfg_.input_size) + "/" + std::to_string(cfg_.channels));
  }
};

}  // namespace aornet::backbone
