#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "aornet/core/common.hpp"
#include "aornet/core/image_io.hpp"
#include "aornet/data/types.hpp"

namespace aornet::synth {

using img::Image;
using img::read_png;
using img::write_png;

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
};

// Flat-color palette per object class. Colors are deliberately reused by
// shirts and decor patches elsewhere so that a global color histogram is not
// enough to tell actions apart; the discriminative cue is which color sits in
// the tracked box.
inline Rgb class_color(const std::string& cls) {
  if (cls == "person") return {205, 170, 140};  // skin; torso uses shirt color
  if (cls == "phone") return {210, 60, 60};
  if (cls == "bottle") return {40, 90, 210};
  if (cls == "cup") return {170, 110, 60};
  if (cls == "cigarette") return {240, 240, 235};
  if (cls == "lighter") return {245, 125, 40};
  if (cls == "bag") return {110, 75, 40};
  if (cls == "glasses") return {60, 200, 95};
  if (cls == "mask") return {95, 210, 215};
  if (cls == "headphones") return {150, 90, 215};
  if (cls == "child") return {225, 190, 160};
  if (cls == "child seat") return {95, 60, 130};
  if (cls == "steering wheel") return {40, 40, 45};
  if (cls == "food") return {235, 175, 55};
  if (cls == "tissue") return {250, 250, 205};
  throw ValidationError("no color assigned for object class: " + cls);
}

// Half extents of the rendered rectangle in normalized units. Sizes are
// strictly ordered so that "largest mean box area" object selection has a
// deterministic outcome: person > cabin fixtures > hand-held items >
// distractor clutter.
inline std::array<double, 2> class_half_size(const std::string& cls) {
  if (cls == "person") return {0.15, 0.24};
  if (cls == "steering wheel") return {0.115, 0.10};
  if (cls == "child seat") return {0.105, 0.095};
  if (cls == "bag") return {0.095, 0.085};
  if (cls == "child") return {0.085, 0.085};
  if (cls == "cup") return {0.042, 0.055};
  if (cls == "bottle") return {0.035, 0.065};
  if (cls == "food") return {0.048, 0.040};
  if (cls == "phone") return {0.033, 0.052};
  if (cls == "tissue") return {0.045, 0.038};
  if (cls == "mask") return {0.048, 0.035};
  if (cls == "headphones") return {0.052, 0.042};
  if (cls == "glasses") return {0.052, 0.028};
  if (cls == "cigarette") return {0.014, 0.042};
  if (cls == "lighter") return {0.020, 0.034};
  throw ValidationError("no size assigned for object class: " + cls);
}

// Constant depth plane per scene layer, 16-bit. Closer = larger value so the
// depth image brightens toward the camera.
inline std::uint16_t layer_depth(const std::string& layer) {
  if (layer == "window") return 6000;
  if (layer == "background") return 12000;
  if (layer == "decor") return 16000;
  if (layer == "seat") return 20000;
  if (layer == "distractor") return 24000;
  if (layer == "context") return 26000;
  if (layer == "person") return 32000;
  if (layer == "held") return 40000;
  throw ValidationError("unknown depth layer: " + layer);
}

struct FrameCanvas {
  int width = 0, height = 0;
  std::vector<std::uint8_t> rgb;     // interleaved RGB8
  std::vector<std::uint16_t> depth;  // one plane value per pixel

  FrameCanvas(int w, int h) : width(w), height(h), rgb(std::size_t(w) * h * 3), depth(std::size_t(w) * h) {}

  void fill(Rgb c, std::uint16_t d) {
    for (std::size_t i = 0; i < depth.size(); ++i) {
      rgb[i * 3 + 0] = c.r;
      rgb[i * 3 + 1] = c.g;
      rgb[i * 3 + 2] = c.b;
      depth[i] = d;
    }
  }

  // Painter's algorithm: later rects draw over earlier ones.
  void rect(double cx, double cy, double hx, double hy, Rgb c, std::uint16_t d) {
    int x0 = int(std::floor((cx - hx) * width));
    int x1 = int(std::ceil((cx + hx) * width));
    int y0 = int(std::floor((cy - hy) * height));
    int y1 = int(std::ceil((cy + hy) * height));
    x0 = std::clamp(x0, 0, width);
    x1 = std::clamp(x1, 0, width);
    y0 = std::clamp(y0, 0, height);
    y1 = std::clamp(y1, 0, height);
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) {
        std::size_t i = std::size_t(y) * width + x;
        rgb[i * 3 + 0] = c.r;
        rgb[i * 3 + 1] = c.g;
        rgb[i * 3 + 2] = c.b;
        depth[i] = d;
      }
  }
};

// Global illumination per lighting condition: a per-channel multiplier.
inline std::array<double, 3> lighting_gain(data::Lighting l) {
  switch (l) {
    case data::Lighting::kDay: return {1.0, 1.0, 1.0};
    case data::Lighting::kCloudy: return {0.85, 0.85, 0.88};
    case data::Lighting::kRain: return {0.72, 0.74, 0.82};
    case data::Lighting::kNight: return {0.42, 0.42, 0.50};
  }
  return {1.0, 1.0, 1.0};
}

inline void apply_lighting(FrameCanvas& f, data::Lighting l) {
  auto g = lighting_gain(l);
  for (std::size_t i = 0; i < f.depth.size(); ++i)
    for (int c = 0; c < 3; ++c) {
      double v = std::round(f.rgb[i * 3 + c] * g[c]);
      f.rgb[i * 3 + c] = std::uint8_t(std::clamp(v, 0.0, 255.0));
    }
}

inline Image canvas_to_rgb(const FrameCanvas& f) {
  Image im;
  im.w = f.width;
  im.h = f.height;
  im.channels = 3;
  im.bit_depth = 8;
  im.px.resize(f.rgb.size());
  for (std::size_t i = 0; i < f.rgb.size(); ++i) im.px[i] = f.rgb[i];
  return im;
}

// IR is modeled as the luminance of the RGB render.
inline Image canvas_to_ir(const FrameCanvas& f) {
  Image im;
  im.w = f.width;
  im.h = f.height;
  im.channels = 1;
  im.bit_depth = 8;
  im.px.resize(f.depth.size());
  for (std::size_t i = 0; i < f.depth.size(); ++i) {
    double y = 0.299 * f.rgb[i * 3] + 0.587 * f.rgb[i * 3 + 1] + 0.114 * f.rgb[i * 3 + 2];
    im.px[i] = std::uint16_t(std::lround(std::clamp(y, 0.0, 255.0)));
  }
  return im;
}

inline Image canvas_to_depth(const FrameCanvas& f) {
  Image im;
  im.w = f.width;
  im.h = f.height;
  im.channels = 1;
  im.bit_depth = 16;
  im.px = f.depth;
  return im;
}

}  // namespace aornet::synth
