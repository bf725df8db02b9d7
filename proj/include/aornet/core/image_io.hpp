#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "aornet/core/common.hpp"

// Minimal PNG I/O covering exactly what this project emits: 8-bit grayscale,
// 8-bit RGB, and 16-bit grayscale, no interlacing, filter type 0, and a zlib
// stream made of stored (uncompressed) deflate blocks. Files are valid PNGs
// readable by any viewer; the reader only accepts this same subset, which is
// fine because it only ever reads files this codebase wrote.

namespace aornet::img {

struct Image {
  int w = 0, h = 0;
  int channels = 1;   // 1 = gray, 3 = rgb
  int bit_depth = 8;  // 8 or 16
  std::vector<std::uint16_t> px;  // interleaved; 8-bit images use the low byte

  std::size_t sample_count() const { return std::size_t(w) * h * channels; }
};

namespace detail {

inline std::uint32_t crc32(const std::uint8_t* p, std::size_t n, std::uint32_t crc = 0) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  crc ^= 0xffffffffu;
  for (std::size_t i = 0; i < n; ++i) crc = table[(crc ^ p[i]) & 0xff] ^ (crc >> 8);
  return crc ^ 0xffffffffu;
}

inline std::uint32_t adler32(const std::uint8_t* p, std::size_t n) {
  std::uint32_t a = 1, b = 0;
  for (std::size_t i = 0; i < n; ++i) {
    a = (a + p[i]) % 65521u;
    b = (b + a) % 65521u;
  }
  return (b << 16) | a;
}

inline void put_u32be(std::vector<std::uint8_t>& v, std::uint32_t x) {
  v.push_back(std::uint8_t(x >> 24));
  v.push_back(std::uint8_t(x >> 16));
  v.push_back(std::uint8_t(x >> 8));
  v.push_back(std::uint8_t(x));
}

inline void put_chunk(std::vector<std::uint8_t>& out, const char type[4],
                      const std::vector<std::uint8_t>& data) {
  put_u32be(out, std::uint32_t(data.size()));
  std::size_t crc_start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  put_u32be(out, crc32(out.data() + crc_start, out.size() - crc_start));
}

}  // namespace detail

inline void write_png(const std::string& path, const Image& im) {
  require(im.bit_depth == 8 || im.bit_depth == 16, "write_png: bit depth must be 8 or 16");
  require(im.channels == 1 || im.channels == 3, "write_png: channels must be 1 or 3");
  require(im.px.size() == im.sample_count(), "write_png: pixel buffer size mismatch");
  const int bpp = im.bit_depth / 8;
  const std::size_t stride = std::size_t(im.w) * im.channels * bpp;

  // raw scanlines, each prefixed with filter byte 0; 16-bit samples big-endian
  std::vector<std::uint8_t> raw;
  raw.reserve((stride + 1) * im.h);
  for (int y = 0; y < im.h; ++y) {
    raw.push_back(0);
    for (int x = 0; x < im.w * im.channels; ++x) {
      std::uint16_t s = im.px[std::size_t(y) * im.w * im.channels + x];
      if (bpp == 2) raw.push_back(std::uint8_t(s >> 8));
      raw.push_back(std::uint8_t(s & 0xff));
    }
  }

  // zlib wrapper around stored deflate blocks
  std::vector<std::uint8_t> z;
  z.push_back(0x78);
  z.push_back(0x01);
  std::size_t off = 0;
  while (off < raw.size() || raw.empty()) {
    std::size_t n = std::min<std::size_t>(65535, raw.size() - off);
    bool last = off + n == raw.size();
    z.push_back(last ? 1 : 0);
    z.push_back(std::uint8_t(n & 0xff));
    z.push_back(std::uint8_t(n >> 8));
    z.push_back(std::uint8_t(~n & 0xff));
    z.push_back(std::uint8_t((~n >> 8) & 0xff));
    z.insert(z.end(), raw.begin() + off, raw.begin() + off + n);
    off += n;
    if (last) break;
  }
  detail::put_u32be(z, detail::adler32(raw.data(), raw.size()));

  std::vector<std::uint8_t> out = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  std::vector<std::uint8_t> ihdr;
  detail::put_u32be(ihdr, std::uint32_t(im.w));
  detail::put_u32be(ihdr, std::uint32_t(im.h));
  ihdr.push_back(std::uint8_t(im.bit_depth));
  ihdr.push_back(im.channels == 1 ? 0 : 2);  // color type
  ihdr.push_back(0);                         // compression
  ihdr.push_back(0);                         // filter method
  ihdr.push_back(0);                         // no interlace
  detail::put_chunk(out, "IHDR", ihdr);
  detail::put_chunk(out, "IDAT", z);
  detail::put_chunk(out, "IEND", {});

  std::ofstream f(path, std::ios::binary);
  require(f.good(), "cannot open for writing: " + path);
  f.write(reinterpret_cast<const char*>(out.data()), std::streamsize(out.size()));
  require(f.good(), "short write: " + path);
}

inline Image read_png(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), "cannot open: " + path);
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(f)),
                                std::istreambuf_iterator<char>());
  static const std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  require(buf.size() > 8 && std::equal(sig, sig + 8, buf.begin()), "not a PNG: " + path);

  auto u32 = [&](std::size_t o) {
    return (std::uint32_t(buf[o]) << 24) | (std::uint32_t(buf[o + 1]) << 16) |
           (std::uint32_t(buf[o + 2]) << 8) | std::uint32_t(buf[o + 3]);
  };

  Image im;
  std::vector<std::uint8_t> idat;
  std::size_t pos = 8;
  while (pos + 8 <= buf.size()) {
    std::uint32_t len = u32(pos);
    std::string type(buf.begin() + pos + 4, buf.begin() + pos + 8);
    std::size_t data = pos + 8;
    require(data + len + 4 <= buf.size(), "truncated PNG: " + path);
    if (type == "IHDR") {
      im.w = int(u32(data));
      im.h = int(u32(data + 4));
      im.bit_depth = buf[data + 8];
      int ct = buf[data + 9];
      require(ct == 0 || ct == 2, "unsupported PNG color type in " + path);
      im.channels = ct == 0 ? 1 : 3;
      require(buf[data + 10] == 0 && buf[data + 11] == 0 && buf[data + 12] == 0,
              "unsupported PNG encoding in " + path);
    } else if (type == "IDAT") {
      idat.insert(idat.end(), buf.begin() + data, buf.begin() + data + len);
    } else if (type == "IEND") {
      break;
    }
    pos = data + len + 4;
  }
  require(im.w > 0 && im.h > 0, "missing IHDR in " + path);
  require(idat.size() > 6, "missing IDAT in " + path);

  // un-zlib: stored blocks only (all this project ever writes)
  std::vector<std::uint8_t> raw;
  std::size_t p = 2;
  for (;;) {
    require(p < idat.size(), "truncated zlib stream in " + path);
    std::uint8_t hdr = idat[p++];
    require((hdr >> 1) == 0, "unsupported deflate block in " + path);
    std::uint32_t n = idat[p] | (std::uint32_t(idat[p + 1]) << 8);
    p += 4;  // skip len + nlen
    require(p + n <= idat.size(), "truncated deflate block in " + path);
    raw.insert(raw.end(), idat.begin() + p, idat.begin() + p + n);
    p += n;
    if (hdr & 1) break;
  }

  const int bpp = im.bit_depth / 8;
  const std::size_t stride = std::size_t(im.w) * im.channels * bpp;
  require(raw.size() == (stride + 1) * im.h, "scanline size mismatch in " + path);
  im.px.resize(im.sample_count());
  for (int y = 0; y < im.h; ++y) {
    const std::uint8_t* row = raw.data() + std::size_t(y) * (stride + 1);
    require(row[0] == 0, "unsupported PNG filter in " + path);
    for (int x = 0; x < im.w * im.channels; ++x) {
      std::uint16_t s = bpp == 2
                            ? std::uint16_t((row[1 + 2 * x] << 8) | row[2 + 2 * x])
                            : row[1 + x];
      im.px[std::size_t(y) * im.w * im.channels + x] = s;
    }
  }
  return im;
}

// The dataset's 16-bit depth maps to 8 bits by linear rescale with rounding.
inline std::uint8_t depth_16_to_8(std::uint16_t v) {
  return std::uint8_t(std::lround(double(v) * 255.0 / 65535.0));
}

}  // namespace aornet::img
