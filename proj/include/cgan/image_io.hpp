#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cgan/colorspace.hpp"

namespace cgan {

// 8-bit interleaved image, c = 1 (gray) or 3 (RGB).
struct ImageU8 {
  int h = 0, w = 0, c = 0;
  std::vector<uint8_t> pix;
};

inline ImageU8 make_u8(int h, int w, int c, uint8_t fill = 0) {
  ImageU8 im;
  im.h = h;
  im.w = w;
  im.c = c;
  im.pix.assign(static_cast<size_t>(h) * w * c, fill);
  return im;
}

// 8-bit value <-> display range
inline float u8_to_unit(uint8_t v) { return static_cast<float>(v) / 255.f; }
inline uint8_t unit_to_u8(float v) {
  const float c = clamp01(v) * 255.f;
  return static_cast<uint8_t>(c + 0.5f);
}

ImageU8 read_png(const std::string& path);
void write_png(const std::string& path, const ImageU8& img);
ImageU8 read_ppm(const std::string& path);
void write_ppm(const std::string& path, const ImageU8& img);

// Dispatches on file magic; accepts PNG and binary PPM (P6) / PGM (P5).
ImageU8 read_image(const std::string& path);

// Decodes to an RGB display-range image (gray files are replicated to 3
// channels), per the v/255 convention.
FloatImage load_image(const std::string& path);

FloatImage to_float(const ImageU8& img);
ImageU8 quantize_u8(const FloatImage& img);

}  // namespace cgan
