#pragma once

#include <algorithm>
#include <vector>

#include "cgan/tensor.hpp"

namespace cgan {

// Analog-YUV constants. Y is the psychological grayscale weighting; U and V
// are scaled so that the full RGB cube maps chroma into [-1, 1].
template <class T>
struct Yuv {
  static constexpr T kWr = T(0.299);
  static constexpr T kWg = T(0.587);
  static constexpr T kWb = T(0.114);
  static constexpr T kKu = T(0.492);  // U = kKu * (B - Y) / kSu
  static constexpr T kKv = T(0.877);  // V = kKv * (R - Y) / kSv
  static constexpr T kSu = T(0.436);
  static constexpr T kSv = T(0.615);
};

// gray = 0.299 r + 0.587 g + 0.114 b. The association below sums the three
// coefficients to exactly 1 in both float and double, so white maps to 1.0
// bit-exactly.
template <class T>
inline T rgb_to_gray(T r, T g, T b) {
  return r * Yuv<T>::kWr + (g * Yuv<T>::kWg + b * Yuv<T>::kWb);
}

template <class T>
inline void rgb_to_yuv(T r, T g, T b, T& y, T& u, T& v) {
  y = rgb_to_gray(r, g, b);
  u = Yuv<T>::kKu * (b - y) / Yuv<T>::kSu;
  v = Yuv<T>::kKv * (r - y) / Yuv<T>::kSv;
}

// Inverse without gamut handling; may leave [0,1]. Solving g from the gray
// equation makes rgb_to_gray of the result equal y identically, whatever
// (u, v) are.
template <class T>
inline void yuv_to_rgb_raw(T y, T u, T v, T& r, T& g, T& b) {
  r = y + v * (Yuv<T>::kSv / Yuv<T>::kKv);
  b = y + u * (Yuv<T>::kSu / Yuv<T>::kKu);
  g = (y - Yuv<T>::kWr * r - Yuv<T>::kWb * b) / Yuv<T>::kWg;
}

template <class T>
inline T clamp01(T x) {
  return std::min(std::max(x, T(0)), T(1));
}

// Inverse with per-channel clamping at the gamut boundary.
template <class T>
inline void yuv_to_rgb(T y, T u, T v, T& r, T& g, T& b) {
  yuv_to_rgb_raw(y, u, v, r, g, b);
  r = clamp01(r);
  g = clamp01(g);
  b = clamp01(b);
}

// Inverse with chroma-preserving gamut mapping: (u, v) are scaled toward zero
// by the largest factor that keeps all channels inside [0, 1]. Because the raw
// inverse preserves gray for any chroma, the mapped result still satisfies
// rgb_to_gray(r,g,b) == y up to rounding, which per-channel clamping would not.
template <class T>
inline void yuv_to_rgb_gamut(T y, T u, T v, T& r, T& g, T& b) {
  y = clamp01(y);
  const T dr = v * (Yuv<T>::kSv / Yuv<T>::kKv);
  const T db = u * (Yuv<T>::kSu / Yuv<T>::kKu);
  const T dg = -(Yuv<T>::kWr * dr + Yuv<T>::kWb * db) / Yuv<T>::kWg;
  T t = T(1);
  const T deltas[3] = {dr, dg, db};
  for (T d : deltas) {
    if (d > T(0))
      t = std::min(t, (T(1) - y) / d);
    else if (d < T(0))
      t = std::min(t, (T(0) - y) / d);
  }
  t = std::max(t, T(0));
  r = clamp01(y + t * dr);
  g = clamp01(y + t * dg);
  b = clamp01(y + t * db);
}

// Display <-> model range for RGB channels: [0,1] <-> [-1,1]. Y stays in
// [0,1]; U and V already live in [-1,1].
template <class T>
inline T rgb_to_model(T x) {
  return T(2) * x - T(1);
}

template <class T>
inline T rgb_to_display(T x) {
  return clamp01((x + T(1)) / T(2));
}

// ---- image-level helpers --------------------------------------------------

enum class ColorSpace { kRGB, kYUV };

// Planar-free interleaved image in display range, [h, w, c] row-major.
struct FloatImage {
  int h = 0, w = 0, c = 0;
  ColorSpace space = ColorSpace::kRGB;
  std::vector<float> pix;

  float* px(int y, int x) { return pix.data() + (static_cast<size_t>(y) * w + x) * c; }
  const float* px(int y, int x) const { return pix.data() + (static_cast<size_t>(y) * w + x) * c; }
};

inline FloatImage make_image(int h, int w, int c, ColorSpace space = ColorSpace::kRGB) {
  FloatImage im;
  im.h = h;
  im.w = w;
  im.c = c;
  im.space = space;
  im.pix.assign(static_cast<size_t>(h) * w * c, 0.f);
  return im;
}

inline FloatImage image_rgb_to_gray(const FloatImage& rgb) {
  if (rgb.space != ColorSpace::kRGB || rgb.c != 3) fail("rgb_to_gray: image is not RGB");
  FloatImage g = make_image(rgb.h, rgb.w, 1);
  for (size_t p = 0; p < g.pix.size(); ++p)
    g.pix[p] = rgb_to_gray(rgb.pix[3 * p], rgb.pix[3 * p + 1], rgb.pix[3 * p + 2]);
  return g;
}

inline FloatImage image_rgb_to_yuv(const FloatImage& rgb) {
  if (rgb.space != ColorSpace::kRGB || rgb.c != 3) fail("rgb_to_yuv: image is not RGB");
  FloatImage out = make_image(rgb.h, rgb.w, 3, ColorSpace::kYUV);
  for (size_t p = 0; p < out.pix.size(); p += 3)
    rgb_to_yuv(rgb.pix[p], rgb.pix[p + 1], rgb.pix[p + 2], out.pix[p], out.pix[p + 1], out.pix[p + 2]);
  return out;
}

inline FloatImage image_yuv_to_rgb(const FloatImage& yuv) {
  if (yuv.space != ColorSpace::kYUV || yuv.c != 3) fail("yuv_to_rgb: image is not YUV");
  FloatImage out = make_image(yuv.h, yuv.w, 3, ColorSpace::kRGB);
  for (size_t p = 0; p < out.pix.size(); p += 3)
    yuv_to_rgb(yuv.pix[p], yuv.pix[p + 1], yuv.pix[p + 2], out.pix[p], out.pix[p + 1], out.pix[p + 2]);
  return out;
}

enum class NormDir { kToModel, kToDisplay };

// Range normalization per channel semantics of the image's space.
inline FloatImage normalize(const FloatImage& img, NormDir dir) {
  FloatImage out = img;
  if (img.space == ColorSpace::kRGB) {
    for (float& v : out.pix) v = (dir == NormDir::kToModel) ? rgb_to_model(v) : rgb_to_display(v);
  } else {
    // Y gets clamped back to [0,1] on display; U,V stay as-is
    for (size_t p = 0; p < out.pix.size(); p += 3)
      if (dir == NormDir::kToDisplay) out.pix[p] = clamp01(out.pix[p]);
  }
  return out;
}

}  // namespace cgan
