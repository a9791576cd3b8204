#include "doctest.h"

#include <cmath>

#include "cgan/colorspace.hpp"
#include "cgan/rng.hpp"

using namespace cgan;

TEST_CASE("gray weights: unit vectors exact, white exact in both precisions") {
  CHECK(rgb_to_gray(1.0, 0.0, 0.0) == 0.299);
  CHECK(rgb_to_gray(0.0, 1.0, 0.0) == 0.587);
  CHECK(rgb_to_gray(0.0, 0.0, 1.0) == 0.114);
  CHECK(rgb_to_gray(1.0, 1.0, 1.0) == 1.0);
  CHECK(rgb_to_gray(1.f, 0.f, 0.f) == 0.299f);
  CHECK(rgb_to_gray(0.f, 1.f, 0.f) == 0.587f);
  CHECK(rgb_to_gray(0.f, 0.f, 1.f) == 0.114f);
  CHECK(rgb_to_gray(1.f, 1.f, 1.f) == 1.f);
}

TEST_CASE("rgb_to_yuv: achromatic axis and hand-evaluated red") {
  double y, u, v;
  rgb_to_yuv(1.0, 1.0, 1.0, y, u, v);
  CHECK(y == 1.0);
  CHECK(u == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(v == doctest::Approx(0.0).epsilon(1e-12));

  rgb_to_yuv(0.5, 0.5, 0.5, y, u, v);
  CHECK(y == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(u == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(v == doctest::Approx(0.0).epsilon(1e-12));

  // (1,0,0): U = 0.492*(0-0.299)/0.436, V = 0.877*(1-0.299)/0.615
  rgb_to_yuv(1.0, 0.0, 0.0, y, u, v);
  CHECK(y == 0.299);
  CHECK(u == doctest::Approx(-0.33740366972477059).epsilon(1e-12));
  CHECK(v == doctest::Approx(0.99963739837398380).epsilon(1e-12));
}

TEST_CASE("chroma scaling keeps the full RGB cube inside [-1,1]") {
  Rng rng(5);
  double lo_u = 0, hi_u = 0, lo_v = 0, hi_v = 0;
  for (int i = 0; i < 20000; ++i) {
    double y, u, v;
    rgb_to_yuv(rng.uniform(), rng.uniform(), rng.uniform(), y, u, v);
    lo_u = std::min(lo_u, u);
    hi_u = std::max(hi_u, u);
    lo_v = std::min(lo_v, v);
    hi_v = std::max(hi_v, v);
    CHECK(y >= 0.0);
    CHECK(y <= 1.0);
    CHECK(std::abs(u) <= 1.0);
    CHECK(std::abs(v) <= 1.0);
  }
  // the extremes actually get used
  CHECK(hi_u > 0.5);
  CHECK(lo_u < -0.5);
  CHECK(hi_v > 0.5);
  CHECK(lo_v < -0.5);
}

TEST_CASE("yuv_to_rgb: achromatic inverse and gray identity") {
  for (double yv : {0.0, 0.25, 0.5, 0.99}) {
    double r, g, b;
    yuv_to_rgb(yv, 0.0, 0.0, r, g, b);
    CHECK(r == doctest::Approx(yv).epsilon(1e-12));
    CHECK(g == doctest::Approx(yv).epsilon(1e-12));
    CHECK(b == doctest::Approx(yv).epsilon(1e-12));
    CHECK(rgb_to_gray(r, g, b) == doctest::Approx(yv).epsilon(1e-12));
  }
}

TEST_CASE("yuv round trip: identity within 1e-6 over 1e5 random in-gamut pixels") {
  Rng rng(11);
  double worst = 0;
  for (int i = 0; i < 100000; ++i) {
    const double r0 = rng.uniform(), g0 = rng.uniform(), b0 = rng.uniform();
    double y, u, v, r, g, b;
    rgb_to_yuv(r0, g0, b0, y, u, v);
    yuv_to_rgb(y, u, v, r, g, b);
    worst = std::max({worst, std::abs(r - r0), std::abs(g - g0), std::abs(b - b0)});
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("yuv_to_rgb_raw: gray identity holds for arbitrary chroma") {
  Rng rng(12);
  for (int i = 0; i < 20000; ++i) {
    const double y0 = rng.uniform();
    const double u = rng.uniform(-1, 1), v = rng.uniform(-1, 1);
    double r, g, b;
    yuv_to_rgb_raw(y0, u, v, r, g, b);
    CHECK(rgb_to_gray(r, g, b) == doctest::Approx(y0).epsilon(1e-9));
  }
}

TEST_CASE("yuv_to_rgb_gamut: in [0,1], gray-preserving even out of gamut") {
  Rng rng(13);
  double worst = 0;
  for (int i = 0; i < 20000; ++i) {
    const double y0 = rng.uniform();
    const double u = rng.uniform(-1, 1), v = rng.uniform(-1, 1);
    double r, g, b;
    yuv_to_rgb_gamut(y0, u, v, r, g, b);
    CHECK(r >= 0.0);
    CHECK(r <= 1.0);
    CHECK(g >= 0.0);
    CHECK(g <= 1.0);
    CHECK(b >= 0.0);
    CHECK(b <= 1.0);
    worst = std::max(worst, std::abs(rgb_to_gray(r, g, b) - y0));
  }
  CHECK(worst < 1e-9);

  // per-channel clamping would break the identity here; gamut mapping keeps it
  double r, g, b;
  yuv_to_rgb_gamut(0.02, -1.0, 1.0, r, g, b);
  CHECK(rgb_to_gray(r, g, b) == doctest::Approx(0.02).epsilon(1e-9));
}

TEST_CASE("normalize: midpoint, inverse pair, display clamping") {
  CHECK(rgb_to_model(0.5f) == 0.f);
  CHECK(rgb_to_display(rgb_to_model(0.37f)) == doctest::Approx(0.37f));
  CHECK(rgb_to_display(1.2f) == 1.0f);
  CHECK(rgb_to_display(-1.6f) == 0.0f);

  FloatImage img = make_image(2, 2, 3);
  img.pix.assign(12, 0.5f);
  FloatImage model = normalize(img, NormDir::kToModel);
  CHECK(model.pix[0] == 0.f);
  FloatImage back = normalize(model, NormDir::kToDisplay);
  CHECK(back.pix[0] == 0.5f);
}

TEST_CASE("image-level conversions guard their color space") {
  FloatImage rgb = make_image(2, 2, 3, ColorSpace::kRGB);
  FloatImage yuv = image_rgb_to_yuv(rgb);
  CHECK(yuv.space == ColorSpace::kYUV);
  CHECK_THROWS_AS(image_rgb_to_yuv(yuv), Error);
  CHECK_THROWS_AS(image_yuv_to_rgb(rgb), Error);
  CHECK_THROWS_AS(image_rgb_to_gray(yuv), Error);
  CHECK(image_rgb_to_gray(rgb).c == 1);
  CHECK(image_yuv_to_rgb(yuv).space == ColorSpace::kRGB);
}
