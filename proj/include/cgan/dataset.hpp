#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cgan/colorspace.hpp"
#include "cgan/image_io.hpp"
#include "cgan/tensor.hpp"

namespace cgan {

// n distinct RGB triples (double precision) on the iso-gray plane
// rgb_to_gray(r,g,b) == g0, all inside the unit cube. Fails when g0 is too
// close to 0 or 1 to admit n well-separated solutions.
std::vector<std::array<double, 3>> iso_gray_palette(double g0, int n, uint64_t seed);

struct U8Color {
  uint8_t r, g, b;
  bool operator==(const U8Color& o) const { return r == o.r && g == o.g && b == o.b; }
};

// Palette on the 8-bit grid: every entry satisfies 299 r + 587 g + 114 b ==
// gray_key exactly in integer arithmetic, so quantized renderings of one gray
// level share their gray value to the last bit of the integer formula.
// gray_key is in [0, 255000]; the corresponding unit gray is gray_key/255000.
std::vector<U8Color> iso_gray_palette_u8(int gray_key, int n, uint64_t seed);

// Synthetic iso-gray dataset: flat-colored rectangles whose gray level comes
// from a small fixed set while the color is drawn from that level's palette.
// The conditional color distribution given the grayscale image is multi-modal
// by construction.
struct SynthSpec {
  int count = 0;
  int size = 32;
  int palette_size = 6;
  std::vector<int> gray_keys = {63700, 102000, 140300, 173400};
  int min_rects = 2, max_rects = 5;
  uint64_t seed = 1;
};

struct SynthRegion {
  int x0 = 0, y0 = 0, w = 0, h = 0;
  int level = 0;  // index into gray_keys
  int color = 0;  // index into that level's palette
};

struct SynthRecord {
  uint64_t rng_seed = 0;
  std::vector<SynthRegion> regions;  // regions[0] covers the whole image
};

SynthRecord synth_layout(const SynthSpec& spec, int index);
ImageU8 render_synth(const SynthSpec& spec, const SynthRecord& rec);
std::vector<std::vector<U8Color>> synth_palettes(const SynthSpec& spec);

// Writes img_%05d.png files plus manifest.txt into out_dir.
void write_synth_dataset(const SynthSpec& spec, const std::string& out_dir);
std::string synth_manifest(const SynthSpec& spec);

// One image source: a lexicographically indexed directory of PNG/PPM files,
// or an in-memory synthetic spec. Both produce size x size RGB display-range
// images deterministically per index.
class DatasetHandle {
 public:
  static DatasetHandle from_dir(const std::string& dir, int image_size);
  static DatasetHandle synthetic(const SynthSpec& spec);

  int size() const { return count_; }
  int image_size() const { return image_size_; }
  bool is_synthetic() const { return synthetic_; }
  const SynthSpec& synth_spec() const { return spec_; }
  const std::vector<std::string>& files() const { return files_; }

  FloatImage color(int index) const;

 private:
  bool synthetic_ = false;
  int count_ = 0;
  int image_size_ = 0;
  SynthSpec spec_;
  std::vector<std::string> files_;
};

// Largest centered square crop, then bilinear resize with half-pixel centers
// and edge clamping. A square input already at the target size is returned
// untouched.
FloatImage center_crop_resize(const FloatImage& img, int s);

struct ImageBatch {
  Tensor<float> color;  // [m,s,s,3], model range [-1,1]
  Tensor<float> gray;   // [m,s,s,1], display range [0,1]
  std::vector<int> ids;
};

ImageBatch make_batch(const DatasetHandle& data, const std::vector<int>& ids);

// Epoch sampler: uniform without replacement, reshuffled each epoch with
// seed base_seed + epoch. Trailing images that do not fill a batch are
// carried over by starting a fresh epoch.
class BatchSampler {
 public:
  BatchSampler(const DatasetHandle& data, int m, uint64_t base_seed);
  ImageBatch next();
  const std::vector<int>& epoch_order() const { return perm_; }
  int epoch() const { return epoch_; }

 private:
  void reshuffle();
  const DatasetHandle* data_;
  int m_;
  uint64_t base_seed_;
  int epoch_ = 0;
  size_t pos_ = 0;
  std::vector<int> perm_;
};

enum class NoiseDist { kNormal, kUniform };

// [m, s_z] noise batch, i.i.d. per element, deterministic per seed.
Tensor<float> sample_noise(int m, int s_z, uint64_t seed, NoiseDist dist = NoiseDist::kNormal);

}  // namespace cgan
