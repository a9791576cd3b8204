#include "cgan/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cgan/rng.hpp"

namespace cgan {

namespace fs = std::filesystem;

std::vector<std::array<double, 3>> iso_gray_palette(double g0, int n, uint64_t seed) {
  if (!(g0 > 0.0 && g0 < 1.0)) fail("iso_gray_palette: g0 must be in (0,1)");
  if (n < 1) fail("iso_gray_palette: n must be >= 1");
  constexpr double kMinDist = 0.08;
  std::vector<std::array<double, 3>> out;
  Rng rng(seed);
  const int kMaxAttempts = 40000;
  for (int attempt = 0; attempt < kMaxAttempts && static_cast<int>(out.size()) < n; ++attempt) {
    const double r = rng.uniform();
    const double b = rng.uniform();
    const double g = (g0 - Yuv<double>::kWr * r - Yuv<double>::kWb * b) / Yuv<double>::kWg;
    if (g < 0.0 || g > 1.0) continue;
    bool ok = true;
    for (const auto& c : out) {
      const double d2 = (c[0] - r) * (c[0] - r) + (c[1] - g) * (c[1] - g) + (c[2] - b) * (c[2] - b);
      if (d2 < kMinDist * kMinDist) {
        ok = false;
        break;
      }
    }
    if (ok) out.push_back({r, g, b});
  }
  if (static_cast<int>(out.size()) < n)
    fail("iso_gray_palette: gray level " + std::to_string(g0) + " admits fewer than " + std::to_string(n) +
         " distinct in-gamut colors");
  return out;
}

std::vector<U8Color> iso_gray_palette_u8(int gray_key, int n, uint64_t seed) {
  if (gray_key <= 0 || gray_key >= 255000) fail("iso_gray_palette_u8: gray_key out of range");
  if (n < 1) fail("iso_gray_palette_u8: n must be >= 1");
  std::vector<U8Color> candidates;
  for (int r = 0; r <= 255; ++r) {
    const int rest = gray_key - 299 * r;
    if (rest < 0) break;
    for (int b = 0; b <= 255; ++b) {
      const int t = rest - 114 * b;
      if (t < 0) break;
      if (t % 587 == 0 && t / 587 <= 255)
        candidates.push_back({static_cast<uint8_t>(r), static_cast<uint8_t>(t / 587), static_cast<uint8_t>(b)});
    }
  }
  if (static_cast<int>(candidates.size()) < n)
    fail("iso_gray_palette_u8: gray key " + std::to_string(gray_key) + " admits only " +
         std::to_string(candidates.size()) + " grid colors, need " + std::to_string(n));
  auto dist2 = [](const U8Color& a, const U8Color& b) {
    const int dr = int(a.r) - int(b.r), dg = int(a.g) - int(b.g), db = int(a.b) - int(b.b);
    return dr * dr + dg * dg + db * db;
  };
  // greedy farthest-point pick keeps the palette visually distinct
  Rng rng(seed);
  std::vector<U8Color> out;
  out.push_back(candidates[static_cast<size_t>(rng.below(static_cast<int>(candidates.size())))]);
  while (static_cast<int>(out.size()) < n) {
    int best = -1;
    int best_d = -1;
    for (size_t i = 0; i < candidates.size(); ++i) {
      int d = std::numeric_limits<int>::max();
      for (const auto& c : out) d = std::min(d, dist2(candidates[i], c));
      if (d > best_d) {
        best_d = d;
        best = static_cast<int>(i);
      }
    }
    if (best_d == 0) fail("iso_gray_palette_u8: ran out of distinct colors");
    out.push_back(candidates[static_cast<size_t>(best)]);
  }
  return out;
}

std::vector<std::vector<U8Color>> synth_palettes(const SynthSpec& spec) {
  std::vector<std::vector<U8Color>> pals;
  pals.reserve(spec.gray_keys.size());
  for (size_t level = 0; level < spec.gray_keys.size(); ++level)
    pals.push_back(iso_gray_palette_u8(spec.gray_keys[level], spec.palette_size,
                                       Rng::mix(spec.seed, 0xC0109500ull + level)));
  return pals;
}

SynthRecord synth_layout(const SynthSpec& spec, int index) {
  if (spec.size < 8) fail("synth: image size must be >= 8");
  if (spec.min_rects < 1 || spec.max_rects < spec.min_rects) fail("synth: bad rect count range");
  SynthRecord rec;
  rec.rng_seed = Rng::mix(spec.seed, 0x5EED0000ull + static_cast<uint64_t>(index));
  Rng rng(rec.rng_seed);
  const int levels = static_cast<int>(spec.gray_keys.size());
  const int s = spec.size;
  SynthRegion bg;
  bg.x0 = 0;
  bg.y0 = 0;
  bg.w = s;
  bg.h = s;
  bg.level = rng.below(levels);
  bg.color = rng.below(spec.palette_size);
  rec.regions.push_back(bg);
  const int nrect = spec.min_rects + rng.below(spec.max_rects - spec.min_rects + 1);
  for (int i = 0; i < nrect; ++i) {
    SynthRegion r;
    const int min_side = std::max(2, s / 8);
    r.w = min_side + rng.below(std::max(1, s / 2));
    r.h = min_side + rng.below(std::max(1, s / 2));
    r.w = std::min(r.w, s);
    r.h = std::min(r.h, s);
    r.x0 = rng.below(s - r.w + 1);
    r.y0 = rng.below(s - r.h + 1);
    r.level = rng.below(levels);
    r.color = rng.below(spec.palette_size);
    rec.regions.push_back(r);
  }
  return rec;
}

ImageU8 render_synth(const SynthSpec& spec, const SynthRecord& rec) {
  const auto pals = synth_palettes(spec);
  ImageU8 img = make_u8(spec.size, spec.size, 3);
  for (const auto& r : rec.regions) {
    const U8Color c = pals[static_cast<size_t>(r.level)][static_cast<size_t>(r.color)];
    for (int y = r.y0; y < r.y0 + r.h; ++y)
      for (int x = r.x0; x < r.x0 + r.w; ++x) {
        uint8_t* p = &img.pix[(static_cast<size_t>(y) * spec.size + x) * 3];
        p[0] = c.r;
        p[1] = c.g;
        p[2] = c.b;
      }
  }
  return img;
}

std::string synth_manifest(const SynthSpec& spec) {
  std::ostringstream os;
  os << "# synthetic iso-gray dataset manifest v1\n";
  os << "count=" << spec.count << " size=" << spec.size << " seed=" << spec.seed
     << " palette_size=" << spec.palette_size << " rects=" << spec.min_rects << ".." << spec.max_rects << "\n";
  os << "gray_keys=";
  for (size_t i = 0; i < spec.gray_keys.size(); ++i) os << (i ? "," : "") << spec.gray_keys[i];
  os << "\n";
  const auto pals = synth_palettes(spec);
  for (size_t level = 0; level < pals.size(); ++level) {
    os << "palette" << level << "=";
    for (size_t i = 0; i < pals[level].size(); ++i) {
      const auto& c = pals[level][i];
      os << (i ? " " : "") << int(c.r) << "," << int(c.g) << "," << int(c.b);
    }
    os << "\n";
  }
  for (int i = 0; i < spec.count; ++i) {
    const SynthRecord rec = synth_layout(spec, i);
    os << "img=" << i << " seed=" << rec.rng_seed << " regions=";
    for (size_t r = 0; r < rec.regions.size(); ++r) {
      const auto& g = rec.regions[r];
      os << (r ? ";" : "") << g.x0 << ":" << g.y0 << ":" << g.w << ":" << g.h << ":" << g.level << ":" << g.color;
    }
    os << "\n";
  }
  return os.str();
}

void write_synth_dataset(const SynthSpec& spec, const std::string& out_dir) {
  fs::create_directories(out_dir);
  char name[64];
  for (int i = 0; i < spec.count; ++i) {
    const ImageU8 img = render_synth(spec, synth_layout(spec, i));
    std::snprintf(name, sizeof name, "img_%05d.png", i);
    write_png((fs::path(out_dir) / name).string(), img);
  }
  std::ofstream mf(fs::path(out_dir) / "manifest.txt", std::ios::trunc);
  if (!mf) fail("cannot write manifest in " + out_dir);
  mf << synth_manifest(spec);
}

DatasetHandle DatasetHandle::from_dir(const std::string& dir, int image_size) {
  if (image_size < 1) fail("dataset: image size must be >= 1");
  DatasetHandle h;
  h.synthetic_ = false;
  h.image_size_ = image_size;
  if (!fs::is_directory(dir)) fail("dataset: not a directory: " + dir);
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string ext = e.path().extension().string();
    if (ext == ".png" || ext == ".ppm" || ext == ".pgm") h.files_.push_back(e.path().string());
  }
  std::sort(h.files_.begin(), h.files_.end());
  h.count_ = static_cast<int>(h.files_.size());
  if (h.count_ == 0) fail("dataset: no .png/.ppm images in " + dir);
  return h;
}

DatasetHandle DatasetHandle::synthetic(const SynthSpec& spec) {
  if (spec.count < 1) fail("dataset: synthetic count must be >= 1");
  DatasetHandle h;
  h.synthetic_ = true;
  h.spec_ = spec;
  h.count_ = spec.count;
  h.image_size_ = spec.size;
  return h;
}

FloatImage DatasetHandle::color(int index) const {
  if (index < 0 || index >= count_) fail("dataset: index out of range");
  if (synthetic_) return to_float(render_synth(spec_, synth_layout(spec_, index)));
  return center_crop_resize(load_image(files_[static_cast<size_t>(index)]), image_size_);
}

FloatImage center_crop_resize(const FloatImage& img, int s) {
  if (img.h < 1 || img.w < 1) fail("center_crop_resize: empty image");
  if (s < 1) fail("center_crop_resize: bad target size");
  const int side = std::min(img.h, img.w);
  const int oy = (img.h - side) / 2;
  const int ox = (img.w - side) / 2;
  FloatImage crop = make_image(side, side, img.c, img.space);
  for (int y = 0; y < side; ++y)
    std::copy(img.px(oy + y, ox), img.px(oy + y, ox) + static_cast<size_t>(side) * img.c, crop.px(y, 0));
  if (side == s) return crop;

  FloatImage out = make_image(s, s, img.c, img.space);
  const double step = static_cast<double>(side) / s;
  for (int y = 0; y < s; ++y) {
    const double sy = (y + 0.5) * step - 0.5;
    const int y0 = std::clamp(static_cast<int>(std::floor(sy)), 0, side - 1);
    const int y1 = std::min(y0 + 1, side - 1);
    const double fy = std::clamp(sy - y0, 0.0, 1.0);
    for (int x = 0; x < s; ++x) {
      const double sx = (x + 0.5) * step - 0.5;
      const int x0 = std::clamp(static_cast<int>(std::floor(sx)), 0, side - 1);
      const int x1 = std::min(x0 + 1, side - 1);
      const double fx = std::clamp(sx - x0, 0.0, 1.0);
      for (int c = 0; c < img.c; ++c) {
        const double v00 = crop.px(y0, x0)[c], v01 = crop.px(y0, x1)[c];
        const double v10 = crop.px(y1, x0)[c], v11 = crop.px(y1, x1)[c];
        const double top = v00 + (v01 - v00) * fx;
        const double bot = v10 + (v11 - v10) * fx;
        out.px(y, x)[c] = static_cast<float>(top + (bot - top) * fy);
      }
    }
  }
  return out;
}

ImageBatch make_batch(const DatasetHandle& data, const std::vector<int>& ids) {
  if (ids.empty()) fail("make_batch: no indices");
  const int m = static_cast<int>(ids.size());
  const int s = data.image_size();
  ImageBatch batch;
  batch.ids = ids;
  batch.color = Tensor<float>::zeros({m, s, s, 3});
  batch.gray = Tensor<float>::zeros({m, s, s, 1});
  for (int i = 0; i < m; ++i) {
    const FloatImage im = data.color(ids[static_cast<size_t>(i)]);
    if (im.h != s || im.w != s || im.c != 3) fail("make_batch: bad image shape from dataset");
    float* c = batch.color.data() + static_cast<int64_t>(i) * s * s * 3;
    float* g = batch.gray.data() + static_cast<int64_t>(i) * s * s;
    for (int64_t p = 0; p < static_cast<int64_t>(s) * s; ++p) {
      const float r = im.pix[3 * p], gg = im.pix[3 * p + 1], b = im.pix[3 * p + 2];
      c[3 * p] = rgb_to_model(r);
      c[3 * p + 1] = rgb_to_model(gg);
      c[3 * p + 2] = rgb_to_model(b);
      g[p] = rgb_to_gray(r, gg, b);
    }
  }
  return batch;
}

BatchSampler::BatchSampler(const DatasetHandle& data, int m, uint64_t base_seed)
    : data_(&data), m_(m), base_seed_(base_seed) {
  if (m < 1) fail("sampler: m must be >= 1");
  if (m > data.size())
    fail("sampler: batch size " + std::to_string(m) + " exceeds dataset size " + std::to_string(data.size()));
  reshuffle();
}

void BatchSampler::reshuffle() {
  const int n = data_->size();
  perm_.resize(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) perm_[static_cast<size_t>(i)] = i;
  Rng rng(base_seed_ + static_cast<uint64_t>(epoch_));
  for (int i = n - 1; i > 0; --i) std::swap(perm_[static_cast<size_t>(i)], perm_[static_cast<size_t>(rng.below(i + 1))]);
  pos_ = 0;
}

ImageBatch BatchSampler::next() {
  if (pos_ + static_cast<size_t>(m_) > perm_.size()) {
    ++epoch_;
    reshuffle();
  }
  std::vector<int> ids(perm_.begin() + static_cast<long>(pos_), perm_.begin() + static_cast<long>(pos_) + m_);
  pos_ += static_cast<size_t>(m_);
  return make_batch(*data_, ids);
}

Tensor<float> sample_noise(int m, int s_z, uint64_t seed, NoiseDist dist) {
  if (m < 1 || s_z < 1) fail("sample_noise: bad shape");
  Tensor<float> z = Tensor<float>::zeros({m, s_z});
  Rng rng(seed);
  if (dist == NoiseDist::kNormal) {
    for (int64_t i = 0; i < z.size(); ++i) z.data()[i] = static_cast<float>(rng.normal());
  } else {
    for (int64_t i = 0; i < z.size(); ++i) z.data()[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
  }
  return z;
}

}  // namespace cgan
