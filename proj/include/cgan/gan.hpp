#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cgan/colorspace.hpp"
#include "cgan/nn.hpp"
#include "cgan/rng.hpp"
#include "cgan/tensor.hpp"

namespace cgan {

enum class ColorMode { kYUV, kRGB };

inline const char* to_string(ColorMode m) { return m == ColorMode::kYUV ? "yuv" : "rgb"; }

enum class GenLoss { kSaturating, kNonSaturating };

inline const char* to_string(GenLoss v) { return v == GenLoss::kSaturating ? "saturating" : "nonsaturating"; }

// Fully convolutional generator: stride 1 everywhere so feature maps keep the
// input's spatial extent, the grayscale condition re-concatenated at every
// configured layer, noise planes concatenated at the first layers.
struct GeneratorSpec {
  int num_layers = 6;
  int kernel = 5;
  std::vector<int> widths = {64, 128, 256, 128, 64, 2};  // last entry = output channels
  std::vector<int> noise_layers = {1, 2, 3};             // 1-based layer indices
  std::vector<int> cond_layers = {1, 2, 3, 4, 5, 6};
  int noise_channels_per_site = 1;
  int s_z = 100;
  int image_size = 64;
  bool tiled_noise = false;  // default: learned projection z -> s*s*c planes
  float bn_epsilon = 1e-5f;
  float bn_momentum = 0.9f;

  int out_channels() const { return widths.back(); }
  bool has_noise(int layer) const {
    return std::find(noise_layers.begin(), noise_layers.end(), layer) != noise_layers.end();
  }
  bool has_cond(int layer) const {
    return std::find(cond_layers.begin(), cond_layers.end(), layer) != cond_layers.end();
  }

  void validate() const {
    if (num_layers < 1) fail("generator spec: need at least one layer");
    if (static_cast<int>(widths.size()) != num_layers)
      fail("generator spec: widths count " + std::to_string(widths.size()) + " != num_layers " +
           std::to_string(num_layers));
    for (int w : widths)
      if (w < 1) fail("generator spec: widths must be >= 1");
    if (kernel < 1 || kernel % 2 == 0) fail("generator spec: kernel must be odd and >= 1");
    for (int l : noise_layers)
      if (l < 1 || l > num_layers) fail("generator spec: noise layer index out of range");
    for (int l : cond_layers)
      if (l < 1 || l > num_layers) fail("generator spec: condition layer index out of range");
    if (!has_cond(1) && !has_noise(1)) fail("generator spec: layer 1 receives no input");
    if (noise_channels_per_site < 1) fail("generator spec: noise channels per site must be >= 1");
    if (s_z < 1) fail("generator spec: s_z must be >= 1");
    if (image_size < 1) fail("generator spec: image size must be >= 1");
  }
};

struct DiscriminatorSpec {
  std::vector<int> widths = {64, 128, 256, 512};
  std::vector<int> kernels = {5, 5, 5, 3};
  int stride = 2;
  int image_size = 64;
  bool conditional = false;  // concatenates the grayscale condition as a 4th input channel
  float bn_epsilon = 1e-5f;
  float bn_momentum = 0.9f;

  void validate() const {
    if (widths.empty() || widths.size() != kernels.size()) fail("discriminator spec: widths/kernels mismatch");
    for (int w : widths)
      if (w < 1) fail("discriminator spec: widths must be >= 1");
    if (stride != 2) fail("discriminator spec: stride must be 2");
    if (image_size < 1) fail("discriminator spec: image size must be >= 1");
  }

  int head_spatial() const {
    int s = image_size;
    for (size_t i = 0; i < widths.size(); ++i) s = (s + 1) / 2;
    return s;
  }
};

template <class T>
struct Generator {
  GeneratorSpec spec;
  std::vector<Conv2DLayer<T>> convs;
  std::vector<BatchNormLayer<T>> bns;        // one per hidden layer
  std::vector<DenseLayer<T>> noise_projs;    // one per injection site, in layer order

  Generator() = default;

  Generator(const GeneratorSpec& sp, uint64_t seed) : spec(sp) {
    spec.validate();
    Rng streams(seed);
    const int s = spec.image_size;
    int prev = 0;
    for (int l = 1; l <= spec.num_layers; ++l) {
      int cin = prev;
      if (spec.has_cond(l)) cin += 1;
      if (spec.has_noise(l)) cin += spec.noise_channels_per_site;
      const int cout = spec.widths[static_cast<size_t>(l - 1)];
      convs.emplace_back(spec.kernel, cin, cout, 1, streams.next_u64());
      if (l < spec.num_layers) {
        bns.emplace_back(cout);
        bns.back().epsilon = static_cast<T>(spec.bn_epsilon);
        bns.back().momentum = static_cast<T>(spec.bn_momentum);
      }
      if (spec.has_noise(l) && !spec.tiled_noise)
        noise_projs.emplace_back(spec.s_z, s * s * spec.noise_channels_per_site, streams.next_u64());
      prev = cout;
    }
  }

  // y: [m,s,s,1] grayscale condition in [0,1]; z: [m,s_z].
  // Returns [m,s,s,out_channels] in (-1,1). layer_shapes, when given, receives
  // each layer's output shape.
  Tensor<T> forward(Tape<T>& tape, const Tensor<T>& y, const Tensor<T>& z, BnMode mode,
                    std::vector<Shape>* layer_shapes = nullptr) {
    if (y.rank() != 4 || y.dim(3) != 1) fail("generator: condition must be [m,s,s,1], got " + to_string(y.shape()));
    const int m = y.dim(0);
    const int s = spec.image_size;
    if (y.dim(1) != s || y.dim(2) != s)
      fail("generator: spec expects image size " + std::to_string(s) + ", got input " + to_string(y.shape()));
    if (z.rank() != 2 || z.dim(0) != m || z.dim(1) != spec.s_z)
      fail("generator: noise must be [" + std::to_string(m) + "," + std::to_string(spec.s_z) + "], got " +
           to_string(z.shape()));

    // one stack of noise planes per injection site
    std::vector<Tensor<T>> planes;
    {
      const int c = spec.noise_channels_per_site;
      size_t proj = 0;
      for (int l = 1; l <= spec.num_layers; ++l) {
        if (!spec.has_noise(l)) continue;
        if (spec.tiled_noise) {
          Tensor<T> t = Tensor<T>::zeros({m, s, s, c});
          for (int i = 0; i < m; ++i) {
            const T* zi = z.data() + static_cast<int64_t>(i) * spec.s_z;
            T* ti = t.data() + static_cast<int64_t>(i) * s * s * c;
            const int64_t plane = static_cast<int64_t>(s) * s * c;
            for (int64_t q = 0; q < plane; ++q) ti[q] = zi[q % spec.s_z];
          }
          planes.push_back(std::move(t));
        } else {
          Tensor<T> flat = dense(tape, z, noise_projs[proj++]);
          planes.push_back(reshape(tape, flat, {m, s, s, c}));
        }
      }
    }

    Tensor<T> h;
    size_t site = 0;
    for (int l = 1; l <= spec.num_layers; ++l) {
      std::vector<Tensor<T>> parts;
      if (l > 1) parts.push_back(h);
      if (spec.has_cond(l)) parts.push_back(y);
      if (spec.has_noise(l)) parts.push_back(planes[site++]);
      Tensor<T> x = parts.size() == 1 ? parts[0] : concat_channels(tape, parts);
      h = conv2d(tape, x, convs[static_cast<size_t>(l - 1)]);
      if (l < spec.num_layers) {
        h = batchnorm(tape, h, bns[static_cast<size_t>(l - 1)], mode);
        h = relu(tape, h);
      } else {
        h = tanh(tape, h);
      }
      if (layer_shapes) layer_shapes->push_back(h.shape());
    }
    return h;
  }

  std::vector<NamedTensor<T>> params() {
    std::vector<NamedTensor<T>> out;
    size_t proj = 0;
    for (int l = 1; l <= spec.num_layers; ++l) {
      const std::string p = "g.conv" + std::to_string(l);
      out.push_back({p + ".kernel", convs[static_cast<size_t>(l - 1)].kernel});
      out.push_back({p + ".bias", convs[static_cast<size_t>(l - 1)].bias});
      if (l < spec.num_layers) {
        const std::string b = "g.bn" + std::to_string(l);
        out.push_back({b + ".gamma", bns[static_cast<size_t>(l - 1)].gamma});
        out.push_back({b + ".beta", bns[static_cast<size_t>(l - 1)].beta});
      }
      if (spec.has_noise(l) && !spec.tiled_noise) {
        const std::string q = "g.proj" + std::to_string(l);
        out.push_back({q + ".weight", noise_projs[proj].weight});
        out.push_back({q + ".bias", noise_projs[proj].bias});
        ++proj;
      }
    }
    return out;
  }

  std::vector<NamedTensor<T>> state() {
    std::vector<NamedTensor<T>> out;
    for (int l = 1; l < spec.num_layers; ++l) {
      const std::string b = "g.bn" + std::to_string(l);
      out.push_back({b + ".running_mean", bns[static_cast<size_t>(l - 1)].running_mean});
      out.push_back({b + ".running_var", bns[static_cast<size_t>(l - 1)].running_var});
    }
    return out;
  }
};

template <class T>
struct Discriminator {
  DiscriminatorSpec spec;
  std::vector<Conv2DLayer<T>> convs;
  std::vector<BatchNormLayer<T>> bns;  // layers 2..n
  DenseLayer<T> head;

  Discriminator() = default;

  Discriminator(const DiscriminatorSpec& sp, uint64_t seed) : spec(sp) {
    spec.validate();
    Rng streams(seed);
    int cin = spec.conditional ? 4 : 3;
    for (size_t i = 0; i < spec.widths.size(); ++i) {
      convs.emplace_back(spec.kernels[i], cin, spec.widths[i], spec.stride, streams.next_u64());
      if (i > 0) {
        bns.emplace_back(spec.widths[i]);
        bns.back().epsilon = static_cast<T>(spec.bn_epsilon);
        bns.back().momentum = static_cast<T>(spec.bn_momentum);
      }
      cin = spec.widths[i];
    }
    const int hs = spec.head_spatial();
    head = DenseLayer<T>(hs * hs * spec.widths.back(), 1, streams.next_u64());
  }

  // x: [m,s,s,3] model-normalized color. Logits, [m,1].
  Tensor<T> forward_logits(Tape<T>& tape, const Tensor<T>& x, BnMode mode, const Tensor<T>* cond = nullptr,
                           std::vector<Shape>* layer_shapes = nullptr) {
    if (x.rank() != 4 || x.dim(3) != 3) fail("discriminator: input must be [m,s,s,3], got " + to_string(x.shape()));
    if (x.dim(1) != spec.image_size || x.dim(2) != spec.image_size)
      fail("discriminator: spec expects image size " + std::to_string(spec.image_size) + ", got " +
           to_string(x.shape()));
    Tensor<T> h = x;
    if (spec.conditional) {
      if (!cond) fail("discriminator: conditional spec needs the grayscale condition");
      h = concat_channels(tape, {h, *cond});
    }
    for (size_t i = 0; i < convs.size(); ++i) {
      h = conv2d(tape, h, convs[i]);
      if (i > 0) h = batchnorm(tape, h, bns[i - 1], mode);
      h = leaky_relu(tape, h, T(0.2));
      if (layer_shapes) layer_shapes->push_back(h.shape());
    }
    const int m = h.dim(0);
    h = reshape(tape, h, {m, h.dim(1) * h.dim(2) * h.dim(3)});
    return dense(tape, h, head);
  }

  Tensor<T> forward(Tape<T>& tape, const Tensor<T>& x, BnMode mode, const Tensor<T>* cond = nullptr) {
    return sigmoid(tape, forward_logits(tape, x, mode, cond));
  }

  std::vector<NamedTensor<T>> params() {
    std::vector<NamedTensor<T>> out;
    for (size_t i = 0; i < convs.size(); ++i) {
      const std::string p = "d.conv" + std::to_string(i + 1);
      out.push_back({p + ".kernel", convs[i].kernel});
      out.push_back({p + ".bias", convs[i].bias});
      if (i > 0) {
        const std::string b = "d.bn" + std::to_string(i + 1);
        out.push_back({b + ".gamma", bns[i - 1].gamma});
        out.push_back({b + ".beta", bns[i - 1].beta});
      }
    }
    out.push_back({"d.head.weight", head.weight});
    out.push_back({"d.head.bias", head.bias});
    return out;
  }

  std::vector<NamedTensor<T>> state() {
    std::vector<NamedTensor<T>> out;
    for (size_t i = 1; i < convs.size(); ++i) {
      const std::string b = "d.bn" + std::to_string(i + 1);
      out.push_back({b + ".running_mean", bns[i - 1].running_mean});
      out.push_back({b + ".running_var", bns[i - 1].running_var});
    }
    return out;
  }
};

// ---- differentiable color assembly (training path, no clamping) -----------

// Per-pixel grayscale of a display-range RGB tensor [m,s,s,3].
template <class T>
Tensor<T> gray_of_rgb(Tape<T>& tape, const Tensor<T>& rgb) {
  Tensor<T> r = slice_channels(tape, rgb, 0, 1);
  Tensor<T> g = slice_channels(tape, rgb, 1, 2);
  Tensor<T> b = slice_channels(tape, rgb, 2, 3);
  return add(tape, scale(tape, r, Yuv<T>::kWr),
             add(tape, scale(tape, g, Yuv<T>::kWg), scale(tape, b, Yuv<T>::kWb)));
}

// (y in [0,1], uv in [-1,1]) -> display-range RGB, linear (no gamut handling
// so gradients pass through), mirroring yuv_to_rgb_raw.
template <class T>
Tensor<T> yuv_to_rgb_tensor(Tape<T>& tape, const Tensor<T>& y, const Tensor<T>& uv) {
  Tensor<T> u = slice_channels(tape, uv, 0, 1);
  Tensor<T> v = slice_channels(tape, uv, 1, 2);
  Tensor<T> r = add(tape, y, scale(tape, v, Yuv<T>::kSv / Yuv<T>::kKv));
  Tensor<T> b = add(tape, y, scale(tape, u, Yuv<T>::kSu / Yuv<T>::kKu));
  Tensor<T> g = add(tape, scale(tape, y, T(1) / Yuv<T>::kWg),
                    add(tape, scale(tape, r, -Yuv<T>::kWr / Yuv<T>::kWg),
                        scale(tape, b, -Yuv<T>::kWb / Yuv<T>::kWg)));
  return concat_channels(tape, {r, g, b});
}

// Chroma of a display-range RGB tensor given its gray channel.
template <class T>
Tensor<T> chroma_of_rgb(Tape<T>& tape, const Tensor<T>& rgb, const Tensor<T>& y) {
  Tensor<T> r = slice_channels(tape, rgb, 0, 1);
  Tensor<T> b = slice_channels(tape, rgb, 2, 3);
  Tensor<T> u = scale(tape, sub(tape, b, y), Yuv<T>::kKu / Yuv<T>::kSu);
  Tensor<T> v = scale(tape, sub(tape, r, y), Yuv<T>::kKv / Yuv<T>::kSv);
  return concat_channels(tape, {u, v});
}

// Generator output -> the model-normalized color the discriminator scores.
template <class T>
Tensor<T> fake_d_input(Tape<T>& tape, const Tensor<T>& y, const Tensor<T>& g_out, ColorMode mode) {
  if (mode == ColorMode::kRGB) return g_out;
  Tensor<T> rgb = yuv_to_rgb_tensor(tape, y, g_out);
  return add_scalar(tape, scale(tape, rgb, T(2)), T(-1));
}

// Real color batch -> the discriminator input, traversing the same YUV
// assembly as generated samples so both sides see identical preprocessing.
template <class T>
Tensor<T> real_d_input(Tape<T>& tape, const Tensor<T>& color_model, const Tensor<T>& y, ColorMode mode) {
  if (mode == ColorMode::kRGB) return color_model;
  Tensor<T> display = add_scalar(tape, scale(tape, color_model, T(0.5)), T(0.5));
  Tensor<T> uv = chroma_of_rgb(tape, display, y);
  return fake_d_input(tape, y, uv, mode);
}

// ---- losses ---------------------------------------------------------------

// -(1/m) sum [log D(x) + log(1 - D(G))] from logits: softplus keeps the
// computation finite for any logit magnitude.
template <class T>
Tensor<T> loss_discriminator_logits(Tape<T>& tape, const Tensor<T>& logit_real, const Tensor<T>& logit_fake) {
  Tensor<T> lr = softplus(tape, scale(tape, logit_real, T(-1)));
  Tensor<T> lf = softplus(tape, logit_fake);
  return reduce_mean(tape, add(tape, lr, lf));
}

// saturating: (1/m) sum log(1 - D(G)) (paper-literal objective, minimized);
// nonsaturating: -(1/m) sum log D(G).
template <class T>
Tensor<T> loss_generator_logits(Tape<T>& tape, const Tensor<T>& logit_fake, GenLoss variant) {
  if (variant == GenLoss::kSaturating)
    return scale(tape, reduce_mean(tape, softplus(tape, logit_fake)), T(-1));
  return reduce_mean(tape, softplus(tape, scale(tape, logit_fake, T(-1))));
}

namespace detail {
// probabilities in (0,1) -> logits; the clamp keeps float sigmoid outputs that
// rounded to exactly 0 or 1 inside the domain
template <class T>
Tensor<T> prob_to_logit(Tape<T>& tape, const Tensor<T>& p) {
  const T eps = static_cast<T>(1e-7);
  Tensor<T> q = clamp(tape, p, eps, T(1) - eps);
  Tensor<T> one_minus = add_scalar(tape, scale(tape, q, T(-1)), T(1));
  return sub(tape, log(tape, q), log(tape, one_minus));
}
}  // namespace detail

// Probability-surface variants of the two losses (identical values, computed
// through the logit-space path).
template <class T>
Tensor<T> loss_discriminator(Tape<T>& tape, const Tensor<T>& d_real, const Tensor<T>& d_fake) {
  return loss_discriminator_logits(tape, detail::prob_to_logit(tape, d_real), detail::prob_to_logit(tape, d_fake));
}

template <class T>
Tensor<T> loss_generator(Tape<T>& tape, const Tensor<T>& d_fake, GenLoss variant) {
  return loss_generator_logits(tape, detail::prob_to_logit(tape, d_fake), variant);
}

// Eq-4-style grayscale recovery loss: (1/(m*s*s)) sum |y - Gray(g_rgb)|,
// g_rgb in display range. RGB mode only.
template <class T>
Tensor<T> loss_l1_gray(Tape<T>& tape, const Tensor<T>& y, const Tensor<T>& g_rgb, ColorMode mode) {
  if (mode != ColorMode::kRGB) fail("loss_l1_gray: only defined for RGB mode");
  if (y.shape() != Shape{g_rgb.dim(0), g_rgb.dim(1), g_rgb.dim(2), 1})
    fail("loss_l1_gray: shape mismatch " + to_string(y.shape()) + " vs " + to_string(g_rgb.shape()));
  Tensor<T> gray = gray_of_rgb(tape, g_rgb);
  return reduce_mean(tape, abs(tape, sub(tape, y, gray)));
}

template <class T>
Tensor<T> combined_generator_objective(Tape<T>& tape, const Tensor<T>& loss_g, const Tensor<T>& l1, T lambda) {
  if (lambda < T(0)) fail("combined objective: lambda must be >= 0");
  if (lambda == T(0)) return loss_g;
  return add(tape, loss_g, scale(tape, l1, lambda));
}

// ---- display-side assembly (inference path, gamut mapped) ------------------

// Builds the display-range color image for one sample. YUV mode stacks
// (y, U, V) and converts with chroma-preserving gamut mapping, so the gray of
// the result reproduces y up to rounding; RGB mode denormalizes directly.
inline FloatImage assemble_color(const float* y, const float* g_out, int s, int out_channels, ColorMode mode) {
  FloatImage img = make_image(s, s, 3);
  const int64_t npix = static_cast<int64_t>(s) * s;
  if (mode == ColorMode::kYUV) {
    if (out_channels != 2) fail("assemble_color: YUV mode expects 2 generated channels");
    for (int64_t p = 0; p < npix; ++p)
      yuv_to_rgb_gamut(y[p], g_out[2 * p], g_out[2 * p + 1], img.pix[3 * p], img.pix[3 * p + 1],
                       img.pix[3 * p + 2]);
  } else {
    if (out_channels != 3) fail("assemble_color: RGB mode expects 3 generated channels");
    for (int64_t p = 0; p < npix; ++p)
      for (int c = 0; c < 3; ++c) img.pix[3 * p + c] = rgb_to_display(g_out[3 * p + c]);
  }
  return img;
}

}  // namespace cgan
