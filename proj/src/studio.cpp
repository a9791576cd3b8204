#include "cgan/studio.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "cgan/image_io.hpp"

namespace cgan {

namespace {

BnMode infer_mode(BnInfer i) { return i == BnInfer::kBatchStats ? BnMode::kEvalBatch : BnMode::kEvalRunning; }

// one inference round: G forward + per-image display assembly
struct RoundOut {
  Tensor<float> g_out;
};

RoundOut run_round(TrainedModel& model, const Tensor<float>& gray, const Tensor<float>& z, BnMode mode) {
  Tape<float> tape;
  tape.set_recording(false);
  RoundOut r;
  r.g_out = model.gen.forward(tape, gray, z, mode);
  return r;
}

}  // namespace

ColorizationSet multi_round_colorize(TrainedModel& model, const Tensor<float>& gray, int k_test, uint64_t seed,
                                     const std::vector<uint8_t>* truth, bool strict) {
  if (gray.rank() != 4 || gray.dim(3) != 1) fail("multi-round: gray batch must be [m,s,s,1]");
  const int m = gray.dim(0);
  const int s = gray.dim(1);
  if (k_test < 1) fail("multi-round: k_test must be >= 1");
  if (model.cfg.bn_infer == BnInfer::kBatchStats && m < 2)
    fail("multi-round: batch-statistics normalization cannot run on a single-image batch; "
         "provide a heterogeneous batch of m >= 2 images");
  if (strict) {
    const int64_t plane = static_cast<int64_t>(s) * s;
    for (int a = 0; a < m; ++a)
      for (int b = a + 1; b < m; ++b)
        if (std::memcmp(gray.data() + a * plane, gray.data() + b * plane, sizeof(float) * plane) == 0)
          fail("multi-round: homogeneous batch rejected (images " + std::to_string(a) + " and " +
               std::to_string(b) + " are identical)");
  }

  ColorizationSet set;
  set.m = m;
  set.k_test = k_test;
  set.s = s;
  set.out_channels = model.cfg.gen.out_channels();
  set.mode = model.cfg.mode;
  set.bn_infer = model.cfg.bn_infer;
  set.seed = seed;
  set.gray.assign(gray.data(), gray.data() + gray.size());
  if (truth) {
    if (static_cast<int64_t>(truth->size()) != static_cast<int64_t>(m) * s * s * 3)
      fail("multi-round: truth size mismatch");
    set.truth = *truth;
    set.has_truth = true;
  }
  const int oc = set.out_channels;
  set.tiles.assign(static_cast<size_t>(m) * k_test * s * s * 3, 0);
  set.model_out.assign(static_cast<size_t>(m) * k_test * s * s * oc, 0.f);
  set.round_seeds.resize(static_cast<size_t>(k_test));
  set.noise.assign(static_cast<size_t>(k_test) * m * model.cfg.s_z, 0.f);

  const BnMode mode = infer_mode(model.cfg.bn_infer);
  const int64_t plane = static_cast<int64_t>(s) * s;
  for (int j = 0; j < k_test; ++j) {
    const uint64_t round_seed = Rng::mix(seed, static_cast<uint64_t>(j));
    set.round_seeds[static_cast<size_t>(j)] = round_seed;
    const Tensor<float> z = sample_noise(m, model.cfg.s_z, round_seed, model.cfg.noise_dist);
    std::copy(z.data(), z.data() + z.size(), set.noise.begin() + static_cast<int64_t>(j) * m * model.cfg.s_z);
    const RoundOut r = run_round(model, gray, z, mode);
    for (int i = 0; i < m; ++i) {
      const float* gi = gray.data() + i * plane;
      const float* oi = r.g_out.data() + i * plane * oc;
      const FloatImage img = assemble_color(gi, oi, s, oc, set.mode);
      const ImageU8 q = quantize_u8(img);
      std::copy(q.pix.begin(), q.pix.end(),
                set.tiles.begin() + ((static_cast<size_t>(i) * k_test + j) * plane) * 3);
      std::copy(oi, oi + plane * oc,
                set.model_out.begin() + ((static_cast<size_t>(i) * k_test + j) * plane) * oc);
    }
  }
  return set;
}

std::vector<uint8_t> regenerate_tile(TrainedModel& model, const ColorizationSet& set, int i, int j) {
  if (i < 0 || i >= set.m || j < 0 || j >= set.k_test) fail("regenerate_tile: index out of range");
  const int s = set.s;
  Tensor<float> gray = Tensor<float>::from({set.m, s, s, 1}, set.gray);
  Tensor<float> z = Tensor<float>::from({set.m, model.cfg.s_z},
                                        std::vector<float>(set.noise.begin() + static_cast<int64_t>(j) * set.m * model.cfg.s_z,
                                                           set.noise.begin() + static_cast<int64_t>(j + 1) * set.m * model.cfg.s_z));
  const RoundOut r = run_round(model, gray, z, infer_mode(set.bn_infer));
  const int64_t plane = static_cast<int64_t>(s) * s;
  const FloatImage img = assemble_color(set.gray_of(i), r.g_out.data() + i * plane * set.out_channels, s,
                                        set.out_channels, set.mode);
  return quantize_u8(img).pix;
}

DiversityReport diversity_score(const ColorizationSet& set) {
  if (set.k_test < 2) fail("diversity_score: needs k_test >= 2");
  DiversityReport rep;
  const int64_t plane = static_cast<int64_t>(set.s) * set.s * set.out_channels;
  const int k = set.k_test;
  for (int i = 0; i < set.m; ++i) {
    double acc = 0;
    for (int64_t p = 0; p < plane; ++p) {
      double mean = 0;
      for (int j = 0; j < k; ++j) mean += static_cast<double>(set.sample(i, j)[p]);
      mean /= k;
      double var = 0;
      for (int j = 0; j < k; ++j) {
        const double d = static_cast<double>(set.sample(i, j)[p]) - mean;
        var += d * d;
      }
      acc += std::sqrt(var / k);
    }
    rep.per_image.push_back(acc / static_cast<double>(plane));
  }
  double sum = 0;
  for (double d : rep.per_image) sum += d;
  rep.mean = sum / static_cast<double>(set.m);
  return rep;
}

double grayscale_consistency(const ColorizationSet& set) {
  double worst = 0;
  const int64_t plane = static_cast<int64_t>(set.s) * set.s;
  for (int i = 0; i < set.m; ++i) {
    const float* y = set.gray_of(i);
    for (int j = 0; j < set.k_test; ++j) {
      const uint8_t* t = set.tile(i, j);
      for (int64_t p = 0; p < plane; ++p) {
        const float g = rgb_to_gray(u8_to_unit(t[3 * p]), u8_to_unit(t[3 * p + 1]), u8_to_unit(t[3 * p + 2]));
        worst = std::max(worst, static_cast<double>(std::abs(g - y[p])));
      }
    }
  }
  return worst;
}

RealismReport realism_score(TrainedModel& model, const ColorizationSet& set) {
  RealismReport rep;
  Tape<float> tape;
  tape.set_recording(false);
  const BnMode mode = infer_mode(set.bn_infer);
  const int64_t plane = static_cast<int64_t>(set.s) * set.s;
  Tensor<float> gray = Tensor<float>::from({set.m, set.s, set.s, 1}, set.gray);

  double acc = 0;
  for (int j = 0; j < set.k_test; ++j) {
    // rebuild the model-space batch of round j and score it the way the
    // discriminator saw fakes during training
    Tensor<float> g_out = Tensor<float>::zeros({set.m, set.s, set.s, set.out_channels});
    for (int i = 0; i < set.m; ++i)
      std::copy(set.sample(i, j), set.sample(i, j) + plane * set.out_channels,
                g_out.data() + i * plane * set.out_channels);
    Tensor<float> d_in = fake_d_input(tape, gray, g_out, set.mode);
    Tensor<float> p = model.disc.forward(tape, d_in, mode, model.cfg.disc.conditional ? &gray : nullptr);
    for (int64_t i = 0; i < p.size(); ++i) acc += static_cast<double>(p.data()[i]);
  }
  rep.mean_fake = acc / (static_cast<double>(set.m) * set.k_test);

  if (set.has_truth) {
    Tensor<float> color = Tensor<float>::zeros({set.m, set.s, set.s, 3});
    for (int64_t i = 0; i < color.size(); ++i)
      color.data()[i] = rgb_to_model(u8_to_unit(set.truth[static_cast<size_t>(i)]));
    Tensor<float> d_in = real_d_input(tape, color, gray, set.mode);
    Tensor<float> p = model.disc.forward(tape, d_in, mode, model.cfg.disc.conditional ? &gray : nullptr);
    double racc = 0;
    for (int64_t i = 0; i < p.size(); ++i) racc += static_cast<double>(p.data()[i]);
    rep.mean_real = racc / static_cast<double>(set.m);
  }
  return rep;
}

double discriminator_accuracy(TrainedModel& model, const ImageBatch& batch, uint64_t noise_seed) {
  Tape<float> tape;
  tape.set_recording(false);
  const int m = batch.gray.dim(0);
  const BnMode mode = infer_mode(model.cfg.bn_infer);
  const Tensor<float> z = sample_noise(m, model.cfg.s_z, noise_seed, model.cfg.noise_dist);
  Tensor<float> g_out = model.gen.forward(tape, batch.gray, z, mode);
  Tensor<float> fake_in = fake_d_input(tape, batch.gray, g_out, model.cfg.mode);
  Tensor<float> real_in = real_d_input(tape, batch.color, batch.gray, model.cfg.mode);
  const Tensor<float>* cond = model.cfg.disc.conditional ? &batch.gray : nullptr;
  Tensor<float> p_real = model.disc.forward(tape, real_in, mode, cond);
  Tensor<float> p_fake = model.disc.forward(tape, fake_in, mode, cond);
  int correct = 0;
  for (int i = 0; i < m; ++i) {
    if (p_real.data()[i] > 0.5f) ++correct;
    if (p_fake.data()[i] < 0.5f) ++correct;
  }
  return static_cast<double>(correct) / (2.0 * m);
}

int grid_width(const ColorizationSet& set) {
  const int cols = set.k_test + (set.has_truth ? 1 : 0);
  return cols * set.s + (cols - 1) * 2;
}

int grid_height(const ColorizationSet& set) { return set.m * set.s + (set.m - 1) * 2; }

void emit_grid(const ColorizationSet& set, const std::string& path) {
  const int cols = set.k_test + (set.has_truth ? 1 : 0);
  ImageU8 canvas = make_u8(grid_height(set), grid_width(set), 3, 255);
  auto blit = [&](int row, int col, const uint8_t* tile) {
    const int y0 = row * (set.s + 2), x0 = col * (set.s + 2);
    for (int y = 0; y < set.s; ++y)
      std::memcpy(&canvas.pix[((static_cast<size_t>(y0 + y)) * canvas.w + x0) * 3],
                  tile + static_cast<size_t>(y) * set.s * 3, static_cast<size_t>(set.s) * 3);
  };
  for (int i = 0; i < set.m; ++i) {
    int col = 0;
    if (set.has_truth) blit(i, col++, set.truth.data() + static_cast<size_t>(i) * set.s * set.s * 3);
    for (int j = 0; j < set.k_test; ++j) blit(i, col++, set.tile(i, j));
  }
  (void)cols;
  write_png(path, canvas);
}

std::string eval_report(TrainedModel& model, const ColorizationSet& set) {
  std::ostringstream os;
  os << "images: " << set.m << "\n";
  os << "rounds: " << set.k_test << "\n";
  os << "size: " << set.s << "\n";
  os << "mode: " << to_string(set.mode) << "\n";
  if (set.k_test >= 2) {
    const DiversityReport div = diversity_score(set);
    os << "diversity_mean: " << div.mean << "\n";
    for (int i = 0; i < set.m; ++i) os << "diversity_image_" << i << ": " << div.per_image[static_cast<size_t>(i)] << "\n";
  }
  os << "grayscale_consistency_max: " << grayscale_consistency(set) << "\n";
  const RealismReport real = realism_score(model, set);
  os << "realism_fake_mean: " << real.mean_fake << "\n";
  if (real.mean_real) os << "realism_real_mean: " << *real.mean_real << "\n";
  os << "--- config ---\n" << to_config_text(model.cfg);
  return os.str();
}

}  // namespace cgan
