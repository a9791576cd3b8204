#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "cgan/studio.hpp"

using namespace cgan;
namespace fs = std::filesystem;

namespace {

struct QuietTape : Tape<float> {
  QuietTape() { set_recording(false); }
};
QuietTape quiet;

TrainedModel small_model(uint64_t seed = 3, ColorMode mode = ColorMode::kYUV) {
  TrainConfig cfg;
  cfg.s = 12;
  cfg.m = 4;
  cfg.s_z = 8;
  cfg.iters = 3;
  cfg.mode = mode;
  cfg.gen.widths = {4, 6, 6, 5, 4, mode == ColorMode::kYUV ? 2 : 3};
  cfg.gen.image_size = 12;
  cfg.gen.s_z = 8;
  cfg.disc.widths = {4, 6, 6, 6};
  cfg.disc.image_size = 12;
  cfg.seed_data = seed;
  cfg.seed_noise = seed + 1;
  cfg.seed_init = seed + 2;
  cfg.ckpt_every = 0;
  SynthSpec spec;
  spec.count = 16;
  spec.size = 12;
  spec.seed = seed + 3;
  DatasetHandle data = DatasetHandle::synthetic(spec);
  return train(cfg, data, "");
}

ImageBatch eval_batch(int m, uint64_t seed = 41) {
  SynthSpec spec;
  spec.count = m;
  spec.size = 12;
  spec.seed = seed;
  DatasetHandle data = DatasetHandle::synthetic(spec);
  std::vector<int> ids(static_cast<size_t>(m));
  for (int i = 0; i < m; ++i) ids[static_cast<size_t>(i)] = i;
  return make_batch(data, ids);
}

std::vector<uint8_t> truth_bytes(const ImageBatch& batch) {
  std::vector<uint8_t> out(static_cast<size_t>(batch.color.size()));
  for (int64_t i = 0; i < batch.color.size(); ++i)
    out[static_cast<size_t>(i)] = unit_to_u8(rgb_to_display(batch.color.data()[i]));
  return out;
}

}  // namespace

TEST_CASE("multi-round: counting, determinism, provenance") {
  TrainedModel model = small_model();
  const ImageBatch batch = eval_batch(3);
  ColorizationSet set = multi_round_colorize(model, batch.gray, 4, 900);
  CHECK(set.m == 3);
  CHECK(set.k_test == 4);
  CHECK(set.tiles.size() == static_cast<size_t>(3) * 4 * 12 * 12 * 3);

  ColorizationSet again = multi_round_colorize(model, batch.gray, 4, 900);
  CHECK(set.tiles == again.tiles);  // same checkpoint, batch, seed -> same bits
  CHECK(set.model_out == again.model_out);

  ColorizationSet other = multi_round_colorize(model, batch.gray, 4, 901);
  CHECK(set.tiles != other.tiles);

  // regenerating (i, j) from the stored noise reproduces the tile bit-exactly
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) {
      const std::vector<uint8_t> redo = regenerate_tile(model, set, i, j);
      CHECK(std::equal(redo.begin(), redo.end(), set.tile(i, j)));
    }
}

TEST_CASE("multi-round: k_test=1 equals a single forward pass") {
  TrainedModel model = small_model(5);
  const ImageBatch batch = eval_batch(4, 43);
  ColorizationSet set = multi_round_colorize(model, batch.gray, 1, 77);

  const Tensor<float> z = sample_noise(4, model.cfg.s_z, Rng::mix(77, 0), model.cfg.noise_dist);
  Tensor<float> g_out = model.gen.forward(quiet, batch.gray, z, BnMode::kEvalBatch);
  const int64_t plane = 12 * 12;
  for (int i = 0; i < 4; ++i) {
    const FloatImage img = assemble_color(batch.gray.data() + i * plane, g_out.data() + i * plane * 2, 12, 2,
                                          ColorMode::kYUV);
    const ImageU8 q = quantize_u8(img);
    CHECK(std::equal(q.pix.begin(), q.pix.end(), set.tile(i, 0)));
  }
}

TEST_CASE("multi-round: single-image batch is rejected in batch-statistics mode") {
  TrainedModel model = small_model(7);
  const ImageBatch batch = eval_batch(2, 44);
  Tensor<float> one = Tensor<float>::from({1, 12, 12, 1},
                                          std::vector<float>(batch.gray.data(), batch.gray.data() + 144));
  CHECK_THROWS_WITH_AS(multi_round_colorize(model, one, 2, 1), doctest::Contains("batch"), Error);

  model.cfg.bn_infer = BnInfer::kRunning;
  CHECK_NOTHROW(multi_round_colorize(model, one, 2, 1));  // running stats handle any m
}

TEST_CASE("multi-round: strict mode rejects homogeneous batches") {
  TrainedModel model = small_model(9);
  const ImageBatch batch = eval_batch(2, 45);
  std::vector<float> dup(batch.gray.data(), batch.gray.data() + 144);
  std::vector<float> two = dup;
  two.insert(two.end(), dup.begin(), dup.end());
  Tensor<float> gray = Tensor<float>::from({2, 12, 12, 1}, std::move(two));
  CHECK_THROWS_WITH_AS(multi_round_colorize(model, gray, 2, 1, nullptr, true),
                       doctest::Contains("homogeneous"), Error);
  CHECK_NOTHROW(multi_round_colorize(model, gray, 2, 1, nullptr, false));
}

TEST_CASE("diversity: zero for identical samples, delta/2 for a constant offset") {
  ColorizationSet set;
  set.m = 1;
  set.k_test = 2;
  set.s = 4;
  set.out_channels = 2;
  set.mode = ColorMode::kYUV;
  set.gray.assign(16, 0.5f);
  set.model_out.assign(2 * 16 * 2, 0.25f);
  set.tiles.assign(2 * 16 * 3, 128);
  CHECK(diversity_score(set).per_image[0] == 0.0);

  // second sample offset by delta on both channels: std is delta/2 everywhere
  const float delta = 0.3f;
  for (int64_t p = 16 * 2; p < 2 * 16 * 2; ++p) set.model_out[static_cast<size_t>(p)] += delta;
  const DiversityReport rep = diversity_score(set);
  CHECK(rep.per_image[0] == doctest::Approx(delta / 2).epsilon(1e-6));
  CHECK(rep.mean == doctest::Approx(delta / 2).epsilon(1e-6));

  set.k_test = 1;
  CHECK_THROWS_AS(diversity_score(set), Error);
}

TEST_CASE("diversity: matches a direct loop oracle and ignores sample order") {
  TrainedModel model = small_model(11);
  const ImageBatch batch = eval_batch(2, 46);
  ColorizationSet set = multi_round_colorize(model, batch.gray, 3, 7);
  const DiversityReport rep = diversity_score(set);

  const int64_t plane = static_cast<int64_t>(set.s) * set.s * set.out_channels;
  for (int i = 0; i < set.m; ++i) {
    long double acc = 0;
    for (int64_t p = 0; p < plane; ++p) {
      long double mean = 0;
      for (int j = 0; j < set.k_test; ++j) mean += set.sample(i, j)[p];
      mean /= set.k_test;
      long double var = 0;
      for (int j = 0; j < set.k_test; ++j) {
        const long double d = set.sample(i, j)[p] - mean;
        var += d * d;
      }
      acc += std::sqrt(static_cast<double>(var / set.k_test));
    }
    CHECK(rep.per_image[static_cast<size_t>(i)] ==
          doctest::Approx(static_cast<double>(acc / plane)).epsilon(1e-6));
    CHECK(rep.per_image[static_cast<size_t>(i)] > 0.0);
  }

  // permuting the k axis leaves the score unchanged
  ColorizationSet shuffled = set;
  const int64_t stride = plane;
  for (int i = 0; i < set.m; ++i) {
    float* base = shuffled.model_out.data() + static_cast<size_t>(i) * set.k_test * stride;
    std::vector<float> tmp(base, base + stride);                       // sample 0
    std::copy(base + stride, base + 2 * stride, base);                 // 1 -> 0
    std::copy(tmp.begin(), tmp.end(), base + stride);                  // 0 -> 1
  }
  const DiversityReport rep2 = diversity_score(shuffled);
  for (int i = 0; i < set.m; ++i)
    CHECK(rep2.per_image[static_cast<size_t>(i)] ==
          doctest::Approx(rep.per_image[static_cast<size_t>(i)]).epsilon(1e-9));
}

TEST_CASE("grayscale consistency: structural YUV bound and exact gray fixture") {
  TrainedModel model = small_model(13);
  const ImageBatch batch = eval_batch(3, 47);
  ColorizationSet set = multi_round_colorize(model, batch.gray, 3, 8);
  CHECK(grayscale_consistency(set) <= 2.0 / 255.0);

  // a tile that replicates its own gray has zero error
  ColorizationSet fixture;
  fixture.m = 1;
  fixture.k_test = 1;
  fixture.s = 2;
  fixture.out_channels = 2;
  fixture.mode = ColorMode::kYUV;
  const uint8_t v = 77;
  fixture.gray.assign(4, rgb_to_gray(u8_to_unit(v), u8_to_unit(v), u8_to_unit(v)));
  fixture.tiles.assign(12, v);
  fixture.model_out.assign(8, 0.f);
  CHECK(grayscale_consistency(fixture) == 0.0);
}

TEST_CASE("realism: constant-one discriminator fixture scores 1.0") {
  TrainedModel model = small_model(15);
  // zero every weight and saturate the head bias: D outputs sigmoid(25) ~ 1
  for (auto& p : model.disc.params()) std::fill(p.tensor.data(), p.tensor.data() + p.tensor.size(), 0.f);
  for (auto& p : model.disc.params())
    if (p.name == "d.head.bias") p.tensor.data()[0] = 25.f;
  for (auto& p : model.disc.params())
    if (p.name.find("gamma") != std::string::npos)
      std::fill(p.tensor.data(), p.tensor.data() + p.tensor.size(), 1.f);

  const ImageBatch batch = eval_batch(2, 48);
  const std::vector<uint8_t> truth = truth_bytes(batch);
  ColorizationSet set = multi_round_colorize(model, batch.gray, 2, 9, &truth);
  const RealismReport rep = realism_score(model, set);
  CHECK(rep.mean_fake == doctest::Approx(1.0).epsilon(1e-4));
  REQUIRE(rep.mean_real.has_value());
  CHECK(*rep.mean_real == doctest::Approx(1.0).epsilon(1e-4));

  ColorizationSet no_truth = multi_round_colorize(model, batch.gray, 2, 9);
  CHECK(!realism_score(model, no_truth).mean_real.has_value());
}

TEST_CASE("emit_grid: exact dimensions and lossless tiles") {
  TrainedModel model = small_model(17);
  const ImageBatch batch = eval_batch(2, 49);
  const std::vector<uint8_t> truth = truth_bytes(batch);
  ColorizationSet set = multi_round_colorize(model, batch.gray, 4, 10, &truth);

  // 2 rows x (1 truth + 4 tiles): dims = tiles*s + 2px separators
  CHECK(grid_width(set) == 5 * 12 + 4 * 2);
  CHECK(grid_height(set) == 2 * 12 + 1 * 2);

  const fs::path dir = fs::temp_directory_path() / "cgan_grid";
  fs::create_directories(dir);
  const std::string path = (dir / "grid.png").string();
  emit_grid(set, path);
  const ImageU8 grid = read_png(path);
  CHECK(grid.w == grid_width(set));
  CHECK(grid.h == grid_height(set));

  // decode a tile back out of the grid and compare bytes
  auto tile_at = [&](int row, int col) {
    std::vector<uint8_t> out(static_cast<size_t>(12) * 12 * 3);
    const int y0 = row * 14, x0 = col * 14;
    for (int y = 0; y < 12; ++y)
      std::copy(&grid.pix[((static_cast<size_t>(y0 + y)) * grid.w + x0) * 3],
                &grid.pix[((static_cast<size_t>(y0 + y)) * grid.w + x0 + 12) * 3],
                &out[static_cast<size_t>(y) * 12 * 3]);
    return out;
  };
  CHECK(tile_at(0, 0) == std::vector<uint8_t>(truth.begin(), truth.begin() + 12 * 12 * 3));
  for (int j = 0; j < 4; ++j) {
    const std::vector<uint8_t> got = tile_at(1, 1 + j);
    CHECK(std::equal(got.begin(), got.end(), set.tile(1, j)));
  }

  // single-tile degenerate grid
  ColorizationSet solo = multi_round_colorize(model, batch.gray, 1, 11);
  solo.m = 1;  // restrict the emitted rows to the first image
  solo.tiles.resize(static_cast<size_t>(1) * 1 * 12 * 12 * 3);
  solo.model_out.resize(static_cast<size_t>(1) * 1 * 12 * 12 * 2);
  solo.gray.resize(144);
  CHECK(grid_width(solo) == 12);
  CHECK(grid_height(solo) == 12);
}

TEST_CASE("eval report: recomputable statistics with config echo") {
  TrainedModel model = small_model(19);
  const ImageBatch batch = eval_batch(2, 50);
  const std::vector<uint8_t> truth = truth_bytes(batch);
  ColorizationSet set = multi_round_colorize(model, batch.gray, 3, 12, &truth);
  const std::string report = eval_report(model, set);
  CHECK(report.find("diversity_mean:") != std::string::npos);
  CHECK(report.find("grayscale_consistency_max:") != std::string::npos);
  CHECK(report.find("realism_fake_mean:") != std::string::npos);
  CHECK(report.find("realism_real_mean:") != std::string::npos);
  CHECK(report.find("cgan-config-v1") != std::string::npos);

  // the report's statistics match direct recomputation from the set
  const DiversityReport div = diversity_score(set);
  CHECK(report.find(std::to_string(div.mean).substr(0, 6)) != std::string::npos);
}

TEST_CASE("discriminator accuracy: bounded and deterministic") {
  TrainedModel model = small_model(21);
  const ImageBatch batch = eval_batch(4, 51);
  const double acc = discriminator_accuracy(model, batch, 5);
  CHECK(acc >= 0.0);
  CHECK(acc <= 1.0);
  CHECK(acc == discriminator_accuracy(model, batch, 5));
}
