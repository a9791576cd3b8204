#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cgan/trainer.hpp"

namespace cgan {

// Multi-round colorization results, rearranged per source image: tile (i, j)
// is image i colorized with round j's noise. Enough provenance is stored to
// regenerate any tile bit-exactly (the full noise of each round plus the
// conditioning batch; batch-statistics normalization makes tiles depend on
// the whole batch).
struct ColorizationSet {
  int m = 0, k_test = 0, s = 0, out_channels = 0;
  ColorMode mode = ColorMode::kYUV;
  BnInfer bn_infer = BnInfer::kBatchStats;
  uint64_t seed = 0;
  std::vector<float> gray;                // [m,s,s] condition, display range
  bool has_truth = false;
  std::vector<uint8_t> truth;             // [m,s,s,3] display
  std::vector<uint8_t> tiles;             // [m,k_test,s,s,3] display
  std::vector<float> model_out;           // [m,k_test,s,s,out_channels]
  std::vector<uint64_t> round_seeds;      // [k_test]
  std::vector<float> noise;               // [k_test,m,s_z]

  const uint8_t* tile(int i, int j) const {
    return tiles.data() + ((static_cast<size_t>(i) * k_test + j) * s * s) * 3;
  }
  const float* sample(int i, int j) const {
    return model_out.data() + ((static_cast<size_t>(i) * k_test + j) * s * s) * out_channels;
  }
  const float* gray_of(int i) const { return gray.data() + static_cast<size_t>(i) * s * s; }
};

// Algorithm-2 style inference: k_test rounds over the same batch, fresh noise
// each round, results rearranged per image. gray is [m,s,s,1] display range;
// truth, when given, is [m,s,s,3] display range. strict rejects batches with
// duplicate grayscale images (batch statistics would see a degenerate batch).
ColorizationSet multi_round_colorize(TrainedModel& model, const Tensor<float>& gray, int k_test, uint64_t seed,
                                     const std::vector<uint8_t>* truth = nullptr, bool strict = false);

// Re-runs round j from stored provenance and returns image i's display tile.
std::vector<uint8_t> regenerate_tile(TrainedModel& model, const ColorizationSet& set, int i, int j);

// Mean over pixels/channels of the per-pixel standard deviation across the
// k_test samples, in model space (UV for YUV mode, RGB otherwise). Zero iff
// all samples of an image are identical.
struct DiversityReport {
  std::vector<double> per_image;
  double mean = 0;
};
DiversityReport diversity_score(const ColorizationSet& set);

// max over samples and pixels of |Gray(tile) - y| in display range
double grayscale_consistency(const ColorizationSet& set);

struct RealismReport {
  double mean_fake = 0;
  std::optional<double> mean_real;
};
RealismReport realism_score(TrainedModel& model, const ColorizationSet& set);

// Balanced held-out probe: fraction of correct real/fake calls at threshold
// 0.5. Real and fake batches are scored separately under the model's
// configured inference normalization, the same way the discriminator saw
// batches during training.
double discriminator_accuracy(TrainedModel& model, const ImageBatch& batch, uint64_t noise_seed);

// One row per source image: [truth |] k_test colorizations, 2-pixel white
// separators, written as PNG. Tile content round-trips bit-exactly.
void emit_grid(const ColorizationSet& set, const std::string& path);
int grid_width(const ColorizationSet& set);
int grid_height(const ColorizationSet& set);

// key: value report over a ColorizationSet (diversity, consistency, realism,
// config echo).
std::string eval_report(TrainedModel& model, const ColorizationSet& set);

}  // namespace cgan
