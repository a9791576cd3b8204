#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cgan/dataset.hpp"
#include "cgan/gan.hpp"

namespace cgan {

enum class BnInfer { kBatchStats, kRunning };

// Everything the training loop needs; embedded verbatim in checkpoints so a
// run is reproducible from the artifact alone.
struct TrainConfig {
  int k_d = 1;
  int k_g = 1;
  int m = 64;
  int s_z = 100;
  int s = 64;
  int iters = 500;
  float lambda_l1 = 10.f;  // applied in RGB mode only
  ColorMode mode = ColorMode::kYUV;
  GenLoss loss_variant = GenLoss::kNonSaturating;
  GeneratorSpec gen;
  DiscriminatorSpec disc;
  float lr = 2e-4f;
  float beta1 = 0.5f;
  float beta2 = 0.999f;
  float adam_eps = 1e-8f;
  uint64_t seed_data = 1;
  uint64_t seed_noise = 2;
  uint64_t seed_init = 3;
  NoiseDist noise_dist = NoiseDist::kNormal;
  BnInfer bn_infer = BnInfer::kBatchStats;
  int ckpt_every = 100;
  int iters_done = 0;

  float effective_lambda() const { return mode == ColorMode::kYUV ? 0.f : lambda_l1; }

  void validate() const {
    if (k_d < 1 || k_g < 1) fail("config: k_d and k_g must be >= 1");
    if (m < 2) fail("config: batch size must be >= 2 (batch normalization)");
    if (iters < 1) fail("config: iters must be >= 1");
    if (lambda_l1 < 0) fail("config: lambda must be >= 0");
    gen.validate();
    disc.validate();
    if (gen.image_size != s || disc.image_size != s) fail("config: spec image sizes disagree with s");
    if (gen.s_z != s_z) fail("config: generator s_z disagrees with config");
    const int want = mode == ColorMode::kYUV ? 2 : 3;
    if (gen.out_channels() != want)
      fail("config: generator output channels " + std::to_string(gen.out_channels()) + " do not match mode");
  }
};

// Default paper-shaped specs: full widths at s >= 64, desk widths below.
GeneratorSpec default_generator_spec(int s, ColorMode mode);
DiscriminatorSpec default_discriminator_spec(int s);
TrainConfig default_config(int s, ColorMode mode);

std::string to_config_text(const TrainConfig& cfg);
TrainConfig parse_config_text(const std::string& text);

// Bias-corrected adaptive-moment optimizer over a fixed parameter list.
class Adam {
 public:
  Adam() = default;
  Adam(float lr, float beta1, float beta2, float eps) : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

  void attach(const std::vector<NamedTensor<float>>& params);
  // One update from the gradients currently on the parameters; missing
  // gradients count as zero. t advances once per call.
  void step(std::vector<NamedTensor<float>>& params);
  int64_t t() const { return t_; }
  const std::vector<std::vector<float>>& moments1() const { return m1_; }
  const std::vector<std::vector<float>>& moments2() const { return m2_; }

 private:
  float lr_ = 2e-4f, b1_ = 0.5f, b2_ = 0.999f, eps_ = 1e-8f;
  int64_t t_ = 0;
  std::vector<std::vector<float>> m1_, m2_;
};

struct TrainedModel {
  TrainConfig cfg;
  Generator<float> gen;
  Discriminator<float> disc;
};

struct MetricsRecord {
  int iter = 0;
  float loss_d = 0, loss_g = 0, d_real_mean = 0, d_fake_mean = 0, l1_term = 0;
};

std::string metrics_csv(const std::vector<MetricsRecord>& records);

// Per-update trace for loop-structure checks: phase 'D' or 'G', the noise
// fingerprint, and parameter hashes after the update.
struct UpdateTrace {
  char phase = '?';
  int iter = 0;
  int step = 0;
  uint64_t noise_hash = 0;
  uint64_t g_hash = 0;
  uint64_t d_hash = 0;
};

uint64_t fnv1a64(const void* data, size_t len, uint64_t h = 1469598103934665603ull);
uint64_t hash_params(std::vector<NamedTensor<float>>& params);

// Alternating adversarial optimization. out_dir, when non-empty, receives
// metrics.csv, cadenced ckpt_NNNNNN.bin files and a final checkpoint.bin.
TrainedModel train(const TrainConfig& cfg, const DatasetHandle& data, const std::string& out_dir = "",
                   std::vector<MetricsRecord>* metrics_out = nullptr, std::vector<UpdateTrace>* trace = nullptr);

// Same loop over an already-built model (custom initializations, continued
// training of a loaded checkpoint).
TrainedModel train_model(TrainedModel model, const DatasetHandle& data, const std::string& out_dir = "",
                         std::vector<MetricsRecord>* metrics_out = nullptr,
                         std::vector<UpdateTrace>* trace = nullptr);

// ---- checkpoint persistence ------------------------------------------------
// Layout: 8-byte magic "CGANCKPT", u32 version, u32 config text length +
// bytes, u32 tensor count, then per tensor: u32 name length + UTF-8 name,
// u32 rank, u32 extents, u32 dtype tag (0 = f32), raw little-endian f32 data.

void checkpoint_save(const std::string& path, TrainedModel& model, const Adam* opt_g = nullptr,
                     const Adam* opt_d = nullptr);
TrainedModel checkpoint_load(const std::string& path);

}  // namespace cgan
