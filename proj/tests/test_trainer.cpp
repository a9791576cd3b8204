#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "cgan/studio.hpp"
#include "cgan/trainer.hpp"

using namespace cgan;
namespace fs = std::filesystem;

namespace {

struct QuietTape : Tape<float> {
  QuietTape() { set_recording(false); }
};
QuietTape quiet;

TrainConfig tiny_config(uint64_t seed = 1, ColorMode mode = ColorMode::kYUV) {
  TrainConfig cfg;
  cfg.s = 12;
  cfg.m = 4;
  cfg.s_z = 8;
  cfg.iters = 2;
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
  return cfg;
}

DatasetHandle tiny_data(int count = 16, int s = 12, uint64_t seed = 5) {
  SynthSpec spec;
  spec.count = count;
  spec.size = s;
  spec.seed = seed;
  return DatasetHandle::synthetic(spec);
}

fs::path temp_dir(const std::string& tag) {
  fs::path p = fs::temp_directory_path() / ("cgan_trainer_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<uint8_t> slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  return std::vector<uint8_t>((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

Tensor<float> fixed_forward(TrainedModel& model) {
  Tensor<float> y = Tensor<float>::normal({2, model.cfg.s, model.cfg.s, 1}, 0.5, 0.1, 99);
  Tensor<float> z = Tensor<float>::normal({2, model.cfg.s_z}, 0, 1, 98);
  return model.gen.forward(quiet, y, z, BnMode::kEvalBatch);
}

}  // namespace

TEST_CASE("adam: zero grads leave parameters, t advances") {
  std::vector<NamedTensor<float>> params = {{"w", Tensor<float>::normal({4, 4}, 0, 1, 1).set_requires_grad(true)}};
  const std::vector<float> before = params[0].tensor.vec();
  Adam opt(1e-3f, 0.9f, 0.999f, 1e-8f);
  opt.attach(params);
  params[0].tensor.ensure_grad();  // zeros
  opt.step(params);
  CHECK(opt.t() == 1);
  CHECK(params[0].tensor.vec() == before);
}

TEST_CASE("adam: first step with constant gradient moves by about -lr*sign") {
  std::vector<NamedTensor<float>> params = {{"w", Tensor<float>::from({3}, {1.f, 2.f, -3.f})}};
  const std::vector<float> before = params[0].tensor.vec();
  Adam opt(1e-2f, 0.5f, 0.999f, 1e-8f);
  opt.attach(params);
  auto& g = params[0].tensor.ensure_grad();
  g = {0.5f, -0.25f, 4.f};  // |g| >> eps
  opt.step(params);
  for (int i = 0; i < 3; ++i) {
    const float delta = params[0].tensor.data()[i] - before[static_cast<size_t>(i)];
    const float want = -1e-2f * (g[static_cast<size_t>(i)] > 0 ? 1.f : -1.f);
    CHECK(delta == doctest::Approx(want).epsilon(1e-3));
  }
}

TEST_CASE("adam: deterministic across identical runs") {
  auto run = []() {
    std::vector<NamedTensor<float>> params = {{"w", Tensor<float>::normal({8}, 0, 1, 3)}};
    Adam opt(2e-3f, 0.5f, 0.999f, 1e-8f);
    opt.attach(params);
    Rng rng(4);
    for (int step = 0; step < 10; ++step) {
      auto& g = params[0].tensor.ensure_grad();
      for (auto& v : g) v = static_cast<float>(rng.normal());
      opt.step(params);
      params[0].tensor.clear_grad();
    }
    return params[0].tensor.vec();
  };
  CHECK(run() == run());
}

TEST_CASE("adam: shape drift is rejected") {
  std::vector<NamedTensor<float>> params = {{"w", Tensor<float>::zeros({4})}};
  Adam opt;
  opt.attach(params);
  params[0].tensor = Tensor<float>::zeros({5});
  CHECK_THROWS_AS(opt.step(params), Error);
}

TEST_CASE("train: loop structure is k_D discriminator steps then k_G generator steps") {
  TrainConfig cfg = tiny_config();
  cfg.k_d = 2;
  cfg.iters = 1;
  DatasetHandle data = tiny_data();
  std::vector<UpdateTrace> trace;
  train(cfg, data, "", nullptr, &trace);
  REQUIRE(trace.size() == 3);
  CHECK(trace[0].phase == 'D');
  CHECK(trace[1].phase == 'D');
  CHECK(trace[2].phase == 'G');
}

TEST_CASE("train: parameter freeze and fresh noise per update") {
  TrainConfig cfg = tiny_config(7);
  cfg.k_d = 2;
  cfg.k_g = 2;
  cfg.iters = 3;
  DatasetHandle data = tiny_data();
  std::vector<UpdateTrace> trace;
  train(cfg, data, "", nullptr, &trace);
  REQUIRE(trace.size() == static_cast<size_t>(cfg.iters) * 4);

  std::set<uint64_t> noise_hashes;
  for (const auto& u : trace) noise_hashes.insert(u.noise_hash);
  CHECK(noise_hashes.size() == trace.size());  // never reused, D-loop vs G-loop included

  for (size_t i = 1; i < trace.size(); ++i) {
    if (trace[i].phase == 'D')
      CHECK(trace[i].g_hash == trace[i - 1].g_hash);  // D updates leave the generator alone
    if (trace[i].phase == 'G')
      CHECK(trace[i].d_hash == trace[i - 1].d_hash);  // and vice versa
    if (trace[i].phase == 'D') CHECK(trace[i].d_hash != trace[i - 1].d_hash);
    if (trace[i].phase == 'G') CHECK(trace[i].g_hash != trace[i - 1].g_hash);
  }
}

TEST_CASE("train: fixed seeds give bit-identical metrics") {
  TrainConfig cfg = tiny_config(11);
  cfg.iters = 3;
  DatasetHandle data = tiny_data();
  std::vector<MetricsRecord> m1, m2;
  train(cfg, data, "", &m1);
  train(cfg, data, "", &m2);
  CHECK(metrics_csv(m1) == metrics_csv(m2));
  REQUIRE(m1.size() == 3);
  for (const auto& r : m1) {
    CHECK(std::isfinite(r.loss_d));
    CHECK(std::isfinite(r.loss_g));
    CHECK(r.l1_term == 0.f);  // YUV mode
  }
}

TEST_CASE("train: first-iteration discriminator loss sits near 2 log 2") {
  // untrained D outputs hover around 1/2, so the equilibrium value shows up
  for (uint64_t seed : {100ull, 200ull, 300ull, 400ull, 500ull}) {
    TrainConfig cfg = tiny_config(seed);
    cfg.iters = 1;
    DatasetHandle data = tiny_data(16, 12, seed + 9);
    std::vector<MetricsRecord> metrics;
    train(cfg, data, "", &metrics);
    const double equilibrium = 2.0 * std::log(2.0);
    CHECK(metrics[0].loss_d > 0.8 * equilibrium);
    CHECK(metrics[0].loss_d < 1.2 * equilibrium);
  }
}

TEST_CASE("train: RGB mode reports an L1 term") {
  TrainConfig cfg = tiny_config(13, ColorMode::kRGB);
  cfg.iters = 2;
  DatasetHandle data = tiny_data();
  std::vector<MetricsRecord> metrics;
  train(cfg, data, "", &metrics);
  CHECK(metrics[0].l1_term > 0.f);
}

TEST_CASE("train: rejects a dataset smaller than one minibatch") {
  TrainConfig cfg = tiny_config();
  DatasetHandle data = tiny_data(3);
  CHECK_THROWS_AS(train(cfg, data, ""), Error);
}

TEST_CASE("config text: round trip preserves every field") {
  TrainConfig cfg = tiny_config(17, ColorMode::kRGB);
  cfg.loss_variant = GenLoss::kSaturating;
  cfg.lambda_l1 = 3.25f;
  cfg.gen.tiled_noise = true;
  cfg.gen.noise_layers = {1, 2};
  cfg.disc.conditional = true;
  cfg.bn_infer = BnInfer::kRunning;
  cfg.noise_dist = NoiseDist::kUniform;
  cfg.iters_done = 42;
  const TrainConfig back = parse_config_text(to_config_text(cfg));
  CHECK(to_config_text(back) == to_config_text(cfg));
  CHECK(back.gen.noise_layers == cfg.gen.noise_layers);
  CHECK(back.loss_variant == GenLoss::kSaturating);
  CHECK(back.iters_done == 42);
  CHECK_THROWS_AS(parse_config_text("not a config"), Error);
}

TEST_CASE("checkpoint: save/load/forward is bit-identical") {
  const fs::path dir = temp_dir("roundtrip");
  TrainConfig cfg = tiny_config(19);
  cfg.iters = 2;
  DatasetHandle data = tiny_data();
  TrainedModel model = train(cfg, data, "");
  const Tensor<float> before = fixed_forward(model);

  const std::string path = (dir / "model.bin").string();
  checkpoint_save(path, model);
  TrainedModel loaded = checkpoint_load(path);
  const Tensor<float> after = fixed_forward(loaded);
  CHECK(before.vec() == after.vec());
  CHECK(loaded.cfg.iters_done == 2);
}

TEST_CASE("checkpoint: corrupted magic and version are rejected") {
  const fs::path dir = temp_dir("corrupt");
  TrainConfig cfg = tiny_config(23);
  cfg.iters = 1;
  DatasetHandle data = tiny_data();
  TrainedModel model = train(cfg, data, "");
  const std::string path = (dir / "model.bin").string();
  checkpoint_save(path, model);

  auto bytes = slurp(path);
  {
    auto bad = bytes;
    bad[0] = 'X';
    std::ofstream f(dir / "badmagic.bin", std::ios::binary);
    f.write(reinterpret_cast<const char*>(bad.data()), static_cast<std::streamsize>(bad.size()));
    f.close();
    CHECK_THROWS_WITH_AS(checkpoint_load((dir / "badmagic.bin").string()), doctest::Contains("magic"), Error);
  }
  {
    auto bad = bytes;
    bad[8] = 99;  // version word
    std::ofstream f(dir / "badver.bin", std::ios::binary);
    f.write(reinterpret_cast<const char*>(bad.data()), static_cast<std::streamsize>(bad.size()));
    f.close();
    CHECK_THROWS_WITH_AS(checkpoint_load((dir / "badver.bin").string()), doctest::Contains("version"), Error);
  }
  {
    auto bad = bytes;
    bad.resize(bad.size() / 2);  // truncated tensor payload
    std::ofstream f(dir / "trunc.bin", std::ios::binary);
    f.write(reinterpret_cast<const char*>(bad.data()), static_cast<std::streamsize>(bad.size()));
    f.close();
    CHECK_THROWS_AS(checkpoint_load((dir / "trunc.bin").string()), Error);
  }
}

TEST_CASE("checkpoint: embedded spec gates input sizes after load") {
  const fs::path dir = temp_dir("specgate");
  TrainConfig cfg = tiny_config(29);
  cfg.iters = 1;
  DatasetHandle data = tiny_data();
  TrainedModel model = train(cfg, data, "");
  const std::string path = (dir / "model.bin").string();
  checkpoint_save(path, model);
  TrainedModel loaded = checkpoint_load(path);

  // matching size runs
  Tensor<float> ok = Tensor<float>::normal({2, 12, 12, 1}, 0.5, 0.1, 1);
  Tensor<float> z = Tensor<float>::normal({2, 8}, 0, 1, 2);
  CHECK(loaded.gen.forward(quiet, ok, z, BnMode::kEvalBatch).dim(1) == 12);

  // the embedded spec's s governs the noise projections, so a different
  // input size is an explicit mismatch
  Tensor<float> wrong = Tensor<float>::normal({2, 24, 24, 1}, 0.5, 0.1, 3);
  CHECK_THROWS_WITH_AS(loaded.gen.forward(quiet, wrong, z, BnMode::kEvalBatch), doctest::Contains("image size"),
                       Error);
}

TEST_CASE("checkpoint: tensor shape disagreeing with the spec is rejected") {
  const fs::path dir = temp_dir("shapemismatch");
  TrainConfig cfg = tiny_config(31);
  cfg.iters = 1;
  DatasetHandle data = tiny_data();
  TrainedModel model = train(cfg, data, "");
  const std::string path = (dir / "model.bin").string();
  checkpoint_save(path, model);

  // edit the embedded config so the declared widths disagree with the stored
  // tensors (same text length keeps the framing intact)
  auto bytes = slurp(path);
  const std::string needle = "gen.widths=4,6,6,5,4,2";
  const std::string patched = "gen.widths=6,6,6,5,4,2";
  auto it = std::search(bytes.begin(), bytes.end(), needle.begin(), needle.end());
  REQUIRE(it != bytes.end());
  std::copy(patched.begin(), patched.end(), it);
  std::ofstream f(dir / "patched.bin", std::ios::binary);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  f.close();
  CHECK_THROWS_WITH_AS(checkpoint_load((dir / "patched.bin").string()), doctest::Contains("shape mismatch"), Error);
}

TEST_CASE("train: out_dir receives metrics and checkpoints, runs reproduce bit-exactly") {
  TrainConfig cfg = tiny_config(37);
  cfg.iters = 4;
  cfg.ckpt_every = 2;
  DatasetHandle data = tiny_data();
  const fs::path d1 = temp_dir("out1"), d2 = temp_dir("out2");
  train(cfg, data, d1.string());
  train(cfg, data, d2.string());
  CHECK(slurp(d1 / "metrics.csv") == slurp(d2 / "metrics.csv"));
  CHECK(slurp(d1 / "checkpoint.bin") == slurp(d2 / "checkpoint.bin"));
  CHECK(fs::exists(d1 / "ckpt_000002.bin"));

  // the metrics file has the fixed header and one record per iteration
  std::ifstream mf(d1 / "metrics.csv");
  std::string header;
  std::getline(mf, header);
  CHECK(header == "iter,loss_d,loss_g,d_real_mean,d_fake_mean,l1_term");
  int lines = 0;
  for (std::string line; std::getline(mf, line);)
    if (!line.empty()) ++lines;
  CHECK(lines == 4);
}
