#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cgan/studio.hpp"
#include "cgan/verify.hpp"

namespace fs = std::filesystem;
using namespace cgan;

namespace {

std::vector<int> first_n_layers(int n) {
  std::vector<int> out;
  for (int i = 1; i <= n; ++i) out.push_back(i);
  return out;
}

struct DataArgs {
  std::string dir;
  int synthetic = 0;
  uint64_t seed = 1;
};

DatasetHandle open_dataset(const DataArgs& a, int s) {
  if (!a.dir.empty()) return DatasetHandle::from_dir(a.dir, s);
  if (a.synthetic > 0) {
    SynthSpec spec;
    spec.count = a.synthetic;
    spec.size = s;
    spec.seed = a.seed;
    return DatasetHandle::synthetic(spec);
  }
  fail("no dataset: pass --data DIR or --synthetic N");
}

struct TrainArgs {
  DataArgs data;
  int size = 32;
  int iters = 500;
  int batch = 64;
  int zdim = 100;
  int kd = 1, kg = 1;
  float lambda = 10.f;
  std::string colorspace = "yuv";
  int noise_layers = 3;
  std::string cond_layers = "all";
  std::string loss = "nonsaturating";
  std::string noise_kind = "projected";
  std::string bn_infer = "batch";
  uint64_t seed = 1;
  std::vector<int> g_widths, d_widths;
  std::string out;
};

TrainConfig build_config(const TrainArgs& a) {
  const ColorMode mode = a.colorspace == "rgb" ? ColorMode::kRGB : ColorMode::kYUV;
  TrainConfig cfg = default_config(a.size, mode);
  cfg.iters = a.iters;
  cfg.m = a.batch;
  cfg.s_z = a.zdim;
  cfg.gen.s_z = a.zdim;
  cfg.k_d = a.kd;
  cfg.k_g = a.kg;
  cfg.lambda_l1 = a.lambda;
  cfg.loss_variant = a.loss == "saturating" ? GenLoss::kSaturating : GenLoss::kNonSaturating;
  cfg.gen.noise_layers = first_n_layers(a.noise_layers);
  cfg.gen.cond_layers = a.cond_layers == "first" ? std::vector<int>{1} : first_n_layers(cfg.gen.num_layers);
  cfg.gen.tiled_noise = a.noise_kind == "tiled";
  cfg.bn_infer = a.bn_infer == "running" ? BnInfer::kRunning : BnInfer::kBatchStats;
  if (!a.g_widths.empty()) cfg.gen.widths = a.g_widths;
  if (!a.d_widths.empty()) cfg.disc.widths = a.d_widths;
  cfg.seed_data = Rng::mix(a.seed, 11);
  cfg.seed_noise = Rng::mix(a.seed, 12);
  cfg.seed_init = Rng::mix(a.seed, 13);
  cfg.validate();
  return cfg;
}

int cmd_train(const TrainArgs& a) {
  TrainConfig cfg = build_config(a);
  std::cout << "effective config:\n" << to_config_text(cfg);
  DatasetHandle data = open_dataset(a.data, a.size);
  std::cout << "dataset: " << data.size() << " images @" << data.image_size() << "px\n";
  std::vector<MetricsRecord> metrics;
  train(cfg, data, a.out, &metrics);
  const MetricsRecord& last = metrics.back();
  std::printf("done: iter %d loss_d %.4f loss_g %.4f D(x) %.3f D(G) %.3f l1 %.4f\n", last.iter, last.loss_d,
              last.loss_g, last.d_real_mean, last.d_fake_mean, last.l1_term);
  std::cout << "wrote " << (fs::path(a.out) / "checkpoint.bin").string() << " and metrics.csv\n";
  return 0;
}

struct ColorizeArgs {
  std::string ckpt, input, grid = "grid.png";
  int rounds = 4;
  uint64_t seed = 1;
  bool strict = false;
};

int cmd_colorize(const ColorizeArgs& a) {
  TrainedModel model = checkpoint_load(a.ckpt);
  std::cout << "model config:\n" << to_config_text(model.cfg);
  std::vector<std::string> files;
  if (fs::is_directory(a.input)) {
    for (const auto& e : fs::directory_iterator(a.input)) {
      const std::string ext = e.path().extension().string();
      if (ext == ".png" || ext == ".ppm" || ext == ".pgm") files.push_back(e.path().string());
    }
    std::sort(files.begin(), files.end());
  } else {
    files.push_back(a.input);
  }
  if (files.empty()) fail("colorize: no images under " + a.input);

  const int s = model.cfg.s;
  const int m = static_cast<int>(files.size());
  Tensor<float> gray = Tensor<float>::zeros({m, s, s, 1});
  std::vector<uint8_t> truth(static_cast<size_t>(m) * s * s * 3);
  bool any_color = false;
  for (int i = 0; i < m; ++i) {
    const FloatImage img = center_crop_resize(load_image(files[static_cast<size_t>(i)]), s);
    for (int64_t p = 0; p < static_cast<int64_t>(s) * s; ++p) {
      const float r = img.pix[3 * p], g = img.pix[3 * p + 1], b = img.pix[3 * p + 2];
      gray.data()[i * s * s + p] = rgb_to_gray(r, g, b);
      truth[static_cast<size_t>(i * s * s + p) * 3] = unit_to_u8(r);
      truth[static_cast<size_t>(i * s * s + p) * 3 + 1] = unit_to_u8(g);
      truth[static_cast<size_t>(i * s * s + p) * 3 + 2] = unit_to_u8(b);
      any_color = any_color || r != g || g != b;
    }
  }
  ColorizationSet set =
      multi_round_colorize(model, gray, a.rounds, a.seed, any_color ? &truth : nullptr, a.strict);
  emit_grid(set, a.grid);
  std::cout << "wrote " << a.grid << " (" << m << " images x " << a.rounds << " rounds"
            << (any_color ? ", ground truth column" : "") << ")\n";
  return 0;
}

struct EvalArgs {
  std::string ckpt, report;
  DataArgs data;
  int rounds = 4;
  int batch = 16;
  uint64_t seed = 1;
};

int cmd_eval(const EvalArgs& a) {
  TrainedModel model = checkpoint_load(a.ckpt);
  DatasetHandle data = open_dataset(a.data, model.cfg.s);
  const int m = std::min(a.batch, data.size());
  std::vector<int> ids;
  Rng rng(a.seed);
  for (int i = 0; i < m; ++i) ids.push_back(rng.below(data.size()));
  const ImageBatch batch = make_batch(data, ids);
  std::vector<uint8_t> truth(static_cast<size_t>(batch.color.size()));
  for (int64_t i = 0; i < batch.color.size(); ++i)
    truth[static_cast<size_t>(i)] = unit_to_u8(rgb_to_display(batch.color.data()[i]));
  ColorizationSet set = multi_round_colorize(model, batch.gray, a.rounds, Rng::mix(a.seed, 1), &truth);
  const std::string report = eval_report(model, set);
  std::cout << report;
  if (!a.report.empty()) {
    std::ofstream f(a.report, std::ios::trunc);
    if (!f) fail("eval: cannot write " + a.report);
    f << report;
    std::cout << "wrote " << a.report << "\n";
  }
  return 0;
}

int cmd_gradcheck() {
  const std::vector<CheckResult> results = run_gradcheck_suite();
  int failed = 0;
  for (const auto& r : results) {
    std::printf("%-44s %s  (max rel err %.3g)\n", r.name.c_str(), r.pass ? "ok" : "FAIL", r.stat);
    if (!r.pass) {
      ++failed;
      std::printf("    %s\n", r.detail.c_str());
    }
  }
  std::printf("%zu checks, %d failed\n", results.size(), failed);
  return failed == 0 ? 0 : 3;
}

struct SynthArgs {
  int n = 100;
  int size = 32;
  uint64_t seed = 1;
  std::string out;
};

int cmd_synth(const SynthArgs& a) {
  SynthSpec spec;
  spec.count = a.n;
  spec.size = a.size;
  spec.seed = a.seed;
  // the manifest header carries the full spec; echo it for the log
  std::istringstream head(synth_manifest(spec));
  for (std::string line; std::getline(head, line) && line.rfind("img=", 0) != 0;) std::cout << line << "\n";
  write_synth_dataset(spec, a.out);
  std::cout << "wrote " << a.n << " images @" << a.size << "px and manifest.txt to " << a.out << "\n";
  return 0;
}

struct CompareArgs {
  TrainArgs base;
  int layers_a = 3;
  int layers_b = 1;
  int rounds = 8;
  int eval_batch = 16;
};

int cmd_compare(const CompareArgs& a) {
  auto run_side = [&](int layers) {
    TrainArgs ta = a.base;
    ta.noise_layers = layers;
    TrainConfig cfg = build_config(ta);
    std::cout << "effective config (noise layers 1.." << layers << "):\n" << to_config_text(cfg);
    DatasetHandle data = open_dataset(ta.data, ta.size);
    TrainedModel model = train(cfg, data, "");
    // shared held-out batch and noise seed: only the architecture differs
    SynthSpec heldout;
    heldout.count = a.eval_batch;
    heldout.size = ta.size;
    heldout.seed = Rng::mix(ta.seed, 0xE7A1);
    DatasetHandle hd = DatasetHandle::synthetic(heldout);
    std::vector<int> ids;
    for (int i = 0; i < a.eval_batch; ++i) ids.push_back(i);
    const ImageBatch batch = make_batch(hd, ids);
    ColorizationSet set = multi_round_colorize(model, batch.gray, a.rounds, Rng::mix(ta.seed, 0xD1F), nullptr);
    return diversity_score(set).mean;
  };
  const double multi = run_side(a.layers_a);
  const double single = run_side(a.layers_b);
  std::printf("diversity noise-layers=%d: %.6f\n", a.layers_a, multi);
  std::printf("diversity noise-layers=%d: %.6f\n", a.layers_b, single);
  std::printf("ratio: %.3f\n", single > 0 ? multi / single : std::numeric_limits<double>::infinity());
  return 0;
}

void add_data_options(CLI::App* cmd, DataArgs& d) {
  cmd->add_option("--data", d.dir, "directory of .png/.ppm images");
  cmd->add_option("--synthetic", d.synthetic, "use N synthetic iso-gray images");
  cmd->add_option("--data-seed", d.seed, "seed for the synthetic dataset");
}

void add_train_options(CLI::App* cmd, TrainArgs& t) {
  add_data_options(cmd, t.data);
  cmd->add_option("--size", t.size, "image side length");
  cmd->add_option("--iters", t.iters, "training iterations");
  cmd->add_option("--batch", t.batch, "minibatch size m");
  cmd->add_option("--zdim", t.zdim, "noise vector length");
  cmd->add_option("--kd", t.kd, "discriminator steps per iteration");
  cmd->add_option("--kg", t.kg, "generator steps per iteration");
  cmd->add_option("--lambda", t.lambda, "L1 weight (RGB mode)");
  cmd->add_option("--colorspace", t.colorspace, "yuv|rgb")->check(CLI::IsMember({"yuv", "rgb"}));
  cmd->add_option("--noise-layers", t.noise_layers, "inject noise into layers 1..K")->check(CLI::Range(1, 6));
  cmd->add_option("--cond-layers", t.cond_layers, "first|all")->check(CLI::IsMember({"first", "all"}));
  cmd->add_option("--loss", t.loss, "saturating|nonsaturating")
      ->check(CLI::IsMember({"saturating", "nonsaturating"}));
  cmd->add_option("--noise", t.noise_kind, "projected|tiled")->check(CLI::IsMember({"projected", "tiled"}));
  cmd->add_option("--bn-infer", t.bn_infer, "batch|running")->check(CLI::IsMember({"batch", "running"}));
  cmd->add_option("--seed", t.seed, "master seed");
  cmd->add_option("--g-widths", t.g_widths, "generator channel widths (6 values)")->delimiter(',');
  cmd->add_option("--d-widths", t.d_widths, "discriminator channel widths (4 values)")->delimiter(',');
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"diverse grayscale colorization with a conditional GAN"};
  app.require_subcommand(1);

  TrainArgs train_args;
  CLI::App* trainc = app.add_subcommand("train", "train a model");
  add_train_options(trainc, train_args);
  trainc->add_option("--out", train_args.out, "output directory")->required();

  ColorizeArgs col_args;
  CLI::App* colc = app.add_subcommand("colorize", "multi-round colorization grid from a checkpoint");
  colc->add_option("--ckpt", col_args.ckpt, "checkpoint file")->required();
  colc->add_option("--input", col_args.input, "image file or directory")->required();
  colc->add_option("--rounds", col_args.rounds, "noise rounds per image");
  colc->add_option("--grid", col_args.grid, "output grid PNG");
  colc->add_option("--seed", col_args.seed, "noise seed");
  colc->add_flag("--strict", col_args.strict, "reject homogeneous batches");

  EvalArgs eval_args;
  CLI::App* evalc = app.add_subcommand("eval", "diversity/consistency/realism report");
  evalc->add_option("--ckpt", eval_args.ckpt, "checkpoint file")->required();
  add_data_options(evalc, eval_args.data);
  evalc->add_option("--rounds", eval_args.rounds, "noise rounds");
  evalc->add_option("--batch", eval_args.batch, "evaluation batch size");
  evalc->add_option("--report", eval_args.report, "write the report here");
  evalc->add_option("--seed", eval_args.seed, "evaluation seed");

  CLI::App* gradc = app.add_subcommand("gradcheck", "finite-difference verification suite");

  SynthArgs synth_args;
  CLI::App* synthc = app.add_subcommand("synth", "write a synthetic iso-gray dataset");
  synthc->add_option("--n", synth_args.n, "image count");
  synthc->add_option("--size", synth_args.size, "image side length");
  synthc->add_option("--seed", synth_args.seed, "dataset seed");
  synthc->add_option("--out", synth_args.out, "output directory")->required();

  CompareArgs cmp_args;
  CLI::App* cmpc = app.add_subcommand("compare", "seeded ablation pair: multi- vs single-layer noise");
  add_train_options(cmpc, cmp_args.base);
  cmpc->add_option("--layers-a", cmp_args.layers_a, "noise layers, first model");
  cmpc->add_option("--layers-b", cmp_args.layers_b, "noise layers, second model");
  cmpc->add_option("--rounds", cmp_args.rounds, "evaluation rounds");
  cmpc->add_option("--eval-batch", cmp_args.eval_batch, "held-out batch size");

  try {
    app.parse(argc, argv);
    if (trainc->parsed()) return cmd_train(train_args);
    if (colc->parsed()) return cmd_colorize(col_args);
    if (evalc->parsed()) return cmd_eval(eval_args);
    if (gradc->parsed()) return cmd_gradcheck();
    if (synthc->parsed()) return cmd_synth(synth_args);
    if (cmpc->parsed()) return cmd_compare(cmp_args);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
    app.exit(e);
    return 1;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
