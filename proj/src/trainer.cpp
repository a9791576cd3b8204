#include "cgan/trainer.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace cgan {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

namespace fs = std::filesystem;

// ---- default specs ---------------------------------------------------------

GeneratorSpec default_generator_spec(int s, ColorMode mode) {
  GeneratorSpec g;
  g.image_size = s;
  const int out = mode == ColorMode::kYUV ? 2 : 3;
  if (s >= 64)
    g.widths = {64, 128, 256, 128, 64, out};
  else
    g.widths = {32, 64, 64, 32, 16, out};
  return g;
}

DiscriminatorSpec default_discriminator_spec(int s) {
  DiscriminatorSpec d;
  d.image_size = s;
  if (s < 64) d.widths = {32, 64, 128, 128};
  return d;
}

TrainConfig default_config(int s, ColorMode mode) {
  TrainConfig cfg;
  cfg.s = s;
  cfg.mode = mode;
  cfg.gen = default_generator_spec(s, mode);
  cfg.disc = default_discriminator_spec(s);
  return cfg;
}

// ---- config text ------------------------------------------------------------

namespace {

std::string join_ints(const std::vector<int>& v) {
  std::ostringstream os;
  for (size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[static_cast<size_t>(i)];
  return os.str();
}

std::vector<int> split_ints(const std::string& s) {
  std::vector<int> out;
  std::istringstream is(s);
  std::string tok;
  while (std::getline(is, tok, ','))
    if (!tok.empty()) out.push_back(std::stoi(tok));
  return out;
}

std::string fmt_f32(float v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(v));
  return buf;
}

}  // namespace

std::string to_config_text(const TrainConfig& cfg) {
  std::ostringstream os;
  os << "cgan-config-v1\n";
  os << "mode=" << to_string(cfg.mode) << "\n";
  os << "loss=" << to_string(cfg.loss_variant) << "\n";
  os << "k_d=" << cfg.k_d << "\nk_g=" << cfg.k_g << "\nm=" << cfg.m << "\ns_z=" << cfg.s_z << "\ns=" << cfg.s
     << "\niters=" << cfg.iters << "\n";
  os << "lambda=" << fmt_f32(cfg.lambda_l1) << "\n";
  os << "lr=" << fmt_f32(cfg.lr) << "\nbeta1=" << fmt_f32(cfg.beta1) << "\nbeta2=" << fmt_f32(cfg.beta2)
     << "\nadam_eps=" << fmt_f32(cfg.adam_eps) << "\n";
  os << "seed_data=" << cfg.seed_data << "\nseed_noise=" << cfg.seed_noise << "\nseed_init=" << cfg.seed_init
     << "\n";
  os << "noise_dist=" << (cfg.noise_dist == NoiseDist::kNormal ? "normal" : "uniform") << "\n";
  os << "bn_infer=" << (cfg.bn_infer == BnInfer::kBatchStats ? "batch" : "running") << "\n";
  os << "ckpt_every=" << cfg.ckpt_every << "\n";
  os << "iters_done=" << cfg.iters_done << "\n";
  os << "gen.num_layers=" << cfg.gen.num_layers << "\ngen.kernel=" << cfg.gen.kernel << "\n";
  os << "gen.widths=" << join_ints(cfg.gen.widths) << "\n";
  os << "gen.noise_layers=" << join_ints(cfg.gen.noise_layers) << "\n";
  os << "gen.cond_layers=" << join_ints(cfg.gen.cond_layers) << "\n";
  os << "gen.noise_channels=" << cfg.gen.noise_channels_per_site << "\n";
  os << "gen.tiled_noise=" << (cfg.gen.tiled_noise ? 1 : 0) << "\n";
  os << "gen.bn_eps=" << fmt_f32(cfg.gen.bn_epsilon) << "\ngen.bn_momentum=" << fmt_f32(cfg.gen.bn_momentum)
     << "\n";
  os << "disc.widths=" << join_ints(cfg.disc.widths) << "\n";
  os << "disc.kernels=" << join_ints(cfg.disc.kernels) << "\n";
  os << "disc.conditional=" << (cfg.disc.conditional ? 1 : 0) << "\n";
  os << "disc.bn_eps=" << fmt_f32(cfg.disc.bn_epsilon) << "\ndisc.bn_momentum=" << fmt_f32(cfg.disc.bn_momentum)
     << "\n";
  return os.str();
}

TrainConfig parse_config_text(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != "cgan-config-v1") fail("config: unrecognized header");
  std::map<std::string, std::string> kv;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) fail("config: bad line: " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto need = [&](const std::string& k) {
    auto it = kv.find(k);
    if (it == kv.end()) fail("config: missing key " + k);
    return it->second;
  };
  TrainConfig cfg;
  cfg.mode = need("mode") == "yuv" ? ColorMode::kYUV : ColorMode::kRGB;
  cfg.loss_variant = need("loss") == "saturating" ? GenLoss::kSaturating : GenLoss::kNonSaturating;
  cfg.k_d = std::stoi(need("k_d"));
  cfg.k_g = std::stoi(need("k_g"));
  cfg.m = std::stoi(need("m"));
  cfg.s_z = std::stoi(need("s_z"));
  cfg.s = std::stoi(need("s"));
  cfg.iters = std::stoi(need("iters"));
  cfg.lambda_l1 = std::stof(need("lambda"));
  cfg.lr = std::stof(need("lr"));
  cfg.beta1 = std::stof(need("beta1"));
  cfg.beta2 = std::stof(need("beta2"));
  cfg.adam_eps = std::stof(need("adam_eps"));
  cfg.seed_data = std::stoull(need("seed_data"));
  cfg.seed_noise = std::stoull(need("seed_noise"));
  cfg.seed_init = std::stoull(need("seed_init"));
  cfg.noise_dist = need("noise_dist") == "normal" ? NoiseDist::kNormal : NoiseDist::kUniform;
  cfg.bn_infer = need("bn_infer") == "batch" ? BnInfer::kBatchStats : BnInfer::kRunning;
  cfg.ckpt_every = std::stoi(need("ckpt_every"));
  cfg.iters_done = std::stoi(need("iters_done"));
  cfg.gen.num_layers = std::stoi(need("gen.num_layers"));
  cfg.gen.kernel = std::stoi(need("gen.kernel"));
  cfg.gen.widths = split_ints(need("gen.widths"));
  cfg.gen.noise_layers = split_ints(need("gen.noise_layers"));
  cfg.gen.cond_layers = split_ints(need("gen.cond_layers"));
  cfg.gen.noise_channels_per_site = std::stoi(need("gen.noise_channels"));
  cfg.gen.tiled_noise = need("gen.tiled_noise") == "1";
  cfg.gen.bn_epsilon = std::stof(need("gen.bn_eps"));
  cfg.gen.bn_momentum = std::stof(need("gen.bn_momentum"));
  cfg.gen.s_z = cfg.s_z;
  cfg.gen.image_size = cfg.s;
  cfg.disc.widths = split_ints(need("disc.widths"));
  cfg.disc.kernels = split_ints(need("disc.kernels"));
  cfg.disc.conditional = need("disc.conditional") == "1";
  cfg.disc.bn_epsilon = std::stof(need("disc.bn_eps"));
  cfg.disc.bn_momentum = std::stof(need("disc.bn_momentum"));
  cfg.disc.image_size = cfg.s;
  cfg.validate();
  return cfg;
}

// ---- optimizer ---------------------------------------------------------------

void Adam::attach(const std::vector<NamedTensor<float>>& params) {
  m1_.clear();
  m2_.clear();
  t_ = 0;
  for (const auto& p : params) {
    m1_.emplace_back(static_cast<size_t>(p.tensor.size()), 0.f);
    m2_.emplace_back(static_cast<size_t>(p.tensor.size()), 0.f);
  }
}

void Adam::step(std::vector<NamedTensor<float>>& params) {
  if (m1_.size() != params.size()) fail("adam: optimizer not attached to this parameter list");
  ++t_;
  const float bc1 = 1.f - std::pow(b1_, static_cast<float>(t_));
  const float bc2 = 1.f - std::pow(b2_, static_cast<float>(t_));
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor<float>& p = params[i].tensor;
    if (m1_[i].size() != static_cast<size_t>(p.size())) fail("adam: parameter shape changed under optimizer");
    const bool has_g = p.has_grad();
    const std::vector<float>* g = has_g ? &p.grad() : nullptr;
    float* m1 = m1_[i].data();
    float* m2 = m2_[i].data();
    float* x = p.data();
    const int64_t n = p.size();
    for (int64_t j = 0; j < n; ++j) {
      const float gj = has_g ? (*g)[static_cast<size_t>(j)] : 0.f;
      m1[j] = b1_ * m1[j] + (1.f - b1_) * gj;
      m2[j] = b2_ * m2[j] + (1.f - b2_) * gj * gj;
      x[j] -= lr_ * (m1[j] / bc1) / (std::sqrt(m2[j] / bc2) + eps_);
    }
  }
}

// ---- metrics ------------------------------------------------------------------

std::string metrics_csv(const std::vector<MetricsRecord>& records) {
  std::ostringstream os;
  os << "iter,loss_d,loss_g,d_real_mean,d_fake_mean,l1_term\n";
  for (const auto& r : records)
    os << r.iter << "," << fmt_f32(r.loss_d) << "," << fmt_f32(r.loss_g) << "," << fmt_f32(r.d_real_mean) << ","
       << fmt_f32(r.d_fake_mean) << "," << fmt_f32(r.l1_term) << "\n";
  return os.str();
}

uint64_t fnv1a64(const void* data, size_t len, uint64_t h) {
  const uint8_t* p = static_cast<const uint8_t*>(data);
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

uint64_t hash_params(std::vector<NamedTensor<float>>& params) {
  uint64_t h = 1469598103934665603ull;
  for (auto& p : params) {
    h = fnv1a64(p.name.data(), p.name.size(), h);
    h = fnv1a64(p.tensor.data(), static_cast<size_t>(p.tensor.size()) * sizeof(float), h);
  }
  return h;
}

// ---- training loop --------------------------------------------------------------

namespace {

void clear_all_grads(std::vector<NamedTensor<float>>& a, std::vector<NamedTensor<float>>& b) {
  for (auto& p : a) p.tensor.clear_grad();
  for (auto& p : b) p.tensor.clear_grad();
}

float mean_sigmoid(const Tensor<float>& logits) {
  double acc = 0;
  for (int64_t i = 0; i < logits.size(); ++i) {
    const double x = static_cast<double>(logits.data()[i]);
    acc += x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  }
  return static_cast<float>(acc / static_cast<double>(logits.size()));
}

void check_finite(const Tensor<float>& t, const char* name, int iter) {
  if (!all_finite(t))
    fail(std::string("train: non-finite ") + name + " at iteration " + std::to_string(iter));
}

}  // namespace

TrainedModel train(const TrainConfig& cfg_in, const DatasetHandle& data, const std::string& out_dir,
                   std::vector<MetricsRecord>* metrics_out, std::vector<UpdateTrace>* trace) {
  TrainConfig cfg = cfg_in;
  cfg.validate();
  TrainedModel model{cfg, Generator<float>(cfg.gen, Rng::mix(cfg.seed_init, 1)),
                     Discriminator<float>(cfg.disc, Rng::mix(cfg.seed_init, 2))};
  return train_model(std::move(model), data, out_dir, metrics_out, trace);
}

TrainedModel train_model(TrainedModel model, const DatasetHandle& data, const std::string& out_dir,
                         std::vector<MetricsRecord>* metrics_out, std::vector<UpdateTrace>* trace) {
  const TrainConfig cfg = model.cfg;
  cfg.validate();
  if (data.image_size() != cfg.s) fail("train: dataset image size disagrees with config");
  if (data.size() < cfg.m) fail("train: dataset smaller than one minibatch");

  auto g_params = model.gen.params();
  auto d_params = model.disc.params();
  Adam opt_g(cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps);
  Adam opt_d(cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps);
  opt_g.attach(g_params);
  opt_d.attach(d_params);

  BatchSampler sampler(data, cfg.m, cfg.seed_data);
  std::vector<MetricsRecord> metrics;
  metrics.reserve(static_cast<size_t>(cfg.iters));
  std::ofstream metrics_file;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    metrics_file.open(fs::path(out_dir) / "metrics.csv", std::ios::trunc);
    if (!metrics_file) fail("train: cannot write metrics.csv in " + out_dir);
    metrics_file << "iter,loss_d,loss_g,d_real_mean,d_fake_mean,l1_term\n";
    metrics_file.flush();
  }

  Tape<float> tape;
  uint64_t noise_ctr = 0;
  auto fresh_noise = [&]() {
    return sample_noise(cfg.m, cfg.s_z, Rng::mix(cfg.seed_noise, noise_ctr++), cfg.noise_dist);
  };

  for (int iter = 1; iter <= cfg.iters; ++iter) {
    MetricsRecord rec;
    rec.iter = iter;

    for (int step = 0; step < cfg.k_d; ++step) {
      tape.reset();
      const Tensor<float> z = fresh_noise();
      const ImageBatch batch = sampler.next();
      Tensor<float> fake_in, real_in;
      {
        NoGrad<float> ng(tape);  // fakes are constants for the D update
        Tensor<float> g_out = model.gen.forward(tape, batch.gray, z, BnMode::kTrain);
        fake_in = fake_d_input(tape, batch.gray, g_out, cfg.mode);
        real_in = real_d_input(tape, batch.color, batch.gray, cfg.mode);
      }
      Tensor<float> logit_real = model.disc.forward_logits(tape, real_in, BnMode::kTrain,
                                                           cfg.disc.conditional ? &batch.gray : nullptr);
      Tensor<float> logit_fake = model.disc.forward_logits(tape, fake_in, BnMode::kTrain,
                                                           cfg.disc.conditional ? &batch.gray : nullptr);
      Tensor<float> loss_d = loss_discriminator_logits(tape, logit_real, logit_fake);
      check_finite(loss_d, "loss_d", iter);
      clear_all_grads(g_params, d_params);
      tape.backward(loss_d);
      opt_d.step(d_params);
      rec.loss_d = loss_d.item();
      rec.d_real_mean = mean_sigmoid(logit_real);
      rec.d_fake_mean = mean_sigmoid(logit_fake);
      if (trace)
        trace->push_back({'D', iter, step, fnv1a64(z.data(), static_cast<size_t>(z.size()) * sizeof(float)),
                          hash_params(g_params), hash_params(d_params)});
    }

    for (int step = 0; step < cfg.k_g; ++step) {
      tape.reset();
      const Tensor<float> z = fresh_noise();
      const ImageBatch batch = sampler.next();
      Tensor<float> g_out = model.gen.forward(tape, batch.gray, z, BnMode::kTrain);
      Tensor<float> fake_in = fake_d_input(tape, batch.gray, g_out, cfg.mode);
      Tensor<float> logit_fake = model.disc.forward_logits(tape, fake_in, BnMode::kTrain,
                                                           cfg.disc.conditional ? &batch.gray : nullptr);
      Tensor<float> loss_g = loss_generator_logits(tape, logit_fake, cfg.loss_variant);
      check_finite(loss_g, "loss_g", iter);
      Tensor<float> total = loss_g;
      rec.l1_term = 0.f;
      if (cfg.mode == ColorMode::kRGB) {
        Tensor<float> display = add_scalar(tape, scale(tape, g_out, 0.5f), 0.5f);
        Tensor<float> l1 = loss_l1_gray(tape, batch.gray, display, cfg.mode);
        check_finite(l1, "l1", iter);
        rec.l1_term = l1.item();
        total = combined_generator_objective(tape, loss_g, l1, cfg.effective_lambda());
      }
      clear_all_grads(g_params, d_params);
      tape.backward(total);
      opt_g.step(g_params);
      rec.loss_g = loss_g.item();
      if (trace)
        trace->push_back({'G', iter, step, fnv1a64(z.data(), static_cast<size_t>(z.size()) * sizeof(float)),
                          hash_params(g_params), hash_params(d_params)});
    }

    metrics.push_back(rec);
    if (metrics_file.is_open()) {
      metrics_file << rec.iter << "," << fmt_f32(rec.loss_d) << "," << fmt_f32(rec.loss_g) << ","
                   << fmt_f32(rec.d_real_mean) << "," << fmt_f32(rec.d_fake_mean) << "," << fmt_f32(rec.l1_term)
                   << "\n";
      metrics_file.flush();
      if (!metrics_file) fail("train: metrics write failed at iteration " + std::to_string(iter));
    }
    model.cfg.iters_done = iter;
    if (!out_dir.empty() && cfg.ckpt_every > 0 && iter % cfg.ckpt_every == 0 && iter != cfg.iters) {
      char name[32];
      std::snprintf(name, sizeof name, "ckpt_%06d.bin", iter);
      checkpoint_save((fs::path(out_dir) / name).string(), model);
    }
  }

  if (!out_dir.empty()) checkpoint_save((fs::path(out_dir) / "checkpoint.bin").string(), model, &opt_g, &opt_d);
  if (metrics_out) *metrics_out = std::move(metrics);
  return model;
}

// ---- checkpoints ------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'C', 'G', 'A', 'N', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ofstream& f, uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); }

uint32_t get_u32(std::ifstream& f, const std::string& path) {
  uint32_t v = 0;
  if (!f.read(reinterpret_cast<char*>(&v), 4)) fail("checkpoint: truncated file: " + path);
  return v;
}

void write_tensor(std::ofstream& f, const std::string& name, const Tensor<float>& t) {
  put_u32(f, static_cast<uint32_t>(name.size()));
  f.write(name.data(), static_cast<std::streamsize>(name.size()));
  put_u32(f, static_cast<uint32_t>(t.rank()));
  for (int i = 0; i < t.rank(); ++i) put_u32(f, static_cast<uint32_t>(t.dim(i)));
  put_u32(f, 0);  // dtype tag: f32
  f.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * 4));
}

std::vector<NamedTensor<float>> all_tensors(TrainedModel& model) {
  std::vector<NamedTensor<float>> out = model.gen.params();
  for (auto& t : model.gen.state()) out.push_back(t);
  for (auto& t : model.disc.params()) out.push_back(t);
  for (auto& t : model.disc.state()) out.push_back(t);
  return out;
}

}  // namespace

void checkpoint_save(const std::string& path, TrainedModel& model, const Adam* opt_g, const Adam* opt_d) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail("checkpoint: cannot open for writing: " + path);
  f.write(kMagic, 8);
  put_u32(f, kVersion);
  const std::string cfg = to_config_text(model.cfg);
  put_u32(f, static_cast<uint32_t>(cfg.size()));
  f.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));

  std::vector<NamedTensor<float>> tensors = all_tensors(model);
  std::vector<std::pair<std::string, Tensor<float>>> extra;
  auto add_opt = [&](const char* tag, const Adam* opt, std::vector<NamedTensor<float>> params) {
    if (!opt || opt->moments1().empty()) return;
    extra.emplace_back(std::string("opt.") + tag + ".t",
                       Tensor<float>::scalar(static_cast<float>(opt->t())));
    for (size_t i = 0; i < params.size(); ++i) {
      extra.emplace_back("opt." + std::string(tag) + ".m1." + params[i].name,
                         Tensor<float>::from(params[i].tensor.shape(), opt->moments1()[i]));
      extra.emplace_back("opt." + std::string(tag) + ".m2." + params[i].name,
                         Tensor<float>::from(params[i].tensor.shape(), opt->moments2()[i]));
    }
  };
  add_opt("g", opt_g, model.gen.params());
  add_opt("d", opt_d, model.disc.params());

  put_u32(f, static_cast<uint32_t>(tensors.size() + extra.size()));
  for (auto& t : tensors) write_tensor(f, t.name, t.tensor);
  for (auto& t : extra) write_tensor(f, t.first, t.second);
  if (!f) fail("checkpoint: short write: " + path);
}

TrainedModel checkpoint_load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail("checkpoint: cannot open: " + path);
  char magic[8];
  if (!f.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
    fail("checkpoint: bad magic, not a checkpoint file: " + path);
  const uint32_t version = get_u32(f, path);
  if (version != kVersion)
    fail("checkpoint: unsupported version " + std::to_string(version) + " in " + path);
  const uint32_t cfg_len = get_u32(f, path);
  std::string cfg_text(cfg_len, '\0');
  if (!f.read(cfg_text.data(), cfg_len)) fail("checkpoint: truncated config: " + path);
  const TrainConfig cfg = parse_config_text(cfg_text);

  TrainedModel model{cfg, Generator<float>(cfg.gen, 0), Discriminator<float>(cfg.disc, 0)};
  std::map<std::string, Tensor<float>> expected;
  for (auto& t : all_tensors(model)) expected.emplace(t.name, t.tensor);

  const uint32_t count = get_u32(f, path);
  size_t loaded = 0;
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t name_len = get_u32(f, path);
    std::string name(name_len, '\0');
    if (!f.read(name.data(), name_len)) fail("checkpoint: truncated tensor name: " + path);
    const uint32_t rank = get_u32(f, path);
    if (rank < 1 || rank > 4) fail("checkpoint: bad tensor rank for " + name + ": " + path);
    Shape shape;
    for (uint32_t r = 0; r < rank; ++r) shape.push_back(static_cast<int>(get_u32(f, path)));
    const uint32_t dtype = get_u32(f, path);
    if (dtype != 0) fail("checkpoint: unsupported dtype tag for " + name + ": " + path);
    std::vector<float> data(static_cast<size_t>(numel(shape)));
    if (!f.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * 4)))
      fail("checkpoint: truncated tensor data for " + name + ": " + path);
    auto it = expected.find(name);
    if (it == expected.end()) {
      if (name.rfind("opt.", 0) == 0) continue;  // optimizer state is optional on load
      fail("checkpoint: unexpected tensor " + name + " in " + path);
    }
    if (it->second.shape() != shape)
      fail("checkpoint: tensor shape mismatch for " + name + ": file has " + to_string(shape) +
           ", spec needs " + to_string(it->second.shape()) + ": " + path);
    std::copy(data.begin(), data.end(), it->second.data());
    ++loaded;
  }
  if (loaded != expected.size())
    fail("checkpoint: missing tensors (" + std::to_string(loaded) + " of " + std::to_string(expected.size()) +
         "): " + path);
  return model;
}

}  // namespace cgan
