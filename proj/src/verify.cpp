#include "cgan/verify.hpp"

#include <functional>

#include "cgan/gradcheck.hpp"

namespace cgan {

GeneratorWalk shape_walk_generator(const GeneratorSpec& spec) {
  GeneratorWalk w;
  const int s = spec.image_size;
  int prev = 0;
  for (int l = 1; l <= spec.num_layers; ++l) {
    int cin = prev;
    if (spec.has_cond(l)) cin += 1;
    if (spec.has_noise(l)) cin += spec.noise_channels_per_site;
    const int cout = spec.widths[static_cast<size_t>(l - 1)];
    w.in_channels.push_back(cin);
    w.out_channels.push_back(cout);
    w.param_count += static_cast<int64_t>(spec.kernel) * spec.kernel * cin * cout + cout;
    if (l < spec.num_layers) w.param_count += 2 * cout;  // gamma, beta
    if (spec.has_noise(l) && !spec.tiled_noise) {
      const int64_t planes = static_cast<int64_t>(s) * s * spec.noise_channels_per_site;
      w.param_count += static_cast<int64_t>(spec.s_z) * planes + planes;
    }
    prev = cout;
  }
  return w;
}

DiscriminatorWalk shape_walk_discriminator(const DiscriminatorSpec& spec) {
  DiscriminatorWalk w;
  int s = spec.image_size;
  int cin = spec.conditional ? 4 : 3;
  for (size_t i = 0; i < spec.widths.size(); ++i) {
    s = (s + 1) / 2;  // ceil(s / 2)
    w.spatial.push_back(s);
    w.param_count += static_cast<int64_t>(spec.kernels[i]) * spec.kernels[i] * cin * spec.widths[i] + spec.widths[i];
    if (i > 0) w.param_count += 2 * spec.widths[i];
    cin = spec.widths[i];
  }
  w.head_inputs = s * s * spec.widths.back();
  w.param_count += static_cast<int64_t>(w.head_inputs) * 1 + 1;
  return w;
}

// ---- gradient-check suite ---------------------------------------------------

namespace {

using D = double;
using Td = Tensor<double>;
using Build = std::function<Td(Tape<double>&)>;

CheckResult from_report(const GradCheckReport& rep) {
  CheckResult r;
  r.name = rep.name;
  r.pass = rep.pass;
  r.stat = rep.max_rel_err;
  if (!rep.pass)
    r.detail = "max rel err " + std::to_string(rep.max_rel_err) + " at index " + std::to_string(rep.worst_index);
  return r;
}

// loss = sum(op(x) * w): w decorrelates the gradient from plain ones
Td weighted_sum(Tape<double>& tape, const Td& t, const Td& w) { return reduce_sum(tape, mul(tape, t, w)); }

struct Suite {
  std::vector<CheckResult> results;

  void check(const std::string& name, const Build& build, Td target, double eps = 1e-5, double tol = 1e-4,
             int64_t max_elements = 0) {
    results.push_back(from_report(grad_check(name, build, target, eps, tol, max_elements)));
  }
};

void elementwise_checks(Suite& s) {
  const Td w = Td::normal({3, 4}, 0, 1, 101);
  {
    Td a = Td::normal({3, 4}, 0, 1, 1);
    Td b = Td::normal({3, 4}, 0, 1, 2);
    for (auto& [nm, fn] : std::vector<std::pair<std::string, std::function<Td(Tape<D>&, const Td&, const Td&)>>>{
             {"add", [](Tape<D>& t, const Td& x, const Td& y) { return add(t, x, y); }},
             {"sub", [](Tape<D>& t, const Td& x, const Td& y) { return sub(t, x, y); }},
             {"mul", [](Tape<D>& t, const Td& x, const Td& y) { return mul(t, x, y); }}}) {
      s.check("elementwise/" + nm + "/lhs", [&, fn](Tape<D>& t) { return weighted_sum(t, fn(t, a, b), w); }, a);
      s.check("elementwise/" + nm + "/rhs", [&, fn](Tape<D>& t) { return weighted_sum(t, fn(t, a, b), w); }, b);
    }
    Td bias = Td::normal({4}, 0, 1, 3);
    s.check("elementwise/add/bias-broadcast",
            [&](Tape<D>& t) { return weighted_sum(t, add(t, a, bias), w); }, bias);
    Td sc = Td::normal({1}, 0, 1, 4);
    s.check("elementwise/mul/scalar-broadcast",
            [&](Tape<D>& t) { return weighted_sum(t, mul(t, a, sc), w); }, sc);
  }
  {
    Td x = Td::normal({3, 4}, 0, 1, 5);
    s.check("elementwise/scale", [&](Tape<D>& t) { return weighted_sum(t, scale(t, x, 1.7), w); }, x);
    s.check("elementwise/tanh", [&](Tape<D>& t) { return weighted_sum(t, tanh(t, x), w); }, x);
    s.check("elementwise/sigmoid", [&](Tape<D>& t) { return weighted_sum(t, sigmoid(t, x), w); }, x);
    s.check("elementwise/softplus", [&](Tape<D>& t) { return weighted_sum(t, softplus(t, x), w); }, x);
  }
  {
    // keep |x| clear of the relu/abs kink at 0
    Td x = Td::normal({3, 4}, 0, 1, 6);
    for (int64_t i = 0; i < x.size(); ++i)
      if (std::abs(x.data()[i]) < 0.05) x.data()[i] = x.data()[i] < 0 ? -0.05 : 0.05;
    s.check("elementwise/relu", [&](Tape<D>& t) { return weighted_sum(t, relu(t, x), w); }, x);
    s.check("elementwise/leaky_relu",
            [&](Tape<D>& t) { return weighted_sum(t, leaky_relu(t, x, 0.2), w); }, x);
    s.check("elementwise/abs", [&](Tape<D>& t) { return weighted_sum(t, abs(t, x), w); }, x);
  }
  {
    Td x = Td::normal({3, 4}, 1.5, 0.2, 7);  // strictly positive
    s.check("elementwise/log", [&](Tape<D>& t) { return weighted_sum(t, log(t, x), w); }, x);
  }
}

void structural_checks(Suite& s) {
  {
    Td a = Td::normal({5, 4}, 0, 1, 10);
    Td b = Td::normal({4, 3}, 0, 1, 11);
    Td w = Td::normal({5, 3}, 0, 1, 12);
    s.check("matmul/lhs", [&](Tape<D>& t) { return weighted_sum(t, matmul(t, a, b), w); }, a);
    s.check("matmul/rhs", [&](Tape<D>& t) { return weighted_sum(t, matmul(t, a, b), w); }, b);
  }
  {
    Td a = Td::normal({2, 3, 3, 2}, 0, 1, 13);
    Td b = Td::normal({2, 3, 3, 1}, 0, 1, 14);
    Td c = Td::normal({2, 3, 3, 3}, 0, 1, 15);
    Td w = Td::normal({2, 3, 3, 6}, 0, 1, 16);
    auto build = [&](Tape<D>& t) { return weighted_sum(t, concat_channels(t, {a, b, c}), w); };
    s.check("concat_channels/part0", build, a);
    s.check("concat_channels/part1", build, b);
    s.check("concat_channels/part2", build, c);
    Td ws = Td::normal({2, 3, 3, 2}, 0, 1, 17);
    s.check("slice_channels", [&](Tape<D>& t) { return weighted_sum(t, slice_channels(t, c, 1, 3), ws); }, c);
  }
  {
    Td x = Td::normal({3, 4}, 0, 1, 18);
    s.check("reduce_sum/full", [&](Tape<D>& t) { return reduce_sum(t, x); }, x);
    s.check("reduce_mean/full", [&](Tape<D>& t) { return reduce_mean(t, x); }, x);
    Td w0 = Td::normal({4}, 0, 1, 19);
    s.check("reduce_mean/axis0",
            [&](Tape<D>& t) { return weighted_sum(t, reduce_mean(t, x, {0}), w0); }, x);
    Td w1 = Td::normal({3}, 0, 1, 20);
    s.check("reduce_sum/axis1",
            [&](Tape<D>& t) { return weighted_sum(t, reduce_sum(t, x, {1}), w1); }, x);
    Td wr = Td::normal({12}, 0, 1, 21);
    s.check("reshape", [&](Tape<D>& t) { return weighted_sum(t, reshape(t, x, {12}), wr); }, x);
  }
}

void layer_checks(Suite& s) {
  {
    Conv2DLayer<D> conv(3, 2, 3, 1, 30);
    Td x = Td::normal({1, 5, 5, 2}, 0, 1, 31);
    Td w = Td::normal({1, 5, 5, 3}, 0, 1, 32);
    auto build = [&](Tape<D>& t) { return weighted_sum(t, conv2d(t, x, conv), w); };
    s.check("conv2d/s1/input", build, x);
    s.check("conv2d/s1/kernel", build, conv.kernel);
    s.check("conv2d/s1/bias", build, conv.bias);
  }
  {
    Conv2DLayer<D> conv(5, 3, 2, 2, 33);
    Td x = Td::normal({2, 7, 7, 3}, 0, 1, 34);
    Td w = Td::normal({2, 4, 4, 2}, 0, 1, 35);
    auto build = [&](Tape<D>& t) { return weighted_sum(t, conv2d(t, x, conv), w); };
    s.check("conv2d/s2/input", build, x);
    s.check("conv2d/s2/kernel", build, conv.kernel);
  }
  {
    BatchNormLayer<D> bn(2);
    bn.gamma.data()[0] = 1.3;
    bn.gamma.data()[1] = 0.8;
    bn.beta.data()[0] = -0.2;
    bn.beta.data()[1] = 0.4;
    Td x = Td::normal({8, 4, 4, 2}, 0, 1, 36);
    Td w = Td::normal({8, 4, 4, 2}, 0, 1, 37);
    auto build = [&](Tape<D>& t) { return weighted_sum(t, batchnorm(t, x, bn, BnMode::kTrain), w); };
    s.check("batchnorm/train/input", build, x);
    s.check("batchnorm/train/gamma", build, bn.gamma);
    s.check("batchnorm/train/beta", build, bn.beta);
  }
  {
    DenseLayer<D> fc(4, 2, 38);
    Td x = Td::normal({3, 4}, 0, 1, 39);
    Td w = Td::normal({3, 2}, 0, 1, 40);
    auto build = [&](Tape<D>& t) { return weighted_sum(t, dense(t, x, fc), w); };
    s.check("dense/input", build, x);
    s.check("dense/weight", build, fc.weight);
    s.check("dense/bias", build, fc.bias);
  }
}

void loss_checks(Suite& s) {
  Td lr = Td::normal({4, 1}, 0, 1.2, 50);
  Td lf = Td::normal({4, 1}, 0, 1.2, 51);
  s.check("loss/discriminator_logits/real",
          [&](Tape<D>& t) { return loss_discriminator_logits(t, lr, lf); }, lr);
  s.check("loss/discriminator_logits/fake",
          [&](Tape<D>& t) { return loss_discriminator_logits(t, lr, lf); }, lf);
  s.check("loss/generator_logits/saturating",
          [&](Tape<D>& t) { return loss_generator_logits(t, lf, GenLoss::kSaturating); }, lf);
  s.check("loss/generator_logits/nonsaturating",
          [&](Tape<D>& t) { return loss_generator_logits(t, lf, GenLoss::kNonSaturating); }, lf);

  // probability-surface variants, inputs strictly inside (0,1)
  Td pr = Td::normal({4, 1}, 0.5, 0.12, 52);
  Td pf = Td::normal({4, 1}, 0.5, 0.12, 53);
  s.check("loss/discriminator_probs/real",
          [&](Tape<D>& t) { return loss_discriminator(t, pr, pf); }, pr);
  s.check("loss/discriminator_probs/fake",
          [&](Tape<D>& t) { return loss_discriminator(t, pr, pf); }, pf);
  s.check("loss/generator_probs",
          [&](Tape<D>& t) { return loss_generator(t, pf, GenLoss::kNonSaturating); }, pf);

  {
    Td rgb = Td::normal({2, 3, 3, 3}, 0.5, 0.15, 54);
    Td y = Td::zeros({2, 3, 3, 1});
    {
      // keep y off the |.| kink by a fixed offset from the actual gray
      Tape<D> t;
      t.set_recording(false);
      Td g = gray_of_rgb(t, rgb);
      for (int64_t i = 0; i < y.size(); ++i) y.data()[i] = g.data()[i] + ((i % 2) ? 0.07 : -0.07);
    }
    auto build = [&](Tape<D>& t) { return loss_l1_gray(t, y, rgb, ColorMode::kRGB); };
    s.check("loss/l1_gray/rgb", build, rgb);
    s.check("loss/l1_gray/y", build, y);
  }
  {
    Td x = Td::normal({4, 1}, 0.6, 0.1, 55);
    auto build = [&](Tape<D>& t) {
      Td lg = reduce_mean(t, softplus(t, scale(t, x, -1.0)));
      Td l1 = reduce_mean(t, abs(t, add_scalar(t, x, -0.3)));
      return combined_generator_objective(t, lg, l1, 7.5);
    };
    s.check("loss/combined_objective", build, x);
  }
}

void end_to_end_check(Suite& s) {
  GeneratorSpec gs;
  gs.widths = {4, 4, 4, 4, 4, 2};
  gs.image_size = 8;
  gs.s_z = 6;
  DiscriminatorSpec ds;
  ds.widths = {4, 6, 6, 6};
  ds.image_size = 8;
  Generator<D> gen(gs, 60);
  Discriminator<D> disc(ds, 61);
  Td y = Td::normal({2, 8, 8, 1}, 0.5, 0.15, 62);
  Td z = Td::normal({2, 6}, 0, 1, 63);
  Td real = Td::normal({2, 8, 8, 3}, 0, 0.4, 64);

  auto gen_loss = [&](Tape<D>& t) {
    Td g_out = gen.forward(t, y, z, BnMode::kTrain);
    Td fake = fake_d_input(t, y, g_out, ColorMode::kYUV);
    Td logit = disc.forward_logits(t, fake, BnMode::kTrain);
    return loss_generator_logits(t, logit, GenLoss::kNonSaturating);
  };
  auto disc_loss = [&](Tape<D>& t) {
    Td g_out = gen.forward(t, y, z, BnMode::kTrain);
    Td fake = fake_d_input(t, y, g_out, ColorMode::kYUV);
    Td logit_fake = disc.forward_logits(t, fake, BnMode::kTrain);
    Td logit_real = disc.forward_logits(t, real, BnMode::kTrain);
    return loss_discriminator_logits(t, logit_real, logit_fake);
  };
  const double eps = 1e-6, tol = 1e-3;
  s.check("end_to_end/g_conv1_kernel", gen_loss, gen.convs[0].kernel, eps, tol, 120);
  s.check("end_to_end/g_proj1_weight", gen_loss, gen.noise_projs[0].weight, eps, tol, 80);
  s.check("end_to_end/g_conv6_bias", gen_loss, gen.convs[5].bias, eps, tol);
  s.check("end_to_end/g_bn3_gamma", gen_loss, gen.bns[2].gamma, eps, tol);
  s.check("end_to_end/d_conv1_kernel", disc_loss, disc.convs[0].kernel, eps, tol, 120);
  s.check("end_to_end/d_head_weight", disc_loss, disc.head.weight, eps, tol, 60);
  s.check("end_to_end/d_bn2_beta", disc_loss, disc.bns[0].beta, eps, tol);
}

}  // namespace

std::vector<CheckResult> run_gradcheck_suite() {
  Suite s;
  elementwise_checks(s);
  structural_checks(s);
  layer_checks(s);
  loss_checks(s);
  end_to_end_check(s);
  return std::move(s.results);
}

// ---- shape suite -------------------------------------------------------------

namespace {

void add_result(std::vector<CheckResult>& out, const std::string& name, bool pass, const std::string& detail = "") {
  out.push_back({name, pass, 0.0, pass ? "" : detail});
}

}  // namespace

std::vector<CheckResult> run_shape_suite() {
  std::vector<CheckResult> out;

  // stride-1 SAME preserves spatial extents for k in {1,3,5}, sizes 4..64
  {
    bool ok = true;
    std::string detail;
    Tape<float> tape;
    tape.set_recording(false);
    for (int k : {1, 3, 5}) {
      Conv2DLayer<float> conv(k, 1, 1, 1, 7);
      for (int n = 4; n <= 64; ++n) {
        Tensor<float> x = Tensor<float>::normal({1, n, n, 1}, 0, 1, static_cast<uint64_t>(n));
        Tensor<float> y = conv2d(tape, x, conv);
        if (y.dim(1) != n || y.dim(2) != n) {
          ok = false;
          detail = "k=" + std::to_string(k) + " n=" + std::to_string(n) + " -> " + to_string(y.shape());
        }
      }
    }
    add_result(out, "shape/conv_s1_preserves", ok, detail);
  }

  // stride-2 SAME halves with ceiling
  {
    bool ok = true;
    std::string detail;
    Tape<float> tape;
    tape.set_recording(false);
    for (int k : {3, 5}) {
      Conv2DLayer<float> conv(k, 1, 1, 2, 8);
      for (int n = 4; n <= 64; ++n) {
        Tensor<float> x = Tensor<float>::normal({1, n, n, 1}, 0, 1, static_cast<uint64_t>(n));
        Tensor<float> y = conv2d(tape, x, conv);
        if (y.dim(1) != (n + 1) / 2 || y.dim(2) != (n + 1) / 2) {
          ok = false;
          detail = "k=" + std::to_string(k) + " n=" + std::to_string(n) + " -> " + to_string(y.shape());
        }
      }
    }
    add_result(out, "shape/conv_s2_ceil_halves", ok, detail);
  }

  // generator keeps (s, s) at every layer for s in {16, 32, 64}
  for (int s : {16, 32, 64}) {
    GeneratorSpec gs;
    gs.widths = {3, 4, 5, 4, 3, 2};
    gs.image_size = s;
    gs.s_z = 10;
    Generator<float> gen(gs, 9);
    Tape<float> tape;
    tape.set_recording(false);
    std::vector<Shape> shapes;
    Tensor<float> y = Tensor<float>::normal({2, s, s, 1}, 0.5, 0.1, 10);
    Tensor<float> z = Tensor<float>::normal({2, 10}, 0, 1, 11);
    gen.forward(tape, y, z, BnMode::kTrain, &shapes);
    bool ok = shapes.size() == 6;
    for (const auto& sh : shapes) ok = ok && sh[1] == s && sh[2] == s;
    add_result(out, "shape/generator_preserves_s" + std::to_string(s), ok);
  }

  // discriminator ceil-halving trail and head size
  for (int s : {16, 32, 64}) {
    DiscriminatorSpec ds;
    ds.widths = {4, 8, 8, 8};
    ds.image_size = s;
    Discriminator<float> disc(ds, 12);
    Tape<float> tape;
    tape.set_recording(false);
    std::vector<Shape> shapes;
    Tensor<float> x = Tensor<float>::normal({2, s, s, 3}, 0, 0.5, 13);
    disc.forward_logits(tape, x, BnMode::kTrain, nullptr, &shapes);
    const DiscriminatorWalk walk = shape_walk_discriminator(ds);
    bool ok = shapes.size() == walk.spatial.size();
    for (size_t i = 0; ok && i < shapes.size(); ++i)
      ok = shapes[i][1] == walk.spatial[i] && shapes[i][2] == walk.spatial[i];
    ok = ok && disc.head.weight.dim(0) == walk.head_inputs;
    add_result(out, "shape/discriminator_trail_s" + std::to_string(s), ok);
  }

  // channel bookkeeping and parameter counts across the ablation grid
  {
    const std::vector<std::vector<int>> noise_sets = {{1}, {1, 2, 3}, {1, 2, 3, 4, 5, 6}};
    const std::vector<std::vector<int>> cond_sets = {{1, 2, 3, 4, 5, 6}, {1}};
    for (const auto& noise : noise_sets)
      for (const auto& cond : cond_sets)
        for (int c_site : {1, 3})
          for (bool tiled : {false, true}) {
            GeneratorSpec gs;
            gs.widths = {3, 4, 5, 4, 3, 2};
            gs.image_size = 16;
            gs.s_z = 10;
            gs.noise_layers = noise;
            gs.cond_layers = cond;
            gs.noise_channels_per_site = c_site;
            gs.tiled_noise = tiled;
            Generator<float> gen(gs, 14);
            const GeneratorWalk walk = shape_walk_generator(gs);
            bool ok = true;
            for (int l = 0; l < gs.num_layers; ++l)
              ok = ok && gen.convs[static_cast<size_t>(l)].in_channels() == walk.in_channels[static_cast<size_t>(l)] &&
                   gen.convs[static_cast<size_t>(l)].out_channels() == walk.out_channels[static_cast<size_t>(l)];
            int64_t built = 0;
            for (auto& p : gen.params()) built += p.tensor.size();
            ok = ok && built == walk.param_count;
            // forward shape under the same flags
            Tape<float> tape;
            tape.set_recording(false);
            Tensor<float> y = Tensor<float>::normal({2, 16, 16, 1}, 0.5, 0.1, 15);
            Tensor<float> z = Tensor<float>::normal({2, 10}, 0, 1, 16);
            Tensor<float> g_out = gen.forward(tape, y, z, BnMode::kTrain);
            ok = ok && g_out.shape() == Shape{2, 16, 16, 2};
            std::string tag = "noise=" + std::to_string(noise.size()) + " cond=" + std::to_string(cond.size()) +
                              " c=" + std::to_string(c_site) + (tiled ? " tiled" : " proj");
            add_result(out, "shape/channel_bookkeeping[" + tag + "]", ok, tag);
          }
  }

  // discriminator parameter count, unconditional and conditional
  for (bool conditional : {false, true}) {
    DiscriminatorSpec ds;
    ds.widths = {4, 8, 8, 8};
    ds.image_size = 32;
    ds.conditional = conditional;
    Discriminator<float> disc(ds, 17);
    int64_t built = 0;
    for (auto& p : disc.params()) built += p.tensor.size();
    add_result(out, std::string("shape/discriminator_params") + (conditional ? "_conditional" : ""),
               built == shape_walk_discriminator(ds).param_count);
  }

  return out;
}

}  // namespace cgan
