#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cgan/tensor.hpp"

namespace cgan {

template <class T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
};

// 2-D convolution, SAME zero padding. kernel is [k,k,Cin,Cout], bias [Cout].
template <class T>
struct Conv2DLayer {
  Tensor<T> kernel;
  Tensor<T> bias;
  int stride = 1;

  Conv2DLayer() = default;
  Conv2DLayer(int k, int c_in, int c_out, int stride_, uint64_t seed) : stride(stride_) {
    if (k < 1 || c_in < 1 || c_out < 1) fail("conv2d: bad layer dims");
    if (stride_ != 1 && stride_ != 2) fail("conv2d: stride must be 1 or 2");
    kernel = Tensor<T>::normal({k, k, c_in, c_out}, T(0), T(0.02), seed).set_requires_grad(true);
    bias = Tensor<T>::zeros({c_out}).set_requires_grad(true);
  }

  int ksize() const { return kernel.dim(0); }
  int in_channels() const { return kernel.dim(2); }
  int out_channels() const { return kernel.dim(3); }
};

enum class BnMode {
  kTrain,        // batch statistics, running stats updated
  kEvalBatch,    // batch statistics, running stats untouched
  kEvalRunning,  // running statistics
};

template <class T>
struct BatchNormLayer {
  Tensor<T> gamma, beta;              // learnable
  Tensor<T> running_mean, running_var;
  T epsilon = T(1e-5);
  T momentum = T(0.9);

  BatchNormLayer() = default;
  explicit BatchNormLayer(int channels) {
    gamma = Tensor<T>::constant({channels}, T(1)).set_requires_grad(true);
    beta = Tensor<T>::zeros({channels}).set_requires_grad(true);
    running_mean = Tensor<T>::zeros({channels});
    running_var = Tensor<T>::constant({channels}, T(1));
  }

  int channels() const { return gamma.dim(0); }
};

template <class T>
struct DenseLayer {
  Tensor<T> weight;  // [in, out]
  Tensor<T> bias;    // [out]

  DenseLayer() = default;
  DenseLayer(int in, int out, uint64_t seed) {
    weight = Tensor<T>::normal({in, out}, T(0), T(0.02), seed).set_requires_grad(true);
    bias = Tensor<T>::zeros({out}).set_requires_grad(true);
  }
};

namespace detail {

inline int ceil_div(int a, int b) { return (a + b - 1) / b; }

struct ConvDims {
  int n, h, w, cin, k, cout, stride;
  int ho, wo;
  int pad_top, pad_left;
};

template <class T>
ConvDims conv_dims(const Tensor<T>& input, const Conv2DLayer<T>& layer) {
  if (input.rank() != 4) fail("conv2d: input must be [N,H,W,C], got " + to_string(input.shape()));
  ConvDims d;
  d.n = input.dim(0);
  d.h = input.dim(1);
  d.w = input.dim(2);
  d.cin = input.dim(3);
  d.k = layer.ksize();
  d.cout = layer.out_channels();
  d.stride = layer.stride;
  if (d.cin != layer.in_channels())
    fail("conv2d: input has " + std::to_string(d.cin) + " channels, kernel expects " +
         std::to_string(layer.in_channels()));
  d.ho = ceil_div(d.h, d.stride);
  d.wo = ceil_div(d.w, d.stride);
  const int pad_h = std::max(0, (d.ho - 1) * d.stride + d.k - d.h);
  const int pad_w = std::max(0, (d.wo - 1) * d.stride + d.k - d.w);
  if (d.k > d.h + pad_h || d.k > d.w + pad_w) fail("conv2d: kernel larger than padded input");
  // odd padding goes bottom/right
  d.pad_top = pad_h / 2;
  d.pad_left = pad_w / 2;
  return d;
}

// Lowers one image to a [ho*wo, k*k*cin] patch matrix. Row layout matches the
// kernel flattened as [k,k,cin] -> cout.
template <class T>
void im2col(const T* img, const ConvDims& d, T* col) {
  const int kk = d.k * d.k * d.cin;
  for (int oh = 0; oh < d.ho; ++oh) {
    for (int ow = 0; ow < d.wo; ++ow) {
      T* row = col + (static_cast<int64_t>(oh) * d.wo + ow) * kk;
      for (int kh = 0; kh < d.k; ++kh) {
        const int ih = oh * d.stride + kh - d.pad_top;
        for (int kw = 0; kw < d.k; ++kw) {
          const int iw = ow * d.stride + kw - d.pad_left;
          T* cell = row + (kh * d.k + kw) * d.cin;
          if (ih < 0 || ih >= d.h || iw < 0 || iw >= d.w) {
            std::fill(cell, cell + d.cin, T(0));
          } else {
            const T* src = img + (static_cast<int64_t>(ih) * d.w + iw) * d.cin;
            std::copy(src, src + d.cin, cell);
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-adds a patch-matrix gradient back to image space.
template <class T>
void col2im_add(const T* col, const ConvDims& d, T* img) {
  const int kk = d.k * d.k * d.cin;
  for (int oh = 0; oh < d.ho; ++oh) {
    for (int ow = 0; ow < d.wo; ++ow) {
      const T* row = col + (static_cast<int64_t>(oh) * d.wo + ow) * kk;
      for (int kh = 0; kh < d.k; ++kh) {
        const int ih = oh * d.stride + kh - d.pad_top;
        if (ih < 0 || ih >= d.h) continue;
        for (int kw = 0; kw < d.k; ++kw) {
          const int iw = ow * d.stride + kw - d.pad_left;
          if (iw < 0 || iw >= d.w) continue;
          const T* cell = row + (kh * d.k + kw) * d.cin;
          T* dst = img + (static_cast<int64_t>(ih) * d.w + iw) * d.cin;
          for (int c = 0; c < d.cin; ++c) dst[c] += cell[c];
        }
      }
    }
  }
}

}  // namespace detail

template <class T>
Tensor<T> conv2d(Tape<T>& tape, const Tensor<T>& input, const Conv2DLayer<T>& layer) {
  const detail::ConvDims d = detail::conv_dims(input, layer);
  Tensor<T> out = Tensor<T>::zeros({d.n, d.ho, d.wo, d.cout});
  const int kk = d.k * d.k * d.cin;
  const int64_t opix = static_cast<int64_t>(d.ho) * d.wo;
  const int64_t ipix = static_cast<int64_t>(d.h) * d.w;
  std::vector<T> col(static_cast<size_t>(opix * kk));
  for (int n = 0; n < d.n; ++n) {
    detail::im2col(input.data() + n * ipix * d.cin, d, col.data());
    T* o = out.data() + n * opix * d.cout;
    for (int64_t p = 0; p < opix; ++p)
      std::copy(layer.bias.data(), layer.bias.data() + d.cout, o + p * d.cout);
    detail::gemm_nn(col.data(), layer.kernel.data(), o, opix, kk, d.cout);
  }

  const bool need = detail::tracked(input) || detail::tracked(layer.kernel) || detail::tracked(layer.bias);
  if (tape.recording() && need) {
    out.node()->produced = true;
    auto in_n = input.node();
    auto k_n = layer.kernel.node();
    auto b_n = layer.bias.node();
    auto o_n = out.node();
    tape.record([in_n, k_n, b_n, o_n, d, kk, opix, ipix]() {
      if (!detail::grad_flows(o_n)) return;
      const T* g = o_n->grad.data();
      const bool want_in = in_n->requires_grad || in_n->produced;
      const bool want_k = k_n->requires_grad || k_n->produced;
      const bool want_b = b_n->requires_grad || b_n->produced;
      if (want_b) {
        if (b_n->grad.empty()) b_n->grad.assign(b_n->data.size(), T(0));
        for (int64_t p = 0; p < static_cast<int64_t>(d.n) * opix; ++p)
          for (int c = 0; c < d.cout; ++c) b_n->grad[static_cast<size_t>(c)] += g[p * d.cout + c];
      }
      if (want_k && k_n->grad.empty()) k_n->grad.assign(k_n->data.size(), T(0));
      if (want_in && in_n->grad.empty()) in_n->grad.assign(in_n->data.size(), T(0));
      std::vector<T> col(static_cast<size_t>(opix * kk));
      std::vector<T> kt;
      if (want_in) kt = detail::transpose(k_n->data.data(), kk, d.cout);
      std::vector<T> dcol;
      if (want_in) dcol.resize(static_cast<size_t>(opix * kk));
      for (int n = 0; n < d.n; ++n) {
        const T* gi = g + n * opix * d.cout;
        if (want_k) {
          detail::im2col(in_n->data.data() + n * ipix * d.cin, d, col.data());
          detail::gemm_tn(col.data(), gi, k_n->grad.data(), opix, kk, d.cout);
        }
        if (want_in) {
          std::fill(dcol.begin(), dcol.end(), T(0));
          detail::gemm_nn(gi, kt.data(), dcol.data(), opix, d.cout, kk);
          detail::col2im_add(dcol.data(), d, in_n->grad.data() + n * ipix * d.cin);
        }
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> batchnorm(Tape<T>& tape, const Tensor<T>& input, BatchNormLayer<T>& layer, BnMode mode) {
  if (input.rank() != 4) fail("batchnorm: input must be [N,H,W,C]");
  const int C = input.dim(3);
  if (C != layer.channels())
    fail("batchnorm: channel mismatch, input " + std::to_string(C) + " vs layer " + std::to_string(layer.channels()));
  const int64_t count = static_cast<int64_t>(input.dim(0)) * input.dim(1) * input.dim(2);
  const bool batch_stats = (mode != BnMode::kEvalRunning);
  if (batch_stats && count < 2) fail("batchnorm: batch statistics need N*H*W >= 2, got " + std::to_string(count));

  std::vector<T> mean(static_cast<size_t>(C)), invstd(static_cast<size_t>(C));
  if (batch_stats) {
    std::vector<double> sum(static_cast<size_t>(C), 0.0), sq(static_cast<size_t>(C), 0.0);
    const T* x = input.data();
    for (int64_t p = 0; p < count; ++p)
      for (int c = 0; c < C; ++c) {
        const double v = static_cast<double>(x[p * C + c]);
        sum[static_cast<size_t>(c)] += v;
        sq[static_cast<size_t>(c)] += v * v;
      }
    for (int c = 0; c < C; ++c) {
      const double m = sum[static_cast<size_t>(c)] / static_cast<double>(count);
      double var = sq[static_cast<size_t>(c)] / static_cast<double>(count) - m * m;
      if (var < 0) var = 0;  // rounding guard
      mean[static_cast<size_t>(c)] = static_cast<T>(m);
      invstd[static_cast<size_t>(c)] = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(layer.epsilon)));
      if (mode == BnMode::kTrain) {
        layer.running_mean.data()[c] =
            layer.momentum * layer.running_mean.data()[c] + (T(1) - layer.momentum) * static_cast<T>(m);
        layer.running_var.data()[c] =
            layer.momentum * layer.running_var.data()[c] + (T(1) - layer.momentum) * static_cast<T>(var);
      }
    }
  } else {
    for (int c = 0; c < C; ++c) {
      mean[static_cast<size_t>(c)] = layer.running_mean.data()[c];
      invstd[static_cast<size_t>(c)] =
          static_cast<T>(1.0 / std::sqrt(static_cast<double>(layer.running_var.data()[c]) +
                                         static_cast<double>(layer.epsilon)));
    }
  }

  Tensor<T> out = Tensor<T>::zeros(input.shape());
  // xhat cached for the backward pass and for d(gamma)
  auto xhat = std::make_shared<std::vector<T>>(static_cast<size_t>(count * C));
  {
    const T* x = input.data();
    T* y = out.data();
    T* xh = xhat->data();
    const T* gm = layer.gamma.data();
    const T* bt = layer.beta.data();
    for (int64_t p = 0; p < count; ++p)
      for (int c = 0; c < C; ++c) {
        const T h = (x[p * C + c] - mean[static_cast<size_t>(c)]) * invstd[static_cast<size_t>(c)];
        xh[p * C + c] = h;
        y[p * C + c] = gm[c] * h + bt[c];
      }
  }

  const bool need = detail::tracked(input) || detail::tracked(layer.gamma) || detail::tracked(layer.beta);
  if (tape.recording() && need) {
    out.node()->produced = true;
    auto in_n = input.node();
    auto g_n = layer.gamma.node();
    auto b_n = layer.beta.node();
    auto o_n = out.node();
    tape.record([in_n, g_n, b_n, o_n, xhat, invstd, count, C, batch_stats]() {
      if (!detail::grad_flows(o_n)) return;
      const T* g = o_n->grad.data();
      const T* xh = xhat->data();
      std::vector<double> sum_g(static_cast<size_t>(C), 0.0), sum_gx(static_cast<size_t>(C), 0.0);
      for (int64_t p = 0; p < count; ++p)
        for (int c = 0; c < C; ++c) {
          sum_g[static_cast<size_t>(c)] += static_cast<double>(g[p * C + c]);
          sum_gx[static_cast<size_t>(c)] += static_cast<double>(g[p * C + c]) * static_cast<double>(xh[p * C + c]);
        }
      if (b_n->requires_grad || b_n->produced) {
        if (b_n->grad.empty()) b_n->grad.assign(b_n->data.size(), T(0));
        for (int c = 0; c < C; ++c) b_n->grad[static_cast<size_t>(c)] += static_cast<T>(sum_g[static_cast<size_t>(c)]);
      }
      if (g_n->requires_grad || g_n->produced) {
        if (g_n->grad.empty()) g_n->grad.assign(g_n->data.size(), T(0));
        for (int c = 0; c < C; ++c) g_n->grad[static_cast<size_t>(c)] += static_cast<T>(sum_gx[static_cast<size_t>(c)]);
      }
      if (in_n->requires_grad || in_n->produced) {
        if (in_n->grad.empty()) in_n->grad.assign(in_n->data.size(), T(0));
        const double nc = static_cast<double>(count);
        for (int64_t p = 0; p < count; ++p)
          for (int c = 0; c < C; ++c) {
            const double gi = static_cast<double>(g[p * C + c]);
            const double a = static_cast<double>(g_n->data[static_cast<size_t>(c)]) *
                             static_cast<double>(invstd[static_cast<size_t>(c)]);
            double dx;
            if (batch_stats) {
              // grads flow through the batch mean and variance
              dx = a * (gi - sum_g[static_cast<size_t>(c)] / nc -
                        static_cast<double>(xh[p * C + c]) * sum_gx[static_cast<size_t>(c)] / nc);
            } else {
              dx = a * gi;
            }
            in_n->grad[static_cast<size_t>(p * C + c)] += static_cast<T>(dx);
          }
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> dense(Tape<T>& tape, const Tensor<T>& input, const DenseLayer<T>& layer) {
  if (input.rank() != 2) fail("dense: input must be [N,in], got " + to_string(input.shape()));
  if (input.dim(1) != layer.weight.dim(0))
    fail("dense: input width " + std::to_string(input.dim(1)) + " vs weight " + to_string(layer.weight.shape()));
  return add(tape, matmul(tape, input, layer.weight), layer.bias);
}

}  // namespace cgan
