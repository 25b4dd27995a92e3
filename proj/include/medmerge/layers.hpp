#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "medmerge/model_spec.hpp"
#include "medmerge/rng.hpp"
#include "medmerge/tensor.hpp"

namespace mm {

template <class S>
struct Parameter {
  std::string name;
  Tensor<S> value;
  Tensor<S> grad;
  bool trainable = true;
  bool has_grad = false;  // set by backward, consumed by the optimizer

  Parameter() = default;
  Parameter(std::string n, Tensor<S> v, bool train = true)
      : name(std::move(n)), value(std::move(v)), grad(value.shape), trainable(train) {}

  void zero_grad() {
    grad.fill(S(0));
    has_grad = false;
  }
};

template <class S>
inline S sigmoid(S x) {
  return x >= S(0) ? S(1) / (S(1) + std::exp(-x)) : std::exp(x) / (S(1) + std::exp(x));
}

/// 2D convolution with same padding. Supports two kernel sources:
/// an owned trainable weight, or a virtual merged kernel recomputed each
/// forward from two frozen source kernels and per-output-channel logits
/// (w_j = sigmoid(alpha_j), kernel_j = w_j*b_j + (1-w_j)*c_j).
template <class S>
struct Conv2d {
  int64_t in_ch, out_ch, ksize, stride;
  Parameter<S> weight;  // [out, in, k, k]; in merged mode holds the materialized kernel
  std::optional<Parameter<S>> bias;  // [out]

  bool merged = false;
  Tensor<S> src_b, src_c;  // frozen source kernels, same shape as weight
  Tensor<S> src_b_bias, src_c_bias;
  Parameter<S> alphas;  // [out] merge logits

  // forward caches
  Shape in_shape;
  int64_t out_h = 0, out_w = 0, pad_top = 0, pad_left = 0;
  std::vector<Tensor<S>> cols_cache;  // one [in*k*k, out_h*out_w] per sample

  Conv2d(std::string name, int64_t in_c, int64_t out_c, int64_t k, int64_t s, bool use_bias)
      : in_ch(in_c),
        out_ch(out_c),
        ksize(k),
        stride(s),
        weight(name + ".weight", Tensor<S>({out_c, in_c, k, k})) {
    if (use_bias) bias.emplace(name + ".bias", Tensor<S>({out_c}));
  }

  /// Switch to virtual-merge mode: kernel is a convex combination of kb and
  /// kc, gradients flow to the logits, source kernels stay frozen.
  void set_merged(Tensor<S> kb, Tensor<S> kc, Tensor<S> bb = {}, Tensor<S> bc = {}) {
    require(kb.shape == weight.value.shape && kc.shape == weight.value.shape,
            "merged conv: source kernel shape mismatch at " + weight.name);
    merged = true;
    src_b = std::move(kb);
    src_c = std::move(kc);
    if (bias) {
      require(bb.shape == bias->value.shape && bc.shape == bias->value.shape,
              "merged conv: source bias shape mismatch at " + weight.name);
      src_b_bias = std::move(bb);
      src_c_bias = std::move(bc);
      bias->trainable = false;
    }
    weight.trainable = false;
    alphas = Parameter<S>(weight.name + ".alpha", Tensor<S>({out_ch}));
  }

  /// Materialize the effective kernel (and bias) from current logits.
  /// The source-c coefficient is computed as sigmoid(-alpha), which equals
  /// 1 - sigmoid(alpha) and makes swapping (b,c) with negated logits an
  /// exact bit-level symmetry.
  void materialize_merged() {
    int64_t per = in_ch * ksize * ksize;
    for (int64_t o = 0; o < out_ch; ++o) {
      S wb = sigmoid(alphas.value[o]);
      S wc = sigmoid(-alphas.value[o]);
      for (int64_t i = 0; i < per; ++i) {
        int64_t idx = o * per + i;
        weight.value[idx] = wb * src_b[idx] + wc * src_c[idx];
      }
      if (bias) bias->value[o] = wb * src_b_bias[o] + wc * src_c_bias[o];
    }
  }

  Tensor<S> forward(const Tensor<S>& x) {
    require(x.shape.size() == 4 && x.shape[1] == in_ch,
            "conv " + weight.name + ": input shape " + shape_str(x.shape) + " wants channels " +
                std::to_string(in_ch));
    if (merged) materialize_merged();
    in_shape = x.shape;
    const int64_t n = x.shape[0], h = x.shape[2], w = x.shape[3];
    out_h = (h + stride - 1) / stride;
    out_w = (w + stride - 1) / stride;
    const int64_t pad_h = std::max<int64_t>((out_h - 1) * stride + ksize - h, 0);
    const int64_t pad_w = std::max<int64_t>((out_w - 1) * stride + ksize - w, 0);
    pad_top = pad_h / 2;
    pad_left = pad_w / 2;

    const int64_t ck2 = in_ch * ksize * ksize;
    const int64_t ohw = out_h * out_w;
    Tensor<S> y({n, out_ch, out_h, out_w});
    cols_cache.assign(static_cast<size_t>(n), Tensor<S>({ck2, ohw}));

    for (int64_t s = 0; s < n; ++s) {
      Tensor<S>& cols = cols_cache[static_cast<size_t>(s)];
      im2col(x.ptr() + s * in_ch * h * w, h, w, cols);
      auto ym = y.mat(n * out_ch, ohw).block(s * out_ch, 0, out_ch, ohw);
      ym.noalias() = weight.value.mat(out_ch, ck2) * cols.mat(ck2, ohw);
      if (bias) {
        for (int64_t o = 0; o < out_ch; ++o)
          ym.row(o).array() += bias->value[o];
      }
    }
    return y;
  }

  Tensor<S> backward(const Tensor<S>& gy) {
    const int64_t n = in_shape[0], h = in_shape[2], w = in_shape[3];
    const int64_t ck2 = in_ch * ksize * ksize;
    const int64_t ohw = out_h * out_w;
    require(!cols_cache.empty(), "conv backward without forward");
    require(gy.shape == Shape({n, out_ch, out_h, out_w}), "conv backward: grad shape mismatch");

    Tensor<S> gx(in_shape);
    auto gW = weight.grad.mat(out_ch, ck2);
    Tensor<S> gcols({ck2, ohw});
    for (int64_t s = 0; s < n; ++s) {
      auto gym = gy.mat(n * out_ch, ohw).block(s * out_ch, 0, out_ch, ohw);
      gW.noalias() += gym * cols_cache[static_cast<size_t>(s)].mat(ck2, ohw).transpose();
      if (bias) {
        for (int64_t o = 0; o < out_ch; ++o) bias->grad[o] += gym.row(o).sum();
      }
      gcols.mat(ck2, ohw).noalias() = weight.value.mat(out_ch, ck2).transpose() * gym;
      col2im(gcols, gx.ptr() + s * in_ch * h * w, h, w);
    }
    weight.has_grad = true;
    if (bias) bias->has_grad = true;

    if (merged) {
      // dL/dalpha_j = sigma'(alpha_j) * <dL/dK_j, Kb_j - Kc_j>
      const int64_t per = ck2;
      for (int64_t o = 0; o < out_ch; ++o) {
        S dsig = sigmoid(alphas.value[o]) * sigmoid(-alphas.value[o]);
        S dot = S(0);
        for (int64_t i = 0; i < per; ++i) {
          int64_t idx = o * per + i;
          dot += weight.grad[idx] * (src_b[idx] - src_c[idx]);
        }
        if (bias) dot += bias->grad[o] * (src_b_bias[o] - src_c_bias[o]);
        alphas.grad[o] += dsig * dot;
      }
      alphas.has_grad = true;
    }
    cols_cache.clear();
    return gx;
  }

 private:
  void im2col(const S* x, int64_t h, int64_t w, Tensor<S>& cols) const {
    S* c = cols.ptr();
    const int64_t ohw = out_h * out_w;
    for (int64_t ch = 0; ch < in_ch; ++ch) {
      const S* xc = x + ch * h * w;
      for (int64_t ki = 0; ki < ksize; ++ki) {
        for (int64_t kj = 0; kj < ksize; ++kj) {
          S* row = c + ((ch * ksize + ki) * ksize + kj) * ohw;
          for (int64_t oh = 0; oh < out_h; ++oh) {
            int64_t ih = oh * stride - pad_top + ki;
            for (int64_t ow = 0; ow < out_w; ++ow) {
              int64_t iw = ow * stride - pad_left + kj;
              row[oh * out_w + ow] =
                  (ih >= 0 && ih < h && iw >= 0 && iw < w) ? xc[ih * w + iw] : S(0);
            }
          }
        }
      }
    }
  }

  void col2im(const Tensor<S>& cols, S* gx, int64_t h, int64_t w) const {
    const S* c = cols.ptr();
    const int64_t ohw = out_h * out_w;
    for (int64_t ch = 0; ch < in_ch; ++ch) {
      S* xc = gx + ch * h * w;
      for (int64_t ki = 0; ki < ksize; ++ki) {
        for (int64_t kj = 0; kj < ksize; ++kj) {
          const S* row = c + ((ch * ksize + ki) * ksize + kj) * ohw;
          for (int64_t oh = 0; oh < out_h; ++oh) {
            int64_t ih = oh * stride - pad_top + ki;
            if (ih < 0 || ih >= h) continue;
            for (int64_t ow = 0; ow < out_w; ++ow) {
              int64_t iw = ow * stride - pad_left + kj;
              if (iw >= 0 && iw < w) xc[ih * w + iw] += row[oh * out_w + ow];
            }
          }
        }
      }
    }
  }
};

/// Batch normalization over N,H,W per channel. `frozen` pins the layer to
/// its running statistics even in train mode and stops running-stat updates
/// (plain linear probing and the frozen-BN ablation).
template <class S>
struct BatchNorm2d {
  Parameter<S> gamma, beta;
  Tensor<S> running_mean, running_var;
  S momentum = S(0.1);
  S epsilon = S(1e-5);
  bool frozen = false;

  // caches
  Tensor<S> xhat;
  std::vector<S> inv_std;  // per channel
  bool used_batch_stats = false;

  BatchNorm2d(std::string name, int64_t channels)
      : gamma(name + ".gamma", Tensor<S>::full({channels}, S(1))),
        beta(name + ".beta", Tensor<S>({channels})),
        running_mean(Tensor<S>({channels})),
        running_var(Tensor<S>::full({channels}, S(1))) {}

  int64_t channels() const { return gamma.value.shape[0]; }

  Tensor<S> forward(const Tensor<S>& x, bool train) {
    const int64_t n = x.shape[0], c = x.shape[1], hw = x.shape[2] * x.shape[3];
    require(c == channels(), "bn " + gamma.name + ": channel mismatch");
    const int64_t m = n * hw;
    Tensor<S> y(x.shape);
    xhat = Tensor<S>(x.shape);
    inv_std.assign(static_cast<size_t>(c), S(0));
    used_batch_stats = train && !frozen;

    for (int64_t ch = 0; ch < c; ++ch) {
      S mu, var;
      if (used_batch_stats) {
        S sum = S(0), sq = S(0);
        for (int64_t s = 0; s < n; ++s) {
          const S* p = x.ptr() + (s * c + ch) * hw;
          for (int64_t i = 0; i < hw; ++i) sum += p[i];
        }
        mu = sum / S(m);
        for (int64_t s = 0; s < n; ++s) {
          const S* p = x.ptr() + (s * c + ch) * hw;
          for (int64_t i = 0; i < hw; ++i) sq += (p[i] - mu) * (p[i] - mu);
        }
        var = sq / S(m);  // biased, used for both normalization and running stats
        running_mean[ch] = (S(1) - momentum) * running_mean[ch] + momentum * mu;
        running_var[ch] = (S(1) - momentum) * running_var[ch] + momentum * var;
      } else {
        mu = running_mean[ch];
        var = running_var[ch];
      }
      S istd = S(1) / std::sqrt(var + epsilon);
      inv_std[static_cast<size_t>(ch)] = istd;
      S g = gamma.value[ch], b = beta.value[ch];
      for (int64_t s = 0; s < n; ++s) {
        const S* p = x.ptr() + (s * c + ch) * hw;
        S* xh = xhat.ptr() + (s * c + ch) * hw;
        S* yo = y.ptr() + (s * c + ch) * hw;
        for (int64_t i = 0; i < hw; ++i) {
          xh[i] = (p[i] - mu) * istd;
          yo[i] = g * xh[i] + b;
        }
      }
    }
    return y;
  }

  Tensor<S> backward(const Tensor<S>& gy) {
    require(gy.shape == xhat.shape, "bn backward: grad shape mismatch");
    const int64_t n = gy.shape[0], c = gy.shape[1], hw = gy.shape[2] * gy.shape[3];
    const int64_t m = n * hw;
    Tensor<S> gx(gy.shape);
    for (int64_t ch = 0; ch < c; ++ch) {
      S sum_g = S(0), sum_gx = S(0);
      for (int64_t s = 0; s < n; ++s) {
        const S* g = gy.ptr() + (s * c + ch) * hw;
        const S* xh = xhat.ptr() + (s * c + ch) * hw;
        for (int64_t i = 0; i < hw; ++i) {
          sum_g += g[i];
          sum_gx += g[i] * xh[i];
        }
      }
      gamma.grad[ch] += sum_gx;
      beta.grad[ch] += sum_g;
      S gm = gamma.value[ch], istd = inv_std[static_cast<size_t>(ch)];
      if (used_batch_stats) {
        S mean_g = sum_g / S(m), mean_gx = sum_gx / S(m);
        for (int64_t s = 0; s < n; ++s) {
          const S* g = gy.ptr() + (s * c + ch) * hw;
          const S* xh = xhat.ptr() + (s * c + ch) * hw;
          S* out = gx.ptr() + (s * c + ch) * hw;
          for (int64_t i = 0; i < hw; ++i)
            out[i] = gm * istd * (g[i] - mean_g - xh[i] * mean_gx);
        }
      } else {
        for (int64_t s = 0; s < n; ++s) {
          const S* g = gy.ptr() + (s * c + ch) * hw;
          S* out = gx.ptr() + (s * c + ch) * hw;
          for (int64_t i = 0; i < hw; ++i) out[i] = gm * istd * g[i];
        }
      }
    }
    gamma.has_grad = true;
    beta.has_grad = true;
    return gx;
  }
};

template <class S>
struct Linear {
  Parameter<S> weight;  // [out, in]
  Parameter<S> bias;    // [out]
  Tensor<S> in_cache;   // [n, in]

  Linear(std::string name, int64_t in, int64_t out)
      : weight(name + ".weight", Tensor<S>({out, in})), bias(name + ".bias", Tensor<S>({out})) {}

  Tensor<S> forward(const Tensor<S>& x) {
    const int64_t n = x.shape[0];
    const int64_t in = weight.value.shape[1], out = weight.value.shape[0];
    require(x.numel() == n * in, "linear " + weight.name + ": input feature mismatch");
    in_cache = x;
    Tensor<S> y({n, out});
    y.mat(n, out).noalias() = x.mat(n, in) * weight.value.mat(out, in).transpose();
    for (int64_t s = 0; s < n; ++s)
      y.mat(n, out).row(s) += bias.value.mat(1, out).row(0);
    return y;
  }

  Tensor<S> backward(const Tensor<S>& gy) {
    const int64_t n = in_cache.shape[0];
    const int64_t in = weight.value.shape[1], out = weight.value.shape[0];
    weight.grad.mat(out, in).noalias() += gy.mat(n, out).transpose() * in_cache.mat(n, in);
    bias.grad.mat(1, out).noalias() += gy.mat(n, out).colwise().sum();
    Tensor<S> gx(in_cache.shape);
    gx.mat(n, in).noalias() = gy.mat(n, out) * weight.value.mat(out, in);
    weight.has_grad = true;
    bias.has_grad = true;
    return gx;
  }
};

template <class S>
struct MaxPool2d {
  int64_t window;
  Shape in_shape;
  std::vector<int64_t> argmax;  // flat input index per output element

  explicit MaxPool2d(int64_t win) : window(win) {}

  Tensor<S> forward(const Tensor<S>& x) {
    const int64_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
    const int64_t oh = h / window, ow = w / window;
    require(oh > 0 && ow > 0, "maxpool: window larger than input");
    in_shape = x.shape;
    Tensor<S> y({n, c, oh, ow});
    argmax.assign(static_cast<size_t>(y.numel()), 0);
    int64_t oi = 0;
    for (int64_t s = 0; s < n; ++s) {
      for (int64_t ch = 0; ch < c; ++ch) {
        const S* xc = x.ptr() + (s * c + ch) * h * w;
        const int64_t base = (s * c + ch) * h * w;
        for (int64_t i = 0; i < oh; ++i) {
          for (int64_t j = 0; j < ow; ++j, ++oi) {
            S best = xc[(i * window) * w + j * window];
            int64_t bidx = base + (i * window) * w + j * window;
            for (int64_t di = 0; di < window; ++di) {
              for (int64_t dj = 0; dj < window; ++dj) {
                int64_t idx = (i * window + di) * w + (j * window + dj);
                if (xc[idx] > best) {
                  best = xc[idx];
                  bidx = base + idx;
                }
              }
            }
            y[oi] = best;
            argmax[static_cast<size_t>(oi)] = bidx;
          }
        }
      }
    }
    return y;
  }

  Tensor<S> backward(const Tensor<S>& gy) {
    Tensor<S> gx(in_shape);
    for (int64_t i = 0; i < gy.numel(); ++i) gx[argmax[static_cast<size_t>(i)]] += gy[i];
    return gx;
  }
};

template <class S>
inline void relu_forward(Tensor<S>& x, std::vector<uint8_t>& mask) {
  mask.assign(static_cast<size_t>(x.numel()), 0);
  for (int64_t i = 0; i < x.numel(); ++i) {
    if (x[i] > S(0)) {
      mask[static_cast<size_t>(i)] = 1;
    } else {
      x[i] = S(0);  // subgradient 0 at the kink
    }
  }
}

template <class S>
inline void relu_backward(Tensor<S>& g, const std::vector<uint8_t>& mask) {
  for (int64_t i = 0; i < g.numel(); ++i)
    if (!mask[static_cast<size_t>(i)]) g[i] = S(0);
}

}  // namespace mm
