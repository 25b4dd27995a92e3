#pragma once

#include <cmath>
#include <functional>

#include "medmerge/graph.hpp"
#include "medmerge/rng.hpp"

namespace mmtest {

using namespace mm;

template <class S>
void fill_random(Tensor<S>& t, Rng& rng, double lo = -1.0, double hi = 1.0) {
  for (auto& v : t.data) v = static_cast<S>(rng.uniform(lo, hi));
}

/// Independent convolution oracle: direct sliding window with same padding,
/// no im2col, no Eigen. Input [N,C,H,W], kernel [O,C,K,K].
template <class S>
Tensor<S> conv_oracle(const Tensor<S>& x, const Tensor<S>& kernel, const Tensor<S>* bias,
                      int64_t stride) {
  const int64_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
  const int64_t o = kernel.shape[0], k = kernel.shape[2];
  const int64_t oh = (h + stride - 1) / stride, ow = (w + stride - 1) / stride;
  const int64_t pad_h = std::max<int64_t>((oh - 1) * stride + k - h, 0);
  const int64_t pad_w = std::max<int64_t>((ow - 1) * stride + k - w, 0);
  const int64_t pt = pad_h / 2, pl = pad_w / 2;
  Tensor<S> y({n, o, oh, ow});
  for (int64_t s = 0; s < n; ++s)
    for (int64_t oc = 0; oc < o; ++oc)
      for (int64_t i = 0; i < oh; ++i)
        for (int64_t j = 0; j < ow; ++j) {
          S acc = bias ? (*bias)[oc] : S(0);
          for (int64_t ic = 0; ic < c; ++ic)
            for (int64_t ki = 0; ki < k; ++ki)
              for (int64_t kj = 0; kj < k; ++kj) {
                int64_t ih = i * stride - pt + ki, iw = j * stride - pl + kj;
                if (ih >= 0 && ih < h && iw >= 0 && iw < w)
                  acc += x[((s * c + ic) * h + ih) * w + iw] *
                         kernel[((oc * c + ic) * k + ki) * k + kj];
              }
          y[((s * o + oc) * oh + i) * ow + j] = acc;
        }
  return y;
}

/// Relative-error check suited to finite differences: the denominator is
/// the larger magnitude, floored so near-zero pairs compare absolutely.
inline bool rel_close(double a, double b, double rel_tol, double floor_ = 1e-6) {
  double denom = std::max({std::fabs(a), std::fabs(b), floor_});
  return std::fabs(a - b) <= rel_tol * denom;
}

/// Central finite difference of a scalar-valued function of one parameter
/// element.
template <class S>
double central_diff(Parameter<S>& p, int64_t idx, const std::function<double()>& f,
                    double h = 1e-5) {
  S saved = p.value[idx];
  p.value[idx] = static_cast<S>(static_cast<double>(saved) + h);
  double up = f();
  p.value[idx] = static_cast<S>(static_cast<double>(saved) - h);
  double down = f();
  p.value[idx] = saved;
  return (up - down) / (2.0 * h);
}

}  // namespace mmtest
