#pragma once

#include <cmath>

#include "medmerge/tensor.hpp"

namespace mm {

/// Mean cross entropy over the batch, max-subtracted for stability.
/// Optionally emits dL/dlogits.
template <class S>
S cross_entropy(const Tensor<S>& logits, const IntTensor& labels, Tensor<S>* dlogits = nullptr) {
  require(logits.shape.size() == 2, "cross_entropy: logits must be [batch x classes]");
  const int64_t n = logits.shape[0], c = logits.shape[1];
  require(static_cast<int64_t>(labels.size()) == n, "cross_entropy: batch size mismatch");
  require(n >= 1, "cross_entropy: empty batch");
  if (dlogits) *dlogits = Tensor<S>(logits.shape);

  S total = S(0);
  for (int64_t s = 0; s < n; ++s) {
    int64_t y = labels[static_cast<size_t>(s)];
    require(y >= 0 && y < c, "cross_entropy: label " + std::to_string(y) + " out of range [0, " +
                                 std::to_string(c) + ")");
    const S* z = logits.ptr() + s * c;
    S zmax = z[0];
    for (int64_t j = 1; j < c; ++j) zmax = std::max(zmax, z[j]);
    S denom = S(0);
    for (int64_t j = 0; j < c; ++j) denom += std::exp(z[j] - zmax);
    total += std::log(denom) - (z[y] - zmax);
    if (dlogits) {
      S* g = dlogits->ptr() + s * c;
      for (int64_t j = 0; j < c; ++j) g[j] = std::exp(z[j] - zmax) / denom / S(n);
      g[y] -= S(1) / S(n);
    }
  }
  S loss = total / S(n);
  require(std::isfinite(static_cast<double>(loss)), "cross_entropy: non-finite loss");
  return loss;
}

}  // namespace mm
