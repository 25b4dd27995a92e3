#pragma once

#include <set>
#include <string>
#include <vector>

#include "medmerge/graph.hpp"
#include "medmerge/io.hpp"

namespace mm {

constexpr char kActivationsMagic[4] = {'M', 'M', 'A', 'C'};

/// Eval-mode forward that records intermediate activations by name:
/// conv{i}, bn{i}, relu{i}, pool{i} per block, plus "logits".
template <class S>
ParamTree capture_activations(Graph<S>& g, const Tensor<S>& input) {
  ParamTree out;
  Tensor<S> x = input;
  auto& blocks = g.blocks();
  for (size_t i = 0; i < blocks.size(); ++i) {
    auto& blk = blocks[i];
    std::string si = std::to_string(i);
    if (blk.residual) blk.residual_in = x;
    x = blk.conv.forward(x);
    out.emplace("conv" + si, AnyTensor(x));
    if (blk.bn) {
      x = blk.bn->forward(x, false);
      out.emplace("bn" + si, AnyTensor(x));
    }
    if (blk.residual)
      for (int64_t j = 0; j < x.numel(); ++j) x[j] += blk.residual_in[j];
    if (blk.activation == Activation::Relu) {
      relu_forward(x, blk.relu_mask);
      out.emplace("relu" + si, AnyTensor(x));
    }
    if (blk.pool) {
      x = blk.pool->forward(x);
      out.emplace("pool" + si, AnyTensor(x));
    }
  }
  const int64_t n = x.shape[0];
  const int64_t feat = x.numel() / n;
  Tensor<S> flat({n, feat}, std::move(x.data));
  Tensor<S> logits = g.head().forward(flat);
  out.emplace("logits", AnyTensor(std::move(logits)));
  return out;
}

template <class S>
std::vector<std::string> activation_layer_names(Graph<S>& g) {
  std::vector<std::string> names;
  auto& blocks = g.blocks();
  for (size_t i = 0; i < blocks.size(); ++i) {
    std::string si = std::to_string(i);
    names.push_back("conv" + si);
    if (blocks[i].bn) names.push_back("bn" + si);
    if (blocks[i].activation == Activation::Relu) names.push_back("relu" + si);
    if (blocks[i].pool) names.push_back("pool" + si);
  }
  names.push_back("logits");
  return names;
}

/// Dump selected layer activations to an `.mmac` tensor-blob file.
/// Empty layer list means all layers.
template <class S>
void dump_activations(Graph<S>& g, const Tensor<S>& input,
                      const std::vector<std::string>& layer_names, const std::string& path) {
  auto valid = activation_layer_names(g);
  std::set<std::string> valid_set(valid.begin(), valid.end());
  for (const auto& name : layer_names) {
    if (!valid_set.count(name)) {
      std::string msg = "unknown layer '" + name + "'; valid layers:";
      for (const auto& v : valid) msg += " " + v;
      fail(msg);
    }
  }
  ParamTree all = capture_activations(g, input);
  TensorBlob blob;
  blob.meta = "format_version 1\nkind activations\n";
  if (layer_names.empty()) {
    blob.tensors = std::move(all);
  } else {
    for (const auto& name : layer_names) blob.tensors.emplace(name, all.at(name));
  }
  write_blob_file(path, kActivationsMagic, blob);
}

inline ParamTree load_activations(const std::string& path) {
  return read_blob_file(path, kActivationsMagic, "activations").tensors;
}

}  // namespace mm
