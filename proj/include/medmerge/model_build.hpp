#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "medmerge/graph.hpp"
#include "medmerge/model_spec.hpp"
#include "medmerge/rng.hpp"

namespace mm {

/// Seeded parameter tree: Kaiming-uniform conv kernels, identity BN,
/// uniform head. Deterministic for a given (spec, seed).
template <class S>
ParamTree init_param_tree(const ModelSpec& spec, uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  ParamTree tree;
  int64_t in_ch = spec.in_channels;
  for (size_t i = 0; i < spec.blocks.size(); ++i) {
    const BlockSpec& b = spec.blocks[i];
    std::string ci = "conv" + std::to_string(i);
    Tensor<S> w({b.out_channels, in_ch, b.kernel_size, b.kernel_size});
    double fan_in = static_cast<double>(in_ch * b.kernel_size * b.kernel_size);
    double bound = std::sqrt(6.0 / fan_in);
    for (auto& v : w.data) v = static_cast<S>(rng.uniform(-bound, bound));
    tree.emplace(ci + ".weight", AnyTensor(std::move(w)));
    if (b.bias) {
      Tensor<S> bias({b.out_channels});
      double bb = 1.0 / std::sqrt(fan_in);
      for (auto& v : bias.data) v = static_cast<S>(rng.uniform(-bb, bb));
      tree.emplace(ci + ".bias", AnyTensor(std::move(bias)));
    }
    if (b.use_bn) {
      std::string bi = "bn" + std::to_string(i);
      tree.emplace(bi + ".gamma", AnyTensor(Tensor<S>::full({b.out_channels}, S(1))));
      tree.emplace(bi + ".beta", AnyTensor(Tensor<S>({b.out_channels})));
      tree.emplace(bi + ".running_mean", AnyTensor(Tensor<S>({b.out_channels})));
      tree.emplace(bi + ".running_var", AnyTensor(Tensor<S>::full({b.out_channels}, S(1))));
    }
    in_ch = b.out_channels;
  }
  int64_t feat = spec.head_in_features();
  Tensor<S> hw({spec.classes, feat});
  double hb = 1.0 / std::sqrt(static_cast<double>(feat));
  for (auto& v : hw.data) v = static_cast<S>(rng.uniform(-hb, hb));
  tree.emplace("head.weight", AnyTensor(std::move(hw)));
  Tensor<S> hbias({spec.classes});
  for (auto& v : hbias.data) v = static_cast<S>(rng.uniform(-hb, hb));
  tree.emplace("head.bias", AnyTensor(std::move(hbias)));
  return tree;
}

/// Re-initialize only the head for a (possibly different) target class
/// count; backbone entries are copied through unchanged.
template <class S>
ParamTree with_fresh_head(const ParamTree& src, const ModelSpec& target_spec, uint64_t seed) {
  ParamTree out;
  for (const auto& [name, t] : src)
    if (!is_head_param(name)) out.emplace(name, t);
  ParamTree fresh = init_param_tree<S>(target_spec, seed);
  out.emplace("head.weight", fresh.at("head.weight"));
  out.emplace("head.bias", fresh.at("head.bias"));
  return out;
}

/// Build a graph bound to a freshly initialized tree.
template <class S>
std::pair<Graph<S>, ParamTree> build_model(const ModelSpec& spec, uint64_t seed) {
  ParamTree tree = init_param_tree<S>(spec, seed);
  Graph<S> graph(spec);
  graph.load(tree);
  return {std::move(graph), std::move(tree)};
}

struct CongruenceReport {
  bool ok = true;
  std::vector<std::string> mismatches;
  bool heads_differ = false;  // allowed: heads are re-initialized per target task

  std::string summary() const {
    if (ok && mismatches.empty())
      return heads_differ ? "congruent (heads differ, which is allowed)" : "congruent";
    std::string s = "incongruent:";
    for (const auto& m : mismatches) s += "\n  " + m;
    return s;
  }
};

/// Two trees are merge-compatible when all backbone entries agree in name,
/// shape, and dtype. Heads may differ.
inline CongruenceReport check_congruent(const ParamTree& a, const ParamTree& b) {
  CongruenceReport rep;
  for (const auto& [name, ta] : a) {
    if (is_head_param(name)) continue;
    auto it = b.find(name);
    if (it == b.end()) {
      rep.ok = false;
      rep.mismatches.push_back(name + ": missing from second tree");
      continue;
    }
    if (ta.shape() != it->second.shape()) {
      rep.ok = false;
      rep.mismatches.push_back(name + ": shape " + shape_str(ta.shape()) + " vs " +
                               shape_str(it->second.shape()));
    } else if (ta.dtype() != it->second.dtype()) {
      rep.ok = false;
      rep.mismatches.push_back(name + ": dtype " + dtype_name(ta.dtype()) + " vs " +
                               dtype_name(it->second.dtype()));
    }
  }
  for (const auto& [name, tb] : b) {
    if (is_head_param(name)) continue;
    if (a.find(name) == a.end()) {
      rep.ok = false;
      rep.mismatches.push_back(name + ": missing from first tree");
    }
  }
  auto ha = a.find("head.weight");
  auto hb = b.find("head.weight");
  if (ha != a.end() && hb != b.end() &&
      (ha->second.shape() != hb->second.shape() || !ha->second.bit_equal(hb->second)))
    rep.heads_differ = true;
  return rep;
}

}  // namespace mm
