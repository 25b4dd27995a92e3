#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "medmerge/checkpoint.hpp"
#include "medmerge/graph.hpp"
#include "medmerge/model_build.hpp"

namespace mm {

/// One learnable logit per backbone conv kernel; the effective merge
/// coefficient is w_j = sigmoid(alpha_j), so w stays in (0,1) while the
/// optimizer sees an unconstrained scalar. alpha = 0 gives the equal merge.
struct MergeWeights {
  uint64_t spec_digest = 0;
  std::vector<KernelAddress> addresses;  // depth-then-channel order
  std::vector<double> alphas;

  size_t size() const { return alphas.size(); }

  double weight(size_t j) const { return sigmoid(alphas[j]); }

  void check_matches(const ModelSpec& spec) const {
    require(spec_digest == spec.backbone_digest(), "merge weights were built for a different spec");
    auto addrs = enumerate_kernels(spec);
    require(addrs == addresses && alphas.size() == addrs.size(),
            "merge weights do not cover the spec's kernels");
  }
};

inline MergeWeights init_merge_weights(const ModelSpec& spec) {
  spec.validate();
  require(spec.kernel_count() > 0, "init_merge_weights: spec has no conv kernels");
  MergeWeights mw;
  mw.spec_digest = spec.backbone_digest();
  mw.addresses = enumerate_kernels(spec);
  mw.alphas.assign(mw.addresses.size(), 0.0);  // sigmoid(0) = 0.5: equal merge
  return mw;
}

/// Elementwise convex combination of two kernels.
template <class S>
Tensor<S> merged_kernel(const Tensor<S>& kb, const Tensor<S>& kc, S w) {
  require(kb.shape == kc.shape, "merged_kernel: shape mismatch");
  Tensor<S> out(kb.shape);
  for (int64_t i = 0; i < kb.numel(); ++i) out[i] = w * kb[i] + (S(1) - w) * kc[i];
  return out;
}

/// The two frozen source trees plus the architecture they share.
struct MergePair {
  ParamTree source_b;
  ParamTree source_c;
  ModelSpec spec;

  void validate() const {
    spec.validate();
    require(spec.kernel_count() > 0, "merge pair: spec has no conv kernels");
    CongruenceReport rep = check_congruent(source_b, source_c);
    require(rep.ok, "merge pair is not congruent: " + rep.summary());
  }
};

/// BN layers of the merged model start as the elementwise arithmetic mean
/// of the two sources' states (including running statistics).
template <class S>
ParamTree bn_mean_init(const MergePair& pair) {
  pair.validate();
  ParamTree out;
  for (const auto& [name, tb] : pair.source_b) {
    if (name.rfind("bn", 0) != 0) continue;
    const Tensor<S>& a = tb.template as<S>();
    const Tensor<S>& b = pair.source_c.at(name).template as<S>();
    Tensor<S> m(a.shape);
    for (int64_t i = 0; i < a.numel(); ++i) m[i] = (a[i] + b[i]) / S(2);
    out.emplace(name, AnyTensor(std::move(m)));
  }
  return out;
}

/// Build the virtual merged graph for the LP stage: every conv kernel is
/// recomputed on the fly from the frozen sources and its merge logit, BN
/// starts at the mean of the sources and trains, the head is fresh.
template <class S>
Graph<S> make_virtual_merged_graph(const MergePair& pair, const MergeWeights& mw,
                                   uint64_t head_seed) {
  pair.validate();
  mw.check_matches(pair.spec);
  Graph<S> g(pair.spec);
  ParamTree bn_init = bn_mean_init<S>(pair);
  size_t alpha_at = 0;
  for (size_t i = 0; i < g.blocks().size(); ++i) {
    auto& blk = g.blocks()[i];
    std::string ci = "conv" + std::to_string(i);
    Tensor<S> kb = pair.source_b.at(ci + ".weight").template as<S>();
    Tensor<S> kc = pair.source_c.at(ci + ".weight").template as<S>();
    if (blk.conv.bias) {
      blk.conv.set_merged(std::move(kb), std::move(kc),
                          pair.source_b.at(ci + ".bias").template as<S>(),
                          pair.source_c.at(ci + ".bias").template as<S>());
    } else {
      blk.conv.set_merged(std::move(kb), std::move(kc));
    }
    for (int64_t o = 0; o < blk.conv.out_ch; ++o)
      blk.conv.alphas.value[o] = static_cast<S>(mw.alphas[alpha_at++]);
    if (blk.bn) {
      std::string bi = "bn" + std::to_string(i);
      blk.bn->gamma.value = bn_init.at(bi + ".gamma").template as<S>();
      blk.bn->beta.value = bn_init.at(bi + ".beta").template as<S>();
      blk.bn->running_mean = bn_init.at(bi + ".running_mean").template as<S>();
      blk.bn->running_var = bn_init.at(bi + ".running_var").template as<S>();
    }
  }
  require(alpha_at == mw.size(), "merge weights / spec kernel count mismatch");
  ParamTree head = init_param_tree<S>(pair.spec, head_seed);
  g.head().weight.value = head.at("head.weight").template as<S>();
  g.head().bias.value = head.at("head.bias").template as<S>();
  return g;
}

/// Pull current logits out of a virtual merged graph.
template <class S>
MergeWeights extract_merge_weights(Graph<S>& g) {
  MergeWeights mw;
  mw.spec_digest = g.spec().backbone_digest();
  mw.addresses = enumerate_kernels(g.spec());
  for (size_t i = 0; i < g.blocks().size(); ++i) {
    auto& conv = g.blocks()[i].conv;
    require(conv.merged, "extract_merge_weights: graph is not in merged mode");
    for (int64_t o = 0; o < conv.out_ch; ++o)
      mw.alphas.push_back(static_cast<double>(conv.alphas.value[o]));
  }
  return mw;
}

/// Materialize the merged parameter tree: kernels from the learnt logits,
/// BN and head taken from the trained LP state as-is (BN is trained during
/// LP precisely to adapt it; it is not re-averaged here).
template <class S>
ParamTree bake(const MergePair& pair, const MergeWeights& mw, const ParamTree& trained_state) {
  pair.validate();
  mw.check_matches(pair.spec);
  ParamTree out;
  size_t alpha_at = 0;
  for (size_t i = 0; i < pair.spec.blocks.size(); ++i) {
    std::string ci = "conv" + std::to_string(i);
    const Tensor<S>& kb = pair.source_b.at(ci + ".weight").template as<S>();
    const Tensor<S>& kc = pair.source_c.at(ci + ".weight").template as<S>();
    const int64_t out_ch = kb.shape[0];
    const int64_t per = kb.numel() / out_ch;
    Tensor<S> k(kb.shape);
    std::vector<S> wb(static_cast<size_t>(out_ch)), wc(static_cast<size_t>(out_ch));
    for (int64_t o = 0; o < out_ch; ++o) {
      // compute in S so baking reproduces the virtual graph's kernels exactly
      S a = static_cast<S>(mw.alphas[alpha_at + static_cast<size_t>(o)]);
      wb[static_cast<size_t>(o)] = sigmoid(a);
      wc[static_cast<size_t>(o)] = sigmoid(-a);
      for (int64_t j = 0; j < per; ++j)
        k[o * per + j] = wb[static_cast<size_t>(o)] * kb[o * per + j] +
                         wc[static_cast<size_t>(o)] * kc[o * per + j];
    }
    out.emplace(ci + ".weight", AnyTensor(std::move(k)));
    if (pair.source_b.count(ci + ".bias")) {
      const Tensor<S>& bb = pair.source_b.at(ci + ".bias").template as<S>();
      const Tensor<S>& bc = pair.source_c.at(ci + ".bias").template as<S>();
      Tensor<S> bias(bb.shape);
      for (int64_t o = 0; o < out_ch; ++o)
        bias[o] = wb[static_cast<size_t>(o)] * bb[o] + wc[static_cast<size_t>(o)] * bc[o];
      out.emplace(ci + ".bias", AnyTensor(std::move(bias)));
    }
    alpha_at += static_cast<size_t>(out_ch);
    if (pair.spec.blocks[i].use_bn) {
      std::string bi = "bn" + std::to_string(i);
      for (const char* part : {".gamma", ".beta", ".running_mean", ".running_var"}) {
        auto it = trained_state.find(bi + part);
        require(it != trained_state.end(), "bake: trained state missing " + bi + part);
        out.emplace(bi + part, it->second);
      }
    }
  }
  for (const char* part : {"head.weight", "head.bias"}) {
    auto it = trained_state.find(part);
    require(it != trained_state.end(), std::string("bake: trained state missing ") + part);
    out.emplace(part, it->second);
  }
  return out;
}

/// Fixed w = 0.5 baseline: every backbone tensor (kernels and BN alike)
/// elementwise-averaged, head freshly initialized.
template <class S>
ParamTree simple_average(const MergePair& pair, uint64_t head_seed) {
  pair.validate();
  ParamTree out;
  for (const auto& [name, tb] : pair.source_b) {
    if (is_head_param(name)) continue;
    const Tensor<S>& a = tb.template as<S>();
    const Tensor<S>& b = pair.source_c.at(name).template as<S>();
    Tensor<S> m(a.shape);
    for (int64_t i = 0; i < a.numel(); ++i) m[i] = (a[i] + b[i]) / S(2);
    out.emplace(name, AnyTensor(std::move(m)));
  }
  ParamTree head = init_param_tree<S>(pair.spec, head_seed);
  out.emplace("head.weight", head.at("head.weight"));
  out.emplace("head.bias", head.at("head.bias"));
  return out;
}

/// All-zero backbone with identity BN, used as the ablation counterpart:
/// merging against it exposes which kernels the probe finds useful.
template <class S>
ParamTree zero_source(const ModelSpec& spec) {
  spec.validate();
  ParamTree tree = init_param_tree<S>(spec, 0);
  for (auto& [name, t] : tree) {
    if (is_head_param(name)) continue;
    if (name.find(".gamma") != std::string::npos ||
        name.find(".running_var") != std::string::npos) {
      t.template as<S>().fill(S(1));
    } else {
      t.template as<S>().fill(S(0));
    }
  }
  return tree;
}

/// `.mmw` sidecar: one "layer channel alpha" line per kernel, sorted by
/// address, hexfloat alphas for bit-exact round trips.
inline void save_merge_weights(const MergeWeights& mw, const std::string& path) {
  std::ofstream os(path);
  require(os.good(), "cannot open for writing: " + path);
  os << "mmw 1\n";
  os << "spec_digest " << hex64(mw.spec_digest) << "\n";
  for (size_t j = 0; j < mw.size(); ++j) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%a", mw.alphas[j]);
    os << mw.addresses[j].layer_index << " " << mw.addresses[j].out_channel << " " << buf << "\n";
  }
  require(os.good(), "I/O failure writing " + path);
}

inline MergeWeights load_merge_weights(const std::string& path) {
  std::ifstream is(path);
  require(is.good(), "cannot open: " + path);
  std::string tag;
  int version;
  is >> tag >> version;
  require(tag == "mmw" && version == 1, "not a merge-weights file: " + path);
  std::string key, digest;
  is >> key >> digest;
  require(key == "spec_digest", "merge-weights file missing spec_digest");
  MergeWeights mw;
  mw.spec_digest = std::stoull(digest, nullptr, 16);
  int64_t layer, channel;
  std::string alpha;
  while (is >> layer >> channel >> alpha) {
    mw.addresses.push_back({layer, channel});
    mw.alphas.push_back(std::strtod(alpha.c_str(), nullptr));
  }
  require(!mw.addresses.empty(), "merge-weights file has no entries: " + path);
  return mw;
}

}  // namespace mm
