#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "medmerge/layers.hpp"
#include "medmerge/model_spec.hpp"

namespace mm {

/// Static feed-forward graph: conv blocks -> flatten -> linear head.
/// Single-threaded (mutable activation caches); clone per worker for
/// parallel evaluation.
template <class S>
class Graph {
 public:
  struct Block {
    Conv2d<S> conv;
    std::optional<BatchNorm2d<S>> bn;
    Activation activation;
    bool residual;
    std::optional<MaxPool2d<S>> pool;
    // caches
    Tensor<S> residual_in;
    std::vector<uint8_t> relu_mask;

    Block(const BlockSpec& bs, int64_t in_ch, int64_t index)
        : conv("conv" + std::to_string(index), in_ch, bs.out_channels, bs.kernel_size, bs.stride,
               bs.bias),
          activation(bs.activation),
          residual(bs.residual_skip) {
      if (bs.use_bn) bn.emplace("bn" + std::to_string(index), bs.out_channels);
      if (bs.pool > 0) pool.emplace(bs.pool);
    }
  };

  explicit Graph(const ModelSpec& spec) : spec_(spec), head_("head", spec.head_in_features(), spec.classes) {
    spec.validate();
    int64_t in_ch = spec.in_channels;
    for (size_t i = 0; i < spec.blocks.size(); ++i) {
      blocks_.emplace_back(spec.blocks[i], in_ch, static_cast<int64_t>(i));
      in_ch = spec.blocks[i].out_channels;
    }
  }

  const ModelSpec& spec() const { return spec_; }
  std::vector<Block>& blocks() { return blocks_; }
  Linear<S>& head() { return head_; }

  /// Forward pass. Train mode uses batch statistics in unfrozen BN layers
  /// and updates their running stats; eval mode uses running stats.
  /// Activations are cached for backward.
  Tensor<S> forward(const Tensor<S>& input, bool train) {
    require(input.shape.size() == 4 && input.shape[1] == spec_.in_channels &&
                input.shape[2] == spec_.in_height && input.shape[3] == spec_.in_width,
            "forward: input shape " + shape_str(input.shape) + " does not match spec input");
    Tensor<S> x = input;
    for (auto& blk : blocks_) {
      if (blk.residual) blk.residual_in = x;
      x = blk.conv.forward(x);
      require(x.all_finite(), "forward: non-finite activation in " + blk.conv.weight.name);
      if (blk.bn) x = blk.bn->forward(x, train);
      if (blk.residual) {
        for (int64_t i = 0; i < x.numel(); ++i) x[i] += blk.residual_in[i];
      }
      if (blk.activation == Activation::Relu) relu_forward(x, blk.relu_mask);
      if (blk.pool) x = blk.pool->forward(x);
      require(x.all_finite(), "forward: non-finite activation after " + blk.conv.weight.name);
    }
    const int64_t n = x.shape[0];
    const int64_t feat = x.numel() / n;
    Tensor<S> flat({n, feat}, std::move(x.data));
    Tensor<S> logits = head_.forward(flat);
    require(logits.all_finite(), "forward: non-finite logits");
    forwarded_ = true;
    batch_ = n;
    return logits;
  }

  /// Backward from dL/dlogits. Populates grads on every parameter
  /// (frozen parameters still propagate gradients through themselves).
  void backward(const Tensor<S>& dlogits) {
    require(forwarded_, "backward without a preceding forward");
    forwarded_ = false;
    Tensor<S> g = head_.backward(dlogits);
    // unflatten to the last block's output shape
    std::vector<Shape> shapes;
    spec_.trace_shapes(shapes);
    if (!blocks_.empty()) {
      const Shape& s = shapes.back();
      g = Tensor<S>({batch_, s[0], s[1], s[2]}, std::move(g.data));
    }
    for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) {
      auto& blk = *it;
      if (blk.pool) g = blk.pool->backward(g);
      if (blk.activation == Activation::Relu) relu_backward(g, blk.relu_mask);
      Tensor<S> g_residual;
      if (blk.residual) g_residual = g;  // skip-path gradient
      if (blk.bn) g = blk.bn->backward(g);
      g = blk.conv.backward(g);
      if (blk.residual) {
        for (int64_t i = 0; i < g.numel(); ++i) g[i] += g_residual[i];
      }
    }
  }

  /// All parameters in deterministic order (conv weights/biases/logits,
  /// BN gamma/beta, head).
  std::vector<Parameter<S>*> parameters() {
    std::vector<Parameter<S>*> out;
    for (auto& blk : blocks_) {
      out.push_back(&blk.conv.weight);
      if (blk.conv.bias) out.push_back(&*blk.conv.bias);
      if (blk.conv.merged) out.push_back(&blk.conv.alphas);
      if (blk.bn) {
        out.push_back(&blk.bn->gamma);
        out.push_back(&blk.bn->beta);
      }
    }
    out.push_back(&head_.weight);
    out.push_back(&head_.bias);
    return out;
  }

  void zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
  }

  int64_t trainable_scalar_count() {
    int64_t n = 0;
    for (auto* p : parameters())
      if (p->trainable) n += p->value.numel();
    return n;
  }

  /// Freeze/unfreeze helpers used by the training pipelines.
  void set_backbone_trainable(bool trainable) {
    for (auto& blk : blocks_) {
      blk.conv.weight.trainable = trainable && !blk.conv.merged;
      if (blk.conv.bias) blk.conv.bias->trainable = trainable && !blk.conv.merged;
      if (blk.bn) {
        blk.bn->gamma.trainable = trainable;
        blk.bn->beta.trainable = trainable;
      }
    }
  }
  void set_bn_frozen(bool frozen) {
    for (auto& blk : blocks_) {
      if (blk.bn) {
        blk.bn->frozen = frozen;
        blk.bn->gamma.trainable = !frozen;
        blk.bn->beta.trainable = !frozen;
      }
    }
  }

  /// Load parameters and BN running stats from a tree (dtype must match S).
  void load(const ParamTree& tree) {
    auto get = [&](const std::string& name) -> const Tensor<S>& {
      auto it = tree.find(name);
      require(it != tree.end(), "param tree missing entry: " + name);
      return it->second.template as<S>();
    };
    auto set = [&](Parameter<S>& p) {
      const Tensor<S>& t = get(p.name);
      require(t.shape == p.value.shape, "param tree shape mismatch at " + p.name + ": " +
                                            shape_str(t.shape) + " vs " + shape_str(p.value.shape));
      p.value = t;
    };
    for (auto& blk : blocks_) {
      if (!blk.conv.merged) {
        set(blk.conv.weight);
        if (blk.conv.bias) set(*blk.conv.bias);
      }
      if (blk.bn) {
        set(blk.bn->gamma);
        set(blk.bn->beta);
        std::string base = blk.bn->gamma.name.substr(0, blk.bn->gamma.name.size() - 6);
        blk.bn->running_mean = get(base + ".running_mean");
        blk.bn->running_var = get(base + ".running_var");
      }
    }
    set(head_.weight);
    set(head_.bias);
  }

  /// Snapshot parameters and BN running stats into a tree.
  ParamTree dump() const {
    ParamTree tree;
    auto put = [&](const Parameter<S>& p) { tree.emplace(p.name, AnyTensor(p.value)); };
    for (const auto& blk : blocks_) {
      if (blk.conv.merged) {
        // materialized kernel is what a consumer of the dump wants
        Conv2d<S>& c = const_cast<Conv2d<S>&>(blk.conv);
        c.materialize_merged();
      }
      put(blk.conv.weight);
      if (blk.conv.bias) put(*blk.conv.bias);
      if (blk.bn) {
        put(blk.bn->gamma);
        put(blk.bn->beta);
        std::string base = blk.bn->gamma.name.substr(0, blk.bn->gamma.name.size() - 6);
        tree.emplace(base + ".running_mean", AnyTensor(blk.bn->running_mean));
        tree.emplace(base + ".running_var", AnyTensor(blk.bn->running_var));
      }
    }
    put(head_.weight);
    put(head_.bias);
    return tree;
  }

 private:
  ModelSpec spec_;
  std::vector<Block> blocks_;
  Linear<S> head_;
  bool forwarded_ = false;
  int64_t batch_ = 0;
};

inline bool is_head_param(const std::string& name) { return name.rfind("head.", 0) == 0; }

}  // namespace mm
