#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "medmerge/common.hpp"
#include "medmerge/tensor.hpp"

namespace mm {

enum class Activation { Relu, None };

inline const char* activation_name(Activation a) { return a == Activation::Relu ? "relu" : "none"; }
inline Activation activation_from_name(const std::string& s) {
  if (s == "relu") return Activation::Relu;
  if (s == "none") return Activation::None;
  fail("unknown activation: " + s);
}

/// One conv block: conv (+optional BN) -> activation, optional residual add
/// of the block input before the activation, optional max-pool after.
struct BlockSpec {
  int64_t out_channels = 0;
  int64_t kernel_size = 3;
  int64_t stride = 1;
  bool use_bn = true;
  Activation activation = Activation::Relu;
  bool residual_skip = false;
  int64_t pool = 0;  // 0 = no pooling, else pool window/stride
  bool bias = false; // per-output-channel conv bias; default off (BN convs)
};

/// Declarative architecture: input shape, conv blocks, linear head.
struct ModelSpec {
  std::string name;
  int64_t in_channels = 1;
  int64_t in_height = 16;
  int64_t in_width = 16;
  std::vector<BlockSpec> blocks;
  int64_t classes = 4;

  int64_t conv_layer_count() const { return static_cast<int64_t>(blocks.size()); }

  /// Spatial size after block i (same-padding convs, floor-div pooling).
  void trace_shapes(std::vector<Shape>& out) const;

  /// Flattened feature dimension entering the head.
  int64_t head_in_features() const;

  int64_t kernel_count() const {
    int64_t n = 0;
    for (const auto& b : blocks) n += b.out_channels;
    return n;
  }

  void validate() const;
  std::string serialize() const;
  uint64_t digest() const { return fnv1a64(serialize()); }

  /// Digest over input shape and blocks only. Two specs with the same
  /// backbone digest are merge-compatible even if their heads differ.
  uint64_t backbone_digest() const {
    std::string s = serialize();
    std::string out;
    std::istringstream is(s);
    std::string line;
    while (std::getline(is, line))
      if (line.rfind("name ", 0) != 0 && line.rfind("classes ", 0) != 0) out += line + "\n";
    return fnv1a64(out);
  }
};

inline void ModelSpec::trace_shapes(std::vector<Shape>& out) const {
  out.clear();
  int64_t c = in_channels, h = in_height, w = in_width;
  for (const auto& b : blocks) {
    // same padding: out = ceil(in / stride)
    h = (h + b.stride - 1) / b.stride;
    w = (w + b.stride - 1) / b.stride;
    c = b.out_channels;
    if (b.pool > 0) {
      h /= b.pool;
      w /= b.pool;
    }
    out.push_back({c, h, w});
  }
}

inline int64_t ModelSpec::head_in_features() const {
  std::vector<Shape> shapes;
  trace_shapes(shapes);
  if (shapes.empty()) return in_channels * in_height * in_width;
  const Shape& s = shapes.back();
  return s[0] * s[1] * s[2];
}

inline void ModelSpec::validate() const {
  require(in_channels > 0 && in_height > 0 && in_width > 0, "spec: invalid input shape");
  require(classes >= 2, "spec: need at least 2 classes");
  int64_t c = in_channels, h = in_height, w = in_width;
  for (size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    std::string at = "spec block " + std::to_string(i) + ": ";
    require(b.out_channels > 0, at + "out_channels must be positive");
    require(b.kernel_size > 0 && b.kernel_size % 2 == 1, at + "kernel_size must be odd positive");
    require(b.stride > 0, at + "stride must be positive");
    require(b.pool >= 0, at + "pool must be non-negative");
    if (b.residual_skip) {
      require(b.out_channels == c && b.stride == 1,
              at + "residual_skip needs matching channels and stride 1");
    }
    h = (h + b.stride - 1) / b.stride;
    w = (w + b.stride - 1) / b.stride;
    c = b.out_channels;
    if (b.pool > 0) {
      require(h >= b.pool && w >= b.pool, at + "pool window larger than feature map");
      h /= b.pool;
      w /= b.pool;
    }
  }
  require(head_in_features() > 0, "spec: head input dimension is zero");
}

inline std::string ModelSpec::serialize() const {
  std::ostringstream os;
  os << "name " << name << "\n";
  os << "input " << in_channels << " " << in_height << " " << in_width << "\n";
  os << "classes " << classes << "\n";
  for (const auto& b : blocks) {
    os << "block out=" << b.out_channels << " k=" << b.kernel_size << " stride=" << b.stride
       << " bn=" << (b.use_bn ? 1 : 0) << " act=" << activation_name(b.activation)
       << " skip=" << (b.residual_skip ? 1 : 0) << " pool=" << b.pool
       << " bias=" << (b.bias ? 1 : 0) << "\n";
  }
  return os.str();
}

inline ModelSpec parse_model_spec(std::istream& in) {
  ModelSpec spec;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    std::string at = "spec line " + std::to_string(lineno) + ": ";
    if (key == "name") {
      ls >> spec.name;
    } else if (key == "input") {
      ls >> spec.in_channels >> spec.in_height >> spec.in_width;
      require(!ls.fail(), at + "input wants 3 integers");
    } else if (key == "classes") {
      ls >> spec.classes;
      require(!ls.fail(), at + "classes wants an integer");
    } else if (key == "block") {
      BlockSpec b;
      std::string kv;
      while (ls >> kv) {
        auto eq = kv.find('=');
        require(eq != std::string::npos, at + "block fields are key=value, got '" + kv + "'");
        std::string k = kv.substr(0, eq), v = kv.substr(eq + 1);
        if (k == "out") b.out_channels = std::stoll(v);
        else if (k == "k") b.kernel_size = std::stoll(v);
        else if (k == "stride") b.stride = std::stoll(v);
        else if (k == "bn") b.use_bn = std::stoll(v) != 0;
        else if (k == "act") b.activation = activation_from_name(v);
        else if (k == "skip") b.residual_skip = std::stoll(v) != 0;
        else if (k == "pool") b.pool = std::stoll(v);
        else if (k == "bias") b.bias = std::stoll(v) != 0;
        else fail(at + "unknown block field '" + k + "'");
      }
      spec.blocks.push_back(b);
    } else {
      fail(at + "unknown key '" + key + "'");
    }
  }
  spec.validate();
  return spec;
}

inline ModelSpec load_model_spec(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open spec file: " + path);
  return parse_model_spec(in);
}

inline void save_model_spec(const ModelSpec& spec, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "cannot write spec file: " + path);
  out << spec.serialize();
}

/// Identifies one conv output channel: the granularity of merge weights.
struct KernelAddress {
  int64_t layer_index = 0;
  int64_t out_channel = 0;

  auto operator<=>(const KernelAddress&) const = default;
};

/// Depth-then-channel enumeration of all backbone kernels.
inline std::vector<KernelAddress> enumerate_kernels(const ModelSpec& spec) {
  std::vector<KernelAddress> out;
  for (int64_t l = 0; l < spec.conv_layer_count(); ++l)
    for (int64_t c = 0; c < spec.blocks[l].out_channels; ++c) out.push_back({l, c});
  return out;
}

/// The desk-scale reference architecture used throughout tests and docs.
inline ModelSpec smallnet_spec(int64_t classes = 4) {
  ModelSpec spec;
  spec.name = "smallnet";
  spec.in_channels = 1;
  spec.in_height = 16;
  spec.in_width = 16;
  spec.classes = classes;
  for (int64_t ch : {8, 16, 32}) {
    BlockSpec b;
    b.out_channels = ch;
    b.kernel_size = 3;
    b.stride = 1;
    b.use_bn = true;
    b.activation = Activation::Relu;
    b.pool = 2;
    spec.blocks.push_back(b);
  }
  return spec;
}

}  // namespace mm
