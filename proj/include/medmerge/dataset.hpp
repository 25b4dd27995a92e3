#pragma once

#include <map>
#include <string>
#include <vector>

#include "medmerge/io.hpp"
#include "medmerge/rng.hpp"
#include "medmerge/tensor.hpp"

namespace mm {

/// Images + integer labels with named index splits.
struct LabeledDataset {
  std::string name;
  Tensor<float> images;  // [n, C, H, W]
  IntTensor labels;      // [n]
  int64_t class_count = 0;
  std::map<std::string, std::vector<int64_t>> splits;

  int64_t size() const { return images.shape.empty() ? 0 : images.shape[0]; }

  const std::vector<int64_t>& split(const std::string& name_) const {
    auto it = splits.find(name_);
    require(it != splits.end(), "dataset '" + name + "' has no split '" + name_ + "'");
    return it->second;
  }

  std::vector<int64_t> class_histogram(const std::string& split_name) const {
    std::vector<int64_t> h(static_cast<size_t>(class_count), 0);
    for (int64_t i : split(split_name)) ++h[static_cast<size_t>(labels[static_cast<size_t>(i)])];
    return h;
  }

  void validate() const {
    const int64_t n = size();
    require(images.shape.size() == 4, "dataset: images must be [n x C x H x W]");
    require(static_cast<int64_t>(labels.size()) == n, "dataset: label count mismatch");
    for (int64_t l : labels)
      require(l >= 0 && l < class_count, "dataset: label out of range");
    std::vector<uint8_t> seen(static_cast<size_t>(n), 0);
    for (const auto& [sname, idx] : splits) {
      for (int64_t i : idx) {
        require(i >= 0 && i < n, "dataset: split '" + sname + "' index out of range");
        require(!seen[static_cast<size_t>(i)], "dataset: splits overlap at index " + std::to_string(i));
        seen[static_cast<size_t>(i)] = 1;
      }
    }
  }
};

constexpr char kDatasetMagic[4] = {'M', 'M', 'D', 'S'};

/// `.mmds` packed dataset. Labels and split indices are stored as
/// integer-valued f64 tensors in the shared blob container (exact up to
/// 2^53, bit-stable round trip).
inline void save_packed(const LabeledDataset& ds, const std::string& path) {
  ds.validate();
  TensorBlob blob;
  std::ostringstream meta;
  meta << "format_version 1\n"
       << "name " << ds.name << "\n"
       << "class_count " << ds.class_count << "\n";
  for (const auto& [sname, idx] : ds.splits) meta << "split " << sname << "\n";
  blob.meta = meta.str();
  blob.tensors.emplace("images", AnyTensor(ds.images));
  Tensor<double> lab({static_cast<int64_t>(ds.labels.size())});
  for (size_t i = 0; i < ds.labels.size(); ++i) lab[static_cast<int64_t>(i)] = static_cast<double>(ds.labels[i]);
  blob.tensors.emplace("labels", AnyTensor(std::move(lab)));
  for (const auto& [sname, idx] : ds.splits) {
    Tensor<double> t({static_cast<int64_t>(idx.size())});
    for (size_t i = 0; i < idx.size(); ++i) t[static_cast<int64_t>(i)] = static_cast<double>(idx[i]);
    blob.tensors.emplace("split." + sname, AnyTensor(std::move(t)));
  }
  write_blob_file(path, kDatasetMagic, blob);
}

inline LabeledDataset load_packed(const std::string& path) {
  TensorBlob blob = read_blob_file(path, kDatasetMagic, "dataset");
  auto kv = parse_meta(blob.meta);
  LabeledDataset ds;
  ds.name = meta_get(kv, "name", "dataset");
  ds.class_count = std::stoll(meta_get(kv, "class_count", "dataset"));
  auto it = blob.tensors.find("images");
  require(it != blob.tensors.end(), "dataset: missing images tensor");
  ds.images = it->second.as<float>();
  auto lt = blob.tensors.find("labels");
  require(lt != blob.tensors.end(), "dataset: missing labels tensor");
  const Tensor<double>& lab = lt->second.as<double>();
  for (int64_t i = 0; i < lab.numel(); ++i) ds.labels.push_back(static_cast<int64_t>(lab[i]));
  std::istringstream ms(blob.meta);
  std::string line;
  while (std::getline(ms, line)) {
    if (line.rfind("split ", 0) != 0) continue;
    std::string sname = line.substr(6);
    auto st = blob.tensors.find("split." + sname);
    require(st != blob.tensors.end(), "dataset: missing split tensor for '" + sname + "'");
    const Tensor<double>& t = st->second.as<double>();
    std::vector<int64_t> idx;
    for (int64_t i = 0; i < t.numel(); ++i) idx.push_back(static_cast<int64_t>(t[i]));
    ds.splits.emplace(sname, std::move(idx));
  }
  ds.validate();
  return ds;
}

/// Deterministic per-epoch iteration order for one split.
inline std::vector<int64_t> epoch_order(const LabeledDataset& ds, const std::string& split,
                                        uint64_t seed, int64_t epoch, bool shuffle) {
  std::vector<int64_t> order = ds.split(split);
  if (shuffle) {
    Rng rng(seed * 0x9E3779B97F4A7C15ull + static_cast<uint64_t>(epoch) + 1);
    rng.shuffle(order);
  }
  return order;
}

/// Gather one batch (images cast to the training scalar type).
template <class S>
std::pair<Tensor<S>, IntTensor> gather_batch(const LabeledDataset& ds,
                                             const std::vector<int64_t>& order, size_t from,
                                             size_t batch_size) {
  const size_t to = std::min(from + batch_size, order.size());
  const int64_t c = ds.images.shape[1], h = ds.images.shape[2], w = ds.images.shape[3];
  const int64_t per = c * h * w;
  Tensor<S> x({static_cast<int64_t>(to - from), c, h, w});
  IntTensor y;
  for (size_t i = from; i < to; ++i) {
    int64_t src = order[i];
    for (int64_t j = 0; j < per; ++j)
      x[static_cast<int64_t>(i - from) * per + j] = static_cast<S>(ds.images[src * per + j]);
    y.push_back(ds.labels[static_cast<size_t>(src)]);
  }
  return {std::move(x), std::move(y)};
}

}  // namespace mm
