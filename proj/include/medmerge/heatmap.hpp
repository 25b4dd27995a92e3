#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "medmerge/merge.hpp"

namespace mm {

/// One row per conv layer: distribution of effective merge coefficients
/// w = sigmoid(alpha). Convention: w is the share of source_b.
struct HeatmapRow {
  std::string layer_name;
  int64_t depth_index = 0;
  int64_t kernel_count = 0;
  double mean_w = 0, std_w = 0, min_w = 0, max_w = 0;
};

inline std::vector<HeatmapRow> heatmap_rows(const MergeWeights& mw, const ModelSpec& spec) {
  mw.check_matches(spec);
  std::vector<HeatmapRow> rows;
  size_t at = 0;
  for (int64_t l = 0; l < spec.conv_layer_count(); ++l) {
    HeatmapRow row;
    row.layer_name = "conv" + std::to_string(l);
    row.depth_index = l;
    row.kernel_count = spec.blocks[static_cast<size_t>(l)].out_channels;
    std::vector<double> ws(static_cast<size_t>(row.kernel_count));
    double sum = 0;
    row.min_w = 1.0;
    row.max_w = 0.0;
    for (int64_t c = 0; c < row.kernel_count; ++c, ++at) {
      double w = mw.weight(at);
      ws[static_cast<size_t>(c)] = w;
      sum += w;
      row.min_w = std::min(row.min_w, w);
      row.max_w = std::max(row.max_w, w);
    }
    double n = static_cast<double>(row.kernel_count);
    row.mean_w = sum / n;
    double sq = 0;  // two-pass variance: no cancellation when all w are equal
    for (double w : ws) sq += (w - row.mean_w) * (w - row.mean_w);
    row.std_w = std::sqrt(sq / n);
    rows.push_back(row);
  }
  return rows;
}

/// Mean of w over all kernels (used by the zero-source analysis).
inline double aggregate_mean_w(const MergeWeights& mw) {
  double sum = 0;
  for (size_t j = 0; j < mw.size(); ++j) sum += mw.weight(j);
  return sum / static_cast<double>(mw.size());
}

inline void export_heatmap(const MergeWeights& mw, const ModelSpec& spec,
                           const std::string& path) {
  auto rows = heatmap_rows(mw, spec);
  std::ofstream os(path);
  require(os.good(), "cannot open for writing: " + path);
  os << "layer_name,depth_index,kernel_count,mean_w,std_w,min_w,max_w\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%lld,%lld,%.10g,%.10g,%.10g,%.10g\n", r.layer_name.c_str(),
                  static_cast<long long>(r.depth_index), static_cast<long long>(r.kernel_count),
                  r.mean_w, r.std_w, r.min_w, r.max_w);
    os << buf;
  }
  require(os.good(), "I/O failure writing " + path);
}

}  // namespace mm
