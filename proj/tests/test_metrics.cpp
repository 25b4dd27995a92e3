#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "medmerge/heatmap.hpp"
#include "medmerge/metrics.hpp"
#include "medmerge/rng.hpp"

using namespace mm;
namespace fs = std::filesystem;

namespace {

// Independent brute-force macro-F1: recompute precision/recall per class
// straight from the raw vectors, no confusion matrix.
double oracle_macro_f1(const IntTensor& preds, const IntTensor& labels, int64_t classes) {
  double sum = 0;
  int64_t included = 0;
  for (int64_t c = 0; c < classes; ++c) {
    int64_t tp = 0, in_pred = 0, in_label = 0;
    for (size_t i = 0; i < preds.size(); ++i) {
      if (preds[i] == c) ++in_pred;
      if (labels[i] == c) ++in_label;
      if (preds[i] == c && labels[i] == c) ++tp;
    }
    if (in_pred == 0 && in_label == 0) continue;
    ++included;
    double p = in_pred > 0 ? double(tp) / double(in_pred) : 0.0;
    double r = in_label > 0 ? double(tp) / double(in_label) : 0.0;
    if (p + r > 0) sum += 2 * p * r / (p + r);
  }
  return included > 0 ? sum / double(included) : 0.0;
}

}  // namespace

TEST_CASE("compute_metrics: worked example by hand") {
  // preds [0,0,1,1] vs labels [0,1,1,1]
  // class 0: tp=1 pred=2 label=1 -> P=1/2 R=1   F1=2/3
  // class 1: tp=2 pred=2 label=3 -> P=1   R=2/3 F1=4/5
  // macro over 2 included classes = (2/3 + 4/5)/2 = 11/15
  MetricsReport rep = compute_metrics({0, 0, 1, 1}, {0, 1, 1, 1}, 2);
  CHECK(rep.sample_count == 4);
  CHECK(rep.accuracy == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(rep.per_class_f1[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(rep.per_class_f1[1] == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(rep.macro_f1 == doctest::Approx(11.0 / 15.0).epsilon(1e-15));
  CHECK(rep.confusion[0][0] == 1);
  CHECK(rep.confusion[1][0] == 1);
  CHECK(rep.confusion[1][1] == 2);
  CHECK(rep.confusion[0][1] == 0);
}

TEST_CASE("compute_metrics: perfect, constant, and disjoint predictors") {
  MetricsReport perfect = compute_metrics({0, 1, 2, 3}, {0, 1, 2, 3}, 4);
  CHECK(perfect.accuracy == 1.0);
  CHECK(perfect.macro_f1 == 1.0);

  // constant predictor on balanced 3-class labels:
  // class 0: P=1/3, R=1 -> F1=1/2; classes 1,2: F1=0; macro = 1/6... over
  // 3 included classes -> (0.5 + 0 + 0)/3 = 1/6
  MetricsReport constant = compute_metrics({0, 0, 0}, {0, 1, 2}, 3);
  CHECK(constant.macro_f1 == doctest::Approx(1.0 / 6.0).epsilon(1e-15));
  CHECK(constant.accuracy == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  // completely wrong: every F1 is the 0/0 -> 0 convention
  MetricsReport wrong = compute_metrics({1, 0}, {0, 1}, 2);
  CHECK(wrong.macro_f1 == 0.0);
  CHECK(wrong.accuracy == 0.0);
}

TEST_CASE("compute_metrics: exclusion convention for classes absent everywhere") {
  // class 2 never appears in preds or labels -> excluded from the mean
  MetricsReport rep = compute_metrics({0, 1}, {0, 1}, 3);
  CHECK(!rep.class_included[2]);
  CHECK(rep.class_included[0]);
  CHECK(rep.macro_f1 == 1.0);

  // class present in preds only still counts (with F1 = 0)
  MetricsReport leak = compute_metrics({0, 2}, {0, 0}, 3);
  CHECK(leak.class_included[2]);
  CHECK(leak.per_class_f1[2] == 0.0);
  // class 0: tp=1 P=1 R=1/2 -> F1=2/3; macro = (2/3 + 0)/2 = 1/3
  CHECK(leak.macro_f1 == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("compute_metrics: agrees with the brute-force oracle on random instances") {
  Rng rng(99);
  for (int trial = 0; trial < 1000; ++trial) {
    int64_t classes = 2 + static_cast<int64_t>(rng.below(5));
    size_t n = 1 + rng.below(40);
    IntTensor preds, labels;
    for (size_t i = 0; i < n; ++i) {
      preds.push_back(static_cast<int64_t>(rng.below(static_cast<uint64_t>(classes))));
      labels.push_back(static_cast<int64_t>(rng.below(static_cast<uint64_t>(classes))));
    }
    MetricsReport rep = compute_metrics(preds, labels, classes);
    CHECK(rep.macro_f1 == doctest::Approx(oracle_macro_f1(preds, labels, classes)).epsilon(1e-12));
    int64_t correct = 0;
    for (size_t i = 0; i < n; ++i) correct += preds[i] == labels[i];
    CHECK(rep.accuracy == doctest::Approx(double(correct) / double(n)).epsilon(1e-12));
    // confusion row sums = label histogram
    for (int64_t c = 0; c < classes; ++c) {
      int64_t row = 0, want = 0;
      for (int64_t j = 0; j < classes; ++j) row += rep.confusion[size_t(c)][size_t(j)];
      for (int64_t l : labels) want += l == c;
      CHECK(row == want);
    }
  }
}

TEST_CASE("compute_metrics: malformed input is rejected") {
  CHECK_THROWS_AS(compute_metrics({}, {}, 2), Error);
  CHECK_THROWS_AS(compute_metrics({0, 1}, {0}, 2), Error);
  CHECK_THROWS_AS(compute_metrics({0, 5}, {0, 1}, 2), Error);
  CHECK_THROWS_AS(compute_metrics({0, 1}, {0, -1}, 2), Error);
}

TEST_CASE("heatmap_rows: per-layer stats over hand-set logits") {
  ModelSpec spec = smallnet_spec();
  MergeWeights mw = init_merge_weights(spec);
  // all-zero logits: every stat collapses to 0.5 / 0
  auto rows0 = heatmap_rows(mw, spec);
  REQUIRE(rows0.size() == 3);
  int64_t kernel_sum = 0;
  for (const auto& r : rows0) {
    CHECK(r.mean_w == 0.5);
    CHECK(r.std_w == 0.0);
    CHECK(r.min_w == 0.5);
    CHECK(r.max_w == 0.5);
    kernel_sum += r.kernel_count;
  }
  CHECK(kernel_sum == spec.kernel_count());
  CHECK(rows0[0].layer_name == "conv0");
  CHECK(rows0[2].depth_index == 2);
  CHECK(aggregate_mean_w(mw) == 0.5);

  // layer 0 pinned at alpha = 4: w = 1/(1+e^-4) ~ 0.9820137900
  for (size_t j = 0; j < 8; ++j) mw.alphas[j] = 4.0;
  auto rows = heatmap_rows(mw, spec);
  CHECK(rows[0].mean_w == doctest::Approx(0.98201379003790845).epsilon(1e-12));
  CHECK(rows[0].std_w < 1e-15);  // accumulation rounding only
  CHECK(rows[1].mean_w == 0.5);
  // mean over all 56: (8 * w4 + 48 * 0.5) / 56
  CHECK(aggregate_mean_w(mw) ==
        doctest::Approx((8 * 0.98201379003790845 + 48 * 0.5) / 56).epsilon(1e-12));

  // mixed layer: min/max/std behave
  mw = init_merge_weights(spec);
  mw.alphas[0] = -2.0;
  mw.alphas[1] = 2.0;
  auto rows2 = heatmap_rows(mw, spec);
  CHECK(rows2[0].min_w == doctest::Approx(sigmoid(-2.0)).epsilon(1e-15));
  CHECK(rows2[0].max_w == doctest::Approx(sigmoid(2.0)).epsilon(1e-15));
  CHECK(rows2[0].std_w > 0.0);
  // mean of sigmoid(2) and sigmoid(-2) plus six 0.5s is exactly 0.5
  CHECK(rows2[0].mean_w == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("export_heatmap: CSV schema and round-trippable numbers") {
  ModelSpec spec = smallnet_spec();
  MergeWeights mw = init_merge_weights(spec);
  mw.alphas[10] = 1.25;
  std::string path = (fs::temp_directory_path() / "mm_heatmap.csv").string();
  export_heatmap(mw, spec, path);
  std::ifstream is(path);
  std::string header;
  std::getline(is, header);
  CHECK(header == "layer_name,depth_index,kernel_count,mean_w,std_w,min_w,max_w");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(is, line))
    if (!line.empty()) lines.push_back(line);
  REQUIRE(lines.size() == 3);
  CHECK(lines[0].rfind("conv0,0,8,", 0) == 0);
  CHECK(lines[1].rfind("conv1,1,16,", 0) == 0);
  CHECK(lines[2].rfind("conv2,2,32,", 0) == 0);
  // parse mean_w of layer 1 back out and compare against the direct value
  size_t p = lines[1].find(",16,") + 4;
  double mean = std::strtod(lines[1].c_str() + p, nullptr);
  auto rows = heatmap_rows(mw, spec);
  CHECK(mean == doctest::Approx(rows[1].mean_w).epsilon(1e-9));
  fs::remove(path);

  // weights for a different spec are rejected
  ModelSpec other = smallnet_spec();
  other.blocks[0].out_channels = 9;
  CHECK_THROWS_AS(heatmap_rows(mw, other), Error);
}
