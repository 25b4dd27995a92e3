#pragma once

#include <string>
#include <vector>

#include "medmerge/dataset.hpp"
#include "medmerge/rng.hpp"

namespace mm {

enum class FeatureFamily { Frequency, Blob, Mixed };

inline const char* family_name(FeatureFamily f) {
  switch (f) {
    case FeatureFamily::Frequency: return "frequency";
    case FeatureFamily::Blob: return "blob";
    case FeatureFamily::Mixed: return "mixed";
  }
  fail("bad family enum");
}
inline FeatureFamily family_from_name(const std::string& s) {
  if (s == "frequency") return FeatureFamily::Frequency;
  if (s == "blob") return FeatureFamily::Blob;
  if (s == "mixed") return FeatureFamily::Mixed;
  fail("unknown feature family: " + s);
}

/// Two-source synthetic task generator.
///  - frequency: classes are horizontal square-wave stripe periods with a
///    random phase (phase-invariant frequency detection, nonlinear in
///    pixel space); a random texture patch rides along as a distractor.
///  - blob: classes are 6x6 patch textures (solid vs checkerboards) at a
///    random position; random stripes ride along as a distractor.
///  - mixed: every image carries both attributes and the class is their
///    conjunction, so the target needs features from both source families.
/// Generation avoids transcendentals and rounds pixels to a 1/256 grid, so
/// datasets are byte-identical across platforms for a fixed seed.
struct SynthTaskSpec {
  FeatureFamily family = FeatureFamily::Mixed;
  int64_t channels = 1, height = 16, width = 16;
  int64_t class_count = 4;
  double noise_std = 0.10;
  int64_t n_train = 512, n_val = 256, n_test = 256;
  std::vector<double> class_weights;  // empty = uniform
  uint64_t seed = 1;

  void validate() const {
    require(channels == 1, "synth: only single-channel images are generated");
    require(height >= 12 && width >= 12, "synth: image size too small for patch placement");
    require(class_count == 4, "synth: generator is defined for 4 classes");
    require(n_train > 0 && n_val > 0 && n_test > 0, "synth: split sizes must be positive");
    if (!class_weights.empty())
      require(static_cast<int64_t>(class_weights.size()) == class_count,
              "synth: class_weights length must equal class_count");
  }
};

namespace detail {

constexpr int64_t kStripePeriods[4] = {2, 4, 6, 8};
constexpr double kStripeAmp = 0.5;
constexpr double kPatchAmp = 0.75;
constexpr int64_t kPatchSize = 6;

/// Horizontal stripes: +amp on the first half of each period, -amp on the
/// second, shifted by a random phase.
inline void add_stripes(std::vector<double>& img, int64_t h, int64_t w, int64_t period,
                        int64_t phase, double amp) {
  for (int64_t y = 0; y < h; ++y) {
    double v = (((y + phase) % period) < period / 2) ? amp : -amp;
    for (int64_t x = 0; x < w; ++x) img[static_cast<size_t>(y * w + x)] += v;
  }
}

/// Patch textures: 0 solid+, 1 solid-, 2 fine checker, 3 coarse checker.
inline void add_patch(std::vector<double>& img, int64_t h, int64_t w, int64_t type, int64_t r,
                      int64_t c, double amp) {
  for (int64_t i = 0; i < kPatchSize; ++i) {
    for (int64_t j = 0; j < kPatchSize; ++j) {
      double v;
      switch (type) {
        case 0: v = amp; break;
        case 1: v = -amp; break;
        case 2: v = ((i + j) % 2 == 0) ? amp : -amp; break;
        default: v = (((i / 2) + (j / 2)) % 2 == 0) ? amp : -amp; break;
      }
      img[static_cast<size_t>((r + i) * w + (c + j))] += v;
    }
  }
}

/// Exact per-class counts from (possibly non-uniform) weights.
inline std::vector<int64_t> class_counts(int64_t n, int64_t classes,
                                         const std::vector<double>& weights) {
  std::vector<int64_t> counts(static_cast<size_t>(classes));
  if (weights.empty()) {
    for (int64_t c = 0; c < classes; ++c)
      counts[static_cast<size_t>(c)] = n / classes + (c < n % classes ? 1 : 0);
    return counts;
  }
  double total = 0;
  for (double w : weights) total += w;
  int64_t assigned = 0;
  for (int64_t c = 0; c < classes; ++c) {
    counts[static_cast<size_t>(c)] = static_cast<int64_t>(weights[static_cast<size_t>(c)] / total *
                                                          static_cast<double>(n));
    assigned += counts[static_cast<size_t>(c)];
  }
  for (int64_t c = 0; assigned < n; c = (c + 1) % classes, ++assigned)
    ++counts[static_cast<size_t>(c)];
  return counts;
}

}  // namespace detail

inline LabeledDataset generate_synth(const SynthTaskSpec& spec) {
  spec.validate();
  const int64_t h = spec.height, w = spec.width;
  const int64_t total = spec.n_train + spec.n_val + spec.n_test;
  LabeledDataset ds;
  ds.name = std::string("synth-") + family_name(spec.family);
  ds.class_count = spec.class_count;
  ds.images = Tensor<float>({total, spec.channels, h, w});
  ds.labels.resize(static_cast<size_t>(total));

  Rng rng(spec.seed);
  const int64_t per = spec.channels * h * w;
  int64_t at = 0;
  const struct {
    const char* name;
    int64_t n;
  } split_plan[3] = {{"train", spec.n_train}, {"val", spec.n_val}, {"test", spec.n_test}};

  for (const auto& sp : split_plan) {
    // exact histogram per split, then a seeded shuffle of label order
    std::vector<int64_t> counts = detail::class_counts(sp.n, spec.class_count, spec.class_weights);
    std::vector<int64_t> label_seq;
    for (int64_t c = 0; c < spec.class_count; ++c)
      label_seq.insert(label_seq.end(), static_cast<size_t>(counts[static_cast<size_t>(c)]), c);
    rng.shuffle(label_seq);

    std::vector<int64_t> idx;
    for (int64_t label : label_seq) {
      std::vector<double> img(static_cast<size_t>(per), 0.0);
      int64_t stripe_period, patch_type;
      switch (spec.family) {
        case FeatureFamily::Frequency:
          stripe_period = detail::kStripePeriods[label];
          patch_type = static_cast<int64_t>(rng.below(4));  // distractor
          break;
        case FeatureFamily::Blob:
          patch_type = label;
          stripe_period = detail::kStripePeriods[rng.below(4)];  // distractor
          break;
        case FeatureFamily::Mixed: {
          // class = 2*(period bit) + (patch bit); both attributes informative.
          // The patch bit is fine vs coarse checker: both are zero-mean, so
          // no linear pixel statistic separates them - texture features are
          // required, not just a brightness readout.
          int64_t f = label / 2, g = label % 2;
          stripe_period = f == 0 ? 2 : 6;
          patch_type = g == 0 ? 2 : 3;
          break;
        }
      }
      int64_t phase = static_cast<int64_t>(rng.below(static_cast<uint64_t>(stripe_period)));
      detail::add_stripes(img, h, w, stripe_period, phase, detail::kStripeAmp);
      int64_t pr = static_cast<int64_t>(rng.below(static_cast<uint64_t>(h - detail::kPatchSize + 1)));
      int64_t pc = static_cast<int64_t>(rng.below(static_cast<uint64_t>(w - detail::kPatchSize + 1)));
      detail::add_patch(img, h, w, patch_type, pr, pc, detail::kPatchAmp);
      if (spec.noise_std > 0)
        for (auto& v : img) v += spec.noise_std * rng.normal_ih();
      for (int64_t j = 0; j < per; ++j)
        ds.images[at * per + j] = static_cast<float>(grid256(img[static_cast<size_t>(j)]));
      ds.labels[static_cast<size_t>(at)] = label;
      idx.push_back(at);
      ++at;
    }
    ds.splits.emplace(sp.name, std::move(idx));
  }
  ds.validate();
  return ds;
}

}  // namespace mm
