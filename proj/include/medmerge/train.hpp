#pragma once

#include <chrono>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "medmerge/adamw.hpp"
#include "medmerge/dataset.hpp"
#include "medmerge/loss.hpp"
#include "medmerge/merge.hpp"
#include "medmerge/metrics.hpp"

namespace mm {

struct StageConfig {
  double lr = 1e-4;
  int64_t epochs = 50;
  int64_t batch_size = 64;
  AdamWConfig opt;  // lr field below wins
  uint64_t seed = 1;

  StageConfig with(double lr_, int64_t epochs_) const {
    StageConfig c = *this;
    c.lr = lr_;
    c.epochs = epochs_;
    return c;
  }
};

/// Reference regimes: LP at 1e-4 and FT at 1e-5, 50 epochs each.
inline StageConfig lp_config(uint64_t seed, int64_t epochs = 50) {
  StageConfig c;
  c.lr = 1e-4;
  c.epochs = epochs;
  c.seed = seed;
  return c;
}
inline StageConfig ft_config(uint64_t seed, int64_t epochs = 50) {
  StageConfig c;
  c.lr = 1e-5;
  c.epochs = epochs;
  c.seed = seed;
  return c;
}
/// Source pretraining regime: a desk-scale stand-in for starting from a
/// large pretrained source model.
inline StageConfig source_config(uint64_t seed, int64_t epochs = 30) {
  StageConfig c;
  c.lr = 1e-3;
  c.epochs = epochs;
  c.seed = seed;
  return c;
}

struct EpochRow {
  int64_t epoch = 0;
  double train_loss = 0, val_loss = 0, val_macro_f1 = 0;
};

struct RunRecord {
  std::string stage_tag;
  std::vector<EpochRow> epochs;
  int64_t best_epoch = -1;
  double best_val_macro_f1 = 0;
  double elapsed_seconds = 0;
  std::string checkpoint_path;
  std::string merge_weights_path;

  /// Line-delimited text: one epoch per line, then a summary block.
  /// elapsed_seconds is wall-clock and excluded so reruns are bit-identical.
  std::string serialize() const {
    std::string out;
    char buf[256];
    for (const auto& e : epochs) {
      std::snprintf(buf, sizeof(buf), "epoch %lld train_loss %.17g val_loss %.17g val_macro_f1 %.17g\n",
                    static_cast<long long>(e.epoch), e.train_loss, e.val_loss, e.val_macro_f1);
      out += buf;
    }
    std::snprintf(buf, sizeof(buf), "summary stage %s best_epoch %lld best_val_macro_f1 %.17g\n",
                  stage_tag.c_str(), static_cast<long long>(best_epoch), best_val_macro_f1);
    out += buf;
    if (!checkpoint_path.empty()) out += "checkpoint " + checkpoint_path + "\n";
    if (!merge_weights_path.empty()) out += "merge_weights " + merge_weights_path + "\n";
    return out;
  }

  void append_to(RunRecord& other) const {
    other.epochs.insert(other.epochs.end(), epochs.begin(), epochs.end());
    other.elapsed_seconds += elapsed_seconds;
  }
};

/// Snapshot/restore of all mutable graph state (parameter values and BN
/// running statistics) for best-epoch selection.
template <class S>
std::vector<Tensor<S>> snapshot_state(Graph<S>& g) {
  std::vector<Tensor<S>> snap;
  for (auto* p : g.parameters()) snap.push_back(p->value);
  for (auto& blk : g.blocks()) {
    if (blk.bn) {
      snap.push_back(blk.bn->running_mean);
      snap.push_back(blk.bn->running_var);
    }
  }
  return snap;
}

template <class S>
void restore_state(Graph<S>& g, const std::vector<Tensor<S>>& snap) {
  size_t i = 0;
  for (auto* p : g.parameters()) p->value = snap[i++];
  for (auto& blk : g.blocks()) {
    if (blk.bn) {
      blk.bn->running_mean = snap[i++];
      blk.bn->running_var = snap[i++];
    }
  }
  require(i == snap.size(), "restore_state: snapshot size mismatch");
}

/// Eval-mode pass over a split: mean loss, predictions, metrics.
template <class S>
std::pair<double, MetricsReport> evaluate_graph(Graph<S>& g, const LabeledDataset& ds,
                                                const std::string& split,
                                                int64_t batch_size = 64) {
  const auto& idx = ds.split(split);
  require(!idx.empty(), "evaluate: split '" + split + "' is empty");
  require(ds.class_count == g.spec().classes,
          "evaluate: dataset has " + std::to_string(ds.class_count) + " classes, model head has " +
              std::to_string(g.spec().classes));
  IntTensor preds, labels;
  double loss_sum = 0;
  for (size_t from = 0; from < idx.size(); from += static_cast<size_t>(batch_size)) {
    auto [x, y] = gather_batch<S>(ds, idx, from, static_cast<size_t>(batch_size));
    Tensor<S> logits = g.forward(x, false);
    loss_sum += static_cast<double>(cross_entropy(logits, y)) * static_cast<double>(y.size());
    const int64_t c = logits.shape[1];
    for (int64_t s = 0; s < logits.shape[0]; ++s) {
      int64_t best = 0;
      for (int64_t j = 1; j < c; ++j)
        if (logits[s * c + j] > logits[s * c + best]) best = j;
      preds.push_back(best);
      labels.push_back(y[static_cast<size_t>(s)]);
    }
  }
  double loss = loss_sum / static_cast<double>(idx.size());
  return {loss, compute_metrics(preds, labels, ds.class_count)};
}

/// Generic stage loop: epochs of AdamW over the train split, per-epoch
/// validation, best-validation-macro-F1 state carried forward.
template <class S>
RunRecord train_graph(Graph<S>& g, const LabeledDataset& ds, const StageConfig& cfg,
                      const std::string& tag) {
  require(!ds.split("train").empty(), "train: empty train split");
  require(ds.class_count == g.spec().classes, "train: class count mismatch with model head");
  auto t0 = std::chrono::steady_clock::now();
  AdamWConfig ocfg = cfg.opt;
  ocfg.lr = cfg.lr;
  AdamW<S> opt(g.parameters(), ocfg);

  RunRecord rec;
  rec.stage_tag = tag;
  std::vector<Tensor<S>> best;
  for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto order = epoch_order(ds, "train", cfg.seed, epoch, true);
    double loss_sum = 0;
    for (size_t from = 0; from < order.size(); from += static_cast<size_t>(cfg.batch_size)) {
      auto [x, y] = gather_batch<S>(ds, order, from, static_cast<size_t>(cfg.batch_size));
      g.zero_grad();
      Tensor<S> logits = g.forward(x, true);
      Tensor<S> dlogits;
      S loss = cross_entropy(logits, y, &dlogits);
      g.backward(dlogits);
      opt.step();
      loss_sum += static_cast<double>(loss) * static_cast<double>(y.size());
    }
    EpochRow row;
    row.epoch = epoch;
    row.train_loss = loss_sum / static_cast<double>(order.size());
    auto [vloss, vmetrics] = evaluate_graph(g, ds, "val", cfg.batch_size);
    row.val_loss = vloss;
    row.val_macro_f1 = vmetrics.macro_f1;
    rec.epochs.push_back(row);
    if (rec.best_epoch < 0 || row.val_macro_f1 > rec.best_val_macro_f1) {
      rec.best_epoch = epoch;
      rec.best_val_macro_f1 = row.val_macro_f1;
      best = snapshot_state(g);
    }
  }
  restore_state(g, best);
  rec.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

/// Full training of a source model from seeded init.
template <class S>
std::pair<ParamTree, RunRecord> train_source(const ModelSpec& spec, const LabeledDataset& ds,
                                             const StageConfig& cfg) {
  require(ds.size() > 0, "train_source: empty dataset");
  auto [graph, tree] = build_model<S>(spec, cfg.seed);
  RunRecord rec = train_graph(graph, ds, cfg, "source");
  return {graph.dump(), rec};
}

/// Full fine-tuning: everything trainable, BN in batch-stats mode.
template <class S>
std::pair<ParamTree, RunRecord> run_ft(const ParamTree& init, const ModelSpec& spec,
                                       const LabeledDataset& ds, const StageConfig& cfg,
                                       bool reinit_head) {
  Graph<S> g(spec);
  g.load(reinit_head ? with_fresh_head<S>(init, spec, cfg.seed ^ 0x9E37u) : init);
  g.set_backbone_trainable(true);
  g.set_bn_frozen(false);
  RunRecord rec = train_graph(g, ds, cfg, "ft");
  return {g.dump(), rec};
}

/// Plain linear probe: backbone and BN fully frozen, fresh head trained.
template <class S>
std::pair<ParamTree, RunRecord> run_lp(const ParamTree& init, const ModelSpec& spec,
                                       const LabeledDataset& ds, const StageConfig& cfg) {
  Graph<S> g(spec);
  g.load(with_fresh_head<S>(init, spec, cfg.seed ^ 0x9E37u));
  g.set_backbone_trainable(false);
  g.set_bn_frozen(true);
  RunRecord rec = train_graph(g, ds, cfg, "lp");
  return {g.dump(), rec};
}

/// LP-FT baseline: probe, then fine-tune keeping the probed head.
template <class S>
std::pair<ParamTree, RunRecord> run_lpft(const ParamTree& init, const ModelSpec& spec,
                                         const LabeledDataset& ds, const StageConfig& lp_cfg,
                                         const StageConfig& ft_cfg) {
  auto [lp_tree, lp_rec] = run_lp<S>(init, spec, ds, lp_cfg);
  auto [ft_tree, ft_rec] = run_ft<S>(lp_tree, spec, ds, ft_cfg, false);
  RunRecord rec = lp_rec;
  rec.stage_tag = "lpft";
  ft_rec.append_to(rec);
  rec.best_epoch = ft_rec.best_epoch;
  rec.best_val_macro_f1 = ft_rec.best_val_macro_f1;
  return {std::move(ft_tree), rec};
}

struct MedMergeResult {
  ParamTree final_tree;
  ParamTree baked_tree;
  MergeWeights weights;
  RunRecord lp_record;
  RunRecord ft_record;
};

/// The full pipeline: LP over the virtual merged graph (logits, BN, head
/// train; source kernels frozen), bake the learnt combination, fine-tune.
template <class S>
MedMergeResult run_medmerge(const MergePair& pair, const LabeledDataset& ds,
                            const StageConfig& lp_cfg, const StageConfig& ft_cfg,
                            bool frozen_bn_ablation = false) {
  pair.validate();
  MergeWeights mw = init_merge_weights(pair.spec);
  Graph<S> vg = make_virtual_merged_graph<S>(pair, mw, lp_cfg.seed ^ 0x9E37u);
  if (frozen_bn_ablation) vg.set_bn_frozen(true);

  MedMergeResult res;
  res.lp_record = train_graph(vg, ds, lp_cfg, frozen_bn_ablation ? "merged-lp-frozen-bn" : "merged-lp");
  res.weights = extract_merge_weights(vg);
  res.baked_tree = bake<S>(pair, res.weights, vg.dump());

  auto [ft_tree, ft_rec] = run_ft<S>(res.baked_tree, pair.spec, ds, ft_cfg, false);
  res.final_tree = std::move(ft_tree);
  res.ft_record = std::move(ft_rec);
  return res;
}

}  // namespace mm
