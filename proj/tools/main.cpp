// medmerge: CLI for two-source conv model merging experiments.
//
// Subcommands: dataset gen|pack, train-source, ft, lpft, medmerge, eval,
// heatmap, dump-activations. Every run echoes its config and seed into the
// summary so results are reproducible from the summary alone.
#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "medmerge/activations.hpp"
#include "medmerge/heatmap.hpp"
#include "medmerge/synth.hpp"
#include "medmerge/train.hpp"

using namespace mm;
namespace fs = std::filesystem;

namespace {

// All training runs use f32, matching the checkpoint payloads they produce.
using Scalar = float;

/// Accumulates the "config key value" echo emitted at the top of every
/// summary; values are formatted once so reruns produce identical text.
struct ConfigEcho {
  std::string text;

  void add(const std::string& key, const std::string& value) {
    text += "config " + key + " " + value + "\n";
  }
  void add(const std::string& key, int64_t value) { add(key, std::to_string(value)); }
  void add(const std::string& key, double value) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    add(key, std::string(buf));
  }
};

void write_summary(const std::string& path, const std::string& body) {
  std::cout << body;
  if (path.empty()) return;
  std::ofstream os(path);
  require(os.good(), "cannot open summary file for writing: " + path);
  os << body;
  require(os.good(), "I/O failure writing " + path);
}

void check_exists(const std::string& path, const char* what) {
  require(fs::exists(path), std::string(what) + " not found: " + path);
}

StageConfig stage_config(uint64_t seed, double lr, int64_t epochs, int64_t batch_size) {
  StageConfig c;
  c.seed = seed;
  c.lr = lr;
  c.epochs = epochs;
  c.batch_size = batch_size;
  return c;
}

std::string metrics_block(double loss, const MetricsReport& rep) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "loss %.17g\n", loss);
  return std::string(buf) + rep.summary();
}

// ---------------------------------------------------------------------------
// dataset gen / pack

struct DatasetGenArgs {
  std::string family = "mixed";
  std::string out;
  uint64_t seed = 1;
  int64_t n_train = 512, n_val = 256, n_test = 256;
  int64_t height = 16, width = 16;
  double noise_std = 0.10;
  std::vector<double> class_weights;
  std::string summary;
};

int run_dataset_gen(const DatasetGenArgs& a) {
  SynthTaskSpec spec;
  spec.family = family_from_name(a.family);
  spec.seed = a.seed;
  spec.n_train = a.n_train;
  spec.n_val = a.n_val;
  spec.n_test = a.n_test;
  spec.height = a.height;
  spec.width = a.width;
  spec.noise_std = a.noise_std;
  spec.class_weights = a.class_weights;
  LabeledDataset ds = generate_synth(spec);
  save_packed(ds, a.out);

  ConfigEcho echo;
  echo.add("subcommand", "dataset gen");
  echo.add("family", a.family);
  echo.add("n_train", a.n_train);
  echo.add("n_val", a.n_val);
  echo.add("n_test", a.n_test);
  echo.add("height", a.height);
  echo.add("width", a.width);
  echo.add("noise_std", a.noise_std);
  for (size_t c = 0; c < a.class_weights.size(); ++c)
    echo.add("class_weight" + std::to_string(c), a.class_weights[c]);
  echo.add("out", a.out);
  std::string body = echo.text + "seed " + std::to_string(a.seed) + "\n";
  body += "dataset " + ds.name + " samples " + std::to_string(ds.size()) + "\n";
  for (const char* s : {"train", "val", "test"}) {
    body += "split " + std::string(s);
    for (int64_t n : ds.class_histogram(s)) body += " " + std::to_string(n);
    body += "\n";
  }
  write_summary(a.summary, body);
  return 0;
}

/// `dataset pack` manifest: line-delimited text, paths relative to the
/// manifest file.
///   name NAME
///   class_count K
///   shape C H W
///   count N
///   images raw_f32_file        (N*C*H*W little-endian f32 values)
///   labels text_file           (N integers, one per line)
///   split NAME text_file       (sample indices, one per line)
int run_dataset_pack(const std::string& manifest_path, const std::string& out,
                     const std::string& summary) {
  check_exists(manifest_path, "manifest");
  std::ifstream is(manifest_path);
  fs::path base = fs::path(manifest_path).parent_path();
  LabeledDataset ds;
  int64_t c = 0, h = 0, w = 0, n = -1;
  std::string line;
  auto resolve = [&](const std::string& rel) { return (base / rel).string(); };
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "name") {
      ls >> ds.name;
    } else if (key == "class_count") {
      ls >> ds.class_count;
    } else if (key == "shape") {
      ls >> c >> h >> w;
    } else if (key == "count") {
      ls >> n;
    } else if (key == "images") {
      require(n > 0 && c > 0, "manifest: count and shape must precede images");
      std::string rel;
      ls >> rel;
      std::string path = resolve(rel);
      check_exists(path, "image file");
      int64_t want = n * c * h * w;
      require(static_cast<int64_t>(fs::file_size(path)) == want * 4,
              "image file size mismatch: expected " + std::to_string(want * 4) + " bytes in " + path);
      ds.images = Tensor<float>({n, c, h, w});
      std::ifstream img(path, std::ios::binary);
      img.read(reinterpret_cast<char*>(ds.images.data.data()), want * 4);
      require(img.good(), "failed reading image file: " + path);
      require(ds.images.all_finite(), "image file contains non-finite values: " + path);
    } else if (key == "labels") {
      std::string rel;
      ls >> rel;
      std::string path = resolve(rel);
      check_exists(path, "label file");
      std::ifstream lab(path);
      int64_t v;
      while (lab >> v) ds.labels.push_back(v);
    } else if (key == "split") {
      std::string sname, rel;
      ls >> sname >> rel;
      std::string path = resolve(rel);
      check_exists(path, "split file");
      std::ifstream sf(path);
      std::vector<int64_t> idx;
      int64_t v;
      while (sf >> v) idx.push_back(v);
      ds.splits.emplace(sname, std::move(idx));
    } else {
      fail("manifest: unknown key '" + key + "'");
    }
  }
  require(ds.size() > 0, "manifest did not define images");
  require(static_cast<int64_t>(ds.labels.size()) == n, "manifest: label count != sample count");
  ds.validate();
  save_packed(ds, out);

  ConfigEcho echo;
  echo.add("subcommand", "dataset pack");
  echo.add("manifest", manifest_path);
  echo.add("out", out);
  std::string body = echo.text + "seed 0\n";
  body += "dataset " + ds.name + " samples " + std::to_string(ds.size()) + "\n";
  write_summary(summary, body);
  return 0;
}

// ---------------------------------------------------------------------------
// training subcommands

struct TrainArgs {
  std::string spec_path, data_path, init_path, out_path, summary;
  uint64_t seed = 1;
  int64_t epochs = 50, batch_size = 64;
  double lr = 1e-4;
  std::string task;
  bool reinit_head = false;
};

void echo_train_common(ConfigEcho& echo, const TrainArgs& a) {
  echo.add("spec", a.spec_path);
  echo.add("data", a.data_path);
  echo.add("epochs", a.epochs);
  echo.add("batch_size", a.batch_size);
  echo.add("lr", a.lr);
  if (!a.out_path.empty()) echo.add("out", a.out_path);
}

void save_result(const ParamTree& tree, const ModelSpec& spec, const TrainArgs& a, Stage stage) {
  if (a.out_path.empty()) return;
  Manifest man;
  man.spec_digest = spec.digest();
  man.source_task = a.task;
  man.seed = a.seed;
  man.stage = stage;
  save_checkpoint(tree, man, a.out_path);
}

int run_train_source_cmd(const TrainArgs& a) {
  check_exists(a.spec_path, "model spec");
  check_exists(a.data_path, "dataset");
  ModelSpec spec = load_model_spec(a.spec_path);
  LabeledDataset ds = load_packed(a.data_path);
  auto [tree, rec] = train_source<Scalar>(spec, ds, stage_config(a.seed, a.lr, a.epochs, a.batch_size));
  save_result(tree, spec, a, Stage::Pretrained);

  ConfigEcho echo;
  echo.add("subcommand", "train-source");
  echo_train_common(echo, a);
  write_summary(a.summary, echo.text + "seed " + std::to_string(a.seed) + "\n" + rec.serialize());
  return 0;
}

int run_ft_cmd(const TrainArgs& a, bool with_lp, int64_t lp_epochs, double lp_lr) {
  check_exists(a.spec_path, "model spec");
  check_exists(a.data_path, "dataset");
  check_exists(a.init_path, "initial checkpoint");
  ModelSpec spec = load_model_spec(a.spec_path);
  LabeledDataset ds = load_packed(a.data_path);
  auto [init, man] = load_checkpoint(a.init_path);

  ParamTree tree;
  RunRecord rec;
  if (with_lp) {
    std::tie(tree, rec) =
        run_lpft<Scalar>(init, spec, ds, stage_config(a.seed, lp_lr, lp_epochs, a.batch_size),
                         stage_config(a.seed, a.lr, a.epochs, a.batch_size));
  } else {
    std::tie(tree, rec) = run_ft<Scalar>(init, spec, ds,
                                         stage_config(a.seed, a.lr, a.epochs, a.batch_size),
                                         a.reinit_head);
  }
  save_result(tree, spec, a, Stage::Finetuned);

  ConfigEcho echo;
  echo.add("subcommand", with_lp ? "lpft" : "ft");
  echo.add("init", a.init_path);
  echo_train_common(echo, a);
  if (with_lp) {
    echo.add("lp_epochs", lp_epochs);
    echo.add("lp_lr", lp_lr);
  } else {
    echo.add("reinit_head", a.reinit_head ? "true" : "false");
  }
  write_summary(a.summary, echo.text + "seed " + std::to_string(a.seed) + "\n" + rec.serialize());
  return 0;
}

// ---------------------------------------------------------------------------
// medmerge pipeline

struct MergeArgs {
  std::vector<std::string> pair;
  std::string spec_path, data_path, out_path, baked_out, weights_out, heatmap_out, summary;
  uint64_t seed = 1;
  int64_t lp_epochs = 50, ft_epochs = 50, batch_size = 64;
  double lp_lr = 1e-4, ft_lr = 1e-5;
  bool ablate_frozen_bn = false;
  std::string zero_src;   // "", "b", or "c"
  std::string baseline;   // "" or "simple-average"
};

int run_medmerge_cmd(const MergeArgs& a) {
  check_exists(a.spec_path, "model spec");
  check_exists(a.data_path, "dataset");
  ModelSpec spec = load_model_spec(a.spec_path);
  LabeledDataset ds = load_packed(a.data_path);

  MergePair pair;
  pair.spec = spec;
  size_t expected = a.zero_src.empty() ? 2 : 1;
  require(a.pair.size() == expected,
          "--pair needs " + std::to_string(expected) + " checkpoint(s) with this configuration, got " +
              std::to_string(a.pair.size()));
  for (const auto& p : a.pair) check_exists(p, "source checkpoint");
  if (a.zero_src.empty()) {
    pair.source_b = load_checkpoint(a.pair[0]).first;
    pair.source_c = load_checkpoint(a.pair[1]).first;
  } else if (a.zero_src == "b") {
    pair.source_b = zero_source<Scalar>(spec);
    pair.source_c = load_checkpoint(a.pair[0]).first;
  } else {
    pair.source_b = load_checkpoint(a.pair[0]).first;
    pair.source_c = zero_source<Scalar>(spec);
  }
  // head shapes may differ across source tasks; replace with target-shaped
  // placeholders so congruence checking sees the merge target's geometry
  pair.source_b = with_fresh_head<Scalar>(pair.source_b, spec, a.seed ^ 0x51u);
  pair.source_c = with_fresh_head<Scalar>(pair.source_c, spec, a.seed ^ 0x52u);
  pair.validate();

  StageConfig lp = stage_config(a.seed, a.lp_lr, a.lp_epochs, a.batch_size);
  StageConfig ft = stage_config(a.seed, a.ft_lr, a.ft_epochs, a.batch_size);

  ConfigEcho echo;
  echo.add("subcommand", "medmerge");
  for (const auto& p : a.pair) echo.add("pair", p);
  if (!a.zero_src.empty()) echo.add("zero_source", a.zero_src);
  if (!a.baseline.empty()) echo.add("baseline", a.baseline);
  echo.add("spec", a.spec_path);
  echo.add("data", a.data_path);
  echo.add("lp_epochs", a.lp_epochs);
  echo.add("ft_epochs", a.ft_epochs);
  echo.add("lp_lr", a.lp_lr);
  echo.add("ft_lr", a.ft_lr);
  echo.add("batch_size", a.batch_size);
  echo.add("ablate_frozen_bn", a.ablate_frozen_bn ? "true" : "false");
  if (!a.out_path.empty()) echo.add("out", a.out_path);
  std::string body = echo.text + "seed " + std::to_string(a.seed) + "\n";

  Manifest man;
  man.spec_digest = spec.digest();
  man.seed = a.seed;

  if (a.baseline == "simple-average") {
    ParamTree avg = simple_average<Scalar>(pair, a.seed ^ 0x9E37u);
    auto [tree, rec] = run_lpft<Scalar>(avg, spec, ds, lp, ft);
    rec.stage_tag = "simple-average-lpft";
    body += rec.serialize();
    if (!a.baked_out.empty()) {
      man.stage = Stage::Baked;
      save_checkpoint(avg, man, a.baked_out);
    }
    if (!a.out_path.empty()) {
      man.stage = Stage::Finetuned;
      save_checkpoint(tree, man, a.out_path);
    }
    write_summary(a.summary, body);
    return 0;
  }
  require(a.baseline.empty(), "unknown --baseline: " + a.baseline);

  MedMergeResult res = run_medmerge<Scalar>(pair, ds, lp, ft, a.ablate_frozen_bn);
  body += res.lp_record.serialize();
  body += res.ft_record.serialize();
  {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "aggregate_mean_w %.17g\n", aggregate_mean_w(res.weights));
    body += buf;
  }
  if (!a.weights_out.empty()) save_merge_weights(res.weights, a.weights_out);
  if (!a.heatmap_out.empty()) export_heatmap(res.weights, spec, a.heatmap_out);
  if (!a.baked_out.empty()) {
    man.stage = Stage::Baked;
    save_checkpoint(res.baked_tree, man, a.baked_out);
  }
  if (!a.out_path.empty()) {
    man.stage = Stage::Finetuned;
    save_checkpoint(res.final_tree, man, a.out_path);
  }
  write_summary(a.summary, body);
  return 0;
}

// ---------------------------------------------------------------------------
// analysis subcommands

int run_eval_cmd(const std::string& ckpt, const std::string& spec_path, const std::string& data_path,
                 const std::string& split, const std::string& summary) {
  check_exists(ckpt, "checkpoint");
  check_exists(spec_path, "model spec");
  check_exists(data_path, "dataset");
  ModelSpec spec = load_model_spec(spec_path);
  auto [tree, man] = load_checkpoint_for(spec, ckpt);
  LabeledDataset ds = load_packed(data_path);
  Graph<Scalar> g(spec);
  g.load(tree);
  auto [loss, rep] = evaluate_graph(g, ds, split);

  ConfigEcho echo;
  echo.add("subcommand", "eval");
  echo.add("ckpt", ckpt);
  echo.add("spec", spec_path);
  echo.add("data", data_path);
  echo.add("split", split);
  write_summary(summary,
                echo.text + "seed " + std::to_string(man.seed) + "\n" + metrics_block(loss, rep));
  return 0;
}

int run_heatmap_cmd(const std::string& weights, const std::string& spec_path,
                    const std::string& out, const std::string& summary) {
  check_exists(weights, "merge weights");
  check_exists(spec_path, "model spec");
  ModelSpec spec = load_model_spec(spec_path);
  MergeWeights mw = load_merge_weights(weights);
  export_heatmap(mw, spec, out);

  ConfigEcho echo;
  echo.add("subcommand", "heatmap");
  echo.add("weights", weights);
  echo.add("spec", spec_path);
  echo.add("out", out);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "aggregate_mean_w %.17g\n", aggregate_mean_w(mw));
  write_summary(summary, echo.text + "seed 0\n" + buf);
  return 0;
}

int run_dump_activations_cmd(const std::string& ckpt, const std::string& spec_path,
                             const std::string& data_path, const std::string& split, int64_t index,
                             const std::vector<std::string>& layers, const std::string& out,
                             const std::string& summary) {
  check_exists(ckpt, "checkpoint");
  check_exists(spec_path, "model spec");
  check_exists(data_path, "dataset");
  ModelSpec spec = load_model_spec(spec_path);
  auto [tree, man] = load_checkpoint_for(spec, ckpt);
  LabeledDataset ds = load_packed(data_path);
  const auto& idx = ds.split(split);
  require(index >= 0 && index < static_cast<int64_t>(idx.size()),
          "sample index " + std::to_string(index) + " out of range for split '" + split + "' (" +
              std::to_string(idx.size()) + " samples)");
  auto [x, y] = gather_batch<Scalar>(ds, idx, static_cast<size_t>(index), 1);

  Graph<Scalar> g(spec);
  g.load(tree);
  dump_activations(g, x, layers, out);

  ConfigEcho echo;
  echo.add("subcommand", "dump-activations");
  echo.add("ckpt", ckpt);
  echo.add("data", data_path);
  echo.add("split", split);
  echo.add("index", index);
  for (const auto& l : layers) echo.add("layer", l);
  echo.add("out", out);
  write_summary(summary, echo.text + "seed " + std::to_string(man.seed) + "\nlabel " +
                             std::to_string(y[0]) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-source conv model merging: training, merging, and analysis"};
  app.require_subcommand(1);

  // dataset gen | pack
  auto* dataset = app.add_subcommand("dataset", "Generate or pack datasets");
  dataset->require_subcommand(1);
  DatasetGenArgs ga;
  auto* gen = dataset->add_subcommand("gen", "Generate a synthetic two-source task");
  gen->add_option("--family", ga.family, "frequency | blob | mixed")->capture_default_str();
  gen->add_option("--out", ga.out, "Output .mmds path")->required();
  gen->add_option("--seed", ga.seed, "Generation seed")->capture_default_str();
  gen->add_option("--n-train", ga.n_train)->capture_default_str();
  gen->add_option("--n-val", ga.n_val)->capture_default_str();
  gen->add_option("--n-test", ga.n_test)->capture_default_str();
  gen->add_option("--height", ga.height)->capture_default_str();
  gen->add_option("--width", ga.width)->capture_default_str();
  gen->add_option("--noise-std", ga.noise_std)->capture_default_str();
  gen->add_option("--class-weights", ga.class_weights, "Per-class sampling weights");
  gen->add_option("--summary", ga.summary, "Also write the summary to this file");

  std::string pack_manifest, pack_out, pack_summary;
  auto* pack = dataset->add_subcommand("pack", "Pack raw arrays into a .mmds file");
  pack->add_option("--manifest", pack_manifest, "Manifest text file")->required();
  pack->add_option("--out", pack_out, "Output .mmds path")->required();
  pack->add_option("--summary", pack_summary);

  // train-source
  TrainArgs ts;
  ts.lr = 1e-3;
  ts.epochs = 30;
  auto* tsrc = app.add_subcommand("train-source", "Train a source model from scratch");
  tsrc->add_option("--spec", ts.spec_path, "Model spec file")->required();
  tsrc->add_option("--data", ts.data_path, "Packed .mmds dataset")->required();
  tsrc->add_option("--out", ts.out_path, "Output .mmck checkpoint");
  tsrc->add_option("--seed", ts.seed)->capture_default_str();
  tsrc->add_option("--epochs", ts.epochs)->capture_default_str();
  tsrc->add_option("--lr", ts.lr)->capture_default_str();
  tsrc->add_option("--batch-size", ts.batch_size)->capture_default_str();
  tsrc->add_option("--task", ts.task, "Task name recorded in the checkpoint manifest");
  tsrc->add_option("--summary", ts.summary);

  // ft
  TrainArgs fa;
  fa.lr = 1e-5;
  auto* ft = app.add_subcommand("ft", "Full fine-tuning from a checkpoint");
  ft->add_option("--init", fa.init_path, "Initial .mmck checkpoint")->required();
  ft->add_option("--spec", fa.spec_path)->required();
  ft->add_option("--data", fa.data_path)->required();
  ft->add_option("--out", fa.out_path);
  ft->add_option("--seed", fa.seed)->capture_default_str();
  ft->add_option("--epochs", fa.epochs)->capture_default_str();
  ft->add_option("--lr", fa.lr)->capture_default_str();
  ft->add_option("--batch-size", fa.batch_size)->capture_default_str();
  ft->add_flag("--reinit-head", fa.reinit_head, "Replace the head before fine-tuning");
  ft->add_option("--summary", fa.summary);

  // lpft
  TrainArgs la;
  la.lr = 1e-5;
  int64_t lp_epochs = 50;
  double lp_lr = 1e-4;
  auto* lpft = app.add_subcommand("lpft", "Linear probe then full fine-tune");
  lpft->add_option("--init", la.init_path, "Initial .mmck checkpoint")->required();
  lpft->add_option("--spec", la.spec_path)->required();
  lpft->add_option("--data", la.data_path)->required();
  lpft->add_option("--out", la.out_path);
  lpft->add_option("--seed", la.seed)->capture_default_str();
  lpft->add_option("--lp-epochs", lp_epochs)->capture_default_str();
  lpft->add_option("--lp-lr", lp_lr)->capture_default_str();
  lpft->add_option("--epochs", la.epochs, "Fine-tune epochs")->capture_default_str();
  lpft->add_option("--lr", la.lr, "Fine-tune learning rate")->capture_default_str();
  lpft->add_option("--batch-size", la.batch_size)->capture_default_str();
  lpft->add_option("--summary", la.summary);

  // medmerge
  MergeArgs ma;
  auto* mm_cmd = app.add_subcommand("medmerge", "Kernel-level merge pipeline (LP, bake, FT)");
  mm_cmd->add_option("--pair", ma.pair, "Source checkpoints (b then c)")->expected(1, 2)->required();
  mm_cmd->add_option("--spec", ma.spec_path)->required();
  mm_cmd->add_option("--data", ma.data_path)->required();
  mm_cmd->add_option("--out", ma.out_path, "Final fine-tuned .mmck");
  mm_cmd->add_option("--baked-out", ma.baked_out, "Post-LP baked .mmck");
  mm_cmd->add_option("--weights-out", ma.weights_out, "Learnt merge logits (.mmw)");
  mm_cmd->add_option("--heatmap-out", ma.heatmap_out, "Depth-wise merge coefficient CSV");
  mm_cmd->add_option("--seed", ma.seed)->capture_default_str();
  mm_cmd->add_option("--lp-epochs", ma.lp_epochs)->capture_default_str();
  mm_cmd->add_option("--ft-epochs", ma.ft_epochs)->capture_default_str();
  mm_cmd->add_option("--lp-lr", ma.lp_lr)->capture_default_str();
  mm_cmd->add_option("--ft-lr", ma.ft_lr)->capture_default_str();
  mm_cmd->add_option("--batch-size", ma.batch_size)->capture_default_str();
  mm_cmd->add_flag("--ablate-frozen-bn", ma.ablate_frozen_bn,
                   "Freeze BN at its mean init during the LP stage");
  mm_cmd->add_option("--zero-source", ma.zero_src, "Replace source b or c with an all-zero backbone")
      ->check(CLI::IsMember({"b", "c"}));
  mm_cmd->add_option("--baseline", ma.baseline, "simple-average: fixed w=0.5 merge + LP-FT")
      ->check(CLI::IsMember({"simple-average"}));
  mm_cmd->add_option("--summary", ma.summary);

  // eval
  std::string ev_ckpt, ev_spec, ev_data, ev_split = "test", ev_summary;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
  ev->add_option("--ckpt", ev_ckpt)->required();
  ev->add_option("--spec", ev_spec)->required();
  ev->add_option("--data", ev_data)->required();
  ev->add_option("--split", ev_split)->capture_default_str();
  ev->add_option("--summary", ev_summary);

  // heatmap
  std::string hm_weights, hm_spec, hm_out, hm_summary;
  auto* hm = app.add_subcommand("heatmap", "Export the depth-wise merge coefficient CSV");
  hm->add_option("--weights", hm_weights, "Merge weights (.mmw)")->required();
  hm->add_option("--spec", hm_spec)->required();
  hm->add_option("--out", hm_out, "Output CSV path")->required();
  hm->add_option("--summary", hm_summary);

  // dump-activations
  std::string da_ckpt, da_spec, da_data, da_split = "test", da_out, da_summary;
  int64_t da_index = 0;
  std::vector<std::string> da_layers;
  auto* da = app.add_subcommand("dump-activations", "Dump per-layer activations to .mmac");
  da->add_option("--ckpt", da_ckpt)->required();
  da->add_option("--spec", da_spec)->required();
  da->add_option("--data", da_data)->required();
  da->add_option("--split", da_split)->capture_default_str();
  da->add_option("--index", da_index, "Sample index within the split")->capture_default_str();
  da->add_option("--layers", da_layers, "Layer names (default: all)");
  da->add_option("--out", da_out, "Output .mmac path")->required();
  da->add_option("--summary", da_summary);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return run_dataset_gen(ga);
    if (pack->parsed()) return run_dataset_pack(pack_manifest, pack_out, pack_summary);
    if (tsrc->parsed()) return run_train_source_cmd(ts);
    if (ft->parsed()) return run_ft_cmd(fa, false, 0, 0);
    if (lpft->parsed()) return run_ft_cmd(la, true, lp_epochs, lp_lr);
    if (mm_cmd->parsed()) return run_medmerge_cmd(ma);
    if (ev->parsed()) return run_eval_cmd(ev_ckpt, ev_spec, ev_data, ev_split, ev_summary);
    if (hm->parsed()) return run_heatmap_cmd(hm_weights, hm_spec, hm_out, hm_summary);
    if (da->parsed())
      return run_dump_activations_cmd(da_ckpt, da_spec, da_data, da_split, da_index, da_layers,
                                      da_out, da_summary);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::cerr << "error: no subcommand selected\n";
  return 1;
}
