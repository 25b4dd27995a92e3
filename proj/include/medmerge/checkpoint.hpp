#pragma once

#include <cinttypes>
#include <string>

#include "medmerge/io.hpp"
#include "medmerge/model_spec.hpp"

namespace mm {

enum class Stage { Pretrained, Lp, Baked, Finetuned };

inline const char* stage_name(Stage s) {
  switch (s) {
    case Stage::Pretrained: return "pretrained";
    case Stage::Lp: return "lp";
    case Stage::Baked: return "baked";
    case Stage::Finetuned: return "finetuned";
  }
  fail("bad stage enum");
}
inline Stage stage_from_name(const std::string& s) {
  if (s == "pretrained") return Stage::Pretrained;
  if (s == "lp") return Stage::Lp;
  if (s == "baked") return Stage::Baked;
  if (s == "finetuned") return Stage::Finetuned;
  fail("unknown training stage tag: " + s);
}

struct Manifest {
  uint64_t spec_digest = 0;
  std::string source_task;
  uint64_t seed = 0;
  Stage stage = Stage::Pretrained;
};

inline std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, v);
  return buf;
}

/// `.mmck` checkpoint: manifest + all parameters and BN running statistics,
/// bit-exact round trip.
constexpr char kCheckpointMagic[4] = {'M', 'M', 'C', 'K'};

inline void save_checkpoint(const ParamTree& tree, const Manifest& man, const std::string& path) {
  TensorBlob blob;
  std::ostringstream meta;
  meta << "format_version 1\n"
       << "spec_digest " << hex64(man.spec_digest) << "\n"
       << "source_task " << man.source_task << "\n"
       << "seed " << man.seed << "\n"
       << "stage " << stage_name(man.stage) << "\n";
  blob.meta = meta.str();
  blob.tensors = tree;
  write_blob_file(path, kCheckpointMagic, blob);
}

inline std::pair<ParamTree, Manifest> load_checkpoint(const std::string& path) {
  TensorBlob blob = read_blob_file(path, kCheckpointMagic, "checkpoint");
  auto kv = parse_meta(blob.meta);
  require(meta_get(kv, "format_version", "checkpoint") == "1",
          "checkpoint: unsupported manifest format_version");
  Manifest man;
  man.spec_digest = std::stoull(meta_get(kv, "spec_digest", "checkpoint"), nullptr, 16);
  man.source_task = meta_get(kv, "source_task", "checkpoint");
  man.seed = std::stoull(meta_get(kv, "seed", "checkpoint"));
  man.stage = stage_from_name(meta_get(kv, "stage", "checkpoint"));
  return {std::move(blob.tensors), man};
}

/// Load and verify the checkpoint was built from the given spec.
inline std::pair<ParamTree, Manifest> load_checkpoint_for(const ModelSpec& spec,
                                                          const std::string& path) {
  auto [tree, man] = load_checkpoint(path);
  require(man.spec_digest == spec.digest(),
          "checkpoint " + path + " was built for a different model spec (digest " +
              hex64(man.spec_digest) + ", expected " + hex64(spec.digest()) + ")");
  return {std::move(tree), man};
}

}  // namespace mm
