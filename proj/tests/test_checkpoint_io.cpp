#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "medmerge/checkpoint.hpp"
#include "medmerge/model_build.hpp"
#include "medmerge/rng.hpp"

using namespace mm;
namespace fs = std::filesystem;

namespace {

std::string tmp_path(const std::string& name) {
  return (fs::temp_directory_path() / ("mmck_test_" + name)).string();
}

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(is), {});
}

ParamTree random_tree(Rng& rng) {
  ParamTree tree;
  int64_t entries = 1 + static_cast<int64_t>(rng.below(6));
  for (int64_t i = 0; i < entries; ++i) {
    Shape shape;
    int64_t rank = 1 + static_cast<int64_t>(rng.below(3));
    for (int64_t r = 0; r < rank; ++r) shape.push_back(1 + static_cast<int64_t>(rng.below(5)));
    std::string name = "t" + std::to_string(i);
    if (rng.below(2)) {
      Tensor<float> t(shape);
      for (auto& v : t.data) v = static_cast<float>(rng.uniform(-10, 10));
      tree.emplace(name, AnyTensor(std::move(t)));
    } else {
      Tensor<double> t(shape);
      for (auto& v : t.data) v = rng.uniform(-10, 10);
      tree.emplace(name, AnyTensor(std::move(t)));
    }
  }
  return tree;
}

}  // namespace

TEST_CASE("checkpoint: save/load round trip is bit-exact, including mixed dtypes") {
  ModelSpec spec = smallnet_spec();
  ParamTree tree = init_param_tree<float>(spec, 5);
  tree.emplace("extra_f64", AnyTensor(Tensor<double>::full({3}, 0.1)));
  Manifest man;
  man.spec_digest = spec.digest();
  man.source_task = "synth-frequency";
  man.seed = 5;
  man.stage = Stage::Pretrained;
  std::string path = tmp_path("roundtrip.mmck");
  save_checkpoint(tree, man, path);
  auto [back, man2] = load_checkpoint(path);
  CHECK(trees_bit_equal(tree, back));
  CHECK(back.at("extra_f64").dtype() == Dtype::F64);
  CHECK(back.at("conv0.weight").dtype() == Dtype::F32);
  CHECK(man2.spec_digest == man.spec_digest);
  CHECK(man2.source_task == man.source_task);
  CHECK(man2.seed == man.seed);
  CHECK(man2.stage == Stage::Pretrained);
  fs::remove(path);
}

TEST_CASE("checkpoint: re-save of an unchanged tree is byte-identical") {
  ModelSpec spec = smallnet_spec();
  ParamTree tree = init_param_tree<float>(spec, 9);
  Manifest man;
  man.spec_digest = spec.digest();
  man.stage = Stage::Lp;
  std::string p1 = tmp_path("det1.mmck"), p2 = tmp_path("det2.mmck");
  save_checkpoint(tree, man, p1);
  save_checkpoint(tree, man, p2);
  CHECK(slurp(p1) == slurp(p2));
  fs::remove(p1);
  fs::remove(p2);
}

TEST_CASE("checkpoint: load-of-save identity over random trees") {
  Rng rng(77);
  for (int trial = 0; trial < 25; ++trial) {
    ParamTree tree = random_tree(rng);
    Manifest man;
    man.seed = static_cast<uint64_t>(trial);
    std::string path = tmp_path("prop.mmck");
    save_checkpoint(tree, man, path);
    auto [back, man2] = load_checkpoint(path);
    CHECK(trees_bit_equal(tree, back));
    fs::remove(path);
  }
}

TEST_CASE("checkpoint: truncation is detected, no partial tree") {
  ModelSpec spec = smallnet_spec();
  ParamTree tree = init_param_tree<float>(spec, 1);
  Manifest man;
  man.spec_digest = spec.digest();
  std::string path = tmp_path("trunc.mmck");
  save_checkpoint(tree, man, path);
  std::string bytes = slurp(path);
  std::ofstream os(path, std::ios::binary);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 257));
  os.close();
  CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("truncated"), Error);
  fs::remove(path);
}

TEST_CASE("checkpoint: any single-byte corruption of manifest or index is detected") {
  ModelSpec spec = smallnet_spec(2);
  ParamTree tree;
  tree.emplace("conv0.weight", AnyTensor(Tensor<float>::full({2, 1, 3, 3}, 1.5f)));
  Manifest man;
  man.spec_digest = spec.digest();
  std::string path = tmp_path("corrupt.mmck");
  save_checkpoint(tree, man, path);
  std::string bytes = slurp(path);
  // locate the header region: everything before the payload length field
  size_t meta_len, index_len;
  std::memcpy(&meta_len, bytes.data() + 8, 8);
  size_t index_off = 8 + 8 + meta_len + 8;
  std::memcpy(&index_len, bytes.data() + 8 + 8 + meta_len, 8);
  size_t header_end = index_off + index_len;  // crc follows
  int detected = 0, total = 0;
  for (size_t pos = 16; pos < header_end; pos += 3) {
    std::string mutated = bytes;
    mutated[pos] = static_cast<char>(mutated[pos] ^ 0x20);
    std::ofstream os(path, std::ios::binary);
    os.write(mutated.data(), static_cast<std::streamsize>(mutated.size()));
    os.close();
    ++total;
    try {
      load_checkpoint(path);
    } catch (const Error&) {
      ++detected;
    }
  }
  CHECK(total > 10);
  CHECK(detected == total);
  fs::remove(path);
}

TEST_CASE("checkpoint: digest mismatch against a different spec is an explicit error") {
  ModelSpec spec = smallnet_spec();
  ParamTree tree = init_param_tree<float>(spec, 3);
  Manifest man;
  man.spec_digest = spec.digest();
  std::string path = tmp_path("digest.mmck");
  save_checkpoint(tree, man, path);
  ModelSpec other = smallnet_spec();
  other.blocks[0].out_channels = 12;
  CHECK_THROWS_WITH_AS(load_checkpoint_for(other, path), doctest::Contains("different model spec"),
                       Error);
  // and the matching spec loads fine
  auto [back, man2] = load_checkpoint_for(spec, path);
  CHECK(trees_bit_equal(tree, back));
  fs::remove(path);
}

TEST_CASE("checkpoint: unknown stage tag and bad magic are rejected") {
  CHECK_THROWS_AS(stage_from_name("warmup"), Error);
  std::string path = tmp_path("magic.mmck");
  std::ofstream os(path, std::ios::binary);
  os << "NOTACHECKPOINTFILE____________________";
  os.close();
  CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("bad magic"), Error);
  fs::remove(path);
}
