#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "fskd/data/synthetic.hpp"
#include "fskd/io/checkpoint.hpp"
#include "fskd/train/trainer.hpp"

using namespace fskd;
namespace fs = std::filesystem;

namespace {

std::string read_bytes(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is);
  return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

BackboneConfig small_config() {
  BackboneConfig cfg;
  cfg.block_channel_widths = {8, 16};
  cfg.blocks_per_stage = 1;
  cfg.embedding_dim = 16;
  cfg.input_size = 16;
  return cfg;
}

}  // namespace

TEST_CASE("checkpoint round trips") {
  auto dir = fs::temp_directory_path() / "fskd_ckpt_test";
  fs::create_directories(dir);
  const std::string p1 = (dir / "a.ckpt").string();
  const std::string p2 = (dir / "b.ckpt").string();

  BackboneConfig cfg = small_config();
  Backbone model(cfg, 3);
  MarginHeadParams head(16, 10, 32.0, 0.2, 4);
  SgdState opt(0.1, 0.9, 1e-4);
  std::vector<Tensor> params = model.parameters();
  params.push_back(head.W);
  opt.bind(params);
  for (auto& v : opt.velocity)
    for (auto& x : v) x = 0.25;

  SECTION("save -> load -> save is byte-identical") {
    Checkpoint ckpt = make_checkpoint(model, head, &opt, "rngstate123", 77);
    save_checkpoint(ckpt, p1);
    Checkpoint loaded = load_checkpoint(p1);
    save_checkpoint(loaded, p2);
    REQUIRE(read_bytes(p1) == read_bytes(p2));
    REQUIRE(loaded.step == 77);
    REQUIRE(loaded.rng_state == "rngstate123");
    REQUIRE(loaded.config == cfg);
    REQUIRE(loaded.head_scale == 32.0);
    REQUIRE(loaded.head_margin == 0.2);
  }

  SECTION("restore reproduces parameters, buffers and optimizer state") {
    Checkpoint ckpt = make_checkpoint(model, head, &opt, "s", 5);
    save_checkpoint(ckpt, p1);
    Checkpoint loaded = load_checkpoint(p1);

    Backbone other(cfg, 999);  // different init
    MarginHeadParams other_head(16, 10, 64.0, 0.35, 999);
    SgdState other_opt(0.1, 0.9, 1e-4);
    restore_checkpoint(loaded, other, other_head, &other_opt);
    auto a = model.named_parameters();
    auto b = other.named_parameters();
    for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a[i].second.data() == b[i].second.data());
    REQUIRE(other_head.W.data() == head.W.data());
    REQUIRE(other_head.margin == 0.2);
    REQUIRE(other_opt.velocity == opt.velocity);
    auto ba = model.named_buffers();
    auto bb = other.named_buffers();
    for (std::size_t i = 0; i < ba.size(); ++i) REQUIRE(*ba[i].second == *bb[i].second);
  }

  SECTION("restore rejects mismatched configs") {
    Checkpoint ckpt = make_checkpoint(model, head, nullptr, "", 0);
    BackboneConfig other_cfg = cfg;
    other_cfg.embedding_dim = 32;
    Backbone other(other_cfg, 1);
    MarginHeadParams oh(32, 10, 64.0, 0.35, 1);
    REQUIRE_THROWS_AS(restore_checkpoint(ckpt, other, oh), ConfigError);
  }

  SECTION("corrupted magic rejected") {
    Checkpoint ckpt = make_checkpoint(model, head, nullptr, "", 0);
    save_checkpoint(ckpt, p1);
    std::fstream f(p1, std::ios::in | std::ios::out | std::ios::binary);
    f.write("XXXXXXXX", 8);
    f.close();
    REQUIRE_THROWS_AS(load_checkpoint(p1), DataError);
  }

  SECTION("checkpoint round trip preserves eval accuracy exactly") {
    Dataset ds = make_digit_dataset(40, 16, 9);
    const double before = eval_classification(model, head, ds, 2);
    Checkpoint ckpt = make_checkpoint(model, head, nullptr, "", 0);
    save_checkpoint(ckpt, p1);
    Checkpoint loaded = load_checkpoint(p1);
    Backbone restored = backbone_from_checkpoint(loaded);
    MarginHeadParams rhead = head_from_checkpoint(loaded);
    REQUIRE(eval_classification(restored, rhead, ds, 2) == before);
  }

  fs::remove_all(dir);
}
