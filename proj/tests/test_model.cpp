#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iterator>

#include "monet/complexity.hpp"
#include "monet/error.hpp"
#include "monet/model.hpp"
#include "oracles.hpp"

using namespace monet;
namespace fs = std::filesystem;

namespace {

ModelConfig toy() {
  ModelConfig c;
  c.depth = 1;
  c.hidden = 4;
  c.expansion = 1;
  c.shrinkage = 1;
  c.patch_size = 1;
  c.num_classes = 2;
  c.image_height = c.image_width = 4;
  return c;
}

std::string temp_path(const std::string& name) { return (fs::temp_directory_path() / ("monet_test_" + name)).string(); }

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("config validation") {
  CHECK_NOTHROW(toy().validate());
  ModelConfig c = toy();
  c.hidden = 6;
  CHECK_THROWS_AS(c.validate(), ConfigError);  // not divisible by 4
  c = toy();
  c.shrinkage = 3;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = toy();
  c.image_height = 5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = toy();
  c.depth = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = toy();
  c.second_layer = "conv";
  CHECK_THROWS_AS(c.validate(), ConfigError);
  ModelConfig ms = ModelConfig::multi_stage_tiny();
  CHECK_NOTHROW(ms.validate());
  ms.depth += 1;
  CHECK_THROWS_AS(ms.validate(), ConfigError);
  CHECK_THROWS_AS(ModelConfig::preset("huge"), ConfigError);
}

TEST_CASE("config JSON round trip and presets") {
  for (const char* name : {"tiny", "small", "multi-stage-tiny", "multi-stage-small", "cifar-small"}) {
    ModelConfig c = ModelConfig::preset(name);
    CHECK_NOTHROW(c.validate());
    CHECK(ModelConfig::from_json(c.to_json()) == c);
  }
  ModelConfig t = ModelConfig::tiny();
  CHECK(t.depth == 32);
  CHECK(t.hidden == 192);
  CHECK(t.expansion == 3);
  CHECK(t.shrinkage == 4);
  CHECK(t.num_classes == 1000);
  CHECK(t.image_height == 224);
  CHECK_THROWS_AS(ModelConfig::from_json("{\"depth\": \"x\"}"), FormatError);
  CHECK_THROWS_AS(ModelConfig::from_json("not json"), FormatError);
}

TEST_CASE("Tiny parameter count is near 14.0M") {
  const double n = double(complexity::params_closed_form(ModelConfig::tiny()).params_total);
  CHECK(std::abs(n - 14.0e6) / 14.0e6 < 0.03);
}

TEST_CASE("toy model builds and runs") {
  MonetModel m = build(toy(), 1);
  std::mt19937_64 rng(2);
  DenseTensor y = forward(m, oracle::random({3, 4, 4, 3}, rng));
  CHECK(y.shape() == Shape{3, 2});
  CHECK(y.all_finite());
  CHECK_THROWS_AS(forward(m, DenseTensor({1, 8, 8, 3})), GeometryError);
}

TEST_CASE("zero-weight blocks pass the embedding through to the head") {
  ModelConfig c = toy();
  c.depth = 3;
  MonetModel m = build(c, 3);
  for (auto& s : m.stages)
    for (auto& b : s.blocks) {
      for_each_param(b.layer1, "", [](const std::string&, Param& p) { p.value.fill(0); });
      std::visit([](auto& l) { for_each_param(l, "", [](const std::string&, Param& p) { p.value.fill(0); }); },
                 b.layer2);
    }
  std::mt19937_64 rng(4);
  DenseTensor img = oracle::random({2, 4, 4, 3}, rng);
  EvalBackend be;
  DenseTensor expected = classifier_head(be, *m.head, pyramid_embed_forward(be, m.embed, img));
  CHECK(forward(m, img) == expected);
}

TEST_CASE("batch rows are independent") {
  ModelConfig c = toy();
  c.depth = 2;
  c.hidden = 8;
  c.image_height = c.image_width = 8;
  MonetModel m = build(c, 5);
  std::mt19937_64 rng(6);
  DenseTensor one = oracle::random({1, 8, 8, 3}, rng);
  DenseTensor two({2, 8, 8, 3});
  std::copy(one.data().begin(), one.data().end(), two.raw());
  std::copy(one.data().begin(), one.data().end(), two.raw() + one.size());
  DenseTensor y = forward(m, two);
  CHECK(y.at(0, 0) == y.at(1, 0));
  CHECK(y.at(0, 1) == y.at(1, 1));

  DenseTensor batch = oracle::random({5, 8, 8, 3}, rng);
  DenseTensor yb = forward(m, batch);
  for (std::size_t i = 0; i < 5; ++i) {
    DenseTensor single({1, 8, 8, 3}, std::vector<double>(batch.raw() + i * one.size(), batch.raw() + (i + 1) * one.size()));
    DenseTensor ys = forward(m, single);
    for (std::size_t k = 0; k < 2; ++k) CHECK(std::abs(ys[k] - yb.at(i, k)) < 1e-12);
  }
}

TEST_CASE("multi-stage model") {
  ModelConfig c;
  c.depth = 3;
  c.stages = {{8, 1}, {16, 2}};
  c.expansion = 2;
  c.shrinkage = 2;
  c.patch_size = 1;
  c.num_classes = 3;
  c.image_height = c.image_width = 8;
  MonetModel m = build(c, 1);
  REQUIRE(m.stages.size() == 2);
  CHECK(m.stages[0].transition.has_value());
  CHECK_FALSE(m.stages[1].transition.has_value());
  CHECK(m.stages[1].blocks[0].width() == 16);
  std::mt19937_64 rng(1);
  DenseTensor y = forward(m, oracle::random({1, 8, 8, 3}, rng));
  CHECK(y.shape() == Shape{1, 3});
}

TEST_CASE("headless model returns pooled features") {
  ModelConfig c = toy();
  c.num_classes = 0;
  MonetModel m = build(c, 1);
  CHECK_FALSE(m.head.has_value());
  std::mt19937_64 rng(1);
  CHECK(forward(m, oracle::random({2, 4, 4, 3}, rng)).shape() == Shape{2, 4});
}

TEST_CASE("build is deterministic in the seed") {
  MonetModel a = build(toy(), 9), b = build(toy(), 9), c = build(toy(), 10);
  auto pa = a.parameters();
  auto pb = b.parameters();
  auto pc = c.parameters();
  REQUIRE(pa.size() == pb.size());
  bool differs = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].name == pb[i].name);
    CHECK(pa[i].param->value == pb[i].param->value);
    differs = differs || !(pa[i].param->value == pc[i].param->value);
  }
  CHECK(differs);
}

TEST_CASE("checkpoints") {
  ModelConfig c = toy();
  c.channel_mean = {0.1, 0.2, 0.3};
  c.channel_std = {1, 2, 3};
  MonetModel m = build(c, 11);
  const std::string p1 = temp_path("a.ckpt"), p2 = temp_path("b.ckpt");

  SUBCASE("round trip is bit exact") {
    save(m, p1);
    MonetModel back = load(p1);
    CHECK(back.config == m.config);
    auto pa = m.parameters();
    auto pb = back.parameters();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i].param->value == pb[i].param->value);
    std::mt19937_64 rng(1);
    DenseTensor img = oracle::random({1, 4, 4, 3}, rng);
    CHECK(forward(m, img) == forward(back, img));
  }

  SUBCASE("same config and seed give byte-identical files") {
    save(m, p1);
    save(build(c, 11), p2);
    CHECK(slurp(p1) == slurp(p2));
  }

  SUBCASE("truncated file is a format error") {
    save(m, p1);
    const std::string full = slurp(p1);
    for (std::size_t cut : {std::size_t{5}, full.size() / 2, full.size() - 3}) {
      std::ofstream(p2, std::ios::binary) << full.substr(0, cut);
      CHECK_THROWS_AS(load(p2), FormatError);
    }
  }

  SUBCASE("loading into a different architecture names the tensor") {
    save(m, p1);
    ModelConfig wide = c;
    wide.hidden = 8;
    MonetModel other = build(wide, 1);
    MonetModel before = other;
    try {
      load_into(other, p1);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("embed.level0.weight") != std::string::npos);
    }
    // nothing was partially overwritten
    auto pa = other.parameters();
    auto pb = before.parameters();
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i].param->value == pb[i].param->value);
  }

  SUBCASE("missing file") { CHECK_THROWS_AS(load(temp_path("does_not_exist")), FormatError); }

  fs::remove(p1);
  fs::remove(p2);
}
