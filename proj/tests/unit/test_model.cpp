#include <sstream>

#include <doctest.h>

#include "alignreid/model.hpp"
#include "support.hpp"

using namespace areid;

TEST_CASE("default backbone maps 3x56x56 to 32x7x7") {
  const ModelConfig cfg;
  CHECK(cfg.rows() == 7);
  CHECK(cfg.channels() == 32);
  const Model model(cfg, 1);
  testing::Rng rng(51);
  Tape t;
  const auto out = model.forward(t, model.bind(t, false), t.constant(testing::random_array(rng, {2, 3, 56, 56})),
                                 true, false);
  CHECK(t.value(out.feature_map).shape() == Shape{2, 32, 7, 7});
  CHECK(t.value(out.global).shape() == Shape{2, 32});
  CHECK(t.value(*out.local).shape() == Shape{14, 8});
  CHECK_FALSE(out.logits.has_value());
}

TEST_CASE("global feature is the spatial mean of the feature map") {
  ModelConfig cfg;
  cfg.input_size = 16;
  cfg.channel_plan = {4, 5};
  cfg.strides = {2, 1};
  cfg.local_channels = 2;
  const Model model(cfg, 2);
  testing::Rng rng(52);
  Tape t;
  const auto out = model.forward(t, model.bind(t, false), t.constant(testing::random_array(rng, {3, 3, 16, 16})),
                                 true, false);
  const Array& fm = t.value(out.feature_map);
  const Array& g = t.value(out.global);
  const std::size_t h = fm.dim(2), w = fm.dim(3);
  for (std::size_t n = 0; n < 3; ++n)
    for (std::size_t c = 0; c < 5; ++c) {
      double acc = 0;
      for (std::size_t i = 0; i < h * w; ++i) acc += fm[(n * 5 + c) * h * w + i];
      CHECK(g.at(n, c) == doctest::Approx(acc / (h * w)).epsilon(1e-12));
    }

  // Local stripe r of image n is the 1x1 reduction of the row-mean over C.
  const Array& local = t.value(*out.local);
  const Array& lw = model.params().get("local.weight");
  const Array& lb = model.params().get("local.bias");
  for (std::size_t n = 0; n < 3; ++n)
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t k = 0; k < 2; ++k) {
        double acc = lb[k];
        for (std::size_t c = 0; c < 5; ++c) {
          double row = 0;
          for (std::size_t x = 0; x < w; ++x) row += fm[((n * 5 + c) * h + r) * w + x];
          acc += lw[k * 5 + c] * row / w;
        }
        CHECK(local.at(n * h + r, k) == doctest::Approx(acc).epsilon(1e-12));
      }
}

TEST_CASE("embed matches the graph forward") {
  ModelConfig cfg;
  cfg.input_size = 12;
  cfg.channel_plan = {3, 4};
  cfg.strides = {2, 1};
  cfg.local_channels = 2;
  cfg.num_identities = 5;
  const Model model(cfg, 3);
  testing::Rng rng(53);
  const Array images = testing::random_array(rng, {4, 3, 12, 12});
  const auto e = embed(model, images, true);
  Tape t;
  const auto out = model.forward(t, model.bind(t), t.constant(images), true, true);
  CHECK(e.global == t.value(out.global));
  CHECK(e.local->shape() == Shape{4, 6, 2});
  CHECK(e.local->raw() == t.value(*out.local).raw());
  CHECK(t.value(*out.logits).shape() == Shape{4, 5});
}

TEST_CASE("initialization is a function of the seed") {
  const ModelConfig cfg;
  CHECK(Model(cfg, 9).params() == Model(cfg, 9).params());
  CHECK_FALSE(Model(cfg, 9).params() == Model(cfg, 10).params());
}

TEST_CASE("config validation") {
  ModelConfig c;
  c.local_channels = 64;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = ModelConfig{};
  c.strides = {2, 2};
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = ModelConfig{};
  c.num_identities = 1;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("wrong input extent names the expected shape") {
  const Model model(ModelConfig{}, 1);
  Tape t;
  try {
    model.forward(t, model.bind(t), t.constant(Array({1, 3, 32, 32})), false, false);
    FAIL("accepted 32x32");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("[N,3,56,56]") != std::string::npos);
  }
}

TEST_CASE("config round trip and checkpoint shape checks") {
  ModelConfig c;
  c.channel_plan = {4, 8, 8};
  c.strides = {2, 2, 1};
  c.local_channels = 4;
  c.num_identities = 7;
  KeyValueConfig kv;
  c.to_keyvalue(kv);
  const auto back = ModelConfig::from_keyvalue(kv);
  CHECK(back.channel_plan == c.channel_plan);
  CHECK(back.strides == c.strides);
  CHECK(back.num_identities == 7);

  const Model m(c, 4);
  CHECK_NOTHROW(Model(c, m.params()));
  ModelConfig other = c;
  other.num_identities = 0;
  CHECK_THROWS_AS(Model(other, m.params()), std::invalid_argument);
}
