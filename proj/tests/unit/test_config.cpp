#include <gtest/gtest.h>

#include <psvf/config_io.hpp>
#include <psvf/error.hpp>

using namespace psvf;

template <class T>
T round_trip(const T& v) {
  T out{};
  merge_json_text(to_json_text(v), out);
  return out;
}

TEST(ConfigJson, DefaultsRoundTrip) {
  EXPECT_EQ(round_trip(MelConfig{}), MelConfig{});
  EXPECT_EQ(round_trip(TdnnConfig{}), TdnnConfig{});
  EXPECT_EQ(round_trip(AugmentPolicy{}), AugmentPolicy{});
  EXPECT_EQ(round_trip(TrainConfig{}), TrainConfig{});
}

TEST(ConfigJson, ChangedValuesRoundTrip) {
  TrainConfig t;
  t.adam.lr = 3.5e-4;
  t.batch_size = 7;
  t.seed = 0xFFFFFFFFFFFFULL;
  t.augment.speed_factors = {0.95, 1.05};
  t.augment.stem_probability = 0.25;
  t.validation_fraction = 0.0;
  t.prefix_cache_mb = 12;
  EXPECT_EQ(round_trip(t), t);
  TdnnConfig m;
  m.blocks = {{24, 8, 3, 1}, {8, 8, 1, 1}};
  m.embed_dim = 4;
  m.frozen_blocks = 1;
  EXPECT_EQ(round_trip(m), m);
  MelConfig c;
  c.cmvn = false;
  c.f_max = 7000;
  EXPECT_EQ(round_trip(c), c);
}

TEST(ConfigJson, PartialMergeKeepsOtherFields) {
  TrainConfig t;
  merge_json_text(R"({"lr": 0.01, "augment": {"stem_probability": 0.1}})", t);
  EXPECT_EQ(t.adam.lr, 0.01);
  EXPECT_EQ(t.augment.stem_probability, 0.1);
  EXPECT_EQ(t.batch_size, TrainConfig{}.batch_size);
  EXPECT_EQ(t.augment.speed_factors, AugmentPolicy{}.speed_factors);
}

TEST(ConfigJson, Errors) {
  TrainConfig t;
  EXPECT_THROW(merge_json_text(R"({"learning_rate": 1})", t), ConfigError);
  EXPECT_THROW(merge_json_text(R"({"batch_size": "big"})", t), ConfigError);
  EXPECT_THROW(merge_json_text("[1,2]", t), ConfigError);
  EXPECT_THROW(merge_json_text("{", t), ConfigError);
  MelConfig m;
  EXPECT_THROW(merge_json_text(R"({"n_mels": 1.5})", m), ConfigError);
}

TEST(ConfigJson, TextIsStable) {
  EXPECT_EQ(to_json_text(TrainConfig{}), to_json_text(TrainConfig{}));
  EXPECT_EQ(to_json_text(TrainConfig{}).find('\n'), std::string::npos);
}
