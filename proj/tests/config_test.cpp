#include <gtest/gtest.h>

#include "hitok/codec_io.hpp"
#include "hitok/config.hpp"
#include "hitok/io.hpp"

namespace hitok {
namespace {

RunConfig load(const std::string& name) {
  return parse_run_config(io::read_file(std::string(HITOK_SOURCE_DIR) + "/configs/" + name));
}

TEST(Config, EmptyDocumentGivesDefaults) {
  const auto c = parse_run_config("{}");
  EXPECT_EQ(c.hierarchy.input, (Dims3{16, 32, 32}));
  EXPECT_EQ(c.hierarchy.layers.size(), 3u);
  EXPECT_EQ(c.tokenizer_train.steps, 2000u);
  EXPECT_EQ(c.tokenizer_train.batch_size, 4u);
  EXPECT_DOUBLE_EQ(c.tokenizer_train.entropy_weight, 0.1);
  EXPECT_DOUBLE_EQ(c.tokenizer_train.progressive_boundary, 0.3);
  EXPECT_DOUBLE_EQ(c.sampling.cfg_scale, 7.5);
  EXPECT_DOUBLE_EQ(c.generator_train.cond_dropout, 0.1);
  EXPECT_EQ(c.tokenizer_train.layer_weight_rule, LayerWeightRule::kInverseCount);
  EXPECT_EQ(c.generator_train.layer_weight_rule, LayerWeightRule::kEqual);
}

TEST(Config, RoundTripsThroughJson) {
  auto c = parse_run_config(R"({"tokenizer_train": {"steps": 12, "lr": 0.01}, "sampling": {"top_k": 5}})");
  EXPECT_EQ(c.tokenizer_train.steps, 12u);
  const auto again = run_config_from_json(to_json(c));
  EXPECT_EQ(to_json(again), to_json(c));
}

TEST(Config, UnknownKeysRejected) {
  EXPECT_THROW(parse_run_config(R"({"hierarchy": {"inputs": [1, 2, 3]}})"), UsageError);
  EXPECT_THROW(parse_run_config(R"({"extra": 1})"), UsageError);
  EXPECT_THROW(parse_run_config(R"({"hierarchy": {"stages": [{"channels": 8, "stride": 2}]}})"), UsageError);
}

TEST(Config, InvalidValuesRejected) {
  EXPECT_THROW(parse_run_config("{not json"), UsageError);
  EXPECT_THROW(parse_run_config(R"({"tokenizer_train": {"steps": 0}})"), UsageError);
  EXPECT_THROW(parse_run_config(R"({"tokenizer_train": {"steps": "many"}})"), UsageError);
  EXPECT_THROW(parse_run_config(R"({"generator_train": {"cond_dropout": 2}})"), UsageError);
  EXPECT_THROW(parse_run_config(R"({"hierarchy": {"mask_strategy": "blur"}})"), UsageError);
  EXPECT_THROW(parse_run_config(R"({"hierarchy": {"layers": [{"quant_dim": 10, "latent": [2, 4, 4]}]}})"), UsageError);
  EXPECT_THROW(parse_run_config(R"({"sampling": {"temperature": 0}})"), UsageError);
  EXPECT_THROW(parse_run_config(R"({"generator_train": {"layer_weight_rule": "log"}})"), UsageError);
  EXPECT_THROW(parse_run_config(R"({"generator_train": {"layer_weight_rule": 1}})"), UsageError);
  EXPECT_THROW(parse_run_config(R"({"tokenizer_train": {"recon_mse_weight": -1}})"), UsageError);
  EXPECT_THROW(parse_run_config(R"({"generator": {"rope_dims": [12, 10, 8]}})"), UsageError);
}

TEST(Config, MaskStrategyNames) {
  EXPECT_EQ(parse_mask_strategy("none"), MaskStrategy::kNone);
  EXPECT_EQ(parse_mask_strategy("repeat"), MaskStrategy::kRepeatPrev);
  EXPECT_EQ(parse_mask_strategy("zero"), MaskStrategy::kZero);
  EXPECT_EQ(parse_mask_strategy("learned"), MaskStrategy::kLearned);
  EXPECT_THROW(parse_mask_strategy("x"), UsageError);
}

TEST(BundledConfigs, Desk) {
  const auto c = load("desk.json");
  EXPECT_EQ(to_json(c), to_json(RunConfig{}));
}

TEST(BundledConfigs, Table3) {
  const auto c = load("table3.json");
  EXPECT_EQ(c.hierarchy.total_tokens(), 2448u);
  EXPECT_NEAR(compression_ratio(c.hierarchy.input, c.hierarchy.total_tokens()), 1713.36, 0.05);
  EXPECT_NEAR(bits_per_pixel(c.hierarchy), 0.010204, 5e-7);
}

TEST(BundledConfigs, SingleLayer) {
  const auto c = load("single_layer.json");
  EXPECT_EQ(c.hierarchy.main_latent(), (Dims3{8, 17, 17}));
  EXPECT_EQ(c.hierarchy.total_tokens(), 2312u);
}

}  // namespace
}  // namespace hitok
