// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>

#include "retro/error.hpp"
#include "retro/io.hpp"
#include "retro/pipeline.hpp"

namespace retro::pipeline {
namespace {

PipelineConfig tiny() {
  PipelineConfig c = PipelineConfig::parse(
      "target_train = 60\ntarget_val = 12\ntarget_test = 12\n"
      "augment_train = 120\naugment_val = 12\naugment_test = 12\n"
      "injected_overlaps = 5\nseeds = 7\n"
      "single_iterations = 10\njoint_iterations = 10\nself_iterations = 10\n"
      "pretrain_iterations = 10\nfinetune_iterations = 10\nvalidations = 2\n"
      "num_layers = 1\nmodel_dim = 16\nnum_heads = 2\nffn_dim = 32\nbatch_tokens = 300\n");
  return c;
}

TEST(PipelineConfig, TextRoundTripAndDefaults) {
  const PipelineConfig d;
  EXPECT_EQ(d.synth.target_counts.train, 2000u);
  EXPECT_EQ(d.synth.augment_counts.train, 20000u);
  EXPECT_EQ(d.seeds, (std::vector<std::uint64_t>{1, 2, 3}));
  EXPECT_EQ(d.ns, decode::kDefaultNs);
  EXPECT_NO_THROW(d.validate());
  EXPECT_EQ(PipelineConfig::parse(d.to_text()).to_text(), d.to_text());

  const PipelineConfig t = tiny();
  EXPECT_EQ(t.shared.model_dim, 16);
  EXPECT_EQ(t.seeds, (std::vector<std::uint64_t>{7}));
  EXPECT_EQ(PipelineConfig::parse(t.to_text()).to_text(), t.to_text());
  EXPECT_EQ(PipelineConfig::parse("seeds = 1, 2,3\n").seeds, (std::vector<std::uint64_t>{1, 2, 3}));
}

TEST(PipelineConfig, RejectsBadInput) {
  for (const char* text : {"seed = 3\n", "iterations = 5\n", "val_interval = 5\n", "checkpoint_dir = x\n",
                           "seeds = 1,x\n", "beam = many\n", "no_such_key = 1\n", "model_dim\n"}) {
    EXPECT_THROW(PipelineConfig::parse(text), Error) << text;
  }
  PipelineConfig c;
  c.ns = {1, 60};
  EXPECT_THROW(c.validate(), Error);
  c = PipelineConfig{};
  c.seeds.clear();
  EXPECT_THROW(c.validate(), Error);
  c = PipelineConfig{};
  c.finetune_iterations = 5;
  EXPECT_THROW(c.validate(), Error);
  c = PipelineConfig{};
  c.shared.num_heads = 5;
  EXPECT_THROW(c.validate(), Error);
}

TEST(PipelineMean, AveragesRowWise) {
  auto table = [](double a, double b) {
    decode::AccuracyTable t{{1, 5}, {a, b}, 10};
    return ComparisonTable{{"single", t}, {"joint", t}};
  };
  const auto m = mean_table({table(0.1, 0.5), table(0.3, 0.9)});
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m[1].first, "joint");
  EXPECT_DOUBLE_EQ(m[0].second.accuracy[0], 0.2);
  EXPECT_DOUBLE_EQ(m[0].second.accuracy[1], 0.7);
  EXPECT_EQ(m[0].second.samples, 20u);
  auto other = table(0.1, 0.5);
  other[1].first = "self";
  EXPECT_THROW(mean_table({table(0.1, 0.5), other}), Error);
  EXPECT_TRUE(mean_table({}).empty());
}

TEST(PipelineReplay, WritesTableAndArtifacts) {
  const auto dir = std::filesystem::temp_directory_path() / "retro_pipeline_test";
  std::filesystem::remove_all(dir);
  const auto result = pipeline_replay(tiny(), dir);
  EXPECT_EQ(result.cleanse.input_count, result.cleanse.removed_count + result.cleanse.output_count);
  EXPECT_GE(result.cleanse.removed_count, 5u);
  ASSERT_EQ(result.mean.size(), kStrategyRows.size());
  for (std::size_t i = 0; i < kStrategyRows.size(); ++i) {
    EXPECT_EQ(result.mean[i].first, kStrategyRows[i]);
    EXPECT_EQ(result.mean[i].second.ns, decode::kDefaultNs);
    EXPECT_EQ(result.mean[i].second.samples, 12u);
  }
  const std::string csv = io::read_file(dir / "comparison.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "strategy,top1,top3,top5,top10,top20,top50");
  for (const char* f : {"pipeline.cfg", "data/vocab.txt", "data/cleanse_report.json", "data/augment_clean.rsmi",
                        "seed_7/pseudo.tsv", "seed_7/pretrain/best.ckpt", "seed_7/finetune/ledger.txt",
                        "seed_7/self/curves.csv", "seed_7/predictions_pretrain_finetune.txt",
                        "seed_7/classwise_single.txt", "seed_7/comparison.txt"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  }
  EXPECT_EQ(io::read_file(dir / "seed_7" / "comparison.csv"), csv);
}

}  // namespace
}  // namespace retro::pipeline
