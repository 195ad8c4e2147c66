// SPDX-License-Identifier: Apache-2.0
//
// End-to-end toy replication: synthesize corpora, cleanse, then train and
// evaluate the four strategies for every seed and tabulate n-best accuracy.
// Seeds run concurrently when more than one worker thread is allowed.
//
// Config file: `key = value` lines. Pipeline keys are listed by
// PipelineConfig{}.to_text(); any other key is a run-config key shared by
// every training run (strategy, seed, iterations, val_interval and the path
// keys are set per run and may not appear).
//
// Output directory layout:
//   pipeline.cfg
//   data/target/{train,val,test}.rsmi, data/augment/{train,val,test}.rsmi
//   data/augment_clean.rsmi, data/cleanse_report.{txt,json}, data/vocab.txt
//   seed_<s>/<run>/...          one trainer output directory per run
//   seed_<s>/pseudo.tsv
//   seed_<s>/predictions_<strategy>.txt, seed_<s>/classwise_<strategy>.txt
//   seed_<s>/comparison.{txt,csv}
//   comparison.{txt,csv}        mean over seeds
#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "retro/dataset.hpp"
#include "retro/decode.hpp"
#include "retro/trainer.hpp"

namespace retro::pipeline {

struct PipelineConfig {
  data::SynthConfig synth{.injected_overlaps = 100};
  std::vector<std::uint64_t> seeds{1, 2, 3};
  train::TrainRunConfig shared{.peak_lr = 4e-3};

  /// Every strategy gets the same total number of updates.
  std::uint64_t single_iterations = 4000;
  std::uint64_t joint_iterations = 4000;
  std::uint64_t self_iterations = 4000;
  std::uint64_t pretrain_iterations = 3000;
  std::uint64_t finetune_iterations = 1000;
  /// Validations per run; val_interval = iterations / validations.
  std::uint64_t validations = 10;

  int beam = 50;
  std::vector<int> ns = decode::kDefaultNs;

  void validate() const;
  std::string to_text() const;
  static PipelineConfig parse(std::string_view text);
  static PipelineConfig load(const std::filesystem::path& path);
};

/// Strategy rows in table order.
inline const std::vector<std::string> kStrategyRows = {"single", "joint", "self", "pretrain+finetune"};

using ComparisonTable = std::vector<std::pair<std::string, decode::AccuracyTable>>;

struct PipelineResult {
  data::CleanseReport cleanse;
  std::vector<ComparisonTable> per_seed;
  ComparisonTable mean;
};

using Logger = std::function<void(const std::string&)>;

PipelineResult pipeline_replay(const PipelineConfig& cfg, const std::filesystem::path& out_dir,
                               const Logger& log = {});

/// Row-wise mean of tables sharing strategies and n values.
ComparisonTable mean_table(const std::vector<ComparisonTable>& tables);

}  // namespace retro::pipeline
