// SPDX-License-Identifier: Apache-2.0
//
// Training regimes: single, joint, self-training, pre-training and
// fine-tuning, with best-validation-perplexity snapshot selection and
// train/test curve logging.
//
// Run-config file: `key = value` lines ('#' starts a comment). Keys and
// defaults are those printed by TrainRunConfig{}.to_text().
//
// Output directory (when checkpoint_dir is set):
//   run.cfg             the effective run config
//   snapshot_<iter>.ckpt  every snapshot that improved validation perplexity
//   best.ckpt           the selected snapshot
//   ledger.txt / ledger.json
//   curves.csv          iter,train_ppl,lr[,acc1,acc20]
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "retro/dataset.hpp"
#include "retro/nn/checkpoint.hpp"
#include "retro/nn/params.hpp"
#include "retro/nn/vocab.hpp"
#include "retro/optim.hpp"

namespace retro::train {

/// Scalar type of every training run.
using Real = float;

enum class Strategy { Single, Joint, Self, Pretrain, Finetune };

std::string to_string(Strategy s);
Strategy strategy_from_string(const std::string& s);

struct TrainRunConfig {
  Strategy strategy = Strategy::Single;

  int num_layers = 2;
  int model_dim = 64;
  int num_heads = 4;
  int ffn_dim = 128;
  int max_seq_len = 64;
  double dropout = 0.1;
  double label_smoothing = 0.0;

  std::uint64_t iterations = 2000;
  std::size_t batch_tokens = 1024;
  std::uint64_t val_interval = 100;
  optim::ScheduleKind schedule = optim::ScheduleKind::Cyclic;
  double peak_lr = 1e-3;
  double min_lr = 1e-5;
  std::uint64_t warmup = 0;  // 0: 2% of iterations
  std::uint64_t period = 0;  // 0: 10% of iterations
  double clip_norm = 1.0;    // <= 0 disables clipping
  std::uint64_t seed = 1;

  /// Test-set 1-best/20-best evaluation every `test_interval` iterations
  /// (a multiple of val_interval; 0 disables).
  std::uint64_t test_interval = 0;
  std::size_t test_samples = 100;
  int test_beam = 20;

  std::filesystem::path checkpoint_dir;
  std::filesystem::path init_checkpoint;

  nn::ModelConfig model(int vocab_size) const;
  /// Fine-tuning always uses the inverse square-root schedule.
  optim::Schedule make_schedule() const;
  void validate() const;

  std::string to_text() const;
  static TrainRunConfig parse(std::string_view text);
  static TrainRunConfig load(const std::filesystem::path& path);
};

struct SnapshotEntry {
  std::uint64_t iteration = 0;
  double perplexity = 0.0;
  std::string checkpoint;  // empty when the snapshot was not written
};

struct SnapshotLedger {
  std::vector<SnapshotEntry> entries;
  std::optional<std::size_t> best;

  /// Ties keep the earlier entry as best. Returns true when `perplexity`
  /// becomes the new best.
  bool record(std::uint64_t iteration, double perplexity, std::string checkpoint = {});
  const SnapshotEntry& best_entry() const;

  std::string to_text() const;
  std::string to_json() const;
};

struct CurveRow {
  std::uint64_t iteration = 0;
  double train_ppl = 0.0;
  double lr = 0.0;
  std::optional<double> acc1;
  std::optional<double> acc20;
};

struct CurveLog {
  std::vector<CurveRow> rows;

  /// Throws Config unless iterations strictly increase.
  void add(CurveRow row);
  bool has_test_columns() const;
  std::string to_csv() const;
  static CurveLog parse_csv(std::string_view text);
};

/// Number of samples each run read, by corpus of origin.
struct DataAudit {
  std::size_t target = 0;
  std::size_t augment = 0;
  std::size_t pseudo = 0;
};

struct TrainResult {
  nn::ModelConfig model;
  nn::Vocabulary vocab;
  nn::ParameterSet<Real> best;
  nn::ParameterSet<Real> last;
  SnapshotLedger ledger;
  CurveLog curves;
  DataAudit audit;
  std::size_t train_size = 0;
};

struct TrainHooks {
  /// Called once with the parameters the first update will start from.
  std::function<void(const nn::ParameterSet<Real>&)> on_start;
  /// Called after each validation.
  std::function<void(const SnapshotEntry&, const CurveRow&)> on_validation;
};

/// Vocabulary over every token of the given training samples.
nn::Vocabulary build_vocabulary(const std::vector<data::ReactionSample>& a,
                                const std::vector<data::ReactionSample>& b = {});

TrainResult train_single(const TrainRunConfig& cfg, const nn::Vocabulary& vocab, const data::DatasetSplit& target,
                         const TrainHooks& hooks = {});
/// Re-checks that augment train shares no product with any target split
/// (LeakDetected otherwise).
TrainResult train_joint(const TrainRunConfig& cfg, const nn::Vocabulary& vocab, const data::DatasetSplit& target,
                        const std::vector<data::ReactionSample>& augment_train, const TrainHooks& hooks = {});
TrainResult train_self(const TrainRunConfig& cfg, const nn::Vocabulary& vocab, const data::DatasetSplit& target,
                       const std::vector<data::ReactionSample>& pseudo_train, const TrainHooks& hooks = {});
/// Trains on augment train, selects by augment val; never reads target data.
TrainResult pretrain(const TrainRunConfig& cfg, const nn::Vocabulary& vocab, const data::DatasetSplit& augment,
                     const TrainHooks& hooks = {});
/// Starts bit-exactly from `init` with fresh Adam moments. Throws
/// VersionMismatch unless the checkpoint's config and vocabulary equal the
/// run's.
TrainResult finetune(const TrainRunConfig& cfg, const nn::Vocabulary& vocab, const nn::Checkpoint<Real>& init,
                     const data::DatasetSplit& target, const TrainHooks& hooks = {});

struct PseudoLabel {
  data::ReactionSample sample;
  bool truncated = false;
};

/// Greedy decode of every product; outputs are kept verbatim even when they
/// are not valid SMILES. Outputs that hit the length limit are flagged.
std::vector<PseudoLabel> pseudo_label(const nn::ParameterSet<Real>& params, const nn::ModelConfig& cfg,
                                      const nn::Vocabulary& vocab, const std::vector<std::string>& products);

/// Pseudo-label file: `product<TAB>reactants[<TAB>truncated]` per line.
std::string format_pseudo(const std::vector<PseudoLabel>& labels);
std::vector<PseudoLabel> parse_pseudo(std::string_view text);

/// exp(token-weighted mean NLL) in evaluation mode.
double validate_perplexity(const nn::ParameterSet<Real>& params, const nn::ModelConfig& cfg,
                           const nn::Vocabulary& vocab, const std::vector<data::ReactionSample>& samples);

}  // namespace retro::train
