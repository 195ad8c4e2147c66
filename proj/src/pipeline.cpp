// SPDX-License-Identifier: Apache-2.0
#include "retro/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <mutex>
#include <set>
#include <sstream>

#include "retro/error.hpp"
#include "retro/io.hpp"
#include "retro/parallel.hpp"

namespace retro::pipeline {

namespace {

const std::set<std::string> kPerRunKeys = {"strategy", "seed", "iterations", "val_interval", "checkpoint_dir",
                                           "init_checkpoint"};

template <class U>
U parse_number(const std::string& key, const std::string& text) {
  U value{};
  const auto r = std::from_chars(text.data(), text.data() + text.size(), value);
  if (r.ec != std::errc() || r.ptr != text.data() + text.size()) {
    throw Error(ErrorKind::Config, "bad value '" + text + "' for " + key);
  }
  return value;
}

template <class U>
std::vector<U> parse_list(const std::string& key, const std::string& text) {
  std::vector<U> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = text.find(',', start);
    std::string item = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    item.erase(0, item.find_first_not_of(' '));
    item.erase(item.find_last_not_of(' ') + 1);
    out.push_back(parse_number<U>(key, item));
    if (comma == std::string::npos) return out;
    start = comma + 1;
  }
}

template <class U>
std::string join(const std::vector<U>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + std::to_string(items[i]);
  return out;
}

}  // namespace

void PipelineConfig::validate() const {
  auto bad = [](const std::string& m) { throw Error(ErrorKind::Config, m); };
  if (seeds.empty()) bad("at least one seed is required");
  if (validations < 1) bad("validations must be at least 1");
  for (std::uint64_t n : {single_iterations, joint_iterations, self_iterations, pretrain_iterations,
                          finetune_iterations}) {
    if (n < validations) bad("every run needs at least `validations` iterations");
  }
  if (ns.empty()) bad("ns must not be empty");
  for (int n : ns) {
    if (n < 1 || n > beam) bad("every n must be within 1..beam");
  }
  train::TrainRunConfig probe = shared;
  probe.iterations = validations;
  probe.val_interval = 1;
  probe.validate();
}

std::string PipelineConfig::to_text() const {
  std::ostringstream out;
  out << "synth_seed = " << synth.seed << "\n"
      << "target_templates = " << join(synth.target_templates) << "\n"
      << "augment_templates = " << join(synth.augment_templates) << "\n"
      << "target_train = " << synth.target_counts.train << "\n"
      << "target_val = " << synth.target_counts.val << "\n"
      << "target_test = " << synth.target_counts.test << "\n"
      << "augment_train = " << synth.augment_counts.train << "\n"
      << "augment_val = " << synth.augment_counts.val << "\n"
      << "augment_test = " << synth.augment_counts.test << "\n"
      << "target_fragments = " << synth.target_fragments << "\n"
      << "augment_fragments = " << synth.augment_fragments << "\n"
      << "injected_overlaps = " << synth.injected_overlaps << "\n"
      << "seeds = " << join(seeds) << "\n"
      << "single_iterations = " << single_iterations << "\n"
      << "joint_iterations = " << joint_iterations << "\n"
      << "self_iterations = " << self_iterations << "\n"
      << "pretrain_iterations = " << pretrain_iterations << "\n"
      << "finetune_iterations = " << finetune_iterations << "\n"
      << "validations = " << validations << "\n"
      << "beam = " << beam << "\n"
      << "ns = " << join(ns) << "\n";
  for (const auto& [key, value] : io::parse_key_values(shared.to_text())) {
    if (!kPerRunKeys.contains(key)) out << key << " = " << value << "\n";
  }
  return out.str();
}

PipelineConfig PipelineConfig::parse(std::string_view text) {
  PipelineConfig c;
  std::string shared_text;
  for (const auto& [key, value] : io::parse_key_values(text)) {
    auto size = [&] { return parse_number<std::size_t>(key, value); };
    auto iterations = [&] { return parse_number<std::uint64_t>(key, value); };
    if (key == "synth_seed") c.synth.seed = iterations();
    else if (key == "target_templates") c.synth.target_templates = parse_list<int>(key, value);
    else if (key == "augment_templates") c.synth.augment_templates = parse_list<int>(key, value);
    else if (key == "target_train") c.synth.target_counts.train = size();
    else if (key == "target_val") c.synth.target_counts.val = size();
    else if (key == "target_test") c.synth.target_counts.test = size();
    else if (key == "augment_train") c.synth.augment_counts.train = size();
    else if (key == "augment_val") c.synth.augment_counts.val = size();
    else if (key == "augment_test") c.synth.augment_counts.test = size();
    else if (key == "target_fragments") c.synth.target_fragments = size();
    else if (key == "augment_fragments") c.synth.augment_fragments = size();
    else if (key == "injected_overlaps") c.synth.injected_overlaps = size();
    else if (key == "seeds") c.seeds = parse_list<std::uint64_t>(key, value);
    else if (key == "single_iterations") c.single_iterations = iterations();
    else if (key == "joint_iterations") c.joint_iterations = iterations();
    else if (key == "self_iterations") c.self_iterations = iterations();
    else if (key == "pretrain_iterations") c.pretrain_iterations = iterations();
    else if (key == "finetune_iterations") c.finetune_iterations = iterations();
    else if (key == "validations") c.validations = iterations();
    else if (key == "beam") c.beam = parse_number<int>(key, value);
    else if (key == "ns") c.ns = parse_list<int>(key, value);
    else if (kPerRunKeys.contains(key)) throw Error(ErrorKind::Config, "'" + key + "' is set per run by the pipeline");
    else shared_text += key + " = " + value + "\n";
  }
  c.shared = train::TrainRunConfig::parse(shared_text);
  return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) { return parse(io::read_file(path)); }

ComparisonTable mean_table(const std::vector<ComparisonTable>& tables) {
  if (tables.empty()) return {};
  ComparisonTable out = tables.front();
  for (std::size_t r = 0; r < out.size(); ++r) {
    auto& acc = out[r].second.accuracy;
    for (std::size_t t = 1; t < tables.size(); ++t) {
      const auto& other = tables[t].at(r).second;
      if (tables[t][r].first != out[r].first || other.ns != out[r].second.ns) {
        throw Error(ErrorKind::Config, "tables to average differ in layout");
      }
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += other.accuracy[i];
      out[r].second.samples += other.samples;
    }
    for (double& a : acc) a /= static_cast<double>(tables.size());
  }
  return out;
}

PipelineResult pipeline_replay(const PipelineConfig& cfg, const std::filesystem::path& out_dir, const Logger& log) {
  cfg.validate();
  std::mutex log_mutex;
  auto say = [&](const std::string& m) {
    std::lock_guard lock(log_mutex);
    if (log) log(m);
  };
  PipelineResult result;
  io::write_file_atomic(out_dir / "pipeline.cfg", cfg.to_text());

  say("synthesizing corpora");
  auto [target, augment] = data::synth_generate(cfg.synth);
  const auto data_dir = out_dir / "data";
  data::save_split(data_dir / "target", target);
  data::save_split(data_dir / "augment", augment);
  auto [clean, report] = data::cleanse_overlap(augment.train, target);
  say("cleansed augment train: " + std::to_string(report.input_count) + " in, " +
      std::to_string(report.removed_count) + " removed, " + std::to_string(report.output_count) + " kept");
  data::save_reactions(data_dir / "augment_clean.rsmi", clean);
  io::write_file_atomic(data_dir / "cleanse_report.txt", report.to_text());
  io::write_file_atomic(data_dir / "cleanse_report.json", report.to_json());
  result.cleanse = report;
  augment.train = clean;
  const nn::Vocabulary vocab = train::build_vocabulary(target.train, augment.train);
  io::write_file_atomic(data_dir / "vocab.txt", vocab.to_text());

  std::vector<std::string> test_products;
  for (const auto& s : target.test) test_products.push_back(s.product);
  std::vector<std::string> augment_products;
  for (const auto& s : augment.train) augment_products.push_back(s.product);

  result.per_seed.resize(cfg.seeds.size());
  parallel_for(cfg.seeds.size(), [&](std::size_t seed_index) {
    const std::uint64_t seed = cfg.seeds[seed_index];
    const auto seed_dir = out_dir / ("seed_" + std::to_string(seed));
    auto run_config = [&](train::Strategy s, std::uint64_t iterations, const std::string& name) {
      train::TrainRunConfig rc = cfg.shared;
      rc.strategy = s;
      rc.seed = seed;
      rc.iterations = iterations;
      rc.val_interval = iterations / cfg.validations;
      rc.checkpoint_dir = seed_dir / name;
      return rc;
    };
    auto report_run = [&](const std::string& name, const train::TrainResult& r) {
      const auto& best = r.ledger.best_entry();
      say("seed " + std::to_string(seed) + " " + name + ": best val perplexity " + std::to_string(best.perplexity) +
          " at iteration " + std::to_string(best.iteration));
    };

    ComparisonTable table;
    auto evaluate = [&](const std::string& row, const train::TrainResult& r) {
      const auto beams = decode::decode_products(r.best, r.model, vocab, test_products, cfg.beam, r.model.max_seq_len);
      std::vector<decode::ScoredResult> scored;
      std::vector<decode::PredictionBlock> blocks;
      for (std::size_t i = 0; i < beams.size(); ++i) {
        scored.push_back({beams[i], target.test[i]});
        blocks.push_back({target.test[i].product, target.test[i], beams[i]});
      }
      const auto acc = decode::nbest_accuracy(scored, cfg.ns);
      std::string file = row;
      std::replace(file.begin(), file.end(), '+', '_');
      io::write_file_atomic(seed_dir / ("predictions_" + file + ".txt"), decode::format_predictions(blocks));
      io::write_file_atomic(seed_dir / ("classwise_" + file + ".txt"),
                            decode::classwise_text(decode::classwise_report(scored, cfg.ns)));
      say("seed " + std::to_string(seed) + " " + row + ": top-1 " + std::to_string(acc.accuracy.front()));
      table.emplace_back(row, acc);
    };

    say("seed " + std::to_string(seed) + ": pretrain");
    const auto pre = train::pretrain(run_config(train::Strategy::Pretrain, cfg.pretrain_iterations, "pretrain"), vocab,
                                     augment);
    report_run("pretrain", pre);
    say("seed " + std::to_string(seed) + ": finetune");
    auto ft_cfg = run_config(train::Strategy::Finetune, cfg.finetune_iterations, "finetune");
    ft_cfg.init_checkpoint = seed_dir / "pretrain" / "best.ckpt";
    const auto ft = train::finetune(ft_cfg, vocab, nn::load_checkpoint<train::Real>(ft_cfg.init_checkpoint), target);
    report_run("finetune", ft);
    say("seed " + std::to_string(seed) + ": single");
    const auto single = train::train_single(run_config(train::Strategy::Single, cfg.single_iterations, "single"),
                                            vocab, target);
    report_run("single", single);
    say("seed " + std::to_string(seed) + ": joint");
    const auto joint = train::train_joint(run_config(train::Strategy::Joint, cfg.joint_iterations, "joint"), vocab,
                                          target, augment.train);
    report_run("joint", joint);

    say("seed " + std::to_string(seed) + ": pseudo-labeling " + std::to_string(augment_products.size()) + " products");
    const auto labels = train::pseudo_label(single.best, single.model, vocab, augment_products);
    io::write_file_atomic(seed_dir / "pseudo.tsv", train::format_pseudo(labels));
    std::vector<data::ReactionSample> pseudo;
    std::size_t agree = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      pseudo.push_back(labels[i].sample);
      agree += decode::match_prediction(labels[i].sample.reactants, augment.train[i]).match ? 1 : 0;
    }
    say("seed " + std::to_string(seed) + ": pseudo labels equal to the true reactants: " + std::to_string(agree) + "/" +
        std::to_string(labels.size()));
    say("seed " + std::to_string(seed) + ": self");
    const auto self = train::train_self(run_config(train::Strategy::Self, cfg.self_iterations, "self"), vocab, target,
                                        pseudo);
    report_run("self", self);

    evaluate("single", single);
    evaluate("joint", joint);
    evaluate("self", self);
    evaluate("pretrain+finetune", ft);
    io::write_file_atomic(seed_dir / "comparison.txt", decode::comparison_text(table));
    io::write_file_atomic(seed_dir / "comparison.csv", decode::comparison_csv(table));
    result.per_seed[seed_index] = std::move(table);
  });
  result.mean = mean_table(result.per_seed);
  io::write_file_atomic(out_dir / "comparison.txt", decode::comparison_text(result.mean));
  io::write_file_atomic(out_dir / "comparison.csv", decode::comparison_csv(result.mean));
  return result;
}

}  // namespace retro::pipeline
