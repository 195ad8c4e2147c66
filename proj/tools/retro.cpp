// SPDX-License-Identifier: Apache-2.0
//
// retro: command-line front end for the retrosynthesis toolkit.
//
// Exit codes: 0 success, 1 runtime or data error, 2 usage error.
#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <sstream>
#include <thread>

#include "retro/dataset.hpp"
#include "retro/decode.hpp"
#include "retro/error.hpp"
#include "retro/io.hpp"
#include "retro/nn/checkpoint.hpp"
#include "retro/parallel.hpp"
#include "retro/pipeline.hpp"
#include "retro/smiles.hpp"
#include "retro/trainer.hpp"

namespace fs = std::filesystem;
using namespace retro;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

bool g_verbose = true;

void info(const std::string& m) {
  if (g_verbose) std::cerr << m << "\n";
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(line);
  }
  return out;
}

std::vector<int> parse_ns(const std::string& text) {
  std::vector<int> ns;
  std::istringstream in(text);
  for (std::string item; std::getline(in, item, ',');) {
    try {
      std::size_t used = 0;
      ns.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("--ns expects comma-separated integers, got '" + text + "'");
    }
  }
  if (ns.empty()) throw UsageError("--ns must list at least one value");
  return ns;
}

// --- commands -------------------------------------------------------------------

struct CanonArgs {
  fs::path in, out;
};

void run_canon(const CanonArgs& a) {
  std::string out;
  std::size_t number = 0;
  for (const auto& line : lines_of(io::read_file(a.in))) {
    ++number;
    if (line.empty()) {
      out += "\n";
      continue;
    }
    try {
      out += smiles::canonicalize(line).text + "\n";
    } catch (const Error& e) {
      throw Error(e.kind(), a.in.string() + ":" + std::to_string(number) + ": " + e.what());
    }
  }
  io::write_file_atomic(a.out, out);
}

struct CleanseArgs {
  fs::path augment, target_dir, out, report, report_json;
};

void run_cleanse(const CleanseArgs& a) {
  const auto augment = data::load_reactions(a.augment).samples;
  const auto target = data::load_split(a.target_dir, "target");
  const auto [kept, report] = data::cleanse_overlap(augment, target);
  data::save_reactions(a.out, kept);
  io::write_file_atomic(a.report, report.to_text());
  if (!a.report_json.empty()) io::write_file_atomic(a.report_json, report.to_json());
  info("removed " + std::to_string(report.removed_count) + " of " + std::to_string(report.input_count));
}

struct SynthArgs {
  fs::path config, out_dir;
};

void run_synth(const SynthArgs& a) {
  const auto cfg = a.config.empty() ? pipeline::PipelineConfig{} : pipeline::PipelineConfig::load(a.config);
  const auto [target, augment] = data::synth_generate(cfg.synth);
  data::save_split(a.out_dir / "target", target);
  data::save_split(a.out_dir / "augment", augment);
  info("target " + std::to_string(target.train.size()) + "/" + std::to_string(target.val.size()) + "/" +
       std::to_string(target.test.size()) + ", augment " + std::to_string(augment.train.size()) + "/" +
       std::to_string(augment.val.size()) + "/" + std::to_string(augment.test.size()));
}

struct VocabArgs {
  std::vector<fs::path> in;
  fs::path out;
};

void run_vocab(const VocabArgs& a) {
  std::vector<data::ReactionSample> all;
  for (const auto& p : a.in) {
    auto s = data::load_reactions(p).samples;
    all.insert(all.end(), s.begin(), s.end());
  }
  const auto vocab = train::build_vocabulary(all);
  io::write_file_atomic(a.out, vocab.to_text());
  info(std::to_string(vocab.size()) + " tokens");
}

struct TrainArgs {
  std::string strategy;
  fs::path target_dir, augment_dir, pseudo_file, init_checkpoint, out_dir, config, vocab;
  std::optional<std::uint64_t> seed, iterations;
  std::uint64_t test_interval = 0;
};

void run_train(const TrainArgs& a) {
  const train::Strategy strategy = [&] {
    try {
      return train::strategy_from_string(a.strategy);
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
  }();
  auto require = [&](const fs::path& p, const char* flag) {
    if (p.empty()) throw UsageError("--strategy " + a.strategy + " requires " + flag);
  };
  if (strategy != train::Strategy::Pretrain) require(a.target_dir, "--target-dir");
  if (strategy == train::Strategy::Joint || strategy == train::Strategy::Pretrain) require(a.augment_dir, "--augment-dir");
  if (strategy == train::Strategy::Self) require(a.pseudo_file, "--pseudo-file");
  if (strategy == train::Strategy::Finetune) require(a.init_checkpoint, "--init-checkpoint");

  train::TrainRunConfig cfg = a.config.empty() ? train::TrainRunConfig{} : train::TrainRunConfig::load(a.config);
  cfg.strategy = strategy;
  if (a.seed) cfg.seed = *a.seed;
  if (a.iterations) cfg.iterations = *a.iterations;
  if (a.test_interval > 0) cfg.test_interval = a.test_interval;
  cfg.checkpoint_dir = a.out_dir;
  if (!a.init_checkpoint.empty()) cfg.init_checkpoint = a.init_checkpoint;
  cfg.validate();

  data::DatasetSplit target{"target", {}, {}, {}};
  if (!a.target_dir.empty() && strategy != train::Strategy::Pretrain) target = data::load_split(a.target_dir, "target");
  data::DatasetSplit augment{"augment", {}, {}, {}};
  if (!a.augment_dir.empty()) augment = data::load_split(a.augment_dir, "augment");
  std::vector<data::ReactionSample> pseudo;
  if (!a.pseudo_file.empty()) {
    for (auto& l : train::parse_pseudo(io::read_file(a.pseudo_file))) pseudo.push_back(std::move(l.sample));
  }
  std::optional<nn::Checkpoint<train::Real>> init;
  if (strategy == train::Strategy::Finetune) init = nn::load_checkpoint<train::Real>(a.init_checkpoint);

  nn::Vocabulary vocab;
  if (!a.vocab.empty()) {
    vocab = nn::Vocabulary::from_text(io::read_file(a.vocab));
  } else if (init) {
    vocab = init->vocab;
  } else {
    vocab = train::build_vocabulary(target.train, augment.train);
  }

  train::TrainHooks hooks;
  hooks.on_validation = [](const train::SnapshotEntry& e, const train::CurveRow& r) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "iter %llu  train_ppl %.4f  val_ppl %.4f  lr %.3g",
                  static_cast<unsigned long long>(e.iteration), r.train_ppl, e.perplexity, r.lr);
    std::string line = buf;
    if (r.acc1) {
      std::snprintf(buf, sizeof buf, "  acc1 %.3f  acc20 %.3f", *r.acc1, *r.acc20);
      line += buf;
    }
    info(line);
  };
  train::TrainResult result;
  switch (strategy) {
    case train::Strategy::Single: result = train::train_single(cfg, vocab, target, hooks); break;
    case train::Strategy::Joint: result = train::train_joint(cfg, vocab, target, augment.train, hooks); break;
    case train::Strategy::Self: result = train::train_self(cfg, vocab, target, pseudo, hooks); break;
    case train::Strategy::Pretrain: result = train::pretrain(cfg, vocab, augment, hooks); break;
    case train::Strategy::Finetune: result = train::finetune(cfg, vocab, *init, target, hooks); break;
  }
  io::write_file_atomic(a.out_dir / "vocab.txt", vocab.to_text());
  const auto& best = result.ledger.best_entry();
  info("best snapshot: iteration " + std::to_string(best.iteration) + ", val perplexity " +
       std::to_string(best.perplexity));
}

struct DecodeArgs {
  fs::path checkpoint, in, out, pseudo_out;
  int k = 50;
  int max_len = 0;
};

void run_decode(const DecodeArgs& a) {
  const auto ck = nn::load_checkpoint<train::Real>(a.checkpoint);
  const int max_len = a.max_len > 0 ? a.max_len : ck.config.max_seq_len;
  std::vector<std::string> products;
  std::vector<std::optional<data::ReactionSample>> golds;
  std::size_t number = 0;
  for (const auto& line : lines_of(io::read_file(a.in))) {
    ++number;
    if (line.empty() || line.front() == '#') continue;
    try {
      if (line.find('>') != std::string::npos) {
        auto s = data::parse_reaction_line(line);
        products.push_back(s.product);
        golds.emplace_back(std::move(s));
      } else {
        products.push_back(smiles::canonicalize(line).text);
        golds.emplace_back();
      }
    } catch (const Error& e) {
      throw Error(e.kind(), a.in.string() + ":" + std::to_string(number) + ": " + e.what());
    }
  }
  if (!a.pseudo_out.empty()) {
    const auto labels = train::pseudo_label(ck.params, ck.config, ck.vocab, products);
    io::write_file_atomic(a.pseudo_out, train::format_pseudo(labels));
  }
  const auto beams = decode::decode_products(ck.params, ck.config, ck.vocab, products, a.k, max_len);
  std::vector<decode::PredictionBlock> blocks;
  for (std::size_t i = 0; i < beams.size(); ++i) blocks.push_back({products[i], golds[i], beams[i]});
  io::write_file_atomic(a.out, decode::format_predictions(blocks));
  info("decoded " + std::to_string(products.size()) + " products");
}

struct EvalArgs {
  fs::path pred, gold, out, csv;
  std::string ns = "1,3,5,10,20,50";
  bool classwise = false;
};

void run_eval(const EvalArgs& a) {
  const auto ns = parse_ns(a.ns);
  const auto blocks = decode::parse_predictions(io::read_file(a.pred));
  std::vector<decode::ScoredResult> scored;
  if (!a.gold.empty()) {
    const auto gold = data::load_reactions(a.gold).samples;
    if (gold.size() != blocks.size()) {
      throw Error(ErrorKind::Format, "gold file has " + std::to_string(gold.size()) + " samples, predictions " +
                                         std::to_string(blocks.size()));
    }
    for (std::size_t i = 0; i < gold.size(); ++i) {
      if (gold[i].product != blocks[i].source) {
        throw Error(ErrorKind::Format, "sample " + std::to_string(i + 1) + ": gold product " + gold[i].product +
                                           " differs from prediction source " + blocks[i].source);
      }
      scored.push_back({blocks[i].beam, gold[i]});
    }
  } else {
    for (const auto& b : blocks) {
      if (!b.gold) throw UsageError("predictions carry no gold reactants; pass --gold");
      scored.push_back({b.beam, *b.gold});
    }
  }
  const auto table = decode::nbest_accuracy(scored, ns);
  std::string text = decode::accuracy_text(table);
  std::string csv = decode::accuracy_csv(table);
  if (a.classwise) {
    const auto report = decode::classwise_report(scored, ns);
    text += "\n" + decode::classwise_text(report);
    csv += "\n" + decode::classwise_csv(report);
  }
  io::write_file_atomic(a.out, text);
  if (!a.csv.empty()) io::write_file_atomic(a.csv, csv);
  if (g_verbose) std::cout << text;
}

struct CurvesArgs {
  fs::path run_dir, out;
};

void run_curves(const CurvesArgs& a) {
  const auto log = train::CurveLog::parse_csv(io::read_file(a.run_dir / "curves.csv"));
  const bool test = log.has_test_columns();
  std::string out = test ? "    iter   train_ppl          lr    acc1   acc20\n" : "    iter   train_ppl          lr\n";
  char buf[160];
  for (const auto& r : log.rows) {
    std::snprintf(buf, sizeof buf, "%8llu %11.4f %11.3e", static_cast<unsigned long long>(r.iteration), r.train_ppl,
                  r.lr);
    out += buf;
    if (test) {
      for (const auto& v : {r.acc1, r.acc20}) {
        if (v) {
          std::snprintf(buf, sizeof buf, " %7.3f", *v);
        } else {
          std::snprintf(buf, sizeof buf, " %7s", "-");
        }
        out += buf;
      }
    }
    out += "\n";
  }
  if (fs::exists(a.run_dir / "ledger.txt")) {
    for (const auto& line : lines_of(io::read_file(a.run_dir / "ledger.txt"))) {
      if (line.rfind("best\t", 0) == 0) out += "best snapshot at iteration " + line.substr(5) + "\n";
    }
  }
  io::write_file_atomic(a.out, out);
  if (g_verbose) std::cout << out;
}

struct ReplayArgs {
  fs::path config, out_dir;
};

void run_replay(const ReplayArgs& a) {
  const auto cfg = a.config.empty() ? pipeline::PipelineConfig{} : pipeline::PipelineConfig::load(a.config);
  const auto result = pipeline::pipeline_replay(cfg, a.out_dir, info);
  std::cout << decode::comparison_text(result.mean);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Retrosynthesis data-transfer toolkit", "retro"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every command");
  unsigned threads = 0;
  std::string log_level = "info";
  if (const char* env = std::getenv("RETRO_LOG_LEVEL")) log_level = env;
  app.add_option("--threads", threads, "Worker thread cap (0: all cores)")->capture_default_str();
  app.add_option("--log-level", log_level, "Diagnostics on stderr (env RETRO_LOG_LEVEL)")
      ->capture_default_str()
      ->check(CLI::IsMember({"quiet", "info"}));

  CanonArgs canon;
  auto* c = app.add_subcommand("canon", "Canonicalize one SMILES per line");
  c->add_option("--in", canon.in, "Input SMILES file")->required()->check(CLI::ExistingFile);
  c->add_option("--out", canon.out, "Output file, line-aligned with the input")->required();

  CleanseArgs cleanse;
  auto* cl = app.add_subcommand("cleanse", "Remove augment samples whose product occurs in the target dataset");
  cl->add_option("--augment", cleanse.augment, "Augment reaction file")->required()->check(CLI::ExistingFile);
  cl->add_option("--target-dir", cleanse.target_dir, "Target split directory (train/val/test.rsmi)")
      ->required()
      ->check(CLI::ExistingDirectory);
  cl->add_option("--out", cleanse.out, "Cleansed reaction file")->required();
  cl->add_option("--report", cleanse.report, "Report as key: value text")->required();
  cl->add_option("--report-json", cleanse.report_json, "Report as JSON");

  SynthArgs synth;
  auto* sy = app.add_subcommand("synth", "Generate the synthetic target and augment corpora");
  sy->add_option("--config", synth.config, "Pipeline config file (synthesis keys are used)")
      ->check(CLI::ExistingFile);
  sy->add_option("--out-dir", synth.out_dir, "Output directory (target/ and augment/)")->required();

  VocabArgs vocab;
  auto* vo = app.add_subcommand("vocab", "Build a token vocabulary from reaction files");
  vo->add_option("--in", vocab.in, "Reaction files")->required()->check(CLI::ExistingFile);
  vo->add_option("--out", vocab.out, "Vocabulary file, one token per line")->required();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a model under one strategy");
  t->add_option("--strategy", tr.strategy, "single, joint, self, pretrain or finetune")
      ->required()
      ->check(CLI::IsMember({"single", "joint", "self", "pretrain", "finetune"}));
  t->add_option("--target-dir", tr.target_dir, "Target split directory")->check(CLI::ExistingDirectory);
  t->add_option("--augment-dir", tr.augment_dir, "Cleansed augment split directory")->check(CLI::ExistingDirectory);
  t->add_option("--pseudo-file", tr.pseudo_file, "Pseudo-label file from decode --pseudo-out")
      ->check(CLI::ExistingFile);
  t->add_option("--init-checkpoint", tr.init_checkpoint, "Checkpoint to fine-tune from")->check(CLI::ExistingFile);
  t->add_option("--out-dir", tr.out_dir, "Run output directory")->required();
  t->add_option("--config", tr.config, "Run-config file")->check(CLI::ExistingFile);
  t->add_option("--vocab", tr.vocab, "Vocabulary file (default: built from the training sets)")
      ->check(CLI::ExistingFile);
  t->add_option("--seed", tr.seed, "Override the config seed");
  t->add_option("--iterations", tr.iterations, "Override the config iteration count");
  t->add_option("--test-interval", tr.test_interval, "Override the test-evaluation interval (0 keeps the config)")
      ->capture_default_str();

  DecodeArgs dec;
  auto* d = app.add_subcommand("decode", "Beam-decode products into a predictions file");
  d->add_option("--checkpoint", dec.checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
  d->add_option("--in", dec.in, "Products, one SMILES or reaction line each")->required()->check(CLI::ExistingFile);
  d->add_option("--k", dec.k, "Beam width")->capture_default_str()->check(CLI::PositiveNumber);
  d->add_option("--max-len", dec.max_len, "Maximum generated tokens (0: model max_seq_len)")->capture_default_str();
  d->add_option("--out", dec.out, "Predictions file")->required();
  d->add_option("--pseudo-out", dec.pseudo_out, "Also write greedy pseudo labels here");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Score a predictions file with n-best accuracy");
  e->add_option("--pred", ev.pred, "Predictions file")->required()->check(CLI::ExistingFile);
  e->add_option("--gold", ev.gold, "Gold reaction file aligned with the predictions (default: gold in predictions)")
      ->check(CLI::ExistingFile);
  e->add_option("--ns", ev.ns, "Comma-separated n values")->capture_default_str();
  e->add_flag("--classwise", ev.classwise, "Append per-class accuracy");
  e->add_option("--out", ev.out, "Accuracy table (text)")->required();
  e->add_option("--csv", ev.csv, "Accuracy table (CSV)");

  CurvesArgs cu;
  auto* cv = app.add_subcommand("curves", "Render a run's training/test curves");
  cv->add_option("--run-dir", cu.run_dir, "Training output directory")->required()->check(CLI::ExistingDirectory);
  cv->add_option("--out", cu.out, "Output table")->required();

  ReplayArgs rp;
  auto* r = app.add_subcommand("replay", "Run the full toy pipeline and print the strategy comparison table");
  r->add_option("--config", rp.config, "Pipeline config file (default: built-in toy config)")
      ->check(CLI::ExistingFile);
  r->add_option("--out-dir", rp.out_dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 2;
  }
  set_max_threads(threads > 0 ? threads : std::max(1u, std::thread::hardware_concurrency()));
  g_verbose = log_level != "quiet";
  try {
    if (*c) run_canon(canon);
    if (*cl) run_cleanse(cleanse);
    if (*sy) run_synth(synth);
    if (*vo) run_vocab(vocab);
    if (*t) run_train(tr);
    if (*d) run_decode(dec);
    if (*e) run_eval(ev);
    if (*cv) run_curves(cu);
    if (*r) run_replay(rp);
  } catch (const UsageError& err) {
    std::cerr << "usage error: " << err.what() << "\n";
    return 2;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 0;
}
