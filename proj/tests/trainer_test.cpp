// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "retro/error.hpp"
#include "retro/io.hpp"
#include "retro/nn/model.hpp"
#include "retro/trainer.hpp"

namespace retro::train {
namespace {

struct Corpora {
  data::DatasetSplit target;
  data::DatasetSplit augment;
  nn::Vocabulary vocab;
};

const Corpora& corpora() {
  static const Corpora c = [] {
    data::SynthConfig s;
    s.target_counts = {60, 12, 12};
    s.augment_counts = {120, 12, 12};
    s.seed = 9;
    auto [t, a] = data::synth_generate(s);
    a.train = data::cleanse_overlap(a.train, t).first;
    auto v = build_vocabulary(t.train, a.train);
    return Corpora{std::move(t), std::move(a), std::move(v)};
  }();
  return c;
}

TrainRunConfig small(Strategy s) {
  TrainRunConfig c;
  c.strategy = s;
  c.num_layers = 1;
  c.model_dim = 16;
  c.num_heads = 2;
  c.ffn_dim = 32;
  c.iterations = 20;
  c.val_interval = 5;
  c.batch_tokens = 300;
  c.seed = 4;
  return c;
}

std::string bytes_of(const TrainResult& r) { return nn::encode_checkpoint(r.best, r.model, r.vocab); }

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::Config;
}

TEST(SnapshotLedger, ArgminWithEarliestTie) {
  SnapshotLedger l;
  EXPECT_TRUE(l.record(100, 3.0));
  EXPECT_TRUE(l.record(200, 2.5));
  EXPECT_FALSE(l.record(300, 2.7));
  EXPECT_EQ(*l.best, 1u);
  EXPECT_FALSE(l.record(400, 2.5));
  EXPECT_EQ(l.best_entry().iteration, 200u);
  EXPECT_THROW(l.record(400, 1.0), Error);
  EXPECT_NE(l.to_text().find("best\t200"), std::string::npos);
  EXPECT_NE(l.to_json().find("\"best_index\": 1"), std::string::npos);
}

TEST(CurveLog, CsvRoundTripAndOrdering) {
  CurveLog log;
  log.add({10, 5.5, 1e-3, std::nullopt, std::nullopt});
  log.add({20, 4.25, 5e-4, 0.25, 0.75});
  EXPECT_THROW(log.add({20, 1.0, 1.0}), Error);
  const std::string csv = log.to_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "iter,train_ppl,lr,acc1,acc20");
  const CurveLog back = CurveLog::parse_csv(csv);
  ASSERT_EQ(back.rows.size(), 2u);
  EXPECT_FALSE(back.rows[0].acc1.has_value());
  EXPECT_DOUBLE_EQ(*back.rows[1].acc20, 0.75);
  EXPECT_EQ(back.to_csv(), csv);
  CurveLog plain;
  plain.add({1, 2.0, 0.5});
  EXPECT_EQ(plain.to_csv(), "iter,train_ppl,lr\n1,2.000000,0.5\n");
  EXPECT_THROW(CurveLog::parse_csv("iter,train_ppl,lr\n2,1,1\n1,1,1\n"), Error);
}

TEST(RunConfig, TextRoundTripAndValidation) {
  TrainRunConfig c = small(Strategy::Finetune);
  c.init_checkpoint = "pre/best.ckpt";
  c.peak_lr = 7.5e-4;
  c.schedule = optim::ScheduleKind::InverseSqrt;
  const TrainRunConfig back = TrainRunConfig::parse(c.to_text());
  EXPECT_EQ(back.to_text(), c.to_text());
  EXPECT_EQ(back.peak_lr, 7.5e-4);
  EXPECT_EQ(back.init_checkpoint, "pre/best.ckpt");
  EXPECT_EQ(kind_of([] { TrainRunConfig::parse("colour = blue\n"); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([] { TrainRunConfig::parse("iterations = many\n"); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([] { small(Strategy::Finetune).validate(); }), ErrorKind::Config);
  TrainRunConfig bad = small(Strategy::Single);
  bad.val_interval = 0;
  EXPECT_THROW(bad.validate(), Error);
  EXPECT_EQ(small(Strategy::Finetune).make_schedule().kind, optim::ScheduleKind::InverseSqrt);
  EXPECT_EQ(small(Strategy::Single).make_schedule().kind, optim::ScheduleKind::Cyclic);
}

TEST(ValidatePerplexity, UniformModelClosedForm) {
  const nn::Vocabulary v({"<pad>", "<bos>", "<eos>", "<unk>", "C", "O", "N", "c", "1", "="});
  ASSERT_EQ(v.size(), 10);
  TrainRunConfig c = small(Strategy::Single);
  const nn::ModelConfig m = c.model(v.size());
  const auto zeros = nn::ParameterSet<Real>::zeros(nn::Layout(m));
  const std::vector<data::ReactionSample> val = {{"CCO", "CC.O", std::nullopt}, {"c1ccccc1", "C=C", std::nullopt}};
  EXPECT_NEAR(validate_perplexity(zeros, m, v, val), 10.0, 1e-5);
  const auto p = nn::init_params<Real>(m, 3);
  const double a = validate_perplexity(p, m, v, val);
  EXPECT_EQ(a, validate_perplexity(p, m, v, val));
  EXPECT_GE(a, 1.0);
  EXPECT_EQ(kind_of([&] { validate_perplexity(p, m, v, {}); }), ErrorKind::EmptyDataset);
}

TEST(Training, DeterministicAndCurveRows) {
  const auto& c = corpora();
  TrainRunConfig cfg = small(Strategy::Single);
  const TrainResult a = train_single(cfg, c.vocab, c.target);
  const TrainResult b = train_single(cfg, c.vocab, c.target);
  EXPECT_EQ(bytes_of(a), bytes_of(b));
  EXPECT_TRUE(a.last == b.last);
  EXPECT_EQ(a.curves.rows.size(), 4u);
  EXPECT_EQ(a.ledger.entries.size(), 4u);
  EXPECT_EQ(a.last.step, 20u);
  for (std::size_t i = 1; i < a.curves.rows.size(); ++i) {
    EXPECT_LT(a.curves.rows[i - 1].iteration, a.curves.rows[i].iteration);
  }
  double best = 1e300;
  for (const auto& e : a.ledger.entries) best = std::min(best, e.perplexity);
  EXPECT_EQ(a.ledger.best_entry().perplexity, best);
  EXPECT_EQ(a.audit.augment, 0u);
  EXPECT_EQ(a.audit.pseudo, 0u);

  cfg.seed = 5;
  EXPECT_NE(bytes_of(train_single(cfg, c.vocab, c.target)), bytes_of(a));
}

TEST(Training, IntervalsGiveOneRowEach) {
  const auto& c = corpora();
  TrainRunConfig cfg = small(Strategy::Single);
  cfg.iterations = 30;
  cfg.val_interval = 3;
  EXPECT_EQ(train_single(cfg, c.vocab, c.target).curves.rows.size(), 10u);
}

TEST(Training, ThreadCountDoesNotChangeResult) {
  const auto& c = corpora();
  const unsigned saved = max_threads();
  set_max_threads(1);
  const auto one = bytes_of(train_single(small(Strategy::Single), c.vocab, c.target));
  set_max_threads(3);
  const auto three = bytes_of(train_single(small(Strategy::Single), c.vocab, c.target));
  set_max_threads(saved);
  EXPECT_EQ(one, three);
}

TEST(StrategyIdentities, EmptyExtrasReduceToSingle) {
  const auto& c = corpora();
  const auto single = train_single(small(Strategy::Single), c.vocab, c.target);
  const auto joint = train_joint(small(Strategy::Joint), c.vocab, c.target, {});
  const auto self = train_self(small(Strategy::Self), c.vocab, c.target, {});
  EXPECT_EQ(bytes_of(joint), bytes_of(single));
  EXPECT_EQ(bytes_of(self), bytes_of(single));
  EXPECT_TRUE(joint.last == single.last);
}

TEST(StrategyIdentities, JointUsesTheUnionAndChecksLeaks) {
  const auto& c = corpora();
  const auto joint = train_joint(small(Strategy::Joint), c.vocab, c.target, c.augment.train);
  EXPECT_EQ(joint.train_size, c.target.train.size() + c.augment.train.size());
  EXPECT_EQ(joint.audit.augment, c.augment.train.size());
  auto leaky = c.augment.train;
  leaky.push_back(c.target.test.front());
  EXPECT_EQ(kind_of([&] { train_joint(small(Strategy::Joint), c.vocab, c.target, leaky); }), ErrorKind::LeakDetected);
  EXPECT_EQ(kind_of([&] { train_joint(small(Strategy::Single), c.vocab, c.target, {}); }), ErrorKind::Config);
}

TEST(StrategyIdentities, PretrainNeverReadsTarget) {
  const auto& c = corpora();
  const auto r = pretrain(small(Strategy::Pretrain), c.vocab, c.augment);
  EXPECT_EQ(r.audit.target, 0u);
  EXPECT_EQ(r.audit.augment, c.augment.train.size() + c.augment.val.size());
  EXPECT_EQ(r.train_size, c.augment.train.size());
}

TEST(StrategyIdentities, FinetuneStartsFromCheckpoint) {
  const auto& c = corpora();
  const auto dir = std::filesystem::temp_directory_path() / "retro_trainer_ft";
  std::filesystem::remove_all(dir);
  TrainRunConfig pre = small(Strategy::Pretrain);
  pre.checkpoint_dir = dir / "pre";
  pretrain(pre, c.vocab, c.augment);
  const auto ck = nn::load_checkpoint<Real>(dir / "pre" / "best.ckpt");

  TrainRunConfig ft = small(Strategy::Finetune);
  ft.init_checkpoint = dir / "pre" / "best.ckpt";
  nn::ParameterSet<Real> seen;
  TrainHooks hooks;
  hooks.on_start = [&](const nn::ParameterSet<Real>& p) { seen = p; };
  const auto r = finetune(ft, c.vocab, ck, c.target, hooks);
  EXPECT_TRUE(seen == ck.params);
  EXPECT_EQ(r.last.step, ck.params.step + ft.iterations);
  EXPECT_EQ(r.audit.augment, 0u);

  TrainRunConfig wider = ft;
  wider.ffn_dim = 48;
  EXPECT_EQ(kind_of([&] { finetune(wider, c.vocab, ck, c.target); }), ErrorKind::VersionMismatch);
  std::filesystem::remove_all(dir);
}

TEST(Training, OutputDirectory) {
  const auto& c = corpora();
  const auto dir = std::filesystem::temp_directory_path() / "retro_trainer_out";
  std::filesystem::remove_all(dir);
  TrainRunConfig cfg = small(Strategy::Single);
  cfg.checkpoint_dir = dir;
  cfg.test_interval = 10;
  cfg.test_samples = 4;
  const auto r = train_single(cfg, c.vocab, c.target);
  for (const char* f : {"run.cfg", "best.ckpt", "ledger.txt", "ledger.json", "curves.csv"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  }
  const auto& best = r.ledger.best_entry();
  EXPECT_EQ(best.checkpoint, "snapshot_" + std::to_string(best.iteration) + ".ckpt");
  EXPECT_EQ(io::read_file(dir / best.checkpoint), io::read_file(dir / "best.ckpt"));
  const CurveLog log = CurveLog::parse_csv(io::read_file(dir / "curves.csv"));
  ASSERT_EQ(log.rows.size(), 4u);
  EXPECT_FALSE(log.rows[0].acc1.has_value());
  ASSERT_TRUE(log.rows[1].acc1.has_value());
  ASSERT_TRUE(log.rows[3].acc20.has_value());
  EXPECT_LE(*log.rows[1].acc1, *log.rows[1].acc20);
  EXPECT_EQ(TrainRunConfig::load(dir / "run.cfg").to_text(), cfg.to_text());
  std::filesystem::remove_all(dir);
}

TEST(PseudoLabel, ShapeDeterminismAndFile) {
  const auto& c = corpora();
  const auto r = train_single(small(Strategy::Single), c.vocab, c.target);
  std::vector<std::string> products;
  for (const auto& s : c.augment.train) products.push_back(s.product);
  products.resize(30);
  const auto a = pseudo_label(r.best, r.model, r.vocab, products);
  const auto b = pseudo_label(r.best, r.model, r.vocab, products);
  ASSERT_EQ(a.size(), products.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].sample.product, products[i]);
    EXPECT_EQ(a[i].sample, b[i].sample);
    EXPECT_FALSE(a[i].sample.class_label.has_value());
  }
  const auto back = parse_pseudo(format_pseudo(a));
  ASSERT_EQ(back.size(), a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(back[i].sample, a[i].sample);
    EXPECT_EQ(back[i].truncated, a[i].truncated);
  }
  EXPECT_THROW(parse_pseudo("CCO\n"), Error);
  EXPECT_TRUE(parse_pseudo("CCO\t\ttruncated\n")[0].truncated);
}

TEST(PseudoLabel, TruncatedOutputsAreFlagged) {
  TrainRunConfig cfg = small(Strategy::Single);
  cfg.max_seq_len = 4;
  const nn::Vocabulary v({"<pad>", "<bos>", "<eos>", "<unk>", "C", "O"});
  const nn::ModelConfig m = cfg.model(v.size());
  auto p = nn::init_params<Real>(m, 1);
  // make EOS unreachable so the greedy decode runs to the limit
  p[p.index_of("out.b")](0, nn::Vocabulary::kEos) = -100.0f;
  const auto out = pseudo_label(p, m, v, {"CO"});
  ASSERT_EQ(out.size(), 1u);
  EXPECT_TRUE(out[0].truncated);
  EXPECT_EQ(out[0].sample.reactants.size(), 3u);
}

}  // namespace
}  // namespace retro::train
