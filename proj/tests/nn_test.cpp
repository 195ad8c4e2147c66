// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <numbers>

#include "retro/error.hpp"
#include "retro/nn/checkpoint.hpp"
#include "retro/nn/model.hpp"
#include "retro/nn/vocab.hpp"
#include "support/gradcheck.hpp"

namespace retro::nn {
namespace {

TEST(Vocabulary, BuildEncodeDecode) {
  const std::vector<std::string> texts = {"CCO", "ClCCBr", "[nH]1cccc1"};
  const Vocabulary v = Vocabulary::build(texts);
  EXPECT_EQ(v.token(0), "<pad>");
  EXPECT_EQ(v.token(3), "<unk>");
  EXPECT_EQ(v.size(), 4 + 7);  // 1 Br C Cl O [nH] c
  const auto ids = v.encode("CCO");
  EXPECT_EQ(v.decode(ids), "CCO");
  EXPECT_EQ(v.encode("N")[0], Vocabulary::kUnk);
  std::vector<int> with_eos = ids;
  with_eos.push_back(Vocabulary::kEos);
  with_eos.push_back(v.id("C"));
  EXPECT_EQ(v.decode(with_eos), "CCO");
  EXPECT_THROW(Vocabulary({"a", "b"}), Error);
}

TEST(Vocabulary, TextRoundTrip) {
  const std::vector<std::string> texts = {"CC(=O)O", "c1ccccc1Br"};
  const Vocabulary v = Vocabulary::build(texts);
  const std::string text = v.to_text();
  EXPECT_EQ(text.rfind("<pad>\n<bos>\n<eos>\n<unk>\n", 0), 0u);
  const Vocabulary back = Vocabulary::from_text(text);
  ASSERT_EQ(back.size(), v.size());
  for (int i = 0; i < v.size(); ++i) EXPECT_EQ(back.token(i), v.token(i));
  EXPECT_EQ(Vocabulary::from_text("<pad>\r\n<bos>\r\n<eos>\r\n<unk>\r\nC\r\n").size(), 5);
  EXPECT_THROW(Vocabulary::from_text("<pad>\n<bos>\n<eos>\n<unk>\nC\nC\n"), Error);
  EXPECT_THROW(Vocabulary::from_text("C\n<pad>\n<bos>\n<eos>\n<unk>\n"), Error);
}

TEST(InitParams, DeterministicAndNormScalesOne) {
  const ModelConfig cfg = ModelConfig::desk(20);
  const auto a = init_params<float>(cfg, 5);
  const auto b = init_params<float>(cfg, 5);
  EXPECT_TRUE(a == b);
  EXPECT_FALSE(a == init_params<float>(cfg, 6));
  const auto& scale = a[a.index_of("enc.0.ln1.scale")];
  EXPECT_TRUE((scale.array() == 1.0f).all());
  EXPECT_TRUE((a[a.index_of("dec.1.self.bq")].array() == 0.0f).all());
  const float bound = std::sqrt(6.0f / (64 + 64));
  EXPECT_LE(a[a.index_of("enc.0.self.wq")].cwiseAbs().maxCoeff(), bound);
}

TEST(InitParams, ConfigError) {
  ModelConfig cfg = ModelConfig::desk(20);
  cfg.model_dim = 7;
  cfg.num_heads = 2;
  try {
    init_params<double>(cfg, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Config);
  }
}

TEST(Forward, ZeroParametersGiveUniformSoftmax) {
  ModelConfig cfg = ModelConfig::desk(10);
  const auto p = ParameterSet<double>::zeros(Layout(cfg));
  const Mat<double> logits = forward(p, cfg, {4, 5, 6}, {1, 7, 8, 9});
  ASSERT_EQ(logits.rows(), 4);
  ASSERT_EQ(logits.cols(), 10);
  EXPECT_TRUE((logits.array() == 0.0).all());

  std::vector<SequencePair> batch = {{{4, 5}, {6, 7, 8}}, {{9}, {4}}};
  const LossValue loss = loss_and_grad<double>(p, cfg, batch, nullptr);
  EXPECT_EQ(loss.tokens, 6u);
  EXPECT_NEAR(loss.mean, std::log(10.0), 1e-12);
  EXPECT_NEAR(loss.perplexity(), 10.0, 1e-9);
}

TEST(Forward, CausalityAndNormalization) {
  const ModelConfig cfg = testing::tiny_config();
  const auto p = init_params<double>(cfg, 11);
  const std::vector<int> src = {4, 5, 6, 7};
  std::vector<int> tgt = {1, 8, 9, 10, 11};
  const Mat<double> base = forward(p, cfg, src, tgt);
  for (int t = 0; t + 1 < static_cast<int>(tgt.size()); ++t) {
    std::vector<int> changed = tgt;
    changed[t + 1] = changed[t + 1] == 4 ? 5 : 4;
    const Mat<double> other = forward(p, cfg, src, changed);
    EXPECT_TRUE(base.topRows(t + 1) == other.topRows(t + 1)) << "t=" << t;
    EXPECT_FALSE(base.row(t + 1) == other.row(t + 1));
  }
  for (Eigen::Index r = 0; r < base.rows(); ++r) {
    const auto row = base.row(r).array();
    const double sum = (row - row.maxCoeff()).exp().sum();
    const auto probs = (row - row.maxCoeff()).exp() / sum;
    EXPECT_NEAR(probs.sum(), 1.0, 1e-12);
  }
  EXPECT_TRUE(base == forward(p, cfg, src, tgt));
}

TEST(Forward, SequenceTooLong) {
  const ModelConfig cfg = testing::tiny_config();
  const auto p = init_params<double>(cfg, 1);
  std::vector<int> longsrc(13, 4);
  try {
    forward(p, cfg, longsrc, {1});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SequenceTooLong);
  }
  std::vector<SequencePair> batch = {{{4}, std::vector<int>(12, 5)}};
  EXPECT_THROW(loss_and_grad<double>(p, cfg, batch, nullptr), Error);
}

TEST(LossAndGrad, UnusedEmbeddingRowHasZeroGradient) {
  const ModelConfig cfg = testing::tiny_config();
  const auto p = init_params<double>(cfg, 3);
  std::vector<SequencePair> batch = {{{4, 5, 6}, {7, 8}}, {{5, 4}, {6}}};
  ParameterSet<double> g;
  loss_and_grad<double>(p, cfg, batch, &g);
  const auto& de = g[g.index_of("embed")];
  for (int unused : {0, 3, 9, 10, 11}) EXPECT_TRUE((de.row(unused).array() == 0.0).all()) << unused;
  EXPECT_FALSE((de.row(4).array() == 0.0).all());
  EXPECT_TRUE(g.all_finite());
}

TEST(LossAndGrad, FiniteDifferencesTwentySeeds) {
  const ModelConfig cfg = testing::tiny_config();
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed * 7919);
    const auto p = init_params<double>(cfg, seed);
    const auto batch = testing::random_batch(rng, cfg.vocab_size, 3, 6);
    const auto r = testing::check_gradients(p, cfg, batch, {});
    EXPECT_LT(r.max_rel_error, 1e-4) << "seed " << seed << " worst " << r.worst_tensor;
  }
}

TEST(LossAndGrad, FiniteDifferencesWithDropoutSmoothingAndShards) {
  ModelConfig cfg = testing::tiny_config();
  cfg.num_layers = 2;
  cfg.dropout_rate = 0.2;
  Rng rng(99);
  const auto p = init_params<double>(cfg, 4);
  const auto batch = testing::random_batch(rng, cfg.vocab_size, 5, 5);
  const LossOptions opts{.training = true, .dropout_seed = 17, .label_smoothing = 0.1, .shard_size = 2};
  const auto r = testing::check_gradients(p, cfg, batch, opts);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst_tensor;
}

TEST(LossAndGrad, ShardedGradientIndependentOfThreadCount) {
  const ModelConfig cfg = testing::tiny_config();
  Rng rng(5);
  const auto p = init_params<float>(cfg, 8);
  const auto batch = testing::random_batch(rng, cfg.vocab_size, 9, 8);
  const LossOptions opts{.shard_size = 2};
  const unsigned saved = max_threads();
  set_max_threads(1);
  ParameterSet<float> g1, g4;
  const LossValue l1 = loss_and_grad<float>(p, cfg, batch, &g1, opts);
  set_max_threads(4);
  const LossValue l4 = loss_and_grad<float>(p, cfg, batch, &g4, opts);
  set_max_threads(saved);
  EXPECT_TRUE(g1 == g4);
  EXPECT_EQ(l1.total, l4.total);
}

Vocabulary tiny_vocab() {
  return Vocabulary({"<pad>", "<bos>", "<eos>", "<unk>", "C", "O", "N", "c", "1", "(", ")", "="});
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::Config;
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const ModelConfig cfg = testing::tiny_config();
  auto p = init_params<float>(cfg, 12);
  p.step = 345;
  p[0](0, 0) = -0.0f;
  p[1](0, 1) = std::numeric_limits<float>::denorm_min();
  const std::string bytes = encode_checkpoint(p, cfg, tiny_vocab());
  const auto back = decode_checkpoint<float>(bytes);
  EXPECT_TRUE(back.params == p);
  EXPECT_TRUE(std::signbit(back.params[0](0, 0)));
  EXPECT_EQ(back.config, cfg);
  EXPECT_EQ(back.vocab, tiny_vocab());
  EXPECT_EQ(bytes.substr(0, 8), "RETROCKP");

  const auto d = init_params<double>(cfg, 12);
  EXPECT_TRUE(decode_checkpoint<double>(encode_checkpoint(d, cfg, tiny_vocab())).params == d);

  const auto dir = std::filesystem::temp_directory_path() / "retro_nn_test";
  save_checkpoint(dir / "a.ckpt", p, cfg, tiny_vocab());
  EXPECT_TRUE(load_checkpoint<float>(dir / "a.ckpt").params == p);
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, CorruptionAndMismatch) {
  const ModelConfig cfg = testing::tiny_config();
  const auto p = init_params<float>(cfg, 2);
  const std::string bytes = encode_checkpoint(p, cfg, tiny_vocab());
  for (std::size_t keep : {std::size_t{0}, std::size_t{10}, bytes.size() / 2, bytes.size() - 1}) {
    EXPECT_EQ(kind_of([&] { decode_checkpoint<float>(bytes.substr(0, keep)); }), ErrorKind::ChecksumMismatch) << keep;
  }
  std::string flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x10;
  EXPECT_EQ(kind_of([&] { decode_checkpoint<float>(flipped); }), ErrorKind::ChecksumMismatch);
  EXPECT_EQ(kind_of([&] { decode_checkpoint<double>(bytes); }), ErrorKind::VersionMismatch);
  EXPECT_EQ(kind_of([&] { load_checkpoint<float>("/nonexistent/x.ckpt"); }), ErrorKind::Io);

  ModelConfig other = cfg;
  other.ffn_dim = 32;
  EXPECT_NO_THROW(require_compatible(cfg, tiny_vocab(), cfg, tiny_vocab()));
  EXPECT_EQ(kind_of([&] { require_compatible(cfg, tiny_vocab(), other, tiny_vocab()); }), ErrorKind::VersionMismatch);
  EXPECT_EQ(kind_of([&] { require_compatible(cfg, tiny_vocab(), cfg, Vocabulary()); }), ErrorKind::VersionMismatch);
}

}  // namespace
}  // namespace retro::nn
