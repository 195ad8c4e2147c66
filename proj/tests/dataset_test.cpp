// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "retro/dataset.hpp"
#include "retro/error.hpp"
#include "retro/smiles.hpp"

namespace retro::data {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() : path_(fs::temp_directory_path() / ("retro_ds_" + std::to_string(::getpid()) + "_" + std::to_string(counter_++))) {
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  static inline int counter_ = 0;
  fs::path path_;
};

void write_lines(const fs::path& p, const std::vector<std::string>& lines) {
  std::ofstream out(p);
  for (const auto& l : lines) out << l << "\n";
}

ReactionSample sample(std::string product, std::string reactants) {
  return {smiles::canonicalize(product).text, std::move(reactants), std::nullopt};
}

TEST(LoadReactions, CanonicalizesEachComponent) {
  TempDir dir;
  write_lines(dir.path() / "a.rsmi", {"CC(=O)O.OCC>>CCOC(C)=O\tRX_2", "CCO>>CCO", "[CH3:1][OH:2]>CN>[CH3:1]O\t5"});
  const auto r = load_reactions(dir.path() / "a.rsmi");
  ASSERT_EQ(r.samples.size(), 3u);
  EXPECT_TRUE(r.malformed.empty());
  EXPECT_EQ(r.samples[0].product, "CCOC(C)=O");
  EXPECT_EQ(r.samples[0].reactants, "CC(=O)O.CCO");
  EXPECT_EQ(r.samples[0].class_label, "RX_2");
  EXPECT_EQ(r.samples[1].product, "CCO");
  EXPECT_EQ(r.samples[1].reactants, "CCO");
  EXPECT_EQ(r.samples[2].product, "CO");
  EXPECT_EQ(r.samples[2].reactants, "CO");
  EXPECT_EQ(r.samples[2].class_label, "RX_5");
}

TEST(LoadReactions, EmptyFile) {
  TempDir dir;
  write_lines(dir.path() / "e.rsmi", {});
  const auto r = load_reactions(dir.path() / "e.rsmi");
  EXPECT_TRUE(r.samples.empty());
  EXPECT_TRUE(r.malformed.empty());
}

TEST(LoadReactions, MalformedLinesCollectedUpToThreshold) {
  TempDir dir;
  std::vector<std::string> lines(40, "CCO>>CCO");
  lines[7] = "C1CC>>CC";
  write_lines(dir.path() / "m.rsmi", lines);
  const auto r = load_reactions(dir.path() / "m.rsmi");
  EXPECT_EQ(r.samples.size(), 39u);
  ASSERT_EQ(r.malformed.size(), 1u);
  EXPECT_EQ(r.malformed[0].line_number, 8u);

  lines[9] = "not a reaction";
  lines[10] = "CC>>CC\tRX_99";
  write_lines(dir.path() / "m.rsmi", lines);
  try {
    load_reactions(dir.path() / "m.rsmi");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Format);
  }
}

TEST(LoadReactions, MissingFile) {
  try {
    load_reactions("/nonexistent/file.rsmi");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Io);
  }
}

TEST(LoadReactions, Deterministic) {
  TempDir dir;
  auto [target, augment] = synth_generate({.target_counts = {60, 10, 10}, .augment_counts = {80, 10, 10}});
  save_reactions(dir.path() / "t.rsmi", target.train);
  const auto a = load_reactions(dir.path() / "t.rsmi");
  const auto b = load_reactions(dir.path() / "t.rsmi");
  EXPECT_EQ(a.samples, b.samples);
  EXPECT_EQ(a.samples, target.train);
}

TEST(CleanseOverlap, CanonicalCollision) {
  DatasetSplit target{"target", {sample("CC", "C.C")}, {sample("CN", "C.N")}, {sample("CCO", "CC.O")}};
  std::vector<ReactionSample> augment = {sample("OCC", "O.CC"), sample("CCC", "CC.C")};
  auto [kept, report] = cleanse_overlap(augment, target);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0].product, "CCC");
  EXPECT_EQ(report.removed_products, std::vector<std::string>{"CCO"});
}

TEST(CleanseOverlap, ReportArithmetic) {
  DatasetSplit target{"target", {sample("CC", "C.C")}, {sample("CN", "C.N")}, {sample("CO", "C.O")}};
  std::vector<ReactionSample> augment;
  const std::vector<std::string> products = {"CC", "CCC", "CCCC", "CN", "CCN", "CCCN", "CO", "CCCO", "CCCCO", "CCCCN"};
  for (const auto& p : products) augment.push_back(sample(p, "C"));
  auto [kept, report] = cleanse_overlap(augment, target);
  EXPECT_EQ(report.input_count, 10u);
  EXPECT_EQ(report.removed_count, 3u);
  EXPECT_EQ(report.output_count, 7u);
  EXPECT_EQ(kept.size(), 7u);
  EXPECT_NE(report.to_text().find("removed_count: 3"), std::string::npos);
  EXPECT_NE(report.to_json().find("\"output_count\": 7"), std::string::npos);
}

TEST(SplitDataset, Fractions) {
  std::vector<ReactionSample> samples;
  for (int i = 0; i < 100; ++i) samples.push_back({"C" + std::to_string(i), "C", std::nullopt});
  const auto a = split_dataset(samples, {0.8, 0.1, 0.1}, 7);
  EXPECT_EQ(a.train.size(), 80u);
  EXPECT_EQ(a.val.size(), 10u);
  EXPECT_EQ(a.test.size(), 10u);
  const auto b = split_dataset(samples, {0.8, 0.1, 0.1}, 7);
  EXPECT_EQ(a, b);
  const auto c = split_dataset(samples, {0.8, 0.1, 0.1}, 8);
  EXPECT_NE(a.train, c.train);

  std::set<std::string> seen;
  for (const auto* part : {&a.train, &a.val, &a.test}) {
    for (const auto& s : *part) EXPECT_TRUE(seen.insert(s.product).second);
  }
}

TEST(SplitDataset, TooFewSamples) {
  std::vector<ReactionSample> samples = {{"C", "C", std::nullopt}, {"CC", "C", std::nullopt}};
  try {
    split_dataset(samples, {0.5, 0.25, 0.25}, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::TooFewSamples);
  }
}

TEST(ConcatSplits, LengthAndOrder) {
  std::vector<ReactionSample> a = {{"C", "C", std::nullopt}, {"N", "N", std::nullopt}};
  std::vector<ReactionSample> b = {{"O", "O", std::nullopt}};
  const auto ab = concat_splits(a, b);
  ASSERT_EQ(ab.size(), 3u);
  EXPECT_EQ(ab[0].product, "C");
  EXPECT_EQ(ab[2].product, "O");
  EXPECT_EQ(concat_splits(a, {}), a);
  EXPECT_TRUE(concat_splits({}, {}).empty());
}

TEST(Synth, EsterTemplate) {
  const ReactionTemplate& ester = reaction_templates()[0];
  const ReactionSample s = apply_template(ester, "CC", "C");
  EXPECT_EQ(s.product, "CCOC(C)=O");
  EXPECT_EQ(s.reactants, "CC(=O)O.CCO");
  EXPECT_EQ(s.class_label, "RX_1");
}

TEST(Synth, SuzukiDotBond) {
  const ReactionSample s = apply_template(reaction_templates()[4], "c1ccccc1", "c1ccncc1");
  EXPECT_EQ(s.product, smiles::canonicalize("c1ccccc1-c1ccncc1").text);
  EXPECT_EQ(s.product.find('.'), std::string::npos);
}

TEST(Synth, AllTemplatesOnAllFragmentsParse) {
  for (const auto& t : reaction_templates()) {
    for (const auto& f : fragment_pool()) {
      const ReactionSample s = apply_template(t, f, t.arity == 2 ? "CC" : "");
      EXPECT_EQ(smiles::canonicalize(s.product).text, s.product);
      EXPECT_EQ(s.product.find('.'), std::string::npos) << t.name << " " << f;
    }
  }
}

TEST(Synth, DeterministicAndLabelsFollowTemplates) {
  SynthConfig cfg{.target_templates = {1, 2}, .augment_templates = {1, 2, 3, 4, 5, 6},
                  .target_counts = {200, 20, 20}, .augment_counts = {400, 20, 20}, .seed = 3};
  const auto a = synth_generate(cfg);
  const auto b = synth_generate(cfg);
  EXPECT_EQ(a, b);
  for (const auto* part : {&a.first.train, &a.first.val, &a.first.test}) {
    for (const auto& s : *part) {
      EXPECT_TRUE(s.class_label == "RX_1" || s.class_label == "RX_2");
      // stored samples are fixed points of re-canonicalization
      EXPECT_EQ(smiles::canonicalize(s.product).text, s.product);
      const auto parts = smiles::split_components(s.reactants);
      EXPECT_EQ(smiles::canonical_reactant_set(parts), s.reactants);
    }
  }
  EXPECT_EQ(a.first.train.size(), 200u);
  EXPECT_EQ(a.second.train.size(), 400u);
}

TEST(Synth, ConfigErrors) {
  SynthConfig bad{.target_templates = {1, 7}, .augment_templates = {1, 2}};
  EXPECT_THROW(synth_generate(bad), Error);
  SynthConfig zero{.target_counts = {0, 1, 1}};
  EXPECT_THROW(synth_generate(zero), Error);
}

// Independent hash-join over canonical strings: no cleansed augment product
// may occur in any target part.
TEST(CleanseOverlap, LeakFreedomOnInjectedCorpus) {
  SynthConfig cfg{.target_counts = {300, 40, 40}, .augment_counts = {1500, 50, 50}, .injected_overlaps = 60, .seed = 9};
  auto [target, augment] = synth_generate(cfg);
  auto [kept, report] = cleanse_overlap(augment.train, target);
  EXPECT_EQ(report.input_count, report.removed_count + report.output_count);
  EXPECT_GE(report.removed_count, 1u);

  std::map<std::string, int> join;
  for (const auto* part : {&target.train, &target.val, &target.test}) {
    for (const auto& s : *part) join[smiles::canonicalize(s.product).text] |= 1;
  }
  for (const auto& s : kept) join[smiles::canonicalize(s.product).text] |= 2;
  for (const auto& [key, mask] : join) EXPECT_NE(mask, 3) << key;
}

TEST(SplitIo, RoundTrip) {
  TempDir dir;
  auto [target, augment] = synth_generate({.target_counts = {30, 5, 5}, .augment_counts = {30, 5, 5}});
  save_split(dir.path() / "t", target);
  EXPECT_EQ(load_split(dir.path() / "t", "target"), target);
}

}  // namespace
}  // namespace retro::data
