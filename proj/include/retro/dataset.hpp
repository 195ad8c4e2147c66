// SPDX-License-Identifier: Apache-2.0
//
// Reaction corpora: loading, unified canonicalization, product-overlap
// cleansing, splitting and synthetic desk-scale generation.
//
// Reaction file format (UTF-8, one sample per line):
//
//   REACTION_SMILES [ '\t' CLASS_LABEL ]
//   REACTION_SMILES ::= reactants '>>' product | reactants '>' reagents '>' product
//
// Reagents are discarded. CLASS_LABEL is RX_1 .. RX_10 (a bare 1 .. 10 is
// accepted and normalized). Blank lines and lines starting with '#' are
// ignored.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace retro::data {

struct ReactionSample {
  std::string product;    // canonical, single component
  std::string reactants;  // canonical reactant set, '.'-joined and sorted
  std::optional<std::string> class_label;

  friend bool operator==(const ReactionSample&, const ReactionSample&) = default;
};

struct DatasetSplit {
  std::string name;  // "target" or "augment"
  std::vector<ReactionSample> train;
  std::vector<ReactionSample> val;
  std::vector<ReactionSample> test;

  friend bool operator==(const DatasetSplit&, const DatasetSplit&) = default;
};

enum class ReactionFileFormat { ReactionSmiles };

struct MalformedLine {
  std::size_t line_number = 0;  // 1-based
  std::string reason;
};

struct LoadResult {
  std::vector<ReactionSample> samples;
  std::vector<MalformedLine> malformed;
};

/// Parses one reaction line into a canonical sample; throws Error(Format)
/// (or the underlying SMILES error) when the line is unusable.
ReactionSample parse_reaction_line(std::string_view line);

/// Loads a reaction file. Malformed lines are collected; more than
/// `max_malformed_fraction` of them raises Error(Format).
LoadResult load_reactions(const std::filesystem::path& path,
                          ReactionFileFormat format = ReactionFileFormat::ReactionSmiles,
                          double max_malformed_fraction = 0.05);

std::string format_reaction_line(const ReactionSample& s);
void save_reactions(const std::filesystem::path& path, const std::vector<ReactionSample>& samples);

/// Split directories hold train.rsmi, val.rsmi and test.rsmi.
void save_split(const std::filesystem::path& dir, const DatasetSplit& split);
DatasetSplit load_split(const std::filesystem::path& dir, std::string name);

struct CleanseReport {
  std::size_t input_count = 0;
  std::size_t removed_count = 0;
  std::size_t output_count = 0;
  std::vector<std::string> removed_products;

  std::string to_text() const;
  std::string to_json() const;
};

/// Drops augment samples whose canonical product occurs anywhere in the
/// target split (train, val or test). Input order is preserved.
std::pair<std::vector<ReactionSample>, CleanseReport> cleanse_overlap(
    const std::vector<ReactionSample>& augment_train, const DatasetSplit& target);

/// Products of `samples` that also occur as products of `target`.
std::vector<std::string> product_overlap(const std::vector<ReactionSample>& samples,
                                         const DatasetSplit& target);

struct SplitFractions {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

/// Seeded shuffle then partition. Exact duplicate samples are collapsed
/// first so the parts stay disjoint.
DatasetSplit split_dataset(std::vector<ReactionSample> samples, SplitFractions fractions,
                           std::uint64_t seed, std::string name = "target");

std::vector<ReactionSample> concat_splits(const std::vector<ReactionSample>& a,
                                          const std::vector<ReactionSample>& b);

// --- synthetic corpora -----------------------------------------------------

struct SplitCounts {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
};

struct SynthConfig {
  std::vector<int> target_templates{1, 2, 3};
  std::vector<int> augment_templates{1, 2, 3, 4};
  SplitCounts target_counts{2000, 250, 250};
  SplitCounts augment_counts{20000, 500, 500};
  /// Target draws substituents from the first `target_fragments` entries of
  /// the fragment pool, augment from the first `augment_fragments`.
  std::size_t target_fragments = 100;
  std::size_t augment_fragments = 100;
  /// Target samples copied verbatim into augment train to exercise cleansing.
  std::size_t injected_overlaps = 0;
  std::uint64_t seed = 1;
};

struct ReactionTemplate {
  int id = 0;
  std::string name;
  int arity = 2;  // number of substituent slots
  std::string product;
  std::vector<std::string> reactants;
};

/// Built-in rewrite templates; `{R1}`/`{R2}` are substituted by fragments
/// whose first atom is the attachment point, `{R1*}`/`{R2*}` by the same
/// fragment carrying a dot-bond marker.
const std::vector<ReactionTemplate>& reaction_templates();
const std::vector<std::string>& fragment_pool();

/// Applies one template to fragments; every string is canonicalized.
ReactionSample apply_template(const ReactionTemplate& t, std::string_view r1, std::string_view r2 = {});

std::pair<DatasetSplit, DatasetSplit> synth_generate(const SynthConfig& cfg);

}  // namespace retro::data
