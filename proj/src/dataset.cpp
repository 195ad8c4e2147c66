// SPDX-License-Identifier: Apache-2.0
#include "retro/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>
#include <unordered_set>

#include "retro/error.hpp"
#include "retro/io.hpp"
#include "retro/parallel.hpp"
#include "retro/random.hpp"
#include "retro/smiles.hpp"

namespace retro::data {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\n')) s.remove_suffix(1);
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  return s;
}

std::optional<std::string> normalize_label(std::string_view raw) {
  std::string_view digits = raw;
  if (digits.starts_with("RX_")) digits.remove_prefix(3);
  if (digits.empty() || digits.size() > 2) return std::nullopt;
  int value = 0;
  for (char c : digits) {
    if (c < '0' || c > '9') return std::nullopt;
    value = value * 10 + (c - '0');
  }
  if (value < 1 || value > 10) return std::nullopt;
  return "RX_" + std::to_string(value);
}

bool is_comment_or_blank(std::string_view line) {
  line = trim(line);
  return line.empty() || line.front() == '#';
}

}  // namespace

ReactionSample parse_reaction_line(std::string_view line) {
  line = trim(line);
  std::string_view rxn = line;
  std::optional<std::string> label;
  if (const auto tab = line.find('\t'); tab != std::string_view::npos) {
    rxn = line.substr(0, tab);
    const std::string_view raw = trim(line.substr(tab + 1));
    if (!raw.empty()) {
      label = normalize_label(raw);
      if (!label) throw Error(ErrorKind::Format, "unknown class label '" + std::string(raw) + "'");
    }
  }
  const auto first = rxn.find('>');
  const auto last = rxn.rfind('>');
  if (first == std::string_view::npos || first == last || rxn.find('>', first + 1) != last) {
    throw Error(ErrorKind::Format, "reaction SMILES needs exactly two '>' separators");
  }
  const std::string_view reactants = rxn.substr(0, first);
  const std::string_view product = rxn.substr(last + 1);
  if (reactants.empty() || product.empty()) throw Error(ErrorKind::Format, "empty reactant or product side");

  ReactionSample sample;
  sample.product = smiles::canonicalize(smiles::strip_atom_maps(product)).text;
  if (sample.product.find('.') != std::string::npos) {
    throw Error(ErrorKind::Format, "product has more than one component");
  }
  std::vector<std::string> parts;
  for (std::string& p : smiles::split_components(reactants)) parts.push_back(smiles::strip_atom_maps(p));
  sample.reactants = smiles::canonical_reactant_set(parts);
  sample.class_label = std::move(label);
  return sample;
}

LoadResult load_reactions(const std::filesystem::path& path, ReactionFileFormat, double max_malformed_fraction) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(std::move(line));

  std::vector<std::optional<ReactionSample>> parsed(lines.size());
  std::vector<std::string> reasons(lines.size());
  parallel_for(lines.size(), [&](std::size_t i) {
    if (is_comment_or_blank(lines[i])) return;
    try {
      parsed[i] = parse_reaction_line(lines[i]);
    } catch (const Error& e) {
      reasons[i] = e.what();
    }
  });

  LoadResult result;
  std::size_t considered = 0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (is_comment_or_blank(lines[i])) continue;
    ++considered;
    if (parsed[i]) {
      result.samples.push_back(std::move(*parsed[i]));
    } else {
      result.malformed.push_back({i + 1, reasons[i]});
    }
  }
  if (considered > 0 &&
      static_cast<double>(result.malformed.size()) > max_malformed_fraction * static_cast<double>(considered)) {
    throw Error(ErrorKind::Format, path.string() + ": " + std::to_string(result.malformed.size()) + " of " +
                                       std::to_string(considered) + " lines malformed (first at line " +
                                       std::to_string(result.malformed.front().line_number) + ")");
  }
  return result;
}

std::string format_reaction_line(const ReactionSample& s) {
  std::string line = s.reactants + ">>" + s.product;
  if (s.class_label) line += "\t" + *s.class_label;
  return line;
}

void save_reactions(const std::filesystem::path& path, const std::vector<ReactionSample>& samples) {
  std::string content;
  for (const auto& s : samples) content += format_reaction_line(s) + "\n";
  io::write_file_atomic(path, content);
}

void save_split(const std::filesystem::path& dir, const DatasetSplit& split) {
  save_reactions(dir / "train.rsmi", split.train);
  save_reactions(dir / "val.rsmi", split.val);
  save_reactions(dir / "test.rsmi", split.test);
}

DatasetSplit load_split(const std::filesystem::path& dir, std::string name) {
  DatasetSplit split;
  split.name = std::move(name);
  split.train = load_reactions(dir / "train.rsmi").samples;
  split.val = load_reactions(dir / "val.rsmi").samples;
  split.test = load_reactions(dir / "test.rsmi").samples;
  return split;
}

std::string CleanseReport::to_text() const {
  std::ostringstream out;
  out << "input_count: " << input_count << "\n"
      << "removed_count: " << removed_count << "\n"
      << "output_count: " << output_count << "\n"
      << "removed_products:";
  for (const auto& p : removed_products) out << " " << p;
  out << "\n";
  return out.str();
}

std::string CleanseReport::to_json() const {
  nlohmann::json j = {{"input_count", input_count},
                      {"removed_count", removed_count},
                      {"output_count", output_count},
                      {"removed_products", removed_products}};
  return j.dump(2) + "\n";
}

std::pair<std::vector<ReactionSample>, CleanseReport> cleanse_overlap(
    const std::vector<ReactionSample>& augment_train, const DatasetSplit& target) {
  std::unordered_set<std::string> keys;
  for (const auto* part : {&target.train, &target.val, &target.test}) {
    for (const auto& s : *part) keys.insert(s.product);
  }
  std::vector<ReactionSample> kept;
  CleanseReport report;
  report.input_count = augment_train.size();
  for (const auto& s : augment_train) {
    if (keys.contains(s.product)) {
      report.removed_products.push_back(s.product);
    } else {
      kept.push_back(s);
    }
  }
  report.removed_count = report.removed_products.size();
  report.output_count = kept.size();
  return {std::move(kept), std::move(report)};
}

std::vector<std::string> product_overlap(const std::vector<ReactionSample>& samples, const DatasetSplit& target) {
  std::unordered_set<std::string> keys;
  for (const auto* part : {&target.train, &target.val, &target.test}) {
    for (const auto& s : *part) keys.insert(s.product);
  }
  std::vector<std::string> hits;
  for (const auto& s : samples) {
    if (keys.contains(s.product)) hits.push_back(s.product);
  }
  return hits;
}

DatasetSplit split_dataset(std::vector<ReactionSample> samples, SplitFractions f, std::uint64_t seed,
                           std::string name) {
  if (f.train <= 0 || f.val <= 0 || f.test <= 0 || std::abs(f.train + f.val + f.test - 1.0) > 1e-9) {
    throw Error(ErrorKind::Config, "split fractions must be positive and sum to 1");
  }
  std::set<std::pair<std::string, std::string>> seen;
  std::vector<ReactionSample> unique;
  for (auto& s : samples) {
    if (seen.insert({s.product, s.reactants}).second) unique.push_back(std::move(s));
  }
  Rng rng(seed);
  rng.shuffle(std::span(unique));
  const auto n = static_cast<double>(unique.size());
  const auto n_train = static_cast<std::size_t>(std::llround(n * f.train));
  const auto n_val = static_cast<std::size_t>(std::llround(n * f.val));
  if (n_train == 0 || n_val == 0 || n_train + n_val >= unique.size()) {
    throw Error(ErrorKind::TooFewSamples, std::to_string(unique.size()) + " samples cannot fill three parts");
  }
  DatasetSplit split;
  split.name = std::move(name);
  split.train.assign(unique.begin(), unique.begin() + static_cast<std::ptrdiff_t>(n_train));
  split.val.assign(unique.begin() + static_cast<std::ptrdiff_t>(n_train),
                   unique.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  split.test.assign(unique.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), unique.end());
  return split;
}

std::vector<ReactionSample> concat_splits(const std::vector<ReactionSample>& a, const std::vector<ReactionSample>& b) {
  std::vector<ReactionSample> out;
  out.reserve(a.size() + b.size());
  out.insert(out.end(), a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

// --- synthetic corpora -----------------------------------------------------

const std::vector<ReactionTemplate>& reaction_templates() {
  static const std::vector<ReactionTemplate> kTemplates = {
      {1, "ester formation", 2, "O({R1})C(=O){R2}", {"O{R1}", "OC(=O){R2}"}},
      {2, "amide coupling", 2, "N({R1})C(=O){R2}", {"N{R1}", "OC(=O){R2}"}},
      {3, "Williamson ether", 2, "O({R1}){R2}", {"O{R1}", "Br{R2}"}},
      {4, "N-alkylation", 2, "N({R1}){R2}", {"N{R1}", "Cl{R2}"}},
      {5, "Suzuki coupling", 2, "{R1*}.{R2*}", {"Br{R1}", "OB(O){R2}"}},
      {6, "reductive amination", 2, "N({R1})C{R2}", {"N{R1}", "O=C{R2}"}},
      {7, "sulfonamide formation", 2, "N({R1})S(=O)(=O){R2}", {"N{R1}", "ClS(=O)(=O){R2}"}},
      {8, "Boc deprotection", 1, "N{R1}", {"CC(C)(C)OC(=O)N{R1}"}},
      {9, "ester hydrolysis", 1, "OC(=O){R1}", {"COC(=O){R1}"}},
      {10, "nitrile reduction", 1, "NC{R1}", {"N#C{R1}"}},
  };
  return kTemplates;
}

const std::vector<std::string>& fragment_pool() {
  // first atom is the attachment point and carries at least one hydrogen
  static const std::vector<std::string> kPool = {
      "C",           "CC",          "CCC",         "C(C)C",        "CCCC",         "CC(C)C",
      "C1CC1",       "C1CCCC1",     "C1CCCCC1",    "c1ccccc1",     "c1ccc(C)cc1",  "c1ccc(F)cc1",
      "c1ccc(Cl)cc1", "c1ccc(OC)cc1", "c1ccncc1",   "c1ccsc1",      "c1ccoc1",      "Cc1ccccc1",
      "CCOC",        "CC#N",        "CC=C",        "CC(F)(F)F",    "CCN(C)C",      "C1CCOC1",
      "c1cccc(C)c1", "c1ccc(Br)cc1", "c1cccnc1",   "CCc1ccccc1",   "CCCCC",        "C(C)CC",
      "c1ccc(C#N)cc1", "c1ccc(C(F)(F)F)cc1", "CC1CCCC1", "CCOc1ccccc1", "c1ccc2ccccc2c1", "CCSC",
      "C1CCNC1",     "CC(=O)C",     "c1cc(C)cc(C)c1", "CC(C)(C)C",   "c1ccc(N(C)C)cc1", "CCCOC",
      "c1ncccn1",    "c1ccc(O)cc1", "CC1CC1",      "CCCCCC",       "c1ccc(SC)cc1", "C1CCC1",
      "c1cscn1",     "CCC(C)C",     "c1ccc(CC)cc1", "CC(C)O",      "c1ccc2occc2c1", "C1COCCN1",
      "CCCC#N",      "c1cc(F)cc(F)c1", "CC=CC",     "CCOC(C)=O",    "c1ccc(I)cc1",  "CCCCl",
      "CCCCCCC",     "CC(C)CC",     "CCC(C)(C)C",  "C1CCCCCC1",     "CC1CCCCC1",    "C1CCC(C)CC1",
      "c1ccc(Cl)c(Cl)c1", "c1ccc(C)c(C)c1", "c1ccc(OCC)cc1", "c1ccc(C(C)C)cc1", "c1ccc(C(C)=O)cc1",
      "c1ccc(S(C)(=O)=O)cc1", "c1ccc(N)cc1", "c1ccnc(C)c1", "c1cnccn1", "c1ccc2ncccc2c1",
      "c1ccc2[nH]ccc2c1", "c1cc2ccccc2s1", "c1ccc(-c2ccccc2)cc1", "C1CCN(C)CC1", "C1CCOCC1",
      "C1CCSC1",     "CC(F)F",      "CCC(F)(F)F",  "CCOCC",         "CCOCCOC",      "CCCSC",
      "CC(C)OC",     "CCN1CCCC1",   "CCC#C",       "CC=C(C)C",      "C=CC",         "CCCCBr",
      "c1ccc(Br)c(F)c1", "c1cc(Cl)ccc1F", "c1ccc(OC(F)(F)F)cc1", "c1ccc(C(=O)OC)cc1", "c1csc(C)n1",
      "c1ccc2OCOc2c1", "CCCCCCCC",
  };
  return kPool;
}

namespace {

std::string with_marker(std::string_view fragment) {
  // insert "-%99" (or "%99") directly after the first atom token
  const auto tokens = smiles::tokenize(fragment);
  const bool aromatic = std::islower(static_cast<unsigned char>(tokens.front()[0])) != 0;
  std::string out = tokens.front() + (aromatic ? "-%99" : "%99");
  for (std::size_t i = 1; i < tokens.size(); ++i) out += tokens[i];
  return out;
}

std::string substitute(std::string_view pattern, std::string_view r1, std::string_view r2) {
  std::string out(pattern);
  auto replace = [&](std::string_view key, const std::string& value) {
    for (std::size_t pos; (pos = out.find(key)) != std::string::npos;) out.replace(pos, key.size(), value);
  };
  replace("{R1*}", with_marker(r1));
  replace("{R2*}", r2.empty() ? std::string() : with_marker(r2));
  replace("{R1}", std::string(r1));
  replace("{R2}", std::string(r2));
  return out;
}

std::vector<ReactionSample> draw_unique(Rng& rng, const std::vector<int>& template_ids, std::size_t fragments,
                                        std::size_t count, std::unordered_set<std::string>& used_products) {
  const auto& pool = fragment_pool();
  const auto& templates = reaction_templates();
  std::size_t combinations = 0;
  for (int id : template_ids) {
    combinations += templates[static_cast<std::size_t>(id - 1)].arity == 2 ? fragments * fragments : fragments;
  }
  if (count > combinations) {
    throw Error(ErrorKind::Config, "cannot draw " + std::to_string(count) + " distinct products from at most " +
                                       std::to_string(combinations) + " template/fragment combinations");
  }
  std::vector<ReactionSample> out;
  std::size_t attempts = 0;
  const std::size_t max_attempts = 200 * count + 10000;
  while (out.size() < count) {
    if (++attempts > max_attempts) {
      throw Error(ErrorKind::Config, "cannot draw " + std::to_string(count) +
                                         " distinct products from the configured templates and fragments");
    }
    const int id = template_ids[rng.below(template_ids.size())];
    const ReactionTemplate& t = templates[static_cast<std::size_t>(id - 1)];
    const std::string& r1 = pool[rng.below(fragments)];
    const std::string& r2 = pool[rng.below(fragments)];
    ReactionSample s = apply_template(t, r1, t.arity == 2 ? std::string_view(r2) : std::string_view());
    if (!used_products.insert(s.product).second) continue;
    out.push_back(std::move(s));
  }
  return out;
}

void validate(const SynthConfig& cfg) {
  auto check_ids = [](const std::vector<int>& ids, std::string_view what) {
    if (ids.empty()) throw Error(ErrorKind::Config, std::string(what) + " template set is empty");
    for (int id : ids) {
      if (id < 1 || id > static_cast<int>(reaction_templates().size())) {
        throw Error(ErrorKind::Config, "unknown template id " + std::to_string(id));
      }
    }
  };
  check_ids(cfg.target_templates, "target");
  check_ids(cfg.augment_templates, "augment");
  for (int id : cfg.target_templates) {
    if (std::find(cfg.augment_templates.begin(), cfg.augment_templates.end(), id) == cfg.augment_templates.end()) {
      throw Error(ErrorKind::Config, "target templates must be a subset of augment templates");
    }
  }
  for (const auto& c : {cfg.target_counts, cfg.augment_counts}) {
    if (c.train == 0 || c.val == 0 || c.test == 0) throw Error(ErrorKind::Config, "split counts must be positive");
  }
  const std::size_t pool = fragment_pool().size();
  if (cfg.target_fragments == 0 || cfg.augment_fragments == 0 || cfg.target_fragments > pool ||
      cfg.augment_fragments > pool) {
    throw Error(ErrorKind::Config, "fragment counts must be within 1.." + std::to_string(pool));
  }
}

}  // namespace

ReactionSample apply_template(const ReactionTemplate& t, std::string_view r1, std::string_view r2) {
  ReactionSample s;
  s.product = smiles::canonicalize(substitute(t.product, r1, r2)).text;
  std::vector<std::string> reactants;
  for (const auto& pattern : t.reactants) reactants.push_back(substitute(pattern, r1, r2));
  s.reactants = smiles::canonical_reactant_set(reactants);
  s.class_label = "RX_" + std::to_string(t.id);
  return s;
}

std::pair<DatasetSplit, DatasetSplit> synth_generate(const SynthConfig& cfg) {
  validate(cfg);
  Rng target_rng(mix_seed(cfg.seed, 0x7a7));
  Rng augment_rng(mix_seed(cfg.seed, 0xa06));

  std::unordered_set<std::string> target_products;
  const auto& tc = cfg.target_counts;
  auto target_all = draw_unique(target_rng, cfg.target_templates, cfg.target_fragments,
                                tc.train + tc.val + tc.test, target_products);
  DatasetSplit target{"target", {}, {}, {}};
  target.train.assign(target_all.begin(), target_all.begin() + static_cast<std::ptrdiff_t>(tc.train));
  target.val.assign(target_all.begin() + static_cast<std::ptrdiff_t>(tc.train),
                    target_all.begin() + static_cast<std::ptrdiff_t>(tc.train + tc.val));
  target.test.assign(target_all.begin() + static_cast<std::ptrdiff_t>(tc.train + tc.val), target_all.end());

  std::unordered_set<std::string> augment_products;
  const auto& ac = cfg.augment_counts;
  auto augment_all = draw_unique(augment_rng, cfg.augment_templates, cfg.augment_fragments,
                                 ac.train + ac.val + ac.test, augment_products);
  DatasetSplit augment{"augment", {}, {}, {}};
  augment.train.assign(augment_all.begin(), augment_all.begin() + static_cast<std::ptrdiff_t>(ac.train));
  augment.val.assign(augment_all.begin() + static_cast<std::ptrdiff_t>(ac.train),
                     augment_all.begin() + static_cast<std::ptrdiff_t>(ac.train + ac.val));
  augment.test.assign(augment_all.begin() + static_cast<std::ptrdiff_t>(ac.train + ac.val), augment_all.end());

  for (std::size_t k = 0; k < cfg.injected_overlaps && k < target_all.size(); ++k) {
    const ReactionSample& s = target_all[augment_rng.below(target_all.size())];
    augment.train.push_back(s);
  }
  return {std::move(target), std::move(augment)};
}

}  // namespace retro::data
