// SPDX-License-Identifier: Apache-2.0
#include <cstdio>
#include <set>
#include <sstream>

#include "retro/decode.hpp"
#include "retro/error.hpp"
#include "retro/smiles.hpp"

namespace retro::decode {

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string pad_left(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

std::string pad_right(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) return out;
    start = tab + 1;
  }
}

std::optional<std::string> canonical_set(const std::string& text) {
  try {
    const auto parts = smiles::split_components(text);
    if (parts.empty()) return std::nullopt;
    return smiles::canonical_reactant_set(parts);
  } catch (const Error&) {
    return std::nullopt;
  }
}

}  // namespace

void describe_candidates(BeamResult& result, const nn::Vocabulary& vocab) {
  for (Candidate& c : result.candidates) {
    c.text = vocab.decode(c.tokens);
    const auto canon = canonical_set(c.text);
    c.valid = canon.has_value();
    c.canonical = canon.value_or("");
  }
}

MatchOutcome match_prediction(const std::string& candidate, const data::ReactionSample& gold) {
  const auto canon = canonical_set(candidate);
  if (!canon) return {false, false};
  return {*canon == gold.reactants, true};
}

std::optional<int> gold_rank(const BeamResult& result, const data::ReactionSample& gold) {
  for (std::size_t i = 0; i < result.candidates.size(); ++i) {
    const Candidate& c = result.candidates[i];
    const bool hit = c.valid ? c.canonical == gold.reactants : match_prediction(c.text, gold).match;
    if (hit) return static_cast<int>(i + 1);
  }
  return std::nullopt;
}

double AccuracyTable::at(int n) const {
  for (std::size_t i = 0; i < ns.size(); ++i) {
    if (ns[i] == n) return accuracy[i];
  }
  throw Error(ErrorKind::Config, "n=" + std::to_string(n) + " not in accuracy table");
}

AccuracyTable accuracy_from_ranks(const std::vector<std::optional<int>>& ranks, const std::vector<int>& ns) {
  AccuracyTable t;
  t.ns = ns;
  t.samples = ranks.size();
  for (int n : ns) {
    std::size_t hits = 0;
    for (const auto& r : ranks) hits += (r && *r <= n) ? 1 : 0;
    t.accuracy.push_back(ranks.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(ranks.size()));
  }
  return t;
}

namespace {
void check_widths(const std::vector<ScoredResult>& results, const std::vector<int>& ns) {
  if (ns.empty()) throw Error(ErrorKind::Config, "no n values requested");
  const int widest = *std::max_element(ns.begin(), ns.end());
  for (const auto& r : results) {
    if (r.beam.beam_width < widest) {
      throw Error(ErrorKind::BeamTooNarrow, "beam width " + std::to_string(r.beam.beam_width) + " < n=" +
                                                std::to_string(widest));
    }
  }
}
}  // namespace

AccuracyTable nbest_accuracy(const std::vector<ScoredResult>& results, const std::vector<int>& ns) {
  check_widths(results, ns);
  std::vector<std::optional<int>> ranks;
  for (const auto& r : results) ranks.push_back(gold_rank(r.beam, r.gold));
  return accuracy_from_ranks(ranks, ns);
}

ClasswiseReport classwise_report(const std::vector<ScoredResult>& results, const std::vector<int>& ns) {
  check_widths(results, ns);
  std::map<std::string, std::vector<std::optional<int>>> by_class;
  std::vector<std::optional<int>> unlabeled;
  for (const auto& r : results) {
    const auto rank = gold_rank(r.beam, r.gold);
    if (r.gold.class_label) {
      by_class[*r.gold.class_label].push_back(rank);
    } else {
      unlabeled.push_back(rank);
    }
  }
  ClasswiseReport report;
  report.ns = ns;
  auto add = [&](const std::string& label, const std::vector<std::optional<int>>& ranks) {
    report.rows.push_back({label, ranks.size(), accuracy_from_ranks(ranks, ns).accuracy});
  };
  // RX_2 before RX_10
  std::vector<std::string> labels;
  for (const auto& [label, _] : by_class) labels.push_back(label);
  std::stable_sort(labels.begin(), labels.end(), [](const std::string& a, const std::string& b) {
    if (a.size() != b.size()) return a.size() < b.size();
    return a < b;
  });
  for (const auto& label : labels) add(label, by_class[label]);
  if (!unlabeled.empty()) add("unlabeled", unlabeled);
  return report;
}

std::string accuracy_text(const AccuracyTable& t) {
  std::string out = pad_right("n", 8) + pad_left("accuracy", 10) + "\n";
  for (std::size_t i = 0; i < t.ns.size(); ++i) {
    out += pad_right(std::to_string(t.ns[i]), 8) + pad_left(fixed(t.accuracy[i], 4), 10) + "\n";
  }
  out += "samples " + std::to_string(t.samples) + "\n";
  return out;
}

std::string accuracy_csv(const AccuracyTable& t) {
  std::string out = "n,accuracy\n";
  for (std::size_t i = 0; i < t.ns.size(); ++i) out += std::to_string(t.ns[i]) + "," + fixed(t.accuracy[i], 6) + "\n";
  return out;
}

std::string classwise_text(const ClasswiseReport& r) {
  std::string out = pad_right("class", 12) + pad_left("count", 7);
  for (int n : r.ns) out += pad_left("top-" + std::to_string(n), 8);
  out += "\n";
  for (const auto& row : r.rows) {
    out += pad_right(row.label, 12) + pad_left(std::to_string(row.count), 7);
    for (double a : row.accuracy) out += pad_left(fixed(a, 2), 8);
    out += "\n";
  }
  return out;
}

std::string classwise_csv(const ClasswiseReport& r) {
  std::string out = "class,count";
  for (int n : r.ns) out += ",top" + std::to_string(n);
  out += "\n";
  for (const auto& row : r.rows) {
    out += row.label + "," + std::to_string(row.count);
    for (double a : row.accuracy) out += "," + fixed(a, 6);
    out += "\n";
  }
  return out;
}

std::string comparison_text(const std::vector<std::pair<std::string, AccuracyTable>>& rows) {
  std::size_t width = 8;
  for (const auto& [name, _] : rows) width = std::max(width, name.size() + 2);
  std::string out = pad_right("strategy", width);
  if (!rows.empty()) {
    for (int n : rows.front().second.ns) out += pad_left("top-" + std::to_string(n), 8);
  }
  out += "\n";
  for (const auto& [name, table] : rows) {
    out += pad_right(name, width);
    for (double a : table.accuracy) out += pad_left(fixed(100.0 * a, 1), 8);
    out += "\n";
  }
  return out;
}

std::string comparison_csv(const std::vector<std::pair<std::string, AccuracyTable>>& rows) {
  std::string out = "strategy";
  if (!rows.empty()) {
    for (int n : rows.front().second.ns) out += ",top" + std::to_string(n);
  }
  out += "\n";
  for (const auto& [name, table] : rows) {
    out += name;
    for (double a : table.accuracy) out += "," + fixed(a, 6);
    out += "\n";
  }
  return out;
}

std::string format_predictions(const std::vector<PredictionBlock>& blocks) {
  std::string out;
  for (const auto& b : blocks) {
    out += "source\t" + b.source + "\tk:" + std::to_string(b.beam.beam_width);
    if (b.gold) {
      out += "\tgold:" + b.gold->reactants;
      if (b.gold->class_label) out += "\tclass:" + *b.gold->class_label;
    }
    out += "\n";
    for (std::size_t i = 0; i < b.beam.candidates.size(); ++i) {
      const Candidate& c = b.beam.candidates[i];
      const bool match = b.gold && c.valid && c.canonical == b.gold->reactants;
      out += std::to_string(i + 1) + "\t" + fixed(c.logprob, 6) + "\t" + c.text + "\tvalid:" + (c.valid ? "1" : "0") +
             "\tmatch:" + (match ? "1" : "0") + "\n";
    }
    out += "\n";
  }
  return out;
}

std::vector<PredictionBlock> parse_predictions(const std::string& text) {
  std::vector<PredictionBlock> blocks;
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  auto bad = [&](const std::string& why) {
    throw Error(ErrorKind::Format, "predictions line " + std::to_string(number) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    const auto f = split_tabs(line);
    if (f[0] == "source") {
      if (f.size() < 2) bad("missing source");
      PredictionBlock b;
      b.source = f[1];
      for (std::size_t i = 2; i < f.size(); ++i) {
        if (f[i].rfind("k:", 0) == 0) {
          try {
            b.beam.beam_width = std::stoi(f[i].substr(2));
          } catch (const std::exception&) {
            bad("bad beam width");
          }
        } else if (f[i].rfind("gold:", 0) == 0) {
          if (!b.gold) b.gold = data::ReactionSample{b.source, "", std::nullopt};
          b.gold->reactants = f[i].substr(5);
        } else if (f[i].rfind("class:", 0) == 0) {
          if (!b.gold) b.gold = data::ReactionSample{b.source, "", std::nullopt};
          b.gold->class_label = f[i].substr(6);
        }
      }
      blocks.push_back(std::move(b));
      continue;
    }
    if (blocks.empty()) bad("candidate before any source line");
    if (f.size() != 5 || f[3].rfind("valid:", 0) != 0 || f[4].rfind("match:", 0) != 0) bad("malformed candidate");
    Candidate c;
    try {
      c.logprob = std::stod(f[1]);
    } catch (const std::exception&) {
      bad("bad log-probability");
    }
    c.text = f[2];
    c.valid = f[3] == "valid:1";
    if (c.valid) c.canonical = canonical_set(c.text).value_or("");
    auto& beam = blocks.back().beam;
    beam.candidates.push_back(std::move(c));
    if (beam.beam_width < static_cast<int>(beam.candidates.size())) bad("more candidates than the beam width");
  }
  return blocks;
}

}  // namespace retro::decode
