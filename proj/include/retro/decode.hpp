// SPDX-License-Identifier: Apache-2.0
//
// Beam-search decoding, candidate matching and n-best scoring.
//
// Predictions file: one block per sample, separated by a blank line.
//
//   source<TAB>PRODUCT<TAB>k:WIDTH[<TAB>gold:REACTANTS][<TAB>class:LABEL]
//   rank<TAB>logprob<TAB>candidate<TAB>valid:{0,1}<TAB>match:{0,1}
//   ...
#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "retro/dataset.hpp"
#include "retro/nn/decoder.hpp"
#include "retro/nn/vocab.hpp"
#include "retro/parallel.hpp"

namespace retro::decode {

struct Candidate {
  std::vector<int> tokens;  // ends with EOS unless truncated
  double logprob = 0.0;
  bool truncated = false;
  std::string text;
  bool valid = false;
  std::string canonical;  // canonical reactant set when valid
};

struct BeamResult {
  int beam_width = 0;
  std::vector<Candidate> candidates;  // best first
};

namespace detail {

/// Higher score first, then token ids lexicographically.
inline bool ranks_before(double sa, const std::vector<int>& ta, double sb, const std::vector<int>& tb) {
  if (sa != sb) return sa > sb;
  return ta < tb;
}

template <class T>
struct Hyp {
  std::vector<int> tokens;
  double score = 0.0;
  nn::DecoderCache<T> cache;
};

}  // namespace detail

/// Length-wise beam search from BOS. Each live hypothesis is expanded with
/// every token except PAD, BOS and UNK; the best (k - finished) expansions
/// survive. Hypotheses ending in EOS are final; those reaching `max_len`
/// generated tokens without EOS are kept and flagged truncated. Scores are
/// unnormalized sums of token log-probabilities.
template <class T>
BeamResult beam_search(const nn::ParameterSet<T>& params, const nn::ModelConfig& cfg, const std::vector<int>& src,
                       int k, int max_len) {
  using nn::Vocabulary;
  if (k < 1) throw Error(ErrorKind::Config, "beam width must be at least 1");
  if (max_len < 1 || max_len > cfg.max_seq_len) {
    throw Error(ErrorKind::Config, "max_len must be within 1.." + std::to_string(cfg.max_seq_len));
  }
  const nn::IncrementalDecoder<T> decoder(params, cfg, src);
  std::vector<detail::Hyp<T>> live(1);
  live[0].cache = decoder.empty_cache();
  std::vector<Candidate> done;

  struct Expansion {
    double score;
    std::size_t parent;
    int token;
  };
  for (int step = 0; step < max_len && !live.empty(); ++step) {
    std::vector<nn::DecoderCache<T>*> caches;
    std::vector<int> last;
    for (auto& h : live) {
      caches.push_back(&h.cache);
      last.push_back(h.tokens.empty() ? Vocabulary::kBos : h.tokens.back());
    }
    const nn::Mat<T> logits = decoder.step(caches, last);

    std::vector<Expansion> expansions;
    for (std::size_t i = 0; i < live.size(); ++i) {
      const auto row = logits.row(static_cast<Eigen::Index>(i)).template cast<double>();
      const double m = row.maxCoeff();
      const double lse = m + std::log((row.array() - m).exp().sum());
      for (int c = 0; c < cfg.vocab_size; ++c) {
        if (c == Vocabulary::kPad || c == Vocabulary::kBos || c == Vocabulary::kUnk) continue;
        expansions.push_back({live[i].score + row(c) - lse, i, c});
      }
    }
    // all live hypotheses share a length, so comparing (parent tokens, token)
    // is comparing the extended sequences
    auto before = [&](const Expansion& a, const Expansion& b) {
      if (a.score != b.score) return a.score > b.score;
      const auto& ta = live[a.parent].tokens;
      const auto& tb = live[b.parent].tokens;
      if (ta != tb) return ta < tb;
      return a.token < b.token;
    };
    const std::size_t slots = std::min(expansions.size(), static_cast<std::size_t>(k) - done.size());
    std::partial_sort(expansions.begin(), expansions.begin() + static_cast<std::ptrdiff_t>(slots), expansions.end(),
                      before);

    std::vector<detail::Hyp<T>> next;
    for (std::size_t e = 0; e < slots; ++e) {
      const Expansion& x = expansions[e];
      std::vector<int> tokens = live[x.parent].tokens;
      tokens.push_back(x.token);
      if (x.token == Vocabulary::kEos) {
        done.push_back({std::move(tokens), x.score, false});
      } else if (step + 1 == max_len) {
        done.push_back({std::move(tokens), x.score, true});
      } else {
        next.push_back({std::move(tokens), x.score, live[x.parent].cache});
      }
    }
    live = std::move(next);
    if (done.size() >= static_cast<std::size_t>(k)) break;
  }
  std::sort(done.begin(), done.end(), [](const Candidate& a, const Candidate& b) {
    return detail::ranks_before(a.logprob, a.tokens, b.logprob, b.tokens);
  });
  if (done.size() > static_cast<std::size_t>(k)) done.resize(static_cast<std::size_t>(k));
  return {k, std::move(done)};
}

/// Fills text, validity and canonical form of every candidate.
void describe_candidates(BeamResult& result, const nn::Vocabulary& vocab);

/// Beam-decodes every product independently (in parallel) and describes
/// the candidates.
template <class T>
std::vector<BeamResult> decode_products(const nn::ParameterSet<T>& params, const nn::ModelConfig& cfg,
                                        const nn::Vocabulary& vocab, const std::vector<std::string>& products, int k,
                                        int max_len) {
  std::vector<BeamResult> out(products.size());
  parallel_for(products.size(), [&](std::size_t i) {
    out[i] = beam_search(params, cfg, vocab.encode(products[i]), k, max_len);
    describe_candidates(out[i], vocab);
  });
  return out;
}

struct MatchOutcome {
  bool match = false;
  bool valid = false;
};

/// Canonical reactant-set equality; unparsable candidates are invalid and
/// never match.
MatchOutcome match_prediction(const std::string& candidate, const data::ReactionSample& gold);

/// 1-based rank of the first candidate matching `gold`, if any.
std::optional<int> gold_rank(const BeamResult& result, const data::ReactionSample& gold);

struct AccuracyTable {
  std::vector<int> ns;
  std::vector<double> accuracy;  // parallel to ns
  std::size_t samples = 0;

  double at(int n) const;
};

struct ScoredResult {
  BeamResult beam;
  data::ReactionSample gold;
};

inline const std::vector<int> kDefaultNs = {1, 3, 5, 10, 20, 50};

/// acc(n) = fraction of samples whose gold is among the top n candidates.
/// Throws BeamTooNarrow when a beam is narrower than max(ns).
AccuracyTable nbest_accuracy(const std::vector<ScoredResult>& results, const std::vector<int>& ns = kDefaultNs);
/// Same, from precomputed gold ranks (nullopt = not found).
AccuracyTable accuracy_from_ranks(const std::vector<std::optional<int>>& ranks, const std::vector<int>& ns);

struct ClassRow {
  std::string label;
  std::size_t count = 0;
  std::vector<double> accuracy;  // parallel to ns
};

struct ClasswiseReport {
  std::vector<int> ns;
  std::vector<ClassRow> rows;  // sorted by label, "unlabeled" last
};

ClasswiseReport classwise_report(const std::vector<ScoredResult>& results, const std::vector<int>& ns);

std::string accuracy_text(const AccuracyTable& t);
std::string accuracy_csv(const AccuracyTable& t);
std::string classwise_text(const ClasswiseReport& r);
std::string classwise_csv(const ClasswiseReport& r);

/// Rows labelled by strategy, columns "top-n" accuracies in percent.
std::string comparison_text(const std::vector<std::pair<std::string, AccuracyTable>>& rows);
std::string comparison_csv(const std::vector<std::pair<std::string, AccuracyTable>>& rows);

struct PredictionBlock {
  std::string source;
  std::optional<data::ReactionSample> gold;
  BeamResult beam;
};

std::string format_predictions(const std::vector<PredictionBlock>& blocks);
std::vector<PredictionBlock> parse_predictions(const std::string& text);

}  // namespace retro::decode
