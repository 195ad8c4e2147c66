// SPDX-License-Identifier: Apache-2.0
#include "retro/nn/vocab.hpp"

#include <set>

#include "retro/error.hpp"
#include "retro/smiles.hpp"

namespace retro::nn {

namespace {
const std::vector<std::string> kReservedTokens = {"<pad>", "<bos>", "<eos>", "<unk>"};
}

Vocabulary::Vocabulary() : Vocabulary(kReservedTokens) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < kReservedTokens.size() ||
      !std::equal(kReservedTokens.begin(), kReservedTokens.end(), tokens_.begin())) {
    throw Error(ErrorKind::Format, "vocabulary must start with the reserved tokens");
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<int>(i)).second) {
      throw Error(ErrorKind::Format, "duplicate vocabulary token '" + tokens_[i] + "'");
    }
  }
}

Vocabulary Vocabulary::build(std::span<const std::string> texts) {
  std::set<std::string> seen;
  for (const auto& t : texts) {
    for (auto& tok : smiles::tokenize(t)) seen.insert(std::move(tok));
  }
  std::vector<std::string> tokens = kReservedTokens;
  tokens.insert(tokens.end(), seen.begin(), seen.end());
  return Vocabulary(std::move(tokens));
}

int Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

std::vector<int> Vocabulary::encode(std::string_view smiles) const {
  std::vector<int> ids;
  for (const auto& tok : smiles::tokenize(smiles)) ids.push_back(id(tok));
  return ids;
}

std::string Vocabulary::decode(std::span<const int> ids) const {
  std::string out;
  for (int id : ids) {
    if (id == kEos) break;
    if (id == kPad || id == kBos) continue;
    out += token(id);
  }
  return out;
}

std::string Vocabulary::to_text() const {
  std::string out;
  for (const auto& t : tokens_) out += t + "\n";
  return out;
}

Vocabulary Vocabulary::from_text(std::string_view text) {
  std::vector<std::string> tokens;
  while (!text.empty()) {
    const std::size_t nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) tokens.emplace_back(line);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
  }
  return Vocabulary(std::move(tokens));
}

}  // namespace retro::nn
