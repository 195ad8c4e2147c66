// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace retro::nn {

/// Shared source/target token vocabulary with reserved ids
/// PAD=0, BOS=1, EOS=2, UNK=3.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kReserved = 4;

  Vocabulary();
  /// `tokens` lists every entry including the four reserved ones first.
  explicit Vocabulary(std::vector<std::string> tokens);

  /// Sorted set of tokens appearing in `texts` (SMILES strings).
  static Vocabulary build(std::span<const std::string> texts);

  int size() const { return static_cast<int>(tokens_.size()); }
  int id(std::string_view token) const;
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// Token ids of `smiles`; unknown tokens map to UNK.
  std::vector<int> encode(std::string_view smiles) const;
  /// Concatenated tokens up to the first EOS; PAD/BOS are skipped, UNK
  /// renders as its placeholder text.
  std::string decode(std::span<const int> ids) const;

  /// One token per line, in id order.
  std::string to_text() const;
  static Vocabulary from_text(std::string_view text);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace retro::nn
