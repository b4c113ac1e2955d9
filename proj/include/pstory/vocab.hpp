#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace pstory {

using TokenId = std::uint32_t;
using Tokens = std::vector<std::string>;

// Lowercases, splits on whitespace and splits off each of . , ! ? ; : as its
// own token.
Tokens tokenize(std::string_view text);
std::string detokenize(const Tokens& tokens);

class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kBos = 1;
  static constexpr TokenId kEos = 2;
  static constexpr TokenId kUnk = 3;
  static constexpr std::size_t kReserved = 4;

  Vocabulary();

  // Tokens with frequency >= min_count, ordered by frequency (descending)
  // then lexicographically, after the reserved ids.
  static Vocabulary build(const std::vector<Tokens>& corpus, std::size_t min_count);
  static Vocabulary from_tokens(std::vector<std::string> tokens_after_reserved, std::size_t min_count);

  std::size_t size() const { return tokens_.size(); }
  std::size_t min_count() const { return min_count_; }
  bool contains(std::string_view token) const;
  TokenId id(std::string_view token) const;  // kUnk when absent
  const std::string& token(TokenId id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  // BOS + ids + EOS, truncated to max_len (keeping EOS last) and PAD-padded.
  std::vector<TokenId> encode(const Tokens& tokens, std::size_t max_len) const;
  // Drops BOS/PAD, stops at EOS.
  Tokens decode(const std::vector<TokenId>& ids) const;

  std::string to_json() const;
  static Vocabulary from_json(std::string_view text);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_ && a.min_count_ == b.min_count_;
  }

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, TokenId, std::less<>> ids_;
  std::size_t min_count_ = 1;
};

std::vector<TokenId> encode_sentence(const Vocabulary& vocab, const Tokens& tokens, std::size_t max_len);

}  // namespace pstory
