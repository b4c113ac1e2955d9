#include "pstory/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <unordered_map>

#include "json.hpp"
#include "pstory/error.hpp"

namespace pstory {

namespace {

constexpr std::string_view kSplitPunct = ".,!?;:";
const std::vector<std::string> kReservedTokens{"<pad>", "<bos>", "<eos>", "<unk>"};

}  // namespace

Tokens tokenize(std::string_view text) {
  Tokens out;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) out.push_back(std::move(current));
    current.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else if (kSplitPunct.find(ch) != std::string_view::npos) {
      flush();
      out.emplace_back(1, ch);
    } else {
      current.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return out;
}

std::string detokenize(const Tokens& tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

Vocabulary::Vocabulary() {
  tokens_ = kReservedTokens;
  for (TokenId i = 0; i < tokens_.size(); ++i) ids_.emplace(tokens_[i], i);
}

Vocabulary Vocabulary::build(const std::vector<Tokens>& corpus, std::size_t min_count) {
  if (min_count < 1) throw ConfigError("build_vocab: min_count must be >= 1");
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& sent : corpus) {
    for (const auto& tok : sent) ++counts[tok];
  }
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [tok, n] : counts) {
    if (n >= min_count &&
        std::find(kReservedTokens.begin(), kReservedTokens.end(), tok) == kReservedTokens.end()) {
      kept.emplace_back(tok, n);
    }
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  std::vector<std::string> toks;
  toks.reserve(kept.size());
  for (auto& [tok, n] : kept) toks.push_back(tok);
  return from_tokens(std::move(toks), min_count);
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens_after_reserved, std::size_t min_count) {
  Vocabulary v;
  v.min_count_ = min_count;
  for (auto& tok : tokens_after_reserved) {
    if (v.ids_.contains(tok)) throw DataError("vocabulary: duplicate token '" + tok + "'");
    v.ids_.emplace(tok, static_cast<TokenId>(v.tokens_.size()));
    v.tokens_.push_back(std::move(tok));
  }
  return v;
}

bool Vocabulary::contains(std::string_view token) const { return ids_.find(token) != ids_.end(); }

TokenId Vocabulary::id(std::string_view token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id >= tokens_.size()) throw IndexError("vocabulary: id " + std::to_string(id) + " out of range");
  return tokens_[id];
}

std::vector<TokenId> Vocabulary::encode(const Tokens& tokens, std::size_t max_len) const {
  if (max_len < 2) throw ContractError("encode_sentence: max_len must be >= 2");
  std::vector<TokenId> ids;
  ids.reserve(max_len);
  ids.push_back(kBos);
  for (const auto& t : tokens) {
    if (ids.size() + 1 >= max_len) break;
    ids.push_back(id(t));
  }
  ids.push_back(kEos);
  ids.resize(max_len, kPad);
  return ids;
}

Tokens Vocabulary::decode(const std::vector<TokenId>& ids) const {
  Tokens out;
  for (auto id : ids) {
    if (id == kEos) break;
    if (id == kBos || id == kPad) continue;
    out.push_back(token(id));
  }
  return out;
}

std::string Vocabulary::to_json() const {
  nlohmann::json j;
  j["min_count"] = min_count_;
  j["tokens"] = std::vector<std::string>(tokens_.begin() + kReserved, tokens_.end());
  return j.dump(1) + "\n";
}

Vocabulary Vocabulary::from_json(std::string_view text) {
  try {
    auto j = nlohmann::json::parse(text);
    return from_tokens(j.at("tokens").get<std::vector<std::string>>(), j.at("min_count").get<std::size_t>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("vocabulary file: ") + e.what());
  }
}

std::vector<TokenId> encode_sentence(const Vocabulary& vocab, const Tokens& tokens, std::size_t max_len) {
  return vocab.encode(tokens, max_len);
}

}  // namespace pstory
