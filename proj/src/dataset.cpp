#include "pstory/dataset.hpp"

#include <sstream>

#include "json.hpp"
#include "pstory/checkpoint.hpp"
#include "pstory/error.hpp"

namespace pstory {

using nlohmann::json;

namespace {

template <typename F>
void for_each_line(std::string_view text, F&& fn) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    auto line = text.substr(pos, end - pos);
    pos = end + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    fn(line, line_no);
  }
}

std::string where(std::size_t line_no, const std::string& id) {
  std::string out = "line " + std::to_string(line_no);
  if (!id.empty()) out += " (record '" + id + "')";
  return out;
}

StoryExample parse_story(std::string_view line, std::size_t line_no) {
  std::string id;
  try {
    const json j = json::parse(line);
    if (!j.is_object()) throw DataError("record is not an object");
    if (j.contains("id") && j["id"].is_string()) id = j["id"].get<std::string>();
    if (!j.contains("id")) throw DataError("missing field 'id'");
    if (!j.contains("image_features")) throw DataError("missing field 'image_features'");
    if (!j.contains("sentences")) throw DataError("missing field 'sentences'");
    StoryExample s;
    s.id = j.at("id").get<std::string>();
    const auto& feats = j.at("image_features");
    const auto& sents = j.at("sentences");
    if (!feats.is_array() || feats.size() != kStoryLength) {
      throw DataError("expected 5 image feature vectors, got " +
                      std::to_string(feats.is_array() ? feats.size() : 0));
    }
    if (!sents.is_array() || sents.size() != kStoryLength) {
      throw DataError("expected 5 sentences, got " + std::to_string(sents.is_array() ? sents.size() : 0));
    }
    for (std::size_t k = 0; k < kStoryLength; ++k) {
      auto values = feats[k].get<std::vector<double>>();
      if (values.empty()) throw DataError("image feature vector " + std::to_string(k) + " is empty");
      s.image_features[k] = Tensor::vector(values);
      if (s.image_features[k].size() != s.image_features[0].size()) {
        throw DataError("image feature dims differ within the story");
      }
      if (!s.image_features[k].all_finite()) throw DataError("non-finite image feature value");
      s.sentences[k] = tokenize(sents[k].get<std::string>());
    }
    if (j.contains("persona") && !j["persona"].is_null()) {
      const int p = j["persona"].get<int>();
      if (p < 0 || p >= static_cast<int>(kNumPersonas)) {
        throw DataError("persona " + std::to_string(p) + " outside 0..4");
      }
      s.persona = p;
    }
    return s;
  } catch (const DataError& e) {
    throw DataError("stories " + where(line_no, id) + ": " + e.what());
  } catch (const json::exception& e) {
    throw DataError("stories " + where(line_no, id) + ": " + e.what());
  }
}

}  // namespace

std::vector<StoryExample> parse_stories(std::string_view text) {
  std::vector<StoryExample> out;
  for_each_line(text, [&](std::string_view line, std::size_t n) { out.push_back(parse_story(line, n)); });
  if (!out.empty()) {
    const auto dim = out.front().image_features[0].size();
    for (const auto& s : out) {
      if (s.image_features[0].size() != dim) {
        throw DataError("stories: record '" + s.id + "' has feature dim " +
                        std::to_string(s.image_features[0].size()) + ", expected " + std::to_string(dim));
      }
    }
  }
  return out;
}

std::vector<StoryExample> load_stories(const std::filesystem::path& path) {
  return parse_stories(read_file(path));
}

std::string story_to_json_line(const StoryExample& story) {
  json j;
  j["id"] = story.id;
  json feats = json::array();
  for (const auto& f : story.image_features) feats.push_back(f.values());
  j["image_features"] = std::move(feats);
  json sents = json::array();
  for (const auto& s : story.sentences) sents.push_back(detokenize(s));
  j["sentences"] = std::move(sents);
  if (story.persona) j["persona"] = *story.persona;
  return j.dump();
}

void save_stories(const std::filesystem::path& path, const std::vector<StoryExample>& stories) {
  std::string out;
  for (const auto& s : stories) out += story_to_json_line(s) + "\n";
  write_file_atomic(path, out);
}

std::vector<PersonaUtterance> parse_utterances(std::string_view text) {
  std::vector<PersonaUtterance> out;
  for_each_line(text, [&](std::string_view line, std::size_t n) {
    try {
      const json j = json::parse(line);
      if (!j.contains("text")) throw DataError("missing field 'text'");
      if (!j.contains("cluster")) throw DataError("missing field 'cluster'");
      PersonaUtterance u;
      u.tokens = tokenize(j.at("text").get<std::string>());
      if (u.tokens.empty()) throw DataError("empty utterance");
      u.cluster = j.at("cluster").get<int>();
      if (j.contains("label") && !j["label"].is_null()) {
        const int label = j["label"].get<int>();
        if (label != 0 && label != 1) throw DataError("label must be 0 or 1");
        u.label = label;
      }
      out.push_back(std::move(u));
    } catch (const DataError& e) {
      throw DataError("utterances line " + std::to_string(n) + ": " + e.what());
    } catch (const json::exception& e) {
      throw DataError("utterances line " + std::to_string(n) + ": " + e.what());
    }
  });
  return out;
}

std::vector<PersonaUtterance> load_utterances(const std::filesystem::path& path) {
  return parse_utterances(read_file(path));
}

void save_utterances(const std::filesystem::path& path, const std::vector<PersonaUtterance>& utts) {
  std::string out;
  for (const auto& u : utts) {
    json j;
    j["text"] = detokenize(u.tokens);
    j["cluster"] = u.cluster;
    if (u.label) j["label"] = *u.label;
    out += j.dump() + "\n";
  }
  write_file_atomic(path, out);
}

std::vector<StoryExample> assign_personas(std::vector<StoryExample> stories, std::size_t n_personas,
                                          std::uint64_t seed) {
  if (n_personas < 1) throw ConfigError("assign_personas: n_personas must be >= 1");
  std::vector<std::size_t> order(stories.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed, "assign_personas");
  rng.shuffle(order);
  const std::size_t base = stories.size() / n_personas;
  const std::size_t extra = stories.size() % n_personas;
  std::size_t pos = 0;
  for (std::size_t seg = 0; seg < n_personas; ++seg) {
    const std::size_t len = base + (seg < extra ? 1 : 0);
    for (std::size_t i = 0; i < len; ++i) stories[order[pos++]].persona = static_cast<int>(seg);
  }
  return stories;
}

SplitIndices split_indices(std::size_t n, double train_fraction, double dev_fraction, std::uint64_t seed) {
  if (train_fraction < 0 || dev_fraction < 0 || train_fraction + dev_fraction > 1.0) {
    throw ConfigError("split fractions must be nonnegative and sum to at most 1");
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed, "split");
  rng.shuffle(order);
  const auto n_train = static_cast<std::size_t>(train_fraction * static_cast<double>(n));
  const auto n_dev = static_cast<std::size_t>(dev_fraction * static_cast<double>(n));
  SplitIndices s;
  s.train.assign(order.begin(), order.begin() + n_train);
  s.dev.assign(order.begin() + n_train, order.begin() + n_train + n_dev);
  s.test.assign(order.begin() + n_train + n_dev, order.end());
  return s;
}

}  // namespace pstory
