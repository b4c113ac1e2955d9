#include "pstory/synth.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "pstory/error.hpp"

namespace pstory {

namespace {

const std::vector<std::string> kMarkerStems{"alpha", "beta",  "gamma", "delta", "epsilon", "zeta",
                                            "eta",   "theta", "iota",  "kappa", "lambda",  "mu"};

const std::vector<std::string> kContentWords{
    "dog",    "park",   "beach", "cake",   "party", "tree",   "car",    "house", "river",  "friend",
    "family", "city",   "lake",  "bridge", "game",  "dinner", "garden", "road",  "sky",    "boat",
    "church", "school", "train", "music",  "dance", "flower", "hill",   "snow",  "sun",    "wedding",
    "baby",   "cat",    "ball",  "table",  "shop",  "street", "window", "door",  "museum", "forest",
    "field",  "crowd",  "stage", "light",  "picnic", "bike",  "market", "tower", "castle", "island"};

std::vector<std::string> content_words(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(i < kContentWords.size() ? kContentWords[i] : "word" + std::to_string(i));
  }
  return out;
}

}  // namespace

std::vector<std::vector<std::string>> marker_lexicons(const SynthConfig& cfg) {
  if (!cfg.lexicons.empty()) return cfg.lexicons;
  std::vector<std::vector<std::string>> out(cfg.n_personas);
  for (std::size_t p = 0; p < cfg.n_personas; ++p) {
    const std::string stem = p < kMarkerStems.size() ? kMarkerStems[p] : "persona" + std::to_string(p) + "x";
    for (std::size_t m = 0; m < cfg.markers_per_persona; ++m) out[p].push_back(stem + std::to_string(m));
  }
  return out;
}

void validate(const SynthConfig& cfg) {
  if (cfg.n_personas < 1) throw ConfigError("synth: n_personas must be >= 1");
  if (cfg.content_vocab < cfg.max_words) throw ConfigError("synth: content_vocab smaller than max_words");
  if (cfg.min_words < 1 || cfg.min_words > cfg.max_words) {
    throw ConfigError("synth: need 1 <= min_words <= max_words");
  }
  if (cfg.image_dim < 1) throw ConfigError("synth: image_dim must be >= 1");
  if (cfg.image_noise < 0) throw ConfigError("synth: image_noise must be >= 0");
  if (!cfg.lexicons.empty() && cfg.lexicons.size() != cfg.n_personas) {
    throw ConfigError("synth: expected one lexicon per persona");
  }
  if (cfg.lexicons.empty() && cfg.markers_per_persona < 1) {
    throw ConfigError("synth: markers_per_persona must be >= 1");
  }
  const auto lex = marker_lexicons(cfg);
  const auto content = content_words(cfg.content_vocab);
  std::set<std::string> seen(content.begin(), content.end());
  for (std::size_t p = 0; p < lex.size(); ++p) {
    if (lex[p].empty()) throw ConfigError("synth: lexicon " + std::to_string(p) + " is empty");
    for (const auto& m : lex[p]) {
      if (tokenize(m) != Tokens{m}) throw ConfigError("synth: marker '" + m + "' is not a single token");
      if (!seen.insert(m).second) {
        throw ConfigError("synth: marker '" + m + "' appears in more than one lexicon or is a content word");
      }
    }
  }
}

SynthCorpus synthesize_corpus(const SynthConfig& cfg) {
  validate(cfg);
  SynthCorpus corpus;
  corpus.lexicons = marker_lexicons(cfg);
  corpus.content_words = content_words(cfg.content_vocab);
  const std::size_t V = cfg.content_vocab;

  Rng proj_rng(cfg.seed, "synth/projection");
  Tensor projection({cfg.image_dim, V});
  const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.min_words));
  for (auto& v : projection.span()) v = proj_rng.normal() * scale;

  Rng rng(cfg.seed, "synth/text");
  auto content_sentence = [&] {
    const std::size_t n = cfg.min_words + rng.below(cfg.max_words - cfg.min_words + 1);
    std::vector<std::size_t> ids(V);
    for (std::size_t i = 0; i < V; ++i) ids[i] = i;
    rng.shuffle(ids);
    ids.resize(n);
    return ids;
  };

  std::vector<StoryExample> stories;
  for (std::size_t p = 0; p < cfg.n_personas; ++p) {
    const auto& lex = corpus.lexicons[p];
    for (std::size_t s = 0; s < cfg.stories_per_persona; ++s) {
      StoryExample story;
      story.persona = static_cast<int>(p);
      for (std::size_t k = 0; k < kStoryLength; ++k) {
        const auto ids = content_sentence();
        Tokens sent{lex[rng.below(lex.size())]};
        std::vector<double> bag(V, 0.0);
        for (auto id : ids) {
          sent.push_back(corpus.content_words[id]);
          bag[id] += 1.0;
        }
        sent.push_back(".");
        Tensor feat({cfg.image_dim});
        for (std::size_t r = 0; r < cfg.image_dim; ++r) {
          double acc = 0.0;
          for (std::size_t c = 0; c < V; ++c) acc += projection.at(r, c) * bag[c];
          feat[r] = acc + cfg.image_noise * rng.normal();
        }
        story.image_features[k] = std::move(feat);
        story.sentences[k] = std::move(sent);
      }
      stories.push_back(std::move(story));
    }
  }
  Rng order_rng(cfg.seed, "synth/order");
  order_rng.shuffle(stories);
  for (std::size_t i = 0; i < stories.size(); ++i) stories[i].id = "synth-" + std::to_string(i);
  corpus.stories = std::move(stories);

  std::vector<std::string> all_markers;
  for (const auto& lex : corpus.lexicons) all_markers.insert(all_markers.end(), lex.begin(), lex.end());

  const std::size_t grouped = cfg.n_personas * cfg.personalities_per_persona;
  const std::size_t total = grouped + cfg.distractor_personalities;
  for (std::size_t personality = 0; personality < total; ++personality) {
    const bool distractor = personality >= grouped;
    const auto& pool = distractor ? all_markers
                                  : corpus.lexicons[personality / cfg.personalities_per_persona];
    for (std::size_t u = 0; u < cfg.utterances_per_personality; ++u) {
      const auto ids = content_sentence();
      Tokens toks;
      for (auto id : ids) toks.push_back(corpus.content_words[id]);
      const std::size_t pos = rng.below(toks.size() + 1);
      toks.insert(toks.begin() + static_cast<std::ptrdiff_t>(pos), pool[rng.below(pool.size())]);
      toks.push_back(".");
      corpus.utterances.push_back({std::move(toks), static_cast<int>(personality), std::nullopt});
    }
  }
  return corpus;
}

}  // namespace pstory
