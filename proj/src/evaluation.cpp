#include "pstory/evaluation.hpp"

#include <cstdio>
#include <sstream>

#include "json.hpp"
#include "pstory/error.hpp"

namespace pstory {

namespace {

template <typename T>
std::size_t lcs(std::span<const T> a, std::span<const T> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

template <typename T>
RougeScore rouge(std::span<const T> cand, std::span<const T> ref, double beta) {
  if (ref.empty()) throw ContractError("rouge_l: empty reference");
  if (!(beta > 0.0)) throw ConfigError("rouge_l: beta must be positive");
  RougeScore s;
  s.beta = beta;
  const double l = static_cast<double>(lcs(cand, ref));
  if (l == 0.0) return s;
  s.precision = l / static_cast<double>(cand.size());
  s.recall = l / static_cast<double>(ref.size());
  const double b2 = beta * beta;
  s.f = (1.0 + b2) * s.precision * s.recall / (s.recall + b2 * s.precision);
  return s;
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

}  // namespace

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) { return lcs(a, b); }
std::size_t lcs_length(std::span<const TokenId> a, std::span<const TokenId> b) { return lcs(a, b); }

RougeScore rouge_l(std::span<const std::string> candidate, std::span<const std::string> reference, double beta) {
  return rouge(candidate, reference, beta);
}
RougeScore rouge_l(std::span<const TokenId> candidate, std::span<const TokenId> reference, double beta) {
  return rouge(candidate, reference, beta);
}

PersonaAccuracy persona_accuracy(std::span<const GeneratedStory> stories, std::span<const int> personas,
                                 std::span<const TextCnnClassifier> classifiers) {
  if (stories.size() != personas.size()) throw ContractError("persona_accuracy: stories and personas differ in length");
  const std::size_t n = classifiers.size();
  std::vector<std::size_t> hits(n, 0);
  PersonaAccuracy out;
  out.sentences.assign(n, 0);
  for (std::size_t i = 0; i < stories.size(); ++i) {
    const int p = personas[i];
    if (p < 0 || static_cast<std::size_t>(p) >= n) throw ContractError("persona_accuracy: persona out of range");
    for (const auto& sent : stories[i]) {
      ++out.sentences[p];
      if (!sent.empty() && classify_hard(classifiers[p], sent) > 0.5) ++hits[p];
    }
  }
  for (std::size_t j = 0; j < n; ++j) {
    out.accuracy.push_back(out.sentences[j] == 0
                               ? std::nullopt
                               : std::optional<double>(static_cast<double>(hits[j]) /
                                                       static_cast<double>(out.sentences[j])));
  }
  return out;
}

std::vector<std::optional<double>> accuracy_from_raw(std::span<const SentenceRecord> raw, std::size_t n_personas) {
  std::vector<std::size_t> hits(n_personas, 0), total(n_personas, 0);
  for (const auto& r : raw) {
    if (r.persona < 0 || static_cast<std::size_t>(r.persona) >= n_personas) {
      throw ContractError("raw record persona out of range");
    }
    ++total[r.persona];
    if (r.probability > 0.5) ++hits[r.persona];
  }
  std::vector<std::optional<double>> out;
  for (std::size_t j = 0; j < n_personas; ++j) {
    out.push_back(total[j] == 0 ? std::nullopt
                                : std::optional<double>(static_cast<double>(hits[j]) / static_cast<double>(total[j])));
  }
  return out;
}

DecodeConfig story_decode_config(const DecodeConfig& decode, const std::string& story_id) {
  DecodeConfig dc = decode;
  dc.seed = splitmix64(decode.seed ^ fnv1a64(story_id));
  return dc;
}

EvalReport corpus_report(const GeneratorModel& model, std::span<const StoryExample> testset, const Vocabulary& vocab,
                         std::span<const TextCnnClassifier> classifiers, const EvalOptions& options,
                         const std::string& config_echo) {
  if (testset.empty()) throw EmptyInputError("corpus_report: empty test set");
  const std::size_t n = model.config().n_personas;
  if (classifiers.size() != n) {
    throw ConfigError("corpus_report: need " + std::to_string(n) + " classifiers, got " +
                      std::to_string(classifiers.size()));
  }
  for (const auto& c : classifiers) {
    if (c.vocab_size() != vocab.size()) throw ConfigError("corpus_report: classifier vocabulary size mismatch");
  }
  if (model.vocab_size() != vocab.size()) throw ConfigError("corpus_report: generator vocabulary size mismatch");

  EvalReport rep;
  rep.variant = std::string(variant_name(model.variant()));
  rep.beta = options.beta;
  rep.granularity = options.granularity;
  rep.config_echo = config_echo;
  rep.stories = testset.size();

  double sum_p = 0.0, sum_r = 0.0, sum_f = 0.0;
  std::size_t rouge_count = 0;
  for (const auto& story : testset) {
    if (!story.persona) throw DataError("test story '" + story.id + "' has no persona");
    const int persona = *story.persona;
    const GeneratedStory gen =
        generate_story(model, story.image_features, persona, story_decode_config(options.decode, story.id));

    std::array<std::string, kStoryLength> texts;
    Tokens cand_all, ref_all;
    for (std::size_t k = 0; k < kStoryLength; ++k) {
      const Tokens cand = vocab.decode(gen[k]);
      texts[k] = detokenize(cand);
      SentenceRecord rec{story.id, persona, k, texts[k], 0.0};
      if (!gen[k].empty()) rec.probability = classify_hard(classifiers[persona], gen[k]);
      rep.raw.push_back(std::move(rec));
      if (options.granularity == RougeGranularity::Sentence) {
        if (story.sentences[k].empty()) continue;
        const auto s = rouge_l(cand, story.sentences[k], options.beta);
        sum_p += s.precision;
        sum_r += s.recall;
        sum_f += s.f;
        ++rouge_count;
      } else {
        cand_all.insert(cand_all.end(), cand.begin(), cand.end());
        ref_all.insert(ref_all.end(), story.sentences[k].begin(), story.sentences[k].end());
      }
    }
    if (options.granularity == RougeGranularity::Story) {
      const auto s = rouge_l(cand_all, ref_all, options.beta);
      sum_p += s.precision;
      sum_r += s.recall;
      sum_f += s.f;
      ++rouge_count;
    }
    rep.generated.push_back({story.id, persona, texts});
  }
  if (rouge_count == 0) throw EmptyInputError("corpus_report: no non-empty reference sentences");
  rep.rouge_precision = sum_p / static_cast<double>(rouge_count);
  rep.rouge_recall = sum_r / static_cast<double>(rouge_count);
  rep.rouge_f = sum_f / static_cast<double>(rouge_count);
  rep.persona_accuracy = accuracy_from_raw(rep.raw, n);
  rep.persona_sentences.assign(n, 0);
  for (const auto& r : rep.raw) ++rep.persona_sentences[r.persona];
  return rep;
}

std::string EvalReport::to_json() const {
  nlohmann::json acc = nlohmann::json::array();
  for (const auto& a : persona_accuracy) acc.push_back(a ? nlohmann::json(*a) : nlohmann::json(nullptr));
  nlohmann::json j = {{"variant", variant},
                      {"stories", stories},
                      {"persona_accuracy", acc},
                      {"persona_sentences", persona_sentences},
                      {"rouge_l",
                       {{"precision", rouge_precision},
                        {"recall", rouge_recall},
                        {"f", rouge_f},
                        {"beta", beta},
                        {"granularity", granularity == RougeGranularity::Story ? "story" : "sentence"}}},
                      {"accuracy_threshold", 0.5},
                      {"config", nlohmann::json::parse(config_echo)}};
  return j.dump(2) + "\n";
}

std::string EvalReport::to_table() const {
  std::ostringstream out;
  out << "variant " << variant << "  stories " << stories << "\n";
  out << "rouge_l f " << fmt("%.4f", rouge_f) << "  p " << fmt("%.4f", rouge_precision) << "  r "
      << fmt("%.4f", rouge_recall) << "  (beta " << fmt("%.2f", beta) << ", "
      << (granularity == RougeGranularity::Story ? "story" : "sentence") << " level)\n";
  out << "persona  sentences  accuracy\n";
  for (std::size_t j = 0; j < persona_accuracy.size(); ++j) {
    char line[96];
    std::snprintf(line, sizeof line, "%-7zu  %9zu  %8s\n", j, persona_sentences[j],
                  persona_accuracy[j] ? fmt("%.4f", *persona_accuracy[j]).c_str() : "absent");
    out << line;
  }
  return out.str();
}

std::string EvalReport::raw_jsonl() const {
  std::string out;
  for (const auto& r : raw) {
    nlohmann::json j = {{"story", r.story_id},
                        {"persona", r.persona},
                        {"sentence", r.index},
                        {"text", r.text},
                        {"probability", r.probability}};
    out += j.dump() + "\n";
  }
  return out;
}

std::string EvalReport::generated_jsonl() const {
  std::string out;
  for (const auto& g : generated) {
    nlohmann::json j = {{"id", g.id}, {"persona", g.persona}, {"sentences", g.sentences}};
    out += j.dump() + "\n";
  }
  return out;
}

}  // namespace pstory
