#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pstory/classifier.hpp"
#include "pstory/story_model.hpp"

namespace pstory {

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);
std::size_t lcs_length(std::span<const TokenId> a, std::span<const TokenId> b);

struct RougeScore {
  double precision = 0.0;
  double recall = 0.0;
  double f = 0.0;
  double beta = 1.2;
};

// Reference must be non-empty. F = (1 + b^2) P R / (R + b^2 P), 0 without overlap.
RougeScore rouge_l(std::span<const std::string> candidate, std::span<const std::string> reference,
                   double beta = 1.2);
RougeScore rouge_l(std::span<const TokenId> candidate, std::span<const TokenId> reference, double beta = 1.2);

struct PersonaAccuracy {
  std::vector<std::optional<double>> accuracy;  // nullopt when no story targets the persona
  std::vector<std::size_t> sentences;
};

// For persona j: fraction of sentences of stories targeted at j that
// classifier j scores strictly above 0.5. An empty sentence counts as a miss.
PersonaAccuracy persona_accuracy(std::span<const GeneratedStory> stories, std::span<const int> personas,
                                 std::span<const TextCnnClassifier> classifiers);

enum class RougeGranularity { Story, Sentence };

struct EvalOptions {
  DecodeConfig decode;
  double beta = 1.2;
  RougeGranularity granularity = RougeGranularity::Story;
};

struct SentenceRecord {
  std::string story_id;
  int persona = 0;
  std::size_t index = 0;
  std::string text;
  double probability = 0.0;  // classifier of the target persona
};

struct GeneratedRecord {
  std::string id;
  int persona = 0;
  std::array<std::string, kStoryLength> sentences;
};

struct EvalReport {
  std::string variant;
  std::vector<std::optional<double>> persona_accuracy;
  std::vector<std::size_t> persona_sentences;
  std::size_t stories = 0;
  double rouge_precision = 0.0;
  double rouge_recall = 0.0;
  double rouge_f = 0.0;
  double beta = 1.2;
  RougeGranularity granularity = RougeGranularity::Story;
  std::string config_echo = "{}";

  std::vector<SentenceRecord> raw;
  std::vector<GeneratedRecord> generated;

  std::string to_json() const;         // one structured record
  std::string to_table() const;        // aligned plain text
  std::string raw_jsonl() const;       // one line per generated sentence
  std::string generated_jsonl() const; // {id, persona, sentences[5]} per story
};

// Per-story decoding settings: the sampling seed mixes decode.seed with the story id.
DecodeConfig story_decode_config(const DecodeConfig& decode, const std::string& story_id);

// Generates every test story at its target persona and scores it.
EvalReport corpus_report(const GeneratorModel& model, std::span<const StoryExample> testset, const Vocabulary& vocab,
                         std::span<const TextCnnClassifier> classifiers, const EvalOptions& options,
                         const std::string& config_echo = "{}");

// Per-persona accuracy recomputed from a raw dump.
std::vector<std::optional<double>> accuracy_from_raw(std::span<const SentenceRecord> raw, std::size_t n_personas);

}  // namespace pstory
