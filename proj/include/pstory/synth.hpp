#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pstory/dataset.hpp"

namespace pstory {

// Desk-scale stand-in for the story and persona-dialog corpora.
//
// Every persona owns a disjoint marker lexicon. Story sentences for a
// persona-p story open with one of p's markers, followed by content words
// and a period; the matching image feature is a fixed random projection of
// the sentence's content-word bag plus Gaussian noise, so images carry the
// content but never the persona.
//
// Utterances are labelled by fine-grained personality id (the `cluster`
// field). Personality ids [p * personalities_per_persona, ...) belong to
// persona p and use p's markers; the trailing distractor personalities use
// markers drawn from every lexicon.
struct SynthConfig {
  std::size_t n_personas = kNumPersonas;
  std::size_t content_vocab = 40;
  std::size_t markers_per_persona = 3;
  std::size_t stories_per_persona = 40;
  std::size_t min_words = 2;  // content words per sentence
  std::size_t max_words = 4;
  std::size_t image_dim = 64;
  double image_noise = 0.05;
  std::size_t personalities_per_persona = 1;
  std::size_t distractor_personalities = 6;
  std::size_t utterances_per_personality = 240;
  std::uint64_t seed = 7;
  // Optional explicit lexicons (one per persona); generated when empty.
  std::vector<std::vector<std::string>> lexicons;
};

struct SynthCorpus {
  std::vector<StoryExample> stories;
  std::vector<PersonaUtterance> utterances;
  std::vector<std::vector<std::string>> lexicons;
  std::vector<std::string> content_words;
};

void validate(const SynthConfig& cfg);
std::vector<std::vector<std::string>> marker_lexicons(const SynthConfig& cfg);
SynthCorpus synthesize_corpus(const SynthConfig& cfg);

}  // namespace pstory
