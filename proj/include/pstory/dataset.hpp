#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pstory/rng.hpp"
#include "pstory/tensor.hpp"
#include "pstory/vocab.hpp"

namespace pstory {

inline constexpr std::size_t kStoryLength = 5;
inline constexpr std::size_t kNumPersonas = 5;

struct StoryExample {
  std::string id;
  std::array<Tensor, kStoryLength> image_features;
  std::array<Tokens, kStoryLength> sentences;
  std::optional<int> persona;

  friend bool operator==(const StoryExample&, const StoryExample&) = default;
};

struct PersonaUtterance {
  Tokens tokens;
  int cluster = 0;
  std::optional<int> label;

  friend bool operator==(const PersonaUtterance&, const PersonaUtterance&) = default;
};

// One JSON object per line. Malformed records raise DataError naming the
// line number and, when present, the record id.
std::vector<StoryExample> parse_stories(std::string_view text);
std::vector<StoryExample> load_stories(const std::filesystem::path& path);
std::string story_to_json_line(const StoryExample& story);
void save_stories(const std::filesystem::path& path, const std::vector<StoryExample>& stories);

std::vector<PersonaUtterance> parse_utterances(std::string_view text);
std::vector<PersonaUtterance> load_utterances(const std::filesystem::path& path);
void save_utterances(const std::filesystem::path& path, const std::vector<PersonaUtterance>& utts);

// Seeded permutation cut into n_personas near-equal segments; the first
// (N mod n_personas) segments get one extra story. Persona id = segment.
std::vector<StoryExample> assign_personas(std::vector<StoryExample> stories, std::size_t n_personas,
                                          std::uint64_t seed);

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> dev;
  std::vector<std::size_t> test;
};

// Seeded shuffle of [0, n) cut by fractions; test takes the remainder.
SplitIndices split_indices(std::size_t n, double train_fraction, double dev_fraction, std::uint64_t seed);

template <typename T>
std::vector<T> select(const std::vector<T>& items, const std::vector<std::size_t>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(items.at(i));
  return out;
}

}  // namespace pstory
