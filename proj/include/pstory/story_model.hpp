#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pstory/classifier.hpp"
#include "pstory/dataset.hpp"
#include "pstory/layers.hpp"
#include "pstory/params.hpp"
#include "pstory/persona_space.hpp"
#include "pstory/rng.hpp"
#include "pstory/tape.hpp"

namespace pstory {

enum class Variant { Glocal, Mpp, Lepc, Lepd, Sepc, Sepd };

inline constexpr std::array<Variant, 6> kAllVariants{Variant::Glocal, Variant::Mpp,  Variant::Lepc,
                                                     Variant::Lepd,   Variant::Sepc, Variant::Sepd};

std::string_view variant_name(Variant v);
Variant parse_variant(std::string_view name);  // ConfigError on unknown names
inline bool is_persona_variant(Variant v) { return v != Variant::Glocal; }

struct ModelConfig {
  std::size_t image_dim = 64;
  std::size_t projection_dim = 32;   // local image feature
  std::size_t context_hidden = 16;   // per direction; global feature is twice this
  std::size_t context_layers = 1;
  std::size_t decoder_hidden = 64;
  std::size_t embed_dim = 32;
  std::size_t persona_dim = 32;      // sentence-encoder width of persona/story vectors
  std::size_t n_personas = kNumPersonas;
  // SEPC maps persona and story vectors into the glocal width when the two differ.
  bool sepc_projection = true;

  std::size_t glocal_dim() const { return projection_dim + 2 * context_hidden; }
  static ModelConfig full_scale(Variant v);
};

struct TrainConfig {
  double alpha = 0.5;
  double learning_rate = 1e-3;
  double weight_decay = 1e-5;
  std::size_t epochs = 30;
  std::size_t batch_size = 4;
  double dropout = 0.5;
  std::size_t max_sentence_len = 24;  // gold encoding length including BOS/EOS
  std::uint64_t seed = 1;
  // Stop once an epoch's mean generation loss falls below this value.
  std::optional<double> stop_below;
};

void validate(const ModelConfig& cfg, Variant v);
void validate(const TrainConfig& cfg);

struct DecodeConfig {
  enum class Mode { Greedy, Sample };
  Mode mode = Mode::Greedy;
  double temperature = 1.0;
  std::size_t max_len = 20;  // tokens per sentence, EOS excluded
  std::uint64_t seed = 1;
};

void validate(const DecodeConfig& cfg);

class GeneratorModel {
 public:
  GeneratorModel(Variant variant, ModelConfig cfg, std::size_t vocab_size, std::vector<PersonaRepr> personas,
                 StoryStyleRepr style, std::uint64_t seed);

  Variant variant() const { return variant_; }
  const ModelConfig& config() const { return cfg_; }
  std::size_t vocab_size() const { return vocab_size_; }
  std::uint64_t seed() const { return seed_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const std::vector<PersonaRepr>& personas() const { return personas_; }
  const StoryStyleRepr& style() const { return style_; }

  std::size_t context_dim() const;
  std::size_t word_input_dim() const;
  bool has_persona_projection() const { return persona_proj_.has_value(); }

  // Graph pieces. dropout_rng == nullptr means evaluation mode.
  std::vector<Var> encode_images(Binding& bind, std::span<const Tensor> features, Rng* dropout_rng,
                                 double dropout) const;
  Var condition_context(Binding& bind, Var z, const PersonaRepr& persona_repr, const StoryStyleRepr& style,
                        int persona) const;
  Var condition_context(Binding& bind, Var z, int persona) const;
  Var word_input(Binding& bind, TokenId prev, int persona) const;
  LstmState decoder_step(Binding& bind, Var word_in, Var context, LstmState state) const;
  Var output_logits(Binding& bind, Var h) const;
  LstmState decoder_start(Binding& bind) const;

 private:
  void check_persona(int persona) const;

  Variant variant_;
  ModelConfig cfg_;
  std::size_t vocab_size_;
  std::uint64_t seed_;
  std::vector<PersonaRepr> personas_;
  StoryStyleRepr style_;
  ParamStore params_;
  LinearParams image_proj_;
  std::vector<BiLstmParams> context_;
  ParamId embedding_;
  std::optional<ParamId> persona_proj_;
  LstmParams decoder_;
  LinearParams output_;
};

struct SentenceDecode {
  std::vector<Var> token_losses;   // one CE per non-PAD target, EOS included
  std::vector<Var> distributions;  // softmax at steps predicting content tokens
  Var loss;                        // mean of token_losses
};

// Teacher-forced decoding of one gold sentence [BOS, ..., EOS, PAD...].
SentenceDecode decode_sentence_train(Binding& bind, const GeneratorModel& model, Var context,
                                     std::span<const TokenId> gold, int persona);

double multitask_loss(double generation_loss, std::span<const double> classifier_losses, double alpha);
Var multitask_loss(Tape& tape, Var generation_loss, std::span<const Var> classifier_losses, double alpha);

struct TrainingStory {
  std::string id;
  std::array<Tensor, kStoryLength> features;
  std::array<std::vector<TokenId>, kStoryLength> gold;
  int persona = 0;
};

std::vector<TrainingStory> prepare_stories(std::span<const StoryExample> stories, const Vocabulary& vocab,
                                           std::size_t max_len);

struct StoryLoss {
  Var total;
  Var generation;
  std::vector<Var> classifier;  // empty for GLOCAL
};

// Builds the full per-story objective on bind's tape. Classifiers are bound
// frozen on the same tape.
StoryLoss story_loss(Binding& bind, const GeneratorModel& model, const TrainingStory& story,
                     std::span<const TextCnnClassifier> classifiers, double alpha, Rng* dropout_rng = nullptr,
                     double dropout = 0.0);

struct GeneratorTrainResult {
  GeneratorModel model;
  std::vector<double> epoch_total_loss;       // mean over stories, training mode
  std::vector<double> epoch_generation_loss;
};

GeneratorTrainResult train_generator(std::span<const TrainingStory> stories,
                                     std::span<const TextCnnClassifier> classifiers,
                                     std::vector<PersonaRepr> personas, StoryStyleRepr style,
                                     const TrainConfig& train_cfg, const ModelConfig& model_cfg, Variant variant,
                                     std::size_t vocab_size);

using GeneratedStory = std::array<std::vector<TokenId>, kStoryLength>;

// Sentences exclude BOS and EOS; PAD and BOS are never emitted.
GeneratedStory generate_story(const GeneratorModel& model, std::span<const Tensor> features, int persona,
                              const DecodeConfig& cfg);

// Parameters under "gen/", plus "persona_repr/<id>" and "story_style_repr";
// variant and configuration live in the metadata block.
Checkpoint model_to_checkpoint(const GeneratorModel& model, const std::string& config_echo = "{}");
GeneratorModel model_from_checkpoint(const Checkpoint& ckpt, std::optional<Variant> expected = std::nullopt);
void save_model(const std::filesystem::path& path, const GeneratorModel& model, const std::string& config_echo = "{}");
GeneratorModel load_model(const std::filesystem::path& path, std::optional<Variant> expected = std::nullopt);

}  // namespace pstory
