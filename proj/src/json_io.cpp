#include "pstory/json_io.hpp"

#include <algorithm>

#include "pstory/error.hpp"

namespace pstory {

using nlohmann::json;

void reject_unknown_keys(const json& j, std::initializer_list<std::string_view> known, std::string_view section) {
  if (!j.is_object()) throw ConfigError("section '" + std::string(section) + "' must be an object");
  for (const auto& item : j.items()) {
    if (std::find(known.begin(), known.end(), item.key()) == known.end()) {
      throw ConfigError("unknown key '" + item.key() + "' in section '" + std::string(section) + "'");
    }
  }
}

namespace {

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) out = it->get<T>();
}

}  // namespace

void to_json(json& j, const SynthConfig& c) {
  j = {{"n_personas", c.n_personas},
       {"content_vocab", c.content_vocab},
       {"markers_per_persona", c.markers_per_persona},
       {"stories_per_persona", c.stories_per_persona},
       {"min_words", c.min_words},
       {"max_words", c.max_words},
       {"image_dim", c.image_dim},
       {"image_noise", c.image_noise},
       {"personalities_per_persona", c.personalities_per_persona},
       {"distractor_personalities", c.distractor_personalities},
       {"utterances_per_personality", c.utterances_per_personality},
       {"seed", c.seed},
       {"lexicons", c.lexicons}};
}

void from_json(const json& j, SynthConfig& c) {
  reject_unknown_keys(j,
                      {"n_personas", "content_vocab", "markers_per_persona", "stories_per_persona", "min_words",
                       "max_words", "image_dim", "image_noise", "personalities_per_persona",
                       "distractor_personalities", "utterances_per_personality", "seed", "lexicons"},
                      "synth");
  read(j, "n_personas", c.n_personas);
  read(j, "content_vocab", c.content_vocab);
  read(j, "markers_per_persona", c.markers_per_persona);
  read(j, "stories_per_persona", c.stories_per_persona);
  read(j, "min_words", c.min_words);
  read(j, "max_words", c.max_words);
  read(j, "image_dim", c.image_dim);
  read(j, "image_noise", c.image_noise);
  read(j, "personalities_per_persona", c.personalities_per_persona);
  read(j, "distractor_personalities", c.distractor_personalities);
  read(j, "utterances_per_personality", c.utterances_per_personality);
  read(j, "seed", c.seed);
  read(j, "lexicons", c.lexicons);
}

void to_json(json& j, const ClassifierConfig& c) {
  j = {{"embed_dim", c.embed_dim},         {"widths", c.widths},     {"channels", c.channels},
       {"dropout", c.dropout},             {"learning_rate", c.learning_rate},
       {"weight_decay", c.weight_decay},   {"epochs", c.epochs},     {"batch_size", c.batch_size},
       {"seed", c.seed}};
}

void from_json(const json& j, ClassifierConfig& c) {
  reject_unknown_keys(j,
                      {"embed_dim", "widths", "channels", "dropout", "learning_rate", "weight_decay", "epochs",
                       "batch_size", "seed"},
                      "classifier");
  read(j, "embed_dim", c.embed_dim);
  read(j, "widths", c.widths);
  read(j, "channels", c.channels);
  read(j, "dropout", c.dropout);
  read(j, "learning_rate", c.learning_rate);
  read(j, "weight_decay", c.weight_decay);
  read(j, "epochs", c.epochs);
  read(j, "batch_size", c.batch_size);
  read(j, "seed", c.seed);
}

void to_json(json& j, const ModelConfig& c) {
  j = {{"image_dim", c.image_dim},           {"projection_dim", c.projection_dim},
       {"context_hidden", c.context_hidden}, {"context_layers", c.context_layers},
       {"decoder_hidden", c.decoder_hidden}, {"embed_dim", c.embed_dim},
       {"persona_dim", c.persona_dim},       {"n_personas", c.n_personas},
       {"sepc_projection", c.sepc_projection}};
}

void from_json(const json& j, ModelConfig& c) {
  reject_unknown_keys(j,
                      {"image_dim", "projection_dim", "context_hidden", "context_layers", "decoder_hidden",
                       "embed_dim", "persona_dim", "n_personas", "sepc_projection"},
                      "model");
  read(j, "image_dim", c.image_dim);
  read(j, "projection_dim", c.projection_dim);
  read(j, "context_hidden", c.context_hidden);
  read(j, "context_layers", c.context_layers);
  read(j, "decoder_hidden", c.decoder_hidden);
  read(j, "embed_dim", c.embed_dim);
  read(j, "persona_dim", c.persona_dim);
  read(j, "n_personas", c.n_personas);
  read(j, "sepc_projection", c.sepc_projection);
}

void to_json(json& j, const TrainConfig& c) {
  j = {{"alpha", c.alpha},
       {"learning_rate", c.learning_rate},
       {"weight_decay", c.weight_decay},
       {"epochs", c.epochs},
       {"batch_size", c.batch_size},
       {"dropout", c.dropout},
       {"max_sentence_len", c.max_sentence_len},
       {"seed", c.seed},
       {"stop_below", c.stop_below ? json(*c.stop_below) : json(nullptr)}};
}

void from_json(const json& j, TrainConfig& c) {
  reject_unknown_keys(j,
                      {"alpha", "learning_rate", "weight_decay", "epochs", "batch_size", "dropout",
                       "max_sentence_len", "seed", "stop_below"},
                      "train");
  read(j, "alpha", c.alpha);
  read(j, "learning_rate", c.learning_rate);
  read(j, "weight_decay", c.weight_decay);
  read(j, "epochs", c.epochs);
  read(j, "batch_size", c.batch_size);
  read(j, "dropout", c.dropout);
  read(j, "max_sentence_len", c.max_sentence_len);
  read(j, "seed", c.seed);
  if (auto it = j.find("stop_below"); it != j.end()) {
    c.stop_below = it->is_null() ? std::nullopt : std::optional<double>(it->get<double>());
  }
}

void to_json(json& j, const DecodeConfig& c) {
  j = {{"mode", c.mode == DecodeConfig::Mode::Greedy ? "greedy" : "sample"},
       {"temperature", c.temperature},
       {"max_len", c.max_len},
       {"seed", c.seed}};
}

void from_json(const json& j, DecodeConfig& c) {
  reject_unknown_keys(j, {"mode", "temperature", "max_len", "seed"}, "decode");
  if (auto it = j.find("mode"); it != j.end()) {
    const auto mode = it->get<std::string>();
    if (mode == "greedy") c.mode = DecodeConfig::Mode::Greedy;
    else if (mode == "sample") c.mode = DecodeConfig::Mode::Sample;
    else throw ConfigError("decode.mode must be 'greedy' or 'sample', got '" + mode + "'");
  }
  read(j, "temperature", c.temperature);
  read(j, "max_len", c.max_len);
  read(j, "seed", c.seed);
}

}  // namespace pstory
