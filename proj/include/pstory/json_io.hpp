#pragma once

#include "json.hpp"
#include "pstory/classifier.hpp"
#include "pstory/story_model.hpp"
#include "pstory/synth.hpp"

namespace pstory {

// Reading starts from the object's current values (the defaults when used via
// get<T>()), overrides the keys present and rejects unknown keys with ConfigError.
void to_json(nlohmann::json& j, const SynthConfig& c);
void from_json(const nlohmann::json& j, SynthConfig& c);
void to_json(nlohmann::json& j, const ClassifierConfig& c);
void from_json(const nlohmann::json& j, ClassifierConfig& c);
void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const DecodeConfig& c);
void from_json(const nlohmann::json& j, DecodeConfig& c);

void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<std::string_view> known,
                         std::string_view section);

}  // namespace pstory
