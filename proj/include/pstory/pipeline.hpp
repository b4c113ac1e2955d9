#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "pstory/classifier.hpp"
#include "pstory/evaluation.hpp"
#include "pstory/story_model.hpp"
#include "pstory/synth.hpp"

namespace pstory {

// Everything a pipeline run depends on. Section seeds not given explicitly
// inherit the top-level seed.
struct PipelineConfig {
  std::uint64_t seed = 1;
  std::string out_dir = "pstory-out";
  Variant variant = Variant::Glocal;
  std::optional<std::string> stories_path;     // default: <out>/stories.jsonl
  std::optional<std::string> utterances_path;  // default: <out>/utterances.jsonl

  SynthConfig synth;
  std::size_t kmeans_k = 8;
  std::size_t kmeans_max_iter = 100;
  std::size_t encoder_buckets = 4096;
  double train_fraction = 0.8;
  double dev_fraction = 0.1;
  std::size_t vocab_min_count = 1;
  ClassifierConfig classifier;
  ModelConfig model;
  TrainConfig train;
  DecodeConfig decode;
  double rouge_beta = 1.2;
  RougeGranularity rouge_granularity = RougeGranularity::Story;
};

struct ConfigOverrides {
  std::optional<std::uint64_t> seed;  // also replaces every section seed
  std::optional<std::string> out_dir;
  std::optional<Variant> variant;
};

// Parses a JSON config (unknown keys raise ConfigError) and applies overrides.
PipelineConfig parse_pipeline_config(std::string_view json_text, const ConfigOverrides& overrides = {});
PipelineConfig load_pipeline_config(const std::optional<std::filesystem::path>& path,
                                    const ConfigOverrides& overrides = {});
// Fully resolved JSON echo; parsing it back yields the same configuration.
std::string pipeline_config_json(const PipelineConfig& cfg);

// Output layout under cfg.out_dir.
struct Artifacts {
  std::filesystem::path dir;

  std::filesystem::path stories() const { return dir / "stories.jsonl"; }
  std::filesystem::path utterances() const { return dir / "utterances.jsonl"; }
  std::filesystem::path prepared_stories() const { return dir / "stories_prepared.jsonl"; }
  std::filesystem::path splits() const { return dir / "splits.json"; }
  std::filesystem::path vocab() const { return dir / "vocab.json"; }
  std::filesystem::path personas() const { return dir / "personas.json"; }
  std::filesystem::path persona_space() const { return dir / "persona_space.ckpt"; }
  std::filesystem::path persona_utterances() const { return dir / "persona_utterances.jsonl"; }
  std::filesystem::path classifiers() const { return dir / "classifiers.ckpt"; }
  std::filesystem::path classifier_report() const { return dir / "classifiers.report.json"; }
  std::filesystem::path generator(Variant v) const;
  std::filesystem::path history(Variant v) const;
  std::filesystem::path generated(Variant v) const;
  std::filesystem::path report_json(Variant v) const;
  std::filesystem::path report_table(Variant v) const;
  std::filesystem::path report_raw(Variant v) const;
  std::filesystem::path config_echo(const std::string& stage) const;
};

// Each stage reads earlier stages' files from cfg.out_dir, writes its own
// outputs atomically plus "<stage>.config.json", and returns a summary.
// Upstream files that are missing are produced first by running the earlier
// stages with the same config.
std::string stage_synth_data(const PipelineConfig& cfg);
std::string stage_cluster_personas(const PipelineConfig& cfg);
std::string stage_train_classifiers(const PipelineConfig& cfg);
std::string stage_train_generator(const PipelineConfig& cfg);
std::string stage_generate(const PipelineConfig& cfg, std::optional<int> persona);
std::string stage_evaluate(const PipelineConfig& cfg);

}  // namespace pstory
